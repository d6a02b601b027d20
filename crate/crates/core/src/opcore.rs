//! Model operator pairs on a finite lattice window and their spectral
//! calculus.
//!
//! Sites run over `-N..=N`; matrix row `i` corresponds to site `i - N`.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::pcfunc::PiecewiseFn;
use crate::tolerances;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Lattice1d,
    Jacobi,
    RandomTraceclass,
}

impl ModelKind {
    pub const NAMES: [&'static str; 3] = ["lattice1d", "jacobi", "random_traceclass"];
}

fn default_decay_rate() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub truncation_half_width: usize,
    /// `(site, value)` pairs.
    #[serde(default)]
    pub potential: Vec<(i64, f64)>,
    #[serde(default = "default_decay_rate")]
    pub decay_rate: f64,
    #[serde(default)]
    pub seed: u64,
}

impl ModelSpec {
    pub fn lattice(half_width: usize, potential: &[(i64, f64)]) -> Self {
        Self {
            kind: ModelKind::Lattice1d,
            truncation_half_width: half_width,
            potential: potential.to_vec(),
            decay_rate: default_decay_rate(),
            seed: 0,
        }
    }

    /// Single-site potential of strength `v` at the origin.
    pub fn delta(half_width: usize, v: f64) -> Self {
        Self::lattice(half_width, &[(0, v)])
    }

    pub fn with_half_width(&self, half_width: usize) -> Self {
        Self {
            truncation_half_width: half_width,
            ..self.clone()
        }
    }

    /// Parses a JSON document, reporting an unknown `kind` as such rather
    /// than as a generic parse failure.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        if let Some(kind) = value.get("kind").and_then(|k| k.as_str()) {
            if !ModelKind::NAMES.contains(&kind) {
                return Err(Error::UnsupportedKind(kind.to_string()));
            }
        }
        let spec: Self = serde_json::from_value(value)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model spec serializes")
    }

    pub fn dim(&self) -> usize {
        2 * self.truncation_half_width + 1
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.truncation_half_width as i64;
        if n < 1 {
            return Err(Error::InvalidModel(
                "truncation_half_width must be >= 1".into(),
            ));
        }
        if !(self.decay_rate.is_finite() && self.decay_rate > 0.0) {
            return Err(Error::InvalidModel(format!(
                "decay_rate must be positive, got {}",
                self.decay_rate
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        for &(site, value) in &self.potential {
            if site < -n || site > n {
                return Err(Error::InvalidModel(format!(
                    "potential site {site} outside [-{n}, {n}]"
                )));
            }
            if !value.is_finite() {
                return Err(Error::InvalidModel(format!(
                    "non-finite potential at site {site}"
                )));
            }
            if !seen.insert(site) {
                return Err(Error::InvalidModel(format!("site {site} listed twice")));
            }
        }
        if self.kind == ModelKind::RandomTraceclass && !self.potential.is_empty() {
            return Err(Error::InvalidModel(
                "random_traceclass generates its own potential; leave `potential` empty".into(),
            ));
        }
        Ok(())
    }
}

/// Symmetric matrix stored either by its three diagonals or densely.
#[derive(Debug, Clone, PartialEq)]
pub enum SymmetricOperator {
    Tridiagonal { diag: Vec<f64>, off: Vec<f64> },
    Dense(Array2<f64>),
}

impl SymmetricOperator {
    pub fn dim(&self) -> usize {
        match self {
            Self::Tridiagonal { diag, .. } => diag.len(),
            Self::Dense(m) => m.nrows(),
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        match self {
            Self::Tridiagonal { diag, off } => {
                let n = diag.len();
                let mut m = Array2::zeros((n, n));
                for i in 0..n {
                    m[[i, i]] = diag[i];
                }
                for (i, &e) in off.iter().enumerate() {
                    m[[i, i + 1]] = e;
                    m[[i + 1, i]] = e;
                }
                m
            }
            Self::Dense(m) => m.clone(),
        }
    }

    /// `M X` for a block of column vectors.
    pub fn apply(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        match self {
            Self::Tridiagonal { diag, off } => {
                let n = diag.len();
                let mut y = Array2::zeros(x.raw_dim());
                for i in 0..n {
                    let mut row = y.row_mut(i);
                    row.scaled_add(diag[i], &x.row(i));
                    if i > 0 {
                        row.scaled_add(off[i - 1], &x.row(i - 1));
                    }
                    if i + 1 < n {
                        row.scaled_add(off[i], &x.row(i + 1));
                    }
                }
                y
            }
            Self::Dense(m) => m.dot(x),
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match self {
            Self::Tridiagonal { diag, off } => match i.abs_diff(j) {
                0 => diag[i],
                1 => off[i.min(j)],
                _ => 0.0,
            },
            Self::Dense(m) => m[[i, j]],
        }
    }

    fn plus(&self, other: &Self) -> Self {
        match (self, other) {
            (Self::Tridiagonal { diag: d1, off: o1 }, Self::Tridiagonal { diag: d2, off: o2 }) => {
                Self::Tridiagonal {
                    diag: d1.iter().zip(d2).map(|(a, b)| a + b).collect(),
                    off: o1.iter().zip(o2).map(|(a, b)| a + b).collect(),
                }
            }
            _ => Self::Dense(self.to_dense() + other.to_dense()),
        }
    }
}

/// `H0`, `V = G^T J G` and `H = H0 + V` on a finite window.
#[derive(Debug, Clone)]
pub struct OperatorPair {
    pub h0: SymmetricOperator,
    pub v: SymmetricOperator,
    pub h: SymmetricOperator,
    /// `k x n`.
    pub g: Array2<f64>,
    /// `k x k`, `J^2 = I`.
    pub j: Array2<f64>,
    pub spec: ModelSpec,
    /// Matrix row and potential value for each row of `G` when `V` is
    /// diagonal; `None` for dense potentials.
    pub support: Option<Vec<(usize, f64)>>,
    pub factorization_defect: f64,
}

impl OperatorPair {
    pub fn n(&self) -> usize {
        self.h0.dim()
    }

    pub fn k(&self) -> usize {
        self.g.nrows()
    }

    pub fn half_width(&self) -> usize {
        self.spec.truncation_half_width
    }

    /// Lattice site of matrix row `i`.
    pub fn site(&self, row: usize) -> i64 {
        row as i64 - self.half_width() as i64
    }

    /// Diagonal of `J`.
    pub fn signs(&self) -> Vec<f64> {
        self.j.diag().to_vec()
    }
}

fn hopping(n: usize) -> SymmetricOperator {
    SymmetricOperator::Tridiagonal {
        diag: vec![0.0; n],
        off: vec![1.0; n - 1],
    }
}

fn sign(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Haar-distributed orthogonal matrix from a seeded Gaussian draw.
fn haar_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> Result<Array2<f64>> {
    let a = Array2::from_shape_fn((n, n), |_| rng.sample::<f64, _>(StandardNormal));
    let (mut q, r) = linalg::qr_with_diag(&a.view())?;
    for (j, mut col) in q.axis_iter_mut(Axis(1)).enumerate() {
        if r[j] < 0.0 {
            col.mapv_inplace(|x| -x);
        }
    }
    Ok(q)
}

pub fn build_model(spec: &ModelSpec) -> Result<OperatorPair> {
    spec.validate()?;
    let n = spec.dim();
    let half = spec.truncation_half_width as i64;

    let h0 = match spec.kind {
        ModelKind::Lattice1d | ModelKind::RandomTraceclass => hopping(n),
        ModelKind::Jacobi => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            SymmetricOperator::Tridiagonal {
                diag: vec![0.0; n],
                off: (0..n - 1)
                    .map(|_| 1.0 + 0.25 * rng.gen_range(-1.0..1.0))
                    .collect(),
            }
        }
    };

    let (v, g, j, support) = match spec.kind {
        ModelKind::Lattice1d | ModelKind::Jacobi => {
            let mut diag = vec![0.0; n];
            let mut sites: Vec<(usize, f64)> = spec
                .potential
                .iter()
                .filter(|&&(_, value)| value != 0.0)
                .map(|&(site, value)| ((site + half) as usize, value))
                .collect();
            sites.sort_by_key(|&(row, _)| row);
            let k = sites.len();
            let mut g = Array2::zeros((k, n));
            let mut j = Array2::zeros((k, k));
            for (a, &(row, value)) in sites.iter().enumerate() {
                diag[row] = value;
                g[[a, row]] = value.abs().sqrt();
                j[[a, a]] = sign(value);
            }
            let v = SymmetricOperator::Tridiagonal {
                diag,
                off: vec![0.0; n - 1],
            };
            (v, g, j, Some(sites))
        }
        ModelKind::RandomTraceclass => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let q = haar_orthogonal(n, &mut rng)?;
            let c: Vec<f64> = (1..=n)
                .map(|i| {
                    let mag = (i as f64).powf(-spec.decay_rate);
                    if i % 2 == 1 {
                        mag
                    } else {
                        -mag
                    }
                })
                .collect();
            let c_arr = Array1::from(c.clone());
            let v = (&q * &c_arr).dot(&q.t());
            let roots = Array1::from_iter(c.iter().map(|x| x.abs().sqrt()));
            let g = &q.t() * &roots.view().insert_axis(Axis(1));
            let j = Array2::from_diag(&Array1::from_iter(c.iter().map(|&x| sign(x))));
            // Exact symmetry regardless of gemm rounding order.
            let v = (&v + &v.t()) * 0.5;
            (SymmetricOperator::Dense(v), g, j, None)
        }
    };

    let factorization_defect = match (&support, &v) {
        (Some(sites), SymmetricOperator::Tridiagonal { diag, .. }) => sites
            .iter()
            .enumerate()
            .map(|(a, &(row, _))| (g[[a, row]] * j[[a, a]] * g[[a, row]] - diag[row]).abs())
            .fold(0.0, f64::max),
        _ => {
            let recon = g.t().dot(&j.dot(&g));
            linalg::op_norm(&(recon - v.to_dense()).view())?
        }
    };
    if factorization_defect > tolerances::FACTORIZATION {
        return Err(Error::IdentityViolated {
            name: "factorization G^T J G = V",
            residual: factorization_defect,
            tol: tolerances::FACTORIZATION,
        });
    }

    let h = h0.plus(&v);
    Ok(OperatorPair {
        h0,
        v,
        h,
        g,
        j,
        spec: spec.clone(),
        support,
        factorization_defect,
    })
}

/// Eigenvalues ascending, eigenvectors as orthonormal columns.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Array2<f64>,
    /// Largest `||M v_j - lambda_j v_j||`.
    pub residual_bound: f64,
}

pub fn eigendecompose(m: &SymmetricOperator) -> Result<SpectralDecomposition> {
    let (eigenvalues, vectors) = match m {
        SymmetricOperator::Tridiagonal { diag, off } => linalg::eig_tridiagonal(diag, off, true)?,
        SymmetricOperator::Dense(a) => {
            let defect = linalg::symmetry_defect(&a.view());
            if defect > tolerances::INPUT_SYMMETRY {
                return Err(Error::NotSymmetric {
                    defect,
                    tol: tolerances::INPUT_SYMMETRY,
                });
            }
            linalg::eig_symmetric(a.clone(), true)?
        }
    };
    let eigenvectors = vectors.expect("vectors requested");
    let mut image = m.apply(&eigenvectors.view());
    image -= &(&eigenvectors * &Array1::from(eigenvalues.clone()));
    let residual_bound = image
        .axis_iter(Axis(1))
        .map(|c| c.dot(&c).sqrt())
        .fold(0.0, f64::max);
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
        residual_bound,
    })
}

pub fn eigendecompose_matrix(m: &ArrayView2<f64>) -> Result<SpectralDecomposition> {
    eigendecompose(&SymmetricOperator::Dense(m.to_owned()))
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Number of eigenvalues strictly below `lambda`.
    pub fn count_below(&self, lambda: f64) -> usize {
        self.eigenvalues.partition_point(|&x| x < lambda)
    }

    /// Column range of the eigenvalues in the open interval `(lo, hi)`.
    pub fn open_window(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let start = self.eigenvalues.partition_point(|&x| x <= lo);
        let end = self.eigenvalues.partition_point(|&x| x < hi);
        start..end.max(start)
    }

    /// Largest `|V^T V - I|` entry.
    pub fn orthonormality_defect(&self) -> f64 {
        let gram = self.eigenvectors.t().dot(&self.eigenvectors);
        let n = gram.nrows();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[[i, j]] - target).abs());
            }
        }
        worst
    }
}

/// `E(-inf, lambda)`: the sum of `v_j v_j^T` over `lambda_j < lambda`.
pub fn spectral_projection(dec: &SpectralDecomposition, lambda: f64) -> Array2<f64> {
    let m = dec.count_below(lambda);
    let block = linalg::column_block(&dec.eigenvectors, 0..m);
    let mut out = Array2::zeros((dec.dim(), dec.dim()));
    ndarray::linalg::general_mat_mul(1.0, &block, &block.t(), 0.0, &mut out);
    out
}

/// `phi(M)`, real when the symbol is real.
#[derive(Debug, Clone)]
pub enum FunctionMatrix {
    Real(Array2<f64>),
    Complex(Array2<Complex64>),
}

impl FunctionMatrix {
    pub fn to_complex(&self) -> Array2<Complex64> {
        match self {
            Self::Real(m) => linalg::to_complex(&m.view()),
            Self::Complex(m) => m.clone(),
        }
    }
}

/// Values of `phi` at the eigenvalues.
pub fn symbol_weights(dec: &SpectralDecomposition, phi: &PiecewiseFn) -> Vec<Complex64> {
    dec.eigenvalues.iter().map(|&x| phi.eval(x)).collect()
}

/// `phi(M) = sum_j phi(lambda_j) v_j v_j^T`. A jump point that coincides with
/// an eigenvalue takes the right limit, so the indicator of `(-inf, lambda)`
/// reproduces `spectral_projection` exactly.
pub fn apply_function(dec: &SpectralDecomposition, phi: &PiecewiseFn) -> FunctionMatrix {
    let w = symbol_weights(dec, phi);
    let re: Vec<f64> = w.iter().map(|z| z.re).collect();
    let real_part = linalg::weighted_gram(&dec.eigenvectors.view(), &re);
    if phi.is_real() {
        return FunctionMatrix::Real(real_part);
    }
    let im: Vec<f64> = w.iter().map(|z| z.im).collect();
    let imag_part = linalg::weighted_gram(&dec.eigenvectors.view(), &im);
    FunctionMatrix::Complex(
        ndarray::Zip::from(&real_part)
            .and(&imag_part)
            .map_collect(|&a, &b| Complex64::new(a, b)),
    )
}

/// Decompositions of both `H0` and `H`.
#[derive(Debug, Clone)]
pub struct PairSpectra {
    pub h0: SpectralDecomposition,
    pub h: SpectralDecomposition,
}

impl PairSpectra {
    pub fn compute(pair: &OperatorPair) -> Result<Self> {
        let (h0, h) = rayon::join(|| eigendecompose(&pair.h0), || eigendecompose(&pair.h));
        Ok(Self { h0: h0?, h: h? })
    }
}

/// `f(H) - f(H0)` for a real symbol, kept in factored form
/// `X diag(wx) X^T - Y diag(wy) Y^T` over the eigenvectors with nonzero
/// weight. The weights are `f - c` for the constant `c` (zero or the most
/// frequent value) that leaves the fewest columns, since `c X X^T = c I =
/// c Y Y^T`.
#[derive(Debug, Clone)]
pub struct SymbolDifference {
    n: usize,
    x: Array2<f64>,
    wx: Array1<f64>,
    y: Array2<f64>,
    wy: Array1<f64>,
}

impl SymbolDifference {
    pub fn new(spectra: &PairSpectra, f: impl Fn(f64) -> f64) -> Self {
        let fx: Vec<f64> = spectra.h.eigenvalues.iter().map(|&x| f(x)).collect();
        let fy: Vec<f64> = spectra.h0.eigenvalues.iter().map(|&x| f(x)).collect();
        let mut counts = std::collections::HashMap::new();
        for v in fx.iter().chain(&fy) {
            *counts.entry(v.to_bits()).or_insert(0usize) += 1;
        }
        let zero = counts.get(&0f64.to_bits()).copied().unwrap_or(0);
        let (mode, hits) = counts
            .iter()
            .map(|(&bits, &c)| (bits, c))
            .max_by_key(|&(bits, c)| (c, std::cmp::Reverse(bits)))
            .unwrap_or((0, 0));
        let shift = if hits > zero {
            f64::from_bits(mode)
        } else {
            0.0
        };
        let pick = |dec: &SpectralDecomposition, vals: &[f64]| {
            let idx: Vec<usize> = (0..vals.len())
                .filter(|&j| vals[j] - shift != 0.0)
                .collect();
            let cols = dec.eigenvectors.select(Axis(1), &idx);
            let w = Array1::from_iter(idx.iter().map(|&j| vals[j] - shift));
            (cols, w)
        };
        let (x, wx) = pick(&spectra.h, &fx);
        let (y, wy) = pick(&spectra.h0, &fy);
        Self {
            n: spectra.h.dim(),
            x,
            wx,
            y,
            wy,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of factor columns, an upper bound on the rank.
    pub fn columns(&self) -> usize {
        self.wx.len() + self.wy.len()
    }

    pub fn apply(&self, v: &Array2<f64>) -> Array2<f64> {
        let cx = self.x.t().dot(v) * self.wx.view().insert_axis(Axis(1));
        let cy = self.y.t().dot(v) * self.wy.view().insert_axis(Axis(1));
        self.x.dot(&cx) - self.y.dot(&cy)
    }

    pub fn dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n, self.n));
        if !self.wx.is_empty() {
            let scaled = &self.x * &self.wx;
            ndarray::linalg::general_mat_mul(1.0, &scaled, &self.x.t(), 0.0, &mut out);
        }
        if !self.wy.is_empty() {
            let scaled = &self.y * &self.wy;
            ndarray::linalg::general_mat_mul(-1.0, &scaled, &self.y.t(), 1.0, &mut out);
        }
        out
    }

    /// All `n` eigenvalues, ascending. Differences supported on at most `n/2`
    /// columns are diagonalized on the span of their factors.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let m = self.columns();
        if m == 0 {
            return Ok(vec![0.0; self.n]);
        }
        let mut eig = if 2 * m <= self.n {
            let basis = ndarray::concatenate(Axis(1), &[self.x.view(), self.y.view()])
                .expect("factor blocks share the row count");
            let q = linalg::orthonormal_columns(&basis.view())?;
            let cx = q.t().dot(&self.x);
            let cy = q.t().dot(&self.y);
            let small = (&cx * &self.wx).dot(&cx.t()) - (&cy * &self.wy).dot(&cy.t());
            let small = (&small + &small.t()) * 0.5;
            let mut e = linalg::eig_symmetric(small, false)?.0;
            e.resize(self.n, 0.0);
            e
        } else {
            linalg::eig_symmetric(self.dense(), false)?.0
        };
        eig.sort_by(f64::total_cmp);
        Ok(eig)
    }
}

/// Dimensions of `Ker H0` and `Ker H` and the distance between the two
/// kernel projections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelProbe {
    pub dim_h0: usize,
    pub dim_h: usize,
    pub projection_gap: f64,
}

pub fn kernel_probe(spectra: &PairSpectra, rank_tol: f64) -> Result<KernelProbe> {
    let kernel = |dec: &SpectralDecomposition| {
        let r = dec.open_window(-rank_tol, rank_tol);
        let block = linalg::column_block(&dec.eigenvectors, r.clone()).to_owned();
        (r.len(), block)
    };
    let (d0, k0) = kernel(&spectra.h0);
    let (d1, k1) = kernel(&spectra.h);
    let gap = if d0 == 0 && d1 == 0 {
        0.0
    } else {
        let p0 = k0.dot(&k0.t());
        let p1 = k1.dot(&k1.t());
        linalg::op_norm(&(p0 - p1).view())?
    };
    Ok(KernelProbe {
        dim_h0: d0,
        dim_h: d1,
        projection_gap: gap,
    })
}
