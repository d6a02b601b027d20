//! Sandwiched resolvents `T0(z) = G R0(z) G^T`, `T(z)`, and their boundary
//! values on the real axis.

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, serde_matrix, CMatrix};
use crate::opcore::{eigendecompose, ModelKind, OperatorPair, SymmetricOperator};
use crate::tolerances::{self, Tunables};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GreenMode {
    /// Linear solves with the truncated `H0 - z`.
    Truncated,
    /// Closed-form Green's function of the free hopping operator on the whole
    /// lattice.
    InfiniteLattice,
}

/// Root of `w + 1/w = z` in the closed unit disc. On the band `(-2, 2)` this
/// is the limit from the upper half plane, `w = exp(-i kappa)` with
/// `z = 2 cos kappa`.
pub fn lattice_root(z: Complex64) -> Complex64 {
    if z.im == 0.0 && z.re.abs() < 2.0 {
        let x = z.re / 2.0;
        return Complex64::new(x, -(1.0 - x * x).sqrt());
    }
    if z.im == 0.0 {
        let x = z.re;
        let s = (x * x - 4.0).sqrt();
        return Complex64::new((x - x.signum() * s) / 2.0, 0.0);
    }
    let s = (z * z - 4.0).sqrt();
    let w = (z - s) / 2.0;
    if w.norm() <= 1.0 {
        w
    } else {
        (z + s) / 2.0
    }
}

/// Kernel of the free resolvent as a function of `|x - y|`.
pub fn free_green(z: Complex64) -> impl Fn(u64) -> Complex64 {
    let w = lattice_root(z);
    let denom = w - w.inv();
    move |d| w.powu(d as u32) / denom
}

fn check_point(z: Complex64, mode: GreenMode, tunables: &Tunables) -> Result<()> {
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "non-finite spectral parameter {z}"
        )));
    }
    match mode {
        GreenMode::Truncated if z.im == 0.0 => Err(Error::InvalidArgument(
            "truncated resolvent needs Im z != 0".into(),
        )),
        GreenMode::InfiniteLattice if z.im < 0.0 => Err(Error::InvalidArgument(
            "boundary values are taken from the upper half plane (Im z >= 0)".into(),
        )),
        GreenMode::InfiniteLattice
            if z.im == 0.0 && (z.re.abs() - 2.0).abs() < tunables.band_margin =>
        {
            Err(Error::BandEdge {
                lambda: z.re,
                margin: tunables.band_margin,
            })
        }
        _ => Ok(()),
    }
}

fn is_free_hopping(pair: &OperatorPair) -> bool {
    match &pair.h0 {
        SymmetricOperator::Tridiagonal { diag, off } => {
            diag.iter().all(|&x| x == 0.0) && off.iter().all(|&x| x == 1.0)
        }
        SymmetricOperator::Dense(_) => false,
    }
}

pub fn t0_of_z(
    pair: &OperatorPair,
    z: Complex64,
    mode: GreenMode,
    tunables: &Tunables,
) -> Result<CMatrix> {
    check_point(z, mode, tunables)?;
    let k = pair.k();
    if k == 0 {
        return Ok(Array2::zeros((0, 0)));
    }
    match mode {
        GreenMode::InfiniteLattice => {
            if !is_free_hopping(pair) {
                return Err(Error::UnsupportedKind(format!(
                    "{:?}: closed-form Green's function needs the free hopping H0",
                    pair.spec.kind
                )));
            }
            let r0 = free_green(z);
            match &pair.support {
                Some(sites) => Ok(Array2::from_shape_fn((k, k), |(a, b)| {
                    let (ra, va) = sites[a];
                    let (rb, vb) = sites[b];
                    let weight = (va.abs() * vb.abs()).sqrt();
                    r0(ra.abs_diff(rb) as u64) * weight
                })),
                None => {
                    let n = pair.n();
                    let r = Array2::from_shape_fn((n, n), |(x, y)| r0(x.abs_diff(y) as u64));
                    let g = linalg::to_complex(&pair.g.view());
                    Ok(g.dot(&r).dot(&g.t()))
                }
            }
        }
        GreenMode::Truncated => {
            let rhs = linalg::to_complex(&pair.g.t());
            let x = match &pair.h0 {
                SymmetricOperator::Tridiagonal { diag, off } => {
                    let off_c: Vec<Complex64> =
                        off.iter().map(|&e| Complex64::new(e, 0.0)).collect();
                    let d: Vec<Complex64> =
                        diag.iter().map(|&e| Complex64::new(e, 0.0) - z).collect();
                    linalg::solve_tridiagonal_c(&off_c, &d, &off_c, &rhs.view())?
                }
                SymmetricOperator::Dense(m) => {
                    let mut a = linalg::to_complex(&m.view());
                    for i in 0..a.nrows() {
                        a[[i, i]] -= z;
                    }
                    linalg::solve_dense_c(&a.view(), &rhs.view())?
                }
            };
            Ok(linalg::to_complex(&pair.g.view()).dot(&x))
        }
    }
}

/// `T(z)` with the diagnostics of its computation.
#[derive(Debug, Clone)]
pub struct TResult {
    pub t: CMatrix,
    /// Condition number of `I + T0 J`.
    pub condition: f64,
    /// Largest residual of the two inversion identities
    /// `(I - T J)(I + T0 J) = I` and `(I + J T0)(I - J T) = I`.
    pub inversion_residual: f64,
}

pub fn t_of_z(pair: &OperatorPair, t0: &CMatrix, z: Complex64) -> Result<TResult> {
    let k = t0.nrows();
    if k == 0 {
        return Ok(TResult {
            t: Array2::zeros((0, 0)),
            condition: 1.0,
            inversion_residual: 0.0,
        });
    }
    let j = linalg::to_complex(&pair.j.view());
    let eye = linalg::identity_c(k);
    let m = &eye + &t0.dot(&j);
    let condition = linalg::condition_number_c(&m.view())?;
    if condition > tolerances::RESONANCE_CONDITION {
        return Err(Error::Resonance {
            re: z.re,
            im: z.im,
            condition,
        });
    }
    let t = linalg::solve_dense_c(&m.view(), &t0.view())?;
    let left = (&eye - &t.dot(&j)).dot(&m) - &eye;
    let right = (&eye + &j.dot(t0)).dot(&(&eye - &j.dot(&t))) - &eye;
    let inversion_residual =
        linalg::op_norm_c(&left.view())?.max(linalg::op_norm_c(&right.view())?);
    if inversion_residual > tolerances::INVERSION_IDENTITY {
        return Err(Error::IdentityViolated {
            name: "(I - TJ)(I + T0 J) = I",
            residual: inversion_residual,
            tol: tolerances::INVERSION_IDENTITY,
        });
    }
    Ok(TResult {
        t,
        condition,
        inversion_residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryRoute {
    ClosedForm,
    Extrapolated,
}

/// Boundary values at `lambda + i0` and the matrices derived from them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryValue {
    pub lambda: f64,
    #[serde(
        serialize_with = "serde_matrix::complex_rows",
        deserialize_with = "serde_matrix::from_complex_rows"
    )]
    pub t0: CMatrix,
    #[serde(
        serialize_with = "serde_matrix::complex_rows",
        deserialize_with = "serde_matrix::from_complex_rows"
    )]
    pub t: CMatrix,
    #[serde(
        serialize_with = "serde_matrix::rows",
        deserialize_with = "serde_matrix::from_rows"
    )]
    pub a0: Array2<f64>,
    #[serde(
        serialize_with = "serde_matrix::rows",
        deserialize_with = "serde_matrix::from_rows"
    )]
    pub b0: Array2<f64>,
    #[serde(
        serialize_with = "serde_matrix::rows",
        deserialize_with = "serde_matrix::from_rows"
    )]
    pub a: Array2<f64>,
    #[serde(
        serialize_with = "serde_matrix::rows",
        deserialize_with = "serde_matrix::from_rows"
    )]
    pub b: Array2<f64>,
    #[serde(
        serialize_with = "serde_matrix::rows",
        deserialize_with = "serde_matrix::from_rows"
    )]
    pub f0p: Array2<f64>,
    #[serde(
        serialize_with = "serde_matrix::rows",
        deserialize_with = "serde_matrix::from_rows"
    )]
    pub fp: Array2<f64>,
    pub err_estimate: f64,
    pub route: BoundaryRoute,
    /// Condition number of `I + T0 J`.
    pub condition: f64,
}

impl BoundaryValue {
    fn assemble(
        lambda: f64,
        t0: CMatrix,
        tr: TResult,
        err_estimate: f64,
        route: BoundaryRoute,
    ) -> Result<Self> {
        let a0 = t0.mapv(|z| z.re);
        let b0 = t0.mapv(|z| z.im);
        let a = tr.t.mapv(|z| z.re);
        let b = tr.t.mapv(|z| z.im);
        for m in [&a0, &b0, &a, &b] {
            let defect = linalg::symmetry_defect(&m.view());
            if defect > tolerances::OUTPUT_SYMMETRY {
                return Err(Error::NotSymmetric {
                    defect,
                    tol: tolerances::OUTPUT_SYMMETRY,
                });
            }
        }
        for m in [&b0, &b] {
            let lo = linalg::min_eigenvalue(&m.view())?;
            if lo < -tolerances::PSD {
                return Err(Error::NotPositiveSemidefinite { min_eig: lo });
            }
        }
        let f0p = &b0 / std::f64::consts::PI;
        let fp = &b / std::f64::consts::PI;
        Ok(Self {
            lambda,
            t0,
            t: tr.t,
            a0,
            b0,
            a,
            b,
            f0p,
            fp,
            err_estimate,
            route,
            condition: tr.condition,
        })
    }

    pub fn k(&self) -> usize {
        self.t0.nrows()
    }
}

/// Closed-form boundary value for models with the free hopping `H0`.
pub fn boundary_value_closed_form(
    pair: &OperatorPair,
    lambda: f64,
    tunables: &Tunables,
) -> Result<BoundaryValue> {
    if lambda.abs() > 2.0 - tunables.band_margin {
        return Err(Error::BandEdge {
            lambda,
            margin: tunables.band_margin,
        });
    }
    let z = Complex64::new(lambda, 0.0);
    let t0 = t0_of_z(pair, z, GreenMode::InfiniteLattice, tunables)?;
    let tr = t_of_z(pair, &t0, z)?;
    let err = tr.inversion_residual;
    BoundaryValue::assemble(lambda, t0, tr, err, BoundaryRoute::ClosedForm)
}

/// `eps_j = eps0 * 2^-j` for `j = 0..=levels`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationSchedule {
    pub eps0: f64,
    pub levels: usize,
}

impl Default for ExtrapolationSchedule {
    fn default() -> Self {
        Self {
            eps0: tolerances::EXTRAPOLATION_EPS0,
            levels: tolerances::EXTRAPOLATION_LEVELS,
        }
    }
}

impl ExtrapolationSchedule {
    pub fn epsilons(&self) -> Vec<f64> {
        (0..=self.levels)
            .map(|j| self.eps0 * 0.5f64.powi(j as i32))
            .collect()
    }
}

/// Richardson extrapolation to `eps = 0` of samples at `eps0 * 2^-j`,
/// eliminating the first `order` powers of `eps`. Returns the final value and
/// the successive differences of the last column.
pub fn richardson(samples: &[CMatrix], order: usize) -> Result<(CMatrix, Vec<f64>)> {
    if samples.len() < order + 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least {} samples for order {order}",
            order + 2
        )));
    }
    let mut column: Vec<CMatrix> = samples.to_vec();
    for level in 1..=order {
        let factor = 2f64.powi(level as i32);
        column = column
            .windows(2)
            .map(|w| (&w[1] * factor - &w[0]) / (factor - 1.0))
            .collect();
    }
    let diffs = column
        .windows(2)
        .map(|w| linalg::op_norm_c(&(&w[1] - &w[0]).view()))
        .collect::<Result<Vec<f64>>>()?;
    Ok((column.pop().expect("non-empty column"), diffs))
}

/// Successive differences must shrink until they hit roundoff.
fn extrapolation_converged(diffs: &[f64], scale: f64) -> bool {
    let floor = 1e-10 * scale.max(1.0);
    diffs.windows(2).all(|w| w[1] <= w[0] || w[1] <= floor)
}

pub fn boundary_value_extrapolated(
    pair: &OperatorPair,
    lambda: f64,
    schedule: &ExtrapolationSchedule,
    mode: GreenMode,
    tunables: &Tunables,
) -> Result<BoundaryValue> {
    if pair.k() == 0 {
        let empty = Array2::zeros((0, 0));
        let tr = t_of_z(pair, &empty, Complex64::new(lambda, 0.0))?;
        return BoundaryValue::assemble(lambda, empty, tr, 0.0, BoundaryRoute::Extrapolated);
    }
    let samples = schedule
        .epsilons()
        .iter()
        .map(|&eps| t0_of_z(pair, Complex64::new(lambda, eps), mode, tunables))
        .collect::<Result<Vec<_>>>()?;
    let (t0, diffs) = richardson(&samples, tolerances::RICHARDSON_ORDER)?;
    let scale = linalg::op_norm_c(&t0.view())?;
    if !extrapolation_converged(&diffs, scale) {
        return Err(Error::ExtrapolationFailed { diffs });
    }
    // Exact complex symmetry is lost only to rounding; restore it.
    let t0 = (&t0 + &t0.t()).mapv(|z| z * 0.5);
    let err = *diffs.last().expect("at least one difference");
    let tr = t_of_z(pair, &t0, Complex64::new(lambda, 0.0))?;
    BoundaryValue::assemble(lambda, t0, tr, err, BoundaryRoute::Extrapolated)
}

/// Closed form for `lattice1d`; extrapolation for the other kinds, through
/// the closed-form Green's function when `H0` is the free hopping operator
/// and through truncated solves otherwise.
pub fn boundary_value(
    pair: &OperatorPair,
    lambda: f64,
    tunables: &Tunables,
) -> Result<BoundaryValue> {
    match pair.spec.kind {
        ModelKind::Lattice1d => boundary_value_closed_form(pair, lambda, tunables),
        _ => {
            if lambda.abs() > 2.0 - tunables.band_margin {
                return Err(Error::BandEdge {
                    lambda,
                    margin: tunables.band_margin,
                });
            }
            let mode = if is_free_hopping(pair) {
                GreenMode::InfiniteLattice
            } else {
                GreenMode::Truncated
            };
            boundary_value_extrapolated(
                pair,
                lambda,
                &ExtrapolationSchedule::default(),
                mode,
                tunables,
            )
        }
    }
}

/// Composite trapezoid rule for `pi^-1 int_a^b B0(lambda) dlambda` with
/// closed-form `B0`.
pub fn stone_quadrature(
    pair: &OperatorPair,
    a: f64,
    b: f64,
    grid: usize,
    tunables: &Tunables,
) -> Result<Array2<f64>> {
    if grid < 8 {
        return Err(Error::InvalidArgument(format!(
            "grid must be >= 8, got {grid}"
        )));
    }
    for x in [a, b] {
        if x.abs() > 2.0 - tunables.band_margin {
            return Err(Error::BandEdge {
                lambda: x,
                margin: tunables.band_margin,
            });
        }
    }
    if !(a < b) {
        return Err(Error::InvalidArgument(format!(
            "need a < b, got [{a}, {b}]"
        )));
    }
    let k = pair.k();
    let h = (b - a) / grid as f64;
    let mut acc = Array2::<f64>::zeros((k, k));
    for i in 0..=grid {
        let x = a + h * i as f64;
        let t0 = t0_of_z(
            pair,
            Complex64::new(x, 0.0),
            GreenMode::InfiniteLattice,
            tunables,
        )?;
        let w = if i == 0 || i == grid { 0.5 } else { 1.0 };
        acc.scaled_add(w * h / std::f64::consts::PI, &t0.mapv(|z| z.im));
    }
    Ok(acc)
}

/// `F0(b) - F0(a) = G E0[a, b) G^T` from the truncated spectral decomposition.
pub fn truncated_f0_increment(pair: &OperatorPair, a: f64, b: f64) -> Result<Array2<f64>> {
    let dec = eigendecompose(&pair.h0)?;
    let start = dec.count_below(a);
    let end = dec.count_below(b);
    let block = linalg::column_block(&dec.eigenvectors, start..end.max(start));
    let gy = pair.g.dot(&block);
    Ok(gy.dot(&gy.t()))
}

/// `|| pi^-1 int_a^b B0 - (F0(b) - F0(a)) ||` with the increment of `F0` taken
/// from the truncation of `pair`.
pub fn stone_consistency(
    pair: &OperatorPair,
    a: f64,
    b: f64,
    grid: usize,
    tunables: &Tunables,
) -> Result<f64> {
    let q = stone_quadrature(pair, a, b, grid, tunables)?;
    if pair.k() == 0 {
        return Ok(0.0);
    }
    let f = truncated_f0_increment(pair, a, b)?;
    linalg::op_norm(&(q - f).view())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opcore::{build_model, ModelSpec};
    use approx::assert_abs_diff_eq;

    fn tun() -> Tunables {
        Tunables::default()
    }

    #[test]
    fn root_is_inside_disc() {
        for &(re, im) in &[
            (0.3, 1.0),
            (-1.5, 0.01),
            (3.0, 0.2),
            (0.0, 1e-9),
            (-2.5, 0.0),
            (2.5, 0.0),
        ] {
            let z = Complex64::new(re, im);
            let w = lattice_root(z);
            assert!(w.norm() <= 1.0 + 1e-12);
            assert!((w + w.inv() - z).norm() < 1e-12);
        }
        // Limit from above on the band.
        let kappa = 1.1f64;
        let w = lattice_root(Complex64::new(2.0 * kappa.cos(), 0.0));
        assert!((w - Complex64::from_polar(1.0, -kappa)).norm() < 1e-15);
        let w_eps = lattice_root(Complex64::new(2.0 * kappa.cos(), 1e-8));
        assert!((w - w_eps).norm() < 1e-7);
    }

    #[test]
    fn free_green_inverts_hopping() {
        let z = Complex64::new(0.4, 0.3);
        let r0 = free_green(z);
        // (H0 - z) R0 e_0 = e_0, checked on a window.
        for x in -20i64..=20 {
            let col = |y: i64| r0(y.unsigned_abs());
            let lhs = col(x + 1) + col(x - 1) - z * col(x);
            let want = if x == 0 { 1.0 } else { 0.0 };
            assert!((lhs - want).norm() < 1e-14, "x = {x}");
        }
    }

    #[test]
    fn empty_support() {
        let pair = build_model(&ModelSpec::lattice(5, &[])).unwrap();
        let t0 = t0_of_z(
            &pair,
            Complex64::new(0.0, 1.0),
            GreenMode::Truncated,
            &tun(),
        )
        .unwrap();
        assert_eq!(t0.dim(), (0, 0));
        let bv = boundary_value(&pair, 0.0, &tun()).unwrap();
        assert_eq!(bv.k(), 0);
        assert_eq!(bv.err_estimate, 0.0);
    }

    #[test]
    fn t0_is_complex_symmetric_and_herglotz() {
        let pair = build_model(&ModelSpec::lattice(30, &[(-2, 0.4), (0, -0.7), (3, 1.1)])).unwrap();
        for mode in [GreenMode::Truncated, GreenMode::InfiniteLattice] {
            for &z in &[
                Complex64::new(0.2, 0.5),
                Complex64::new(-1.7, 0.05),
                Complex64::new(2.6, 1.0),
            ] {
                let t0 = t0_of_z(&pair, z, mode, &tun()).unwrap();
                assert!((&t0 - &t0.t()).iter().all(|e| e.norm() < 1e-13));
                // With mixed signs G^T J G is not |V|; Herglotz concerns G R0 G^T.
                let b0 = t0.mapv(|e| e.im);
                assert!(linalg::min_eigenvalue(&b0.view()).unwrap() >= -1e-12);
            }
        }
    }

    #[test]
    fn truncated_modes_reject_real_axis() {
        let pair = build_model(&ModelSpec::delta(5, 0.5)).unwrap();
        assert!(t0_of_z(
            &pair,
            Complex64::new(0.0, 0.0),
            GreenMode::Truncated,
            &tun()
        )
        .is_err());
        assert!(matches!(
            t0_of_z(
                &pair,
                Complex64::new(1.95, 0.0),
                GreenMode::InfiniteLattice,
                &tun()
            ),
            Err(Error::BandEdge { .. })
        ));
        assert!(t0_of_z(
            &pair,
            Complex64::new(0.0, -0.1),
            GreenMode::InfiniteLattice,
            &tun()
        )
        .is_err());
    }

    #[test]
    fn scalar_inversion_identity() {
        let pair = build_model(&ModelSpec::delta(5, 0.5)).unwrap();
        let z = Complex64::new(0.0, 0.0);
        let t0 = t0_of_z(&pair, z, GreenMode::InfiniteLattice, &tun()).unwrap();
        assert_abs_diff_eq!(t0[[0, 0]].im, 0.25, epsilon = 1e-15);
        let tr = t_of_z(&pair, &t0, z).unwrap();
        let prod =
            (Complex64::new(1.0, 0.0) + t0[[0, 0]]) * (Complex64::new(1.0, 0.0) - tr.t[[0, 0]]);
        assert!((prod - 1.0).norm() < 1e-12);
    }

    #[test]
    fn zero_t0_gives_zero_t() {
        let pair = build_model(&ModelSpec::delta(5, 0.5)).unwrap();
        let t0 = Array2::zeros((1, 1));
        let tr = t_of_z(&pair, &t0, Complex64::new(0.0, 1.0)).unwrap();
        assert_eq!(tr.t[[0, 0]], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn t_matches_direct_resolvent() {
        let pair = build_model(&ModelSpec::lattice(500, &[(0, 0.5), (1, -0.3)])).unwrap();
        let z = Complex64::new(0.0, 1.0);
        let t0 = t0_of_z(&pair, z, GreenMode::Truncated, &tun()).unwrap();
        let tr = t_of_z(&pair, &t0, z).unwrap();
        let SymmetricOperator::Tridiagonal { diag, off } = &pair.h else {
            panic!()
        };
        let off_c: Vec<Complex64> = off.iter().map(|&e| Complex64::new(e, 0.0)).collect();
        let d: Vec<Complex64> = diag.iter().map(|&e| Complex64::new(e, 0.0) - z).collect();
        let rhs = linalg::to_complex(&pair.g.t());
        let x = linalg::solve_tridiagonal_c(&off_c, &d, &off_c, &rhs.view()).unwrap();
        let direct = linalg::to_complex(&pair.g.view()).dot(&x);
        assert!((&tr.t - &direct).iter().all(|e| e.norm() < 1e-6));
    }

    #[test]
    fn boundary_value_invariants() {
        let pair = build_model(&ModelSpec::delta(5, 0.5)).unwrap();
        let bv = boundary_value(&pair, 0.0, &tun()).unwrap();
        assert_eq!(bv.route, BoundaryRoute::ClosedForm);
        assert!(bv.b0[[0, 0]] >= 0.0);
        assert_eq!(bv.f0p[[0, 0]], bv.b0[[0, 0]] / std::f64::consts::PI);
        let json = serde_json::to_string(&bv).unwrap();
        let back: BoundaryValue = serde_json::from_str(&json).unwrap();
        assert_eq!(back.t0, bv.t0);
        assert_eq!(back.fp, bv.fp);
    }

    #[test]
    fn extrapolation_matches_closed_form() {
        let pair = build_model(&ModelSpec::delta(5, 1.0)).unwrap();
        let closed = boundary_value_closed_form(&pair, 0.7, &tun()).unwrap();
        let ext = boundary_value_extrapolated(
            &pair,
            0.7,
            &ExtrapolationSchedule::default(),
            GreenMode::InfiniteLattice,
            &tun(),
        )
        .unwrap();
        assert_eq!(ext.route, BoundaryRoute::Extrapolated);
        let bound = 10.0 * ext.err_estimate;
        for (a, b) in ext.t.iter().zip(closed.t.iter()) {
            assert!(
                (a - b).norm() <= bound.max(1e-14),
                "{a} vs {b}, bound {bound}"
            );
        }
        for (a, b) in ext.t0.iter().zip(closed.t0.iter()) {
            assert!(
                (a - b).norm() <= bound.max(1e-14),
                "{a} vs {b}, bound {bound}"
            );
        }
    }

    #[test]
    fn truncated_extrapolation_below_level_spacing_fails_loudly() {
        let pair = build_model(&ModelSpec::delta(20, 1.0)).unwrap();
        let r = boundary_value_extrapolated(
            &pair,
            0.3,
            &ExtrapolationSchedule::default(),
            GreenMode::Truncated,
            &tun(),
        );
        assert!(matches!(r, Err(Error::ExtrapolationFailed { .. })), "{r:?}");
    }

    #[test]
    fn off_core_b0_vanishes() {
        let pair = build_model(&ModelSpec::lattice(4, &[(0, 0.5), (2, 0.3)])).unwrap();
        for i in 0..20 {
            let x = 2.2 + 0.1 * i as f64;
            for lambda in [x, -x] {
                let t0 = t0_of_z(
                    &pair,
                    Complex64::new(lambda, 0.0),
                    GreenMode::InfiniteLattice,
                    &tun(),
                )
                .unwrap();
                assert!(t0.iter().all(|z| z.im == 0.0), "lambda = {lambda}");
            }
        }
    }

    #[test]
    fn stone_formula() {
        let free = build_model(&ModelSpec::lattice(50, &[])).unwrap();
        assert_eq!(
            stone_consistency(&free, -0.5, 0.5, 16, &tun()).unwrap(),
            0.0
        );
        assert!(stone_consistency(&free, -0.5, 0.5, 4, &tun()).is_err());

        let pair = build_model(&ModelSpec::delta(2000, 0.5)).unwrap();
        let d = stone_consistency(&pair, -0.5, 0.5, 200, &tun()).unwrap();
        assert!(d <= 1e-3, "discrepancy {d}");

        // Quadrature error against the exact integral (v/pi)(kappa_a - kappa_b).
        let exact = 0.5 / std::f64::consts::PI * ((-0.25f64).acos() - 0.25f64.acos());
        let e1 = (stone_quadrature(&pair, -0.5, 0.5, 100, &tun()).unwrap()[[0, 0]] - exact).abs();
        let e2 = (stone_quadrature(&pair, -0.5, 0.5, 200, &tun()).unwrap()[[0, 0]] - exact).abs();
        assert!(e2 < e1, "{e1} -> {e2}");
    }
}
