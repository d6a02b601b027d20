//! The function `alpha(lambda)` by three routes, empirical spectra of
//! `D = E(-inf, lambda) - E0(-inf, lambda)` along truncation ladders, and the
//! Fredholm test for the pair of projections.

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::opcore::{build_model, ModelSpec, OperatorPair, PairSpectra, SymbolDifference};
use crate::resolvent::BoundaryValue;
use crate::tolerances::{self, Tunables};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaRoute {
    ProjLimit,
    Derivative,
    SmatrixTilde,
}

impl AlphaRoute {
    pub fn name(&self) -> &'static str {
        match self {
            Self::ProjLimit => "proj_limit",
            Self::Derivative => "derivative",
            Self::SmatrixTilde => "smatrix_tilde",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaEstimate {
    pub lambda: f64,
    pub value: f64,
    pub route: AlphaRoute,
    pub diagnostics: Vec<(String, f64)>,
}

impl AlphaEstimate {
    fn checked(
        lambda: f64,
        value: f64,
        route: AlphaRoute,
        diagnostics: Vec<(String, f64)>,
    ) -> Result<Self> {
        if !(-tolerances::ALPHA_LOWER_SLACK..=1.0 + tolerances::ALPHA_UPPER_SLACK).contains(&value)
        {
            return Err(Error::InvariantViolated {
                name: "0 <= alpha <= 1",
                detail: format!("{} route gave {value} at lambda = {lambda}", route.name()),
            });
        }
        Ok(Self {
            lambda,
            value,
            route,
            diagnostics,
        })
    }

    pub fn diagnostic(&self, name: &str) -> Option<f64> {
        self.diagnostics
            .iter()
            .find(|(k, _)| k == name)
            .map(|&(_, v)| v)
    }
}

/// `pi * || F0'^{1/2} J F'^{1/2} ||`.
pub fn alpha_derivative(bv: &BoundaryValue, j: &Array2<f64>) -> Result<AlphaEstimate> {
    if bv.k() == 0 {
        return AlphaEstimate::checked(bv.lambda, 0.0, AlphaRoute::Derivative, vec![]);
    }
    let r0 = linalg::sqrt_psd(&bv.f0p.view(), tolerances::PSD)?;
    let r1 = linalg::sqrt_psd(&bv.fp.view(), tolerances::PSD)?;
    let value = PI * linalg::op_norm(&r0.dot(j).dot(&r1).view())?;
    AlphaEstimate::checked(
        bv.lambda,
        value,
        AlphaRoute::Derivative,
        vec![("boundary_err".into(), bv.err_estimate)],
    )
}

/// `S~(lambda) = I - 2i B0^{1/2} (J - J T J) B0^{1/2}` and its unitarity
/// defect `|| S~^* S~ - I ||`.
pub fn stilde(bv: &BoundaryValue, j: &Array2<f64>) -> Result<(CMatrix, f64)> {
    let k = bv.k();
    if k == 0 {
        return Ok((Array2::zeros((0, 0)), 0.0));
    }
    let root = linalg::to_complex(&linalg::sqrt_psd(&bv.b0.view(), tolerances::PSD)?.view());
    let jc = linalg::to_complex(&j.view());
    let inner = &jc - &jc.dot(&bv.t).dot(&jc);
    let eye = linalg::identity_c(k);
    let s = &eye
        - &root
            .dot(&inner)
            .dot(&root)
            .mapv(|z| z * Complex64::new(0.0, 2.0));
    let defect = linalg::op_norm_c(&(linalg::adjoint(&s.view()).dot(&s) - &eye).view())?;
    Ok((s, defect))
}

/// `|| S~ - I || / 2`.
pub fn alpha_smatrix(bv: &BoundaryValue, j: &Array2<f64>) -> Result<AlphaEstimate> {
    let (s, defect) = stilde(bv, j)?;
    if defect > tolerances::UNITARITY_ERROR {
        return Err(Error::IdentityViolated {
            name: "S~ unitary",
            residual: defect,
            tol: tolerances::UNITARITY_ERROR,
        });
    }
    let k = s.nrows();
    let value = if k == 0 {
        0.0
    } else {
        0.5 * linalg::op_norm_c(&(&s - &linalg::identity_c(k)).view())?
    };
    let mut diagnostics = vec![("unitarity_defect".to_string(), defect)];
    if defect > tolerances::UNITARITY_ASSERT {
        diagnostics.push(("unitarity_above_assert_level".into(), 1.0));
    }
    AlphaEstimate::checked(bv.lambda, value, AlphaRoute::SmatrixTilde, diagnostics)
}

/// `(pi / 2 eps) || (G E0(d))^T J G E(d) ||` for `d = (lambda - eps, lambda + eps)`.
pub fn proj_window_value(
    pair: &OperatorPair,
    spectra: &PairSpectra,
    lambda: f64,
    eps: f64,
) -> Result<f64> {
    if pair.k() == 0 {
        return Ok(0.0);
    }
    let w0 = spectra.h0.open_window(lambda - eps, lambda + eps);
    let w1 = spectra.h.open_window(lambda - eps, lambda + eps);
    let gy = pair
        .g
        .dot(&linalg::column_block(&spectra.h0.eigenvectors, w0));
    let gx = pair
        .g
        .dot(&linalg::column_block(&spectra.h.eigenvectors, w1));
    // ||A^T J B|| = ||(A A^T)^{1/2} J (B B^T)^{1/2}|| keeps the SVD at k x k.
    let r0 = linalg::sqrt_psd(&gy.dot(&gy.t()).view(), tolerances::PSD)?;
    let r1 = linalg::sqrt_psd(&gx.dot(&gx.t()).view(), tolerances::PSD)?;
    Ok(PI / (2.0 * eps) * linalg::op_norm(&r0.dot(&pair.j).dot(&r1).view())?)
}

fn check_schedule(half_width: usize, eps: &[f64], tunables: &Tunables) -> Result<()> {
    if eps.len() < 2 {
        return Err(Error::InvalidArgument(
            "need at least two window widths".into(),
        ));
    }
    for &e in eps {
        if !(e > 0.0) || e * (half_width as f64) < tunables.eps_n_min {
            return Err(Error::InvalidArgument(format!(
                "window eps = {e} at N = {half_width} violates eps*N >= {}",
                tunables.eps_n_min
            )));
        }
    }
    Ok(())
}

/// Extrapolates the window values linearly to `eps = 0` from the two smallest
/// widths.
pub fn alpha_proj_limit(
    pair: &OperatorPair,
    spectra: &PairSpectra,
    lambda: f64,
    eps_schedule: &[f64],
    tunables: &Tunables,
) -> Result<AlphaEstimate> {
    check_schedule(pair.half_width(), eps_schedule, tunables)?;
    if lambda.abs() > 2.0 - tunables.band_margin {
        return Err(Error::BandEdge {
            lambda,
            margin: tunables.band_margin,
        });
    }
    let mut eps = eps_schedule.to_vec();
    eps.sort_by(|a, b| b.total_cmp(a));
    let values = eps
        .iter()
        .map(|&e| proj_window_value(pair, spectra, lambda, e))
        .collect::<Result<Vec<_>>>()?;
    let m = eps.len();
    let (e1, v1) = (eps[m - 1], values[m - 1]);
    let (e2, v2) = (eps[m - 2], values[m - 2]);
    let value = (e2 * v1 - e1 * v2) / (e2 - e1);
    let mut diagnostics: Vec<(String, f64)> = eps
        .iter()
        .zip(&values)
        .map(|(e, v)| (format!("eps={e}"), *v))
        .collect();
    diagnostics.push(("half_width".into(), pair.half_width() as f64));
    AlphaEstimate::checked(lambda, value, AlphaRoute::ProjLimit, diagnostics)
}

/// Builds the truncation and its spectra, then calls [`alpha_proj_limit`].
pub fn alpha_proj_limit_model(
    spec: &ModelSpec,
    lambda: f64,
    eps_schedule: &[f64],
    tunables: &Tunables,
) -> Result<AlphaEstimate> {
    check_schedule(spec.truncation_half_width, eps_schedule, tunables)?;
    let pair = build_model(spec)?;
    let spectra = PairSpectra::compute(&pair)?;
    alpha_proj_limit(&pair, &spectra, lambda, eps_schedule, tunables)
}

/// Eigenvalues of `D` (or of any symbol difference) at one truncation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cloud {
    pub half_width: usize,
    pub eigenvalues: Vec<f64>,
    /// Estimated `||D^2 - E0- E+ E0- - E0+ E- E0+||`; absent for general symbols.
    pub d_squared_residual: Option<f64>,
    /// Largest distance from `-mu` to the cloud over eigenvalues `mu` away from
    /// `0` and `+-1`.
    pub pair_symmetry_defect: f64,
    /// Eigenvalues with `|mu| > 0.1`.
    pub count_above_tenth: usize,
}

/// Distance from `-mu` to the nearest cloud point, maximized over `mu` with
/// `|mu| > UNIT_EIGENVALUE` and `||mu| - 1| > UNIT_EIGENVALUE`.
pub fn pair_symmetry_defect(sorted: &[f64]) -> f64 {
    let tol = tolerances::UNIT_EIGENVALUE;
    let mut worst = 0.0f64;
    for &mu in sorted {
        if mu.abs() <= tol || (mu.abs() - 1.0).abs() <= tol {
            continue;
        }
        worst = worst.max(distance_to_sorted(sorted, -mu));
    }
    worst
}

fn distance_to_sorted(sorted: &[f64], x: f64) -> f64 {
    let i = sorted.partition_point(|&y| y < x);
    let mut d = f64::INFINITY;
    if i < sorted.len() {
        d = d.min((sorted[i] - x).abs());
    }
    if i > 0 {
        d = d.min((x - sorted[i - 1]).abs());
    }
    d
}

impl Cloud {
    pub fn new(
        half_width: usize,
        mut eigenvalues: Vec<f64>,
        d_squared_residual: Option<f64>,
    ) -> Self {
        eigenvalues.sort_by(f64::total_cmp);
        let pair_symmetry_defect = pair_symmetry_defect(&eigenvalues);
        let count_above_tenth = eigenvalues.iter().filter(|x| x.abs() > 0.1).count();
        Self {
            half_width,
            eigenvalues,
            d_squared_residual,
            pair_symmetry_defect,
            count_above_tenth,
        }
    }
}

/// Cloud points at the largest rung that have a partner within
/// `displacement` at the previous rung.
pub fn filter_transients(clouds: &[Cloud], displacement: f64) -> Vec<f64> {
    match clouds {
        [] => vec![],
        [only] => only.eigenvalues.clone(),
        [.., prev, last] => last
            .eigenvalues
            .iter()
            .copied()
            .filter(|&x| distance_to_sorted(&prev.eigenvalues, x) <= displacement)
            .collect(),
    }
}

/// Largest gap between consecutive points of `sorted` inside `[-a, a]`.
pub fn fill_distance(sorted: &[f64], a: f64) -> f64 {
    let inside: Vec<f64> = sorted.iter().copied().filter(|x| x.abs() <= a).collect();
    inside.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EssSpectrumEstimate {
    pub lambda: f64,
    pub eigenvalue_clouds: Vec<Cloud>,
    /// Largest-rung cloud after transient filtering.
    pub filtered: Vec<f64>,
    pub alpha_empirical: f64,
    /// Same maximum with eigenvalues within `UNIT_EIGENVALUE` of `+-1` removed.
    pub alpha_empirical_excluding_unit: f64,
    pub fill_distance: f64,
    pub plus_one_count: usize,
    pub minus_one_count: usize,
    pub transient_displacement: f64,
}

impl EssSpectrumEstimate {
    pub fn from_clouds(lambda: f64, clouds: Vec<Cloud>, tunables: &Tunables) -> Self {
        let filtered = filter_transients(&clouds, tunables.transient_displacement);
        let alpha_empirical = filtered.iter().map(|x| x.abs()).fold(0.0, f64::max);
        let unit = tolerances::UNIT_EIGENVALUE;
        let alpha_empirical_excluding_unit = filtered
            .iter()
            .map(|x| x.abs())
            .filter(|x| (x - 1.0).abs() > unit)
            .fold(0.0, f64::max);
        let fill = fill_distance(&filtered, alpha_empirical);
        let last = clouds
            .last()
            .map(|c| c.eigenvalues.as_slice())
            .unwrap_or(&[]);
        let plus_one_count = last.iter().filter(|x| (*x - 1.0).abs() <= unit).count();
        let minus_one_count = last.iter().filter(|x| (*x + 1.0).abs() <= unit).count();
        Self {
            lambda,
            eigenvalue_clouds: clouds,
            filtered,
            alpha_empirical,
            alpha_empirical_excluding_unit,
            fill_distance: fill,
            plus_one_count,
            minus_one_count,
            transient_displacement: tunables.transient_displacement,
        }
    }

    pub fn max_cloud_magnitude(&self) -> f64 {
        self.eigenvalue_clouds
            .iter()
            .flat_map(|c| c.eigenvalues.iter())
            .map(|x| x.abs())
            .fold(0.0, f64::max)
    }
}

pub fn check_ladder(n_list: &[usize]) -> Result<()> {
    if n_list.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "a ladder needs at least 3 truncations, got {}",
            n_list.len()
        )));
    }
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "ladder truncations must be strictly ascending".into(),
        ));
    }
    Ok(())
}

/// Power-iteration estimate of `||D^2 - E0- E+ E0- - E0+ E- E0+||` with the
/// projections applied in factored form.
pub fn d_squared_residual(spectra: &PairSpectra, lambda: f64) -> f64 {
    let n = spectra.h0.dim();
    let x_below = linalg::column_block(&spectra.h.eigenvectors, 0..spectra.h.count_below(lambda));
    let y_below = linalg::column_block(&spectra.h0.eigenvectors, 0..spectra.h0.count_below(lambda));
    let proj = |b: &ArrayView2<f64>, x: &Array2<f64>| b.dot(&b.t().dot(x));
    linalg::power_norm_estimate(n, 30, 0x5eed, |x| {
        let px = proj(&x_below, x);
        let p0x = proj(&y_below, x);
        let dx = &px - &p0x;
        let ddx = proj(&x_below, &dx) - proj(&y_below, &dx);
        // E0- E+ E0- x = P0 (I - P) P0 x
        let t1 = {
            let u = &p0x - &proj(&x_below, &p0x);
            proj(&y_below, &u)
        };
        // E0+ E- E0+ x = (I - P0) P (I - P0) x
        let t2 = {
            let w = x - &p0x;
            let pw = proj(&x_below, &w);
            &pw - &proj(&y_below, &pw)
        };
        ddx - t1 - t2
    })
}

/// Eigenvalue clouds of `D` along a ladder of truncations.
pub fn d_spectrum_ladder(
    spec: &ModelSpec,
    lambda: f64,
    n_list: &[usize],
    tunables: &Tunables,
) -> Result<EssSpectrumEstimate> {
    check_ladder(n_list)?;
    let mut clouds = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let pair = build_model(&spec.with_half_width(n))?;
        let spectra = PairSpectra::compute(&pair)?;
        let residual = d_squared_residual(&spectra, lambda);
        if residual > tolerances::D_SQUARED_IDENTITY {
            return Err(Error::IdentityViolated {
                name: "D^2 = E0- E+ E0- + E0+ E- E0+",
                residual,
                tol: tolerances::D_SQUARED_IDENTITY,
            });
        }
        let indicator = |x: f64| if x < lambda { 1.0 } else { 0.0 };
        let eig = SymbolDifference::new(&spectra, indicator).eigenvalues()?;
        let cloud = Cloud::new(n, eig, Some(residual));
        let bound = 1.0 + tolerances::CLOUD_BOUND;
        if cloud.eigenvalues.iter().any(|x| x.abs() > bound) {
            return Err(Error::InvariantViolated {
                name: "spectrum of D inside [-1, 1]",
                detail: format!("N = {n}"),
            });
        }
        clouds.push(cloud);
    }
    Ok(EssSpectrumEstimate::from_clouds(lambda, clouds, tunables))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FredholmRecord {
    pub sigma_min_0: f64,
    pub sigma_min_1: f64,
    pub fredholm: bool,
}

/// Smallest singular values of `I + A0 J` and `I - A J`; they must fall on the
/// same side of `kernel_tol`.
pub fn fredholm_check(
    bv: &BoundaryValue,
    j: &Array2<f64>,
    kernel_tol: f64,
) -> Result<FredholmRecord> {
    let k = bv.k();
    let eye = Array2::<f64>::eye(k);
    let m0 = &eye + &bv.a0.dot(j);
    let m1 = &eye - &bv.a.dot(j);
    let sigma_min_0 = linalg::sigma_min(&m0.view())?;
    let sigma_min_1 = linalg::sigma_min(&m1.view())?;
    if (sigma_min_0 > kernel_tol) != (sigma_min_1 > kernel_tol) {
        return Err(Error::FredholmEquivalence {
            sigma_min_0,
            sigma_min_1,
            tol: kernel_tol,
        });
    }
    Ok(FredholmRecord {
        sigma_min_0,
        sigma_min_1,
        fredholm: sigma_min_0 > kernel_tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opcore::build_model;
    use crate::resolvent::boundary_value;

    fn tun() -> Tunables {
        Tunables::default()
    }

    fn delta_alpha(v: f64, lambda: f64) -> f64 {
        // Single site: T0 = i v / (2 sin kappa), alpha = b / sqrt(1 + b^2).
        let b = v / (2.0 * (1.0 - lambda * lambda / 4.0).sqrt());
        b / (1.0 + b * b).sqrt()
    }

    #[test]
    fn free_model_alpha_is_zero() {
        let pair = build_model(&ModelSpec::lattice(5, &[])).unwrap();
        let bv = boundary_value(&pair, 0.0, &tun()).unwrap();
        assert_eq!(alpha_derivative(&bv, &pair.j).unwrap().value, 0.0);
        assert_eq!(alpha_smatrix(&bv, &pair.j).unwrap().value, 0.0);
        let f = fredholm_check(&bv, &pair.j, 1e-6).unwrap();
        assert_eq!((f.sigma_min_0, f.sigma_min_1, f.fredholm), (1.0, 1.0, true));
    }

    #[test]
    fn delta_potential_closed_form() {
        let pair = build_model(&ModelSpec::delta(5, 0.5)).unwrap();
        for &lambda in &[-1.0, 0.0, 0.7] {
            let bv = boundary_value(&pair, lambda, &tun()).unwrap();
            let d = alpha_derivative(&bv, &pair.j).unwrap().value;
            let s = alpha_smatrix(&bv, &pair.j).unwrap();
            assert!((d - delta_alpha(0.5, lambda)).abs() < 1e-14, "{d}");
            assert!((d - s.value).abs() < 1e-8);
            assert!(s.diagnostic("unitarity_defect").unwrap() < 1e-10);
        }
    }

    #[test]
    fn weak_potential_is_fredholm() {
        let pair = build_model(&ModelSpec::delta(5, 0.1)).unwrap();
        let bv = boundary_value(&pair, 0.0, &tun()).unwrap();
        let f = fredholm_check(&bv, &pair.j, tun().kernel_tol).unwrap();
        assert!(f.fredholm);
        assert!(alpha_derivative(&bv, &pair.j).unwrap().value < 1.0);
    }

    #[test]
    fn two_site_resonance_flips_fredholm() {
        // I + A0 J = [[1, v/2], [v/2, 1]] at lambda = 0: singular at v = 2.
        let at = |v: f64| {
            let pair = build_model(&ModelSpec::lattice(5, &[(0, v), (1, v)])).unwrap();
            let bv = boundary_value(&pair, 0.0, &tun()).unwrap();
            (
                fredholm_check(&bv, &pair.j, 1e-6).unwrap(),
                alpha_derivative(&bv, &pair.j).unwrap().value,
            )
        };
        let (f, a) = at(2.0);
        assert!(!f.fredholm && f.sigma_min_1 <= 1e-6);
        assert!(a >= 1.0 - 1e-6);
        let (f, a) = at(1.5);
        assert!(f.fredholm && (f.sigma_min_0 - 0.25).abs() < 1e-12);
        assert!(a < 1.0 - 1e-6);
    }

    #[test]
    fn projection_window_free_is_zero() {
        let pair = build_model(&ModelSpec::lattice(200, &[])).unwrap();
        let spectra = PairSpectra::compute(&pair).unwrap();
        let est = alpha_proj_limit(&pair, &spectra, 0.0, &[0.4, 0.3], &tun()).unwrap();
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn schedule_rule_enforced() {
        let pair = build_model(&ModelSpec::delta(100, 0.5)).unwrap();
        let spectra = PairSpectra::compute(&pair).unwrap();
        let r = alpha_proj_limit(&pair, &spectra, 0.0, &[0.4, 0.2], &tun());
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
        let r = alpha_proj_limit(&pair, &spectra, 1.95, &[1.0, 0.5], &tun());
        assert!(matches!(r, Err(Error::BandEdge { .. })));
    }

    #[test]
    fn projection_limit_moderate_truncation() {
        let pair = build_model(&ModelSpec::delta(1000, 0.5)).unwrap();
        let spectra = PairSpectra::compute(&pair).unwrap();
        let est = alpha_proj_limit(&pair, &spectra, 0.0, &[0.4, 0.2, 0.1, 0.05], &tun()).unwrap();
        let exact = delta_alpha(0.5, 0.0);
        assert!((est.value - exact).abs() < 2e-2, "{} vs {exact}", est.value);
    }

    #[test]
    fn ladder_free_model_is_zero() {
        let spec = ModelSpec::lattice(10, &[]);
        let est = d_spectrum_ladder(&spec, 0.0, &[10, 20, 40], &tun()).unwrap();
        for c in &est.eigenvalue_clouds {
            assert!(c.eigenvalues.iter().all(|x| x.abs() < 1e-12));
        }
        assert!(d_spectrum_ladder(&spec, 0.0, &[10, 20], &tun()).is_err());
    }

    #[test]
    fn ladder_below_spectrum_is_empty() {
        let spec = ModelSpec::delta(10, 0.5);
        let est = d_spectrum_ladder(&spec, -3.0, &[50, 100, 200], &tun()).unwrap();
        for c in &est.eigenvalue_clouds {
            assert!(c.eigenvalues.iter().all(|x| x.abs() <= 1e-8));
            assert_eq!(c.count_above_tenth, 0);
        }
    }

    #[test]
    fn ladder_cloud_is_symmetric_and_bounded() {
        let spec = ModelSpec::delta(10, 1.0);
        let est = d_spectrum_ladder(&spec, 0.0, &[100, 200, 400], &tun()).unwrap();
        for c in &est.eigenvalue_clouds {
            assert!(c.pair_symmetry_defect <= 1e-6, "{}", c.pair_symmetry_defect);
            assert!(c.d_squared_residual.unwrap() <= 1e-9);
        }
        assert!(est.max_cloud_magnitude() <= 1.0 + 1e-8);
        // The index of the pair shows up as an isolated eigenvalue at -1.
        assert!(est.plus_one_count + est.minus_one_count <= 1);
        let a = est.alpha_empirical_excluding_unit;
        assert!(a > 0.2 && a < delta_alpha(1.0, 0.0) + 1e-9, "{a}");
    }

    #[test]
    fn fill_distance_and_filter() {
        let pts = [-0.5, -0.1, 0.0, 0.2, 0.5, 0.9];
        assert!((fill_distance(&pts, 0.5) - 0.4).abs() < 1e-15);
        let c1 = Cloud::new(1, vec![0.0, 0.5], None);
        let c2 = Cloud::new(2, vec![0.0, 0.52, 0.9], None);
        assert_eq!(filter_transients(&[c1, c2], 0.1), vec![0.0, 0.52]);
    }
}
