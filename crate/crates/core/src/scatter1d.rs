//! Scattering matrix of a compactly supported lattice potential, by transfer
//! matrices and by the stationary formula.
//!
//! A plane wave `exp(-i kappa x)` with `lambda = 2 cos kappa` travels to the
//! right. `S = [[t, r_minus], [r_plus, t]]` maps incoming amplitudes (from the
//! left, from the right) to outgoing ones (to the right, to the left).

use ndarray::{array, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::alpha::{alpha_derivative, stilde};
use crate::error::{Error, Result};
use crate::linalg::{self, serde_matrix, CMatrix};
use crate::opcore::{ModelKind, OperatorPair};
use crate::resolvent::{boundary_value_closed_form, BoundaryRoute, BoundaryValue};
use crate::tolerances::{self, Tunables};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatticeScattering {
    pub lambda: f64,
    pub kappa: f64,
    #[serde(with = "crate::pcfunc::complex_pair")]
    pub t: Complex64,
    #[serde(with = "crate::pcfunc::complex_pair")]
    pub r_plus: Complex64,
    #[serde(with = "crate::pcfunc::complex_pair")]
    pub r_minus: Complex64,
    #[serde(
        serialize_with = "serde_matrix::complex_rows",
        deserialize_with = "serde_matrix::from_complex_rows"
    )]
    pub s: CMatrix,
    /// `|| S^* S - I ||`.
    pub unitarity_defect: f64,
    /// Difference between the transmission amplitudes from the two sides.
    pub reciprocity_defect: f64,
}

fn wavenumber(lambda: f64, tunables: &Tunables) -> Result<f64> {
    if !(lambda.abs() <= 2.0 - tunables.band_margin) {
        return Err(Error::BandEdge {
            lambda,
            margin: tunables.band_margin,
        });
    }
    Ok((lambda / 2.0).acos())
}

fn plane(kappa: f64, x: i64, sign: f64) -> Complex64 {
    Complex64::from_polar(1.0, sign * kappa * x as f64)
}

/// Coefficients `(a, b)` of `u(x) = a exp(s i kappa x) + b exp(-s i kappa x)`
/// from the values at two consecutive free sites `x1`, `x1 + 1`.
fn fit(kappa: f64, x1: i64, u1: Complex64, u2: Complex64, s: f64) -> (Complex64, Complex64) {
    let (p1, m1) = (plane(kappa, x1, s), plane(kappa, x1, -s));
    let (p2, m2) = (plane(kappa, x1 + 1, s), plane(kappa, x1 + 1, -s));
    let det = p1 * m2 - m1 * p2;
    ((u1 * m2 - m1 * u2) / det, (p1 * u2 - u1 * p2) / det)
}

pub fn smatrix_transfer(
    potential: &[(i64, f64)],
    lambda: f64,
    tunables: &Tunables,
) -> Result<LatticeScattering> {
    let kappa = wavenumber(lambda, tunables)?;
    let v: BTreeMap<i64, f64> = potential
        .iter()
        .copied()
        .filter(|&(_, x)| x != 0.0)
        .collect();
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let (t, t_right, r_plus, r_minus) = match (v.keys().next(), v.keys().next_back()) {
        (Some(&lo), Some(&hi)) => {
            let pot = |x: i64| v.get(&x).copied().unwrap_or(0.0);
            // Incident from the left: transmitted wave t exp(-i kappa x) beyond hi.
            let (mut here, mut right) = (plane(kappa, hi, -1.0), plane(kappa, hi + 1, -1.0));
            for x in (lo..=hi).rev() {
                let left = here * (lambda - pot(x)) - right;
                right = here;
                here = left;
            }
            // `here` = u(lo - 1), `right` = u(lo).
            let (a, b) = fit(kappa, lo - 1, here, right, -1.0);
            let (t, r_plus) = (one / a, b / a);

            // Incident from the right: transmitted wave exp(i kappa x) below lo.
            let (mut left, mut here) = (plane(kappa, lo, 1.0), plane(kappa, lo - 1, 1.0));
            std::mem::swap(&mut left, &mut here);
            // `left` = u(lo - 1), `here` = u(lo).
            for x in lo..=hi {
                let next = here * (lambda - pot(x)) - left;
                left = here;
                here = next;
            }
            // `left` = u(hi), `here` = u(hi + 1).
            let (a, b) = fit(kappa, hi, left, here, 1.0);
            (t, one / a, r_plus, b / a)
        }
        _ => (one, one, zero, zero),
    };
    let s = array![[t, r_minus], [r_plus, t]];
    let unitarity_defect =
        linalg::op_norm_c(&(linalg::adjoint(&s.view()).dot(&s) - linalg::identity_c(2)).view())?;
    if unitarity_defect > tolerances::UNITARITY_ASSERT {
        return Err(Error::IdentityViolated {
            name: "transfer-matrix S unitary",
            residual: unitarity_defect,
            tol: tolerances::UNITARITY_ASSERT,
        });
    }
    Ok(LatticeScattering {
        lambda,
        kappa,
        t,
        r_plus,
        r_minus,
        s,
        unitarity_defect,
        reciprocity_defect: (t - t_right).norm(),
    })
}

/// Stationary scattering matrix with the `pi Z^* Z = B0` residual.
#[derive(Debug, Clone)]
pub struct StationaryS {
    pub s: CMatrix,
    pub z: CMatrix,
    pub factor_residual: f64,
}

pub fn smatrix_stationary(pair: &OperatorPair, bv: &BoundaryValue) -> Result<StationaryS> {
    if pair.spec.kind != ModelKind::Lattice1d {
        return Err(Error::UnsupportedKind(format!(
            "{:?}: stationary formula is built from lattice plane waves",
            pair.spec.kind
        )));
    }
    if bv.route != BoundaryRoute::ClosedForm {
        return Err(Error::InvalidArgument(
            "stationary S needs closed-form boundary values".into(),
        ));
    }
    let sites = pair
        .support
        .as_ref()
        .expect("lattice1d has a diagonal potential");
    let k = sites.len();
    let kappa = (bv.lambda / 2.0).acos();
    let norm = (4.0 * PI * kappa.sin()).sqrt().recip();
    let z = Array2::from_shape_fn((2, k), |(row, a)| {
        let (r, v) = sites[a];
        let sign = if row == 0 { -1.0 } else { 1.0 };
        plane(kappa, pair.site(r), sign) * (norm * v.abs().sqrt())
    });
    let zh = linalg::adjoint(&z.view());
    let check = zh.dot(&z).mapv(|x| x * PI) - linalg::to_complex(&bv.b0.view());
    let factor_residual = if k == 0 {
        0.0
    } else {
        linalg::op_norm_c(&check.view())?
    };
    if factor_residual > tolerances::STATIONARY_FACTOR {
        return Err(Error::IdentityViolated {
            name: "pi Z^* Z = B0",
            residual: factor_residual,
            tol: tolerances::STATIONARY_FACTOR,
        });
    }
    let j = linalg::to_complex(&pair.j.view());
    let inner = &j - &j.dot(&bv.t).dot(&j);
    let s = linalg::identity_c(2)
        - z.dot(&inner)
            .dot(&zh)
            .mapv(|x| x * Complex64::new(0.0, 2.0 * PI));
    Ok(StationaryS {
        s,
        z,
        factor_residual,
    })
}

/// Eigenvalues of a 2x2 complex matrix.
pub fn eigenvalues_2x2(m: &CMatrix) -> [Complex64; 2] {
    let tr = m[[0, 0]] + m[[1, 1]];
    let det = m[[0, 0]] * m[[1, 1]] - m[[0, 1]] * m[[1, 0]];
    let disc = (tr * tr - det * 4.0).sqrt();
    [(tr + disc) / 2.0, (tr - disc) / 2.0]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScatterRow {
    pub lambda: f64,
    pub abs_t: f64,
    pub abs_r: f64,
    pub norm_s_minus_i: f64,
    pub norm_stilde_minus_i: f64,
    pub alpha_derivative: f64,
    /// `| ||S - I||/2 - alpha |`.
    pub bridge_defect: f64,
}

/// One sweep point: transfer-matrix `S`, `S~` from closed-form boundary
/// values, and `alpha` by the derivative route.
pub fn scatter_point(pair: &OperatorPair, lambda: f64, tunables: &Tunables) -> Result<ScatterRow> {
    let sc = smatrix_transfer(&pair.spec.potential, lambda, tunables)?;
    let bv = boundary_value_closed_form(pair, lambda, tunables)?;
    let (st, _) = stilde(&bv, &pair.j)?;
    let norm_stilde = if st.nrows() == 0 {
        0.0
    } else {
        linalg::op_norm_c(&(&st - &linalg::identity_c(st.nrows())).view())?
    };
    let norm_s_minus_i = linalg::op_norm_c(&(&sc.s - &linalg::identity_c(2)).view())?;
    let alpha = alpha_derivative(&bv, &pair.j)?.value;
    Ok(ScatterRow {
        lambda,
        abs_t: sc.t.norm(),
        abs_r: sc.r_plus.norm(),
        norm_s_minus_i,
        norm_stilde_minus_i: norm_stilde,
        alpha_derivative: alpha,
        bridge_defect: (0.5 * norm_s_minus_i - alpha).abs(),
    })
}

/// `max ||S(l_{i+1}) - S(l_i)|| / (l_{i+1} - l_i)` on a uniform grid.
pub fn lipschitz_estimate(
    potential: &[(i64, f64)],
    lo: f64,
    hi: f64,
    points: usize,
    tunables: &Tunables,
) -> Result<f64> {
    if points < 2 || !(lo < hi) {
        return Err(Error::InvalidArgument(
            "need lo < hi and at least two points".into(),
        ));
    }
    let h = (hi - lo) / (points - 1) as f64;
    let mats = (0..points)
        .map(|i| smatrix_transfer(potential, lo + h * i as f64, tunables).map(|s| s.s))
        .collect::<Result<Vec<_>>>()?;
    let mut worst = 0.0f64;
    for w in mats.windows(2) {
        worst = worst.max(linalg::op_norm_c(&(&w[1] - &w[0]).view())? / h);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alpha::alpha_smatrix;
    use crate::opcore::{build_model, ModelSpec};

    fn tun() -> Tunables {
        Tunables::default()
    }

    #[test]
    fn free_scattering_is_identity() {
        let sc = smatrix_transfer(&[], 0.3, &tun()).unwrap();
        assert_eq!(sc.s, linalg::identity_c(2));
        assert!(smatrix_transfer(&[(0, 1.0)], 1.95, &tun()).is_err());
    }

    #[test]
    fn delta_transmission_closed_form() {
        // t = 2i sin k / (2i sin k - v) for a single site.
        let (v, lambda) = (0.5, 0.7);
        let sc = smatrix_transfer(&[(0, v)], lambda, &tun()).unwrap();
        let s = Complex64::new(0.0, 2.0 * sc.kappa.sin());
        let t = s / (s - v);
        assert!((sc.t - t).norm() < 1e-14, "{} vs {t}", sc.t);
        assert!(sc.reciprocity_defect < 1e-13);
    }

    #[test]
    fn unitarity_identities() {
        let pot = [(-2, 0.3), (0, -1.2), (1, 0.8), (4, 0.5)];
        for i in 0..50 {
            let lambda = -1.8 + 3.6 * i as f64 / 49.0;
            let sc = smatrix_transfer(&pot, lambda, &tun()).unwrap();
            assert!(sc.unitarity_defect < 1e-10);
            assert!((sc.t.norm_sqr() + sc.r_plus.norm_sqr() - 1.0).abs() < 1e-10);
            assert!((sc.r_plus * sc.t.conj() + sc.t * sc.r_minus.conj()).norm() < 1e-10);
            for e in eigenvalues_2x2(&sc.s) {
                assert!((e.norm() - 1.0).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn bridge_to_alpha() {
        let pair = build_model(&ModelSpec::delta(5, 0.5)).unwrap();
        let row = scatter_point(&pair, 0.0, &tun()).unwrap();
        assert!(row.bridge_defect < 1e-6);
        assert!((row.norm_s_minus_i - row.norm_stilde_minus_i).abs() < 1e-8);
    }

    #[test]
    fn stationary_matches_transfer() {
        let pot = [(0, 0.5), (2, -0.4), (3, 0.9)];
        let pair = build_model(&ModelSpec::lattice(6, &pot)).unwrap();
        for &lambda in &[-1.0, 0.0, 0.7, 1.6] {
            let bv = boundary_value_closed_form(&pair, lambda, &tun()).unwrap();
            let st = smatrix_stationary(&pair, &bv).unwrap();
            assert!(st.factor_residual < 1e-12);
            let tr = smatrix_transfer(&pot, lambda, &tun()).unwrap();
            let eye = linalg::identity_c(2);
            let a = linalg::singular_values_c(&(&st.s - &eye).view()).unwrap();
            let b = linalg::singular_values_c(&(&tr.s - &eye).view()).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-8, "{lambda}: {a:?} vs {b:?}");
            }
            let half = alpha_smatrix(&bv, &pair.j).unwrap().value;
            assert!((a[0] - 2.0 * half).abs() < 1e-8);
        }
    }

    #[test]
    fn stationary_free_is_identity() {
        let pair = build_model(&ModelSpec::lattice(3, &[])).unwrap();
        let bv = boundary_value_closed_form(&pair, 0.2, &tun()).unwrap();
        assert_eq!(
            smatrix_stationary(&pair, &bv).unwrap().s,
            linalg::identity_c(2)
        );
    }

    #[test]
    fn continuity() {
        let l1 = lipschitz_estimate(&[(0, 0.5)], -1.5, 1.5, 61, &tun()).unwrap();
        let l2 = lipschitz_estimate(&[(0, 0.5)], -1.5, 1.5, 121, &tun()).unwrap();
        assert!(l1.is_finite() && l1 > 0.0);
        assert!((l1 - l2).abs() < 0.1 * l1);
    }
}
