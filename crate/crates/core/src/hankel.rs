//! Nyström discretizations of Hankel integral operators on the half-line and
//! the semigroup maps `L0`, `L` that factor `E(-1,0) E0(0,1)`.
//!
//! All quadratures use the geometric grid `t_j = T r^{-(n-j)+1/2}`,
//! `j = 1..n`, `r = 1.15`, with the log-midpoint weights `ln(r) t_j`. The
//! upper cutoff `T` is explicit: kernels decaying like `1/t` lose an
//! `O(1/T)` tail.

use ndarray::{s, Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{self, serde_matrix};
use crate::opcore::{OperatorPair, PairSpectra};
use crate::tolerances::{self, GEOMETRIC_RATIO};

const MATRIX_SYMMETRY: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HankelDiscretization {
    pub n: usize,
    pub cutoff: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    #[serde(
        serialize_with = "serde_matrix::rows",
        deserialize_with = "serde_matrix::from_rows"
    )]
    pub matrix: Array2<f64>,
}

impl HankelDiscretization {
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        linalg::eigvals_symmetric(&self.matrix.view())
    }
}

fn check_grid(n: usize, cutoff: f64) -> Result<()> {
    if n < 8 || !(cutoff >= 10.0) || !cutoff.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "quadrature needs n >= 8 and T >= 10 (got n = {n}, T = {cutoff})"
        )));
    }
    Ok(())
}

/// Nodes and weights of the geometric rule on `(0, T)`.
pub fn geometric_grid(n: usize, cutoff: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    check_grid(n, cutoff)?;
    let h = GEOMETRIC_RATIO.ln();
    let nodes: Vec<f64> = (1..=n)
        .map(|j| cutoff * (-h * ((n - j) as f64 + 0.5)).exp())
        .collect();
    let weights = nodes.iter().map(|t| h * t).collect();
    Ok((nodes, weights))
}

/// `(1 - exp(-x))/x`, continuous at 0.
fn damped_reciprocal(x: f64) -> f64 {
    if x < 1e-8 {
        1.0 - 0.5 * x
    } else {
        -(-x).exp_m1() / x
    }
}

/// Block Nyström matrix `sqrt(w_i w_j) K(t_i + t_j)` for a symmetric
/// `p x p` kernel.
fn nystrom<K>(nodes: &[f64], weights: &[f64], p: usize, mut kernel: K) -> Array2<f64>
where
    K: FnMut(f64) -> Array2<f64>,
{
    let n = nodes.len();
    let mut m = Array2::zeros((n * p, n * p));
    for i in 0..n {
        for j in 0..=i {
            let block = kernel(nodes[i] + nodes[j]) * (weights[i] * weights[j]).sqrt();
            m.slice_mut(s![i * p..(i + 1) * p, j * p..(j + 1) * p])
                .assign(&block);
            if i != j {
                m.slice_mut(s![j * p..(j + 1) * p, i * p..(i + 1) * p])
                    .assign(&block.t());
            }
        }
    }
    m
}

fn discretization<K>(n: usize, cutoff: f64, p: usize, kernel: K) -> Result<HankelDiscretization>
where
    K: FnMut(f64) -> Array2<f64>,
{
    let (nodes, weights) = geometric_grid(n, cutoff)?;
    let matrix = nystrom(&nodes, &weights, p, kernel);
    let defect = linalg::symmetry_defect(&matrix.view());
    if defect > MATRIX_SYMMETRY {
        return Err(Error::NotSymmetric {
            defect,
            tol: MATRIX_SYMMETRY,
        });
    }
    Ok(HankelDiscretization {
        n,
        cutoff,
        nodes,
        weights,
        matrix,
    })
}

/// Nyström matrix of `Gamma(t, s) = (1 - exp(-t-s))/(t+s)`.
pub fn gamma_matrix(n: usize, cutoff: f64) -> Result<HankelDiscretization> {
    discretization(n, cutoff, 1, |x| {
        Array2::from_elem((1, 1), damped_reciprocal(x))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HankelBound {
    pub norm: f64,
    /// `pi C`.
    pub bound: f64,
    pub bound_ok: bool,
    /// Largest `t ||K(t)||` seen on the grid.
    pub worst_scaled_kernel: f64,
}

/// Discretized norm of the Hankel operator with kernel `K`, after checking
/// `||K(t)|| <= C/t` at every quadrature argument `t_i + t_j`.
pub fn hankel_bound_check<K>(kernel: K, c: f64, n: usize, cutoff: f64) -> Result<HankelBound>
where
    K: Fn(f64) -> Array2<f64>,
{
    check_grid(n, cutoff)?;
    let mut failure: Option<Error> = None;
    let mut worst = 0.0f64;
    let p = kernel(1.0).nrows();
    let disc = discretization(n, cutoff, p, |t| {
        let k = kernel(t);
        let scaled = t * linalg::op_norm(&k.view()).unwrap_or(f64::INFINITY);
        worst = worst.max(scaled);
        if scaled > c * (1.0 + 1e-12) && failure.is_none() {
            failure = Some(Error::HankelHypothesis {
                t,
                value: scaled,
                bound: c,
            });
        }
        k
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let norm = linalg::op_norm(&disc.matrix.view())?;
    let bound = PI * c;
    Ok(HankelBound {
        norm,
        bound,
        bound_ok: norm <= bound + tolerances::CARLEMAN_SLACK,
        worst_scaled_kernel: worst,
    })
}

/// Eigenvalues of `Gamma^2 (x) Q`, ascending.
pub fn gamma_tensor_spectrum(q: &ArrayView2<f64>, n: usize, cutoff: f64) -> Result<Vec<f64>> {
    let q_eigs = linalg::eigvals_symmetric(q)?;
    if let Some(&lo) = q_eigs.first() {
        if lo < -tolerances::PSD {
            return Err(Error::NotPositiveSemidefinite { min_eig: lo });
        }
    }
    let q_norm = q_eigs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let gamma = gamma_matrix(n, cutoff)?.eigenvalues()?;
    let mut out: Vec<f64> = gamma
        .iter()
        .flat_map(|g| q_eigs.iter().map(move |e| g * g * e.max(0.0)))
        .collect();
    out.sort_by(f64::total_cmp);
    let top = out.last().copied().unwrap_or(0.0);
    let limit = PI * PI * q_norm + tolerances::CARLEMAN_SLACK * (1.0 + q_norm);
    if top > limit {
        return Err(Error::InvariantViolated {
            name: "max eig(Gamma^2 (x) Q) <= pi^2 ||Q||",
            detail: format!("{top} > {limit}"),
        });
    }
    Ok(out)
}

/// `L0`, `L` in eigen-coordinates of the spectral subspaces `E0(0,1)` and
/// `E(-1,0)` (after translating `lambda` to 0). Column `i k + a` belongs to
/// quadrature node `i` and channel `a`.
#[derive(Debug, Clone)]
pub struct LOperators {
    pub lambda: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Orthonormal basis of `ran E0(lambda, lambda+1)`, as columns.
    pub basis_h0: Array2<f64>,
    /// Orthonormal basis of `ran E(lambda-1, lambda)`.
    pub basis_h: Array2<f64>,
    /// `L0` in the `basis_h0` coordinates (rows).
    pub l0: Array2<f64>,
    /// `L` in the `basis_h` coordinates.
    pub l: Array2<f64>,
    pub residual: f64,
    /// Residual with `2n` nodes.
    pub residual_refined: f64,
}

impl LOperators {
    /// `L0` as a map into the full truncated space.
    pub fn l0_dense(&self) -> Array2<f64> {
        self.basis_h0.dot(&self.l0)
    }

    pub fn l_dense(&self) -> Array2<f64> {
        self.basis_h.dot(&self.l)
    }
}

struct Subspace {
    shifted: Vec<f64>,
    basis: Array2<f64>,
    /// `G` restricted to the subspace, `k x p`.
    g: Array2<f64>,
}

fn subspace(
    pair: &OperatorPair,
    dec: &crate::opcore::SpectralDecomposition,
    lambda: f64,
    lo: f64,
    hi: f64,
) -> Subspace {
    let range = dec.open_window(lambda + lo, lambda + hi);
    let basis = dec.eigenvectors.slice(s![.., range.clone()]).to_owned();
    let shifted = dec.eigenvalues[range].iter().map(|x| x - lambda).collect();
    let g = pair.g.dot(&basis);
    Subspace { shifted, basis, g }
}

/// `[sqrt(w_i) exp(sign t_i e_b) g_{ab}]` with rows `b` and columns `i k + a`.
fn semigroup_map(sub: &Subspace, nodes: &[f64], weights: &[f64], sign: f64) -> Array2<f64> {
    let k = sub.g.nrows();
    let p = sub.shifted.len();
    let mut out = Array2::zeros((p, nodes.len() * k));
    for (i, (&t, &w)) in nodes.iter().zip(weights).enumerate() {
        let sw = w.sqrt();
        for b in 0..p {
            let f = sw * (sign * t * sub.shifted[b]).exp();
            for a in 0..k {
                out[[b, i * k + a]] = f * sub.g[[a, b]];
            }
        }
    }
    out
}

/// `|| E(-1,0) E0(0,1) + L J L0^* ||` in eigen-coordinates.
fn b16_residual(
    overlap: &Array2<f64>,
    h: &Subspace,
    h0: &Subspace,
    signs: &[f64],
    nodes: &[f64],
    weights: &[f64],
) -> Result<f64> {
    // (L J L0^*)_{cb} = [(G X)^T J (G Y)]_{cb} * sum_i w_i exp(-t_i (nu_b - mu_c))
    let jgy = &h0.g * &Array1::from(signs.to_vec()).insert_axis(ndarray::Axis(1));
    let coupling = h.g.t().dot(&jgy);
    let mut r = overlap.clone();
    for ((c, b), x) in r.indexed_iter_mut() {
        let gap = h0.shifted[b] - h.shifted[c];
        let q: f64 = nodes
            .iter()
            .zip(weights)
            .map(|(t, w)| w * (-t * gap).exp())
            .sum();
        *x += coupling[[c, b]] * q;
    }
    if r.is_empty() {
        return Ok(0.0);
    }
    linalg::op_norm(&r.view())
}

pub fn build_l_operators(
    pair: &OperatorPair,
    spectra: &PairSpectra,
    lambda: f64,
    n: usize,
    cutoff: f64,
) -> Result<LOperators> {
    let (nodes, weights) = geometric_grid(n, cutoff)?;
    let (fine_nodes, fine_weights) = geometric_grid(2 * n, cutoff)?;
    let h0 = subspace(pair, &spectra.h0, lambda, 0.0, 1.0);
    let h = subspace(pair, &spectra.h, lambda, -1.0, 0.0);
    let signs = pair.signs();
    let overlap = h.basis.t().dot(&h0.basis);
    let residual = b16_residual(&overlap, &h, &h0, &signs, &nodes, &weights)?;
    let residual_refined = b16_residual(&overlap, &h, &h0, &signs, &fine_nodes, &fine_weights)?;
    if residual_refined > residual + 1e-12 {
        return Err(Error::QuadratureNotConvergent {
            n,
            coarse: residual,
            n_fine: 2 * n,
            fine: residual_refined,
        });
    }
    let l0 = semigroup_map(&h0, &nodes, &weights, -1.0);
    let l = semigroup_map(&h, &nodes, &weights, 1.0);
    Ok(LOperators {
        lambda,
        nodes,
        weights,
        basis_h0: h0.basis,
        basis_h: h.basis,
        l0,
        l,
        residual,
        residual_refined,
    })
}

/// `Gamma (x) F` on the grid of `ops`, columns ordered as in `LOperators`.
fn gamma_tensor(ops: &LOperators, f: &ArrayView2<f64>) -> Array2<f64> {
    let k = f.nrows();
    nystrom(&ops.nodes, &ops.weights, k, |x| {
        f.to_owned() * damped_reciprocal(x)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeflationReport {
    pub leading: f64,
    /// Top singular value after removing `deflated` leading singular pairs.
    pub deflated_top: f64,
    pub deflated: usize,
    pub ratio: f64,
}

/// Compactness surrogate for `L0^* L0 - Gamma (x) F0'(lambda)`: the ratio of
/// the `(deflated+1)`-th to the first singular value.
pub fn deflation_experiment(
    ops: &LOperators,
    f0p: &ArrayView2<f64>,
    deflated: usize,
) -> Result<DeflationReport> {
    let diff = ops.l0.t().dot(&ops.l0) - gamma_tensor(ops, f0p);
    let sv = linalg::singular_values(&diff.view())?;
    let leading = sv.first().copied().unwrap_or(0.0);
    let deflated_top = sv.get(deflated).copied().unwrap_or(0.0);
    Ok(DeflationReport {
        leading,
        deflated_top,
        deflated,
        ratio: if leading > 0.0 {
            deflated_top / leading
        } else {
            0.0
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelDecay {
    pub t: Vec<f64>,
    /// `t ||G E0(0,1) exp(-t H0) E0(0,1) G^* - F0'(0) (1 - exp(-t))/t||`.
    pub scaled_norm: Vec<f64>,
    /// Whether the scaled norm at `T` is below its value at `T/10`. A trend
    /// on the available grid, not a statement about the limit.
    pub decreasing_last_decade: bool,
}

pub fn kernel_decay_profile(
    pair: &OperatorPair,
    spectra: &PairSpectra,
    lambda: f64,
    f0p: &ArrayView2<f64>,
    n: usize,
    cutoff: f64,
) -> Result<KernelDecay> {
    let (nodes, _) = geometric_grid(n, cutoff)?;
    let h0 = subspace(pair, &spectra.h0, lambda, 0.0, 1.0);
    let mut scaled_norm = Vec::with_capacity(n);
    for &t in &nodes {
        let decay = Array1::from_iter(h0.shifted.iter().map(|nu| (-t * nu).exp()));
        let k = (&h0.g * &decay).dot(&h0.g.t()) - f0p.to_owned() * damped_reciprocal(t);
        scaled_norm.push(t * linalg::op_norm(&k.view())?);
    }
    let first = nodes.partition_point(|&t| t < cutoff / 10.0).min(n - 1);
    Ok(KernelDecay {
        decreasing_last_decade: scaled_norm[n - 1] < scaled_norm[first],
        t: nodes,
        scaled_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opcore::{build_model, ModelSpec};
    use crate::resolvent::boundary_value_closed_form;
    use crate::tolerances::Tunables;
    use ndarray::array;

    fn scalar(f: impl Fn(f64) -> f64) -> impl Fn(f64) -> Array2<f64> {
        move |t| Array2::from_elem((1, 1), f(t))
    }

    #[test]
    fn grid_shape() {
        let (t, w) = geometric_grid(20, 10.0).unwrap();
        assert!(t.windows(2).all(|p| p[0] < p[1]));
        assert!(w.iter().all(|&x| x > 0.0));
        assert!((t[19] - 10.0 / GEOMETRIC_RATIO.sqrt()).abs() < 1e-12);
        assert!(geometric_grid(4, 10.0).is_err());
        assert!(geometric_grid(20, 5.0).is_err());
    }

    #[test]
    fn gamma_spectrum_inside_carleman_bound() {
        for &(n, t) in &[(40, 10.0), (120, 50.0), (200, 1e4)] {
            let g = gamma_matrix(n, t).unwrap();
            assert!(linalg::symmetry_defect(&g.matrix.view()) <= 1e-12);
            let e = g.eigenvalues().unwrap();
            assert!(e[0] >= -1e-8, "{}", e[0]);
            assert!(*e.last().unwrap() <= PI + 1e-6);
        }
    }

    #[test]
    fn gamma_norm_grows_with_cutoff() {
        let a = *gamma_matrix(200, 50.0)
            .unwrap()
            .eigenvalues()
            .unwrap()
            .last()
            .unwrap();
        let b = *gamma_matrix(200, 1e6)
            .unwrap()
            .eigenvalues()
            .unwrap()
            .last()
            .unwrap();
        assert!(a < b && b < PI);
    }

    #[test]
    fn bound_examples() {
        let exp = hankel_bound_check(scalar(|t| (-t).exp()), 1.0, 80, 20.0).unwrap();
        assert!(exp.bound_ok && exp.norm <= PI);
        let g = hankel_bound_check(scalar(damped_reciprocal), 1.0, 120, 100.0).unwrap();
        assert!(g.bound_ok && g.norm < PI);
        let g2 =
            hankel_bound_check(scalar(|t| 2.0 * damped_reciprocal(t)), 2.0, 120, 100.0).unwrap();
        assert!((g2.norm - 2.0 * g.norm).abs() <= 1e-12 * g2.norm);
        assert!(matches!(
            hankel_bound_check(scalar(|t| 2.0 / t), 1.0, 20, 10.0),
            Err(Error::HankelHypothesis { .. })
        ));
    }

    #[test]
    fn operator_valued_kernel() {
        let f = array![[1.0, 0.0], [0.0, 0.25]];
        let b = hankel_bound_check(|t| f.clone() * damped_reciprocal(t), 1.0, 60, 20.0).unwrap();
        let g = hankel_bound_check(scalar(damped_reciprocal), 1.0, 60, 20.0).unwrap();
        assert!((b.norm - g.norm).abs() < 1e-12);
    }

    #[test]
    fn tensor_spectrum() {
        let zero = Array2::<f64>::zeros((2, 2));
        assert!(gamma_tensor_spectrum(&zero.view(), 20, 10.0)
            .unwrap()
            .iter()
            .all(|&x| x == 0.0));
        let one = Array2::<f64>::eye(1);
        let s = gamma_tensor_spectrum(&one.view(), 60, 50.0).unwrap();
        let g = gamma_matrix(60, 50.0).unwrap().eigenvalues().unwrap();
        assert!((s.last().unwrap() - g.last().unwrap().powi(2)).abs() < 1e-12);
        let bad = array![[1.0, 0.0], [0.0, -0.5]];
        assert!(gamma_tensor_spectrum(&bad.view(), 20, 10.0).is_err());
    }

    #[test]
    fn free_model_b16_is_trivial() {
        let pair = build_model(&ModelSpec::lattice(40, &[])).unwrap();
        let spectra = PairSpectra::compute(&pair).unwrap();
        let ops = build_l_operators(&pair, &spectra, 0.0, 40, 20.0).unwrap();
        assert!(ops.residual < 1e-12);
        assert_eq!(ops.l0.ncols(), 0);
    }

    #[test]
    fn b16_residual_against_direct_products() {
        let pair = build_model(&ModelSpec::delta(60, 0.5)).unwrap();
        let spectra = PairSpectra::compute(&pair).unwrap();
        let ops = build_l_operators(&pair, &spectra, 0.0, 60, 20.0).unwrap();
        // Direct: projections and explicit L J L0^*.
        let lhs = ops
            .basis_h
            .dot(&ops.basis_h.t())
            .dot(&ops.basis_h0)
            .dot(&ops.basis_h0.t());
        let signs = pair.signs();
        let jl0t = {
            let mut m = ops.l0_dense().t().to_owned();
            let k = pair.k();
            for (row, mut r) in m.rows_mut().into_iter().enumerate() {
                r *= signs[row % k];
            }
            m
        };
        let direct = lhs + ops.l_dense().dot(&jl0t);
        let r = linalg::op_norm(&direct.view()).unwrap();
        assert!((r - ops.residual).abs() < 1e-10, "{r} vs {}", ops.residual);
        assert!(ops.residual < 0.5);
        assert!(ops.residual_refined <= ops.residual + 1e-12);
    }

    #[test]
    fn deflation_and_decay_run() {
        let pair = build_model(&ModelSpec::delta(200, 0.5)).unwrap();
        let spectra = PairSpectra::compute(&pair).unwrap();
        let bv = boundary_value_closed_form(&pair, 0.0, &Tunables::default()).unwrap();
        let ops = build_l_operators(&pair, &spectra, 0.0, 60, 20.0).unwrap();
        let d = deflation_experiment(&ops, &bv.f0p.view(), 20).unwrap();
        assert!(d.ratio <= 1.0 && d.leading > 0.0);
        let k = kernel_decay_profile(&pair, &spectra, 0.0, &bv.f0p.view(), 60, 20.0).unwrap();
        assert_eq!(k.t.len(), 60);
        assert!(k.scaled_norm.iter().all(|x| x.is_finite()));
    }
}
