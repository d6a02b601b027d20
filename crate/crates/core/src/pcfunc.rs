//! Piecewise-continuous symbols, their predicted essential spectra, and
//! empirical spectra of `phi(H) - phi(H0)` on truncation ladders.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::alpha::{check_ladder, filter_transients, Cloud};
use crate::error::{Error, Result};
use crate::linalg;
use crate::opcore::{build_model, ModelSpec, PairSpectra, SymbolDifference};
use crate::tolerances::{self, Tunables};

/// Serde adapter for a complex number written as `[re, im]`.
pub mod complex_pair {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(z: &Complex64, s: S) -> Result<S::Ok, S::Error> {
        [z.re, z.im].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Complex64, D::Error> {
        let [re, im] = <[f64; 2]>::deserialize(d)?;
        Ok(Complex64::new(re, im))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Jump {
    pub lambda: f64,
    #[serde(with = "complex_pair")]
    pub left: Complex64,
    #[serde(with = "complex_pair")]
    pub right: Complex64,
}

impl Jump {
    pub fn real(lambda: f64, left: f64, right: f64) -> Self {
        Self {
            lambda,
            left: Complex64::new(left, 0.0),
            right: Complex64::new(right, 0.0),
        }
    }

    /// `kappa_lambda(phi) = phi(lambda + 0) - phi(lambda - 0)`.
    pub fn kappa(&self) -> Complex64 {
        self.right - self.left
    }
}

/// Continuous part of a symbol.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum Background {
    #[default]
    Zero,
    GaussianBump {
        center: f64,
        width: f64,
        amplitude: f64,
    },
    /// `amplitude * (1/2 + arctan((x - center)/width)/pi)`.
    ArctanStepSmoothed {
        center: f64,
        width: f64,
        amplitude: f64,
    },
}

impl Background {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Self::Zero => 0.0,
            Self::GaussianBump {
                center,
                width,
                amplitude,
            } => {
                let u = (x - center) / width;
                amplitude * (-0.5 * u * u).exp()
            }
            Self::ArctanStepSmoothed {
                center,
                width,
                amplitude,
            } => amplitude * (0.5 + ((x - center) / width).atan() / std::f64::consts::PI),
        }
    }

    /// Supremum of `|background|` on the real line.
    pub fn sup_norm(&self) -> f64 {
        match *self {
            Self::Zero => 0.0,
            Self::GaussianBump { amplitude, .. } | Self::ArctanStepSmoothed { amplitude, .. } => {
                amplitude.abs()
            }
        }
    }

    fn scaled(&self, c: f64) -> Self {
        match *self {
            Self::Zero => Self::Zero,
            Self::GaussianBump {
                center,
                width,
                amplitude,
            } => Self::GaussianBump {
                center,
                width,
                amplitude: c * amplitude,
            },
            Self::ArctanStepSmoothed {
                center,
                width,
                amplitude,
            } => Self::ArctanStepSmoothed {
                center,
                width,
                amplitude: c * amplitude,
            },
        }
    }
}

/// A symbol `phi = step + background`. The step part equals `left` of the
/// first jump below it and `right` of jump `i` on `[lambda_i, lambda_{i+1})`,
/// so it is right-continuous; consecutive jumps must agree
/// (`right_i == left_{i+1}`). A jump with equal limits marks no
/// discontinuity. With no jumps the step part is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiecewiseFn {
    #[serde(default)]
    pub jumps: Vec<Jump>,
    #[serde(default)]
    pub background: Background,
}

const STEP_CONSISTENCY: f64 = 1e-12;

impl PiecewiseFn {
    pub fn zero() -> Self {
        Self {
            jumps: vec![],
            background: Background::Zero,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self {
            jumps: vec![Jump::real(0.0, c, c)],
            background: Background::Zero,
        }
    }

    /// Indicator of `(-inf, lambda)`.
    pub fn indicator_below(lambda: f64) -> Self {
        Self {
            jumps: vec![Jump::real(lambda, 1.0, 0.0)],
            background: Background::Zero,
        }
    }

    /// Real step function from `0` with the given `(location, kappa)` jumps.
    pub fn steps(jumps: &[(f64, f64)], background: Background) -> Self {
        let mut level = 0.0;
        let jumps = jumps
            .iter()
            .map(|&(lambda, kappa)| {
                let j = Jump::real(lambda, level, level + kappa);
                level += kappa;
                j
            })
            .collect();
        Self { jumps, background }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let phi: Self = serde_json::from_str(text)?;
        phi.validate()?;
        Ok(phi)
    }

    pub fn validate(&self) -> Result<()> {
        for w in self.jumps.windows(2) {
            if !(w[0].lambda < w[1].lambda) {
                return Err(Error::InvalidArgument(format!(
                    "jump locations must be strictly increasing ({} then {})",
                    w[0].lambda, w[1].lambda
                )));
            }
            if (w[0].right - w[1].left).norm() > STEP_CONSISTENCY {
                return Err(Error::InvalidArgument(format!(
                    "right limit at {} differs from left limit at {}",
                    w[0].lambda, w[1].lambda
                )));
            }
        }
        for j in &self.jumps {
            let finite = j.lambda.is_finite()
                && j.left.re.is_finite()
                && j.left.im.is_finite()
                && j.right.re.is_finite()
                && j.right.im.is_finite();
            if !finite {
                return Err(Error::InvalidArgument("non-finite jump data".into()));
            }
        }
        Ok(())
    }

    pub fn is_real(&self) -> bool {
        self.jumps
            .iter()
            .all(|j| j.left.im == 0.0 && j.right.im == 0.0)
    }

    pub fn step(&self, x: f64) -> Complex64 {
        if self.jumps.is_empty() {
            return Complex64::new(0.0, 0.0);
        }
        let passed = self.jumps.partition_point(|j| j.lambda <= x);
        if passed == 0 {
            self.jumps[0].left
        } else {
            self.jumps[passed - 1].right
        }
    }

    pub fn eval(&self, x: f64) -> Complex64 {
        self.step(x) + self.background.eval(x)
    }

    /// Jumps with nonzero magnitude.
    pub fn discontinuities(&self) -> impl Iterator<Item = &Jump> {
        self.jumps
            .iter()
            .filter(|j| j.kappa() != Complex64::new(0.0, 0.0))
    }

    pub fn singular_support(&self) -> Vec<f64> {
        self.discontinuities().map(|j| j.lambda).collect()
    }

    /// Supremum of `|phi|`, bounded by the step levels plus the background.
    pub fn sup_norm(&self) -> f64 {
        let steps = self
            .jumps
            .iter()
            .flat_map(|j| [j.left.norm(), j.right.norm()])
            .fold(0.0, f64::max);
        steps + self.background.sup_norm()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            jumps: self
                .jumps
                .iter()
                .map(|j| Jump {
                    lambda: j.lambda,
                    left: j.left * c,
                    right: j.right * c,
                })
                .collect(),
            background: self.background.scaled(c),
        }
    }
}

/// One segment `[-w, w]` per jump, as a closed subset of the complex plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentUnion {
    /// Endpoint pairs `(-w, w)`.
    pub segments: Vec<SegmentEnds>,
    pub closed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentEnds {
    #[serde(with = "complex_pair")]
    pub lo: Complex64,
    #[serde(with = "complex_pair")]
    pub hi: Complex64,
}

impl SegmentUnion {
    pub fn empty() -> Self {
        Self {
            segments: vec![],
            closed: true,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Adds `[-w, w]`, dropping segments contained in another one. The
    /// degenerate segment `{0}` is kept only while nothing else is present.
    pub fn insert(&mut self, w: Complex64) {
        let w = if w.re < 0.0 || (w.re == 0.0 && w.im < 0.0) {
            -w
        } else {
            w
        };
        let inside = |small: Complex64, big: Complex64| {
            if small == Complex64::new(0.0, 0.0) {
                return true;
            }
            if big == Complex64::new(0.0, 0.0) {
                return false;
            }
            let r = small / big;
            r.im.abs() <= 1e-14 * r.norm() && r.re.abs() <= 1.0
        };
        if self.segments.iter().any(|s| inside(w, s.hi)) {
            return;
        }
        self.segments.retain(|s| !inside(s.hi, w));
        self.segments.push(SegmentEnds { lo: -w, hi: w });
    }

    pub fn contains(&self, z: Complex64, tol: f64) -> bool {
        self.segments.iter().any(|s| {
            let w = s.hi;
            if w.norm() == 0.0 {
                return z.norm() <= tol;
            }
            // Project onto the line through -w and w.
            let u = w / w.norm();
            let along = (z * u.conj()).re;
            let off = (z - u * along).norm();
            off <= tol && along.abs() <= w.norm() + tol
        })
    }

    /// `a` such that the union is `[-a, a]`, when every segment is real.
    pub fn real_radius(&self) -> Option<f64> {
        if self.segments.iter().any(|s| s.hi.im != 0.0) {
            return None;
        }
        Some(
            self.segments
                .iter()
                .map(|s| s.hi.re.abs())
                .fold(0.0, f64::max),
        )
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = Self::empty();
        for s in &self.segments {
            out.insert(s.hi * c);
        }
        out
    }
}

/// Admissible jump locations for boundary-value routes: inside the band,
/// `band_margin` away from its edges.
pub fn band_window(tunables: &Tunables) -> (f64, f64) {
    (-2.0 + tunables.band_margin, 2.0 - tunables.band_margin)
}

/// Union of `[-alpha(l) kappa_l, alpha(l) kappa_l]` over the jumps of `phi`.
pub fn predicted_ess_spectrum<A>(
    phi: &PiecewiseFn,
    mut alpha_fn: A,
    window: (f64, f64),
) -> Result<SegmentUnion>
where
    A: FnMut(f64) -> Result<f64>,
{
    let mut union = SegmentUnion::empty();
    for j in phi.discontinuities() {
        if !(j.lambda >= window.0 && j.lambda <= window.1) {
            return Err(Error::JumpOutsideWindow {
                lambda: j.lambda,
                lo: window.0,
                hi: window.1,
            });
        }
        union.insert(j.kappa() * alpha_fn(j.lambda)?);
    }
    Ok(union)
}

/// Distance from `x` to the nearest point of a sorted list.
fn nearest(sorted: &[f64], x: f64) -> f64 {
    let i = sorted.partition_point(|&y| y < x);
    let mut d = f64::INFINITY;
    if i < sorted.len() {
        d = d.min(sorted[i] - x);
    }
    if i > 0 {
        d = d.min(x - sorted[i - 1]);
    }
    d
}

fn sorted(points: &[f64]) -> Vec<f64> {
    let mut v = points.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Hausdorff distance between two finite subsets of the line.
pub fn hausdorff_sets(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    let (sa, sb) = (sorted(a), sorted(b));
    let one = |from: &[f64], to: &[f64]| from.iter().map(|&x| nearest(to, x)).fold(0.0, f64::max);
    one(&sa, &sb).max(one(&sb, &sa))
}

/// Hausdorff distance between a finite set and the interval `[lo, hi]`.
pub fn hausdorff_to_interval(points: &[f64], lo: f64, hi: f64) -> f64 {
    if points.is_empty() {
        return f64::INFINITY;
    }
    let s = sorted(points);
    let outward = s
        .iter()
        .map(|&x| (lo - x).max(x - hi).max(0.0))
        .fold(0.0, f64::max);
    // The farthest interval point from `s` is an endpoint or a gap midpoint.
    let mut inward = nearest(&s, lo).max(nearest(&s, hi));
    for w in s.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        if mid > lo && mid < hi {
            inward = inward.max(0.5 * (w[1] - w[0]));
        }
    }
    outward.max(inward)
}

/// Points of the last cloud with a partner within `radius` at the previous
/// rung. A single cloud is its own accumulation set.
pub fn accumulation_set(clouds: &[Cloud], radius: f64) -> Vec<f64> {
    filter_transients(clouds, radius)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolSpectrum {
    pub clouds: Vec<Cloud>,
    /// Last cloud after transient filtering.
    pub filtered: Vec<f64>,
    /// Last cloud restricted to accumulating points.
    pub accumulation: Vec<f64>,
}

impl SymbolSpectrum {
    fn from_clouds(clouds: Vec<Cloud>, tunables: &Tunables) -> Self {
        Self {
            filtered: filter_transients(&clouds, tunables.transient_displacement),
            accumulation: accumulation_set(&clouds, tunables.accumulation_radius),
            clouds,
        }
    }
}

fn real_symbol(phi: &PiecewiseFn) -> Result<impl Fn(f64) -> f64 + '_> {
    if !phi.is_real() {
        return Err(Error::ComplexSymbol);
    }
    phi.validate()?;
    Ok(move |x: f64| phi.eval(x).re)
}

fn symbol_cloud(spectra: &PairSpectra, half_width: usize, phi: &PiecewiseFn) -> Result<Cloud> {
    let f = real_symbol(phi)?;
    let eig = SymbolDifference::new(spectra, f).eigenvalues()?;
    let bound = 2.0 * phi.sup_norm() + tolerances::CLOUD_BOUND;
    if let Some(x) = eig.iter().find(|x| x.abs() > bound) {
        return Err(Error::InvariantViolated {
            name: "|eig(phi(H) - phi(H0))| <= 2 sup|phi|",
            detail: format!("N = {half_width}: {x} > {bound}"),
        });
    }
    Ok(Cloud::new(half_width, eig, None))
}

/// Clouds for several symbols on one ladder, sharing each rung's
/// eigendecompositions.
fn ladder_clouds(
    spec: &ModelSpec,
    symbols: &[&PiecewiseFn],
    n_list: &[usize],
) -> Result<Vec<Vec<Cloud>>> {
    check_ladder(n_list)?;
    if symbols.iter().any(|phi| !phi.is_real()) {
        return Err(Error::ComplexSymbol);
    }
    let mut out = vec![Vec::with_capacity(n_list.len()); symbols.len()];
    for &n in n_list {
        let pair = build_model(&spec.with_half_width(n))?;
        let spectra = PairSpectra::compute(&pair)?;
        for (slot, phi) in out.iter_mut().zip(symbols) {
            slot.push(symbol_cloud(&spectra, n, phi)?);
        }
    }
    Ok(out)
}

/// Eigenvalue clouds of `phi(H) - phi(H0)` along a ladder.
pub fn empirical_spectrum(
    spec: &ModelSpec,
    phi: &PiecewiseFn,
    n_list: &[usize],
    tunables: &Tunables,
) -> Result<SymbolSpectrum> {
    let clouds = ladder_clouds(spec, &[phi], n_list)?
        .pop()
        .expect("one symbol");
    Ok(SymbolSpectrum::from_clouds(clouds, tunables))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossTermReport {
    pub n_list: Vec<usize>,
    /// Leading singular values of `delta(phi1) delta(phi2)` per rung.
    pub singular_values: Vec<Vec<f64>>,
    /// One-based index of the tracked singular value.
    pub index: usize,
    pub tracked: Vec<f64>,
    /// Tracked value strictly decreasing from rung to rung.
    pub decreasing: bool,
    /// Tracked value at the last rung over the first.
    pub ratio_last_first: f64,
}

const CROSS_TERM_ITERATIONS: usize = 40;

/// Same as [`cross_term_compactness`] without the disjointness check, for
/// negative controls.
pub fn cross_term_singular_values(
    spec: &ModelSpec,
    phi1: &PiecewiseFn,
    phi2: &PiecewiseFn,
    n_list: &[usize],
    index: usize,
) -> Result<CrossTermReport> {
    check_ladder(n_list)?;
    if index == 0 {
        return Err(Error::InvalidArgument(
            "singular value index is one-based".into(),
        ));
    }
    let (f1, f2) = (real_symbol(phi1)?, real_symbol(phi2)?);
    let mut singular_values = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let pair = build_model(&spec.with_half_width(n))?;
        let spectra = PairSpectra::compute(&pair)?;
        let d1 = SymbolDifference::new(&spectra, &f1);
        let d2 = SymbolDifference::new(&spectra, &f2);
        let sv = linalg::top_singular_values(
            pair.n(),
            index,
            CROSS_TERM_ITERATIONS,
            0xc0ffee ^ n as u64,
            |x| d1.apply(&d2.apply(x)),
            |x| d2.apply(&d1.apply(x)),
        )?;
        singular_values.push(sv);
    }
    let tracked: Vec<f64> = singular_values
        .iter()
        .map(|s| s.get(index - 1).copied().unwrap_or(0.0))
        .collect();
    let first = tracked[0];
    let last = *tracked.last().expect("ladder is non-empty");
    Ok(CrossTermReport {
        n_list: n_list.to_vec(),
        decreasing: tracked.windows(2).all(|w| w[1] < w[0]),
        ratio_last_first: if first > 0.0 { last / first } else { 0.0 },
        singular_values,
        index,
        tracked,
    })
}

/// Leading singular values of `delta(phi1) delta(phi2)` along a ladder, for
/// symbols whose singular supports are disjoint.
pub fn cross_term_compactness(
    spec: &ModelSpec,
    phi1: &PiecewiseFn,
    phi2: &PiecewiseFn,
    n_list: &[usize],
    index: usize,
) -> Result<CrossTermReport> {
    let s2 = phi2.singular_support();
    if let Some(&l) = phi1
        .singular_support()
        .iter()
        .find(|l| s2.iter().any(|m| (*m - **l).abs() <= 1e-12))
    {
        return Err(Error::OverlappingSupports(l));
    }
    cross_term_singular_values(spec, phi1, phi2, n_list, index)
}

/// Splits a real symbol into pieces with one discontinuity each. The
/// starting level is dropped (constants cancel in `phi(H) - phi(H0)`) and
/// the background goes with the first piece.
pub fn single_jump_pieces(phi: &PiecewiseFn) -> Result<Vec<PiecewiseFn>> {
    if !phi.is_real() {
        return Err(Error::ComplexSymbol);
    }
    let jumps: Vec<&Jump> = phi.discontinuities().collect();
    if jumps.is_empty() {
        return Ok(vec![PiecewiseFn {
            jumps: vec![],
            background: phi.background,
        }]);
    }
    Ok(jumps
        .iter()
        .enumerate()
        .map(|(i, j)| {
            let bg = if i == 0 {
                phi.background
            } else {
                Background::Zero
            };
            PiecewiseFn::steps(&[(j.lambda, j.kappa().re)], bg)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnionReport {
    pub distance: f64,
    pub sum_accumulation: Vec<f64>,
    pub piece_accumulation: Vec<Vec<f64>>,
}

/// Hausdorff distance between the accumulation set of the sum and the union
/// of the pieces' accumulation sets, with 0 adjoined to both.
pub fn union_formula_check(
    piece_clouds: &[Vec<Cloud>],
    sum_clouds: &[Cloud],
    radius: f64,
) -> UnionReport {
    let piece_accumulation: Vec<Vec<f64>> = piece_clouds
        .iter()
        .map(|c| accumulation_set(c, radius))
        .collect();
    let sum_accumulation = accumulation_set(sum_clouds, radius);
    let mut union: Vec<f64> = piece_accumulation.iter().flatten().copied().collect();
    union.push(0.0);
    let mut total = sum_accumulation.clone();
    total.push(0.0);
    UnionReport {
        distance: hausdorff_sets(&total, &union),
        sum_accumulation,
        piece_accumulation,
    }
}

/// Decomposes `phi` into single-jump pieces and runs the union check on one
/// ladder.
pub fn union_formula_ladder(
    spec: &ModelSpec,
    phi: &PiecewiseFn,
    n_list: &[usize],
    tunables: &Tunables,
) -> Result<UnionReport> {
    let pieces = single_jump_pieces(phi)?;
    let mut symbols: Vec<&PiecewiseFn> = pieces.iter().collect();
    symbols.push(phi);
    let mut clouds = ladder_clouds(spec, &symbols, n_list)?;
    let sum = clouds.pop().expect("sum symbol present");
    Ok(union_formula_check(
        &clouds,
        &sum,
        tunables.accumulation_radius,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alpha::d_spectrum_ladder;

    #[test]
    fn segment_union_merging() {
        let mut u = SegmentUnion::empty();
        u.insert(Complex64::new(0.3, 0.0));
        u.insert(Complex64::new(-0.5, 0.0));
        u.insert(Complex64::new(0.1, 0.0));
        assert_eq!(u.segments.len(), 1);
        assert_eq!(u.real_radius(), Some(0.5));
        u.insert(Complex64::new(0.0, 0.2));
        assert_eq!(u.segments.len(), 2);
        assert_eq!(u.real_radius(), None);
        assert!(u.contains(Complex64::new(0.0, -0.1), 1e-12));
        assert!(!u.contains(Complex64::new(0.1, 0.1), 1e-12));
        let mut z = SegmentUnion::empty();
        z.insert(Complex64::new(0.0, 0.0));
        assert!(z.contains(Complex64::new(0.0, 0.0), 0.0));
        z.insert(Complex64::new(1.0, 0.0));
        assert_eq!(z.segments.len(), 1);
    }

    #[test]
    fn prediction_examples() {
        let w = (-1.9, 1.9);
        let alpha = |l: f64| Ok(0.2 + 0.1 * l);
        assert!(predicted_ess_spectrum(&PiecewiseFn::zero(), alpha, w)
            .unwrap()
            .is_empty());
        let one = predicted_ess_spectrum(&PiecewiseFn::indicator_below(0.5), alpha, w).unwrap();
        assert!((one.real_radius().unwrap() - 0.25).abs() < 1e-15);
        let two = PiecewiseFn::steps(&[(-0.5, 1.0), (0.5, 0.5)], Background::Zero);
        let p = predicted_ess_spectrum(&two, alpha, w).unwrap();
        assert!((p.real_radius().unwrap() - (0.15f64).max(0.5 * 0.25)).abs() < 1e-15);
        let far = PiecewiseFn::indicator_below(1.95);
        assert!(matches!(
            predicted_ess_spectrum(&far, alpha, w),
            Err(Error::JumpOutsideWindow { .. })
        ));
    }

    #[test]
    fn hausdorff_helpers() {
        assert_eq!(hausdorff_sets(&[0.0, 1.0], &[0.0, 1.0]), 0.0);
        assert!((hausdorff_sets(&[0.0], &[0.0, 0.5]) - 0.5).abs() < 1e-15);
        let pts: Vec<f64> = (0..=20).map(|i| -1.0 + 0.1 * i as f64).collect();
        assert!(hausdorff_to_interval(&pts, -1.0, 1.0) < 0.05 + 1e-12);
        assert!((hausdorff_to_interval(&[0.0], -1.0, 1.0) - 1.0).abs() < 1e-15);
        assert!((hausdorff_to_interval(&[-1.0, 1.0, 1.5], -1.0, 1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pieces_sum_to_symbol() {
        let phi = PiecewiseFn::steps(
            &[(-0.5, 1.0), (0.5, 0.5)],
            Background::GaussianBump {
                center: 0.0,
                width: 0.3,
                amplitude: 0.2,
            },
        );
        let pieces = single_jump_pieces(&phi).unwrap();
        assert_eq!(pieces.len(), 2);
        for x in [-1.0, -0.5, 0.0, 0.49, 0.5, 1.2] {
            let s: f64 = pieces.iter().map(|p| p.eval(x).re).sum();
            assert!((s - phi.eval(x).re).abs() < 1e-15);
        }
    }

    #[test]
    fn indicator_matches_d_ladder() {
        let spec = ModelSpec::delta(20, 1.0);
        let n_list = [20, 30, 40];
        let t = Tunables::default();
        let d = d_spectrum_ladder(&spec, 0.0, &n_list, &t).unwrap();
        let e = empirical_spectrum(&spec, &PiecewiseFn::indicator_below(0.0), &n_list, &t).unwrap();
        for (a, b) in d.eigenvalue_clouds.iter().zip(&e.clouds) {
            assert_eq!(a.eigenvalues, b.eigenvalues);
        }
    }

    #[test]
    fn continuous_symbol_is_compact() {
        let phi = PiecewiseFn {
            jumps: vec![],
            background: Background::GaussianBump {
                center: 0.0,
                width: 0.5,
                amplitude: 1.0,
            },
        };
        let e = empirical_spectrum(
            &ModelSpec::delta(20, 0.5),
            &phi,
            &[40, 80, 160],
            &Tunables::default(),
        )
        .unwrap();
        let counts: Vec<usize> = e.clouds.iter().map(|c| c.count_above_tenth).collect();
        assert!(counts.windows(2).all(|w| w[0] == w[1]), "{counts:?}");
    }

    #[test]
    fn complex_symbols_rejected() {
        let phi = PiecewiseFn {
            jumps: vec![Jump {
                lambda: 0.0,
                left: Complex64::new(0.0, 0.0),
                right: Complex64::new(0.0, 1.0),
            }],
            background: Background::Zero,
        };
        assert!(matches!(
            empirical_spectrum(
                &ModelSpec::delta(10, 0.5),
                &phi,
                &[10, 20, 30],
                &Tunables::default()
            ),
            Err(Error::ComplexSymbol)
        ));
        let p = predicted_ess_spectrum(&phi, |_| Ok(0.5), (-1.0, 1.0)).unwrap();
        assert!(p.contains(Complex64::new(0.0, 0.5), 1e-15));
    }

    #[test]
    fn cross_term_requires_disjoint_supports() {
        let a = PiecewiseFn::indicator_below(0.0);
        let spec = ModelSpec::delta(10, 1.0);
        assert!(matches!(
            cross_term_compactness(&spec, &a, &a, &[10, 20, 30], 3),
            Err(Error::OverlappingSupports(_))
        ));
        let b = PiecewiseFn::indicator_below(0.5);
        let r = cross_term_compactness(&spec, &a, &b, &[10, 20, 30], 3).unwrap();
        assert_eq!(r.tracked.len(), 3);
    }

    #[test]
    fn union_of_one_piece_is_exact() {
        let phi = PiecewiseFn::indicator_below(0.3);
        let r = union_formula_ladder(
            &ModelSpec::delta(10, 1.0),
            &phi,
            &[20, 30, 40],
            &Tunables::default(),
        )
        .unwrap();
        assert_eq!(r.distance, 0.0);
    }

    #[test]
    fn small_jump_piece_norm_bound() {
        let phi = PiecewiseFn::steps(&[(-0.5, 1.0), (0.5, 1.0 / 32.0)], Background::Zero);
        let r = union_formula_ladder(
            &ModelSpec::delta(10, 1.0),
            &phi,
            &[20, 40, 80],
            &Tunables::default(),
        )
        .unwrap();
        assert!(r.piece_accumulation[1]
            .iter()
            .all(|x| x.abs() <= 2.0 / 32.0 + 1e-12));
    }

    #[test]
    fn step_is_right_continuous() {
        let phi = PiecewiseFn::indicator_below(0.5);
        assert_eq!(phi.eval(0.4999).re, 1.0);
        assert_eq!(phi.eval(0.5).re, 0.0);
        assert_eq!(phi.eval(7.0).re, 0.0);
        let two = PiecewiseFn::steps(&[(-0.5, 1.0), (0.5, 0.5)], Background::Zero);
        assert_eq!(two.eval(-1.0).re, 0.0);
        assert_eq!(two.eval(0.0).re, 1.0);
        assert_eq!(two.eval(1.0).re, 1.5);
        assert_eq!(two.singular_support(), vec![-0.5, 0.5]);
        assert!(two.validate().is_ok());
    }

    #[test]
    fn inconsistent_jumps_are_rejected() {
        let bad = PiecewiseFn {
            jumps: vec![Jump::real(0.0, 0.0, 1.0), Jump::real(1.0, 0.5, 0.0)],
            background: Background::Zero,
        };
        assert!(bad.validate().is_err());
        let unordered = PiecewiseFn {
            jumps: vec![Jump::real(1.0, 0.0, 1.0), Jump::real(0.0, 1.0, 0.0)],
            background: Background::Zero,
        };
        assert!(unordered.validate().is_err());
    }

    #[test]
    fn json_schema() {
        let text = r#"{
            "jumps": [{"lambda": -0.5, "left": [0, 0], "right": [1, 0]}],
            "background": {"preset": "gaussian_bump", "center": 0.0, "width": 0.5, "amplitude": 2.0}
        }"#;
        let phi = PiecewiseFn::from_json(text).unwrap();
        assert_eq!(phi.jumps[0].kappa(), Complex64::new(1.0, 0.0));
        assert!((phi.eval(0.0).re - 3.0).abs() < 1e-15);
        let back: PiecewiseFn =
            serde_json::from_str(&serde_json::to_string(&phi).unwrap()).unwrap();
        assert_eq!(back, phi);
        let zero: PiecewiseFn =
            serde_json::from_str(r#"{"jumps": [], "background": {"preset": "zero"}}"#).unwrap();
        assert_eq!(zero, PiecewiseFn::zero());
    }
}
