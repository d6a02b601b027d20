use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("unsupported model kind `{0}`")]
    UnsupportedKind(String),

    #[error("matrix is not symmetric (defect {defect:.3e} > {tol:.1e})")]
    NotSymmetric { defect: f64, tol: f64 },

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eig:.3e})")]
    NotPositiveSemidefinite { min_eig: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("lambda = {lambda} lies within {margin} of the band edge")]
    BandEdge { lambda: f64, margin: f64 },

    #[error("I + T0(z)J is singular at z = {re} + {im}i (condition number {condition:.3e})")]
    Resonance { re: f64, im: f64, condition: f64 },

    #[error("extrapolation failed: successive differences {diffs:?} are not decreasing")]
    ExtrapolationFailed { diffs: Vec<f64> },

    #[error("identity check `{name}` failed: residual {residual:.3e} > {tol:.1e}")]
    IdentityViolated {
        name: &'static str,
        residual: f64,
        tol: f64,
    },

    #[error("invariant `{name}` violated: {detail}")]
    InvariantViolated { name: &'static str, detail: String },

    #[error("Fredholm equivalence violated: sigma_min(I+A0 J) = {sigma_min_0:.3e}, sigma_min(I-AJ) = {sigma_min_1:.3e}, kernel_tol = {tol:.1e}")]
    FredholmEquivalence {
        sigma_min_0: f64,
        sigma_min_1: f64,
        tol: f64,
    },

    #[error(
        "hypothesis ||K(t)|| <= C/t violated at t = {t} (||K(t)|| t = {value:.6e} > C = {bound})"
    )]
    HankelHypothesis { t: f64, value: f64, bound: f64 },

    #[error(
        "quadrature not convergent: residual {coarse:.3e} at n = {n}, {fine:.3e} at n = {n_fine}"
    )]
    QuadratureNotConvergent {
        n: usize,
        coarse: f64,
        n_fine: usize,
        fine: f64,
    },

    #[error("complex-valued symbol: empirical spectra are only computed for real symbols (non-normal finite sections)")]
    ComplexSymbol,

    #[error("singular supports overlap at lambda = {0}")]
    OverlappingSupports(f64),

    #[error("jump at lambda = {lambda} lies outside the valid window [{lo}, {hi}]")]
    JumpOutsideWindow { lambda: f64, lo: f64, hi: f64 },

    #[error("LAPACK routine {routine} failed with info = {info}")]
    Lapack { routine: &'static str, info: i32 },

    #[error("output directory {0} already holds a run; pass --overwrite to replace it")]
    OutputExists(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
