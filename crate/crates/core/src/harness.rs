//! Config-driven experiment runner. A run writes CSV grids, JSON records and
//! `manifest.json` (config hash, tolerance table, file digests, failures).

use chrono::{SecondsFormat, Utc};
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};

use crate::alpha::{self, AlphaEstimate};
use crate::error::{Error, Result};
use crate::hankel;
use crate::linalg::{self, serde_matrix};
use crate::opcore::{build_model, ModelKind, ModelSpec, PairSpectra};
use crate::pcfunc::{self, PiecewiseFn};
use crate::resolvent::boundary_value;
use crate::scatter1d;
use crate::tolerances::{ToleranceTable, Tunables};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    AlphaSweep,
    DLadder,
    PhiCheck,
    HankelSuite,
    FredholmSweep,
    ScatteringCompare,
}

impl ExperimentKind {
    fn needs_lambda_grid(self) -> bool {
        !matches!(self, Self::PhiCheck | Self::HankelSuite)
    }
}

/// Either an explicit list or `count` evenly spaced points on `[min, max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    List(Vec<f64>),
    Range { min: f64, max: f64, count: usize },
}

impl Default for Grid {
    fn default() -> Self {
        Self::List(vec![])
    }
}

impl Grid {
    pub fn points(&self) -> Vec<f64> {
        match *self {
            Self::List(ref v) => v.clone(),
            Self::Range { min, max, count } => match count {
                0 => vec![],
                1 => vec![min],
                _ => (0..count)
                    .map(|i| min + (max - min) * i as f64 / (count - 1) as f64)
                    .collect(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HankelParams {
    #[serde(default = "HankelParams::default_n")]
    pub n: usize,
    #[serde(default = "HankelParams::default_cutoff")]
    pub cutoff: f64,
    /// Optional `Q` for the tensor spectrum of `Gamma^2 (x) Q`.
    #[serde(
        default,
        skip_serializing_if = "Option::is_none",
        serialize_with = "opt_rows",
        deserialize_with = "opt_from_rows"
    )]
    pub q: Option<Array2<f64>>,
    /// Singular pairs removed in the compactness fingerprint.
    #[serde(default = "HankelParams::default_deflated")]
    pub deflated: usize,
}

impl HankelParams {
    fn default_n() -> usize {
        200
    }
    fn default_cutoff() -> f64 {
        50.0
    }
    fn default_deflated() -> usize {
        20
    }
}

impl Default for HankelParams {
    fn default() -> Self {
        Self {
            n: Self::default_n(),
            cutoff: Self::default_cutoff(),
            q: None,
            deflated: Self::default_deflated(),
        }
    }
}

fn opt_rows<S: serde::Serializer>(
    m: &Option<Array2<f64>>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    match m {
        Some(m) => serde_matrix::rows(m, s),
        None => s.serialize_none(),
    }
}

fn opt_from_rows<'de, D: serde::Deserializer<'de>>(
    d: D,
) -> std::result::Result<Option<Array2<f64>>, D::Error> {
    serde_matrix::from_rows(d).map(Some)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub model: ModelSpec,
    #[serde(default)]
    pub lambda_grid: Grid,
    #[serde(default, rename = "N_list", alias = "n_list")]
    pub n_list: Vec<usize>,
    #[serde(default)]
    pub epsilon_schedule: Vec<f64>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub tolerances: Tunables,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<PiecewiseFn>,
    /// Second symbol for the cross-term test.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi2: Option<PiecewiseFn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hankel: Option<HankelParams>,
    /// Factors applied to every potential value, for coupling sweeps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub couplings: Option<Grid>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub code: &'static str,
    pub message: String,
}

fn diag(code: &'static str, message: impl Into<String>) -> Diagnostic {
    Diagnostic {
        code,
        message: message.into(),
    }
}

/// Static checks, no computation.
pub fn validate(config: &ExperimentConfig) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let t = &config.tolerances;
    if let Err(e) = config.model.validate() {
        out.push(diag("model", e.to_string()));
    }
    let grid = config.lambda_grid.points();
    if let Grid::Range { min, max, count } = config.lambda_grid {
        if !(min <= max) || count == 0 {
            out.push(diag(
                "lambda_grid",
                format!("range needs min <= max and count >= 1 (got {min}, {max}, {count})"),
            ));
        }
    }
    if config.experiment.needs_lambda_grid() && grid.is_empty() {
        out.push(diag("lambda_grid", "lambda grid is empty"));
    }
    let edge = 2.0 - t.band_margin;
    for &l in &grid {
        if !l.is_finite() || l.abs() > edge {
            out.push(diag(
                "band_edge",
                format!(
                    "lambda = {l} is within {} of the band edge +-2",
                    t.band_margin
                ),
            ));
        }
    }
    let ladder = matches!(
        config.experiment,
        ExperimentKind::DLadder | ExperimentKind::PhiCheck
    );
    if ladder {
        if let Err(e) = alpha::check_ladder(&config.n_list) {
            out.push(diag("n_list", e.to_string()));
        }
    }
    if matches!(config.experiment, ExperimentKind::AlphaSweep)
        && !config.epsilon_schedule.is_empty()
    {
        let n = config.model.truncation_half_width as f64;
        if config.epsilon_schedule.len() < 2 {
            out.push(diag("epsilon_schedule", "need at least two window widths"));
        }
        for &e in &config.epsilon_schedule {
            if !(e > 0.0) || e * n < t.eps_n_min {
                out.push(diag(
                    "epsilon_schedule",
                    format!(
                        "eps*N = {} for eps = {e}, N = {n} violates eps*N >= {}",
                        e * n,
                        t.eps_n_min
                    ),
                ));
            }
        }
    }
    match config.experiment {
        ExperimentKind::PhiCheck => match &config.phi {
            None => out.push(diag("phi", "phi_check needs `phi`")),
            Some(phi) => {
                for p in std::iter::once(phi).chain(config.phi2.as_ref()) {
                    if let Err(e) = p.validate() {
                        out.push(diag("phi", e.to_string()));
                    }
                    if !p.is_real() {
                        out.push(diag("phi", "complex symbols have no empirical spectrum; only the prediction is defined"));
                    }
                    for l in p.singular_support() {
                        if l.abs() > edge {
                            out.push(diag(
                                "band_edge",
                                format!("jump at {l} is within {} of the band edge", t.band_margin),
                            ));
                        }
                    }
                }
            }
        },
        ExperimentKind::ScatteringCompare if config.model.kind != ModelKind::Lattice1d => {
            out.push(diag("model", "scattering_compare needs a lattice1d model"));
        }
        ExperimentKind::HankelSuite => {
            let h = config.hankel.clone().unwrap_or_default();
            if h.n < 8 || !(h.cutoff >= 10.0) {
                out.push(diag(
                    "hankel",
                    format!(
                        "quadrature needs n >= 8 and T >= 10 (got {}, {})",
                        h.n, h.cutoff
                    ),
                ));
            }
        }
        _ => {}
    }
    if let Some(c) = &config.couplings {
        if c.points().is_empty() {
            out.push(diag("couplings", "coupling grid is empty"));
        }
    }
    out.extend(check_output_dir(&config.output_dir));
    out
}

fn check_output_dir(dir: &Path) -> Option<Diagnostic> {
    let parent = match dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    if dir.exists() && !dir.is_dir() {
        return Some(diag(
            "output_dir",
            format!("{} exists and is not a directory", dir.display()),
        ));
    }
    match fs::metadata(&parent) {
        Ok(m) if m.is_dir() && !m.permissions().readonly() => None,
        Ok(_) => Some(diag(
            "output_dir",
            format!("{} is not writable", parent.display()),
        )),
        Err(_) => Some(diag(
            "output_dir",
            format!("parent directory {} does not exist", parent.display()),
        )),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub lambda: Option<f64>,
    #[serde(rename = "N")]
    pub n: Option<usize>,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    Partial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub experiment: ExperimentKind,
    pub started_at: String,
    pub finished_at: String,
    pub crate_version: &'static str,
    pub tolerances: ToleranceTable,
    pub status: RunStatus,
    pub failures: Vec<Failure>,
    pub files: Vec<FileDigest>,
    pub summary: Value,
}

/// Files produced by one experiment, before they are written.
#[derive(Default)]
struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
    failures: Vec<Failure>,
    summary: serde_json::Map<String, Value>,
}

impl Artifacts {
    fn csv<R: Serialize>(&mut self, name: &str, rows: &[R]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r)
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        self.files.push((name.into(), bytes));
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.files.push((name.into(), bytes));
        Ok(())
    }

    fn fail(&mut self, lambda: Option<f64>, n: Option<usize>, e: &Error) {
        self.failures.push(Failure {
            lambda,
            n,
            error: e.to_string(),
        });
    }

    fn note(&mut self, key: &str, v: Value) {
        self.summary.insert(key.into(), v);
    }
}

/// Runs the experiment and writes its directory. An existing run directory is
/// replaced only with `overwrite`, by renaming a finished sibling into place.
pub fn run(config: &ExperimentConfig, overwrite: bool) -> Result<RunRecord> {
    let problems = validate(config);
    if !problems.is_empty() {
        let text: Vec<String> = problems
            .iter()
            .map(|d| format!("{}: {}", d.code, d.message))
            .collect();
        return Err(Error::InvalidConfig(text.join("; ")));
    }
    let dir = &config.output_dir;
    if dir.exists() && fs::read_dir(dir)?.next().is_some() && !overwrite {
        return Err(Error::OutputExists(dir.display().to_string()));
    }
    let started_at = now();
    let mut art = Artifacts::default();
    match config.experiment {
        ExperimentKind::AlphaSweep => alpha_sweep(config, &mut art)?,
        ExperimentKind::DLadder => d_ladder(config, &mut art)?,
        ExperimentKind::PhiCheck => phi_check(config, &mut art)?,
        ExperimentKind::HankelSuite => hankel_suite(config, &mut art)?,
        ExperimentKind::FredholmSweep => fredholm_sweep(config, &mut art)?,
        ExperimentKind::ScatteringCompare => scattering_compare(config, &mut art)?,
    }
    art.json("config.json", config)?;
    let files = art
        .files
        .iter()
        .map(|(name, bytes)| FileDigest {
            path: name.clone(),
            sha256: hex::encode(Sha256::digest(bytes)),
            bytes: bytes.len() as u64,
        })
        .collect();
    let record = RunRecord {
        config_hash: config.hash(),
        experiment: config.experiment,
        started_at,
        finished_at: now(),
        crate_version: env!("CARGO_PKG_VERSION"),
        tolerances: ToleranceTable::with(config.tolerances),
        status: if art.failures.is_empty() {
            RunStatus::Complete
        } else {
            RunStatus::Partial
        },
        failures: std::mem::take(&mut art.failures),
        files,
        summary: Value::Object(std::mem::take(&mut art.summary)),
    };
    let mut manifest = serde_json::to_vec_pretty(&record)?;
    manifest.push(b'\n');
    art.files.push(("manifest.json".into(), manifest));
    commit(dir, &art.files)?;
    Ok(record)
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn commit(dir: &Path, files: &[(String, Vec<u8>)]) -> Result<()> {
    let name = dir
        .file_name()
        .ok_or_else(|| {
            Error::InvalidConfig(format!(
                "output_dir {} has no final component",
                dir.display()
            ))
        })?
        .to_string_lossy()
        .into_owned();
    let parent = dir
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let pid = std::process::id();
    let staging = parent.join(format!(".{name}.staging-{pid}"));
    if staging.exists() {
        fs::remove_dir_all(&staging)?;
    }
    fs::create_dir_all(&staging)?;
    for (file, bytes) in files {
        fs::write(staging.join(file), bytes)?;
    }
    if dir.exists() {
        let old = parent.join(format!(".{name}.replaced-{pid}"));
        fs::rename(dir, &old)?;
        fs::rename(&staging, dir)?;
        fs::remove_dir_all(&old)?;
    } else {
        fs::rename(&staging, dir)?;
    }
    Ok(())
}

fn scaled_model(spec: &ModelSpec, c: f64) -> ModelSpec {
    let mut s = spec.clone();
    for p in &mut s.potential {
        p.1 *= c;
    }
    s
}

fn max_of(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(0.0, f64::max)
}

#[derive(Serialize)]
struct AlphaRow {
    lambda: f64,
    alpha_derivative: f64,
    alpha_smatrix: f64,
    alpha_proj_limit: Option<f64>,
    route_gap: f64,
    boundary_route: &'static str,
    boundary_err: f64,
    condition: f64,
}

fn alpha_sweep(config: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let t = config.tolerances;
    let pair = build_model(&config.model)?;
    let spectra = if config.epsilon_schedule.is_empty() {
        None
    } else {
        Some(PairSpectra::compute(&pair)?)
    };
    let grid = config.lambda_grid.points();
    let results: Vec<Result<AlphaRow>> = grid
        .par_iter()
        .map(|&lambda| {
            let bv = boundary_value(&pair, lambda, &t)?;
            let d = alpha::alpha_derivative(&bv, &pair.j)?;
            let s = alpha::alpha_smatrix(&bv, &pair.j)?;
            let p = match &spectra {
                Some(sp) => Some(alpha::alpha_proj_limit(
                    &pair,
                    sp,
                    lambda,
                    &config.epsilon_schedule,
                    &t,
                )?),
                None => None,
            };
            Ok(AlphaRow {
                lambda,
                alpha_derivative: d.value,
                alpha_smatrix: s.value,
                alpha_proj_limit: p.as_ref().map(|e: &AlphaEstimate| e.value),
                route_gap: (d.value - s.value).abs(),
                boundary_route: match bv.route {
                    crate::resolvent::BoundaryRoute::ClosedForm => "closed_form",
                    crate::resolvent::BoundaryRoute::Extrapolated => "extrapolated",
                },
                boundary_err: bv.err_estimate,
                condition: bv.condition,
            })
        })
        .collect();
    let n = config.model.truncation_half_width;
    let mut rows = Vec::new();
    for (lambda, r) in grid.iter().zip(results) {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => art.fail(Some(*lambda), Some(n), &e),
        }
    }
    art.note(
        "max_alpha",
        json!(max_of(
            rows.iter().map(|r| r.alpha_derivative.max(r.alpha_smatrix))
        )),
    );
    art.note(
        "max_route_gap",
        json!(max_of(rows.iter().map(|r| r.route_gap))),
    );
    art.csv("alpha.csv", &rows)
}

#[derive(Serialize)]
struct CloudRow {
    lambda: f64,
    #[serde(rename = "N")]
    n: usize,
    index: usize,
    eigenvalue: f64,
}

#[derive(Serialize)]
struct LadderRow {
    lambda: f64,
    alpha_empirical: f64,
    alpha_empirical_excluding_unit: f64,
    fill_distance: f64,
    plus_one_count: usize,
    minus_one_count: usize,
    pair_symmetry_defect: f64,
    max_d_squared_residual: f64,
    count_above_tenth: String,
}

fn d_ladder(config: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let grid = config.lambda_grid.points();
    let results: Vec<_> = grid
        .par_iter()
        .map(|&l| alpha::d_spectrum_ladder(&config.model, l, &config.n_list, &config.tolerances))
        .collect();
    let mut rows = Vec::new();
    let mut clouds = Vec::new();
    for (&lambda, r) in grid.iter().zip(results) {
        let est = match r {
            Ok(est) => est,
            Err(e) => {
                art.fail(Some(lambda), None, &e);
                continue;
            }
        };
        for c in &est.eigenvalue_clouds {
            for (index, &eigenvalue) in c.eigenvalues.iter().enumerate() {
                clouds.push(CloudRow {
                    lambda,
                    n: c.half_width,
                    index,
                    eigenvalue,
                });
            }
        }
        let last = est.eigenvalue_clouds.last().expect("ladder has rungs");
        rows.push(LadderRow {
            lambda,
            alpha_empirical: est.alpha_empirical,
            alpha_empirical_excluding_unit: est.alpha_empirical_excluding_unit,
            fill_distance: est.fill_distance,
            plus_one_count: est.plus_one_count,
            minus_one_count: est.minus_one_count,
            pair_symmetry_defect: last.pair_symmetry_defect,
            max_d_squared_residual: max_of(
                est.eigenvalue_clouds
                    .iter()
                    .filter_map(|c| c.d_squared_residual),
            ),
            count_above_tenth: est
                .eigenvalue_clouds
                .iter()
                .map(|c| c.count_above_tenth.to_string())
                .collect::<Vec<_>>()
                .join(";"),
        });
    }
    art.csv("ladder.csv", &rows)?;
    art.csv("clouds.csv", &clouds)
}

fn phi_check(config: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let t = config.tolerances;
    let phi = config
        .phi
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("phi_check needs `phi`".into()))?;
    let pair = build_model(&config.model)?;
    let alpha_at = |l: f64| -> Result<f64> {
        let bv = boundary_value(&pair, l, &t)?;
        Ok(alpha::alpha_derivative(&bv, &pair.j)?.value)
    };
    let predicted = pcfunc::predicted_ess_spectrum(phi, alpha_at, pcfunc::band_window(&t))?;
    art.json("prediction.json", &predicted)?;
    match pcfunc::empirical_spectrum(&config.model, phi, &config.n_list, &t) {
        Ok(emp) => {
            let mut rows = Vec::new();
            for c in &emp.clouds {
                for (index, &eigenvalue) in c.eigenvalues.iter().enumerate() {
                    rows.push(CloudRow {
                        lambda: f64::NAN,
                        n: c.half_width,
                        index,
                        eigenvalue,
                    });
                }
            }
            if let Some(a) = predicted.real_radius() {
                art.note("predicted_radius", json!(a));
                art.note(
                    "hausdorff_to_prediction",
                    json!(pcfunc::hausdorff_to_interval(&emp.accumulation, -a, a)),
                );
            }
            art.csv("clouds.csv", &rows)?;
        }
        Err(e) => art.fail(None, config.n_list.last().copied(), &e),
    }
    if phi.singular_support().len() > 1 {
        match pcfunc::union_formula_ladder(&config.model, phi, &config.n_list, &t) {
            Ok(r) => {
                art.note("union_distance", json!(r.distance));
                art.json("union.json", &r)?;
            }
            Err(e) => art.fail(None, None, &e),
        }
    }
    if let Some(phi2) = &config.phi2 {
        match pcfunc::cross_term_compactness(&config.model, phi, phi2, &config.n_list, 20) {
            Ok(r) => {
                art.note("cross_term_ratio", json!(r.ratio_last_first));
                art.json("cross_term.json", &r)?;
            }
            Err(e) => art.fail(None, None, &e),
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct SpectrumRow {
    n: usize,
    #[serde(rename = "T")]
    cutoff: f64,
    index: usize,
    eigenvalue: f64,
}

#[derive(Serialize)]
struct B16Row {
    lambda: f64,
    n: usize,
    #[serde(rename = "T")]
    cutoff: f64,
    residual_b16: f64,
    residual_b16_refined: f64,
    deflation_ratio: f64,
    kernel_decay_trend: bool,
}

fn hankel_suite(config: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let h = config.hankel.clone().unwrap_or_default();
    let mut spectrum = Vec::new();
    for n in [h.n, 2 * h.n] {
        let g = hankel::gamma_matrix(n, h.cutoff)?;
        for (index, eigenvalue) in g.eigenvalues()?.into_iter().enumerate() {
            spectrum.push(SpectrumRow {
                n,
                cutoff: h.cutoff,
                index,
                eigenvalue,
            });
        }
    }
    art.csv("gamma_spectrum.csv", &spectrum)?;

    let scalar = |f: fn(f64) -> f64| move |t: f64| Array2::from_elem((1, 1), f(t));
    let kernels: [(&str, fn(f64) -> f64, f64); 3] = [
        ("exp", |t| (-t).exp(), 1.0),
        ("damped_reciprocal", |t| -(-t).exp_m1() / t, 1.0),
        ("damped_reciprocal_x2", |t| -2.0 * (-t).exp_m1() / t, 2.0),
    ];
    let mut bounds = serde_json::Map::new();
    for (name, f, c) in kernels {
        match hankel::hankel_bound_check(scalar(f), c, h.n, h.cutoff) {
            Ok(b) => {
                bounds.insert(name.into(), serde_json::to_value(b)?);
            }
            Err(e) => art.fail(None, None, &e),
        }
    }
    art.json("hankel_bounds.json", &bounds)?;
    if let Some(q) = &h.q {
        match hankel::gamma_tensor_spectrum(&q.view(), h.n, h.cutoff) {
            Ok(s) => art.json("tensor_spectrum.json", &s)?,
            Err(e) => art.fail(None, None, &e),
        }
    }

    let grid = config.lambda_grid.points();
    if !grid.is_empty() {
        let pair = build_model(&config.model)?;
        let spectra = PairSpectra::compute(&pair)?;
        let t = config.tolerances;
        let rows: Vec<Result<B16Row>> = grid
            .par_iter()
            .map(|&lambda| {
                let ops = hankel::build_l_operators(&pair, &spectra, lambda, h.n, h.cutoff)?;
                let bv = boundary_value(&pair, lambda, &t)?;
                let defl = hankel::deflation_experiment(&ops, &bv.f0p.view(), h.deflated)?;
                let decay = hankel::kernel_decay_profile(
                    &pair,
                    &spectra,
                    lambda,
                    &bv.f0p.view(),
                    h.n,
                    h.cutoff,
                )?;
                Ok(B16Row {
                    lambda,
                    n: h.n,
                    cutoff: h.cutoff,
                    residual_b16: ops.residual,
                    residual_b16_refined: ops.residual_refined,
                    deflation_ratio: defl.ratio,
                    kernel_decay_trend: decay.decreasing_last_decade,
                })
            })
            .collect();
        let mut ok = Vec::new();
        for (&lambda, r) in grid.iter().zip(rows) {
            match r {
                Ok(r) => ok.push(r),
                Err(e) => art.fail(Some(lambda), Some(pair.half_width()), &e),
            }
        }
        art.csv("b16.csv", &ok)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct FredholmRow {
    coupling: f64,
    lambda: f64,
    sigma_min_0: f64,
    sigma_min_1: f64,
    fredholm: bool,
    alpha_derivative: f64,
    consistent: bool,
}

fn fredholm_sweep(config: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let t = config.tolerances;
    let couplings = config
        .couplings
        .clone()
        .unwrap_or(Grid::List(vec![1.0]))
        .points();
    let grid = config.lambda_grid.points();
    let points: Vec<(f64, f64)> = couplings
        .iter()
        .flat_map(|&c| grid.iter().map(move |&l| (c, l)))
        .collect();
    let results: Vec<Result<FredholmRow>> = points
        .par_iter()
        .map(|&(coupling, lambda)| {
            let pair = build_model(&scaled_model(&config.model, coupling))?;
            let bv = boundary_value(&pair, lambda, &t)?;
            let rec = alpha::fredholm_check(&bv, &pair.j, t.kernel_tol)?;
            let a = alpha::alpha_derivative(&bv, &pair.j)?.value;
            Ok(FredholmRow {
                coupling,
                lambda,
                sigma_min_0: rec.sigma_min_0,
                sigma_min_1: rec.sigma_min_1,
                fredholm: rec.fredholm,
                alpha_derivative: a,
                consistent: rec.fredholm == (a < 1.0 - t.kernel_tol),
            })
        })
        .collect();
    let mut rows = Vec::new();
    for (&(_, lambda), r) in points.iter().zip(results) {
        match r {
            Ok(r) => rows.push(r),
            Err(e) => art.fail(Some(lambda), Some(config.model.truncation_half_width), &e),
        }
    }
    art.note("all_consistent", json!(rows.iter().all(|r| r.consistent)));
    art.csv("fredholm.csv", &rows)
}

#[derive(Serialize)]
struct ScatterCsvRow {
    lambda: f64,
    abs_t: f64,
    abs_r: f64,
    norm_s_minus_i: f64,
    norm_stilde_minus_i: f64,
    alpha_derivative: f64,
    bridge_defect: f64,
    stationary_sv_gap: f64,
}

fn scattering_compare(config: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let t = config.tolerances;
    let pair = build_model(&config.model)?;
    let grid = config.lambda_grid.points();
    let results: Vec<Result<ScatterCsvRow>> = grid
        .par_iter()
        .map(|&lambda| {
            let row = scatter1d::scatter_point(&pair, lambda, &t)?;
            let bv = crate::resolvent::boundary_value_closed_form(&pair, lambda, &t)?;
            let st = scatter1d::smatrix_stationary(&pair, &bv)?;
            let tr = scatter1d::smatrix_transfer(&pair.spec.potential, lambda, &t)?;
            let eye = linalg::identity_c(2);
            let a = linalg::singular_values_c(&(&st.s - &eye).view())?;
            let b = linalg::singular_values_c(&(&tr.s - &eye).view())?;
            Ok(ScatterCsvRow {
                lambda,
                abs_t: row.abs_t,
                abs_r: row.abs_r,
                norm_s_minus_i: row.norm_s_minus_i,
                norm_stilde_minus_i: row.norm_stilde_minus_i,
                alpha_derivative: row.alpha_derivative,
                bridge_defect: row.bridge_defect,
                stationary_sv_gap: max_of(a.iter().zip(&b).map(|(x, y)| (x - y).abs())),
            })
        })
        .collect();
    let mut rows = Vec::new();
    for (&lambda, r) in grid.iter().zip(results) {
        match r {
            Ok(r) => rows.push(r),
            Err(e) => art.fail(Some(lambda), Some(pair.half_width()), &e),
        }
    }
    art.note(
        "max_bridge_defect",
        json!(max_of(rows.iter().map(|r| r.bridge_defect))),
    );
    art.note(
        "max_stationary_sv_gap",
        json!(max_of(rows.iter().map(|r| r.stationary_sv_gap))),
    );
    let edge = 1.5f64.min(2.0 - t.band_margin);
    match scatter1d::lipschitz_estimate(&pair.spec.potential, -edge, edge, 121, &t) {
        Ok(l) => art.note("lipschitz_estimate", json!(l)),
        Err(e) => art.fail(None, None, &e),
    }
    art.csv("scattering.csv", &rows)
}
