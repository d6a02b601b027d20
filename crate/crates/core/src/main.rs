use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use essspec::harness::{self, ExperimentConfig, ExperimentKind, RunStatus};

#[derive(Parser)]
#[command(
    name = "essspec",
    version,
    about = "Run spectral-shift experiments from JSON configs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// alpha(lambda) by the derivative, S-matrix and projection-limit routes
    Alpha(RunArgs),
    /// Eigenvalue clouds of E(-inf,l) - E0(-inf,l) along a truncation ladder
    Ladder(RunArgs),
    /// Predicted and empirical spectra of phi(H) - phi(H0)
    Phi(RunArgs),
    /// Hankel-operator discretizations and the L0/L factorization
    Hankel(RunArgs),
    /// Fredholm test of the projection pair over a lambda/coupling grid
    Fredholm(RunArgs),
    /// Transfer-matrix versus stationary scattering matrices
    Scatter(RunArgs),
    /// Static configuration checks without computation
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for grid points (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Replace an existing run directory.
    #[arg(long)]
    overwrite: bool,
}

const EXIT_PARTIAL: u8 = 2;
const EXIT_INVALID: u8 = 1;

fn load(path: &Path, out: Option<&PathBuf>) -> Result<ExperimentConfig, String> {
    let mut cfg =
        ExperimentConfig::from_path(path).map_err(|e| format!("{}: {e}", path.display()))?;
    if let Some(out) = out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn execute(kind: ExperimentKind, args: RunArgs) -> ExitCode {
    let cfg = match load(&args.config, args.out.as_ref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INVALID);
        }
    };
    if cfg.experiment != kind {
        eprintln!(
            "error: config describes a {:?} experiment, not {kind:?}",
            cfg.experiment
        );
        return ExitCode::from(EXIT_INVALID);
    }
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INVALID);
        }
    }
    let diagnostics = harness::validate(&cfg);
    if !diagnostics.is_empty() {
        for d in diagnostics {
            eprintln!("{}: {}", d.code, d.message);
        }
        return ExitCode::from(EXIT_INVALID);
    }
    match harness::run(&cfg, args.overwrite) {
        Ok(rec) => {
            println!(
                "{} ({} files, config {})",
                cfg.output_dir.display(),
                rec.files.len(),
                &rec.config_hash[..12]
            );
            for f in &rec.failures {
                eprintln!(
                    "failed at lambda = {:?}, N = {:?}: {}",
                    f.lambda, f.n, f.error
                );
            }
            match rec.status {
                RunStatus::Complete => ExitCode::SUCCESS,
                RunStatus::Partial => ExitCode::from(EXIT_PARTIAL),
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_INVALID)
        }
    }
}

/// OpenBLAS reads `OPENBLAS_CORETYPE` once, when it is loaded, and its
/// auto-detected Cooper Lake kernels return wrong SVDs (0.3.20). Restart
/// with the Haswell kernels unless the caller chose a core type.
#[cfg(all(unix, target_arch = "x86_64"))]
fn pin_blas_kernels() {
    use std::os::unix::process::CommandExt;
    if std::env::var_os("OPENBLAS_CORETYPE").is_some() {
        return;
    }
    let Ok(exe) = std::env::current_exe() else {
        return;
    };
    let err = std::process::Command::new(exe)
        .args(std::env::args_os().skip(1))
        .env("OPENBLAS_CORETYPE", "Haswell")
        .exec();
    eprintln!("warning: could not restart with OPENBLAS_CORETYPE set: {err}");
}

#[cfg(not(all(unix, target_arch = "x86_64")))]
fn pin_blas_kernels() {}

fn main() -> ExitCode {
    pin_blas_kernels();
    let cli = Cli::parse();
    match cli.command {
        Command::Alpha(a) => execute(ExperimentKind::AlphaSweep, a),
        Command::Ladder(a) => execute(ExperimentKind::DLadder, a),
        Command::Phi(a) => execute(ExperimentKind::PhiCheck, a),
        Command::Hankel(a) => execute(ExperimentKind::HankelSuite, a),
        Command::Fredholm(a) => execute(ExperimentKind::FredholmSweep, a),
        Command::Scatter(a) => execute(ExperimentKind::ScatteringCompare, a),
        Command::Validate { config } => match load(&config, None) {
            Ok(cfg) => {
                let d = harness::validate(&cfg);
                for x in &d {
                    println!("{}: {}", x.code, x.message);
                }
                if d.is_empty() {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(EXIT_INVALID)
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_INVALID)
            }
        },
    }
}
