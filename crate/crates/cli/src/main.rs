use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gibbslab::output::{csv_string, write_csv, write_json, Format, Metadata};
use gibbslab::study::{run_study_1d, run_study_2d_classical};
use gibbslab::{Error, RunConfig};
use serde::Serialize;

mod single;

#[derive(Parser, Debug)]
#[command(name = "gibbslab", version, about = "Classical and quantum Gibbs states of trapped bosons")]
struct Cli {
    /// INI experiment file; defaults apply to every missing key
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// overrides [classical] seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// overrides [output] dir
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// worker threads; results do not depend on it
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// overrides [output] format
    #[arg(long, global = true)]
    format: Option<Format>,
    /// exit with status 3 when a run is flagged nonconverged or cutoff-unsafe
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Eigenvalues of -Δ + V and Schatten diagnostics
    Spectrum,
    /// Draw a Gaussian ensemble at cutoff K
    SampleGaussian,
    /// Reweighted classical measure: -log z_r and reduced moments
    ClassicalGibbs,
    /// Truncated Fock-space Gibbs states along the T schedule
    QuantumGibbs,
    /// Reduced Hartree counterterm table
    Hartree,
    /// 1D quantum vs classical convergence study
    #[command(name = "study-1d")]
    Study1d,
    /// 2D renormalization study
    #[command(name = "study-2d-classical")]
    Study2dClassical,
}

impl Command {
    fn kind(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::SampleGaussian => "sample-gaussian",
            Command::ClassicalGibbs => "classical-gibbs",
            Command::QuantumGibbs => "quantum-gibbs",
            Command::Hartree => "hartree",
            Command::Study1d => "study-1d",
            Command::Study2dClassical => "study-2d-classical",
        }
    }
}

struct Emitter<'a> {
    dir: &'a Path,
    kind: &'static str,
    format: Format,
    meta: Metadata,
}

impl Emitter<'_> {
    /// JSON document, or the CSV table `rows` plus the JSON metadata.
    fn emit<R: Serialize, T: Serialize>(&self, report: &R, rows: &[T]) -> gibbslab::Result<()> {
        match self.format {
            Format::Json => {
                write_json(self.dir, self.kind, report, &self.meta)?;
            }
            Format::Csv => {
                write_csv(self.dir, self.kind, rows)?;
                let meta = gibbslab::output::to_json_string(&self.meta)?;
                std::fs::write(self.dir.join(format!("{}.meta.json", self.kind)), meta)?;
            }
        }
        Ok(())
    }

    fn extra_csv<T: Serialize>(&self, name: &str, rows: &[T]) -> gibbslab::Result<()> {
        if self.format == Format::Csv {
            std::fs::write(self.dir.join(format!("{}-{name}.csv", self.kind)), csv_string(rows)?)?;
        }
        Ok(())
    }
}

/// Runs the command; `Ok(true)` means a result was flagged.
fn run(cli: &Cli) -> gibbslab::Result<bool> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default_1d(),
    };
    if let Some(seed) = cli.seed {
        cfg.classical.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    if let Some(format) = cli.format {
        cfg.output.format = format;
    }
    let kind = cli.command.kind();
    let dir = cfg.output.dir.clone();
    std::fs::create_dir_all(&dir)?;
    let em = Emitter {
        dir: &dir,
        kind,
        format: cfg.output.format,
        meta: Metadata::now(kind, cli.config.as_deref(), Some(cfg.classical.seed)),
    };

    let flagged = match cli.command {
        Command::Spectrum => {
            let r = single::spectrum(&cfg)?;
            em.emit(&r, &r.eigenvalues)?;
            false
        }
        Command::SampleGaussian => {
            let r = single::sample(&cfg, &dir)?;
            em.emit(&r, std::slice::from_ref(&r))?;
            false
        }
        Command::ClassicalGibbs => {
            let r = single::classical(&cfg, &dir)?;
            em.emit(&r, &r.moments)?;
            r.log_zr.low_confidence
        }
        Command::QuantumGibbs => {
            let r = single::quantum(&cfg, &dir)?;
            em.emit(&r, &r.rows)?;
            r.flagged()
        }
        Command::Hartree => {
            let r = single::hartree(&cfg)?;
            em.emit(&r, &r.rows)?;
            !r.converged
        }
        Command::Study1d => {
            let r = run_study_1d(&cfg)?;
            em.emit(&r, &r.points)?;
            r.cutoff_unsafe || r.low_confidence || r.points.iter().any(|p| !p.audit_converged)
        }
        Command::Study2dClassical => {
            let r = run_study_2d_classical(&cfg)?;
            em.emit(&r, &r.uv.rows)?;
            em.extra_csv("wick", &r.wick)?;
            em.extra_csv("cauchy", &r.cauchy.rows)?;
            em.extra_csv("hartree", &r.hartree.rows)?;
            !r.hartree.converged || r.relative_one_body.low_confidence
        }
    };
    Ok(flagged)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(true) if cli.strict => {
            eprintln!("error: {} finished but was flagged (nonconverged, cutoff-unsafe or low ESS)", cli.command.kind());
            ExitCode::from(3)
        }
        Ok(flagged) => {
            if flagged {
                log::warn!("{} finished with flagged results; see the report", cli.command.kind());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) | Error::Usage(_) => 2,
                Error::Domain(_) | Error::Numerical(_) => 3,
                Error::Format(_) | Error::Io(_) => 1,
            })
        }
    }
}
