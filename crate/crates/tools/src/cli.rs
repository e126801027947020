//! The `tkjump` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use tkjump::{kw, plug_in_bandwidth, sample_loss, spot_series, tkw, AlgorithmOutput, SamplePath, ThresholdVector};

use crate::config::{kernel_by_name, Overrides, RunConfig, StudyKind};
use crate::error::{Context, Result, ToolError};
use crate::io;
use crate::manifest::{file_sha256, Manifest, Seeds};
use crate::studies::{run_and_record, MANIFEST_FILE};

#[derive(Debug, Parser)]
#[command(name = "tkjump", version, about = "Threshold-kernel jump detection and spot volatility")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Path CSV with `t` and `x` columns.
    #[arg(long)]
    pub input: PathBuf,
    /// c1, c2, n1 or n2.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a path and write it with its latent truth.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        days: Option<u32>,
        /// Number of increments; overrides --days.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify the increments of a path and write `index,b,flag`.
    Detect {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        detect: DetectArgs,
        #[arg(long)]
        out: PathBuf,
        /// Also write the per-iteration trace.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Spot variance on the observation grid.
    EstimateSpotvol {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        detect: DetectArgs,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        kernel: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Jump density at the origin from the detected exceedances.
    EstimateF0 {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        detect: DetectArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte Carlo study.
    Study {
        name: StudyName,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        replicates: Option<usize>,
        /// 1000 replicates instead of the desk-scale 200.
        #[arg(long)]
        full: bool,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Rerun the study recorded in this manifest and check the outputs.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StudyName {
    Table1,
    Table2,
    Table3,
    Sse,
    BiasVariance,
}

impl From<StudyName> for StudyKind {
    fn from(s: StudyName) -> Self {
        match s {
            StudyName::Table1 => StudyKind::Table1,
            StudyName::Table2 => StudyKind::Table2,
            StudyName::Table3 => StudyKind::Table3,
            StudyName::Sse => StudyKind::Sse,
            StudyName::BiasVariance => StudyKind::BiasVariance,
        }
    }
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn sidecar(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn file_name(out: &Path) -> String {
    out.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn parent(out: &Path) -> &Path {
    out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."))
}

fn record_single(command: &str, cfg: &RunConfig, spec: serde_json::Value, outs: &[&Path]) -> Result<()> {
    let seeds = Seeds { base_seed: cfg.simulate.seed, replicates: 1 };
    let mut m = Manifest::new(command, None, cfg, spec, seeds);
    for out in outs {
        m.record(parent(out), &[file_name(out)])?;
    }
    m.write(&sidecar(outs[0]))
}

fn overrides(common: &Common) -> Overrides {
    Overrides { seed: common.seed, ..Overrides::default() }
}

fn detect_overrides(common: &Common, d: &DetectArgs) -> Overrides {
    Overrides { method: d.method.clone(), max_iter: d.max_iter, ..overrides(common) }
}

fn run_detection(cfg: &RunConfig, path: &SamplePath) -> Result<AlgorithmOutput> {
    let method = cfg.detect_method()?;
    method.run(path, &cfg.algo_options()?).context(format!("method {}", method.name()))
}

fn input_spec(input: &Path, cfg: &RunConfig) -> Result<serde_json::Value> {
    Ok(json!({
        "input": input.display().to_string(),
        "input_sha256": file_sha256(input)?,
        "method": cfg.detect.method,
    }))
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Simulate { common, days, n, out } => {
            let cfg = RunConfig::resolve(common.config.as_deref(), &Overrides { days, n, ..overrides(&common) })?;
            let heston = cfg.heston(cfg.simulate.seed)?;
            let path = tkjump::simulate_path(&heston, cfg.n(), cfg.h(), cfg.simulate.substeps).context("simulate")?;
            io::write_path(&out, &path)?;
            let spec = json!({ "n": cfg.n(), "h": cfg.h(), "substeps": cfg.simulate.substeps });
            record_single("simulate", &cfg, spec, &[&out])?;
            println!("wrote {} increments to {}", path.n(), out.display());
        }
        Command::Detect { common, detect, out, trace } => {
            let cfg = RunConfig::resolve(common.config.as_deref(), &detect_overrides(&common, &detect))?;
            let path = io::read_path(&detect.input)?;
            let res = run_detection(&cfg, &path)?;
            let r = &res.report;
            io::write_thresholds(&out, res.thresholds.as_slice(), &r.classification.flags)?;
            let mut outs = vec![out.as_path()];
            if let Some(t) = &trace {
                io::write_trace(t, &res.trace)?;
                outs.push(t);
            }
            let loss = match &path.latent {
                Some(l) => Some(sample_loss(&r.classification, &l.jump_count).context("sample loss")?),
                None => None,
            };
            let summary = json!({
                "method": cfg.detect.method,
                "lambda_hat": r.lambda_hat,
                "sigma2_hat": r.sigma2_hat,
                "n_hat": r.n_hat,
                "j_hat": r.j_hat,
                "f0_hat": r.f0.f0_hat,
                "flagged": r.classification.flagged(),
                "status": format!("{:?}", r.status),
                "iterations": r.iterations,
                "sample_loss": loss,
            });
            println!("{}", serde_json::to_string_pretty(&summary).expect("serialisable"));
            record_single("detect", &cfg, input_spec(&detect.input, &cfg)?, &outs)?;
        }
        Command::EstimateSpotvol { common, detect, delta, kernel, out } => {
            let o = Overrides { delta, kernel, ..detect_overrides(&common, &detect) };
            let cfg = RunConfig::resolve(common.config.as_deref(), &o)?;
            let path = io::read_path(&detect.input)?;
            let kernel = kernel_by_name(&cfg.spotvol.kernel)?;
            let b = if cfg.spotvol.truncate {
                run_detection(&cfg, &path)?.thresholds
            } else {
                ThresholdVector::infinite(path.n())
            };
            let delta = match cfg.spotvol.delta {
                Some(d) => d,
                None if cfg.spotvol.plug_in => {
                    let choice = plug_in_bandwidth(&path, &kernel, &b, None, None).context("plug-in bandwidth")?;
                    if choice.fallback {
                        eprintln!("warning: plug-in bandwidth unavailable, using sqrt(h)");
                    }
                    choice.delta
                }
                None => path.h.sqrt(),
            };
            let norm = cfg.normalization();
            let spot = spot_series(&path, delta, &kernel, &b, norm).context("spot variance")?;
            io::write_spot(&out, &path, &spot)?;
            let mid = path.time(path.n() / 2);
            let at_mid = if cfg.spotvol.truncate {
                tkw(&path, mid, delta, &kernel, &b, norm)
            } else {
                kw(&path, mid, delta, &kernel, norm)
            }
            .context("spot variance")?;
            println!("bandwidth {delta:.6e}, spot variance at t={mid:.6}: {at_mid:.6e}");
            let mut spec = input_spec(&detect.input, &cfg)?;
            spec["delta"] = json!(delta);
            record_single("estimate-spotvol", &cfg, spec, &[&out])?;
        }
        Command::EstimateF0 { common, detect, out } => {
            let cfg = RunConfig::resolve(common.config.as_deref(), &detect_overrides(&common, &detect))?;
            let path = io::read_path(&detect.input)?;
            let res = run_detection(&cfg, &path)?;
            let kernel = crate::config::right_kernel_by_name(&cfg.detect.f0_kernel)?;
            let est = tkjump::estimate_f0(&path, &res.thresholds, &kernel, None).context("f0")?;
            io::write_f0(&out, &est)?;
            println!(
                "f0_hat {:.6} from {} exceedances (bandwidth {:.3e}){}",
                est.f0_hat,
                est.exceedance_count,
                est.bandwidth,
                if est.insufficient_data { ", insufficient data" } else { "" }
            );
            record_single("estimate-f0", &cfg, input_spec(&detect.input, &cfg)?, &[&out])?;
        }
        Command::Study { name, common, replicates, full, out, manifest } => {
            let kind = StudyKind::from(name);
            match manifest {
                Some(m) => rerun(kind, &m, &out)?,
                None => {
                    let o = Overrides { replicates, full, ..overrides(&common) };
                    let cfg = RunConfig::resolve(common.config.as_deref(), &o)?;
                    let (_, summary) = run_and_record(kind, &cfg, &out)?;
                    for line in summary {
                        println!("{line}");
                    }
                    println!("wrote {}", out.join(MANIFEST_FILE).display());
                }
            }
        }
    }
    Ok(())
}

fn rerun(kind: StudyKind, manifest: &Path, out: &Path) -> Result<()> {
    let old = Manifest::load(manifest)?;
    if old.study.as_deref() != Some(kind.name()) {
        return Err(ToolError::Usage(format!(
            "manifest records study {:?}, not `{}`",
            old.study.as_deref().unwrap_or("none"),
            kind.name()
        )));
    }
    old.config.validate()?;
    let (new, _) = run_and_record(kind, &old.config, out)?;
    if new.outputs != old.outputs || new.config_sha256 != old.config_sha256 {
        let bad = old.mismatches(out)?;
        return Err(ToolError::Runtime(format!(
            "rerun differs from the manifest: {}",
            bad.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", ")
        )));
    }
    println!("reproduced {} files byte for byte", new.outputs.len());
    Ok(())
}
