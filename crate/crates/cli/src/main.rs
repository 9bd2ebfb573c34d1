//! `pkrg`: solve, analyze, cover, dimension, verify, report, run.
//!
//! Exit codes: 0 ok, 1 numeric failure, 2 usage or configuration error.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod manifest;
mod pipeline;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use config::{Config, ConfigError, InitialKind, Stage};
use pkrg::suites;

#[derive(Parser)]
#[command(name = "pkrg", version, about = "Hyperdissipative Navier-Stokes packet laboratory")]
struct Cli {
    /// Worker threads for intra-stage parallelism (default: all cores).
    #[arg(long, global = true, env = "PKRG_THREADS")]
    threads: Option<usize>,
    /// TOML configuration; `PKRG_<SECTION>__<KEY>` variables override it.
    #[arg(long, global = true, env = "PKRG_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate and write checkpoints, energy.csv, sup.csv, trajectory.json.
    Solve {
        #[arg(long)]
        alpha: Option<f64>,
        /// Grid points per axis.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long = "t-end")]
        t_end: Option<f64>,
        /// taylor-green | random-band
        #[arg(long)]
        ic: Option<String>,
        /// Band of the random-band initial condition.
        #[arg(long)]
        band: Option<i32>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long = "snapshot-every")]
        snapshot_every: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Packets and local-estimate terms of a solved run.
    Analyze {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        epsilon: Option<f64>,
        /// Comma-separated bands.
        #[arg(long, value_delimiter = ',')]
        bands: Option<Vec<i32>>,
        /// Skip the finite-difference packet rates.
        #[arg(long = "no-flux-check")]
        no_flux_check: bool,
        /// Output directory (defaults to the run directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classify cubes and build the covers and barriers.
    Cover {
        #[arg(long)]
        run: PathBuf,
        /// Levels j (repeat or comma-separate).
        #[arg(long, value_delimiter = ',')]
        j: Option<Vec<i32>>,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        /// `start:end` in simulation time.
        #[arg(long)]
        window: Option<String>,
        #[arg(long = "barrier-points")]
        barrier_points: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Box-counting estimates from covers.json, or from Cantor dust.
    Dimension {
        #[arg(long, required_unless_present = "cantor")]
        covers: Option<PathBuf>,
        /// Exponent for the reported bounds (defaults to the covers' alpha).
        #[arg(long)]
        alpha: Option<f64>,
        /// Estimate the middle-thirds Cantor dust with this many levels instead.
        #[arg(long)]
        cantor: Option<u32>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run acceptance suites (`all` or a suite name).
    Verify {
        suite: String,
        /// Machine-readable results file.
        #[arg(long, default_value = "verify-results.json")]
        results: PathBuf,
    },
    /// Summarize the artifacts of a run directory.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
    /// Execute the configured stages and write manifest.json.
    Run,
}

/// Command-line misuse that clap cannot detect.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn exit_code(e: &anyhow::Error) -> u8 {
    let usage = e.chain().any(|c| {
        c.is::<UsageError>()
            || c.is::<ConfigError>()
            || matches!(c.downcast_ref::<pkrg::Error>(), Some(pkrg::Error::Config(_)))
    });
    if usage {
        2
    } else {
        1
    }
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    Ok(Config::load(path)?)
}

fn revalidate(cfg: Config, stage: Stage) -> Result<Config> {
    cfg.validate_for(&[stage])?;
    Ok(cfg)
}

fn ensure_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))
}

fn parse_window(s: &str) -> Result<(f64, f64)> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| usage(format!("--window expects start:end, got '{s}'")))?;
    let p = |x: &str| {
        x.trim()
            .parse::<f64>()
            .map_err(|_| usage(format!("--window: '{x}' is not a number")))
    };
    Ok((p(a)?, p(b)?))
}

fn list(files: &[PathBuf]) {
    for f in files {
        println!("wrote {}", f.display());
    }
}

fn run(cli: Cli) -> Result<u8> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!(usage("--threads must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let cfg_path = cli.config.as_deref();
    match cli.command {
        Command::Solve { alpha, n, dt, t_end, ic, band, seed, snapshot_every, out } => {
            let mut cfg = load_config(cfg_path)?;
            let s = &mut cfg.solver;
            s.alpha = alpha.unwrap_or(s.alpha);
            s.grid_points = n.unwrap_or(s.grid_points);
            s.dt_seconds = dt.unwrap_or(s.dt_seconds);
            s.t_end_seconds = t_end.unwrap_or(s.t_end_seconds);
            s.initial_band = band.unwrap_or(s.initial_band);
            s.snapshot_every = snapshot_every.unwrap_or(s.snapshot_every);
            if let Some(ic) = ic {
                s.initial_condition = match ic.as_str() {
                    "taylor-green" => InitialKind::TaylorGreen,
                    "random-band" => InitialKind::RandomBand,
                    other => bail!(usage(format!("--ic: unknown initial condition '{other}'"))),
                };
            }
            cfg.run.seed = seed.unwrap_or(cfg.run.seed);
            let cfg = revalidate(cfg, Stage::Solve)?;
            ensure_dir(&out)?;
            list(&pipeline::solve(&cfg, &out)?);
        }
        Command::Analyze { run, epsilon, bands, no_flux_check, out } => {
            let mut cfg = load_config(cfg_path)?;
            let (meta, _) = pipeline::load_run(&run)?;
            cfg.solver.alpha = meta.alpha;
            cfg.solver.grid_points = meta.grid_points;
            cfg.solver.period_length = meta.period_length;
            cfg.analysis.epsilon = epsilon.unwrap_or(cfg.analysis.epsilon);
            cfg.analysis.bands = bands.unwrap_or(cfg.analysis.bands);
            cfg.analysis.flux_check &= !no_flux_check;
            let cfg = revalidate(cfg, Stage::Analyze)?;
            let out = out.unwrap_or_else(|| run.clone());
            ensure_dir(&out)?;
            list(&pipeline::analyze(&cfg, &run, &out)?);
        }
        Command::Cover { run, j, eta, epsilon, window, barrier_points, out } => {
            let mut cfg = load_config(cfg_path)?;
            let (meta, _) = pipeline::load_run(&run)?;
            cfg.solver.alpha = meta.alpha;
            cfg.solver.grid_points = meta.grid_points;
            cfg.solver.period_length = meta.period_length;
            cfg.analysis.epsilon = epsilon.unwrap_or(cfg.analysis.epsilon);
            let c = &mut cfg.covering;
            c.levels = j.unwrap_or(std::mem::take(&mut c.levels));
            c.eta = eta.unwrap_or(c.eta);
            c.barrier_points = barrier_points.unwrap_or(c.barrier_points);
            if let Some(w) = window {
                let (a, b) = parse_window(&w)?;
                c.window_start_seconds = Some(a);
                c.window_end_seconds = Some(b);
            }
            let cfg = revalidate(cfg, Stage::Cover)?;
            let out = out.unwrap_or_else(|| run.clone());
            ensure_dir(&out)?;
            list(&pipeline::cover(&cfg, &run, &out)?);
        }
        Command::Dimension { covers, alpha, cantor, out } => {
            let cfg = load_config(cfg_path)?;
            let estimates = match (cantor, covers) {
                (Some(levels), _) => {
                    vec![pipeline::cantor_estimate(levels, alpha.unwrap_or(cfg.solver.alpha))?]
                }
                (None, Some(path)) => {
                    let doc = pipeline::read_covers(&path)?;
                    pipeline::dimension_estimates(&doc, alpha.unwrap_or(doc.alpha), cfg.dimension.box_levels)?
                }
                (None, None) => bail!(usage("dimension needs --covers or --cantor")),
            };
            for e in &estimates {
                match &e.fit {
                    Some(f) => println!("{}: slope {:.4} (residual {:.2e})", e.provenance, f.slope, f.residual),
                    None => println!("{}: too few usable scales for a fit", e.provenance),
                }
            }
            let out = out.unwrap_or_else(|| PathBuf::from("."));
            ensure_dir(&out)?;
            list(&pipeline::write_dimension(&estimates, &out)?);
        }
        Command::Verify { suite, results } => {
            let outcomes = if suite == "all" {
                suites::run_all()
            } else {
                suites::run_suite(&suite).map_err(|e| usage(e.to_string()))?
            };
            for o in &outcomes {
                println!("{}", o.line());
            }
            fs::write(&results, serde_json::to_string_pretty(&outcomes)?)
                .with_context(|| format!("writing {}", results.display()))?;
            if outcomes.iter().any(|o| !o.passed) {
                return Ok(1);
            }
        }
        Command::Report { run } => report(&run)?,
        Command::Run => {
            let Some(path) = cfg_path else {
                bail!(usage("run needs --config"));
            };
            let cfg = load_config(Some(path))?;
            cfg.validate()?;
            let m = pipeline::run_pipeline(&cfg)?;
            for s in &m.stages {
                println!("{}: {} artifact(s) in {:.2} s", s.name, s.artifacts.len(), s.wall_clock_seconds);
            }
            println!("manifest: {}", cfg.run.output_dir.join("manifest.json").display());
        }
    }
    Ok(0)
}

fn read_json(path: &Path) -> Result<Option<serde_json::Value>> {
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Some(serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?))
}

fn report(dir: &Path) -> Result<()> {
    let mut out = serde_json::Map::new();
    if let Some(t) = read_json(&dir.join(pipeline::TRAJECTORY))? {
        out.insert(
            "solve".into(),
            json!({
                "alpha": t["alpha"],
                "grid_points": t["grid_points"],
                "snapshots": t["snapshots"].as_array().map_or(0, Vec::len),
                "energy_report": t["energy_report"],
                "sup_max": t["sup_max"],
                "max_divergence": t["max_divergence"],
            }),
        );
    }
    if let Some(c) = read_json(&dir.join(pipeline::COVERS))? {
        let fams: Vec<_> = c["families"]
            .as_array()
            .into_iter()
            .flatten()
            .map(|f| {
                json!({
                    "level": f["level"],
                    "provenance": f["provenance"],
                    "cardinality": f["cardinality"],
                    "measured_constant": f["measured_constant"],
                })
            })
            .collect();
        out.insert("covers".into(), json!(fams));
    }
    if let Some(b) = read_json(&dir.join("barriers.json"))? {
        let lv: Vec<_> = b
            .as_array()
            .into_iter()
            .flatten()
            .map(|l| json!({ "j": l["j"], "tested": l["tested"], "found": l["found"], "not_found": l["not_found"] }))
            .collect();
        out.insert("barriers".into(), json!(lv));
    }
    if let Some(d) = read_json(&dir.join("dimension.json"))? {
        out.insert("dimension".into(), d);
    }
    if let Some(m) = read_json(&dir.join("manifest.json"))? {
        out.insert("manifest".into(), m);
    }
    if out.is_empty() {
        bail!(usage(format!("{} holds no pkrg artifacts", dir.display())));
    }
    // a closed pipe (e.g. `| head`) is not an error
    let _ = writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
