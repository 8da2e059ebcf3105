use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::control::certify_gains;
use crate::error::{Error, Result};
use crate::graph::TopologyKind;
use crate::nets::gradcheck;
use crate::sim::{run_scenario, ArchPair, RunSummary, Scenario};

use super::matrix::{run_matrix_with, MatrixConfig};
use super::spectral::spectral_row;

pub const EXIT_OK: i32 = 0;
/// Failed verification (gradcheck, spectral) or invalid input.
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_GAINS: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "lbgnn", version, about = "Online GNN/GAT adaptive control for multi-agent target tracking")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON scenario (`run`, `certify`) or matrix (`matrix`) file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the seed (`run`) or restricts the matrix to this seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Exit with code 2 when the gains fail the sufficient conditions.
    #[arg(long, global = true)]
    pub strict_gains: bool,
    /// Also report square-rooted RMS metrics.
    #[arg(long, global = true)]
    pub sqrt_rms: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one scenario.
    Run {
        /// Topology when no config is given.
        #[arg(long, default_value = "path")]
        topology: TopologyKind,
        /// Architecture pair when no config is given, e.g. `GAT+GNN`.
        #[arg(long, default_value = "GAT+GNN")]
        pair: ArchPair,
    },
    /// Run the topology × architecture × seed grid.
    Matrix,
    /// Compare analytic Jacobians with central differences.
    Gradcheck {
        #[arg(long, default_value_t = 50)]
        configs: usize,
    },
    /// Check the interaction-matrix eigenvalue bounds.
    Spectral {
        /// Agent counts, `A..B` (inclusive) or a single value.
        #[arg(long, default_value = "2..10")]
        n: String,
    },
    /// Evaluate the sufficient gain conditions only.
    Certify {
        #[arg(long, default_value_t = 6)]
        agents: usize,
        /// Lipschitz constant of the target drift; estimated when omitted.
        #[arg(long)]
        lipschitz: Option<f64>,
    },
}

fn parse_range(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::InvalidArgument(format!("expected N or A..B, got `{s}`"));
    let (a, b) = match s.split_once("..") {
        Some((a, b)) => (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?),
        None => {
            let v = s.trim().parse().map_err(|_| bad())?;
            (v, v)
        }
    };
    if a < 2 || a > b {
        return Err(bad());
    }
    Ok((a..=b).collect())
}

fn write_json<T: serde::Serialize>(path: &Path, v: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(v)?)?;
    Ok(())
}

fn load_scenario(common: &Common, topology: TopologyKind, pair: ArchPair) -> Result<Scenario> {
    let mut sc = match &common.config {
        Some(p) => Scenario::load(p)?,
        None => Scenario::standard(topology, pair, 0),
    };
    if let Some(seed) = common.seed {
        sc.control.seed = seed;
    }
    sc.validate()?;
    Ok(sc)
}

fn cmd_run(common: &Common, topology: TopologyKind, pair: ArchPair, out: &mut dyn Write) -> Result<i32> {
    let sc = load_scenario(common, topology, pair)?;
    let cfg = &sc.control;
    let cert = certify_gains(cfg, sc.topology.n_agents, cfg.lipschitz()).ok();
    if common.strict_gains && !cert.as_ref().is_some_and(|c| c.passed) {
        writeln!(out, "gain certificate failed; not running under --strict-gains")?;
        if let Some(c) = &cert {
            writeln!(out, "{}", serde_json::to_string_pretty(c)?)?;
        }
        return Ok(EXIT_GAINS);
    }
    let r = run_scenario(&sc)?;
    let sqrt = match (&r.series, common.sqrt_rms, r.diverged) {
        (Some(s), true, false) => Some(RunSummary::compute(s, true)?),
        _ => None,
    };
    writeln!(out, "{}", serde_json::to_string_pretty(&r)?)?;
    if let Some(s) = &sqrt {
        writeln!(out, "sqrt_rms: {}", serde_json::to_string_pretty(s)?)?;
    }
    if let Some(dir) = &common.out {
        fs::create_dir_all(dir)?;
        write_json(&dir.join("summary.json"), &r)?;
        if let Some(s) = &sqrt {
            write_json(&dir.join("summary_sqrt.json"), s)?;
        }
        if let Some(series) = &r.series {
            series.write_csv(fs::File::create(dir.join("series.csv"))?)?;
        }
    }
    Ok(if r.diverged { EXIT_DIVERGED } else { EXIT_OK })
}

fn cmd_matrix(common: &Common, out: &mut dyn Write) -> Result<i32> {
    let mut cfg = match &common.config {
        Some(p) => MatrixConfig::load(p)?,
        None => MatrixConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seeds = vec![seed];
    }
    cfg.sqrt_rms |= common.sqrt_rms;
    if common.strict_gains {
        for t in &cfg.topologies {
            let c = certify_gains(&cfg.control, t.n_agents, cfg.control.lipschitz());
            if !c.as_ref().is_ok_and(|c| c.passed) {
                writeln!(out, "gain certificate failed for {}; not running under --strict-gains", t.label())?;
                return Ok(EXIT_GAINS);
            }
        }
    }
    let total = cfg.scenarios().len();
    let done = std::sync::atomic::AtomicUsize::new(0);
    let result = run_matrix_with(&cfg, |row| {
        let k = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
        let status = if row.failed() { "FAILED" } else { "ok" };
        eprintln!(
            "[{k}/{total}] {} {} seed={} {status} ({:.1} s)",
            row.topology, row.pair, row.seed, row.elapsed_s
        );
    })?;
    write!(out, "{}", result.markdown())?;
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("results"));
    result.write_outputs(&dir)?;
    writeln!(out, "wrote {}", dir.display())?;
    Ok(if result.rows.iter().any(|r| r.failed()) { EXIT_DIVERGED } else { EXIT_OK })
}

fn cmd_gradcheck(common: &Common, configs: usize, out: &mut dyn Write) -> Result<i32> {
    let report = gradcheck::run_suite(configs, common.seed.unwrap_or(0))?;
    writeln!(
        out,
        "gradcheck: {configs} configurations ({} GNN/GAT cases), max error {:.3e} (tolerance {:e}), max abs {:.3e}, max pointwise rel {:.3e}, {:.2} s",
        report.cases.len(),
        report.max_error,
        gradcheck::REL_TOL,
        report.max_abs_error,
        report.max_pointwise_rel_error,
        report.elapsed.as_secs_f64()
    )?;
    if let Some(dir) = &common.out {
        fs::create_dir_all(dir)?;
        write_json(&dir.join("gradcheck.json"), &report)?;
    }
    Ok(if report.passed() { EXIT_OK } else { EXIT_FAILURE })
}

fn cmd_spectral(range: &str, out: &mut dyn Write) -> Result<i32> {
    let tol = 1e-10;
    writeln!(out, "| N | closed form | eigensolved λ_min | |diff| | max λ_max(L+I) | N+1 |")?;
    writeln!(out, "|---|---|---|---|---|---|")?;
    let mut ok = true;
    for n in parse_range(range)? {
        let r = spectral_row(n)?;
        ok &= r.passed(tol);
        writeln!(
            out,
            "| {} | {:.12} | {:.12} | {:.2e} | {:.12} | {} |",
            r.n, r.closed_form, r.path_lambda_min, r.abs_error, r.max_lambda_max, r.bound
        )?;
    }
    Ok(if ok { EXIT_OK } else { EXIT_FAILURE })
}

fn cmd_certify(common: &Common, agents: usize, lipschitz: Option<f64>, out: &mut dyn Write) -> Result<i32> {
    let (cfg, n) = match &common.config {
        Some(p) => {
            let sc = Scenario::load(p)?;
            (sc.control, sc.topology.n_agents)
        }
        None => (Scenario::standard(TopologyKind::Path, ArchPair::GAT_GNN, 0).control, agents),
    };
    let l = lipschitz.unwrap_or_else(|| cfg.lipschitz());
    let c = certify_gains(&cfg, n, l)?;
    writeln!(out, "{}", serde_json::to_string_pretty(&c)?)?;
    if let Some(dir) = &common.out {
        fs::create_dir_all(dir)?;
        write_json(&dir.join("certificate.json"), &c)?;
    }
    Ok(if common.strict_gains && !c.passed { EXIT_GAINS } else { EXIT_OK })
}

/// Parses `args` (program name first) and runs the command, writing the
/// report to `out`. Returns the process exit code.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_FAILURE } else { EXIT_OK };
            let _ = write!(out, "{e}");
            return code;
        }
    };
    let r = match &cli.command {
        Command::Run { topology, pair } => cmd_run(&cli.common, *topology, *pair, out),
        Command::Matrix => cmd_matrix(&cli.common, out),
        Command::Gradcheck { configs } => cmd_gradcheck(&cli.common, *configs, out),
        Command::Spectral { n } => cmd_spectral(n, out),
        Command::Certify { agents, lipschitz } => cmd_certify(&cli.common, *agents, *lipschitz, out),
    };
    match r {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(out, "error: {e}");
            EXIT_FAILURE
        }
    }
}
