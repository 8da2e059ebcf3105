use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::ControlConfig;
use crate::error::{Error, Result};
use crate::graph::{TopologyConfig, TopologyKind};
use crate::sim::{
    run_scenario, ArchPair, InitialConditions, NetworkConfig, RunSummary, Scenario,
    DEFAULT_INTERACTION_FLOOR, TRANSIENT_WINDOW,
};

use super::metrics::mean_std;

/// Grid of topologies × architecture pairs × seeds sharing one set of gains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatrixConfig {
    pub topologies: Vec<TopologyConfig>,
    pub pairs: Vec<ArchPair>,
    pub seeds: Vec<u64>,
    /// Gains and run settings; `seed` is overwritten per run.
    pub control: ControlConfig,
    pub initial: InitialConditions,
    pub interaction_floor: f64,
    pub divergence_threshold: f64,
    pub weight_clamp: bool,
    /// Also report the square root of every mean-square metric.
    pub sqrt_rms: bool,
}

impl Default for MatrixConfig {
    fn default() -> Self {
        Self {
            topologies: TopologyKind::ALL
                .iter()
                .map(|&k| TopologyConfig::named(k, 6))
                .collect(),
            pairs: ArchPair::STANDARD.to_vec(),
            seeds: (0..5).collect(),
            control: ControlConfig::default(),
            initial: InitialConditions::default(),
            interaction_floor: DEFAULT_INTERACTION_FLOOR,
            divergence_threshold: 1e6,
            weight_clamp: true,
            sqrt_rms: false,
        }
    }
}

impl MatrixConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.topologies.is_empty() || self.pairs.is_empty() || self.seeds.is_empty() {
            return Err(Error::InvalidArgument(
                "matrix needs at least one topology, pair and seed".into(),
            ));
        }
        self.control.validate_allow_zero()
    }

    /// One scenario per cell and seed, in table order.
    pub fn scenarios(&self) -> Vec<Scenario> {
        let mut out = Vec::new();
        for t in &self.topologies {
            for &p in &self.pairs {
                for &seed in &self.seeds {
                    out.push(Scenario {
                        name: None,
                        topology: t.clone(),
                        observer: NetworkConfig::new(p.observer),
                        controller: NetworkConfig::new(p.controller),
                        control: ControlConfig {
                            seed,
                            ..self.control.clone()
                        },
                        initial: self.initial.clone(),
                        interaction_floor: self.interaction_floor,
                        divergence_threshold: self.divergence_threshold,
                        record_every: 1,
                        weight_clamp: self.weight_clamp,
                    });
                }
            }
        }
        out
    }
}

/// One run of the matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub topology: String,
    pub pair: ArchPair,
    pub seed: u64,
    pub diverged: bool,
    pub failure: Option<String>,
    pub summary: Option<RunSummary>,
    pub sqrt_summary: Option<RunSummary>,
    pub max_theta1_sq: f64,
    pub max_theta2_sq: f64,
    pub projection_bound: f64,
    pub projection_clamps: usize,
    pub max_projection_excess: f64,
    pub certificate_passed: Option<bool>,
    pub elapsed_s: f64,
}

impl RunRow {
    pub fn failed(&self) -> bool {
        self.diverged || self.summary.is_none()
    }
}

/// Mean and sample standard deviation of one (topology, pair) cell over
/// the runs that did not fail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub topology: String,
    pub pair: ArchPair,
    pub runs: usize,
    pub failed: usize,
    pub mean: Option<RunSummary>,
    pub std: Option<RunSummary>,
    pub sqrt_mean: Option<RunSummary>,
    pub sqrt_std: Option<RunSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixResult {
    pub config: MatrixConfig,
    pub rows: Vec<RunRow>,
    pub cells: Vec<CellResult>,
    pub elapsed_s: f64,
}

fn run_one(sc: &Scenario, sqrt: bool) -> RunRow {
    let start = Instant::now();
    let base = RunRow {
        topology: sc.topology.label(),
        pair: sc.pair(),
        seed: sc.control.seed,
        diverged: false,
        failure: None,
        summary: None,
        sqrt_summary: None,
        max_theta1_sq: f64::NAN,
        max_theta2_sq: f64::NAN,
        projection_bound: sc.control.theta_bar * sc.control.theta_bar + sc.control.band(),
        projection_clamps: 0,
        max_projection_excess: 0.0,
        certificate_passed: None,
        elapsed_s: 0.0,
    };
    match run_scenario(sc) {
        Ok(r) => {
            let sqrt_summary = match (&r.series, r.diverged, sqrt) {
                (Some(s), false, true) => RunSummary::compute(s, true).ok(),
                _ => None,
            };
            RunRow {
                diverged: r.diverged,
                failure: r.failure,
                summary: r.summary,
                sqrt_summary,
                max_theta1_sq: r.max_theta1_sq,
                max_theta2_sq: r.max_theta2_sq,
                projection_clamps: r.projection_clamps,
                max_projection_excess: r.max_projection_excess,
                certificate_passed: r.certificate.map(|c| c.passed),
                elapsed_s: start.elapsed().as_secs_f64(),
                ..base
            }
        }
        Err(e) => RunRow {
            failure: Some(e.to_string()),
            elapsed_s: start.elapsed().as_secs_f64(),
            ..base
        },
    }
}

fn aggregate(summaries: &[&RunSummary]) -> Option<(RunSummary, RunSummary)> {
    if summaries.is_empty() {
        return None;
    }
    let cols: Vec<[f64; RunSummary::FIELDS]> = summaries.iter().map(|s| s.to_array()).collect();
    let mut mean = [0.0; RunSummary::FIELDS];
    let mut std = [0.0; RunSummary::FIELDS];
    for f in 0..RunSummary::FIELDS {
        let xs: Vec<f64> = cols.iter().map(|c| c[f]).collect();
        (mean[f], std[f]) = mean_std(&xs);
    }
    Some((RunSummary::from_array(mean), RunSummary::from_array(std)))
}

/// Runs every scenario of the grid in parallel. A run that fails or diverges
/// is recorded and excluded from its cell's statistics; the rest continue.
/// `progress` is called once per finished run.
pub fn run_matrix_with<F>(config: &MatrixConfig, progress: F) -> Result<MatrixResult>
where
    F: Fn(&RunRow) + Sync,
{
    config.validate()?;
    let start = Instant::now();
    let scenarios = config.scenarios();
    let rows: Vec<RunRow> = scenarios
        .par_iter()
        .map(|sc| {
            let row = run_one(sc, config.sqrt_rms);
            progress(&row);
            row
        })
        .collect();
    let mut cells = Vec::new();
    for t in &config.topologies {
        let label = t.label();
        for &p in &config.pairs {
            let members: Vec<&RunRow> = rows.iter().filter(|r| r.topology == label && r.pair == p).collect();
            let ok: Vec<&RunSummary> = members.iter().filter_map(|r| r.summary.as_ref()).collect();
            let ok_sqrt: Vec<&RunSummary> = members.iter().filter_map(|r| r.sqrt_summary.as_ref()).collect();
            let (mean, std) = aggregate(&ok).unzip();
            let (sqrt_mean, sqrt_std) = aggregate(&ok_sqrt).unzip();
            cells.push(CellResult {
                topology: label.clone(),
                pair: p,
                runs: members.len(),
                failed: members.iter().filter(|r| r.failed()).count(),
                mean,
                std,
                sqrt_mean,
                sqrt_std,
            });
        }
    }
    Ok(MatrixResult {
        config: config.clone(),
        rows,
        cells,
        elapsed_s: start.elapsed().as_secs_f64(),
    })
}

pub fn run_matrix(config: &MatrixConfig) -> Result<MatrixResult> {
    run_matrix_with(config, |_| {})
}

fn title(t: &TopologyConfig) -> String {
    format!("{} ({})", t.kind.title(), t.label())
}

impl MatrixResult {
    pub fn cell(&self, topology: &str, pair: ArchPair) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.topology == topology && c.pair == pair)
    }

    pub fn projection_respected(&self, slack: f64) -> bool {
        self.rows.iter().all(|r| {
            r.max_theta1_sq <= r.projection_bound + slack && r.max_theta2_sq <= r.projection_bound + slack
        })
    }

    /// Markdown table with one section per topology and one row per pair,
    /// in the column order `e, ė, Φ̃₁ early, Φ̃₁ late, Φ̃₂ early, Φ̃₂ late, u`.
    pub fn markdown(&self) -> String {
        let mut s = self.markdown_table(false);
        if self.config.sqrt_rms {
            s.push_str("\n## Root-mean-square variant\n\n");
            s.push_str(&self.markdown_table(true));
        }
        s
    }

    fn markdown_table(&self, sqrt: bool) -> String {
        let t_end = self.config.control.duration;
        let split = TRANSIENT_WINDOW.min(t_end);
        let headers = [
            "e_RMS".to_string(),
            "ė_RMS".to_string(),
            format!("Φ̃₁_RMS[0:{split}]"),
            format!("Φ̃₁_RMS[{split}:{t_end}]"),
            format!("Φ̃₂_RMS[0:{split}]"),
            format!("Φ̃₂_RMS[{split}:{t_end}]"),
            "u_RMS".to_string(),
        ];
        let mut s = String::new();
        let n_seeds = self.config.seeds.len();
        let _ = writeln!(s, "Mean ± sample std over {n_seeds} seed(s).\n");
        for t in &self.config.topologies {
            let _ = writeln!(s, "### {}\n", title(t));
            let _ = writeln!(s, "| NN Architecture | {} |", headers.join(" | "));
            let _ = writeln!(s, "|---|{}", "---|".repeat(headers.len()));
            for &p in &self.config.pairs {
                let Some(c) = self.cell(&t.label(), p) else { continue };
                let (mean, std) = if sqrt { (&c.sqrt_mean, &c.sqrt_std) } else { (&c.mean, &c.std) };
                let cols: Vec<String> = match (mean, std) {
                    (Some(m), Some(d)) => m
                        .table_columns()
                        .iter()
                        .zip(d.table_columns())
                        .map(|(a, b)| format!("{a:.4} ± {b:.4}"))
                        .collect(),
                    _ => vec!["n/a".to_string(); headers.len()],
                };
                let mark = if c.failed > 0 {
                    format!(" ({}/{} failed)", c.failed, c.runs)
                } else {
                    String::new()
                };
                let _ = writeln!(s, "| {p}{mark} | {} |", cols.join(" | "));
            }
            s.push('\n');
        }
        s
    }

    /// One CSV line per run.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "topology,pair,seed,diverged,{},max_theta1_sq,max_theta2_sq,projection_bound,projection_clamps,max_projection_excess,elapsed_s",
            RunSummary::NAMES.join(",")
        )?;
        for r in &self.rows {
            let metrics: Vec<String> = match &r.summary {
                Some(s) => s.to_array().iter().map(|v| format!("{v:e}")).collect(),
                None => vec![String::new(); RunSummary::FIELDS],
            };
            writeln!(
                out,
                "{},{},{},{},{},{:e},{:e},{:e},{},{:e},{:.3}",
                r.topology,
                r.pair,
                r.seed,
                r.diverged,
                metrics.join(","),
                r.max_theta1_sq,
                r.max_theta2_sq,
                r.projection_bound,
                r.projection_clamps,
                r.max_projection_excess,
                r.elapsed_s
            )?;
        }
        Ok(())
    }

    /// Writes `matrix.md`, `runs.csv` and `summary.json` into `dir`.
    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("matrix.md"), self.markdown())?;
        self.write_csv(fs::File::create(dir.join("runs.csv"))?)?;
        fs::write(dir.join("summary.json"), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
