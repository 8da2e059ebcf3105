//! Randomised comparison of analytic Jacobians against central differences.
//!
//! The step is fixed at `1e-6`. Truncation error scales like `h²` and is
//! negligible there, while round-off contributes roughly `ε‖φ‖/h ≈ 1e-10`
//! absolute, so entries are compared with `|a − f| ≤ max(1e-8, 1e-6 |f|)`.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::graph::{Topology, TopologyKind};

use super::{finite_diff_jacobian, Architecture, LayerSpec, Network};

pub const STEP: f64 = 1e-6;
pub const REL_TOL: f64 = 1e-6;
pub const ABS_TOL: f64 = 1e-8;

/// Outcome for one random network/graph configuration.
#[derive(Debug, Clone, Serialize)]
pub struct CaseReport {
    pub arch: Architecture,
    pub topology: String,
    pub hidden: Vec<usize>,
    pub d_in: usize,
    pub d_out: usize,
    pub blocks: usize,
    /// Largest `|a − f| / max(|f|, ABS_TOL / REL_TOL)`; `≤ REL_TOL` passes.
    pub max_error: f64,
    /// Largest `|a − f|`.
    pub max_abs_error: f64,
    /// Largest `|a − f| / |f|` over entries with `|f| ≥ ABS_TOL`.
    pub max_pointwise_rel_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub cases: Vec<CaseReport>,
    pub max_error: f64,
    pub max_abs_error: f64,
    pub max_pointwise_rel_error: f64,
    pub elapsed: Duration,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.max_error <= REL_TOL
    }
}

/// Per-entry error, normalised so that `≤ REL_TOL` means
/// `|a − f| ≤ max(ABS_TOL, REL_TOL |f|)`.
pub fn entry_error(analytic: f64, fd: f64) -> f64 {
    (analytic - fd).abs() / fd.abs().max(ABS_TOL / REL_TOL)
}

/// Checks every `(i, z)` block of one configuration.
pub fn check_case(
    net: &Network,
    graph: &Topology,
    thetas: &[Vec<f64>],
    inputs: &[Vec<f64>],
) -> Result<CaseReport> {
    let n = graph.n_agents();
    let t_refs: Vec<&[f64]> = thetas.iter().map(Vec::as_slice).collect();
    let x_refs: Vec<&[f64]> = inputs.iter().map(Vec::as_slice).collect();
    let acts = net.forward(graph, &t_refs, &x_refs)?;
    let analytic = (0..n)
        .map(|i| net.jacobians(graph, &t_refs, &acts, i))
        .collect::<Result<Vec<_>>>()?;
    let d_out = net.spec().d_out;
    let (mut max_error, mut max_abs, mut max_rel) = (0.0f64, 0.0f64, 0.0f64);
    for z in 0..n {
        // one difference sweep over θ_z yields the blocks J_{i,z} for every i
        let fd = finite_diff_jacobian(
            |t| {
                let mut th = t_refs.clone();
                th[z] = t;
                net.forward(graph, &th, &x_refs)
                    .map(|a| a.outputs.concat())
                    .unwrap_or_default()
            },
            &thetas[z],
            STEP,
        )?;
        for (i, jac) in analytic.iter().enumerate() {
            let block = jac.get(z);
            for r in 0..d_out {
                for c in 0..net.param_count() {
                    let f = fd[(i * d_out + r, c)];
                    let a = block.map_or(0.0, |b| b[(r, c)]);
                    let d = (a - f).abs();
                    max_error = max_error.max(entry_error(a, f));
                    max_abs = max_abs.max(d);
                    if f.abs() >= ABS_TOL {
                        max_rel = max_rel.max(d / f.abs());
                    }
                }
            }
        }
    }
    Ok(CaseReport {
        arch: net.arch(),
        topology: format!("{} edges={:?}", n, graph.edges()),
        hidden: net.spec().hidden.clone(),
        d_in: net.spec().d_in,
        d_out,
        blocks: n * n,
        max_error,
        max_abs_error: max_abs,
        max_pointwise_rel_error: max_rel,
    })
}

/// Draws a random configuration: `N ∈ 1..=4`, `k ∈ {1, 2}`, widths `≤ 6`,
/// tanh hidden layers, weights and inputs uniform in `[-1, 1]`.
pub fn random_case(
    rng: &mut ChaCha8Rng,
    arch: Architecture,
) -> Result<(Network, Topology, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let n = rng.gen_range(1..=4);
    let graph = if n == 1 {
        Topology::isolated(1)
    } else {
        let kinds: Vec<TopologyKind> = TopologyKind::ALL
            .iter()
            .copied()
            .filter(|k| *k != TopologyKind::Ring || n >= 3)
            .collect();
        Topology::build(*kinds.choose(rng).expect("nonempty"), n)?
    };
    let depth = rng.gen_range(1..=2);
    let hidden = (0..depth).map(|_| rng.gen_range(1..=6)).collect();
    let spec = LayerSpec::new(rng.gen_range(1..=6), hidden, rng.gen_range(1..=6));
    let net = Network::new(spec, arch)?;
    let thetas = (0..n)
        .map(|_| (0..net.param_count()).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let inputs = (0..n)
        .map(|_| (0..net.spec().d_in).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    Ok((net, graph, thetas, inputs))
}

/// Runs `n_configs` random configurations, each checked as both GNN and GAT.
pub fn run_suite(n_configs: usize, seed: u64) -> Result<SuiteReport> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::with_capacity(2 * n_configs);
    for _ in 0..n_configs {
        let case_seed = rng.gen();
        for arch in [Architecture::Gnn, Architecture::Gat] {
            let mut case_rng = ChaCha8Rng::seed_from_u64(case_seed);
            let (net, g, thetas, inputs) = random_case(&mut case_rng, arch)?;
            cases.push(check_case(&net, &g, &thetas, &inputs)?);
        }
    }
    let fold = |f: fn(&CaseReport) -> f64| cases.iter().map(f).fold(0.0, f64::max);
    Ok(SuiteReport {
        seed,
        max_error: fold(|c| c.max_error),
        max_abs_error: fold(|c| c.max_abs_error),
        max_pointwise_rel_error: fold(|c| c.max_pointwise_rel_error),
        cases,
        elapsed: start.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entry_error_switches_to_absolute_near_zero() {
        assert!(entry_error(1e-9, 0.0) <= REL_TOL);
        assert!(entry_error(2e-8, 0.0) > REL_TOL);
        assert!(entry_error(1.0 + 5e-7, 1.0) <= REL_TOL);
        assert!(entry_error(1.0 + 2e-6, 1.0) > REL_TOL);
    }

    #[test]
    fn small_suite_passes() {
        let report = run_suite(4, 3).unwrap();
        assert_eq!(report.cases.len(), 8);
        assert!(report.passed(), "max error {}", report.max_error);
    }

    #[test]
    fn detects_a_wrong_jacobian() {
        // perturb the weights seen by the difference sweep but not the analytic pass
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (net, g, thetas, inputs) = random_case(&mut rng, Architecture::Gnn).unwrap();
        let ok = check_case(&net, &g, &thetas, &inputs).unwrap();
        assert!(ok.max_error <= REL_TOL);
        let shifted: Vec<Vec<f64>> = thetas.iter().map(|t| t.iter().map(|v| v * 1.01).collect()).collect();
        let t_refs: Vec<&[f64]> = shifted.iter().map(Vec::as_slice).collect();
        let x_refs: Vec<&[f64]> = inputs.iter().map(Vec::as_slice).collect();
        let acts = net.forward(&g, &t_refs, &x_refs).unwrap();
        let a = net.jacobian(&g, &t_refs, &acts, 0, 0).unwrap();
        let t0: Vec<&[f64]> = thetas.iter().map(Vec::as_slice).collect();
        let acts0 = net.forward(&g, &t0, &x_refs).unwrap();
        let b = net.jacobian(&g, &t0, &acts0, 0, 0).unwrap();
        let worst = a.iter().zip(b.iter()).map(|(x, y)| entry_error(*x, *y)).fold(0.0, f64::max);
        assert!(worst > REL_TOL);
    }
}
