//! Acceptance suite. Runs without the libtest harness so every criterion
//! prints one PASS/FAIL line; exits nonzero when any criterion fails.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lbgnn::control::{certify_gains, ControlConfig};
use lbgnn::graph::{Topology, TopologyKind};
use lbgnn::harness::{rms, run_matrix_with, spectral_row, MatrixConfig, MatrixResult, SignalSeries, Window};
use lbgnn::nets::{gradcheck, Architecture, LayerSpec, Network};
use lbgnn::sim::ArchPair;

struct Outcome {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn outcome(name: &'static str, passed: bool, detail: String) -> Outcome {
    let tag = if passed { "PASS" } else { "FAIL" };
    println!("{tag} {name}: {detail}");
    Outcome { name, passed, detail }
}

fn jacobian_suite() -> Outcome {
    let report = gradcheck::run_suite(50, 0).expect("gradcheck suite");
    let ok = report.passed() && report.cases.len() == 100 && report.elapsed < Duration::from_secs(60);
    outcome(
        "jacobian suite",
        ok,
        format!(
            "50 configurations ({} GNN/GAT cases), max error {:.2e} (tol {:e}), {:.1} s (limit 60 s)",
            report.cases.len(),
            report.max_error,
            gradcheck::REL_TOL,
            report.elapsed.as_secs_f64()
        ),
    )
}

fn spectral_bounds() -> Outcome {
    let tol = 1e-10;
    let mut worst_min = 0.0f64;
    let mut worst_ratio = 0.0f64;
    let mut ok = true;
    for n in 2..=10 {
        let r = spectral_row(n).expect("spectral row");
        // independent closed form
        let cf = 2.0 * (1.0 + (2.0 * n as f64 * std::f64::consts::PI / (2.0 * n as f64 + 1.0)).cos());
        let err = (r.path_lambda_min - cf).abs();
        worst_min = worst_min.max(err);
        worst_ratio = worst_ratio.max(r.max_lambda_max - (n as f64 + 1.0));
        ok &= err <= tol && r.max_lambda_max <= n as f64 + 1.0 + tol;
    }
    outcome(
        "spectral bounds",
        ok,
        format!("N=2..10, max |λ_min − closed form| {worst_min:.2e}, max λ_max − (N+1) {worst_ratio:.2e}"),
    )
}

fn permutation_equivariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst = 0.0f64;
    for arch in [Architecture::Gnn, Architecture::Gat] {
        let net = Network::new(LayerSpec::new(6, vec![24, 24], 3), arch).unwrap();
        for trial in 0..20 {
            let g = Topology::build(TopologyKind::ALL[trial % 5], 5).unwrap();
            let thetas: Vec<Vec<f64>> = (0..5)
                .map(|_| (0..net.param_count()).map(|_| rng.gen_range(-0.5..0.5)).collect())
                .collect();
            let inputs: Vec<Vec<f64>> = (0..5).map(|_| (0..6).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
            let mut perm: Vec<usize> = (0..5).collect();
            rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
            let t: Vec<&[f64]> = thetas.iter().map(Vec::as_slice).collect();
            let x: Vec<&[f64]> = inputs.iter().map(Vec::as_slice).collect();
            worst = worst.max(net.equivariance_error(&g, &t, &x, &perm).unwrap());
        }
    }
    outcome(
        "permutation equivariance",
        worst <= 1e-12,
        format!("GNN and GAT, 20 permutations each on N=5, max deviation {worst:.2e} (tol 1e-12)"),
    )
}

fn projection_invariance(m: &MatrixResult) -> Outcome {
    let slack = 1e-9;
    let worst = m
        .rows
        .iter()
        .map(|r| r.max_theta1_sq.max(r.max_theta2_sq) - r.projection_bound)
        .fold(f64::NEG_INFINITY, f64::max);
    let ok = m.projection_respected(slack) && m.rows.len() == 75;
    let clamps: usize = m.rows.iter().map(|r| r.projection_clamps).sum();
    let clamped_runs = m.rows.iter().filter(|r| r.projection_clamps > 0).count();
    let pre = m.rows.iter().map(|r| r.max_projection_excess).fold(0.0, f64::max);
    outcome(
        "projection invariance",
        ok,
        format!(
            "{} runs, max (‖θ‖² − (θ̄² + c)) = {worst:.4e} (slack {slack:e}); \
             {clamps} post-step rescalings in {clamped_runs} runs, max excess before rescaling {pre:.4e}",
            m.rows.len()
        ),
    )
}

fn closed_loop(m: &MatrixResult) -> Vec<Outcome> {
    let d = ControlConfig::default();
    let gains = [d.alpha1, d.alpha2, d.k1, d.k2, d.k3, d.k4, d.gamma1, d.gamma2, d.duration];
    let reference = [0.85, 2.45, 6.5, 3.85, 0.01, 0.08, 0.875, 0.875, 60.0];
    assert_eq!(gains, reference, "matrix must use the reference gains");

    let rows: Vec<_> = m.rows.iter().filter(|r| r.topology == "P6").collect();
    let failed = rows.iter().filter(|r| r.failed()).count();
    let slowest = rows.iter().map(|r| r.elapsed_s).fold(0.0, f64::max);
    let mut out = vec![outcome(
        "closed loop (a) bounded",
        rows.len() == 15 && failed == 0,
        format!("{} P6 runs, {failed} diverged, slowest {slowest:.1} s", rows.len()),
    )];

    let cell = |p: ArchPair| m.cell("P6", p).and_then(|c| c.mean.clone());
    let (Some(dnn), Some(gnn), Some(gat)) = (cell(ArchPair::DNN_DNN), cell(ArchPair::GNN_GNN), cell(ArchPair::GAT_GNN))
    else {
        out.push(outcome("closed loop (b)-(d)", false, "missing P6 cell means".into()));
        return out;
    };
    out.push(outcome(
        "closed loop (b) ordering",
        gat.e_rms < gnn.e_rms && gnn.e_rms < dnn.e_rms,
        format!(
            "mean e_RMS GAT+GNN {:.4}, GNN+GNN {:.4}, DNN+DNN {:.4} (need GAT < GNN < DNN)",
            gat.e_rms, gnn.e_rms, dnn.e_rms
        ),
    ));
    let imp_gnn = 100.0 * (dnn.e_rms - gnn.e_rms) / dnn.e_rms;
    let imp_gat = 100.0 * (dnn.e_rms - gat.e_rms) / dnn.e_rms;
    out.push(outcome(
        "closed loop (c) improvement",
        imp_gnn > 0.0 && imp_gat > 0.0 && (imp_gnn - 20.8).abs() <= 20.0 && (imp_gat - 48.1).abs() <= 20.0,
        format!("GNN+GNN {imp_gnn:.1}% (target 20.8 ± 20), GAT+GNN {imp_gat:.1}% (target 48.1 ± 20)"),
    ));
    let conv = [("DNN+DNN", &dnn), ("GNN+GNN", &gnn), ("GAT+GNN", &gat)];
    out.push(outcome(
        "closed loop (d) convergence",
        conv.iter().all(|(_, s)| s.mean_e_last < s.mean_e_first),
        conv.iter()
            .map(|(n, s)| format!("{n} {:.3} → {:.3}", s.mean_e_first, s.mean_e_last))
            .collect::<Vec<_>>()
            .join(", "),
    ));
    out
}

fn gain_certificate() -> Outcome {
    let cfg = ControlConfig::default();
    let c = certify_gains(&cfg, 6, cfg.lipschitz()).unwrap();
    let formula = 2.0 * 2.45 / (1.0 + 2.45 * 2.45);
    let ok = (c.eps2_upper - formula).abs() <= 1e-15 && (c.eps2_upper - 0.699746).abs() <= 1e-5 && !c.k2_ok;
    outcome(
        "gain certificate",
        ok,
        format!(
            "ε₂ upper {:.7} (formula {formula:.7}, printed 0.699746), k₂=3.85 requires {:.3}: {}",
            c.eps2_upper,
            c.k2_required,
            if c.k2_ok { "passes" } else { "fails as expected" }
        ),
    )
}

fn rms_examples() -> Outcome {
    let build = |n: usize, dim: usize, rows: &[Vec<f64>]| {
        let mut s = SignalSeries::new(n, dim);
        for (k, r) in rows.iter().enumerate() {
            s.push(k as f64, r).unwrap();
        }
        s
    };
    let ones = rms(&build(1, 2, &vec![vec![1.0, 1.0]; 7]), Window::ALL).unwrap();
    let zero = rms(&build(3, 3, &vec![vec![0.0; 9]; 4]), Window::ALL).unwrap();
    let alt: Vec<Vec<f64>> = (0..6).map(|k| vec![if k % 2 == 0 { 1.0 } else { -1.0 }, 0.0]).collect();
    let alt = rms(&build(1, 2, &alt), Window::ALL).unwrap();
    outcome(
        "rms examples",
        ones == 2.0 && zero == 0.0 && alt == 1.0,
        format!("ones {ones}, zero {zero}, alternating {alt} (expected 2, 0, 1 exactly)"),
    )
}

fn main() {
    let start = Instant::now();
    let mut results = vec![jacobian_suite(), spectral_bounds(), permutation_equivariance()];

    let cfg = MatrixConfig::default();
    let total = cfg.scenarios().len();
    let done = std::sync::atomic::AtomicUsize::new(0);
    let matrix = run_matrix_with(&cfg, |row| {
        let k = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
        eprintln!("  [{k}/{total}] {} {} seed={} ({:.1} s)", row.topology, row.pair, row.seed, row.elapsed_s);
    })
    .expect("default matrix");
    print!("{}", matrix.markdown());

    results.push(projection_invariance(&matrix));
    results.extend(closed_loop(&matrix));
    results.push(gain_certificate());
    results.push(rms_examples());

    let failed: Vec<_> = results.iter().filter(|o| !o.passed).collect();
    println!(
        "acceptance: {}/{} criteria passed in {:.0} s",
        results.len() - failed.len(),
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        for o in &failed {
            println!("  failed: {} ({})", o.name, o.detail);
        }
        std::process::exit(1);
    }
}
