use std::io::Write;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::control::{
    certify_gains, compute_errors, control_input, observer_accel, observer_innovation,
    update_law_controller, update_law_observer, ControlConfig, GainCertificate,
};
use crate::error::{Error, Result};
use crate::graph::Topology;
use crate::harness::metrics::{mean_norm, rms, SignalSeries, Window};
use crate::nets::{init_weights, Network};

use super::{
    agent_accel, ngon_positions, target_accel, Kinematics, Rk4, Scenario, SimState, StateLayout,
    STATE_DIM,
};

/// Length of the early metric window and of the first/last error windows.
pub const TRANSIENT_WINDOW: f64 = 10.0;

/// Per-agent signals at one state, `3N` values each.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub e: Vec<f64>,
    pub e_dot: Vec<f64>,
    pub q_tilde: Vec<f64>,
    pub u: Vec<f64>,
    /// `φ̂₁,i − f(Q₀)`
    pub phi1_err: Vec<f64>,
    /// `φ̂₂,i − h(R_i)`
    pub phi2_err: Vec<f64>,
}

impl Diagnostics {
    pub fn zeros(n_agents: usize) -> Self {
        let z = vec![0.0; STATE_DIM * n_agents];
        Self {
            e: z.clone(),
            e_dot: z.clone(),
            q_tilde: z.clone(),
            u: z.clone(),
            phi1_err: z.clone(),
            phi2_err: z,
        }
    }
}

fn put(dst: &mut [f64], i: usize, v: &Vector3<f64>) {
    dst[STATE_DIM * i..STATE_DIM * (i + 1)].copy_from_slice(v.as_slice());
}

/// Right-hand side of the coupled target, agent, observer and weight ODE.
#[derive(Debug, Clone)]
pub struct Model {
    pub graph: Topology,
    pub observer: Network,
    pub controller: Network,
    pub control: ControlConfig,
    pub interaction_floor: f64,
    pub layout: StateLayout,
}

impl Model {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        scenario.validate()?;
        let graph = scenario.topology.build()?;
        let observer = Network::new(scenario.observer_spec(), scenario.observer.arch)?;
        let controller = Network::new(scenario.controller_spec(), scenario.controller.arch)?;
        let layout = StateLayout::new(graph.n_agents(), observer.param_count(), controller.param_count());
        Ok(Self {
            graph,
            observer,
            controller,
            control: scenario.control.clone(),
            interaction_floor: scenario.interaction_floor,
            layout,
        })
    }

    /// Writes `ẋ` into `dx`; fills `diag` when given.
    pub fn rhs(&self, x: &[f64], dx: &mut [f64], mut diag: Option<&mut Diagnostics>) -> Result<()> {
        let l = &self.layout;
        let n = l.n_agents;
        let cfg = &self.control;
        if x.len() != l.len() || dx.len() != l.len() {
            return Err(Error::Dimension(format!("state has {} entries, expected {}", x.len(), l.len())));
        }
        let target = Kinematics::from_slice(&x[0..6]);
        let agents: Vec<Kinematics> = (0..n).map(|i| Kinematics::from_slice(&x[l.agent_offset(i)..])).collect();
        let estimates: Vec<Kinematics> = (0..n)
            .map(|i| Kinematics::from_slice(&x[l.estimate_offset(i)..]))
            .collect();
        let th1: Vec<&[f64]> = (0..n).map(|i| &x[l.theta1_range(i)]).collect();
        let th2: Vec<&[f64]> = (0..n).map(|i| &x[l.theta2_range(i)]).collect();

        let f0 = target_accel(&target);
        dx[0..3].copy_from_slice(target.vel.as_slice());
        dx[3..6].copy_from_slice(f0.as_slice());

        // observer
        let in1: Vec<[f64; 6]> = estimates.iter().map(Kinematics::to_array).collect();
        let in1_refs: Vec<&[f64]> = in1.iter().map(|a| a.as_slice()).collect();
        let acts1 = self.observer.forward(&self.graph, &th1, &in1_refs)?;
        let mut qhat_ddot = Vec::with_capacity(n);
        for i in 0..n {
            let s1 = observer_innovation(i, &self.graph, &estimates, &target, cfg.alpha1);
            let (cons, tracking) = self
                .observer
                .adaptive_terms(&self.graph, &th1, &acts1, i, s1.as_slice())?;
            let phi = Vector3::from_column_slice(&acts1.outputs[i]);
            let cons = Vector3::from_column_slice(&cons);
            qhat_ddot.push(observer_accel(&phi, &cons, &s1, cfg));
            let nbrs: Vec<&[f64]> = self.graph.neighbors(i).iter().map(|&j| th1[j]).collect();
            update_law_observer(th1[i], &nbrs, &tracking, cfg, &mut dx[l.theta1_range(i)]);
            if let Some(d) = diag.as_deref_mut() {
                put(&mut d.phi1_err, i, &(phi - f0));
            }
        }

        // controller, fed the masked stack of closed-neighbourhood states
        let width = 6 * n;
        let mut in2 = vec![0.0; n * width];
        for i in 0..n {
            let row = &mut in2[i * width..(i + 1) * width];
            for &m in self.graph.closed_neighbors(i) {
                row[6 * m..6 * m + 6].copy_from_slice(&agents[m].to_array());
            }
        }
        let in2_refs: Vec<&[f64]> = in2.chunks(width).collect();
        let acts2 = self.controller.forward(&self.graph, &th2, &in2_refs)?;
        for i in 0..n {
            let err = compute_errors(&target, &agents[i], &estimates[i], cfg.alpha1, cfg.alpha2);
            let (cons, tracking) = self
                .controller
                .adaptive_terms(&self.graph, &th2, &acts2, i, err.r2.as_slice())?;
            let phi = Vector3::from_column_slice(&acts2.outputs[i]);
            let cons = Vector3::from_column_slice(&cons);
            let u = control_input(&qhat_ddot[i], &phi, &cons, &err.r2, cfg);
            let nbrs: Vec<&[f64]> = self.graph.neighbors(i).iter().map(|&j| th2[j]).collect();
            update_law_controller(th2[i], &nbrs, &tracking, cfg, &mut dx[l.theta2_range(i)]);

            let h = agent_accel(i, &self.graph, &agents, self.interaction_floor);
            let a = l.agent_offset(i);
            dx[a..a + 3].copy_from_slice(agents[i].vel.as_slice());
            dx[a + 3..a + 6].copy_from_slice((h + u).as_slice());
            let o = l.estimate_offset(i);
            dx[o..o + 3].copy_from_slice(estimates[i].vel.as_slice());
            dx[o + 3..o + 6].copy_from_slice(qhat_ddot[i].as_slice());

            if let Some(d) = diag.as_deref_mut() {
                put(&mut d.e, i, &err.e);
                put(&mut d.e_dot, i, &err.e_dot);
                put(&mut d.q_tilde, i, &err.q_tilde);
                put(&mut d.u, i, &u);
                put(&mut d.phi2_err, i, &(phi - h));
            }
        }
        Ok(())
    }
}

/// Closed-loop state plus the RK4 stepper.
#[derive(Debug, Clone)]
pub struct Simulator {
    model: Model,
    rk: Rk4,
    state: SimState,
    /// `θ̄² + c` when weights are clamped after each step.
    clamp: Option<f64>,
    clamps: usize,
    max_excess: f64,
}

impl Simulator {
    /// Target and agents from the scenario's initial conditions, each
    /// estimate starting at its agent's own state, and seeded weights that
    /// are identical across agents.
    pub fn new(scenario: &Scenario) -> Result<Self> {
        let model = Model::new(scenario)?;
        let l = model.layout;
        let n = l.n_agents;
        let mut state = SimState::zeros(l);
        let ic = &scenario.initial;
        state.set_target(&Kinematics::new(ic.target_position, ic.target_velocity));
        for (i, k) in ngon_positions(n, ic.radius, ic.phase).iter().enumerate() {
            state.set_agent(i, k);
            state.set_estimate(i, k);
        }
        let seed = scenario.control.seed;
        let w1 = init_weights(
            model.observer.spec(),
            model.observer.arch(),
            n,
            seed.wrapping_mul(2),
            scenario.observer.init_stddev(),
        )?;
        let w2 = init_weights(
            model.controller.spec(),
            model.controller.arch(),
            n,
            seed.wrapping_mul(2).wrapping_add(1),
            scenario.controller.init_stddev(),
        )?;
        for i in 0..n {
            state.theta1_mut(i).copy_from_slice(&w1[i]);
            state.theta2_mut(i).copy_from_slice(&w2[i]);
        }
        let cfg = &scenario.control;
        Ok(Self {
            rk: Rk4::new(l.len()),
            model,
            state,
            clamp: scenario
                .weight_clamp
                .then(|| cfg.theta_bar * cfg.theta_bar + cfg.band()),
            clamps: 0,
            max_excess: 0.0,
        })
    }

    /// Weight blocks rescaled so far and the largest excess over `θ̄² + c`
    /// seen before rescaling.
    pub fn clamp_stats(&self) -> (usize, f64) {
        (self.clamps, self.max_excess)
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut SimState {
        &mut self.state
    }

    /// Signals at the current state.
    pub fn diagnostics(&self) -> Result<Diagnostics> {
        let mut d = Diagnostics::zeros(self.model.layout.n_agents);
        let mut dx = vec![0.0; self.model.layout.len()];
        self.model.rhs(&self.state.x, &mut dx, Some(&mut d))?;
        Ok(d)
    }

    /// One RK4 step of length `dt`. `diag`, if given, receives the signals at
    /// the start of the step. A non-finite result leaves the state untouched.
    /// With clamping enabled, weight blocks that ended outside `θ̄² + c` are
    /// rescaled onto it.
    pub fn step(&mut self, dt: f64, diag: Option<&mut Diagnostics>) -> Result<()> {
        let model = &self.model;
        let mut first = diag;
        let t0 = self.state.t;
        let mut next = self.state.x.clone();
        self.rk.step(
            |_t, x, dx| model.rhs(x, dx, first.take()),
            t0,
            &mut next,
            dt,
        )?;
        if let Some(k) = next.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                t: t0 + dt,
                what: format!("state entry {k}"),
            });
        }
        self.state.x = next;
        self.state.t = t0 + dt;
        if let Some(r) = self.clamp {
            let (count, excess) = self.state.clamp_weights(r);
            self.clamps += count;
            self.max_excess = self.max_excess.max(excess);
        }
        Ok(())
    }
}

/// Recorded per-agent signals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSeries {
    pub e: SignalSeries,
    pub e_dot: SignalSeries,
    pub q_tilde: SignalSeries,
    pub u: SignalSeries,
    pub phi1_err: SignalSeries,
    pub phi2_err: SignalSeries,
}

impl RunSeries {
    pub fn new(n_agents: usize, samples: usize) -> Self {
        let s = || SignalSeries::with_capacity(n_agents, STATE_DIM, samples);
        Self {
            e: s(),
            e_dot: s(),
            q_tilde: s(),
            u: s(),
            phi1_err: s(),
            phi2_err: s(),
        }
    }

    pub fn push(&mut self, t: f64, d: &Diagnostics) -> Result<()> {
        self.e.push(t, &d.e)?;
        self.e_dot.push(t, &d.e_dot)?;
        self.q_tilde.push(t, &d.q_tilde)?;
        self.u.push(t, &d.u)?;
        self.phi1_err.push(t, &d.phi1_err)?;
        self.phi2_err.push(t, &d.phi2_err)?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.e.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e.is_empty()
    }

    /// CSV with one row per sample and agent:
    /// `t,agent,||e||,||edot||,||qtilde||,||u||,||phi1err||,||phi2err||`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,agent,||e||,||edot||,||qtilde||,||u||,||phi1err||,||phi2err||")?;
        for k in 0..self.len() {
            for i in 0..self.e.n_agents {
                writeln!(
                    out,
                    "{},{},{:e},{:e},{:e},{:e},{:e},{:e}",
                    self.e.times[k],
                    i,
                    self.e.norm(k, i),
                    self.e_dot.norm(k, i),
                    self.q_tilde.norm(k, i),
                    self.u.norm(k, i),
                    self.phi1_err.norm(k, i),
                    self.phi2_err.norm(k, i),
                )?;
            }
        }
        Ok(())
    }
}

/// Summary metrics of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub e_rms: f64,
    pub e_dot_rms: f64,
    pub phi1_rms_early: f64,
    pub phi1_rms_late: f64,
    pub phi2_rms_early: f64,
    pub phi2_rms_late: f64,
    pub u_rms: f64,
    /// Mean over agents and samples of `‖e_i‖` in the first window.
    pub mean_e_first: f64,
    /// Same over the last window.
    pub mean_e_last: f64,
}

impl RunSummary {
    pub const FIELDS: usize = 9;
    pub const NAMES: [&'static str; Self::FIELDS] = [
        "e_rms",
        "e_dot_rms",
        "phi1_rms_early",
        "phi1_rms_late",
        "phi2_rms_early",
        "phi2_rms_late",
        "u_rms",
        "mean_e_first",
        "mean_e_last",
    ];

    pub fn to_array(&self) -> [f64; Self::FIELDS] {
        [
            self.e_rms,
            self.e_dot_rms,
            self.phi1_rms_early,
            self.phi1_rms_late,
            self.phi2_rms_early,
            self.phi2_rms_late,
            self.u_rms,
            self.mean_e_first,
            self.mean_e_last,
        ]
    }

    pub fn from_array(a: [f64; Self::FIELDS]) -> Self {
        Self {
            e_rms: a[0],
            e_dot_rms: a[1],
            phi1_rms_early: a[2],
            phi1_rms_late: a[3],
            phi2_rms_early: a[4],
            phi2_rms_late: a[5],
            u_rms: a[6],
            mean_e_first: a[7],
            mean_e_last: a[8],
        }
    }

    /// The seven columns of the comparison table, in table order.
    pub fn table_columns(&self) -> [f64; 7] {
        let a = self.to_array();
        [a[0], a[1], a[2], a[3], a[4], a[5], a[6]]
    }

    /// Mean-square metrics; `sqrt` takes the square root of each.
    pub fn compute(series: &RunSeries, sqrt: bool) -> Result<Self> {
        let t_end = *series
            .e
            .times
            .last()
            .ok_or_else(|| Error::InvalidArgument("no samples recorded".into()))?;
        // runs shorter than the transient window keep the last sample in `late`
        let split = TRANSIENT_WINDOW.min(t_end);
        let early = Window::new(0.0, split);
        let late = Window::new(split, t_end);
        let all = Window::ALL;
        let m = |s: &SignalSeries, w: Window| rms(s, w).map(|v| if sqrt { v.sqrt() } else { v });
        Ok(Self {
            e_rms: m(&series.e, all)?,
            e_dot_rms: m(&series.e_dot, all)?,
            phi1_rms_early: m(&series.phi1_err, early)?,
            phi1_rms_late: m(&series.phi1_err, late)?,
            phi2_rms_early: m(&series.phi2_err, early)?,
            phi2_rms_late: m(&series.phi2_err, late)?,
            u_rms: m(&series.u, all)?,
            mean_e_first: mean_norm(&series.e, early)?,
            mean_e_last: mean_norm(&series.e, Window::new((t_end - TRANSIENT_WINDOW).max(0.0), t_end))?,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite() && *v >= 0.0)
    }
}

/// Outcome of [`run_scenario`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub label: String,
    pub topology: String,
    pub pair: String,
    pub seed: u64,
    pub steps: usize,
    /// Time reached; below the duration when the run diverged.
    pub t_end: f64,
    pub diverged: bool,
    pub failure: Option<String>,
    pub summary: Option<RunSummary>,
    pub certificate: Option<GainCertificate>,
    pub max_theta1_sq: f64,
    pub max_theta2_sq: f64,
    /// `θ̄² + c`, the largest squared norm the projection admits.
    pub projection_bound: f64,
    /// Weight blocks rescaled back onto the bound after a step.
    pub projection_clamps: usize,
    /// Largest `‖θ‖² − (θ̄² + c)` reached by a step before rescaling.
    pub max_projection_excess: f64,
    #[serde(skip)]
    pub series: Option<RunSeries>,
}

impl RunResult {
    pub fn projection_respected(&self, slack: f64) -> bool {
        self.max_theta1_sq <= self.projection_bound + slack && self.max_theta2_sq <= self.projection_bound + slack
    }
}

fn state_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Integrates the scenario over `[0, duration]`. Divergence (a non-finite
/// state or state norm above the threshold) ends the run early and is
/// reported in the result rather than as an error.
pub fn run_scenario(scenario: &Scenario) -> Result<RunResult> {
    let mut sim = Simulator::new(scenario)?;
    let cfg = &scenario.control;
    let n = sim.model.layout.n_agents;
    let steps = (cfg.duration / cfg.dt).round() as usize;
    let every = scenario.record_every;
    let mut series = RunSeries::new(n, steps / every + 2);
    let mut diag = Diagnostics::zeros(n);
    let (mut max1, mut max2) = sim.state.max_theta_norms_sq();
    let mut failure = None;
    let mut done = 0;
    for s in 0..steps {
        let record = s % every == 0;
        let t = sim.state.t;
        let r = sim.step(cfg.dt, if record { Some(&mut diag) } else { None });
        if let Err(e) = r {
            match e {
                Error::NonFinite { .. } => {
                    failure = Some(e.to_string());
                    break;
                }
                other => return Err(other),
            }
        }
        if record {
            series.push(t, &diag)?;
        }
        // exact step count keeps the clock free of accumulated rounding
        sim.state.t = (s + 1) as f64 * cfg.dt;
        done = s + 1;
        let (a, b) = sim.state.max_theta_norms_sq();
        max1 = max1.max(a);
        max2 = max2.max(b);
        let norm = state_norm(&sim.state.x);
        if norm > scenario.divergence_threshold {
            failure = Some(format!("state norm {norm:e} exceeds threshold at t = {}", sim.state.t));
            break;
        }
    }
    if failure.is_none() {
        match sim.diagnostics() {
            Ok(d) => series.push(sim.state.t, &d)?,
            Err(e) => failure = Some(e.to_string()),
        }
    }
    let diverged = failure.is_some();
    let summary = if diverged {
        None
    } else {
        Some(RunSummary::compute(&series, false)?)
    };
    let certificate = certify_gains(cfg, n, cfg.lipschitz()).ok();
    let bound = cfg.theta_bar * cfg.theta_bar + cfg.band();
    Ok(RunResult {
        label: scenario.label(),
        topology: scenario.topology.label(),
        pair: scenario.pair().to_string(),
        seed: cfg.seed,
        steps: done,
        t_end: sim.state.t,
        diverged,
        failure,
        summary,
        certificate,
        max_theta1_sq: max1,
        max_theta2_sq: max2,
        projection_bound: bound,
        projection_clamps: sim.clamps,
        max_projection_excess: sim.max_excess,
        series: Some(series),
    })
}
