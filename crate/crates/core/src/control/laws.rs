use nalgebra::Vector3;

use crate::graph::Topology;
use crate::sim::Kinematics;

use super::ControlConfig;

/// Projection onto the ball `‖θ‖² ≤ θ̄² + c` with the convex function
/// `𝒫(θ) = ‖θ‖² − θ̄²` and a boundary layer of width `c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub theta_bar: f64,
    pub band: f64,
}

impl Projection {
    pub fn new(theta_bar: f64, band: f64) -> Self {
        Self { theta_bar, band }
    }

    /// Largest `‖θ‖²` the projected flow can reach.
    pub fn outer_radius_sq(&self) -> f64 {
        self.theta_bar * self.theta_bar + self.band
    }

    /// Applies the operator in place to the rate `a` at parameter `b`.
    pub fn apply(&self, a: &mut [f64], b: &[f64]) {
        let bb: f64 = b.iter().map(|x| x * x).sum();
        let p = bb - self.theta_bar * self.theta_bar;
        if p <= 0.0 {
            return;
        }
        let ba: f64 = b.iter().zip(a.iter()).map(|(x, y)| x * y).sum();
        if ba <= 0.0 {
            return;
        }
        let scale = (p / self.band).min(1.0) * ba / bb;
        for (ai, bi) in a.iter_mut().zip(b) {
            *ai -= scale * bi;
        }
    }
}

/// Allocating form of [`Projection::apply`].
pub fn project(a: &[f64], b: &[f64], theta_bar: f64, band: f64) -> Vec<f64> {
    let mut out = a.to_vec();
    Projection::new(theta_bar, band).apply(&mut out, b);
    out
}

/// Measurable observer innovation of agent `i`:
/// `Σ_{j∈N_i}(q̂̇₀,j − q̂̇₀,i) + α₁Σ_{j∈N_i}(q̂₀,j − q̂₀,i) + b_i(q̃̇_i + α₁q̃_i)`.
/// The target enters only through the pinned terms.
pub fn observer_innovation(
    i: usize,
    graph: &Topology,
    estimates: &[Kinematics],
    target: &Kinematics,
    alpha1: f64,
) -> Vector3<f64> {
    let own = &estimates[i];
    let mut s = Vector3::zeros();
    for &j in graph.neighbors(i) {
        let other = &estimates[j];
        s += (other.vel - own.vel) + alpha1 * (other.pos - own.pos);
    }
    if graph.is_pinned(i) {
        s += (target.vel - own.vel) + alpha1 * (target.pos - own.pos);
    }
    s
}

/// `q̂̈₀,i = φ̂₁,i + Σ_z J₁(θ̂₁,i − θ̂₁,z) + k₁ s₁,i`
pub fn observer_accel(
    phi1: &Vector3<f64>,
    consensus1: &Vector3<f64>,
    innovation: &Vector3<f64>,
    cfg: &ControlConfig,
) -> Vector3<f64> {
    phi1 + consensus1 + cfg.k1 * innovation
}

/// `u_i = q̂̈₀,i − φ̂₂,i − Σ_z J₂(θ̂₂,i − θ̂₂,z) + k₂ r₂,i`
pub fn control_input(
    qhat_ddot: &Vector3<f64>,
    phi2: &Vector3<f64>,
    consensus2: &Vector3<f64>,
    r2: &Vector3<f64>,
    cfg: &ControlConfig,
) -> Vector3<f64> {
    qhat_ddot - phi2 - consensus2 + cfg.k2 * r2
}

#[allow(clippy::too_many_arguments)]
fn projected_rate(
    theta_i: &[f64],
    neighbors: &[&[f64]],
    leak: f64,
    gamma: f64,
    tracking: &[f64],
    sign: f64,
    proj: &Projection,
    out: &mut [f64],
) {
    let deg = neighbors.len() as f64;
    let own = -gamma * leak * (deg + 1.0);
    let track = gamma * sign;
    for ((o, &t), &tr) in out.iter_mut().zip(theta_i).zip(tracking) {
        *o = own * t + track * tr;
    }
    let nbr = gamma * leak;
    for t in neighbors {
        for (o, &v) in out.iter_mut().zip(t.iter()) {
            *o += nbr * v;
        }
    }
    proj.apply(out, theta_i);
}

/// Observer weight rate
/// `proj(Γ₁[−k₃(Σ_{j∈N_i}(θ̂_i − θ̂_j) + θ̂_i) + (Σ_z J₁)ᵀ s₁,i], θ̂_i)`.
/// `tracking` is `(Σ_z J₁)ᵀ s₁,i`.
pub fn update_law_observer(
    theta_i: &[f64],
    neighbors: &[&[f64]],
    tracking: &[f64],
    cfg: &ControlConfig,
    out: &mut [f64],
) {
    let proj = cfg.projection();
    projected_rate(theta_i, neighbors, cfg.k3, cfg.gamma1, tracking, 1.0, &proj, out);
}

/// Controller weight rate
/// `proj(Γ₂[−k₄(Σ_{j∈N_i}(θ̂_i − θ̂_j) + θ̂_i) − (Σ_z J₂)ᵀ r₂,i], θ̂_i)`.
/// `tracking` is `(Σ_z J₂)ᵀ r₂,i`.
pub fn update_law_controller(
    theta_i: &[f64],
    neighbors: &[&[f64]],
    tracking: &[f64],
    cfg: &ControlConfig,
    out: &mut [f64],
) {
    let proj = cfg.projection();
    projected_rate(theta_i, neighbors, cfg.k4, cfg.gamma2, tracking, -1.0, &proj, out);
}
