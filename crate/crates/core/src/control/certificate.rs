use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{lambda_max_bound, lambda_min_closed_form};
use crate::sim::{target_accel_jacobian, Kinematics};

use super::ControlConfig;

/// Slack factor applied to the lower bounds on `ε₃` and `ε₁`.
const EPS_LOWER_SLACK: f64 = 1.05;
/// Fraction of the upper bound on `ε₂` that is used.
const EPS2_FRACTION: f64 = 0.95;

/// Outcome of checking the sufficient gain conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainCertificate {
    pub n_agents: usize,
    pub lipschitz: f64,
    pub lambda_min_h: f64,
    pub lambda_max_h: f64,
    pub eps3_lower: f64,
    pub eps3: f64,
    pub eps1_lower: f64,
    pub eps1: f64,
    pub eps2_upper: f64,
    pub eps2: f64,
    pub k1_required: f64,
    pub k1_margin: f64,
    pub k1_ok: bool,
    pub k2_required: f64,
    pub k2_margin: f64,
    pub k2_ok: bool,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub passed: bool,
}

/// Chooses `ε₃`, `ε₁` just above and `ε₂` just below their admissible
/// bounds, then evaluates the `k₁`, `k₂` conditions.
pub fn certify_gains(cfg: &ControlConfig, n_agents: usize, lipschitz: f64) -> Result<GainCertificate> {
    if n_agents == 0 {
        return Err(Error::InvalidArgument("need at least one agent".into()));
    }
    if !(lipschitz > 0.0 && lipschitz.is_finite()) {
        return Err(Error::InvalidArgument(format!("lipschitz must be positive, got {lipschitz}")));
    }
    cfg.validate()?;
    let (a1, a2) = (cfg.alpha1, cfg.alpha2);
    let lmin = lambda_min_closed_form(n_agents);
    let lmax = lambda_max_bound(n_agents);
    let nl = n_agents as f64 * lipschitz;

    let eps3_lower = nl * lmax * (1.0 / (2.0 * a1) + 0.5);
    let eps3 = EPS_LOWER_SLACK * eps3_lower;
    let eps1_lower = (1.0 + a1 * a1 * lmax) / (2.0 * a1 - nl * lmax * (1.0 + a1) / eps3);
    let eps1 = EPS_LOWER_SLACK * eps1_lower;
    let eps2_upper = 2.0 * a2 / (1.0 + a2 * a2);
    let eps2 = EPS2_FRACTION * eps2_upper;

    let k1_required = lmax / (lmin * lmin) * (2.0 * a1 + a1 * a1 * eps1 + nl * (2.0 + eps3 + a1 * eps3))
        + eps1 / (lmin * lmin);
    let k2_required = 2.0 * a2 + (1.0 + a2 * a2) / eps2;

    let g1 = cfg.gamma1;
    let g2 = cfg.gamma2;
    let lambda1 = 0.5 * [1.0, lmin, 1.0 / g1, 1.0 / g2].into_iter().fold(f64::INFINITY, f64::min);
    let lambda2 = 0.5 * [1.0, lmax, 1.0 / g1, 1.0 / g2].into_iter().fold(0.0, f64::max);
    let lambda3 = [
        a1 - (1.0 + a1 * a1 * lmax) / (2.0 * eps1) - nl * lmax * (1.0 + a1) / (2.0 * eps3),
        a2 - (1.0 + a2 * a2) * eps2 / 2.0,
        cfg.k1 * lmin * lmin / 2.0
            - a1 * lmax
            - (1.0 + a1 * a1 * lmax) * eps1 / 2.0
            - nl * lmax * (1.0 + a1) * eps3 / 2.0
            - nl * lmax,
        cfg.k2 / 2.0 - a2 - (1.0 + a2 * a2) / (2.0 * eps2),
        cfg.k3 / 2.0,
        cfg.k4 / 2.0,
    ]
    .into_iter()
    .fold(f64::INFINITY, f64::min);

    let k1_ok = cfg.k1 > k1_required;
    let k2_ok = cfg.k2 > k2_required;
    Ok(GainCertificate {
        n_agents,
        lipschitz,
        lambda_min_h: lmin,
        lambda_max_h: lmax,
        eps3_lower,
        eps3,
        eps1_lower,
        eps1,
        eps2_upper,
        eps2,
        k1_required,
        k1_margin: cfg.k1 - k1_required,
        k1_ok,
        k2_required,
        k2_margin: cfg.k2 - k2_required,
        k2_ok,
        lambda1,
        lambda2,
        lambda3,
        passed: k1_ok && k2_ok,
    })
}

/// Box of target states over which the drift Lipschitz bound is sampled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LipschitzBox {
    /// `|y₀| ≤ position`
    pub position: f64,
    /// `|ẋ₀|, |ẏ₀|, |ż₀| ≤ velocity`
    pub velocity: f64,
    /// Grid points per axis.
    pub points: usize,
}

impl Default for LipschitzBox {
    fn default() -> Self {
        Self {
            position: 20.0,
            velocity: 3.0,
            points: 9,
        }
    }
}

/// Largest spectral norm of `∂f/∂Q₀` over a uniform grid of the box. Only
/// `y₀` and the velocities enter the Jacobian, so the grid is 4-dimensional.
pub fn estimate_lipschitz(b: &LipschitzBox) -> f64 {
    let pts = b.points.max(2);
    let axis = |half: f64| -> Vec<f64> {
        (0..pts)
            .map(|k| -half + 2.0 * half * k as f64 / (pts - 1) as f64)
            .collect()
    };
    let ys = axis(b.position);
    let vs = axis(b.velocity);
    let mut best = 0.0f64;
    for &y in &ys {
        for &vx in &vs {
            for &vy in &vs {
                for &vz in &vs {
                    let q = Kinematics {
                        pos: Vector3::new(0.0, y, 0.0),
                        vel: Vector3::new(vx, vy, vz),
                    };
                    let j = target_accel_jacobian(&q);
                    let s = j.singular_values().max();
                    best = best.max(s);
                }
            }
        }
    }
    best
}
