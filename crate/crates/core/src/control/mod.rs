//! Tracking errors, distributed observer and controller, projected update
//! laws and the sufficient-gain certificate.

mod certificate;
mod laws;

pub use certificate::{certify_gains, estimate_lipschitz, GainCertificate, LipschitzBox};
pub use laws::{
    control_input, observer_accel, observer_innovation, project, update_law_controller,
    update_law_observer, Projection,
};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::Kinematics;

/// Gains and run settings shared by every agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    pub alpha1: f64,
    pub alpha2: f64,
    /// Observer gain.
    pub k1: f64,
    /// Controller gain.
    pub k2: f64,
    /// Leakage/consensus gain of the observer weights.
    pub k3: f64,
    /// Leakage/consensus gain of the controller weights.
    pub k4: f64,
    /// `Γ₁ = gamma1 · I`.
    pub gamma1: f64,
    /// `Γ₂ = gamma2 · I`.
    pub gamma2: f64,
    /// Projection radius `θ̄`.
    pub theta_bar: f64,
    /// Projection band `c`; `None` means `0.1 θ̄²`.
    pub projection_band: Option<f64>,
    /// Lipschitz bound of the target drift; `None` means [`estimate_lipschitz`]
    /// on the default box.
    pub lipschitz: Option<f64>,
    pub dt: f64,
    pub duration: f64,
    pub seed: u64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            alpha1: 0.85,
            alpha2: 2.45,
            k1: 6.5,
            k2: 3.85,
            k3: 0.01,
            k4: 0.08,
            gamma1: 0.875,
            gamma2: 0.875,
            theta_bar: 10.0,
            projection_band: None,
            lipschitz: None,
            dt: 0.005,
            duration: 60.0,
            seed: 0,
        }
    }
}

impl ControlConfig {
    pub fn band(&self) -> f64 {
        self.projection_band
            .unwrap_or(0.1 * self.theta_bar * self.theta_bar)
    }

    pub fn projection(&self) -> Projection {
        Projection::new(self.theta_bar, self.band())
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
            .unwrap_or_else(|| estimate_lipschitz(&LipschitzBox::default()))
    }

    /// Checks that every gain is strictly positive. Zero gains are allowed
    /// only through [`ControlConfig::validate_allow_zero`] for ablations.
    pub fn validate(&self) -> Result<()> {
        self.check(false)
    }

    pub fn validate_allow_zero(&self) -> Result<()> {
        self.check(true)
    }

    fn check(&self, allow_zero: bool) -> Result<()> {
        let gains = [
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("k1", self.k1),
            ("k2", self.k2),
            ("k3", self.k3),
            ("k4", self.k4),
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
        ];
        for (name, v) in gains {
            let ok = if allow_zero { v >= 0.0 } else { v > 0.0 };
            if !ok || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("theta_bar", self.theta_bar), ("dt", self.dt), ("duration", self.duration)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if let Some(c) = self.projection_band {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::InvalidArgument(format!("projection band must be positive, got {c}")));
            }
        }
        if let Some(l) = self.lipschitz {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::InvalidArgument(format!("lipschitz must be positive, got {l}")));
            }
        }
        Ok(())
    }
}

/// Per-agent error signals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorSignals {
    /// `e = q₀ − q_i`
    pub e: Vector3<f64>,
    pub e_dot: Vector3<f64>,
    /// `q̃ = q₀ − q̂₀,i`
    pub q_tilde: Vector3<f64>,
    pub q_tilde_dot: Vector3<f64>,
    /// `ê = q̂₀,i − q_i`
    pub e_hat: Vector3<f64>,
    pub e_hat_dot: Vector3<f64>,
    /// `r₁ = q̃̇ + α₁ q̃`
    pub r1: Vector3<f64>,
    /// `r₂ = ė̂ + α₂ ê`
    pub r2: Vector3<f64>,
}

pub fn compute_errors(
    target: &Kinematics,
    agent: &Kinematics,
    estimate: &Kinematics,
    alpha1: f64,
    alpha2: f64,
) -> ErrorSignals {
    let q_tilde = target.pos - estimate.pos;
    let q_tilde_dot = target.vel - estimate.vel;
    let e_hat = estimate.pos - agent.pos;
    let e_hat_dot = estimate.vel - agent.vel;
    ErrorSignals {
        e: target.pos - agent.pos,
        e_dot: target.vel - agent.vel,
        q_tilde,
        q_tilde_dot,
        e_hat,
        e_hat_dot,
        r1: q_tilde_dot + alpha1 * q_tilde,
        r2: e_hat_dot + alpha2 * e_hat,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn kin(p: [f64; 3], v: [f64; 3]) -> Kinematics {
        Kinematics {
            pos: Vector3::from(p),
            vel: Vector3::from(v),
        }
    }

    #[test]
    fn perfect_tracking_has_zero_errors() {
        let q0 = kin([1.0, -2.0, 3.0], [0.5, 0.0, -1.0]);
        let s = compute_errors(&q0, &q0, &q0, 0.85, 2.45);
        assert_eq!(s.e, Vector3::zeros());
        assert_eq!(s.r1, Vector3::zeros());
        assert_eq!(s.r2, Vector3::zeros());
    }

    #[test]
    fn hand_evaluated_errors() {
        let zero = kin([0.0; 3], [0.0; 3]);
        let s = compute_errors(&kin([1.0, 0.0, 0.0], [0.0; 3]), &zero, &zero, 1.0, 1.0);
        assert_eq!(s.q_tilde, Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(s.e, Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(s.e_hat, Vector3::zeros());
        assert_eq!(s.r1, Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(s.r2, Vector3::zeros());
    }

    proptest! {
        #[test]
        fn tracking_error_splits(v in proptest::collection::vec(-50.0f64..50.0, 18), a1 in 0.1f64..3.0, a2 in 0.1f64..3.0) {
            let k = |o: usize| kin([v[o], v[o + 1], v[o + 2]], [v[o + 3], v[o + 4], v[o + 5]]);
            let s = compute_errors(&k(0), &k(6), &k(12), a1, a2);
            prop_assert!((s.q_tilde - (s.e - s.e_hat)).abs().max() <= 1e-12);
            prop_assert!((s.r1 - (s.q_tilde_dot + a1 * s.q_tilde)).abs().max() == 0.0);
            prop_assert!((s.r2 - (s.e_hat_dot + a2 * s.e_hat)).abs().max() == 0.0);
        }
    }

    #[test]
    fn config_validation() {
        let cfg = ControlConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.band(), 10.0);
        let zero = ControlConfig { k1: 0.0, ..cfg.clone() };
        assert!(zero.validate().is_err());
        zero.validate_allow_zero().unwrap();
        assert!(ControlConfig { theta_bar: -1.0, ..cfg.clone() }.validate().is_err());
        assert!(ControlConfig { lipschitz: Some(0.0), ..cfg }.validate().is_err());
    }

    #[test]
    fn config_json_defaults() {
        let cfg: ControlConfig = serde_json::from_str(r#"{"k2": 20.0}"#).unwrap();
        assert_eq!(cfg.k2, 20.0);
        assert_eq!(cfg.alpha1, 0.85);
        assert!(serde_json::from_str::<ControlConfig>(r#"{"k9": 1}"#).is_err());
    }
}
