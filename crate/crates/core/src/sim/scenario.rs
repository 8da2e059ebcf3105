use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::control::ControlConfig;
use crate::error::{Error, Result};
use crate::graph::{TopologyConfig, TopologyKind};
use crate::nets::{default_init_stddev, Activation, Architecture, LayerSpec};

use super::DEFAULT_INTERACTION_FLOOR;

/// Spatial dimension of every agent and the target.
pub const STATE_DIM: usize = 3;

/// Architecture and size of one of the two networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub arch: Architecture,
    /// Hidden widths; defaults to `[24; 6]` for DNN and `[24, 24]` otherwise.
    #[serde(default)]
    pub hidden: Option<Vec<usize>>,
    /// Init standard deviation; defaults to 0.03 (DNN, GNN) or 0.3 (GAT).
    #[serde(default)]
    pub init_stddev: Option<f64>,
    #[serde(default)]
    pub activation: Activation,
}

impl NetworkConfig {
    pub fn new(arch: Architecture) -> Self {
        Self {
            arch,
            hidden: None,
            init_stddev: None,
            activation: Activation::Tanh,
        }
    }

    pub fn hidden(&self) -> Vec<usize> {
        self.hidden.clone().unwrap_or_else(|| match self.arch {
            Architecture::Dnn => vec![24; 6],
            Architecture::Gnn | Architecture::Gat => vec![24, 24],
        })
    }

    pub fn init_stddev(&self) -> f64 {
        self.init_stddev.unwrap_or_else(|| default_init_stddev(self.arch))
    }

    pub fn layer_spec(&self, d_in: usize) -> LayerSpec {
        LayerSpec {
            activation: self.activation,
            ..LayerSpec::new(d_in, self.hidden(), STATE_DIM)
        }
    }
}

/// Observer (`Φ₁`) and controller (`Φ₂`) architectures, written
/// `"OBSERVER+CONTROLLER"` in config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ArchPair {
    pub observer: Architecture,
    pub controller: Architecture,
}

impl ArchPair {
    pub const DNN_DNN: Self = Self::new(Architecture::Dnn, Architecture::Dnn);
    pub const GNN_GNN: Self = Self::new(Architecture::Gnn, Architecture::Gnn);
    pub const GAT_GNN: Self = Self::new(Architecture::Gat, Architecture::Gnn);
    /// The three pairs compared in the reference experiment.
    pub const STANDARD: [Self; 3] = [Self::DNN_DNN, Self::GNN_GNN, Self::GAT_GNN];

    pub const fn new(observer: Architecture, controller: Architecture) -> Self {
        Self { observer, controller }
    }
}

impl fmt::Display for ArchPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}+{}", self.observer, self.controller)
    }
}

impl FromStr for ArchPair {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once('+')
            .ok_or_else(|| Error::InvalidArgument(format!("expected OBSERVER+CONTROLLER, got `{s}`")))?;
        Ok(Self::new(a.trim().parse()?, b.trim().parse()?))
    }
}

impl TryFrom<String> for ArchPair {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ArchPair> for String {
    fn from(p: ArchPair) -> Self {
        p.to_string()
    }
}

/// Initial target state and agent placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialConditions {
    pub target_position: [f64; 3],
    pub target_velocity: [f64; 3],
    /// Radius of the agent polygon.
    pub radius: f64,
    /// Angular offset of the polygon. The default `π/12` keeps neighbouring
    /// agents of the six-agent polygon at distinct heights `y`.
    pub phase: f64,
}

impl Default for InitialConditions {
    fn default() -> Self {
        Self {
            target_position: [-3.0, 2.0, 10.0],
            target_velocity: [-1.0, 0.0, -2.0],
            radius: 10.0,
            phase: PI / 12.0,
        }
    }
}

/// Everything needed for one closed-loop run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: Option<String>,
    pub topology: TopologyConfig,
    pub observer: NetworkConfig,
    pub controller: NetworkConfig,
    #[serde(default)]
    pub control: ControlConfig,
    #[serde(default)]
    pub initial: InitialConditions,
    /// Lower clamp on the `20000 Δy²` interaction denominator.
    #[serde(default = "default_floor")]
    pub interaction_floor: f64,
    /// Any state entry above this magnitude marks the run as diverged.
    #[serde(default = "default_divergence")]
    pub divergence_threshold: f64,
    /// Record every `record_every`-th step (1 = all).
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    /// Rescale weights that a step left outside `θ̄² + c` back onto it.
    #[serde(default = "default_weight_clamp")]
    pub weight_clamp: bool,
}

fn default_weight_clamp() -> bool {
    true
}

fn default_floor() -> f64 {
    DEFAULT_INTERACTION_FLOOR
}

fn default_divergence() -> f64 {
    1e6
}

fn default_record_every() -> usize {
    1
}

impl Scenario {
    /// Reference-scale defaults for a named topology and architecture pair.
    pub fn standard(kind: TopologyKind, pair: ArchPair, seed: u64) -> Self {
        Self {
            name: None,
            topology: TopologyConfig::named(kind, 6),
            observer: NetworkConfig::new(pair.observer),
            controller: NetworkConfig::new(pair.controller),
            control: ControlConfig {
                seed,
                ..ControlConfig::default()
            },
            initial: InitialConditions::default(),
            interaction_floor: DEFAULT_INTERACTION_FLOOR,
            divergence_threshold: default_divergence(),
            record_every: 1,
            weight_clamp: true,
        }
    }

    pub fn pair(&self) -> ArchPair {
        ArchPair::new(self.observer.arch, self.controller.arch)
    }

    pub fn label(&self) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| format!("{} {} seed={}", self.topology.label(), self.pair(), self.control.seed))
    }

    /// Observer input is the local estimate `Q̂₀,i ∈ R^{2n}`.
    pub fn observer_spec(&self) -> LayerSpec {
        self.observer.layer_spec(2 * STATE_DIM)
    }

    /// Controller input is the masked stack `R_i ∈ R^{2nN}`.
    pub fn controller_spec(&self) -> LayerSpec {
        self.controller.layer_spec(2 * STATE_DIM * self.topology.n_agents)
    }

    pub fn validate(&self) -> Result<()> {
        self.control.validate_allow_zero()?;
        self.observer_spec().validate()?;
        self.controller_spec().validate()?;
        for net in [&self.observer, &self.controller] {
            if let Some(s) = net.init_stddev {
                if !(s > 0.0 && s.is_finite()) {
                    return Err(Error::InvalidArgument(format!("init_stddev must be positive, got {s}")));
                }
            }
        }
        if !(self.interaction_floor > 0.0) {
            return Err(Error::InvalidArgument("interaction_floor must be positive".into()));
        }
        if !(self.divergence_threshold > 0.0) {
            return Err(Error::InvalidArgument("divergence_threshold must be positive".into()));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidArgument("record_every must be at least 1".into()));
        }
        if !(self.initial.radius >= 0.0 && self.initial.radius.is_finite()) {
            return Err(Error::InvalidArgument("radius must be nonnegative".into()));
        }
        let g = self.topology.build()?;
        if !g.is_connected() {
            return Err(Error::Disconnected);
        }
        if !g.pins().iter().any(|&b| b) {
            return Err(Error::Topology("at least one agent must be pinned to the target".into()));
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let sc: Self = serde_json::from_str(s)?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
