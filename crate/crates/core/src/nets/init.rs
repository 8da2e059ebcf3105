use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

use super::{Architecture, LayerSpec};

/// Default standard deviation of the Gaussian weight initialisation.
pub fn default_init_stddev(arch: Architecture) -> f64 {
    match arch {
        Architecture::Gat => 0.3,
        Architecture::Dnn | Architecture::Gnn => 0.03,
    }
}

/// Draws one flat weight vector from `N(0, stddev²)` and copies it to all
/// `n_nodes` nodes.
pub fn init_weights(
    spec: &LayerSpec,
    arch: Architecture,
    n_nodes: usize,
    seed: u64,
    stddev: f64,
) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    if !(stddev > 0.0 && stddev.is_finite()) {
        return Err(Error::InvalidArgument(format!("init stddev must be positive, got {stddev}")));
    }
    let normal = Normal::new(0.0, stddev).expect("validated stddev");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta: Vec<f64> = (0..spec.param_count(arch))
        .map(|_| normal.sample(&mut rng))
        .collect();
    Ok(vec![theta; n_nodes])
}
