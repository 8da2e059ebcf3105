//! Per-node neural networks evaluated over a communication graph.
//!
//! Three architectures share one weight layout:
//!
//! - **GNN**: hidden layer `j` computes `σ(W_iᵀ Σ_{m∈N̄_i} φ_m^(j-1))`.
//! - **GAT**: the neighbour sum is replaced by an attention-weighted sum
//!   with masked-softmax weights `β_{i,m}` computed from
//!   `c_{i,m} = a_iᵀ (W_iᵀφ_i ⊕ W_iᵀφ_m)`.
//! - **DNN**: a plain feedforward net per node (aggregation over `{i}` only).
//!
//! Every hidden activation appends a constant `1` (the bias channel) and the
//! output layer is linear without aggregation. Weights of node `i` are
//! flattened as `θ_i = [vec(W^(0)); …; vec(W^(k)); a^(0); …; a^(k-1)]` with
//! column-major `vec`.

mod activation;
mod fd;
mod forward;
pub mod gradcheck;
mod init;
mod jacobian;
mod snapshot;

pub use activation::Activation;
pub use fd::finite_diff_jacobian;
pub use forward::{Activations, AttentionRow};
pub use init::{default_init_stddev, init_weights};
pub use jacobian::{JacobianTerms, NodeJacobians};
pub use snapshot::write_snapshot;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Topology;

/// Network architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Dnn,
    Gnn,
    Gat,
}

impl Architecture {
    pub fn has_attention(self) -> bool {
        matches!(self, Architecture::Gat)
    }

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Dnn => "DNN",
            Architecture::Gnn => "GNN",
            Architecture::Gat => "GAT",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dnn" => Ok(Architecture::Dnn),
            "gnn" => Ok(Architecture::Gnn),
            "gat" => Ok(Architecture::Gat),
            other => Err(Error::InvalidArgument(format!("unknown architecture `{other}`"))),
        }
    }
}

/// Layer dimensions. `hidden[j]` is the width `d^(j)` of hidden layer `j`,
/// so the output layer has index `k = hidden.len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub d_in: usize,
    pub d_out: usize,
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(d_in: usize, hidden: Vec<usize>, d_out: usize) -> Self {
        Self {
            d_in,
            d_out,
            hidden,
            activation: Activation::Tanh,
        }
    }

    /// Number of hidden (message-passing) layers `k`.
    pub fn depth(&self) -> usize {
        self.hidden.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_in == 0 || self.d_out == 0 {
            return Err(Error::Dimension("input and output widths must be positive".into()));
        }
        if self.hidden.is_empty() {
            return Err(Error::Dimension("at least one hidden layer is required".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Dimension("hidden widths must be positive".into()));
        }
        Ok(())
    }

    /// Shape `(rows, cols)` of `W^(j)`. Layer 0 consumes the bias-augmented
    /// input, so its row count is `d_in + 1`.
    pub fn layer_shape(&self, j: usize) -> (usize, usize) {
        let k = self.depth();
        let rows = if j == 0 { self.d_in + 1 } else { self.hidden[j - 1] + 1 };
        let cols = if j == k { self.d_out } else { self.hidden[j] };
        (rows, cols)
    }

    /// Width (with bias channel) of the features entering layer `j`.
    pub fn input_width(&self, j: usize) -> usize {
        self.layer_shape(j).0
    }

    /// `Σ_j d^(j) (d^(j-1) + 1)` over all `k + 1` layers.
    pub fn layer_param_count(&self) -> usize {
        (0..=self.depth())
            .map(|j| {
                let (r, c) = self.layer_shape(j);
                r * c
            })
            .sum()
    }

    /// `Σ_{j<k} 2 d^(j)`.
    pub fn attention_param_count(&self) -> usize {
        self.hidden.iter().map(|d| 2 * d).sum()
    }

    pub fn param_count(&self, arch: Architecture) -> usize {
        self.layer_param_count()
            + if arch.has_attention() {
                self.attention_param_count()
            } else {
                0
            }
    }
}

/// Offsets of each weight block inside the flat vector `θ_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    /// `(offset, rows, cols)` for `W^(0..=k)`
    pub layers: Vec<(usize, usize, usize)>,
    /// `(offset, len)` for `a^(0..k)`; empty unless the architecture is GAT
    pub attention: Vec<(usize, usize)>,
    pub total: usize,
}

impl ParamLayout {
    pub fn new(spec: &LayerSpec, arch: Architecture) -> Self {
        let mut off = 0;
        let mut layers = Vec::with_capacity(spec.depth() + 1);
        for j in 0..=spec.depth() {
            let (r, c) = spec.layer_shape(j);
            layers.push((off, r, c));
            off += r * c;
        }
        let mut attention = Vec::new();
        if arch.has_attention() {
            for &d in &spec.hidden {
                attention.push((off, 2 * d));
                off += 2 * d;
            }
        }
        Self {
            layers,
            attention,
            total: off,
        }
    }

    pub fn layer<'a>(&self, theta: &'a [f64], j: usize) -> &'a [f64] {
        let (o, r, c) = self.layers[j];
        &theta[o..o + r * c]
    }

    pub fn attention<'a>(&self, theta: &'a [f64], j: usize) -> &'a [f64] {
        let (o, l) = self.attention[j];
        &theta[o..o + l]
    }
}

/// Structured weights of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeWeights {
    pub layers: Vec<DMatrix<f64>>,
    pub attention: Vec<DVector<f64>>,
}

impl NodeWeights {
    pub fn zeros(spec: &LayerSpec, arch: Architecture) -> Self {
        let layout = ParamLayout::new(spec, arch);
        Self::unflatten(spec, arch, &vec![0.0; layout.total]).expect("length matches layout")
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for w in &self.layers {
            out.extend_from_slice(w.as_slice());
        }
        for a in &self.attention {
            out.extend_from_slice(a.as_slice());
        }
        out
    }

    pub fn unflatten(spec: &LayerSpec, arch: Architecture, theta: &[f64]) -> Result<Self> {
        let layout = ParamLayout::new(spec, arch);
        if theta.len() != layout.total {
            return Err(Error::Dimension(format!(
                "weight vector has length {}, expected {}",
                theta.len(),
                layout.total
            )));
        }
        let layers = layout
            .layers
            .iter()
            .map(|&(o, r, c)| DMatrix::from_column_slice(r, c, &theta[o..o + r * c]))
            .collect();
        let attention = layout
            .attention
            .iter()
            .map(|&(o, l)| DVector::from_column_slice(&theta[o..o + l]))
            .collect();
        Ok(Self { layers, attention })
    }
}

/// A network architecture bound to its layer dimensions.
#[derive(Debug, Clone)]
pub struct Network {
    spec: LayerSpec,
    arch: Architecture,
    layout: ParamLayout,
}

impl Network {
    pub fn new(spec: LayerSpec, arch: Architecture) -> Result<Self> {
        spec.validate()?;
        let layout = ParamLayout::new(&spec, arch);
        Ok(Self { spec, arch, layout })
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn arch(&self) -> Architecture {
        self.arch
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn param_count(&self) -> usize {
        self.layout.total
    }

    /// Nodes whose outputs node `i` aggregates at every hidden layer.
    pub(crate) fn aggregation_set<'a>(&self, graph: &'a Topology, i: usize) -> AggSet<'a> {
        match self.arch {
            Architecture::Dnn => AggSet::Own(i),
            _ => AggSet::Graph(graph.closed_neighbors(i)),
        }
    }

    pub(crate) fn check_inputs(
        &self,
        graph: &Topology,
        thetas: &[&[f64]],
        inputs: &[&[f64]],
    ) -> Result<()> {
        let n = graph.n_agents();
        if thetas.len() != n || inputs.len() != n {
            return Err(Error::Dimension(format!(
                "expected {n} weight vectors and inputs, got {} and {}",
                thetas.len(),
                inputs.len()
            )));
        }
        if let Some(t) = thetas.iter().find(|t| t.len() != self.layout.total) {
            return Err(Error::Dimension(format!(
                "weight vector has length {}, expected {}",
                t.len(),
                self.layout.total
            )));
        }
        if let Some(x) = inputs.iter().find(|x| x.len() != self.spec.d_in) {
            return Err(Error::Dimension(format!(
                "input has length {}, expected {}",
                x.len(),
                self.spec.d_in
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
pub(crate) enum AggSet<'a> {
    Own(usize),
    Graph(&'a [usize]),
}

impl AggSet<'_> {
    pub(crate) fn as_slice(&self) -> &[usize] {
        match self {
            AggSet::Own(i) => std::slice::from_ref(i),
            AggSet::Graph(s) => s,
        }
    }
}

// Small dense kernels on column-major blocks. `w` is `rows × cols`.

/// `out = wᵀ x`
#[inline]
pub(crate) fn mat_t_vec(w: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(w.len(), rows * cols);
    for (c, o) in out.iter_mut().enumerate().take(cols) {
        *o = dot(&w[c * rows..(c + 1) * rows], x);
    }
}

/// `out += w g`
#[inline]
pub(crate) fn mat_vec_acc(w: &[f64], rows: usize, g: &[f64], out: &mut [f64]) {
    for (c, &gc) in g.iter().enumerate() {
        if gc != 0.0 {
            axpy(gc, &w[c * rows..(c + 1) * rows], out);
        }
    }
}

/// `grad += x gᵀ` written into a column-major block.
#[inline]
pub(crate) fn outer_acc(x: &[f64], g: &[f64], grad: &mut [f64]) {
    let rows = x.len();
    for (c, &gc) in g.iter().enumerate() {
        if gc != 0.0 {
            axpy(gc, x, &mut grad[c * rows..(c + 1) * rows]);
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parameter_counts_match_closed_form() {
        let spec = LayerSpec::new(6, vec![24, 24], 3);
        // 7*24 + 25*24 + 25*3
        assert_eq!(spec.param_count(Architecture::Gnn), 843);
        assert_eq!(spec.param_count(Architecture::Gat), 843 + 96);
        let dnn = LayerSpec::new(6, vec![24; 6], 3);
        assert_eq!(dnn.param_count(Architecture::Dnn), 168 + 5 * 600 + 75);
    }

    #[test]
    fn layer_shapes() {
        let spec = LayerSpec::new(2, vec![4, 5], 3);
        assert_eq!(spec.layer_shape(0), (3, 4));
        assert_eq!(spec.layer_shape(1), (5, 5));
        assert_eq!(spec.layer_shape(2), (6, 3));
    }

    #[test]
    fn validation() {
        assert!(LayerSpec::new(2, vec![], 1).validate().is_err());
        assert!(LayerSpec::new(2, vec![0], 1).validate().is_err());
        assert!(LayerSpec::new(0, vec![3], 1).validate().is_err());
        assert!(Network::new(LayerSpec::new(2, vec![3], 1), Architecture::Gat).is_ok());
    }

    #[test]
    fn unflatten_rejects_wrong_length() {
        let spec = LayerSpec::new(2, vec![3], 1);
        assert!(NodeWeights::unflatten(&spec, Architecture::Gnn, &[0.0; 5]).is_err());
    }

    #[test]
    fn vec_is_column_major() {
        let spec = LayerSpec::new(1, vec![2], 1);
        // W0 is 2x2, W1 is 3x1
        let theta: Vec<f64> = (0..7).map(f64::from).collect();
        let w = NodeWeights::unflatten(&spec, Architecture::Gnn, &theta).unwrap();
        assert_eq!(w.layers[0][(1, 0)], 1.0);
        assert_eq!(w.layers[0][(0, 1)], 2.0);
        assert_eq!(w.layers[1][(2, 0)], 6.0);
    }

    proptest! {
        #[test]
        fn flatten_roundtrip(
            d_in in 1usize..4,
            hidden in proptest::collection::vec(1usize..5, 1..3),
            d_out in 1usize..3,
            gat in any::<bool>(),
            seed in any::<u64>(),
        ) {
            let arch = if gat { Architecture::Gat } else { Architecture::Gnn };
            let spec = LayerSpec::new(d_in, hidden, d_out);
            let p = spec.param_count(arch);
            let theta: Vec<f64> = (0..p)
                .map(|i| ((seed.wrapping_add(i as u64) % 1000) as f64) * 1e-3 - 0.5)
                .collect();
            let w = NodeWeights::unflatten(&spec, arch, &theta).unwrap();
            prop_assert_eq!(w.flatten(), theta);
            prop_assert_eq!(ParamLayout::new(&spec, arch).total, p);
        }
    }
}
