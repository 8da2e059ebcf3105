use crate::error::{Error, Result};
use crate::graph::Topology;

use super::{dot, mat_t_vec, Network};

/// Masked-softmax attention of one node at one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionRow {
    /// `N̄_i`, sorted.
    pub neighbors: Vec<usize>,
    /// Coefficients `c_{i,m}` for `m` in `neighbors`.
    pub scores: Vec<f64>,
    /// Normalised weights `β_{i,m}` for `m` in `neighbors`.
    pub weights: Vec<f64>,
    /// `W_iᵀ φ_m` for `m` in `neighbors`.
    pub(crate) transformed: Vec<Vec<f64>>,
}

/// Everything the forward pass computed, kept for the Jacobian sweep.
#[derive(Debug, Clone)]
pub struct Activations {
    /// Bias-augmented inputs `κ̄_m`.
    pub inputs: Vec<Vec<f64>>,
    /// `hidden[j][m]` is `φ_m^(j)` including the trailing bias `1`.
    pub hidden: Vec<Vec<Vec<f64>>>,
    /// `aggregated[j][m]` is the feature vector multiplied by `W_m^(j)ᵀ`.
    pub aggregated: Vec<Vec<Vec<f64>>>,
    /// `pre_activation[j][m] = W_m^(j)ᵀ aggregated[j][m]`.
    pub pre_activation: Vec<Vec<Vec<f64>>>,
    /// GAT only: `attention[j][m]`.
    pub attention: Vec<Vec<AttentionRow>>,
    /// Node outputs `φ_m`.
    pub outputs: Vec<Vec<f64>>,
}

impl Activations {
    /// Features entering layer `j` at node `m`.
    pub fn layer_input(&self, j: usize, m: usize) -> &[f64] {
        if j == 0 {
            &self.inputs[m]
        } else {
            &self.hidden[j - 1][m]
        }
    }

    /// Dense attention row `β_{i,·}^(j)` over all `N` nodes (zero off `N̄_i`).
    pub fn attention_dense(&self, j: usize, i: usize) -> Option<Vec<f64>> {
        let row = self.attention.get(j)?.get(i)?;
        let mut dense = vec![0.0; self.outputs.len()];
        for (&m, &b) in row.neighbors.iter().zip(&row.weights) {
            dense[m] = b;
        }
        Some(dense)
    }
}

impl Network {
    /// Layer-synchronous forward pass over all nodes.
    pub fn forward(
        &self,
        graph: &Topology,
        thetas: &[&[f64]],
        inputs: &[&[f64]],
    ) -> Result<Activations> {
        self.check_inputs(graph, thetas, inputs)?;
        let n = graph.n_agents();
        let k = self.spec.depth();
        let act = self.spec.activation;
        let gat = self.arch.has_attention();

        let aug_inputs: Vec<Vec<f64>> = inputs
            .iter()
            .map(|x| {
                let mut v = x.to_vec();
                v.push(1.0);
                v
            })
            .collect();

        let mut hidden: Vec<Vec<Vec<f64>>> = Vec::with_capacity(k);
        let mut aggregated = Vec::with_capacity(k);
        let mut pre_activation = Vec::with_capacity(k);
        let mut attention = Vec::new();

        for j in 0..k {
            let (rows, cols) = self.spec.layer_shape(j);
            let prev: &[Vec<f64>] = if j == 0 { &aug_inputs } else { &hidden[j - 1] };
            let mut layer_out = Vec::with_capacity(n);
            let mut layer_agg = Vec::with_capacity(n);
            let mut layer_pre = Vec::with_capacity(n);
            let mut layer_att = Vec::new();
            for (m, theta) in thetas.iter().enumerate() {
                let w = self.layout.layer(theta, j);
                let nbrs = self.aggregation_set(graph, m);
                let nbrs = nbrs.as_slice();
                let mut agg = vec![0.0; rows];
                if gat {
                    let a = self.layout.attention(theta, j);
                    let (a_self, a_nbr) = a.split_at(cols);
                    let transformed: Vec<Vec<f64>> = nbrs
                        .iter()
                        .map(|&l| {
                            let mut h = vec![0.0; cols];
                            mat_t_vec(w, rows, cols, &prev[l], &mut h);
                            h
                        })
                        .collect();
                    let own = nbrs
                        .iter()
                        .position(|&l| l == m)
                        .ok_or_else(|| Error::Dimension("node missing from own neighbourhood".into()))?;
                    let self_term = dot(a_self, &transformed[own]);
                    let scores: Vec<f64> = transformed
                        .iter()
                        .map(|h| self_term + dot(a_nbr, h))
                        .collect();
                    let weights = masked_softmax(&scores);
                    for (&l, &b) in nbrs.iter().zip(&weights) {
                        super::axpy(b, &prev[l], &mut agg);
                    }
                    layer_att.push(AttentionRow {
                        neighbors: nbrs.to_vec(),
                        scores,
                        weights,
                        transformed,
                    });
                } else {
                    for &l in nbrs {
                        super::axpy(1.0, &prev[l], &mut agg);
                    }
                }
                let mut out = vec![0.0; cols + 1];
                mat_t_vec(w, rows, cols, &agg, &mut out[..cols]);
                layer_pre.push(out[..cols].to_vec());
                for v in &mut out[..cols] {
                    *v = act.eval(*v);
                }
                out[cols] = 1.0;
                layer_out.push(out);
                layer_agg.push(agg);
            }
            hidden.push(layer_out);
            aggregated.push(layer_agg);
            pre_activation.push(layer_pre);
            if gat {
                attention.push(layer_att);
            }
        }

        let (rows, cols) = self.spec.layer_shape(k);
        let outputs = thetas
            .iter()
            .enumerate()
            .map(|(m, theta)| {
                let mut y = vec![0.0; cols];
                mat_t_vec(self.layout.layer(theta, k), rows, cols, &hidden[k - 1][m], &mut y);
                y
            })
            .collect();

        Ok(Activations {
            inputs: aug_inputs,
            hidden,
            aggregated,
            pre_activation,
            attention,
            outputs,
        })
    }

    /// Largest deviation between `forward(p∗G, p∗κ, p∗θ)` and `p∗forward(G, κ, θ)`,
    /// where node `v` is relabelled `perm[v]`.
    pub fn equivariance_error(
        &self,
        graph: &Topology,
        thetas: &[&[f64]],
        inputs: &[&[f64]],
        perm: &[usize],
    ) -> Result<f64> {
        let moved = graph.permuted(perm)?;
        let base = self.forward(graph, thetas, inputs)?;
        let n = graph.n_agents();
        let mut p_thetas = vec![thetas[0]; n];
        let mut p_inputs = vec![inputs[0]; n];
        for v in 0..n {
            p_thetas[perm[v]] = thetas[v];
            p_inputs[perm[v]] = inputs[v];
        }
        let out = self.forward(&moved, &p_thetas, &p_inputs)?;
        let mut worst = 0.0f64;
        for v in 0..n {
            for (a, b) in base.outputs[v].iter().zip(&out.outputs[perm[v]]) {
                worst = worst.max((a - b).abs());
            }
        }
        Ok(worst)
    }

    /// Single feedforward evaluation (the DNN baseline on one agent).
    pub fn forward_single(&self, theta: &[f64], input: &[f64]) -> Result<Vec<f64>> {
        let g = Topology::isolated(1);
        let acts = self.forward(&g, &[theta], &[input])?;
        Ok(acts.outputs.into_iter().next().expect("one node"))
    }
}

/// Softmax with max subtraction over the already-masked support.
pub(crate) fn masked_softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|&c| (c - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}
