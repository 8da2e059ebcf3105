//! Exact Jacobians `J_{i,z} = ∂φ_i/∂θ_z` by reverse accumulation through the
//! stored forward pass.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::Topology;

use super::{axpy, dot, mat_vec_acc, outer_acc, Activations, Network};

/// Nonzero Jacobian blocks of one node's output.
#[derive(Debug, Clone)]
pub struct NodeJacobians {
    pub node: usize,
    /// `(z, J_{node,z})`, each `d_out × p`, for `z` in the `(k-1)`-hop closed
    /// neighbourhood. Blocks for any other `z` are identically zero.
    pub entries: Vec<(usize, DMatrix<f64>)>,
}

impl NodeJacobians {
    pub fn get(&self, z: usize) -> Option<&DMatrix<f64>> {
        self.entries.iter().find(|(m, _)| *m == z).map(|(_, j)| j)
    }

    /// `Σ_z J_{node,z}`.
    pub fn sum(&self) -> Option<DMatrix<f64>> {
        let mut it = self.entries.iter();
        let (_, first) = it.next()?;
        Some(it.fold(first.clone(), |acc, (_, j)| acc + j))
    }
}

/// The two contractions the adaptive laws need for node `i`:
/// `Σ_z J_{i,z}(θ_i − θ_z)` and the rows of `Σ_z J_{i,z}`.
#[derive(Debug, Clone)]
pub struct JacobianTerms {
    pub consensus: Vec<f64>,
    /// `rows[o]` is row `o` of `Σ_z J_{i,z}`.
    pub rows: Vec<Vec<f64>>,
}

impl JacobianTerms {
    /// `(Σ_z J_{i,z})ᵀ s`
    pub fn transpose_apply(&self, s: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows.first().map_or(0, Vec::len)];
        for (row, &so) in self.rows.iter().zip(s) {
            axpy(so, row, &mut out);
        }
        out
    }
}

/// Receives parameter-gradient contributions from one backward sweep.
trait GradSink {
    /// `∂/∂W += x gᵀ` on the block of `node` starting at `offset`; `wx` is
    /// `Wᵀx` for that node's own `W`.
    fn layer(&mut self, node: usize, offset: usize, x: &[f64], g: &[f64], wx: &[f64]);
    /// `∂/∂a += g` on the block of `node` starting at `offset`.
    fn attention(&mut self, node: usize, offset: usize, g: &[f64]);
}

struct DenseSink {
    p: usize,
    rows: Vec<Option<Vec<f64>>>,
}

impl DenseSink {
    fn buf(&mut self, node: usize) -> &mut Vec<f64> {
        let p = self.p;
        self.rows[node].get_or_insert_with(|| vec![0.0; p])
    }
}

impl GradSink for DenseSink {
    fn layer(&mut self, node: usize, offset: usize, x: &[f64], g: &[f64], _wx: &[f64]) {
        let len = x.len() * g.len();
        outer_acc(x, g, &mut self.buf(node)[offset..offset + len]);
    }

    fn attention(&mut self, node: usize, offset: usize, g: &[f64]) {
        axpy(1.0, g, &mut self.buf(node)[offset..offset + g.len()]);
    }
}

/// Accumulates `Σ_z J_{i,z}` and `Σ_z ⟨J_{i,z}, θ_z⟩`; the consensus term
/// is then `⟨Σ_z J_{i,z}, θ_i⟩ − Σ_z ⟨J_{i,z}, θ_z⟩`.
struct ContractSink<'a> {
    thetas: &'a [&'a [f64]],
    summed: Vec<f64>,
    own: f64,
}

impl GradSink for ContractSink<'_> {
    fn layer(&mut self, _node: usize, offset: usize, x: &[f64], g: &[f64], wx: &[f64]) {
        outer_acc(x, g, &mut self.summed[offset..offset + x.len() * g.len()]);
        self.own += dot(g, wx);
    }

    fn attention(&mut self, node: usize, offset: usize, g: &[f64]) {
        axpy(1.0, g, &mut self.summed[offset..offset + g.len()]);
        self.own += dot(g, &self.thetas[node][offset..offset + g.len()]);
    }
}

impl Network {
    fn check_backward(&self, graph: &Topology, thetas: &[&[f64]], acts: &Activations, i: usize) -> Result<()> {
        let n = graph.n_agents();
        if i >= n {
            return Err(Error::NodeOutOfRange { node: i, n });
        }
        if thetas.len() != n || acts.outputs.len() != n || acts.hidden.len() != self.spec.depth() {
            return Err(Error::Dimension("activations do not match the graph or network".into()));
        }
        if thetas.iter().any(|t| t.len() != self.layout.total) {
            return Err(Error::Dimension(format!(
                "weight vectors must have length {}",
                self.layout.total
            )));
        }
        Ok(())
    }

    /// One backward sweep from output seed `seed` at node `i`.
    fn backprop<S: GradSink>(
        &self,
        graph: &Topology,
        thetas: &[&[f64]],
        acts: &Activations,
        i: usize,
        seed: &[f64],
        sink: &mut S,
    ) {
        let n = graph.n_agents();
        let k = self.spec.depth();
        let act = self.spec.activation;
        let gat = self.arch.has_attention();

        let (rows_k, _) = self.spec.layer_shape(k);
        let off_k = self.layout.layers[k].0;
        sink.layer(i, off_k, &acts.hidden[k - 1][i], seed, &acts.outputs[i]);
        let mut gi = vec![0.0; rows_k];
        mat_vec_acc(self.layout.layer(thetas[i], k), rows_k, seed, &mut gi);
        let mut g_cur: Vec<Option<Vec<f64>>> = vec![None; n];
        g_cur[i] = Some(gi);

        for j in (0..k).rev() {
            let (rows, cols) = self.spec.layer_shape(j);
            let off = self.layout.layers[j].0;
            let mut g_prev: Vec<Option<Vec<f64>>> = vec![None; n];
            let mut push = |l: usize, scale: f64, v: &[f64]| {
                axpy(scale, v, g_prev[l].get_or_insert_with(|| vec![0.0; rows]));
            };
            for m in 0..n {
                let Some(g) = &g_cur[m] else { continue };
                let y = &acts.hidden[j][m];
                let gx: Vec<f64> = (0..cols)
                    .map(|c| g[c] * act.derivative_from_output(y[c]))
                    .collect();
                let w = self.layout.layer(thetas[m], j);
                sink.layer(m, off, &acts.aggregated[j][m], &gx, &acts.pre_activation[j][m]);
                let mut g_agg = vec![0.0; rows];
                mat_vec_acc(w, rows, &gx, &mut g_agg);

                if !gat {
                    if j > 0 {
                        for &l in self.aggregation_set(graph, m).as_slice() {
                            push(l, 1.0, &g_agg);
                        }
                    }
                    continue;
                }

                let row = &acts.attention[j][m];
                let a = self.layout.attention(thetas[m], j);
                let (a_self, a_nbr) = a.split_at(cols);
                let g_beta: Vec<f64> = row
                    .neighbors
                    .iter()
                    .map(|&l| dot(acts.layer_input(j, l), &g_agg))
                    .collect();
                let mean = dot(&row.weights, &g_beta);
                let g_c: Vec<f64> = row
                    .weights
                    .iter()
                    .zip(&g_beta)
                    .map(|(b, gb)| b * (gb - mean))
                    .collect();
                let g_c_sum: f64 = g_c.iter().sum();
                let own = row
                    .neighbors
                    .iter()
                    .position(|&l| l == m)
                    .expect("closed neighbourhood contains the node");

                let mut g_a = vec![0.0; 2 * cols];
                axpy(g_c_sum, &row.transformed[own], &mut g_a[..cols]);
                for (gc, h) in g_c.iter().zip(&row.transformed) {
                    axpy(*gc, h, &mut g_a[cols..]);
                }
                sink.attention(m, self.layout.attention[j].0, &g_a);

                for (idx, &l) in row.neighbors.iter().enumerate() {
                    let mut g_h: Vec<f64> = a_nbr.iter().map(|v| g_c[idx] * v).collect();
                    if idx == own {
                        axpy(g_c_sum, a_self, &mut g_h);
                    }
                    let x_l = acts.layer_input(j, l);
                    sink.layer(m, off, x_l, &g_h, &row.transformed[idx]);
                    if j > 0 {
                        let mut back = vec![0.0; rows];
                        mat_vec_acc(w, rows, &g_h, &mut back);
                        axpy(row.weights[idx], &g_agg, &mut back);
                        push(l, 1.0, &back);
                    }
                }
            }
            g_cur = g_prev;
        }
    }

    /// All nonzero blocks `J_{i,z}`.
    pub fn jacobians(
        &self,
        graph: &Topology,
        thetas: &[&[f64]],
        acts: &Activations,
        i: usize,
    ) -> Result<NodeJacobians> {
        self.check_backward(graph, thetas, acts, i)?;
        let d_out = self.spec.d_out;
        let p = self.layout.total;
        let support: Vec<usize> = match self.arch {
            super::Architecture::Dnn => vec![i],
            _ => graph
                .k_hop_neighborhood(i, self.spec.depth() - 1)?
                .into_iter()
                .collect(),
        };
        let mut mats: Vec<DMatrix<f64>> = support.iter().map(|_| DMatrix::zeros(d_out, p)).collect();
        for o in 0..d_out {
            let mut seed = vec![0.0; d_out];
            seed[o] = 1.0;
            let mut sink = DenseSink {
                p,
                rows: vec![None; graph.n_agents()],
            };
            self.backprop(graph, thetas, acts, i, &seed, &mut sink);
            for (z, mat) in support.iter().zip(mats.iter_mut()) {
                if let Some(r) = &sink.rows[*z] {
                    for (c, v) in r.iter().enumerate() {
                        mat[(o, c)] = *v;
                    }
                }
            }
        }
        Ok(NodeJacobians {
            node: i,
            entries: support.into_iter().zip(mats).collect(),
        })
    }

    /// Single block `J_{i,z}`; zero outside the receptive field of `i`.
    pub fn jacobian(
        &self,
        graph: &Topology,
        thetas: &[&[f64]],
        acts: &Activations,
        i: usize,
        z: usize,
    ) -> Result<DMatrix<f64>> {
        let n = graph.n_agents();
        if z >= n {
            return Err(Error::NodeOutOfRange { node: z, n });
        }
        let all = self.jacobians(graph, thetas, acts, i)?;
        Ok(all
            .get(z)
            .cloned()
            .unwrap_or_else(|| DMatrix::zeros(self.spec.d_out, self.layout.total)))
    }

    /// Contractions used by the adaptive laws, without forming the blocks.
    pub fn jacobian_terms(
        &self,
        graph: &Topology,
        thetas: &[&[f64]],
        acts: &Activations,
        i: usize,
    ) -> Result<JacobianTerms> {
        self.check_backward(graph, thetas, acts, i)?;
        let d_out = self.spec.d_out;
        let mut consensus = Vec::with_capacity(d_out);
        let mut rows = Vec::with_capacity(d_out);
        for o in 0..d_out {
            let mut seed = vec![0.0; d_out];
            seed[o] = 1.0;
            let mut sink = ContractSink {
                thetas,
                summed: vec![0.0; self.layout.total],
                own: 0.0,
            };
            self.backprop(graph, thetas, acts, i, &seed, &mut sink);
            consensus.push(dot(&sink.summed, thetas[i]) - sink.own);
            rows.push(sink.summed);
        }
        Ok(JacobianTerms { consensus, rows })
    }

    /// `Σ_z J_{i,z}(θ_i − θ_z)` and `(Σ_z J_{i,z})ᵀ s`. The DNN has only the
    /// block `z = i`, so its consensus term is zero and one sweep seeded with
    /// `s` gives the second term.
    pub fn adaptive_terms(
        &self,
        graph: &Topology,
        thetas: &[&[f64]],
        acts: &Activations,
        i: usize,
        s: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        if s.len() != self.spec.d_out {
            return Err(Error::Dimension(format!(
                "seed has length {}, expected {}",
                s.len(),
                self.spec.d_out
            )));
        }
        if self.arch.has_attention() || self.arch == super::Architecture::Gnn {
            let terms = self.jacobian_terms(graph, thetas, acts, i)?;
            let tracking = terms.transpose_apply(s);
            return Ok((terms.consensus, tracking));
        }
        self.check_backward(graph, thetas, acts, i)?;
        let mut sink = ContractSink {
            thetas,
            summed: vec![0.0; self.layout.total],
            own: 0.0,
        };
        self.backprop(graph, thetas, acts, i, s, &mut sink);
        Ok((vec![0.0; self.spec.d_out], sink.summed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::TopologyKind;
    use crate::nets::{finite_diff_jacobian, Architecture, LayerSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(
        arch: Architecture,
        hidden: Vec<usize>,
        kind: TopologyKind,
        n: usize,
        seed: u64,
    ) -> (Network, Topology, Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let net = Network::new(LayerSpec::new(2, hidden, 2), arch).unwrap();
        let g = Topology::build(kind, n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let thetas = (0..n)
            .map(|_| (0..net.param_count()).map(|_| rng.gen_range(-0.9..0.9)).collect())
            .collect();
        let inputs = (0..n)
            .map(|_| (0..2).map(|_| rng.gen_range(-1.5..1.5)).collect())
            .collect();
        (net, g, thetas, inputs)
    }

    fn refs(v: &[Vec<f64>]) -> Vec<&[f64]> {
        v.iter().map(Vec::as_slice).collect()
    }

    fn fd_block(
        net: &Network,
        g: &Topology,
        thetas: &[Vec<f64>],
        inputs: &[Vec<f64>],
        i: usize,
        z: usize,
    ) -> DMatrix<f64> {
        let base = thetas[z].clone();
        finite_diff_jacobian(
            |t| {
                let mut th = thetas.to_vec();
                th[z] = t.to_vec();
                net.forward(g, &refs(&th), &refs(inputs)).unwrap().outputs[i].clone()
            },
            &base,
            1e-6,
        )
        .unwrap()
    }

    #[test]
    fn blocks_match_finite_differences() {
        for arch in [Architecture::Gnn, Architecture::Gat, Architecture::Dnn] {
            let (net, g, thetas, inputs) = setup(arch, vec![3, 4], TopologyKind::Path, 4, 5);
            let acts = net.forward(&g, &refs(&thetas), &refs(&inputs)).unwrap();
            for i in 0..4 {
                for z in 0..4 {
                    let a = net.jacobian(&g, &refs(&thetas), &acts, i, z).unwrap();
                    let f = fd_block(&net, &g, &thetas, &inputs, i, z);
                    let err = (&a - &f).abs().max();
                    assert!(err < 1e-7, "{arch} ({i},{z}) err {err}");
                }
            }
        }
    }

    #[test]
    fn locality_of_blocks() {
        let (net, g, thetas, inputs) = setup(Architecture::Gat, vec![3, 3], TopologyKind::Path, 5, 1);
        let acts = net.forward(&g, &refs(&thetas), &refs(&inputs)).unwrap();
        let jac = net.jacobians(&g, &refs(&thetas), &acts, 0).unwrap();
        let zs: Vec<usize> = jac.entries.iter().map(|(z, _)| *z).collect();
        assert_eq!(zs, vec![0, 1]);
        assert_eq!(net.jacobian(&g, &refs(&thetas), &acts, 0, 3).unwrap().abs().max(), 0.0);
        let f = fd_block(&net, &g, &thetas, &inputs, 0, 2);
        assert_eq!(f.abs().max(), 0.0);
    }

    #[test]
    fn contractions_agree_with_dense_blocks() {
        for arch in [Architecture::Gnn, Architecture::Gat] {
            let (net, g, thetas, inputs) = setup(arch, vec![4, 3], TopologyKind::Ring, 5, 9);
            let acts = net.forward(&g, &refs(&thetas), &refs(&inputs)).unwrap();
            for i in 0..5 {
                let jac = net.jacobians(&g, &refs(&thetas), &acts, i).unwrap();
                let terms = net.jacobian_terms(&g, &refs(&thetas), &acts, i).unwrap();
                let mut cons = vec![0.0; 2];
                for (z, j) in &jac.entries {
                    let d: Vec<f64> = thetas[i].iter().zip(&thetas[*z]).map(|(a, b)| a - b).collect();
                    let v = j * nalgebra::DVector::from_vec(d);
                    cons[0] += v[0];
                    cons[1] += v[1];
                }
                for (a, b) in cons.iter().zip(&terms.consensus) {
                    assert!((a - b).abs() < 1e-12);
                }
                let sum = jac.sum().unwrap();
                let s = [0.7, -1.3];
                let expect = sum.transpose() * nalgebra::DVector::from_column_slice(&s);
                let got = terms.transpose_apply(&s);
                for (a, b) in expect.iter().zip(&got) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn adaptive_terms_match_dense_blocks() {
        for arch in [Architecture::Dnn, Architecture::Gnn, Architecture::Gat] {
            let (net, g, thetas, inputs) = setup(arch, vec![3, 4], TopologyKind::Path, 4, 21);
            let acts = net.forward(&g, &refs(&thetas), &refs(&inputs)).unwrap();
            let s = [-0.4, 1.1];
            for i in 0..4 {
                let jac = net.jacobians(&g, &refs(&thetas), &acts, i).unwrap();
                let (cons, track) = net.adaptive_terms(&g, &refs(&thetas), &acts, i, &s).unwrap();
                let mut expect_cons = nalgebra::DVector::zeros(2);
                for (z, j) in &jac.entries {
                    let d: Vec<f64> = thetas[i].iter().zip(&thetas[*z]).map(|(a, b)| a - b).collect();
                    expect_cons += j * nalgebra::DVector::from_vec(d);
                }
                let expect_track = jac.sum().unwrap().transpose() * nalgebra::DVector::from_column_slice(&s);
                for (a, b) in expect_cons.iter().zip(&cons) {
                    assert!((a - b).abs() < 1e-12, "{arch:?}");
                }
                for (a, b) in expect_track.iter().zip(&track) {
                    assert!((a - b).abs() < 1e-12, "{arch:?}");
                }
            }
            assert!(net.adaptive_terms(&g, &refs(&thetas), &acts, 0, &[1.0]).is_err());
        }
    }

    #[test]
    fn output_block_is_kronecker_of_last_hidden() {
        let net = Network::new(LayerSpec::new(2, vec![3], 2), Architecture::Gnn).unwrap();
        let g = Topology::isolated(1);
        let theta: Vec<f64> = (0..net.param_count()).map(|i| 0.1 * i as f64 - 0.7).collect();
        let acts = net.forward(&g, &[theta.as_slice()], &[&[0.4, -0.2]]).unwrap();
        let j = net.jacobian(&g, &[theta.as_slice()], &acts, 0, 0).unwrap();
        let (off, rows, cols) = net.layout().layers[1];
        let phi = &acts.hidden[0][0];
        for o in 0..2 {
            for c in 0..cols {
                for r in 0..rows {
                    let expect = if o == c { phi[r] } else { 0.0 };
                    assert_eq!(j[(o, off + c * rows + r)], expect);
                }
            }
        }
    }

    #[test]
    fn single_node_gat_layer_blocks_match_gnn() {
        let spec = LayerSpec::new(2, vec![3, 2], 2);
        let gnn = Network::new(spec.clone(), Architecture::Gnn).unwrap();
        let gat = Network::new(spec, Architecture::Gat).unwrap();
        let g = Topology::isolated(1);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let theta: Vec<f64> = (0..gat.param_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let p = gnn.param_count();
        let x: &[f64] = &[0.3, 0.9];
        let a = gnn.forward(&g, &[&theta[..p]], &[x]).unwrap();
        let b = gat.forward(&g, &[theta.as_slice()], &[x]).unwrap();
        let ja = gnn.jacobian(&g, &[&theta[..p]], &a, 0, 0).unwrap();
        let jb = gat.jacobian(&g, &[theta.as_slice()], &b, 0, 0).unwrap();
        assert!((ja - jb.columns(0, p)).abs().max() < 1e-15);
        // β ≡ 1, so the attention block vanishes
        assert!(jb.columns(p, gat.param_count() - p).abs().max() < 1e-15);
    }

    #[test]
    fn self_half_of_attention_vector_has_zero_gradient() {
        // a_selfᵀ W_iᵀ φ_i shifts every c_{i,·} equally, which softmax ignores
        let (net, g, thetas, inputs) = setup(Architecture::Gat, vec![3, 4], TopologyKind::Star, 4, 8);
        let acts = net.forward(&g, &refs(&thetas), &refs(&inputs)).unwrap();
        let jac = net.jacobians(&g, &refs(&thetas), &acts, 1).unwrap();
        for (_, j) in &jac.entries {
            for (layer, &(off, len)) in net.layout().attention.iter().enumerate() {
                let d = net.spec().hidden[layer];
                assert_eq!(len, 2 * d);
                assert!(j.columns(off, d).abs().max() < 1e-14);
            }
        }
    }

    #[test]
    fn out_of_range_node() {
        let (net, g, thetas, inputs) = setup(Architecture::Gnn, vec![2], TopologyKind::Path, 3, 0);
        let acts = net.forward(&g, &refs(&thetas), &refs(&inputs)).unwrap();
        assert!(net.jacobians(&g, &refs(&thetas), &acts, 3).is_err());
        assert!(net.jacobian(&g, &refs(&thetas), &acts, 0, 7).is_err());
    }
}
