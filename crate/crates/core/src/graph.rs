//! Communication topologies and the matrices derived from them.
//!
//! Nodes are labelled `0..N`. A [`Topology`] is an undirected simple graph
//! plus the pinning vector `b` (which agents measure the target directly).
//! [`GraphMatrices`] holds the adjacency, Laplacian and graph interaction
//! matrix `H = (L + diag(b)) ⊗ I_n`.

use std::collections::{BTreeSet, VecDeque};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Named topology families used in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyKind {
    Path,
    Ring,
    Star,
    Complete,
    Acyclic,
}

impl TopologyKind {
    pub const ALL: [TopologyKind; 5] = [
        TopologyKind::Path,
        TopologyKind::Ring,
        TopologyKind::Star,
        TopologyKind::Complete,
        TopologyKind::Acyclic,
    ];

    /// Short label in graph-theory notation, e.g. `P6`.
    pub fn label(self, n: usize) -> String {
        match self {
            TopologyKind::Path => format!("P{n}"),
            TopologyKind::Ring => format!("R{n}"),
            TopologyKind::Star => format!("S{n}"),
            TopologyKind::Complete => format!("K{n}"),
            TopologyKind::Acyclic => format!("T{n}"),
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            TopologyKind::Path => "Path Graph",
            TopologyKind::Ring => "Ring Graph",
            TopologyKind::Star => "Star Graph",
            TopologyKind::Complete => "Complete Graph",
            TopologyKind::Acyclic => "Acyclic Graph",
        }
    }
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TopologyKind::Path => "path",
            TopologyKind::Ring => "ring",
            TopologyKind::Star => "star",
            TopologyKind::Complete => "complete",
            TopologyKind::Acyclic => "acyclic",
        };
        f.write_str(s)
    }
}

impl FromStr for TopologyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "path" => Ok(TopologyKind::Path),
            "ring" => Ok(TopologyKind::Ring),
            "star" => Ok(TopologyKind::Star),
            "complete" => Ok(TopologyKind::Complete),
            "acyclic" | "tree" => Ok(TopologyKind::Acyclic),
            other => Err(Error::Topology(format!("unknown topology kind `{other}`"))),
        }
    }
}

/// Undirected communication graph with pinning flags.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    n: usize,
    edges: Vec<(usize, usize)>,
    pins: Vec<bool>,
    // sorted open neighbourhoods
    neighbors: Vec<Vec<usize>>,
    // sorted closed neighbourhoods (including the node itself)
    closed: Vec<Vec<usize>>,
}

impl Topology {
    /// Builds a topology from an explicit edge list. Edges are unordered;
    /// self-loops and duplicates are rejected.
    pub fn new(n: usize, edges: &[(usize, usize)], pins: Vec<bool>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Topology("graph needs at least one node".into()));
        }
        if pins.len() != n {
            return Err(Error::Topology(format!(
                "pin vector has length {}, expected {n}",
                pins.len()
            )));
        }
        let mut seen = BTreeSet::new();
        let mut normalized = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::NodeOutOfRange { node: a.max(b), n });
            }
            if a == b {
                return Err(Error::Topology(format!("self-loop at node {a}")));
            }
            let e = (a.min(b), a.max(b));
            if !seen.insert(e) {
                return Err(Error::Topology(format!("duplicate edge {:?}", e)));
            }
            normalized.push(e);
        }
        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in &normalized {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for nb in &mut neighbors {
            nb.sort_unstable();
        }
        let closed = neighbors
            .iter()
            .enumerate()
            .map(|(i, nb)| {
                let mut c = nb.clone();
                c.push(i);
                c.sort_unstable();
                c
            })
            .collect();
        Ok(Self {
            n,
            edges: normalized,
            pins,
            neighbors,
            closed,
        })
    }

    /// Named topology with the default pin set.
    ///
    /// Star: node 0 is the hub. Acyclic: a caterpillar tree where node 1 and
    /// every odd node `2m+1` form the spine; for `N = 6` this is
    /// `{(0,1),(1,2),(1,3),(3,4),(3,5)}`.
    pub fn build(kind: TopologyKind, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Topology(format!("{kind} needs N >= 2, got {n}")));
        }
        let edges: Vec<(usize, usize)> = match kind {
            TopologyKind::Path => (0..n - 1).map(|i| (i, i + 1)).collect(),
            TopologyKind::Ring => {
                if n < 3 {
                    return Err(Error::Topology("ring needs N >= 3".into()));
                }
                (0..n).map(|i| (i, (i + 1) % n)).collect()
            }
            TopologyKind::Star => (1..n).map(|i| (0, i)).collect(),
            TopologyKind::Complete => (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .collect(),
            TopologyKind::Acyclic => {
                let mut e = vec![(0, 1)];
                for m in 2..n {
                    // 1-based label m+1: odd labels hang off the previous node,
                    // even labels off the node two back
                    let parent = if (m + 1) % 2 == 1 { m - 1 } else { m - 2 };
                    e.push((parent, m));
                }
                e
            }
        };
        Self::new(n, &edges, default_pins(kind, n))
    }

    /// Graph with no edges; every node aggregates only itself.
    pub fn isolated(n: usize) -> Self {
        Self::new(n, &[], vec![false; n]).expect("isolated graph is always valid")
    }

    pub fn with_pins(mut self, pins: Vec<bool>) -> Result<Self> {
        if pins.len() != self.n {
            return Err(Error::Topology(format!(
                "pin vector has length {}, expected {}",
                pins.len(),
                self.n
            )));
        }
        self.pins = pins;
        Ok(self)
    }

    /// Sets pins from a list of pinned node indices.
    pub fn with_pinned_nodes(self, pinned: &[usize]) -> Result<Self> {
        let n = self.n;
        let mut pins = vec![false; n];
        for &p in pinned {
            if p >= n {
                return Err(Error::NodeOutOfRange { node: p, n });
            }
            pins[p] = true;
        }
        self.with_pins(pins)
    }

    pub fn n_agents(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn pins(&self) -> &[bool] {
        &self.pins
    }

    pub fn is_pinned(&self, i: usize) -> bool {
        self.pins[i]
    }

    /// Open neighbourhood `N_i`, sorted.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// Augmented neighbourhood `N_i ∪ {i}`, sorted.
    pub fn closed_neighbors(&self, i: usize) -> &[usize] {
        &self.closed[i]
    }

    pub fn is_connected(&self) -> bool {
        self.hop_distances(0).iter().all(Option::is_some)
    }

    fn hop_distances(&self, src: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n];
        dist[src] = Some(0);
        let mut queue = VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap();
            for &v in &self.neighbors[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Augmented `k`-hop neighbourhood: all nodes within `k` hops of `i`,
    /// including `i`.
    pub fn k_hop_neighborhood(&self, i: usize, k: usize) -> Result<BTreeSet<usize>> {
        if i >= self.n {
            return Err(Error::NodeOutOfRange { node: i, n: self.n });
        }
        Ok(self
            .hop_distances(i)
            .into_iter()
            .enumerate()
            .filter_map(|(v, d)| d.filter(|&d| d <= k).map(|_| v))
            .collect())
    }

    /// Relabels node `v` as `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.n)?;
        let edges: Vec<_> = self
            .edges
            .iter()
            .map(|&(a, b)| (perm[a], perm[b]))
            .collect();
        let mut pins = vec![false; self.n];
        for (v, &p) in self.pins.iter().enumerate() {
            pins[perm[v]] = p;
        }
        Self::new(self.n, &edges, pins)
    }
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if perm.len() != n {
        return Err(Error::InvalidArgument(format!(
            "permutation has length {}, expected {n}",
            perm.len()
        )));
    }
    for &p in perm {
        if p >= n || seen[p] {
            return Err(Error::InvalidArgument("not a permutation".into()));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Default pinned agents: every other agent starting at node 0 for path, ring,
/// complete and acyclic graphs; the first `ceil(N/2)` agents (hub included)
/// for the star.
pub fn default_pins(kind: TopologyKind, n: usize) -> Vec<bool> {
    match kind {
        TopologyKind::Star => (0..n).map(|i| i < n.div_ceil(2)).collect(),
        _ => (0..n).map(|i| i % 2 == 0).collect(),
    }
}

/// Topology as it appears in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyConfig {
    pub kind: TopologyKind,
    #[serde(default = "default_agents")]
    pub n_agents: usize,
    /// Overrides the named edge set when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<[usize; 2]>>,
    /// Pinned node indices; overrides the default pin set when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pins: Option<Vec<usize>>,
}

fn default_agents() -> usize {
    6
}

impl TopologyConfig {
    pub fn named(kind: TopologyKind, n_agents: usize) -> Self {
        Self {
            kind,
            n_agents,
            edges: None,
            pins: None,
        }
    }

    pub fn build(&self) -> Result<Topology> {
        let mut t = match &self.edges {
            Some(edges) => {
                let e: Vec<_> = edges.iter().map(|&[a, b]| (a, b)).collect();
                Topology::new(self.n_agents, &e, default_pins(self.kind, self.n_agents))?
            }
            None => Topology::build(self.kind, self.n_agents)?,
        };
        if let Some(pins) = &self.pins {
            t = t.with_pinned_nodes(pins)?;
        }
        Ok(t)
    }

    pub fn label(&self) -> String {
        self.kind.label(self.n_agents)
    }
}

/// Matrices derived from a connected topology.
#[derive(Debug, Clone)]
pub struct GraphMatrices {
    pub adjacency: DMatrix<f64>,
    pub adjacency_with_self_loops: DMatrix<f64>,
    pub degree: DMatrix<f64>,
    pub laplacian: DMatrix<f64>,
    pub pinning: DMatrix<f64>,
    /// `(L + B) ⊗ I_n`
    pub interaction: DMatrix<f64>,
    pub state_dim: usize,
}

impl GraphMatrices {
    /// `L + B` before the Kronecker lift.
    pub fn pinned_laplacian(&self) -> DMatrix<f64> {
        &self.laplacian + &self.pinning
    }

    pub fn interaction_eigenvalues(&self) -> DVector<f64> {
        symmetric_eigen(&self.interaction).0
    }
}

/// Builds the adjacency, degree, Laplacian and interaction matrices for
/// state dimension `n`.
pub fn matrices(t: &Topology, n: usize) -> Result<GraphMatrices> {
    if n == 0 {
        return Err(Error::InvalidArgument("state dimension must be positive".into()));
    }
    if !t.is_connected() {
        return Err(Error::Disconnected);
    }
    let nn = t.n_agents();
    let mut adjacency = DMatrix::zeros(nn, nn);
    for &(a, b) in t.edges() {
        adjacency[(a, b)] = 1.0;
        adjacency[(b, a)] = 1.0;
    }
    let adjacency_with_self_loops = &adjacency + DMatrix::identity(nn, nn);
    let degree = DMatrix::from_diagonal(&DVector::from_iterator(
        nn,
        adjacency.row_iter().map(|r| r.sum()),
    ));
    let laplacian = &degree - &adjacency;
    let pinning = DMatrix::from_diagonal(&DVector::from_iterator(
        nn,
        t.pins().iter().map(|&b| if b { 1.0 } else { 0.0 }),
    ));
    let interaction = (&laplacian + &pinning).kronecker(&DMatrix::<f64>::identity(n, n));
    Ok(GraphMatrices {
        adjacency,
        adjacency_with_self_loops,
        degree,
        laplacian,
        pinning,
        interaction,
        state_dim: n,
    })
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted
/// ascending and eigenvectors as matching columns.
pub fn symmetric_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(m.nrows(), order.len());
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Smallest eigenvalue of `H` over all connected graphs on `N` nodes with at
/// least one pin, attained by the path pinned at one endpoint.
pub fn lambda_min_closed_form(n: usize) -> f64 {
    let n = n as f64;
    2.0 * (1.0 + (2.0 * n * PI / (2.0 * n + 1.0)).cos())
}

/// Upper bound on the largest eigenvalue of `H` for `N` agents.
pub fn lambda_max_bound(n: usize) -> f64 {
    n as f64 + 1.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn edge_set(t: &Topology) -> BTreeSet<(usize, usize)> {
        t.edges().iter().copied().collect()
    }

    #[test]
    fn path_six_edges() {
        let t = Topology::build(TopologyKind::Path, 6).unwrap();
        let expected: BTreeSet<_> = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)].into();
        assert_eq!(edge_set(&t), expected);
    }

    #[test]
    fn complete_three_edges() {
        let t = Topology::build(TopologyKind::Complete, 3).unwrap();
        let expected: BTreeSet<_> = [(0, 1), (0, 2), (1, 2)].into();
        assert_eq!(edge_set(&t), expected);
    }

    #[test]
    fn acyclic_six_is_the_documented_tree() {
        let t = Topology::build(TopologyKind::Acyclic, 6).unwrap();
        let expected: BTreeSet<_> = [(0, 1), (1, 2), (1, 3), (3, 4), (3, 5)].into();
        assert_eq!(edge_set(&t), expected);
        // tree: connected with N-1 edges, and not a path (node 1 has degree 3)
        assert!(t.is_connected());
        assert_eq!(t.edges().len(), 5);
        assert_eq!(t.neighbors(1).len(), 3);
    }

    #[test]
    fn acyclic_is_a_tree_for_all_sizes() {
        for n in 2..12 {
            let t = Topology::build(TopologyKind::Acyclic, n).unwrap();
            assert!(t.is_connected());
            assert_eq!(t.edges().len(), n - 1);
        }
    }

    #[test]
    fn ring_needs_three_nodes() {
        assert!(Topology::build(TopologyKind::Ring, 2).is_err());
        assert!(Topology::build(TopologyKind::Path, 1).is_err());
        assert_eq!(Topology::build(TopologyKind::Ring, 3).unwrap().edges().len(), 3);
    }

    #[test]
    fn default_pin_sets() {
        let p = Topology::build(TopologyKind::Path, 6).unwrap();
        assert_eq!(p.pins(), &[true, false, true, false, true, false]);
        let s = Topology::build(TopologyKind::Star, 6).unwrap();
        assert_eq!(s.pins(), &[true, true, true, false, false, false]);
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(Topology::new(3, &[(0, 0)], vec![true; 3]).is_err());
        assert!(Topology::new(3, &[(0, 1), (1, 0)], vec![true; 3]).is_err());
        assert!(Topology::new(3, &[(0, 3)], vec![true; 3]).is_err());
    }

    #[test]
    fn two_node_interaction_matrix() {
        let t = Topology::build(TopologyKind::Path, 2)
            .unwrap()
            .with_pins(vec![true, false])
            .unwrap();
        let m = matrices(&t, 1).unwrap();
        assert_eq!(m.interaction, DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn complete_three_all_pinned_spectrum() {
        let t = Topology::build(TopologyKind::Complete, 3)
            .unwrap()
            .with_pins(vec![true; 3])
            .unwrap();
        let ev = matrices(&t, 1).unwrap().interaction_eigenvalues();
        assert_abs_diff_eq!(ev[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ev[1], 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ev[2], 4.0, epsilon = 1e-12);
    }

    #[test]
    fn kronecker_lift_doubles_multiplicities() {
        for kind in TopologyKind::ALL {
            let t = Topology::build(kind, 5).unwrap();
            let m1 = matrices(&t, 1).unwrap().interaction_eigenvalues();
            let m2 = matrices(&t, 2).unwrap().interaction_eigenvalues();
            assert_eq!(m2.len(), 10);
            for (idx, &lam) in m1.iter().enumerate() {
                assert_abs_diff_eq!(m2[2 * idx], lam, epsilon = 1e-10);
                assert_abs_diff_eq!(m2[2 * idx + 1], lam, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn matrix_invariants() {
        for kind in TopologyKind::ALL {
            let t = Topology::build(kind, 6).unwrap();
            let m = matrices(&t, 3).unwrap();
            assert_eq!(m.adjacency, m.adjacency.transpose());
            for i in 0..6 {
                assert_eq!(m.adjacency[(i, i)], 0.0);
                assert_eq!(m.adjacency_with_self_loops[(i, i)], 1.0);
                assert_abs_diff_eq!(m.laplacian.row(i).sum(), 0.0);
                // support of Ā row i is exactly the closed neighbourhood
                let support: Vec<usize> = (0..6)
                    .filter(|&j| m.adjacency_with_self_loops[(i, j)] != 0.0)
                    .collect();
                assert_eq!(support, t.closed_neighbors(i));
            }
            assert_eq!(m.interaction, m.interaction.transpose());
            assert_eq!(m.interaction.nrows(), 18);
            let (vals, vecs) = symmetric_eigen(&m.interaction);
            assert!(vals[0] > 0.0, "H must be positive definite for {kind}");
            for c in 0..vals.len() {
                let v = vecs.column(c);
                let resid = (&m.interaction * v - v * vals[c]).norm();
                assert!(resid <= 1e-10 * v.norm());
            }
        }
    }

    #[test]
    fn disconnected_graph_rejected() {
        let t = Topology::new(3, &[(0, 1)], vec![true; 3]).unwrap();
        assert!(matches!(matrices(&t, 1), Err(Error::Disconnected)));
    }

    #[test]
    fn closed_form_values() {
        assert_abs_diff_eq!(lambda_min_closed_form(1), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(lambda_min_closed_form(2), 0.381_966_011_250_105_1, epsilon = 1e-12);
        assert_abs_diff_eq!(lambda_min_closed_form(6), 0.058_116_4, epsilon = 1e-6);
        assert_eq!(lambda_max_bound(6), 7.0);
        assert_eq!(lambda_max_bound(1), 2.0);
    }

    #[test]
    fn k_hop_sets() {
        let p = Topology::build(TopologyKind::Path, 6).unwrap();
        assert_eq!(p.k_hop_neighborhood(0, 1).unwrap(), [0, 1].into());
        assert_eq!(p.k_hop_neighborhood(2, 2).unwrap(), [0, 1, 2, 3, 4].into());
        assert_eq!(p.k_hop_neighborhood(2, 0).unwrap(), [2].into());
        let k = Topology::build(TopologyKind::Complete, 6).unwrap();
        assert_eq!(k.k_hop_neighborhood(0, 1).unwrap(), (0..6).collect());
        assert!(p.k_hop_neighborhood(6, 1).is_err());
    }

    #[test]
    fn permutation_relabels_edges_and_pins() {
        let t = Topology::build(TopologyKind::Path, 3).unwrap();
        let p = t.permuted(&[2, 0, 1]).unwrap();
        let expected: BTreeSet<_> = [(0, 2), (0, 1)].into();
        assert_eq!(edge_set(&p), expected);
        assert_eq!(p.pins(), &[false, true, true]);
        assert!(t.permuted(&[0, 0, 1]).is_err());
    }

    #[test]
    fn config_overrides() {
        let cfg: TopologyConfig =
            serde_json::from_str(r#"{"kind":"path","n_agents":4,"pins":[3]}"#).unwrap();
        let t = cfg.build().unwrap();
        assert_eq!(t.pins(), &[false, false, false, true]);
        let cfg: TopologyConfig =
            serde_json::from_str(r#"{"kind":"acyclic","n_agents":3,"edges":[[0,2],[1,2]]}"#)
                .unwrap();
        let t = cfg.build().unwrap();
        assert_eq!(t.closed_neighbors(2), &[0, 1, 2]);
    }
}
