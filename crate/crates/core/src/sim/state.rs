use super::Kinematics;

/// Offsets into the flat state vector
/// `[Q₀ | (q_i, q̇_i, q̂₀,i, q̂̇₀,i)_{i} | θ̂₁,i … | θ̂₂,i …]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateLayout {
    pub n_agents: usize,
    pub p1: usize,
    pub p2: usize,
}

impl StateLayout {
    const TARGET: usize = 6;
    const AGENT: usize = 12;

    pub fn new(n_agents: usize, p1: usize, p2: usize) -> Self {
        Self { n_agents, p1, p2 }
    }

    pub fn len(&self) -> usize {
        self.theta2_offset() + self.n_agents * self.p2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn agent_offset(&self, i: usize) -> usize {
        Self::TARGET + Self::AGENT * i
    }

    pub fn estimate_offset(&self, i: usize) -> usize {
        self.agent_offset(i) + 6
    }

    pub fn theta1_offset(&self) -> usize {
        Self::TARGET + Self::AGENT * self.n_agents
    }

    pub fn theta2_offset(&self) -> usize {
        self.theta1_offset() + self.n_agents * self.p1
    }

    pub fn theta1_range(&self, i: usize) -> std::ops::Range<usize> {
        let o = self.theta1_offset() + i * self.p1;
        o..o + self.p1
    }

    pub fn theta2_range(&self, i: usize) -> std::ops::Range<usize> {
        let o = self.theta2_offset() + i * self.p2;
        o..o + self.p2
    }
}

/// Snapshot of the closed loop at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub layout: StateLayout,
    pub x: Vec<f64>,
}

impl SimState {
    pub fn zeros(layout: StateLayout) -> Self {
        Self {
            t: 0.0,
            layout,
            x: vec![0.0; layout.len()],
        }
    }

    pub fn target(&self) -> Kinematics {
        Kinematics::from_slice(&self.x[0..6])
    }

    pub fn set_target(&mut self, k: &Kinematics) {
        self.x[0..6].copy_from_slice(&k.to_array());
    }

    pub fn agent(&self, i: usize) -> Kinematics {
        Kinematics::from_slice(&self.x[self.layout.agent_offset(i)..])
    }

    pub fn set_agent(&mut self, i: usize, k: &Kinematics) {
        let o = self.layout.agent_offset(i);
        self.x[o..o + 6].copy_from_slice(&k.to_array());
    }

    /// Agent `i`'s estimate `Q̂₀,i` of the target.
    pub fn estimate(&self, i: usize) -> Kinematics {
        Kinematics::from_slice(&self.x[self.layout.estimate_offset(i)..])
    }

    pub fn set_estimate(&mut self, i: usize, k: &Kinematics) {
        let o = self.layout.estimate_offset(i);
        self.x[o..o + 6].copy_from_slice(&k.to_array());
    }

    pub fn theta1(&self, i: usize) -> &[f64] {
        &self.x[self.layout.theta1_range(i)]
    }

    pub fn theta2(&self, i: usize) -> &[f64] {
        &self.x[self.layout.theta2_range(i)]
    }

    pub fn theta1_mut(&mut self, i: usize) -> &mut [f64] {
        let r = self.layout.theta1_range(i);
        &mut self.x[r]
    }

    pub fn theta2_mut(&mut self, i: usize) -> &mut [f64] {
        let r = self.layout.theta2_range(i);
        &mut self.x[r]
    }

    /// Largest `‖θ̂₁,i‖²` and `‖θ̂₂,i‖²` over agents.
    pub fn max_theta_norms_sq(&self) -> (f64, f64) {
        let sq = |s: &[f64]| s.iter().map(|v| v * v).sum::<f64>();
        let n = self.layout.n_agents;
        let a = (0..n).map(|i| sq(self.theta1(i))).fold(0.0, f64::max);
        let b = (0..n).map(|i| sq(self.theta2(i))).fold(0.0, f64::max);
        (a, b)
    }

    /// Rescales every weight block with `‖θ‖² > radius_sq` radially onto
    /// that sphere. Returns the number of rescaled blocks and the largest
    /// excess `‖θ‖² − radius_sq` found (0 when none).
    pub fn clamp_weights(&mut self, radius_sq: f64) -> (usize, f64) {
        let mut count = 0;
        let mut excess = 0.0f64;
        let n = self.layout.n_agents;
        let ranges: Vec<_> = (0..n)
            .map(|i| self.layout.theta1_range(i))
            .chain((0..n).map(|i| self.layout.theta2_range(i)))
            .collect();
        for r in ranges {
            let block = &mut self.x[r];
            let sq: f64 = block.iter().map(|v| v * v).sum();
            if sq > radius_sq {
                count += 1;
                excess = excess.max(sq - radius_sq);
                let scale = (radius_sq / sq).sqrt();
                block.iter_mut().for_each(|v| *v *= scale);
            }
        }
        (count, excess)
    }
}
