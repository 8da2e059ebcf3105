use std::f64::consts::PI;

use nalgebra::{Matrix3x6, Vector3};
use serde::{Deserialize, Serialize};

use crate::graph::Topology;

/// Position and velocity of one body in `R³`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Kinematics {
    pub pos: Vector3<f64>,
    pub vel: Vector3<f64>,
}

impl Kinematics {
    pub fn new(pos: [f64; 3], vel: [f64; 3]) -> Self {
        Self {
            pos: Vector3::from(pos),
            vel: Vector3::from(vel),
        }
    }

    /// `[pos; vel]`
    pub fn to_array(&self) -> [f64; 6] {
        [
            self.pos.x, self.pos.y, self.pos.z, self.vel.x, self.vel.y, self.vel.z,
        ]
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self {
            pos: Vector3::new(s[0], s[1], s[2]),
            vel: Vector3::new(s[3], s[4], s[5]),
        }
    }
}

/// Target drift `f(Q₀)`.
pub fn target_accel(q: &Kinematics) -> Vector3<f64> {
    let (vx, vy, vz) = (q.vel.x, q.vel.y, q.vel.z);
    let y = q.pos.y;
    Vector3::new(
        vx.cos() - vy.sin() + (2.0 * vz).cos(),
        vx - vy + vz + y / (1.0 + y.abs()).sqrt(),
        vy.sin() - vx * vz,
    )
}

/// `∂f/∂[q₀; q̇₀]`, a `3 × 6` matrix.
pub fn target_accel_jacobian(q: &Kinematics) -> Matrix3x6<f64> {
    let (vx, vy, vz) = (q.vel.x, q.vel.y, q.vel.z);
    let ay = q.pos.y.abs();
    // d/dy [y (1+|y|)^{-1/2}] = (1 + |y|/2) (1+|y|)^{-3/2}
    let dy = (1.0 + 0.5 * ay) / (1.0 + ay).powf(1.5);
    let mut j = Matrix3x6::zeros();
    j[(0, 3)] = -vx.sin();
    j[(0, 4)] = -vy.cos();
    j[(0, 5)] = -2.0 * (2.0 * vz).sin();
    j[(1, 1)] = dy;
    j[(1, 3)] = 1.0;
    j[(1, 4)] = -1.0;
    j[(1, 5)] = 1.0;
    j[(2, 3)] = -vz;
    j[(2, 4)] = vy.cos();
    j[(2, 5)] = -vx;
    j
}

/// Default lower clamp on `20000 (y_i − y_j)²`, capping each pairwise
/// `x`-interaction at 1 m/s². Tracking drives all agents to the target's
/// height, so without a cap of this order the term grows without bound.
pub const DEFAULT_INTERACTION_FLOOR: f64 = 1.0;

/// Interaction drift `h(R_i)` of agent `i`, summed over its neighbours. The
/// first component's denominator is clamped below by `floor`.
pub fn agent_accel(i: usize, graph: &Topology, agents: &[Kinematics], floor: f64) -> Vector3<f64> {
    let me = &agents[i];
    let mut h = Vector3::zeros();
    for &j in graph.neighbors(i) {
        h += pair_interaction(me, &agents[j], floor);
    }
    h
}

/// Contribution of neighbour `other` to the drift of `me`.
pub fn pair_interaction(me: &Kinematics, other: &Kinematics, floor: f64) -> Vector3<f64> {
    let dy = me.pos.y - other.pos.y;
    let dvx = me.vel.x - other.vel.x;
    Vector3::new(
        1.0 / (20000.0 * dy * dy).max(floor),
        (me.vel.z - other.vel.z) * me.vel.x.cos(),
        (me.vel.z * other.vel.z).cos() * dvx / (1.0 + dvx.abs()).sqrt(),
    )
}

/// Agents at rest on a regular `N`-gon of the given radius in the `z = 0`
/// plane. Agent `a` (0-based) sits at angle `2π(a+1)/N + phase`.
pub fn ngon_positions(n: usize, radius: f64, phase: f64) -> Vec<Kinematics> {
    (0..n)
        .map(|a| {
            let ang = 2.0 * PI * (a + 1) as f64 / n as f64 + phase;
            Kinematics::new([radius * ang.cos(), radius * ang.sin(), 0.0], [0.0; 3])
        })
        .collect()
}

/// [`ngon_positions`] without a phase offset.
pub fn ngon_initial_conditions(n: usize, radius: f64) -> Vec<Kinematics> {
    ngon_positions(n, radius, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::TopologyKind;
    use crate::nets::finite_diff_jacobian;

    #[test]
    fn target_at_rest_origin() {
        assert_eq!(target_accel(&Kinematics::default()), Vector3::new(2.0, 0.0, 0.0));
    }

    #[test]
    fn target_at_initial_state() {
        let q = Kinematics::new([-3.0, 2.0, 10.0], [-1.0, 0.0, -2.0]);
        let f = target_accel(&q);
        assert!((f - Vector3::new(-0.1133413, -1.8452995, -2.0)).abs().max() < 5e-8);
    }

    #[test]
    fn first_component_bounded() {
        for k in 0..200 {
            let v = k as f64 * 0.37 - 30.0;
            let f = target_accel(&Kinematics::new([0.0, v, 0.0], [v, -v, 0.5 * v]));
            assert!(f.x.abs() <= 3.0);
        }
    }

    #[test]
    fn jacobian_matches_differences() {
        for s in [
            [-3.0, 2.0, 10.0, -1.0, 0.0, -2.0],
            [0.4, -7.0, 1.0, 2.2, -1.3, 0.8],
            [0.0, 0.3, 0.0, 0.0, 0.0, 0.0],
        ] {
            let j = target_accel_jacobian(&Kinematics::from_slice(&s));
            let fd = finite_diff_jacobian(
                |x| target_accel(&Kinematics::from_slice(x)).iter().copied().collect(),
                &s,
                1e-6,
            )
            .unwrap();
            for r in 0..3 {
                for c in 0..6 {
                    assert!((j[(r, c)] - fd[(r, c)]).abs() < 1e-8, "({r},{c})");
                }
            }
        }
    }

    #[test]
    fn isolated_agent_has_no_drift() {
        let g = Topology::isolated(1);
        let a = [Kinematics::new([1.0, 2.0, 3.0], [4.0, 5.0, 6.0])];
        assert_eq!(agent_accel(0, &g, &a, DEFAULT_INTERACTION_FLOOR), Vector3::zeros());
    }

    #[test]
    fn one_neighbour_unit_offset() {
        let g = Topology::build(TopologyKind::Path, 2).unwrap();
        let a = [
            Kinematics::new([0.0, 1.0, 0.0], [0.3, -0.2, 0.1]),
            Kinematics::new([5.0, 0.0, 2.0], [0.3, -0.2, 0.1]),
        ];
        let h = agent_accel(0, &g, &a, DEFAULT_INTERACTION_FLOOR);
        assert!((h - Vector3::new(5e-5, 0.0, 0.0)).abs().max() < 1e-18);
    }

    #[test]
    fn second_term_is_antisymmetric_in_vertical_speed() {
        let a = Kinematics::new([0.0, 1.0, 0.0], [0.7, 0.0, 1.5]);
        let b = Kinematics::new([0.0, 2.0, 0.0], [0.7, 0.0, -0.5]);
        let ab = pair_interaction(&a, &b, 1e-6);
        let ba = pair_interaction(&b, &a, 1e-6);
        // equal ẋ, so the cos factors agree
        assert!((ab.y + ba.y).abs() < 1e-15);
        assert!(ab.y != 0.0);
    }

    #[test]
    fn default_clamp_only_acts_within_millimetres() {
        let a = Kinematics::new([0.0, 0.0, 0.0], [0.0; 3]);
        let near = Kinematics::new([0.0, 0.008, 0.0], [0.0; 3]);
        let nearer = Kinematics::new([0.0, 0.007, 0.0], [0.0; 3]);
        let h = pair_interaction(&a, &near, DEFAULT_INTERACTION_FLOOR).x;
        assert!((h - 1.0 / (20000.0 * 0.008 * 0.008)).abs() < 1e-12);
        assert_eq!(pair_interaction(&a, &nearer, DEFAULT_INTERACTION_FLOOR).x, 1.0);
    }

    #[test]
    fn clamp_caps_coincident_heights() {
        let a = Kinematics::new([0.0, 1.0, 0.0], [0.0; 3]);
        let h = pair_interaction(&a, &a, 1e-6);
        assert_eq!(h.x, 1e6);
    }

    #[test]
    fn hexagon_vertices() {
        let q = ngon_initial_conditions(6, 10.0);
        let a1 = q[0].pos;
        assert!((a1 - Vector3::new(10.0 * (PI / 3.0).cos(), 10.0 * (PI / 3.0).sin(), 0.0)).norm() < 1e-12);
        assert!(q.iter().all(|k| k.vel == Vector3::zeros()));
        let sq = ngon_initial_conditions(4, 1.0);
        let expect = [[0.0, 1.0], [-1.0, 0.0], [0.0, -1.0], [1.0, 0.0]];
        for (k, e) in sq.iter().zip(expect) {
            assert!((k.pos.x - e[0]).abs() < 1e-15 && (k.pos.y - e[1]).abs() < 1e-15);
        }
    }

    #[test]
    fn adjacent_vertices_equidistant() {
        for n in 3..9 {
            let q = ngon_positions(n, 10.0, 0.3);
            let d0 = (q[0].pos - q[1].pos).norm();
            for a in 0..n {
                let d = (q[a].pos - q[(a + 1) % n].pos).norm();
                assert!((d - d0).abs() < 1e-12);
            }
        }
    }
}
