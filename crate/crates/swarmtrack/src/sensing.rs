//! Agent kinematics, field-of-view geometry, and the range-bearing
//! measurement generator with state-dependent covariance.
//!
//! Agents are holonomic: the control directly sets the planar velocity.
//! Each agent carries a square, axis-aligned field of view (gimbal
//! stabilization keeps it aligned with the world frame regardless of
//! heading) and a sensing-quality scalar `alpha` that scales the
//! measurement covariance.

use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::world::{semantic_filter, MotionModel, Rect, SemanticMap, TargetState};

/// Pose, velocity, and sensing hardware of one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub id: usize,
    pub pos: Vector2<f64>,
    pub heading: f64,
    pub vel: Vector2<f64>,
    /// Side length of the square field of view, meters.
    pub fov_side: f64,
    /// Sensing-quality scalar in the measurement covariance.
    pub alpha: f64,
    /// Speed limit, m/s.
    pub v_max: f64,
    /// Proximal-track radius for the base policy, meters.
    pub d0: f64,
    /// Communication range, meters.
    pub comm_range: f64,
}

/// One position measurement. `source_pos` is ground-truth provenance kept
/// for the harness (occlusion filtering, diagnostics); the filters only ever
/// see `value`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub value: Vector2<f64>,
    pub source_pos: Vector2<f64>,
    pub agent_id: usize,
    pub time: f64,
}

/// Clamp a velocity command to norm `v_max`, preserving direction.
pub fn clamp_control(control: Vector2<f64>, v_max: f64) -> Vector2<f64> {
    let norm = control.norm();
    if norm > v_max {
        control * (v_max / norm)
    } else {
        control
    }
}

/// Holonomic transition: apply the clamped velocity for `dt`, keep the pose
/// inside the world, and align the heading with the motion direction.
pub fn agent_transition(
    agent: &AgentState,
    control: Vector2<f64>,
    dt: f64,
    bounds: &Rect,
) -> AgentState {
    assert!(dt > 0.0, "agent_transition needs dt > 0");
    let vel = clamp_control(control, agent.v_max);
    let pos = bounds.clamp(&(agent.pos + vel * dt));
    let heading = if vel.norm() > 0.0 {
        vel.y.atan2(vel.x)
    } else {
        agent.heading
    };
    AgentState {
        pos,
        heading,
        vel,
        ..*agent
    }
}

/// True iff the point lies in the closed axis-aligned square of side
/// `fov_side` centered on the agent.
pub fn fov_contains(agent: &AgentState, point: &Vector2<f64>) -> bool {
    let half = agent.fov_side / 2.0;
    (point.x - agent.pos.x).abs() <= half && (point.y - agent.pos.y).abs() <= half
}

/// Spatially varying measurement covariance:
/// `alpha * G(rho) * diag(0.1 r, 0.1 pi r) * G(rho)^T`, where `r` is the
/// agent-target range floored at `r0` and `rho` the bearing of the target
/// seen from the agent. The floor keeps the matrix well conditioned near
/// contact.
pub fn measurement_covariance(
    agent: &AgentState,
    target_pos: &Vector2<f64>,
    r0: f64,
) -> Matrix2<f64> {
    assert!(r0 > 0.0, "range floor must be positive");
    let delta = target_pos - agent.pos;
    let r = delta.norm().max(r0);
    let rho = delta.y.atan2(delta.x);
    let (sin, cos) = rho.sin_cos();
    let g = Matrix2::new(cos, -sin, sin, cos);
    let d = Matrix2::new(0.1 * r, 0.0, 0.0, 0.1 * std::f64::consts::PI * r);
    let m = agent.alpha * g * d * g.transpose();
    // enforce exact symmetry against rounding
    Matrix2::new(
        m[(0, 0)],
        (m[(0, 1)] + m[(1, 0)]) / 2.0,
        (m[(0, 1)] + m[(1, 0)]) / 2.0,
        m[(1, 1)],
    )
}

/// Draw from N(0, cov) for a 2x2 SPD covariance.
fn sample_noise2(cov: &Matrix2<f64>, rng: &mut impl Rng) -> Vector2<f64> {
    let z = Vector2::from_fn(|_, _| rng.sample(StandardNormal));
    match cov.cholesky() {
        Some(chol) => chol.l() * z,
        None => Vector2::zeros(),
    }
}

/// Generate one noisy position measurement per target that is inside the
/// agent's field of view and survives the occlusion filter. Detection is
/// deterministic inside the visible region and there are no false alarms.
pub fn generate_observations(
    agent: &AgentState,
    targets: &[TargetState],
    map: &SemanticMap,
    model: &MotionModel,
    r0: f64,
    time: f64,
    rng: &mut impl Rng,
) -> Vec<Measurement> {
    let in_fov: Vec<Measurement> = targets
        .iter()
        .filter(|t| fov_contains(agent, &t.pos))
        .map(|t| {
            let r = measurement_covariance(agent, &t.pos, r0);
            let value = model.h * t.state() + sample_noise2(&r, rng);
            Measurement {
                value,
                source_pos: t.pos,
                agent_id: agent.id,
                time,
            }
        })
        .collect();
    semantic_filter(in_fov, map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::WalkSegment;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn agent(pos: Vector2<f64>) -> AgentState {
        AgentState {
            id: 0,
            pos,
            heading: 0.0,
            vel: Vector2::zeros(),
            fov_side: 20.0,
            alpha: 0.1,
            v_max: 5.0,
            d0: 30.0,
            comm_range: 100.0,
        }
    }

    fn target(id: usize, pos: Vector2<f64>) -> TargetState {
        TargetState {
            id,
            pos,
            vel: Vector2::zeros(),
            segment: WalkSegment {
                heading: 0.0,
                speed: 1.0,
                remaining: 1.0,
            },
        }
    }

    const WORLD: Rect = Rect {
        min: Vector2::new(-1000.0, -1000.0),
        max: Vector2::new(1000.0, 1000.0),
    };

    #[test]
    fn transition_applies_control() {
        let a = agent(Vector2::zeros());
        let out = agent_transition(&a, Vector2::new(5.0, 0.0), 1.0, &WORLD);
        assert_eq!(out.pos, Vector2::new(5.0, 0.0));
        assert_eq!(out.heading, 0.0);
        assert_eq!(out.vel, Vector2::new(5.0, 0.0));
    }

    // Norm clamp 10 -> 5 preserves direction: (6, 8) becomes (3, 4).
    #[test]
    fn transition_clamps_control_norm() {
        let a = agent(Vector2::zeros());
        let out = agent_transition(&a, Vector2::new(6.0, 8.0), 1.0, &WORLD);
        assert_relative_eq!(out.vel, Vector2::new(3.0, 4.0), epsilon = 1e-12);
        assert_relative_eq!(out.vel.norm(), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn idle_control_is_a_fixed_point() {
        let mut a = agent(Vector2::new(3.0, 4.0));
        a.heading = 1.25;
        let out = agent_transition(&a, Vector2::zeros(), 1.0, &WORLD);
        assert_eq!(out.pos, a.pos);
        assert_eq!(out.heading, 1.25);
    }

    #[test]
    fn transition_never_exceeds_v_max() {
        let a = agent(Vector2::zeros());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            let c = Vector2::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0));
            let out = agent_transition(&a, c, 0.7, &WORLD);
            assert!(out.vel.norm() <= a.v_max + 1e-12);
        }
    }

    #[test]
    fn transition_clamps_to_world_bounds() {
        let small = Rect::new(0.0, 0.0, 10.0, 10.0);
        let a = agent(Vector2::new(9.0, 9.0));
        let out = agent_transition(&a, Vector2::new(5.0, 0.0), 1.0, &small);
        assert_eq!(out.pos, Vector2::new(10.0, 9.0));
    }

    #[test]
    fn fov_square_is_closed_and_axis_aligned() {
        let a = agent(Vector2::zeros());
        assert!(fov_contains(&a, &Vector2::new(9.9, -9.9)));
        assert!(!fov_contains(&a, &Vector2::new(10.1, 0.0)));
        assert!(fov_contains(&a, &Vector2::new(10.0, 10.0)));
    }

    #[test]
    fn covariance_due_east_is_diagonal() {
        let a = agent(Vector2::zeros());
        let r = measurement_covariance(&a, &Vector2::new(10.0, 0.0), 1.0);
        assert_relative_eq!(r[(0, 0)], 0.1, epsilon = 1e-14);
        assert_relative_eq!(r[(1, 1)], 0.1 * std::f64::consts::PI, epsilon = 1e-14);
        assert_relative_eq!(r[(0, 1)], 0.0, epsilon = 1e-14);
    }

    // Hand rotation of the diagonal: at rho = pi/2 the eigenvalues swap axes.
    #[test]
    fn covariance_due_north_swaps_axes() {
        let a = agent(Vector2::zeros());
        let r = measurement_covariance(&a, &Vector2::new(0.0, 10.0), 1.0);
        assert_relative_eq!(r[(0, 0)], 0.1 * std::f64::consts::PI, epsilon = 1e-12);
        assert_relative_eq!(r[(1, 1)], 0.1, epsilon = 1e-12);
        assert_relative_eq!(r[(0, 1)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn range_floor_applies_below_r0() {
        let a = agent(Vector2::zeros());
        let near = measurement_covariance(&a, &Vector2::new(0.2, 0.0), 1.0);
        let at_floor = measurement_covariance(&a, &Vector2::new(1.0, 0.0), 1.0);
        assert_eq!(near, at_floor);
    }

    #[test]
    fn covariance_eigenstructure() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..200 {
            let mut a = agent(Vector2::new(
                rng.random_range(-50.0..50.0),
                rng.random_range(-50.0..50.0),
            ));
            a.alpha = rng.random_range(0.05..0.5);
            let tp = Vector2::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0));
            let r0 = 1.0;
            let r = measurement_covariance(&a, &tp, r0);
            assert_eq!(r[(0, 1)], r[(1, 0)]);

            let delta: Vector2<f64> = tp - a.pos;
            let range = delta.norm().max(r0);
            let eig = r.symmetric_eigen();
            let mut vals = [eig.eigenvalues[0], eig.eigenvalues[1]];
            vals.sort_by(|x, y| x.partial_cmp(y).unwrap());
            assert_relative_eq!(vals[0], a.alpha * 0.1 * range, max_relative = 1e-10);
            assert_relative_eq!(
                vals[1],
                a.alpha * 0.1 * std::f64::consts::PI * range,
                max_relative = 1e-10
            );
            assert!(vals[0] > 0.0);

            // small-eigenvalue eigenvector is parallel to the agent-target line
            let small_idx = if eig.eigenvalues[0] <= eig.eigenvalues[1] { 0 } else { 1 };
            let v = eig.eigenvectors.column(small_idx);
            if range > 1e-9 {
                let unit = delta / delta.norm();
                assert_relative_eq!(v.dot(&unit).abs(), 1.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn no_targets_in_fov_no_measurements() {
        let a = agent(Vector2::zeros());
        let map = SemanticMap::new(WORLD, vec![]);
        let model = MotionModel::ncv(0.2, 0.5);
        let targets = vec![target(0, Vector2::new(50.0, 50.0))];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let obs = generate_observations(&a, &targets, &map, &model, 1.0, 0.0, &mut rng);
        assert!(obs.is_empty());
    }

    #[test]
    fn degenerate_noise_reproduces_target_position() {
        // alpha -> 0 sends the covariance to zero, so values collapse onto
        // the true position.
        let mut a = agent(Vector2::zeros());
        a.alpha = 0.0;
        let map = SemanticMap::new(WORLD, vec![]);
        let model = MotionModel::ncv(0.2, 0.5);
        let targets = vec![target(0, Vector2::new(3.0, 4.0))];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let obs = generate_observations(&a, &targets, &map, &model, 1.0, 0.0, &mut rng);
        assert_eq!(obs.len(), 1);
        assert_relative_eq!(obs[0].value, Vector2::new(3.0, 4.0), epsilon = 1e-12);
    }

    #[test]
    fn occluded_target_yields_no_measurement() {
        let a = agent(Vector2::zeros());
        let map = SemanticMap::new(WORLD, vec![Rect::new(2.0, 2.0, 6.0, 6.0)]);
        let model = MotionModel::ncv(0.2, 0.5);
        let targets = vec![
            target(0, Vector2::new(4.0, 4.0)),
            target(1, Vector2::new(-4.0, -4.0)),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let obs = generate_observations(&a, &targets, &map, &model, 1.0, 0.0, &mut rng);
        assert_eq!(obs.len(), 1);
        assert_eq!(obs[0].source_pos, Vector2::new(-4.0, -4.0));
    }

    #[test]
    fn at_most_one_measurement_per_target() {
        let a = agent(Vector2::zeros());
        let map = SemanticMap::new(WORLD, vec![]);
        let model = MotionModel::ncv(0.2, 0.5);
        let targets: Vec<_> = (0..5)
            .map(|i| target(i, Vector2::new(i as f64, -(i as f64))))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let obs = generate_observations(&a, &targets, &map, &model, 1.0, 0.0, &mut rng);
        assert!(obs.len() <= targets.len());
        assert_eq!(obs.len(), 5);
    }
}
