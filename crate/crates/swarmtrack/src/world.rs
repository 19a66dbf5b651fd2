//! Ground-truth target motion, the shared linear motion model, and the
//! semantic occlusion map.
//!
//! Targets follow a Levy walk: straight segments with uniform heading and
//! speed whose lengths are drawn from a truncated Pareto law, reflecting
//! specularly at the world boundary. The filters never see this process;
//! they model targets with the nearly-constant-velocity (NCV) form below.

use nalgebra::{Matrix2x4, Matrix4, Vector2, Vector4};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::sensing::Measurement;

/// Axis-aligned rectangle with closed boundaries, meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub min: Vector2<f64>,
    pub max: Vector2<f64>,
}

impl Rect {
    pub fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Self {
        Rect {
            min: Vector2::new(xmin, ymin),
            max: Vector2::new(xmax, ymax),
        }
    }

    /// Closed-boundary containment test.
    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.min.x <= other.max.x
            && other.min.x <= self.max.x
            && self.min.y <= other.max.y
            && other.min.y <= self.max.y
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn diagonal(&self) -> f64 {
        (self.width().powi(2) + self.height().powi(2)).sqrt()
    }

    /// Clamp a point into the rectangle.
    pub fn clamp(&self, p: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new(
            p.x.clamp(self.min.x, self.max.x),
            p.y.clamp(self.min.y, self.max.y),
        )
    }
}

/// World bounds plus rectangular occlusion blocks (vegetation cover and the
/// like) inside which targets produce no detections.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticMap {
    pub bounds: Rect,
    pub occlusions: Vec<Rect>,
}

impl SemanticMap {
    pub fn new(bounds: Rect, occlusions: Vec<Rect>) -> Self {
        SemanticMap { bounds, occlusions }
    }

    /// A point is occluded iff it lies inside at least one occlusion
    /// rectangle (closed boundaries).
    pub fn is_occluded(&self, p: &Vector2<f64>) -> bool {
        self.occlusions.iter().any(|r| r.contains(p))
    }
}

/// Discrete-time NCV motion model over the state (x, y, vx, vy).
///
/// `f` advances position by velocity over `dt`, `q` is the process-noise
/// covariance, and `h` selects the position block for measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionModel {
    pub dt: f64,
    pub f: Matrix4<f64>,
    pub q: Matrix4<f64>,
    pub h: Matrix2x4<f64>,
}

impl MotionModel {
    /// NCV model with process noise `q_intensity * diag(dt^3/3, dt^3/3, dt, dt)`,
    /// the diagonal of the continuous-white-noise-acceleration discretization.
    pub fn ncv(dt: f64, q_intensity: f64) -> Self {
        let qp = q_intensity * dt.powi(3) / 3.0;
        let qv = q_intensity * dt;
        Self::with_noise(dt, Matrix4::from_diagonal(&Vector4::new(qp, qp, qv, qv)))
    }

    /// NCV transition with an explicit process-noise covariance.
    pub fn with_noise(dt: f64, q: Matrix4<f64>) -> Self {
        #[rustfmt::skip]
        let f = Matrix4::new(
            1.0, 0.0, dt, 0.0,
            0.0, 1.0, 0.0, dt,
            0.0, 0.0, 1.0, 0.0,
            0.0, 0.0, 0.0, 1.0,
        );
        #[rustfmt::skip]
        let h = Matrix2x4::new(
            1.0, 0.0, 0.0, 0.0,
            0.0, 1.0, 0.0, 0.0,
        );
        MotionModel { dt, f, q, h }
    }
}

/// Draw from N(0, cov) for a symmetric positive semidefinite covariance.
///
/// Falls back to an eigenvalue square root when the Cholesky factorization
/// fails (singular but still PSD matrices, e.g. a zeroed noise block).
pub fn sample_zero_mean(cov: &Matrix4<f64>, rng: &mut impl Rng) -> Vector4<f64> {
    if cov.iter().all(|&v| v == 0.0) {
        return Vector4::zeros();
    }
    let z = Vector4::from_fn(|_, _| rng.sample(StandardNormal));
    if let Some(chol) = cov.cholesky() {
        chol.l() * z
    } else {
        let eig = cov.symmetric_eigen();
        let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
        &eig.eigenvectors * Matrix4::from_diagonal(&sqrt_vals) * z
    }
}

/// One step of the linear-Gaussian dynamics: `F * state + w`, `w ~ N(0, Q)`.
pub fn propagate_model(
    state: &Vector4<f64>,
    model: &MotionModel,
    rng: &mut impl Rng,
) -> Vector4<f64> {
    model.f * state + sample_zero_mean(&model.q, rng)
}

/// Straight-line piece of a Levy walk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkSegment {
    pub heading: f64,
    pub speed: f64,
    pub remaining: f64,
}

/// True state of one target: its kinematics plus the walk segment currently
/// being executed.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetState {
    pub id: usize,
    pub pos: Vector2<f64>,
    pub vel: Vector2<f64>,
    pub segment: WalkSegment,
}

impl TargetState {
    /// Target starting at `pos` on a freshly drawn walk segment.
    pub fn spawn(id: usize, pos: Vector2<f64>, levy: &LevyParams, rng: &mut impl Rng) -> Self {
        let segment = draw_segment(levy, rng);
        let vel = Vector2::new(segment.heading.cos(), segment.heading.sin()) * segment.speed;
        TargetState {
            id,
            pos,
            vel,
            segment,
        }
    }

    /// Full 4-state (x, y, vx, vy).
    pub fn state(&self) -> Vector4<f64> {
        Vector4::new(self.pos.x, self.pos.y, self.vel.x, self.vel.y)
    }
}

/// Parameters of the Levy walk step-length and speed laws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevyParams {
    /// Pareto shape of the step-length law.
    pub pareto_shape: f64,
    /// Pareto scale; also the smallest possible segment length, meters.
    pub min_step: f64,
    /// Truncation of the step-length law, meters.
    pub max_step: f64,
    pub speed_min: f64,
    pub speed_max: f64,
}

impl Default for LevyParams {
    fn default() -> Self {
        LevyParams {
            pareto_shape: 1.5,
            min_step: 2.0,
            max_step: 40.0,
            speed_min: 1.0,
            speed_max: 3.0,
        }
    }
}

/// Draw a fresh walk segment: heading ~ U[0, 2pi), speed ~ U[min, max],
/// length ~ Pareto(min_step, shape) conditioned on length <= max_step
/// (inverse-CDF sampling, so exactly one uniform draw per component).
pub fn draw_segment(levy: &LevyParams, rng: &mut impl Rng) -> WalkSegment {
    let heading = rng.random_range(0.0..std::f64::consts::TAU);
    let speed = rng.random_range(levy.speed_min..=levy.speed_max);
    // Truncated Pareto via inversion: F(x) = 1 - (x_min/x)^a on [x_min, inf);
    // condition on x <= L by scaling the uniform draw into [0, F(L)].
    let f_max = 1.0 - (levy.min_step / levy.max_step).powf(levy.pareto_shape);
    let u = rng.random_range(0.0..1.0) * f_max;
    let length = levy.min_step * (1.0 - u).powf(-1.0 / levy.pareto_shape);
    WalkSegment {
        heading,
        speed,
        remaining: length.min(levy.max_step),
    }
}

/// Advance a target by `dt` along its walk, drawing new segments as old ones
/// run out and reflecting the heading specularly at the world boundary.
pub fn step_levy_target(
    target: &TargetState,
    dt: f64,
    levy: &LevyParams,
    bounds: &Rect,
    rng: &mut impl Rng,
) -> TargetState {
    assert!(dt > 0.0, "step_levy_target needs dt > 0");
    let mut pos = target.pos;
    let mut segment = target.segment;
    let mut time_left = dt;

    while time_left > 0.0 {
        if segment.remaining <= 0.0 {
            segment = draw_segment(levy, rng);
        }
        let seg_time = segment.remaining / segment.speed;
        let step_time = seg_time.min(time_left);
        let dist = segment.speed * step_time;
        pos += Vector2::new(segment.heading.cos(), segment.heading.sin()) * dist;
        segment.remaining -= dist;
        time_left -= step_time;

        // Specular reflection keeps the target inside the world. Mirror the
        // overshoot and flip the heading component; repeat in case a long
        // step crosses more than one wall.
        let mut reflected = true;
        while reflected {
            reflected = false;
            if pos.x < bounds.min.x {
                pos.x = 2.0 * bounds.min.x - pos.x;
                segment.heading = reflect_x(segment.heading);
                reflected = true;
            } else if pos.x > bounds.max.x {
                pos.x = 2.0 * bounds.max.x - pos.x;
                segment.heading = reflect_x(segment.heading);
                reflected = true;
            }
            if pos.y < bounds.min.y {
                pos.y = 2.0 * bounds.min.y - pos.y;
                segment.heading = reflect_y(segment.heading);
                reflected = true;
            } else if pos.y > bounds.max.y {
                pos.y = 2.0 * bounds.max.y - pos.y;
                segment.heading = reflect_y(segment.heading);
                reflected = true;
            }
        }
    }

    let vel = Vector2::new(segment.heading.cos(), segment.heading.sin()) * segment.speed;
    TargetState {
        id: target.id,
        pos,
        vel,
        segment,
    }
}

fn reflect_x(heading: f64) -> f64 {
    std::f64::consts::PI - heading
}

fn reflect_y(heading: f64) -> f64 {
    -heading
}

/// Keep exactly the measurements whose generating target position lies
/// outside every occlusion rectangle. The test applies to the true source
/// position, not the noisy measurement value.
pub fn semantic_filter(measurements: Vec<Measurement>, map: &SemanticMap) -> Vec<Measurement> {
    measurements
        .into_iter()
        .filter(|m| !map.is_occluded(&m.source_pos))
        .collect()
}
