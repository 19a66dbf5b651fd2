//! Per-agent local estimation: Kalman prediction, JPDA gating, association
//! and update, M-of-N track maintenance, and the information form used for
//! fusion.
//!
//! The association step enumerates feasible joint events (each measurement
//! assigned to at most one track, each track to at most one measurement) and
//! marginalizes them into per-track weights. Clutter-free operation is the
//! limit of vanishing clutter density: only events explaining the largest
//! number of gated measurements carry weight. Each track is then updated by
//! moment-matching the mixture of its conditional updates, which handles the
//! per-measurement covariance of the range-bearing sensor.

use std::collections::VecDeque;

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};

use crate::error::{Error, Result};
use crate::sensing::Measurement;
use crate::world::MotionModel;

/// Lifecycle of a track under M-of-N maintenance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackStatus {
    Tentative,
    Confirmed,
}

/// Bounded detection/miss history driving M-of-N confirmation and deletion.
#[derive(Debug, Clone, PartialEq)]
pub struct HitHistory {
    buf: VecDeque<bool>,
    cap: usize,
}

impl HitHistory {
    pub fn new(cap: usize) -> Self {
        HitHistory {
            buf: VecDeque::with_capacity(cap),
            cap,
        }
    }

    pub fn push(&mut self, hit: bool) {
        if self.buf.len() == self.cap {
            self.buf.pop_front();
        }
        self.buf.push_back(hit);
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    /// Hits among the most recent `n` entries.
    pub fn hits_in_last(&self, n: usize) -> usize {
        self.buf.iter().rev().take(n).filter(|&&h| h).count()
    }

    /// Misses among the most recent `n` entries.
    pub fn misses_in_last(&self, n: usize) -> usize {
        self.buf.iter().rev().take(n).filter(|&&h| !h).count()
    }
}

/// One maintained estimate: Gaussian moments plus maintenance state.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: u64,
    pub mean: Vector4<f64>,
    pub cov: Matrix4<f64>,
    pub status: TrackStatus,
    pub history: HitHistory,
    pub last_update: f64,
}

/// Information-form parameterization of a track Gaussian: the information
/// matrix (inverse covariance) and information vector.
#[derive(Debug, Clone, PartialEq)]
pub struct InfoForm {
    pub matrix: Matrix4<f64>,
    pub vector: Vector4<f64>,
}

impl InfoForm {
    /// Near-zero information placeholder for agents that do not hold a track.
    pub fn vacuous(eps: f64) -> Self {
        InfoForm {
            matrix: Matrix4::identity() * eps,
            vector: Vector4::zeros(),
        }
    }

    /// Recover the moment form (mean, covariance).
    pub fn to_moments(&self) -> Result<(Vector4<f64>, Matrix4<f64>)> {
        let chol = self.matrix.cholesky().ok_or(Error::Singular {
            context: "information matrix inversion",
        })?;
        let cov = chol.inverse();
        Ok((cov * self.vector, symmetrized(&cov)))
    }
}

/// Association parameters for the JPDA step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JpdaParams {
    /// Mahalanobis-squared gate threshold.
    pub gate_gamma: f64,
    /// Detection probability inside the field of view.
    pub p_d: f64,
    /// Probability mass of the gate, pairing with `gate_gamma`.
    pub gate_prob: f64,
    /// Spatial clutter density; zero selects the clutter-free limit.
    pub clutter_density: f64,
    /// Feasible-event budget before falling back to nearest-neighbor weights.
    pub event_cap: usize,
}

impl Default for JpdaParams {
    fn default() -> Self {
        JpdaParams {
            gate_gamma: 9.21,
            p_d: 0.95,
            gate_prob: 0.99,
            clutter_density: 0.0,
            event_cap: 10_000,
        }
    }
}

/// M-of-N confirmation and deletion thresholds plus the birth covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaintenanceParams {
    pub confirm_m: usize,
    pub confirm_n: usize,
    pub delete_m: usize,
    pub delete_n: usize,
    pub init_cov: Matrix4<f64>,
}

impl Default for MaintenanceParams {
    fn default() -> Self {
        MaintenanceParams {
            confirm_m: 2,
            confirm_n: 3,
            delete_m: 5,
            delete_n: 6,
            init_cov: Matrix4::from_diagonal(&Vector4::new(4.0, 4.0, 9.0, 9.0)),
        }
    }
}

impl MaintenanceParams {
    pub fn history_window(&self) -> usize {
        self.confirm_n.max(self.delete_n)
    }
}

/// Counters surfaced to the harness for logging.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrackerDiagnostics {
    /// Gate pairs dropped because the innovation covariance was singular.
    pub singular_gates: u64,
    /// Scans where event enumeration hit the cap and nearest-neighbor
    /// weights were used instead.
    pub event_cap_fallbacks: u64,
    pub deletions: u64,
    pub spawned: u64,
}

impl TrackerDiagnostics {
    pub fn merge(&mut self, other: &TrackerDiagnostics) {
        self.singular_gates += other.singular_gates;
        self.event_cap_fallbacks += other.event_cap_fallbacks;
        self.deletions += other.deletions;
        self.spawned += other.spawned;
    }
}

fn symmetrized(m: &Matrix4<f64>) -> Matrix4<f64> {
    (m + m.transpose()) / 2.0
}

/// Kalman time update: mean <- F mean, cov <- F cov F' + Q.
pub fn kf_predict(track: &Track, model: &MotionModel) -> Track {
    Track {
        mean: model.f * track.mean,
        cov: symmetrized(&(model.f * track.cov * model.f.transpose() + model.q)),
        ..track.clone()
    }
}

/// Gate matrix: entry (t, j) is true iff measurement j falls inside track
/// t's Mahalanobis gate. Pairs with a singular innovation covariance fail
/// the gate and are counted in the diagnostics.
pub fn jpda_gate(
    tracks: &[Track],
    measurements: &[Measurement],
    model: &MotionModel,
    meas_cov: &dyn Fn(&Measurement) -> Matrix2<f64>,
    params: &JpdaParams,
    diag: &mut TrackerDiagnostics,
) -> Vec<Vec<bool>> {
    tracks
        .iter()
        .map(|track| {
            let s_base = model.h * track.cov * model.h.transpose();
            measurements
                .iter()
                .map(|m| {
                    let s = s_base + meas_cov(m);
                    match s.cholesky() {
                        Some(chol) => {
                            let innov = m.value - model.h * track.mean;
                            let d2 = innov.dot(&chol.solve(&innov));
                            d2 <= params.gate_gamma
                        }
                        None => {
                            diag.singular_gates += 1;
                            false
                        }
                    }
                })
                .collect()
        })
        .collect()
}

/// Measurements that fall in no track's gate; these seed new tentative
/// tracks.
pub fn unassociated_measurements(
    gate: &[Vec<bool>],
    measurements: &[Measurement],
) -> Vec<Measurement> {
    measurements
        .iter()
        .enumerate()
        .filter(|(j, _)| !gate.iter().any(|row| row[*j]))
        .map(|(_, m)| *m)
        .collect()
}

struct ConditionalUpdate {
    mean: Vector4<f64>,
    cov: Matrix4<f64>,
    likelihood: f64,
}

/// Conditional Kalman update of one track with one measurement, in Joseph
/// form, along with the measurement likelihood under the predicted density.
fn conditional_update(
    track: &Track,
    z: &Vector2<f64>,
    r: &Matrix2<f64>,
    model: &MotionModel,
) -> Option<ConditionalUpdate> {
    let s = model.h * track.cov * model.h.transpose() + r;
    let chol = s.cholesky()?;
    let innov = z - model.h * track.mean;
    let d2 = innov.dot(&chol.solve(&innov));
    let det = chol.determinant();
    let likelihood = (-0.5 * d2).exp() / (std::f64::consts::TAU * det.sqrt());
    let k = track.cov * model.h.transpose() * chol.inverse();
    let i_kh = Matrix4::identity() - k * model.h;
    let cov = i_kh * track.cov * i_kh.transpose() + k * r * k.transpose();
    Some(ConditionalUpdate {
        mean: track.mean + k * innov,
        cov: symmetrized(&cov),
        likelihood,
    })
}

/// Marginal association weights per track. Row t holds
/// `[beta_miss, beta_1, ..., beta_m]` over all measurements (zero outside
/// the gate); each row sums to one.
///
/// Joint events are enumerated up to `event_cap`; beyond the cap the
/// weights degrade to per-track nearest-neighbor assignment and the scan is
/// flagged in the diagnostics.
pub fn jpda_association_weights(
    tracks: &[Track],
    measurements: &[Measurement],
    gate: &[Vec<bool>],
    model: &MotionModel,
    meas_cov: &dyn Fn(&Measurement) -> Matrix2<f64>,
    params: &JpdaParams,
    diag: &mut TrackerDiagnostics,
) -> Vec<Vec<f64>> {
    let n_tracks = tracks.len();
    let n_meas = measurements.len();
    if n_tracks == 0 {
        return Vec::new();
    }

    // Detection likelihoods for gated pairs.
    let mut likelihood = vec![vec![0.0f64; n_meas]; n_tracks];
    for (t, track) in tracks.iter().enumerate() {
        let s_base = model.h * track.cov * model.h.transpose();
        for (j, m) in measurements.iter().enumerate() {
            if !gate[t][j] {
                continue;
            }
            let s = s_base + meas_cov(m);
            if let Some(chol) = s.cholesky() {
                let innov = m.value - model.h * track.mean;
                let d2 = innov.dot(&chol.solve(&innov));
                likelihood[t][j] = (-0.5 * d2).exp()
                    / (std::f64::consts::TAU * chol.determinant().sqrt());
            }
        }
    }

    // Only measurements inside at least one gate compete for assignment;
    // the rest contribute a constant clutter factor that cancels.
    let considered: Vec<usize> = (0..n_meas)
        .filter(|&j| gate.iter().any(|row| row[j]))
        .collect();

    let miss_factor = (1.0 - params.p_d * params.gate_prob).max(0.0);

    // Enumerate feasible joint events depth-first over tracks.
    struct Event {
        assignment: Vec<Option<usize>>,
        weight: f64,
        unassigned: usize,
    }
    let mut events: Vec<Event> = Vec::new();
    let mut assignment = vec![None; n_tracks];
    let mut used = vec![false; n_meas];
    let mut overflow = false;

    fn recurse(
        t: usize,
        n_tracks: usize,
        considered: &[usize],
        gate: &[Vec<bool>],
        likelihood: &[Vec<f64>],
        p_d: f64,
        miss_factor: f64,
        assignment: &mut Vec<Option<usize>>,
        used: &mut Vec<bool>,
        weight: f64,
        events: &mut Vec<Event>,
        cap: usize,
        overflow: &mut bool,
    ) {
        if *overflow {
            return;
        }
        if t == n_tracks {
            if events.len() >= cap {
                *overflow = true;
                return;
            }
            let assigned = assignment.iter().filter(|a| a.is_some()).count();
            events.push(Event {
                assignment: assignment.clone(),
                weight,
                unassigned: considered.len() - assigned,
            });
            return;
        }
        // miss branch
        assignment[t] = None;
        recurse(
            t + 1,
            n_tracks,
            considered,
            gate,
            likelihood,
            p_d,
            miss_factor,
            assignment,
            used,
            weight * miss_factor,
            events,
            cap,
            overflow,
        );
        // assignment branches
        for &j in considered {
            if gate[t][j] && !used[j] {
                used[j] = true;
                assignment[t] = Some(j);
                recurse(
                    t + 1,
                    n_tracks,
                    considered,
                    gate,
                    likelihood,
                    p_d,
                    miss_factor,
                    assignment,
                    used,
                    weight * p_d * likelihood[t][j],
                    events,
                    cap,
                    overflow,
                );
                used[j] = false;
            }
        }
        assignment[t] = None;
    }

    recurse(
        0,
        n_tracks,
        &considered,
        gate,
        &likelihood,
        params.p_d,
        miss_factor,
        &mut assignment,
        &mut used,
        1.0,
        &mut events,
        params.event_cap,
        &mut overflow,
    );

    let mut betas = vec![vec![0.0f64; n_meas + 1]; n_tracks];

    if overflow {
        diag.event_cap_fallbacks += 1;
        // Nearest-neighbor fallback: each track takes its most likely gated
        // measurement outright.
        for t in 0..n_tracks {
            let best = (0..n_meas)
                .filter(|&j| gate[t][j] && likelihood[t][j] > 0.0)
                .max_by(|&a, &b| likelihood[t][a].partial_cmp(&likelihood[t][b]).unwrap());
            match best {
                Some(j) => betas[t][j + 1] = 1.0,
                None => betas[t][0] = 1.0,
            }
        }
        return betas;
    }

    // Clutter weighting. With zero density, take the vanishing-clutter
    // limit: only events with the fewest unexplained measurements survive.
    let mut total = 0.0;
    if params.clutter_density > 0.0 {
        for e in &events {
            let w = e.weight * params.clutter_density.powi(e.unassigned as i32);
            total += w;
            accumulate(&mut betas, &e.assignment, w);
        }
    } else {
        let min_u = events
            .iter()
            .filter(|e| e.weight > 0.0)
            .map(|e| e.unassigned)
            .min()
            .unwrap_or(0);
        for e in events.iter().filter(|e| e.unassigned == min_u) {
            total += e.weight;
            accumulate(&mut betas, &e.assignment, e.weight);
        }
    }

    if total > 0.0 {
        for row in &mut betas {
            for b in row.iter_mut() {
                *b /= total;
            }
        }
    } else {
        // No event carries weight (fully degenerate geometry): treat every
        // track as missed.
        for row in &mut betas {
            row[0] = 1.0;
        }
    }
    betas
}

fn accumulate(betas: &mut [Vec<f64>], assignment: &[Option<usize>], w: f64) {
    for (t, a) in assignment.iter().enumerate() {
        match a {
            Some(j) => betas[t][j + 1] += w,
            None => betas[t][0] += w,
        }
    }
}

/// JPDA measurement update. Each track becomes the moment-matched mixture
/// of its conditional updates weighted by the marginal association
/// probabilities; its history records a hit iff the total association
/// weight exceeds one half.
pub fn jpda_update(
    tracks: &[Track],
    measurements: &[Measurement],
    gate: &[Vec<bool>],
    model: &MotionModel,
    meas_cov: &dyn Fn(&Measurement) -> Matrix2<f64>,
    params: &JpdaParams,
    diag: &mut TrackerDiagnostics,
) -> Vec<Track> {
    let betas = jpda_association_weights(tracks, measurements, gate, model, meas_cov, params, diag);
    tracks
        .iter()
        .enumerate()
        .map(|(t, track)| {
            let beta = &betas[t];
            let beta_miss = beta[0];
            let hit = 1.0 - beta_miss > 0.5;

            // Conditional updates for gated measurements with weight.
            let mut components: Vec<(f64, Vector4<f64>, Matrix4<f64>)> =
                vec![(beta_miss, track.mean, track.cov)];
            for (j, m) in measurements.iter().enumerate() {
                let w = beta[j + 1];
                if w == 0.0 {
                    continue;
                }
                let r = meas_cov(m);
                if let Some(cu) = conditional_update(track, &m.value, &r, model) {
                    components.push((w, cu.mean, cu.cov));
                } else {
                    components[0].0 += w;
                }
            }

            let mean: Vector4<f64> = components
                .iter()
                .map(|(w, x, _)| *w * *x)
                .sum();
            let mut cov = Matrix4::zeros();
            for (w, x, p) in &components {
                let dx = x - mean;
                cov += *w * (p + dx * dx.transpose());
            }

            let mut history = track.history.clone();
            history.push(hit);
            Track {
                id: track.id,
                mean,
                cov: symmetrized(&cov),
                status: track.status,
                history,
                last_update: if hit && !measurements.is_empty() {
                    measurements[0].time
                } else {
                    track.last_update
                },
            }
        })
        .collect()
}

/// M-of-N maintenance: promote tentative tracks with enough recent hits,
/// delete tracks with enough recent misses, and spawn a tentative track for
/// every unassociated measurement (position from the measurement, zero
/// velocity, birth covariance).
pub fn maintain_tracks(
    tracks: Vec<Track>,
    unassociated: &[Measurement],
    params: &MaintenanceParams,
    next_id: &mut u64,
    diag: &mut TrackerDiagnostics,
) -> Vec<Track> {
    let mut out: Vec<Track> = Vec::with_capacity(tracks.len() + unassociated.len());
    for mut track in tracks {
        if track.history.misses_in_last(params.delete_n) >= params.delete_m {
            diag.deletions += 1;
            continue;
        }
        if track.status == TrackStatus::Tentative
            && track.history.hits_in_last(params.confirm_n) >= params.confirm_m
        {
            track.status = TrackStatus::Confirmed;
        }
        out.push(track);
    }
    for m in unassociated {
        let mut history = HitHistory::new(params.history_window());
        history.push(true);
        out.push(Track {
            id: *next_id,
            mean: Vector4::new(m.value.x, m.value.y, 0.0, 0.0),
            cov: params.init_cov,
            status: TrackStatus::Tentative,
            history,
            last_update: m.time,
        });
        *next_id += 1;
        diag.spawned += 1;
    }
    out
}

/// Moment form to information form: `matrix = cov^-1`, `vector = matrix * mean`.
pub fn to_info_form(track: &Track) -> Result<InfoForm> {
    let chol = track.cov.cholesky().ok_or(Error::Singular {
        context: "covariance inversion",
    })?;
    let omega = symmetrized(&chol.inverse());
    Ok(InfoForm {
        matrix: omega,
        vector: omega * track.mean,
    })
}

/// Information form back to moments, reusing maintenance state from a
/// template track.
pub fn from_info_form(info: &InfoForm, template: &Track) -> Result<Track> {
    let (mean, cov) = info.to_moments()?;
    Ok(Track {
        mean,
        cov,
        ..template.clone()
    })
}
