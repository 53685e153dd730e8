//! Pairwise weighted rotation averaging along the geodesic.
//!
//! The stateless average `R_i exp(d ψ̄)` jumps whenever the relative rotation
//! `R_iᵀR_j` crosses angle π (or passes through the identity), because the log
//! map flips the traverse direction there. [`FusionState`] remembers recent
//! directions and counts half turns so a time-sampled sequence of averages
//! stays continuous.
//!
//! Sampling contract: between two calls the relative rotation should move by
//! less than `min(d_th, π - d_th)`, otherwise a crossing can be attributed to
//! the wrong end of the geodesic.

use std::collections::VecDeque;
use std::f64::consts::PI;

use nalgebra::Vector3;

use crate::so3::{exp_map, log_map, Rotation};

pub const DEFAULT_DISTANCE_THRESHOLD: f64 = 0.15;
pub const DEFAULT_HISTORY: usize = 5;

/// `cos 50°`.
pub fn default_alignment_threshold() -> f64 {
    (50.0 * PI / 180.0).cos()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightedPair {
    pub ri: Rotation,
    pub rj: Rotation,
    pub wi: f64,
    pub wj: f64,
}

impl WeightedPair {
    pub fn new(ri: Rotation, wi: f64, rj: Rotation, wj: f64) -> Self {
        WeightedPair { ri, rj, wi, wj }
    }
}

// Unit traverse direction and distance from R_i to R_j; zero direction when equal.
fn traverse(pair: &WeightedPair) -> (Vector3<f64>, f64) {
    let psi = log_map(&pair.ri.between(&pair.rj)).into_vector();
    let dist = psi.norm();
    if dist == 0.0 {
        (Vector3::zeros(), 0.0)
    } else {
        (psi / dist, dist)
    }
}

/// `R_i exp(d ψ̄)` with `d = W_j / (W_i + W_j) · d(R_i, R_j)`.
pub fn weighted_average_stateless(pair: &WeightedPair) -> Rotation {
    let total = pair.wi + pair.wj;
    if !(total > 0.0) {
        return pair.ri;
    }
    let (dir, dist) = traverse(pair);
    if dist == 0.0 {
        return pair.ri;
    }
    pair.ri.compose(&exp_map(&(dir * (pair.wj * dist / total))))
}

/// Turn counter and direction history of one averaging position over time.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionState {
    pub n_turns: i64,
    history: VecDeque<Vector3<f64>>,
    pub psi_default: Vector3<f64>,
    pub d_th: f64,
    pub e_psi: f64,
    pub capacity: usize,
}

/// Starts a run from the pair at its first time step.
pub fn init_fusion_state(ri0: &Rotation, rj0: &Rotation) -> FusionState {
    let (psi_default, _) = traverse(&WeightedPair::new(*ri0, 1.0, *rj0, 1.0));
    let mut history = VecDeque::with_capacity(DEFAULT_HISTORY);
    history.push_back(psi_default);
    FusionState {
        n_turns: 0,
        history,
        psi_default,
        d_th: DEFAULT_DISTANCE_THRESHOLD,
        e_psi: default_alignment_threshold(),
        capacity: DEFAULT_HISTORY,
    }
}

impl FusionState {
    pub fn history(&self) -> impl Iterator<Item = &Vector3<f64>> {
        self.history.iter()
    }

    /// Normalized mean of the non-zero stored directions.
    fn history_direction(&self) -> Option<Vector3<f64>> {
        let mut sum = Vector3::zeros();
        let mut last = None;
        for v in self.history.iter().filter(|v| v.norm_squared() > 0.0) {
            sum += v;
            last = Some(*v);
        }
        let n = sum.norm();
        if n > 1e-12 {
            Some(sum / n)
        } else {
            last
        }
    }

    fn remember(&mut self, dir: Vector3<f64>) {
        if self.history.len() == self.capacity {
            self.history.pop_front();
        }
        self.history.push_back(dir);
    }

    /// Memory-based average of one pair; advances the state.
    pub fn average(&mut self, pair: &WeightedPair) -> Rotation {
        let (dir, dist) = traverse(pair);
        let total = pair.wi + pair.wj;
        if !(total > 0.0) {
            self.remember(dir);
            return pair.ri;
        }
        let ratio = pair.wj / total;
        let past = self.history_direction().unwrap_or(dir);
        let dot = past.dot(&dir);
        let even = self.n_turns.rem_euclid(2) == 0;

        // Unwrapped distances along ψ̄ for even turns and against it for odd turns.
        let forward = |n: i64| ratio * (n as f64 * PI + dist);
        let backward = |n: i64| ratio * ((n + 1) as f64 * PI - dist);

        let out = if dot > self.e_psi {
            if even {
                pair.ri.compose(&exp_map(&(dir * forward(self.n_turns))))
            } else {
                pair.ri.compose(&exp_map(&(dir * -backward(self.n_turns))))
            }
        } else if -dot > self.e_psi {
            let far = dist > self.d_th;
            self.n_turns += match (even, far) {
                (true, true) | (false, false) => 1,
                (true, false) | (false, true) => -1,
            };
            self.history.clear();
            if even {
                pair.ri.compose(&exp_map(&(dir * -backward(self.n_turns))))
            } else {
                pair.ri.compose(&exp_map(&(dir * forward(self.n_turns))))
            }
        } else if even {
            pair.ri.compose(&exp_map(&(past * forward(self.n_turns))))
        } else {
            pair.ri.compose(&exp_map(&(past * -backward(self.n_turns))))
        };
        self.remember(dir);
        out
    }
}

/// Functional form of [`FusionState::average`].
pub fn weighted_average_memory(
    pair: &WeightedPair,
    mut state: FusionState,
) -> (Rotation, FusionState) {
    let r = state.average(pair);
    (r, state)
}
