//! Fusion of trajectories learned around several auxiliary frames.
//!
//! Each incomplete-orientation via-point (IOVP) gets its own trajectory,
//! learned in the chart of the via rotation so one axis can be left free.
//! Gaussian weight curves make every component dominant only near its own via
//! time, and a chain of pairwise weighted averages merges them with the
//! baseline trajectory.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Vector3};

use crate::error::{Error, Result};
use crate::gmm::Demonstration;
use crate::kmp::{OrientationSample, ViaPointSpec};
use crate::pipeline::{adapt_on, learn_skill, AdaptOptions, LearnOptions};
use crate::rotavg::{init_fusion_state, weighted_average_stateless, FusionState, WeightedPair};
use crate::so3::{log_map, Rotation};

pub const DEFAULT_EPS_STRICT: f64 = 1e-10;
pub const DEFAULT_EPS_LOOSE: f64 = 1e3;
pub const DEFAULT_DOMAIN_WIDTH: f64 = 2.4;

/// Largest accepted excess of `ΣW_k` over 1: two neighbours each at their
/// `Δt` edge contribute `e^-4.5`.
pub fn overlap_tolerance() -> f64 {
    2.0 * (-4.5f64).exp()
}

/// `exp(-(t - t̄)² / 2σ²)` with `σ = Δt / 3`.
pub fn gauss_weight(t: f64, t_bar: f64, delta_t: f64) -> f64 {
    let sigma = delta_t / 3.0;
    let r = t - t_bar;
    (-(r * r) / (2.0 * sigma * sigma)).exp()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RelaxedAxis {
    X,
    Y,
    Z,
    None,
}

impl RelaxedAxis {
    pub fn index(self) -> Option<usize> {
        match self {
            RelaxedAxis::X => Some(0),
            RelaxedAxis::Y => Some(1),
            RelaxedAxis::Z => Some(2),
            RelaxedAxis::None => None,
        }
    }
}

impl FromStr for RelaxedAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" => Ok(RelaxedAxis::X),
            "y" => Ok(RelaxedAxis::Y),
            "z" => Ok(RelaxedAxis::Z),
            "none" => Ok(RelaxedAxis::None),
            other => Err(Error::Config(format!(
                "relaxed axis must be x, y, z or none, got {other:?}"
            ))),
        }
    }
}

impl fmt::Display for RelaxedAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RelaxedAxis::X => "x",
            RelaxedAxis::Y => "y",
            RelaxedAxis::Z => "z",
            RelaxedAxis::None => "none",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IovpSpec {
    pub t: f64,
    pub rotation: Rotation,
    pub omega: Vector3<f64>,
    pub relaxed: RelaxedAxis,
    pub eps_strict: f64,
    pub eps_loose: f64,
    pub velocity_variance: f64,
    /// Half-width of the time domain where this via dominates.
    pub delta_t: f64,
}

impl IovpSpec {
    pub fn new(t: f64, rotation: Rotation, omega: Vector3<f64>, relaxed: RelaxedAxis) -> Self {
        IovpSpec {
            t,
            rotation,
            omega,
            relaxed,
            eps_strict: DEFAULT_EPS_STRICT,
            eps_loose: DEFAULT_EPS_LOOSE,
            velocity_variance: DEFAULT_EPS_STRICT,
            delta_t: DEFAULT_DOMAIN_WIDTH,
        }
    }

    /// The same via with every axis constrained.
    pub fn strict(&self) -> Self {
        IovpSpec {
            relaxed: RelaxedAxis::None,
            ..*self
        }
    }

    pub fn via_point(&self) -> ViaPointSpec {
        let mut orientation = [self.eps_strict; 3];
        if let Some(i) = self.relaxed.index() {
            orientation[i] = self.eps_loose;
        }
        ViaPointSpec::with_variances(
            self.t,
            self.rotation,
            self.omega,
            orientation,
            [self.velocity_variance; 3],
        )
    }

    fn validate(&self) -> Result<()> {
        if !(self.eps_strict > 0.0 && self.eps_loose > 0.0 && self.velocity_variance > 0.0) {
            return Err(Error::Config(format!(
                "IOVP at t = {} needs positive variances",
                self.t
            )));
        }
        if self.relaxed != RelaxedAxis::None && !(self.eps_strict < self.eps_loose) {
            return Err(Error::Config(format!(
                "IOVP at t = {} needs eps_strict < eps_loose",
                self.t
            )));
        }
        if !(self.delta_t > 0.0 && self.delta_t.is_finite()) {
            return Err(Error::Config(format!(
                "IOVP at t = {} needs a positive delta_t",
                self.t
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightCurve {
    pub center: f64,
    pub delta_t: f64,
}

/// Gaussian weights `W_1..W_K` plus the baseline weight `W_0 = 1 - ΣW_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightCurveSet {
    curves: Vec<WeightCurve>,
}

impl WeightCurveSet {
    /// Checks ordering and that adjacent domains do not overlap:
    /// `t̄_k + Δt_k <= t̄_{k+1}` and `t̄_{k+1} - Δt_{k+1} >= t̄_k`.
    pub fn new(curves: Vec<WeightCurve>) -> Result<Self> {
        for c in &curves {
            if !(c.delta_t > 0.0 && c.delta_t.is_finite() && c.center.is_finite()) {
                return Err(Error::Config(format!("invalid weight curve {c:?}")));
            }
        }
        for (k, w) in curves.windows(2).enumerate() {
            let (a, b) = (w[0], w[1]);
            if !(b.center > a.center) {
                return Err(Error::DomainOverlap(format!(
                    "IOVP times must be strictly increasing (entries {} and {})",
                    k + 1,
                    k + 2
                )));
            }
            if a.center + a.delta_t > b.center + 1e-12 || b.center - b.delta_t < a.center - 1e-12 {
                return Err(Error::DomainOverlap(format!(
                    "domains of IOVPs at t = {} (Δt = {}) and t = {} (Δt = {}) interfere",
                    a.center, a.delta_t, b.center, b.delta_t
                )));
            }
        }
        let set = WeightCurveSet { curves };
        let centers: Vec<f64> = set.curves.iter().map(|c| c.center).collect();
        set.check_overlap(&centers)?;
        Ok(set)
    }

    pub fn from_iovps(iovps: &[IovpSpec]) -> Result<Self> {
        Self::new(
            iovps
                .iter()
                .map(|v| WeightCurve {
                    center: v.t,
                    delta_t: v.delta_t,
                })
                .collect(),
        )
    }

    pub fn curves(&self) -> &[WeightCurve] {
        &self.curves
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    /// `[W_0, W_1, …, W_K]` at `t`; the entries sum to 1.
    pub fn weights(&self, t: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.curves.len() + 1);
        out.push(0.0);
        out.extend(
            self.curves
                .iter()
                .map(|c| gauss_weight(t, c.center, c.delta_t)),
        );
        out[0] = 1.0 - out[1..].iter().sum::<f64>();
        out
    }

    /// Rejects grids where `ΣW_k` exceeds 1 by more than [`overlap_tolerance`].
    pub fn check_overlap(&self, times: &[f64]) -> Result<()> {
        for &t in times {
            let w0 = self.weights(t)[0];
            if w0 < -overlap_tolerance() {
                return Err(Error::DomainOverlap(format!(
                    "IOVP weights sum to {} at t = {t}",
                    1.0 - w0
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FusionOptions {
    pub learn: LearnOptions,
    pub adapt: AdaptOptions,
}

/// Baseline plus one trajectory per IOVP, all on the same grid.
#[derive(Clone, Debug)]
pub struct ComponentSet {
    /// Auxiliary frame of every component, baseline first.
    pub aux: Vec<Rotation>,
    pub trajectories: Vec<Vec<OrientationSample>>,
}

/// Learns the baseline around `baseline_aux` with `baseline_vias`, and every
/// IOVP component around its own rotation with only that IOVP, then samples
/// each on `times`.
pub fn build_component_trajectories(
    demos: &[Demonstration],
    baseline_aux: &Rotation,
    baseline_vias: &[ViaPointSpec],
    iovps: &[IovpSpec],
    opts: &FusionOptions,
    times: &[f64],
) -> Result<ComponentSet> {
    for v in iovps {
        v.validate()?;
    }
    WeightCurveSet::from_iovps(iovps)?;
    let mut aux = vec![*baseline_aux];
    let mut trajectories = Vec::with_capacity(iovps.len() + 1);
    let skill = learn_skill(demos, baseline_aux, &opts.learn)?;
    trajectories.push(adapt_on(&skill, baseline_vias, &opts.adapt, times)?.samples);
    for v in iovps {
        let skill = learn_skill(demos, &v.rotation, &opts.learn)?;
        trajectories.push(adapt_on(&skill, &[v.via_point()], &opts.adapt, times)?.samples);
        aux.push(v.rotation);
    }
    Ok(ComponentSet { aux, trajectories })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusedTrajectory {
    /// `psi` holds the world-chart coordinate `log R(t)`.
    pub samples: Vec<OrientationSample>,
    /// `[W_0, …, W_K]` per sample.
    pub weights: Vec<Vec<f64>>,
    /// Final turn counter of every fold position.
    pub n_turns: Vec<i64>,
}

/// Folds `R_1 … R_K` left to right, then averages the result (weight `ΣW_k`)
/// with the baseline `R_0` (weight `max(W_0, 0)`).
pub fn fuse(
    components: &[Vec<OrientationSample>],
    weights: &WeightCurveSet,
    memory: bool,
) -> Result<FusedTrajectory> {
    let base = components.first().ok_or_else(|| {
        Error::InvalidInput("fusion needs at least the baseline trajectory".into())
    })?;
    if components.len() != weights.len() + 1 {
        return Err(Error::InvalidInput(format!(
            "{} components for {} weight curves",
            components.len(),
            weights.len()
        )));
    }
    for (k, c) in components.iter().enumerate() {
        if c.len() != base.len() || c.iter().zip(base).any(|(a, b)| a.t != b.t) {
            return Err(Error::InvalidInput(format!(
                "component {k} is not on the baseline grid"
            )));
        }
    }
    let times: Vec<f64> = base.iter().map(|s| s.t).collect();
    weights.check_overlap(&times)?;
    let all_weights: Vec<Vec<f64>> = times.iter().map(|&t| weights.weights(t)).collect();
    if weights.is_empty() {
        return Ok(FusedTrajectory {
            samples: base.clone(),
            weights: all_weights,
            n_turns: Vec::new(),
        });
    }

    let k = weights.len();
    let mut states: Vec<Option<FusionState>> = vec![None; k];
    let mut rotations = Vec::with_capacity(times.len());
    for (n, w) in all_weights.iter().enumerate() {
        let mut step = |slot: usize, pair: WeightedPair| {
            if !memory {
                return weighted_average_stateless(&pair);
            }
            states[slot]
                .get_or_insert_with(|| init_fusion_state(&pair.ri, &pair.rj))
                .average(&pair)
        };
        let mut acc = components[1][n].rotation;
        let mut acc_w = w[1];
        for j in 2..=k {
            acc = step(
                j - 2,
                WeightedPair::new(acc, acc_w, components[j][n].rotation, w[j]),
            );
            acc_w += w[j];
        }
        rotations.push(step(
            k - 1,
            WeightedPair::new(acc, acc_w, base[n].rotation, w[0].max(0.0)),
        ));
    }

    let omega = angular_velocity(&times, &rotations)?;
    let samples = times
        .iter()
        .zip(&rotations)
        .zip(omega)
        .map(|((&t, r), omega)| OrientationSample {
            t,
            psi: log_map(r).into_vector(),
            rotation: *r,
            omega,
        })
        .collect();
    Ok(FusedTrajectory {
        samples,
        weights: all_weights,
        n_turns: states
            .iter()
            .map(|s| s.as_ref().map_or(0, |s| s.n_turns))
            .collect(),
    })
}

/// World-frame `ω` of a sampled rotation sequence: central differences inside,
/// one-sided at the ends.
pub fn angular_velocity(times: &[f64], rotations: &[Rotation]) -> Result<Vec<Vector3<f64>>> {
    let n = rotations.len();
    if n < 2 || times.len() != n {
        return Err(Error::SeriesTooShort { len: n, min: 2 });
    }
    Ok((0..n)
        .map(|i| {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
            let body =
                log_map(&rotations[a].between(&rotations[b])).into_vector() / (times[b] - times[a]);
            rotations[i].rotate(&body)
        })
        .collect())
}

/// `(1/N) Σ‖ω̇‖²` with `ω̇` by central differences of the sampled `ω`.
pub fn acceleration_cost(samples: &[OrientationSample]) -> Result<f64> {
    let n = samples.len();
    if n < 3 {
        return Err(Error::SeriesTooShort { len: n, min: 3 });
    }
    let mut total = 0.0;
    for i in 0..n {
        let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
        let d = (samples[b].omega - samples[a].omega) / (samples[b].t - samples[a].t);
        total += d.norm_squared();
    }
    Ok(total / n as f64)
}

/// Angle between the constrained direction of `r` and of `target`.
///
/// For a relaxed axis that axis is the one that must stay aligned (rotation
/// about it is free); with no relaxed axis the full geodesic distance counts.
pub fn strict_axis_error(r: &Rotation, target: &Rotation, relaxed: RelaxedAxis) -> f64 {
    match relaxed.index() {
        Some(i) => {
            let c = r.axis(i).dot(&target.axis(i)).clamp(-1.0, 1.0);
            // acos loses precision near 1; use the cross product there.
            let s = r.axis(i).cross(&target.axis(i)).norm();
            s.atan2(c)
        }
        None => crate::so3::geodesic_distance(r, target),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContinuityStats {
    pub max_step: f64,
    pub median_step: f64,
}

impl ContinuityStats {
    /// `max / median`, the discontinuity indicator.
    pub fn ratio(&self) -> f64 {
        if self.median_step > 0.0 {
            self.max_step / self.median_step
        } else if self.max_step > 0.0 {
            f64::INFINITY
        } else {
            1.0
        }
    }
}

/// Geodesic step statistics of consecutive samples.
pub fn continuity(samples: &[OrientationSample]) -> ContinuityStats {
    let mut steps: Vec<f64> = samples
        .windows(2)
        .map(|w| crate::so3::geodesic_distance(&w[0].rotation, &w[1].rotation))
        .collect();
    if steps.is_empty() {
        return ContinuityStats {
            max_step: 0.0,
            median_step: 0.0,
        };
    }
    steps.sort_by(f64::total_cmp);
    let m = steps.len();
    let median_step = if m % 2 == 1 {
        steps[m / 2]
    } else {
        0.5 * (steps[m / 2 - 1] + steps[m / 2])
    };
    ContinuityStats {
        max_step: steps[m - 1],
        median_step,
    }
}

/// True when the world-chart coordinate jumps across the ball boundary
/// between two consecutive samples.
pub fn crosses_ball_boundary(samples: &[OrientationSample]) -> bool {
    samples.windows(2).any(|w| {
        w[0].psi.norm() > PI - 0.1 && w[1].psi.norm() > PI - 0.1 && w[0].psi.dot(&w[1].psi) < 0.0
    })
}

/// Diagonal covariance helper for tests and configs.
pub fn diagonal(values: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(values))
}
