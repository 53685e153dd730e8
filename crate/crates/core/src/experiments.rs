//! Simulation protocols: via-point sets, sweeps and the multi-IOVP
//! comparison, ready to run on any demonstration set.

use std::f64::consts::PI;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::fusion::{
    acceleration_cost, continuity, fuse, strict_axis_error, ContinuityStats, FusedTrajectory,
    FusionOptions, IovpSpec, RelaxedAxis, WeightCurveSet,
};
use crate::gmm::{linspace, Demonstration};
use crate::kmp::{reproduce_orientation_trajectory, KernelConfig, OrientationSample, ViaPointSpec};
use crate::pipeline::{adapt_on, learn_skill, AdaptOptions, Skill};
use crate::so3::{exp_map, geodesic_distance, rot_y, Rotation};

pub const LAMBDA_A_SWEEP: [f64; 5] = [10.0, 1e2, 1e3, 1e4, 1e5];
pub const STRICT: [f64; 3] = [1e-10; 3];
pub const LOOSE: [f64; 3] = [1e3; 3];
/// Evaluation grid spacing for costs and continuity (s).
pub const EVAL_DT: f64 = 1e-3;

fn rot(psi: [f64; 3]) -> Rotation {
    exp_map(&Vector3::from(psi))
}

pub fn start_rotation() -> Rotation {
    rot([1.2614, 1.0512, 1.5767])
}

pub fn goal_rotation() -> Rotation {
    rot([0.9137, 1.3705, 0.9137])
}

/// Evenly spaced times at [`EVAL_DT`] over `[t0, t1]`.
pub fn eval_grid(t0: f64, t1: f64) -> Vec<f64> {
    linspace(t0, t1, ((t1 - t0) / EVAL_DT).round() as usize + 1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    One,
    Two,
}

/// Start, one intermediate and the goal, all tightly constrained.
pub fn task_vias(task: Task) -> Vec<ViaPointSpec> {
    let middle = match task {
        Task::One => (4.0, [1.5456, 1.0304, 2.0608], [0.1, 0.1, 0.0]),
        Task::Two => (6.0, [0.7028, 1.1713, 0.4685], [0.1, 0.2, 0.0]),
    };
    vec![
        ViaPointSpec::with_variances(0.0, start_rotation(), Vector3::zeros(), STRICT, STRICT),
        ViaPointSpec::with_variances(
            middle.0,
            rot(middle.1),
            Vector3::from(middle.2),
            STRICT,
            STRICT,
        ),
        ViaPointSpec::with_variances(
            10.0,
            goal_rotation(),
            Vector3::new(0.0, 0.3, 0.3),
            STRICT,
            STRICT,
        ),
    ]
}

/// Orientation-only vias for the acceleration sweep; velocities are left loose.
pub fn acceleration_sweep_vias() -> Vec<ViaPointSpec> {
    vec![
        ViaPointSpec::with_variances(0.0, start_rotation(), Vector3::zeros(), STRICT, LOOSE),
        ViaPointSpec::with_variances(
            5.0,
            rot([1.7639, 0.7560, 2.0159]),
            Vector3::new(0.1, 0.0, 0.0),
            STRICT,
            LOOSE,
        ),
        ViaPointSpec::with_variances(
            10.0,
            rot([0.7935, 1.3224, 0.0]),
            Vector3::new(-0.1, 0.0, 0.0),
            STRICT,
            LOOSE,
        ),
    ]
}

pub const SINGLE_IOVP_TIME: f64 = 5.0;

pub fn single_iovp_rotation() -> Rotation {
    rot([0.7028, 1.1713, 0.4685])
}

/// Start, the middle target and the goal; with `relaxed` the middle target
/// leaves rotation about its own z axis free.
pub fn single_iovp_vias(relaxed: bool) -> Vec<ViaPointSpec> {
    let r = single_iovp_rotation();
    let middle = if relaxed { [1e-10, 1e-10, 1e3] } else { STRICT };
    vec![
        ViaPointSpec::with_variances(0.0, start_rotation(), Vector3::zeros(), STRICT, LOOSE),
        ViaPointSpec::with_variances(
            SINGLE_IOVP_TIME,
            r,
            r.transpose().rotate(&Vector3::new(0.0, 0.0, 0.3)),
            middle,
            LOOSE,
        ),
        ViaPointSpec::with_variances(
            10.0,
            goal_rotation(),
            Vector3::new(0.0, 0.3, 0.3),
            STRICT,
            LOOSE,
        ),
    ]
}

/// Final target with `‖ψ̃‖ = π`, on the boundary of the world chart.
pub fn boundary_target() -> Rotation {
    let h = PI / 2f64.sqrt();
    rot([0.0, h, -h])
}

/// Comparison target `i`: the boundary target turned about its y axis.
pub fn sweep_target(i: i32) -> Rotation {
    boundary_target().compose(&rot_y((i - 6) as f64 * PI / 6.0))
}

/// Boundary target turned by 2π/3 about y.
pub fn no_memory_target() -> Rotation {
    boundary_target().compose(&rot_y(2.0 * PI / 3.0))
}

pub fn multi_iovp_baseline() -> ViaPointSpec {
    ViaPointSpec::with_variances(0.0, start_rotation(), Vector3::zeros(), STRICT, STRICT)
}

/// Three IOVPs at t = 4, 7, 10 relaxing y, z and y.
// Printed values, not π/6.
#[allow(clippy::approx_constant)]
pub fn multi_iovps(last_target: Rotation) -> Vec<IovpSpec> {
    vec![
        IovpSpec::new(
            4.0,
            rot([0.7028, 1.1713, 0.4685]),
            Vector3::new(0.0069, 0.2103, 0.2138),
            RelaxedAxis::Y,
        ),
        IovpSpec::new(
            7.0,
            rot([-0.5236, 0.0, 0.0]),
            Vector3::new(0.0, 0.15, 0.2598),
            RelaxedAxis::Z,
        ),
        IovpSpec::new(10.0, last_target, Vector3::zeros(), RelaxedAxis::Y),
    ]
}

/// Geodesic and angular-velocity errors of the adapted model at each via time.
pub fn via_errors(
    skill: &Skill,
    vias: &[ViaPointSpec],
    opts: &AdaptOptions,
) -> Result<Vec<(f64, f64)>> {
    let times: Vec<f64> = vias.iter().map(|v| v.t).collect();
    let adapted = adapt_on(skill, vias, opts, &times)?;
    Ok(adapted
        .samples
        .iter()
        .zip(vias)
        .map(|(s, v)| {
            (
                geodesic_distance(&s.rotation, &v.rotation),
                (s.omega - v.omega).norm(),
            )
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct LambdaRow {
    pub lambda_a: f64,
    pub cost: f64,
    pub samples: Vec<OrientationSample>,
}

/// Adapts `skill` with acceleration weight `lambda_a` and scores it on `times`.
pub fn lambda_trial(
    skill: &Skill,
    vias: &[ViaPointSpec],
    opts: &AdaptOptions,
    lambda_a: f64,
    times: &[f64],
) -> Result<LambdaRow> {
    let opts = AdaptOptions {
        kernel: KernelConfig {
            lambda_a: Some(lambda_a),
            ..opts.kernel
        },
        ..*opts
    };
    let samples = adapt_on(skill, vias, &opts, times)?.samples;
    Ok(LambdaRow {
        lambda_a,
        cost: acceleration_cost(&samples)?,
        samples,
    })
}

/// One fused run scored the way the comparison tables need it.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionScore {
    pub cost: f64,
    /// Per IOVP, at its own time.
    pub strict_axis_errors: Vec<f64>,
    pub continuity: ContinuityStats,
}

pub fn score_fusion(fused: &FusedTrajectory, iovps: &[IovpSpec]) -> Result<FusionScore> {
    let errors = iovps
        .iter()
        .map(|v| {
            let s = fused
                .samples
                .iter()
                .min_by(|a, b| (a.t - v.t).abs().total_cmp(&(b.t - v.t).abs()))
                .expect("non-empty trajectory");
            strict_axis_error(&s.rotation, &v.rotation, v.relaxed)
        })
        .collect();
    Ok(FusionScore {
        cost: acceleration_cost(&fused.samples)?,
        strict_axis_errors: errors,
        continuity: continuity(&fused.samples),
    })
}

/// Shared parts of the IOVP-versus-strict comparison: every component except
/// the one for the last IOVP, whose target changes per trial.
#[derive(Clone, Debug)]
pub struct Comparison {
    demos: Vec<Demonstration>,
    opts: FusionOptions,
    times: Vec<f64>,
    iovps: Vec<IovpSpec>,
    relaxed: Vec<Vec<OrientationSample>>,
    strict: Vec<Vec<OrientationSample>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub index: i32,
    pub iovp: FusionScore,
    pub strict: FusionScore,
}

impl Comparison {
    /// `iovps` are the comparison IOVPs with any placeholder as the last target.
    pub fn new(
        demos: &[Demonstration],
        baseline_aux: &Rotation,
        baseline_vias: &[ViaPointSpec],
        iovps: &[IovpSpec],
        opts: &FusionOptions,
        times: &[f64],
    ) -> Result<Self> {
        if iovps.is_empty() {
            return Err(Error::InvalidInput(
                "comparison needs at least one IOVP".into(),
            ));
        }
        let base_skill = learn_skill(demos, baseline_aux, &opts.learn)?;
        let base = adapt_on(&base_skill, baseline_vias, &opts.adapt, times)?.samples;
        let mut relaxed = vec![base.clone()];
        let mut strict = vec![base];
        let fixed = &iovps[..iovps.len().saturating_sub(1)];
        for v in fixed {
            let skill = learn_skill(demos, &v.rotation, &opts.learn)?;
            relaxed.push(adapt_on(&skill, &[v.via_point()], &opts.adapt, times)?.samples);
            strict.push(adapt_on(&skill, &[v.strict().via_point()], &opts.adapt, times)?.samples);
        }
        Ok(Comparison {
            demos: demos.to_vec(),
            opts: opts.clone(),
            times: times.to_vec(),
            iovps: iovps.to_vec(),
            relaxed,
            strict,
        })
    }

    /// Fuses with the last IOVP moved to `target`, with and without relaxation.
    pub fn trial(&self, index: i32, target: Rotation, memory: bool) -> Result<ComparisonRow> {
        let mut iovps = self.iovps.clone();
        let last = iovps.last_mut().expect("at least one IOVP");
        last.rotation = target;
        let last = *last;
        let skill = learn_skill(&self.demos, &last.rotation, &self.opts.learn)?;
        let mut relaxed = self.relaxed.clone();
        relaxed.push(adapt_on(&skill, &[last.via_point()], &self.opts.adapt, &self.times)?.samples);
        let mut strict = self.strict.clone();
        strict.push(
            adapt_on(
                &skill,
                &[last.strict().via_point()],
                &self.opts.adapt,
                &self.times,
            )?
            .samples,
        );
        let weights = WeightCurveSet::from_iovps(&iovps)?;
        let strict_iovps: Vec<IovpSpec> = iovps.iter().map(IovpSpec::strict).collect();
        Ok(ComparisonRow {
            index,
            iovp: score_fusion(&fuse(&relaxed, &weights, memory)?, &iovps)?,
            strict: score_fusion(&fuse(&strict, &weights, memory)?, &strict_iovps)?,
        })
    }
}

/// Samples an adapted model of `skill` at `times` without via-points.
pub fn reproduce(
    skill: &Skill,
    opts: &AdaptOptions,
    times: &[f64],
) -> Result<Vec<OrientationSample>> {
    let model = crate::pipeline::adapt_model(skill, &[], opts)?;
    reproduce_orientation_trajectory(&model, &skill.aux, times)
}
