//! Demonstrations to adapted trajectory: project, encode, regress, recover.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::gmm::{
    extract_reference, fit_gmm, linspace, project_demonstrations, stack_rows, Demonstration,
    GaussianMixture, GmmOptions, ReferenceTrajectory,
};
use crate::kmp::{
    augment_for_acceleration, build_model, reproduce_orientation_trajectory, transform_via_point,
    ExtendedReference, KernelConfig, KmpModel, OrientationSample, ViaPointSpec, DEFAULT_VIA_DELTA,
};
use crate::so3::Rotation;

/// How far outside the demonstrated time span a via-point may sit (s).
pub const VIA_TIME_SLACK: f64 = 1.0;

#[derive(Clone, Debug, PartialEq)]
pub struct LearnOptions {
    pub gmm: GmmOptions,
    /// Size of the GMR reference grid handed to the regression.
    pub reference_points: usize,
}

impl Default for LearnOptions {
    fn default() -> Self {
        LearnOptions {
            gmm: GmmOptions::default(),
            reference_points: 100,
        }
    }
}

/// A mixture and its reference trajectory in the chart of `aux`.
#[derive(Clone, Debug)]
pub struct Skill {
    pub aux: Rotation,
    pub mixture: GaussianMixture,
    pub log_likelihood: Vec<f64>,
    pub reference: ReferenceTrajectory,
    pub t_start: f64,
    pub t_end: f64,
}

pub fn learn_skill(demos: &[Demonstration], aux: &Rotation, opts: &LearnOptions) -> Result<Skill> {
    let first = demos
        .first()
        .ok_or_else(|| Error::InvalidInput("at least one demonstration is required".into()))?;
    let (t_start, t_end) = (first.times()[0], first.times()[first.len() - 1]);
    if opts.reference_points < 2 {
        return Err(Error::Config(
            "reference grid needs at least 2 points".into(),
        ));
    }
    let projected = project_demonstrations(demos, aux)?;
    let fit = fit_gmm(&stack_rows(&projected), &opts.gmm)?;
    let reference = extract_reference(
        &fit.mixture,
        &linspace(t_start, t_end, opts.reference_points),
    )?;
    Ok(Skill {
        aux: *aux,
        mixture: fit.mixture,
        log_likelihood: fit.log_likelihood,
        reference,
        t_start,
        t_end,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaptOptions {
    pub kernel: KernelConfig,
    pub delta_t: f64,
    /// Number of output samples over the demonstrated span.
    pub grid: usize,
}

impl Default for AdaptOptions {
    fn default() -> Self {
        AdaptOptions {
            kernel: KernelConfig::default(),
            delta_t: DEFAULT_VIA_DELTA,
            grid: 200,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Adaptation {
    pub model: KmpModel,
    pub samples: Vec<OrientationSample>,
}

impl Adaptation {
    /// Chart prediction `ψ(t)` in the skill's auxiliary frame.
    pub fn psi_at(&self, t: f64) -> Vector3<f64> {
        let p = self.model.predict_position(t);
        Vector3::new(p[0], p[1], p[2])
    }
}

/// Builds the regression for `skill` with `vias` folded in.
pub fn adapt_model(skill: &Skill, vias: &[ViaPointSpec], opts: &AdaptOptions) -> Result<KmpModel> {
    opts.kernel.validate()?;
    for vp in vias {
        if vp.t < skill.t_start - VIA_TIME_SLACK || vp.t > skill.t_end + VIA_TIME_SLACK {
            return Err(Error::InvalidInput(format!(
                "via-point time {} lies outside [{}, {}]",
                vp.t, skill.t_start, skill.t_end
            )));
        }
    }
    let rows = vias
        .iter()
        .map(|vp| transform_via_point(vp, &skill.aux, opts.delta_t))
        .collect::<Result<Vec<_>>>()?;
    let mut reference = ExtendedReference::new(&skill.reference, 3).with_via_points(rows);
    if let Some(lambda_a) = opts.kernel.lambda_a {
        reference = augment_for_acceleration(&reference, lambda_a)?;
    }
    build_model(&reference, &opts.kernel)
}

/// Adapts and samples the trajectory on `opts.grid` evenly spaced times.
pub fn adapt(skill: &Skill, vias: &[ViaPointSpec], opts: &AdaptOptions) -> Result<Adaptation> {
    adapt_on(
        skill,
        vias,
        opts,
        &linspace(skill.t_start, skill.t_end, opts.grid),
    )
}

/// Adapts and samples the trajectory on an explicit grid.
pub fn adapt_on(
    skill: &Skill,
    vias: &[ViaPointSpec],
    opts: &AdaptOptions,
    times: &[f64],
) -> Result<Adaptation> {
    let model = adapt_model(skill, vias, opts)?;
    let samples = reproduce_orientation_trajectory(&model, &skill.aux, times)?;
    Ok(Adaptation { model, samples })
}
