//! TOML run configuration.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{
    IovpSpec, RelaxedAxis, WeightCurveSet, DEFAULT_DOMAIN_WIDTH, DEFAULT_EPS_LOOSE,
    DEFAULT_EPS_STRICT,
};
use crate::gmm::{Demonstration, GmmOptions};
use crate::io::{load_demos, read_text, resolve, toml_error, DemoLoadOptions};
use crate::kmp::{KernelConfig, ViaPointSpec, DEFAULT_VIA_DELTA};
use crate::pipeline::{AdaptOptions, LearnOptions};
use crate::so3::{exp_map, Rotation};
use crate::synth::{generate_demos, DemoProfile, SynthOptions};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub demos: DemoSection,
    #[serde(default)]
    pub aux: AuxSection,
    #[serde(default)]
    pub gmm: GmmSection,
    #[serde(default)]
    pub kernel: KernelSection,
    #[serde(default)]
    pub adapt: AdaptSection,
    #[serde(default, rename = "via", skip_serializing_if = "Vec::is_empty")]
    pub vias: Vec<ViaSection>,
    #[serde(default, rename = "iovp", skip_serializing_if = "Vec::is_empty")]
    pub iovps: Vec<IovpSection>,
    #[serde(default)]
    pub fusion: FusionSection,
    #[serde(default)]
    pub sweep: SweepSection,
    /// Directory relative demo paths resolve against; set by [`RunConfig::load`].
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoSection {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub paths: Vec<PathBuf>,
    #[serde(default)]
    pub quaternion: bool,
    #[serde(default)]
    pub orthonormalize: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSection {
    pub profile: String,
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default = "default_demo_dt")]
    pub dt: f64,
}

fn default_count() -> usize {
    SynthOptions::default().count
}
fn default_seed() -> u64 {
    SynthOptions::default().seed
}
fn default_duration() -> f64 {
    SynthOptions::default().duration
}
fn default_demo_dt() -> f64 {
    SynthOptions::default().dt
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuxPolicy {
    /// First rotation of the first demonstration.
    #[default]
    FirstDemoStart,
    /// The matrix given in `aux.matrix`.
    Explicit,
    /// The rotation of the first IOVP (for `adapt`); fusion always learns each
    /// IOVP component in its own frame.
    PerIovp,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuxSection {
    #[serde(default)]
    pub policy: AuxPolicy,
    /// Row-major, used by the explicit policy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GmmSection {
    pub components: usize,
    pub seed: u64,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub covariance_floor: f64,
}

impl Default for GmmSection {
    fn default() -> Self {
        let g = GmmOptions::default();
        GmmSection {
            components: g.components,
            seed: g.seed,
            max_iterations: g.max_iterations,
            tolerance: g.tolerance,
            covariance_floor: g.covariance_floor,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelSection {
    pub l: f64,
    pub lambda: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_a: Option<f64>,
}

impl Default for KernelSection {
    fn default() -> Self {
        let k = KernelConfig::default();
        KernelSection {
            l: k.l,
            lambda: k.lambda,
            lambda_a: k.lambda_a,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptSection {
    /// Finite-difference step of the via-point transform (s).
    pub delta_t: f64,
    /// Output samples over the demonstrated span.
    pub grid: usize,
    pub reference_points: usize,
}

impl Default for AdaptSection {
    fn default() -> Self {
        AdaptSection {
            delta_t: DEFAULT_VIA_DELTA,
            grid: 200,
            reference_points: LearnOptions::default().reference_points,
        }
    }
}

fn strict3() -> [f64; 3] {
    [DEFAULT_EPS_STRICT; 3]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViaSection {
    pub t: f64,
    /// World-chart coordinates; the rotation is `exp(psi)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<[f64; 3]>,
    /// Row-major alternative to `psi`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<Vec<f64>>,
    #[serde(default)]
    pub omega: [f64; 3],
    #[serde(default = "strict3")]
    pub orientation_variance: [f64; 3],
    #[serde(default = "strict3")]
    pub velocity_variance: [f64; 3],
}

fn default_relaxed() -> String {
    "none".into()
}
fn default_domain() -> f64 {
    DEFAULT_DOMAIN_WIDTH
}
fn default_strict() -> f64 {
    DEFAULT_EPS_STRICT
}
fn default_loose() -> f64 {
    DEFAULT_EPS_LOOSE
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IovpSection {
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<Vec<f64>>,
    #[serde(default)]
    pub omega: [f64; 3],
    /// `x`, `y`, `z` or `none`.
    #[serde(default = "default_relaxed")]
    pub relaxed: String,
    #[serde(default = "default_domain")]
    pub delta_t: f64,
    #[serde(default = "default_strict")]
    pub eps_strict: f64,
    #[serde(default = "default_loose")]
    pub eps_loose: f64,
    #[serde(default = "default_strict")]
    pub velocity_variance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionSection {
    pub memory: bool,
}

impl Default for FusionSection {
    fn default() -> Self {
        FusionSection { memory: true }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub lambda_a: Vec<f64>,
    /// Indices `i` rotating the last IOVP target by `rot_y((i - 6)π/6)`.
    pub targets: Vec<i32>,
}

fn rotation_of(what: &str, psi: Option<[f64; 3]>, rotation: Option<&Vec<f64>>) -> Result<Rotation> {
    match (psi, rotation) {
        (Some(p), None) => Ok(exp_map(&Vector3::from(p))),
        (None, Some(r)) => {
            Rotation::from_row_slice(r).map_err(|e| Error::Config(format!("{what}: {e}")))
        }
        _ => Err(Error::Config(format!(
            "{what}: give exactly one of psi or rotation"
        ))),
    }
}

impl RunConfig {
    /// Parses and validates.
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| toml_error(path, text, e))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&read_text(path)?, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Cross-field checks, run before any computation.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        match (self.demos.paths.is_empty(), &self.demos.synthetic) {
            (false, Some(_)) => {
                return Err(Error::Config(
                    "demos: give paths or synthetic, not both".into(),
                ))
            }
            (true, None) => {
                return Err(Error::Config("demos: no demonstrations configured".into()))
            }
            (true, Some(s)) => {
                s.profile.parse::<DemoProfile>()?;
            }
            _ => {}
        }
        if self.aux.policy == AuxPolicy::Explicit {
            let m = self
                .aux
                .matrix
                .as_ref()
                .ok_or_else(|| Error::Config("aux: explicit policy needs matrix".into()))?;
            Rotation::from_row_slice(m).map_err(|e| Error::Config(format!("aux.matrix: {e}")))?;
        }
        if self.aux.policy == AuxPolicy::PerIovp && self.iovps.is_empty() {
            return Err(Error::Config(
                "aux: per-iovp policy needs at least one [[iovp]]".into(),
            ));
        }
        if self.gmm.components == 0 {
            return Err(Error::Config("gmm.components must be at least 1".into()));
        }
        self.kernel_config().validate()?;
        if !(self.adapt.delta_t > 0.0) || self.adapt.grid < 2 || self.adapt.reference_points < 2 {
            return Err(Error::Config(
                "adapt: need delta_t > 0, grid >= 2, reference_points >= 2".into(),
            ));
        }
        self.vias()?;
        let iovps = self.iovps()?;
        WeightCurveSet::from_iovps(&iovps)?;
        if self
            .sweep
            .lambda_a
            .iter()
            .any(|l| !(*l > 0.0 && l.is_finite()))
        {
            return Err(Error::Config(
                "sweep.lambda_a entries must be positive".into(),
            ));
        }
        if !self.sweep.targets.is_empty() && self.iovps.is_empty() {
            return Err(Error::Config(
                "sweep.targets needs at least one [[iovp]]".into(),
            ));
        }
        Ok(())
    }

    pub fn kernel_config(&self) -> KernelConfig {
        KernelConfig {
            l: self.kernel.l,
            lambda: self.kernel.lambda,
            lambda_a: self.kernel.lambda_a,
        }
    }

    pub fn learn_options(&self) -> LearnOptions {
        let g = &self.gmm;
        LearnOptions {
            gmm: GmmOptions {
                components: g.components,
                seed: g.seed,
                max_iterations: g.max_iterations,
                tolerance: g.tolerance,
                covariance_floor: g.covariance_floor,
            },
            reference_points: self.adapt.reference_points,
        }
    }

    pub fn adapt_options(&self) -> AdaptOptions {
        AdaptOptions {
            kernel: self.kernel_config(),
            delta_t: self.adapt.delta_t,
            grid: self.adapt.grid,
        }
    }

    pub fn vias(&self) -> Result<Vec<ViaPointSpec>> {
        self.vias
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let what = format!("via {}", i + 1);
                let rotation = rotation_of(&what, v.psi, v.rotation.as_ref())?;
                if v.orientation_variance
                    .iter()
                    .chain(&v.velocity_variance)
                    .any(|s| !(*s > 0.0))
                {
                    return Err(Error::Config(format!("{what}: variances must be positive")));
                }
                Ok(ViaPointSpec::with_variances(
                    v.t,
                    rotation,
                    Vector3::from(v.omega),
                    v.orientation_variance,
                    v.velocity_variance,
                ))
            })
            .collect()
    }

    pub fn iovps(&self) -> Result<Vec<IovpSpec>> {
        self.iovps
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let what = format!("iovp {}", i + 1);
                let rotation = rotation_of(&what, v.psi, v.rotation.as_ref())?;
                let relaxed: RelaxedAxis = v
                    .relaxed
                    .parse()
                    .map_err(|e| Error::Config(format!("{what}: {e}")))?;
                if !(v.eps_strict > 0.0
                    && v.eps_loose > 0.0
                    && v.velocity_variance > 0.0
                    && v.delta_t > 0.0)
                {
                    return Err(Error::Config(format!(
                        "{what}: variances and delta_t must be positive"
                    )));
                }
                Ok(IovpSpec {
                    eps_strict: v.eps_strict,
                    eps_loose: v.eps_loose,
                    velocity_variance: v.velocity_variance,
                    delta_t: v.delta_t,
                    ..IovpSpec::new(v.t, rotation, Vector3::from(v.omega), relaxed)
                })
            })
            .collect()
    }

    pub fn load_demos(&self) -> Result<Vec<Demonstration>> {
        if let Some(s) = &self.demos.synthetic {
            return generate_demos(&SynthOptions {
                profile: s.profile.parse()?,
                count: s.count,
                seed: s.seed,
                duration: s.duration,
                dt: s.dt,
            });
        }
        let paths: Vec<PathBuf> = self
            .demos
            .paths
            .iter()
            .map(|p| resolve(&self.base_dir, p))
            .collect();
        let opts = DemoLoadOptions {
            quaternion: self.demos.quaternion,
            orthonormalize: self.demos.orthonormalize,
        };
        load_demos(&paths, opts)
    }

    /// Auxiliary frame for single-chart learning.
    pub fn aux_frame(&self, demos: &[Demonstration]) -> Result<Rotation> {
        match self.aux.policy {
            AuxPolicy::FirstDemoStart => demos
                .first()
                .map(|d| d.rotations()[0])
                .ok_or_else(|| Error::InvalidInput("no demonstrations".into())),
            AuxPolicy::Explicit => rotation_of("aux", None, self.aux.matrix.as_ref()),
            AuxPolicy::PerIovp => Ok(self.iovps()?[0].rotation),
        }
    }
}
