//! Seeded synthetic demonstrations.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};

use crate::error::{Error, Result};
use crate::gmm::{linspace, Demonstration};
use crate::so3::{exp_map, Rotation};

/// World-chart anchors of the multi-start profile.
pub const S61_START: [f64; 3] = [1.2614, 1.0512, 1.5767];
pub const S61_MIDDLE: [f64; 3] = [1.60, 1.00, 2.00];
pub const S61_GOAL: [f64; 3] = [0.9137, 1.3705, 0.9137];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DemoProfile {
    /// Distinct starts, a bulge through a shared middle, a common goal.
    S61Like,
    /// Rotation about the x axis only.
    SingleAxis,
    /// Smooth geodesic segments between random rotations.
    RandomGeodesic,
}

impl FromStr for DemoProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "s61-like" => Ok(DemoProfile::S61Like),
            "single-axis" => Ok(DemoProfile::SingleAxis),
            "random-geodesic" => Ok(DemoProfile::RandomGeodesic),
            other => Err(Error::Config(format!(
                "unknown profile {other:?} (expected s61-like, single-axis or random-geodesic)"
            ))),
        }
    }
}

impl fmt::Display for DemoProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DemoProfile::S61Like => "s61-like",
            DemoProfile::SingleAxis => "single-axis",
            DemoProfile::RandomGeodesic => "random-geodesic",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthOptions {
    pub profile: DemoProfile,
    pub count: usize,
    pub seed: u64,
    pub duration: f64,
    pub dt: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            profile: DemoProfile::S61Like,
            count: 5,
            seed: 7,
            duration: 10.0,
            dt: 0.02,
        }
    }
}

// Minimum-jerk blend: 0 → 1 with zero end velocity and acceleration.
fn blend(tau: f64) -> f64 {
    tau * tau * tau * (10.0 - 15.0 * tau + 6.0 * tau * tau)
}

fn jitter(rng: &mut ChaCha8Rng, amplitude: f64) -> Vector3<f64> {
    Vector3::from_fn(|_, _| rng.random_range(-amplitude..=amplitude))
}

pub fn generate_demos(opts: &SynthOptions) -> Result<Vec<Demonstration>> {
    if opts.count == 0 {
        return Err(Error::Config("demo count must be at least 1".into()));
    }
    if !(opts.dt > 0.0 && opts.duration >= opts.dt) {
        return Err(Error::Config(format!(
            "need 0 < dt <= duration, got dt = {} and duration = {}",
            opts.dt, opts.duration
        )));
    }
    let steps = (opts.duration / opts.dt).round() as usize;
    let times = linspace(0.0, steps as f64 * opts.dt, steps + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    (0..opts.count)
        .map(|_| {
            let rotations: Vec<Rotation> = match opts.profile {
                DemoProfile::S61Like => {
                    let start = Vector3::from(S61_START) + jitter(&mut rng, 0.08);
                    let goal = Vector3::from(S61_GOAL) + jitter(&mut rng, 0.03);
                    let middle = Vector3::from(S61_MIDDLE) + jitter(&mut rng, 0.15);
                    let bulge = middle - (start + goal) * 0.5;
                    times
                        .iter()
                        .map(|t| {
                            let tau = t / times[steps];
                            let s = (PI * tau).sin();
                            exp_map(&(start + (goal - start) * blend(tau) + bulge * (s * s)))
                        })
                        .collect()
                }
                DemoProfile::SingleAxis => {
                    let a = rng.random_range(-0.5..0.5);
                    let b = rng.random_range(1.0..2.0);
                    times
                        .iter()
                        .map(|t| {
                            exp_map(&Vector3::new(
                                a + (b - a) * blend(t / times[steps]),
                                0.0,
                                0.0,
                            ))
                        })
                        .collect()
                }
                DemoProfile::RandomGeodesic => {
                    let axis: [f64; 3] = UnitSphere.sample(&mut rng);
                    let base = exp_map(&(Vector3::from(axis) * rng.random_range(0.0..PI)));
                    let dir: [f64; 3] = UnitSphere.sample(&mut rng);
                    let sweep = Vector3::from(dir) * rng.random_range(0.5..2.0);
                    times
                        .iter()
                        .map(|t| base.compose(&exp_map(&(sweep * blend(t / times[steps])))))
                        .collect()
                }
            };
            Demonstration::new(times.clone(), rotations)
        })
        .collect()
}
