//! Browser bindings for three small interactive views of the library.
//!
//! Every export returns a flat `Float64Array`; the row layout is documented on
//! the function. The `*_rows` functions hold the logic and are usable natively.

use wasm_bindgen::prelude::*;

use orilearn::experiments::{LOOSE, STRICT};
use orilearn::fusion::{WeightCurve, WeightCurveSet};
use orilearn::gmm::linspace;
use orilearn::kmp::ViaPointSpec;
use orilearn::pipeline::{adapt_on, learn_skill, AdaptOptions, LearnOptions};
use orilearn::rotavg::{init_fusion_state, weighted_average_stateless, WeightedPair};
use orilearn::so3::{rot_x, Rotation};
use orilearn::synth::{generate_demos, DemoProfile, SynthOptions};
use orilearn::Result;

/// Signed rotation angle about x, in (−π, π].
pub fn angle_x(r: &Rotation) -> f64 {
    let m = r.matrix();
    m[(2, 1)].atan2(m[(1, 1)])
}

/// Averages the identity (weight `wi`) with `rot_x(a)` (weight `1 − wi`) while
/// `a` sweeps `0..turns·2π`. Rows: `[a, memory angle, stateless angle, n_turns]`.
pub fn half_turn_rows(wi: f64, turns: f64, steps: usize) -> Vec<f64> {
    let id = Rotation::identity();
    let mut state = init_fusion_state(&id, &id);
    let mut out = Vec::with_capacity(4 * steps);
    for a in linspace(0.0, turns * 2.0 * std::f64::consts::PI, steps) {
        let pair = WeightedPair::new(id, wi, rot_x(a), 1.0 - wi);
        let memory = state.average(&pair);
        let stateless = weighted_average_stateless(&pair);
        out.extend([
            a,
            angle_x(&memory),
            angle_x(&stateless),
            state.n_turns as f64,
        ]);
    }
    out
}

/// Weight curves for IOVPs at `centers`. Rows: `[t, W0, W1, .., WK]`.
pub fn weight_rows(
    centers: &[f64],
    delta_t: f64,
    t0: f64,
    t1: f64,
    steps: usize,
) -> Result<Vec<f64>> {
    let set = WeightCurveSet::new(
        centers
            .iter()
            .map(|&center| WeightCurve { center, delta_t })
            .collect(),
    )?;
    Ok(linspace(t0, t1, steps)
        .into_iter()
        .flat_map(|t| std::iter::once(t).chain(set.weights(t)))
        .collect())
}

/// Learns from synthetic single-axis demonstrations and passes through
/// `rot_x(angle)` at `via_t`. Rows: `[t, reproduced, adapted, demo_0, ..]`,
/// all as angles about x.
pub fn adaptation_rows(
    demos: usize,
    seed: u64,
    via_t: f64,
    angle: f64,
    lambda_a: f64,
) -> Result<Vec<f64>> {
    let demos = generate_demos(&SynthOptions {
        profile: DemoProfile::SingleAxis,
        count: demos,
        seed,
        ..SynthOptions::default()
    })?;
    let skill = learn_skill(&demos, &demos[0].rotations()[0], &LearnOptions::default())?;
    let mut opts = AdaptOptions::default();
    if lambda_a > 0.0 {
        opts.kernel = opts.kernel.with_acceleration(lambda_a);
    }
    let times = demos[0].times();
    let plain = adapt_on(&skill, &[], &opts, times)?.samples;
    let via = ViaPointSpec::with_variances(via_t, rot_x(angle), Default::default(), STRICT, LOOSE);
    let adapted = adapt_on(&skill, &[via], &opts, times)?.samples;
    let mut out = Vec::new();
    for (i, t) in times.iter().enumerate() {
        out.extend([
            *t,
            angle_x(&plain[i].rotation),
            angle_x(&adapted[i].rotation),
        ]);
        out.extend(demos.iter().map(|d| angle_x(&d.rotations()[i])));
    }
    Ok(out)
}

fn js(e: orilearn::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub fn half_turn_sweep(wi: f64, turns: f64, steps: usize) -> Vec<f64> {
    half_turn_rows(wi, turns, steps)
}

#[wasm_bindgen]
pub fn weight_curves(
    centers: Vec<f64>,
    delta_t: f64,
    t0: f64,
    t1: f64,
    steps: usize,
) -> std::result::Result<Vec<f64>, JsError> {
    weight_rows(&centers, delta_t, t0, t1, steps).map_err(js)
}

#[wasm_bindgen]
pub fn adaptation_demo(
    demos: usize,
    seed: u32,
    via_t: f64,
    angle: f64,
    lambda_a: f64,
) -> std::result::Result<Vec<f64>, JsError> {
    adaptation_rows(demos, seed.into(), via_t, angle, lambda_a).map_err(js)
}
