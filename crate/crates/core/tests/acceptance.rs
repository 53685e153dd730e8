//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};

use orilearn::experiments::{
    acceleration_sweep_vias, eval_grid, multi_iovp_baseline, multi_iovps, no_memory_target,
    single_iovp_rotation, single_iovp_vias, start_rotation, sweep_target, task_vias, Comparison,
    Task, LAMBDA_A_SWEEP, SINGLE_IOVP_TIME,
};
use orilearn::fusion::{
    acceleration_cost, build_component_trajectories, continuity, crosses_ball_boundary, fuse,
    strict_axis_error, FusionOptions, RelaxedAxis, WeightCurveSet,
};
use orilearn::gmm::{
    fit_gmm, gmr_condition, linspace, project_demonstrations, stack_rows, Demonstration,
    GmmOptions, ReferencePoint,
};
use orilearn::kmp::{build_model_with, ExtendedReference, Kernel, KernelConfig};
use orilearn::pipeline::{adapt_on, learn_skill, AdaptOptions, LearnOptions};
use orilearn::rotavg::{init_fusion_state, weighted_average_memory, WeightedPair};
use orilearn::so3::{exp_map, log_map, on_negative_half_sphere, rot_x, Rotation};
use orilearn::synth::{generate_demos, SynthOptions};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn demos() -> Vec<Demonstration> {
    generate_demos(&SynthOptions::default()).expect("synthetic demos")
}

fn geometry() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..100_000 {
        let u: [f64; 3] = UnitSphere.sample(&mut rng);
        let v = Vector3::from(u) * rng.random_range(0.0..=PI - 1e-6);
        worst = worst.max((log_map(&exp_map(&v)).into_vector() - v).norm());
    }
    let mut bad_sign = 0;
    let mut worst_pi: f64 = 0.0;
    for i in 0..1000 {
        // Include the axis-aligned tie cases.
        let u = match i {
            0 => Vector3::new(-1.0, 0.0, 0.0),
            1 => Vector3::new(0.0, -1.0, 0.0),
            2 => Vector3::new(0.0, 0.0, -1.0),
            3 => Vector3::new(0.0, -1.0, -1.0).normalize(),
            _ => Vector3::from(UnitSphere.sample(&mut rng)),
        };
        let r =
            Rotation::from_matrix(u * u.transpose() * 2.0 - nalgebra::Matrix3::identity()).unwrap();
        let v = log_map(&r).into_vector();
        if on_negative_half_sphere(&v) {
            bad_sign += 1;
        }
        worst_pi = worst_pi
            .max((v.norm() - PI).abs())
            .max((v - u * PI).norm().min((v + u * PI).norm()));
    }
    let elapsed = start.elapsed();
    check(
        worst < 1e-9 && bad_sign == 0 && worst_pi < 1e-9 && elapsed < Duration::from_secs(5),
        format!("roundtrip max {worst:.2e} (< 1e-9), angle-pi sign violations {bad_sign}, angle-pi error {worst_pi:.2e}, {elapsed:.2?} (< 5 s)"),
    )
}

/// Gaussian features of fixed centres, used as an explicit basis.
struct FeatureKernel {
    centers: Vec<f64>,
    width: f64,
}

impl FeatureKernel {
    fn features(&self, t: f64) -> [DVector<f64>; 3] {
        let w2 = self.width * self.width;
        let n = self.centers.len();
        let mut out = [DVector::zeros(n), DVector::zeros(n), DVector::zeros(n)];
        for (j, c) in self.centers.iter().enumerate() {
            let r = t - c;
            let g = (-r * r / (2.0 * w2)).exp();
            out[0][j] = g;
            out[1][j] = -r / w2 * g;
            out[2][j] = (r * r / (w2 * w2) - 1.0 / w2) * g;
        }
        out
    }

    fn theta(&self, t: f64, dim: usize) -> DMatrix<f64> {
        let f = self.features(t);
        let n = self.centers.len();
        let mut th = DMatrix::zeros(n * dim, 2 * dim);
        for p in 0..2 {
            for j in 0..n {
                for d in 0..dim {
                    th[(j * dim + d, p * dim + d)] = f[p][j];
                }
            }
        }
        th
    }
}

impl Kernel for FeatureKernel {
    fn derivative_block(&self, a: f64, b: f64, order: usize) -> [[f64; 3]; 3] {
        let (fa, fb) = (self.features(a), self.features(b));
        let mut out = [[0.0; 3]; 3];
        for p in 0..order {
            for q in 0..order {
                out[p][q] = fa[p].dot(&fb[q]);
            }
        }
        out
    }
}

fn kernel_trick() -> Outcome {
    let start = Instant::now();
    let dim = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let kernel = FeatureKernel {
        centers: linspace(-1.0, 11.0, 40),
        width: 0.6,
    };
    let points: Vec<ReferencePoint> = linspace(0.0, 10.0, 30)
        .into_iter()
        .map(|t| {
            let a = DMatrix::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0));
            ReferencePoint {
                t,
                mean: DVector::from_fn(6, |i, _| (0.3 * t + i as f64).sin()),
                covariance: (&a * a.transpose() + DMatrix::identity(6, 6)) * 0.05,
            }
        })
        .collect();
    let lambda = 0.7;
    let nb = kernel.centers.len() * dim;
    let mut lhs = DMatrix::<f64>::identity(nb, nb) * lambda;
    let mut rhs = DVector::<f64>::zeros(nb);
    for p in &points {
        let th = kernel.theta(p.t, dim);
        let inv = p.covariance.clone().try_inverse().unwrap();
        lhs += &th * &inv * th.transpose();
        rhs += &th * &inv * &p.mean;
    }
    let w = lhs.lu().solve(&rhs).unwrap();
    let expected: Vec<DVector<f64>> = linspace(-0.5, 10.5, 100)
        .iter()
        .map(|t| kernel.theta(*t, dim).transpose() * &w)
        .collect();
    let model = build_model_with(&ExtendedReference { dim, points }, lambda, kernel).unwrap();
    let worst = linspace(-0.5, 10.5, 100)
        .iter()
        .zip(&expected)
        .map(|(t, e)| (model.predict(*t) - e).amax())
        .fold(0.0, f64::max);
    let elapsed = start.elapsed();
    check(
        worst < 1e-8 && elapsed < Duration::from_secs(2),
        format!("max deviation {worst:.2e} (< 1e-8) over 100 queries, {elapsed:.2?} (< 2 s)"),
    )
}

fn via_adaptation(demos: &[Demonstration]) -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    for task in [Task::One, Task::Two] {
        let vias = task_vias(task);
        let skill = learn_skill(demos, &vias[0].rotation, &LearnOptions::default()).unwrap();
        let errors =
            orilearn::experiments::via_errors(&skill, &vias, &AdaptOptions::default()).unwrap();
        let geo = errors.iter().map(|e| e.0).fold(0.0, f64::max);
        let vel = errors.iter().map(|e| e.1).fold(0.0, f64::max);
        pass &= geo < 1e-3 && vel < 1e-3;
        lines.push(format!("{task:?}: geodesic {geo:.2e}, omega {vel:.2e}"));
    }
    check(pass, format!("{} (both < 1e-3)", lines.join("; ")))
}

fn acceleration_sweep(demos: &[Demonstration]) -> Outcome {
    let start = Instant::now();
    let vias = acceleration_sweep_vias();
    let skill = learn_skill(demos, &vias[0].rotation, &LearnOptions::default()).unwrap();
    let times = eval_grid(0.0, 10.0);
    let costs: Vec<f64> = LAMBDA_A_SWEEP
        .iter()
        .map(|&l| {
            orilearn::experiments::lambda_trial(&skill, &vias, &AdaptOptions::default(), l, &times)
                .unwrap()
                .cost
        })
        .collect();
    let elapsed = start.elapsed();
    let monotone = costs.windows(2).all(|w| w[1] <= w[0]);
    let drop = costs[4] < 0.5 * costs[0];
    check(
        monotone && drop && elapsed < Duration::from_secs(30),
        format!(
            "c_wd {:?}, non-increasing {monotone}, c(1e5)/c(10) = {:.3} (< 0.5), {elapsed:.2?} (< 30 s)",
            costs.iter().map(|c| format!("{c:.5}")).collect::<Vec<_>>(),
            costs[4] / costs[0]
        ),
    )
}

fn single_iovp(demos: &[Demonstration]) -> Outcome {
    let aux = single_iovp_rotation();
    let skill = learn_skill(demos, &aux, &LearnOptions::default()).unwrap();
    let times = eval_grid(0.0, 10.0);
    let (relaxed, strict) = (single_iovp_vias(true), single_iovp_vias(false));
    let mut worst: f64 = 0.0;
    let mut spins = Vec::new();
    let mut cheaper = 0;
    for &l in &LAMBDA_A_SWEEP {
        let opts = AdaptOptions {
            kernel: KernelConfig::default().with_acceleration(l),
            ..Default::default()
        };
        let a = adapt_on(&skill, &relaxed, &opts, &times).unwrap();
        let b = adapt_on(&skill, &strict, &opts, &times).unwrap();
        let i = (SINGLE_IOVP_TIME / 1e-3).round() as usize;
        worst = worst.max(strict_axis_error(
            &a.samples[i].rotation,
            &aux,
            RelaxedAxis::Z,
        ));
        spins.push(
            log_map(&aux.between(&a.samples[i].rotation))
                .into_vector()
                .z,
        );
        if acceleration_cost(&a.samples).unwrap() <= acceleration_cost(&b.samples).unwrap() {
            cheaper += 1;
        }
    }
    let spread = spins.iter().cloned().fold(f64::MIN, f64::max)
        - spins.iter().cloned().fold(f64::MAX, f64::min);
    check(
        worst < 1e-2 && spread > 0.1 && cheaper == LAMBDA_A_SWEEP.len(),
        format!("z-axis error max {worst:.2e} (< 1e-2), rotation about z spread {spread:.3} (> 0.1), IOVP cost <= strict in {cheaper}/5"),
    )
}

fn multi_iovp(demos: &[Demonstration]) -> Outcome {
    let times = eval_grid(0.0, 10.0);
    let iovps = multi_iovps(sweep_target(6));
    let comps = build_component_trajectories(
        demos,
        &start_rotation(),
        &[multi_iovp_baseline()],
        &iovps,
        &FusionOptions::default(),
        &times,
    )
    .unwrap();
    let weights = WeightCurveSet::from_iovps(&iovps).unwrap();
    let fused = fuse(&comps.trajectories, &weights, true).unwrap();
    let stats = continuity(&fused.samples);
    let crossing = crosses_ball_boundary(&fused.samples);
    let errors: Vec<f64> = iovps
        .iter()
        .map(|v| {
            let i = (v.t / 1e-3).round() as usize;
            strict_axis_error(&fused.samples[i].rotation, &v.rotation, v.relaxed)
        })
        .collect();
    let partition = fused
        .weights
        .iter()
        .map(|w| (w.iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    check(
        stats.ratio() <= 10.0 && crossing && errors.iter().all(|e| *e < 1e-2) && partition <= 1e-12,
        format!(
            "max/median step {:.2} (<= 10), boundary crossing {crossing}, strict-axis errors [{}] (< 1e-2), partition error {partition:.1e} (<= 1e-12)",
            stats.ratio(),
            errors.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn memory_ablation(demos: &[Demonstration]) -> Outcome {
    let times = eval_grid(0.0, 10.0);
    let ratio = |target: Rotation, memory: bool| {
        let iovps = multi_iovps(target);
        let comps = build_component_trajectories(
            demos,
            &start_rotation(),
            &[multi_iovp_baseline()],
            &iovps,
            &FusionOptions::default(),
            &times,
        )
        .unwrap();
        let weights = WeightCurveSet::from_iovps(&iovps).unwrap();
        let fused = fuse(&comps.trajectories, &weights, memory).unwrap();
        (
            continuity(&fused.samples).ratio(),
            crosses_ball_boundary(&fused.samples),
        )
    };
    // The boundary-target run of criterion 6, whose output crosses the ball boundary.
    let (with, crossing) = ratio(sweep_target(6), true);
    let (without, _) = ratio(sweep_target(6), false);
    // Reported only: on these demos the rot_y(2π/3) target stays continuous without memory.
    let (alt_with, _) = ratio(no_memory_target(), true);
    let (alt_without, _) = ratio(no_memory_target(), false);

    // Closed sweeps: several turns out and back, and a pass through the pole.
    let mut closed = true;
    for (from, to) in [(0.3, 4.5 * PI), (0.5, -2.5 * PI), (2.0, 0.9 * PI)] {
        let n = 20_000;
        let path: Vec<f64> = linspace(from, to, n)
            .into_iter()
            .chain(linspace(to, from, n))
            .collect();
        let mut state = init_fusion_state(&Rotation::identity(), &rot_x(path[0]));
        let initial = state.n_turns;
        for a in &path {
            let pair = WeightedPair::new(Rotation::identity(), 0.5, rot_x(*a), 0.5);
            state = weighted_average_memory(&pair, state).1;
        }
        closed &= state.n_turns == initial;
    }
    check(
        crossing && without >= 10.0 * with && closed,
        format!(
            "boundary run (crossing {crossing}): continuity ratio without memory {without:.1} vs with {with:.2} (>= 10x); \
             rot_y(2pi/3) target: {alt_without:.1} vs {alt_with:.2}; N_turns round-trips {closed}"
        ),
    )
}

fn iovp_benefit(demos: &[Demonstration]) -> Outcome {
    let start = Instant::now();
    let times = eval_grid(0.0, 10.0);
    let cmp = Comparison::new(
        demos,
        &start_rotation(),
        &[multi_iovp_baseline()],
        &multi_iovps(sweep_target(6)),
        &FusionOptions::default(),
        &times,
    )
    .unwrap();
    let rows: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..12)
            .map(|i| {
                let cmp = &cmp;
                s.spawn(move || cmp.trial(i, sweep_target(i), true).unwrap())
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let wins = rows.iter().filter(|r| r.iovp.cost <= r.strict.cost).count();
    let elapsed = start.elapsed();
    check(
        wins >= 11 && elapsed < Duration::from_secs(120),
        format!(
            "IOVP cost <= strict in {wins}/12 (>= 11), ratios [{}], {elapsed:.2?} (< 2 min)",
            rows.iter()
                .map(|r| format!("{:.2}", r.iovp.cost / r.strict.cost))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    )
}

fn em_gmr(demos: &[Demonstration]) -> Outcome {
    let mut fits = 0;
    let mut monotone = true;
    for (k, seed) in [(1, 1), (2, 2), (3, 3), (5, 7), (6, 11)] {
        for aux in [demos[0].rotations()[0], single_iovp_rotation()] {
            let data = stack_rows(&project_demonstrations(demos, &aux).unwrap());
            let fit = fit_gmm(&data, &GmmOptions::new(k).seed(seed)).unwrap();
            monotone &= fit
                .log_likelihood
                .windows(2)
                .all(|w| w[1] >= w[0] - 1e-12 * w[0].abs().max(1.0));
            fits += 1;
        }
    }

    // K = 1: the conditional of the sample Gaussian, via its precision matrix.
    let data = stack_rows(&project_demonstrations(demos, &demos[0].rotations()[0]).unwrap());
    let fit = fit_gmm(&data, &GmmOptions::new(1)).unwrap();
    let n = data.nrows() as f64;
    let mean = DVector::from_fn(7, |j, _| data.column(j).sum() / n);
    let centered = DMatrix::from_fn(data.nrows(), 7, |i, j| data[(i, j)] - mean[j]);
    let cov = centered.transpose() * &centered / n
        + DMatrix::identity(7, 7) * GmmOptions::new(1).covariance_floor;
    let precision = cov.clone().try_inverse().unwrap();
    let lam_oo = precision.view((1, 1), (6, 6)).into_owned();
    let lam_ot = precision.view((1, 0), (6, 1)).into_owned();
    let cond_cov = lam_oo.clone().try_inverse().unwrap();
    let mut worst: f64 = 0.0;
    for t in linspace(0.0, 10.0, 21) {
        let expected_mean = mean.rows(1, 6) - &cond_cov * &lam_ot * (t - mean[0]);
        let (m, s) = gmr_condition(&fit.mixture, t);
        worst = worst
            .max((m - expected_mean).amax())
            .max((s - &cond_cov).amax());
    }
    check(
        monotone && worst < 1e-10,
        format!("likelihood monotone on {fits} fits: {monotone}; K=1 conditional max deviation {worst:.2e} (< 1e-10)"),
    )
}

fn main() {
    let demos = demos();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("1 geometry", Box::new(geometry)),
        ("2 kernel-trick oracle", Box::new(kernel_trick)),
        (
            "3 via-point adaptation",
            Box::new(|| via_adaptation(&demos)),
        ),
        (
            "4 acceleration sweep",
            Box::new(|| acceleration_sweep(&demos)),
        ),
        ("5 single IOVP", Box::new(|| single_iovp(&demos))),
        ("6 multi-IOVP fusion", Box::new(|| multi_iovp(&demos))),
        ("7 memory ablation", Box::new(|| memory_ablation(&demos))),
        ("8 IOVP benefit sweep", Box::new(|| iovp_benefit(&demos))),
        ("9 EM/GMR", Box::new(|| em_gmr(&demos))),
    ];
    let mut failed = 0;
    for (name, run) in &criteria {
        let outcome = run();
        if !outcome.pass {
            failed += 1;
        }
        println!(
            "{} criterion {name}: {}",
            if outcome.pass { "PASS" } else { "FAIL" },
            outcome.detail
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
