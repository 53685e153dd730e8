use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use orilearn::experiments::{lambda_trial, via_errors, Comparison};
use orilearn::fusion::{
    acceleration_cost, build_component_trajectories, continuity, crosses_ball_boundary, fuse,
    strict_axis_error, FusionOptions, IovpSpec, WeightCurveSet,
};
use orilearn::gmm::{linspace, Demonstration};
use orilearn::io::config::AuxPolicy;
use orilearn::io::{write_demo, write_trajectory, Metrics, RunConfig, StoredMixture, Table};
use orilearn::kmp::{OrientationSample, ViaPointSpec};
use orilearn::pipeline::{adapt_on, learn_skill, AdaptOptions, Skill};
use orilearn::so3::{rot_y, Rotation};
use orilearn::synth::{generate_demos, SynthOptions};
use orilearn::{Error, Result};

#[derive(Parser)]
#[command(
    name = "orilearn",
    version,
    about = "Learn, adapt and fuse orientation trajectories on SO(3)"
)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, env = "ORILEARN_CONFIG")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = "ORILEARN_OUT", default_value = "out")]
    out: PathBuf,
    /// Overrides the GMM seed (or the generator seed for gen-demos).
    #[arg(long, global = true, env = "ORILEARN_SEED")]
    seed: Option<u64>,
    /// Fuse with the stateless rotation average (diagnostic).
    #[arg(long, global = true, env = "ORILEARN_NO_MEMORY")]
    no_memory: bool,
    /// Overrides the number of output samples.
    #[arg(long, global = true, env = "ORILEARN_GRID")]
    grid: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic demonstrations.
    GenDemos {
        /// s61-like, single-axis or random-geodesic.
        #[arg(long, default_value = "s61-like")]
        profile: String,
        #[arg(long, default_value_t = 5)]
        count: usize,
        #[arg(long, default_value_t = 10.0)]
        duration: f64,
        #[arg(long, default_value_t = 0.02)]
        dt: f64,
    },
    /// Fit the mixture and write the model and reference trajectory.
    Learn,
    /// Adapt to the configured via-points.
    Adapt,
    /// Fuse the per-IOVP trajectories with the baseline.
    Fuse,
    /// IOVP-versus-strict comparison over `sweep.targets`.
    Eval,
    /// Acceleration-weight sweep over `sweep.lambda_a`.
    Sweep,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidInput(_) => 2,
        Error::Parse { .. } | Error::InvalidRow { .. } | Error::InconsistentTiming(_) => 3,
        Error::NotARotation { .. }
        | Error::SeriesTooShort { .. }
        | Error::DegenerateData(_)
        | Error::FactorizationFailure { .. } => 4,
        Error::DomainOverlap(_) => 5,
        Error::Io { .. } => 6,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &cli.config {
                Some(p) => eprintln!("error: {}: {e}", p.display()),
                None => eprintln!("error: {e}"),
            }
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    if let Command::GenDemos {
        profile,
        count,
        duration,
        dt,
    } = &cli.command
    {
        return gen_demos(cli, profile, *count, *duration, *dt);
    }
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.gmm.seed = seed;
    }
    if let Some(grid) = cli.grid {
        cfg.adapt.grid = grid;
    }
    if cli.no_memory {
        cfg.fusion.memory = false;
    }
    cfg.validate()?;
    let demos = cfg.load_demos()?;
    match cli.command {
        Command::GenDemos { .. } => unreachable!(),
        Command::Learn => learn(cli, &cfg, &demos),
        Command::Adapt => adapt(cli, &cfg, &demos),
        Command::Fuse => fuse_cmd(cli, &cfg, &demos),
        Command::Eval => eval(cli, &cfg, &demos),
        Command::Sweep => sweep(cli, &cfg, &demos),
    }
}

fn wrote(path: &Path) {
    println!("wrote {}", path.display());
}

fn gen_demos(cli: &Cli, profile: &str, count: usize, duration: f64, dt: f64) -> Result<()> {
    let opts = SynthOptions {
        profile: profile.parse()?,
        count,
        seed: cli.seed.unwrap_or(SynthOptions::default().seed),
        duration,
        dt,
    };
    for (i, d) in generate_demos(&opts)?.iter().enumerate() {
        let p = cli.out.join(format!("demo_{i:03}.csv"));
        write_demo(&p, d)?;
        wrote(&p);
    }
    Ok(())
}

fn span(demos: &[Demonstration]) -> (f64, f64) {
    let t = demos[0].times();
    (t[0], t[t.len() - 1])
}

fn grid(cfg: &RunConfig, demos: &[Demonstration]) -> Vec<f64> {
    let (t0, t1) = span(demos);
    linspace(t0, t1, cfg.adapt.grid)
}

/// `[[via]]` entries followed by every IOVP as a via-point.
fn all_vias(cfg: &RunConfig) -> Result<(Vec<ViaPointSpec>, Vec<IovpSpec>)> {
    let iovps = cfg.iovps()?;
    let mut vias = cfg.vias()?;
    vias.extend(iovps.iter().map(IovpSpec::via_point));
    vias.sort_by(|a, b| a.t.total_cmp(&b.t));
    Ok((vias, iovps))
}

fn learn(cli: &Cli, cfg: &RunConfig, demos: &[Demonstration]) -> Result<()> {
    let skill = learn_skill(demos, &cfg.aux_frame(demos)?, &cfg.learn_options())?;
    let stored = StoredMixture {
        aux: skill.aux,
        t_start: skill.t_start,
        t_end: skill.t_end,
        mixture: skill.mixture.clone(),
    };
    let p = cli.out.join("model.toml");
    stored.write(&p)?;
    wrote(&p);

    let mut columns = vec!["t".to_string()];
    let dim = skill.reference.points.first().map_or(0, |p| p.mean.len());
    columns.extend((0..dim).map(|i| format!("mu{i}")));
    columns.extend((0..dim).map(|i| format!("var{i}")));
    let mut table = Table::new(columns);
    for r in &skill.reference.points {
        let mut row = vec![r.t];
        row.extend(r.mean.iter());
        row.extend(r.covariance.diagonal().iter());
        table.rows.push(row);
    }
    let p = cli.out.join("reference.csv");
    table.write(&p)?;
    wrote(&p);

    let mut ll = Table::new(vec!["iteration".into(), "mean_log_likelihood".into()]);
    ll.rows = skill
        .log_likelihood
        .iter()
        .enumerate()
        .map(|(i, v)| vec![i as f64, *v])
        .collect();
    let p = cli.out.join("loglik.csv");
    ll.write(&p)?;
    wrote(&p);
    println!(
        "{} components, {} EM iterations, final mean log-likelihood {:.6}",
        skill.mixture.components().len(),
        skill.log_likelihood.len(),
        skill.log_likelihood.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn via_metrics(
    metrics: &mut Metrics,
    skill: &Skill,
    vias: &[ViaPointSpec],
    cfg: &RunConfig,
) -> Result<()> {
    for (k, (geo, omega)) in via_errors(skill, vias, &cfg.adapt_options())?
        .into_iter()
        .enumerate()
    {
        metrics.push(format!("via_{}_geodesic_error", k + 1), geo);
        metrics.push(format!("via_{}_omega_error", k + 1), omega);
    }
    Ok(())
}

fn iovp_errors(metrics: &mut Metrics, samples: &[OrientationSample], iovps: &[IovpSpec]) {
    for (k, v) in iovps.iter().enumerate() {
        if let Some(s) = samples
            .iter()
            .min_by(|a, b| (a.t - v.t).abs().total_cmp(&(b.t - v.t).abs()))
        {
            metrics.push(
                format!("iovp_{}_strict_axis_error", k + 1),
                strict_axis_error(&s.rotation, &v.rotation, v.relaxed),
            );
        }
    }
}

fn adapt(cli: &Cli, cfg: &RunConfig, demos: &[Demonstration]) -> Result<()> {
    let (vias, iovps) = all_vias(cfg)?;
    let skill = learn_skill(demos, &cfg.aux_frame(demos)?, &cfg.learn_options())?;
    let samples = adapt_on(&skill, &vias, &cfg.adapt_options(), &grid(cfg, demos))?.samples;
    let p = cli.out.join("trajectory.csv");
    write_trajectory(&p, &samples, &[])?;
    wrote(&p);

    let mut metrics = Metrics::default();
    metrics.push("c_wd", acceleration_cost(&samples)?);
    via_metrics(&mut metrics, &skill, &vias, cfg)?;
    iovp_errors(&mut metrics, &samples, &iovps);
    let p = cli.out.join("metrics.csv");
    metrics.write(&p)?;
    wrote(&p);
    println!("c_wd {:.6}", metrics.get("c_wd").unwrap_or(f64::NAN));
    Ok(())
}

/// Chart of the baseline component; per-IOVP configs use the first demo start.
fn baseline_aux(cfg: &RunConfig, demos: &[Demonstration]) -> Result<Rotation> {
    match cfg.aux.policy {
        AuxPolicy::PerIovp => Ok(demos[0].rotations()[0]),
        _ => cfg.aux_frame(demos),
    }
}

fn fusion_options(cfg: &RunConfig) -> FusionOptions {
    FusionOptions {
        learn: cfg.learn_options(),
        adapt: cfg.adapt_options(),
    }
}

fn fuse_cmd(cli: &Cli, cfg: &RunConfig, demos: &[Demonstration]) -> Result<()> {
    let iovps = cfg.iovps()?;
    let times = grid(cfg, demos);
    let comps = build_component_trajectories(
        demos,
        &baseline_aux(cfg, demos)?,
        &cfg.vias()?,
        &iovps,
        &fusion_options(cfg),
        &times,
    )?;
    let weights = WeightCurveSet::from_iovps(&iovps)?;
    let fused = fuse(&comps.trajectories, &weights, cfg.fusion.memory)?;

    for (k, c) in comps.trajectories.iter().enumerate() {
        let p = cli.out.join(format!("component_{k}.csv"));
        write_trajectory(&p, c, &[])?;
        wrote(&p);
    }
    let p = cli.out.join("fused.csv");
    write_trajectory(&p, &fused.samples, &fused.weights)?;
    wrote(&p);

    let stats = continuity(&fused.samples);
    let mut metrics = Metrics::default();
    metrics.push("c_wd", acceleration_cost(&fused.samples)?);
    iovp_errors(&mut metrics, &fused.samples, &iovps);
    metrics.push("continuity_max_step", stats.max_step);
    metrics.push("continuity_median_step", stats.median_step);
    metrics.push("continuity_ratio", stats.ratio());
    metrics.push(
        "boundary_crossing",
        if crosses_ball_boundary(&fused.samples) {
            1.0
        } else {
            0.0
        },
    );
    for (k, n) in fused.n_turns.iter().enumerate() {
        metrics.push(format!("fold_{}_final_turns", k + 1), *n as f64);
    }
    let p = cli.out.join("metrics.csv");
    metrics.write(&p)?;
    wrote(&p);
    println!(
        "c_wd {:.6}, continuity ratio {:.3}, memory {}",
        metrics.get("c_wd").unwrap_or(f64::NAN),
        stats.ratio(),
        cfg.fusion.memory
    );
    Ok(())
}

fn eval(cli: &Cli, cfg: &RunConfig, demos: &[Demonstration]) -> Result<()> {
    let iovps = cfg.iovps()?;
    let k = iovps.len();
    let mut columns = vec![
        "index".to_string(),
        "iovp_c_wd".into(),
        "strict_c_wd".into(),
    ];
    columns.extend((1..=k).map(|i| format!("iovp_error_{i}")));
    columns.extend((1..=k).map(|i| format!("strict_error_{i}")));
    columns.extend([
        "iovp_continuity_ratio".to_string(),
        "strict_continuity_ratio".into(),
    ]);
    let mut table = Table::new(columns);

    if !cfg.sweep.targets.is_empty() {
        let cmp = Comparison::new(
            demos,
            &baseline_aux(cfg, demos)?,
            &cfg.vias()?,
            &iovps,
            &fusion_options(cfg),
            &grid(cfg, demos),
        )?;
        // Target i turns the last configured IOVP by (i − 6)π/6 about its own y axis.
        let base = iovps[k - 1].rotation;
        let rows = cfg
            .sweep
            .targets
            .par_iter()
            .map(|&i| {
                cmp.trial(
                    i,
                    base.compose(&rot_y((i - 6) as f64 * PI / 6.0)),
                    cfg.fusion.memory,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        for r in rows {
            let mut row = vec![r.index as f64, r.iovp.cost, r.strict.cost];
            row.extend(&r.iovp.strict_axis_errors);
            row.extend(&r.strict.strict_axis_errors);
            row.extend([r.iovp.continuity.ratio(), r.strict.continuity.ratio()]);
            println!(
                "target {:3}: c_wd IOVP {:.6} strict {:.6}",
                r.index, r.iovp.cost, r.strict.cost
            );
            table.rows.push(row);
        }
    }
    let p = cli.out.join("comparison.csv");
    table.write(&p)?;
    wrote(&p);
    Ok(())
}

fn sweep(cli: &Cli, cfg: &RunConfig, demos: &[Demonstration]) -> Result<()> {
    let (vias, iovps) = all_vias(cfg)?;
    let mut columns = vec!["lambda_a".to_string(), "c_wd".into()];
    columns.extend((1..=vias.len()).flat_map(|i| {
        [
            format!("via_{i}_geodesic_error"),
            format!("via_{i}_omega_error"),
        ]
    }));
    columns.extend((1..=iovps.len()).map(|i| format!("iovp_{i}_strict_axis_error")));
    let mut table = Table::new(columns);

    if !cfg.sweep.lambda_a.is_empty() {
        let skill = learn_skill(demos, &cfg.aux_frame(demos)?, &cfg.learn_options())?;
        let times = grid(cfg, demos);
        let opts = cfg.adapt_options();
        let rows = cfg
            .sweep
            .lambda_a
            .par_iter()
            .map(|&l| {
                let trial = lambda_trial(&skill, &vias, &opts, l, &times)?;
                let lopts = AdaptOptions {
                    kernel: opts.kernel.with_acceleration(l),
                    ..opts
                };
                let mut row = vec![l, trial.cost];
                row.extend(
                    via_errors(&skill, &vias, &lopts)?
                        .into_iter()
                        .flat_map(|(g, o)| [g, o]),
                );
                let mut metrics = Metrics::default();
                iovp_errors(&mut metrics, &trial.samples, &iovps);
                row.extend(metrics.entries.iter().map(|(_, v)| *v));
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()?;
        for row in rows {
            println!("lambda_a {:>10}: c_wd {:.6}", row[0], row[1]);
            table.rows.push(row);
        }
    }
    let p = cli.out.join("sweep.csv");
    table.write(&p)?;
    wrote(&p);
    Ok(())
}
