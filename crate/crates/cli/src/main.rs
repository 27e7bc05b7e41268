use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use warmstart::env::{linquad, EnvId, ExpertController};
use warmstart::harness::{
    self, curve_csv, emit_report, load_starting_point, resolve_quality, run_comparison, save_starting_point,
    sweep_expert_steps, sweep_rollout_steps, ActorPretraining, CheckpointInfo, CurvePoint, ExperimentConfig,
    ReportFormat, REPORT_FORMAT_VERSION,
};
use warmstart::math::{extended_step_limit, StepLimitSpec};
use warmstart::metrics::RunMetrics;
use warmstart::par::Exec;
use warmstart::ppo::{finetune, Regime};
use warmstart::pretrain::{collect_expert, rollout_step_limit};

#[derive(Parser)]
#[command(name = "warmstart", version, about = "Actor-critic pretraining for PPO: experiments and utilities")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Experiment config (TOML sections experiment, arch, ppo, pretrain, sweep).
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Overrides experiment.output_dir.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Run every data-parallel loop on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Print an environment's constants.
    Describe { env: String },
    /// Calibrate the expert quality to the configured fraction c.
    Calibrate,
    /// Collect expert demonstrations into a dataset file.
    ExpertCollect {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Defaults to experiment.n_exp.
        #[arg(long)]
        n_exp: Option<u64>,
        #[arg(long)]
        quality: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Behavioral cloning (and, with --critic, critic pretraining) into a checkpoint.
    Pretrain {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        quality: Option<f64>,
        /// Also pretrain the critic on experiment.n_rol rollout steps.
        #[arg(long)]
        critic: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fine-tune one regime with PPO, from a checkpoint or from scratch.
    Finetune {
        #[arg(long)]
        regime: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        quality: Option<f64>,
    },
    /// Run every configured (seed, regime) cell and write the report.
    Compare,
    /// Normalized behavioral-cloning return over experiment data amounts.
    SweepExpert {
        #[arg(long)]
        quality: Option<f64>,
    },
    /// Total steps to target over rollout amounts.
    SweepRollout {
        #[arg(long)]
        quality: Option<f64>,
    },
    /// Extended step limit for a horizon, discount, reward bound and tolerance.
    Steplimit {
        #[arg(long)]
        horizon: usize,
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        r_max: f64,
        #[arg(long)]
        tau: f64,
    },
}

fn load_config(global: &Global) -> Result<ExperimentConfig> {
    let mut cfg = match &global.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(dir) = &global.out_dir {
        cfg.experiment.output_dir = dir.clone();
    }
    Ok(cfg)
}

fn with_quality(cfg: &ExperimentConfig, quality: Option<f64>, exec: Exec) -> Result<f64> {
    let mut cfg = cfg.clone();
    if quality.is_some() {
        cfg.experiment.expert_quality = quality;
    }
    cfg.validate()?;
    let (q, cal) = resolve_quality(&cfg, exec)?;
    if let Some(c) = cal {
        eprintln!(
            "calibrated expert quality {:.6} (return {:.4}, goal {:.4}; {} probes, {} steps excluded from n_tot)",
            c.quality, c.expert_return, c.goal, c.probes, c.env_steps
        );
    }
    Ok(q)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run_curve(m: &RunMetrics) -> Vec<CurvePoint> {
    m.eval_curve.iter().map(|p| CurvePoint { step: p.step, mean: p.mean, std: p.std, runs: 1 }).collect()
}

fn describe(name: &str, cfg: &ExperimentConfig) -> Result<()> {
    let id: EnvId = name.parse()?;
    let spec = id.spec();
    println!("{id}");
    println!("  observation dim   {}", spec.obs_dim);
    println!("  action dim        {}", spec.act_dim);
    println!("  nominal horizon   {}", spec.nominal_horizon);
    println!("  reward bound      {}", spec.r_max);
    println!("  target return     {}", spec.target_return);
    println!("  baseline return   {} (zero action)", spec.baseline_return);
    println!("  extension         {}", if spec.supports_extension { "supported" } else { "not used" });
    let (gamma, tau) = (cfg.pretrain.gamma, cfg.pretrain.tau_for(id));
    println!("  rollout limit     {} (gamma {gamma}, tau {tau})", rollout_step_limit(id, gamma, tau)?);
    println!(
        "  expert return     {:.4} at c = {} of the way from baseline to target",
        spec.return_at_fraction(cfg.experiment.c),
        cfg.experiment.c
    );
    if id == EnvId::LinQuad {
        let (k, _) = linquad::optimal_gain();
        println!("  optimal gain      {k:?}");
        println!("  optimal return    {:.6} (expected, nominal horizon)", linquad::optimal_return());
    }
    if let Some(k) = ExpertController::new(id, 1.0, 0)?.linear_gain() {
        println!("  expert gain (q=1) {k:?}");
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let exec = if cli.global.sequential { Exec::Sequential } else { Exec::default() };
    let cfg = load_config(&cli.global)?;
    let out = cfg.experiment.output_dir.clone();
    let env = cfg.experiment.env;
    match cli.command {
        Command::Describe { env } => describe(&env, &cfg)?,
        Command::Steplimit { horizon, gamma, r_max, tau } => {
            let spec = StepLimitSpec { nominal_horizon: horizon, r_max, tau };
            let t_ext = extended_step_limit(spec, gamma)?;
            println!("T_ext = {t_ext}");
            println!("tail bound at T_ext     {:.6e} (tau {tau})", spec.tail_bound(gamma, t_ext - horizon));
            if t_ext > horizon {
                println!("tail bound at T_ext - 1 {:.6e}", spec.tail_bound(gamma, t_ext - horizon - 1));
            }
        }
        Command::Calibrate => {
            cfg.validate()?;
            let x = &cfg.experiment;
            let cal = harness::calibrate_expert(env, x.c, &x.seeds, x.calibration_episodes, exec)?;
            println!("{}", serde_json::to_string_pretty(&cal)?);
        }
        Command::ExpertCollect { seed, n_exp, quality, out: path } => {
            let q = with_quality(&cfg, quality, exec)?;
            let n = n_exp.unwrap_or(cfg.experiment.n_exp);
            let controller = ExpertController::new(env, q, seed)?;
            let (data, stats) = collect_expert(env, &controller, n, cfg.pretrain.gamma, seed, exec)?;
            data.save(&path)?;
            println!(
                "wrote {}: {} episodes, {} steps, mean return {:.4}, hash {:016x}",
                path.display(),
                stats.episodes,
                data.total_steps(),
                data.mean_return().unwrap_or(f64::NAN),
                data.content_hash()
            );
        }
        Command::Pretrain { seed, quality, critic, out: path } => {
            let q = with_quality(&cfg, quality, exec)?;
            let p = ActorPretraining::run(&cfg, q, cfg.experiment.n_exp, seed, exec)?;
            let regime = if critic { Regime::Acp } else { Regime::Ap };
            let start = p.starting_point(&cfg, regime, cfg.experiment.n_rol, seed, exec)?;
            let info = CheckpointInfo {
                format_version: REPORT_FORMAT_VERSION,
                env,
                seed,
                expert_quality: Some(q),
                actor_pretrained: true,
                critic_pretrained: critic,
                n_exp: start.n_exp,
                n_rol: start.n_rol,
            };
            save_starting_point(&start, &info, &path)?;
            println!("wrote {} (n_exp {}, n_rol {})", path.display(), info.n_exp, info.n_rol);
        }
        Command::Finetune { regime, seed, checkpoint, quality } => {
            let regime: Regime = regime.parse()?;
            let outcome = match checkpoint {
                Some(path) => {
                    let (start, info) = load_starting_point(&path)?;
                    if info.env != env {
                        bail!("checkpoint was trained on {}, config selects {env}", info.env);
                    }
                    finetune(env, start, regime, &cfg.ppo, seed, exec)?
                }
                None => {
                    let q = if regime.needs_pretrained_actor() { with_quality(&cfg, quality, exec)? } else { 0.0 };
                    harness::run_cell(&cfg, q, seed, regime, exec)?
                }
            };
            let m = &outcome.metrics;
            println!(
                "{regime} seed {seed}: reached {} | n_exp {} n_rol {} n_fro {} n_fine {} n_tot {}",
                m.reached_target, m.n_exp, m.n_rol, m.n_fro, m.n_fine, m.n_tot
            );
            let stem = format!("finetune_{}_seed{seed}", regime.as_str().to_ascii_lowercase());
            let doc = json!({ "format_version": REPORT_FORMAT_VERSION, "env": env, "regime": regime, "seed": seed, "metrics": m });
            write(&out.join(format!("{stem}.json")), &serde_json::to_string_pretty(&doc)?)?;
            write(&out.join(format!("{stem}.csv")), &curve_csv(&run_curve(m)))?;
        }
        Command::Compare => {
            let report = run_comparison(&cfg, exec)?;
            print!("{}", report.table());
            for path in emit_report(&report, &out, &ReportFormat::ALL)? {
                println!("wrote {}", path.display());
            }
        }
        Command::SweepExpert { quality } => {
            let q = with_quality(&cfg, quality, exec)?;
            let sweep = sweep_expert_steps(&cfg, q, exec)?;
            println!("{:>8} {:>12} {:>12}", "n_exp", "normalized", "return");
            for p in &sweep.points {
                let ret = p.per_seed.iter().map(|s| s.mean_return).sum::<f64>() / p.per_seed.len() as f64;
                println!("{:>8} {:>12.4} {:>12.4}", p.n_exp, p.normalized, ret);
            }
            println!("inversions: {}", sweep.inversions());
            write(&out.join("sweep_expert.json"), &serde_json::to_string_pretty(&sweep)?)?;
            write(&out.join("sweep_expert.csv"), &sweep.csv())?;
        }
        Command::SweepRollout { quality } => {
            let q = with_quality(&cfg, quality, exec)?;
            let sweep = sweep_rollout_steps(&cfg, q, exec)?;
            println!("{:>8} {:>14}  per seed (n_tot, * = missed target)", "n_rol", "median n_tot");
            for p in &sweep.points {
                let per: Vec<String> = p
                    .runs
                    .iter()
                    .map(|r| match &r.metrics {
                        Some(m) => format!("{}{}", m.n_tot, if m.reached_target { "" } else { "*" }),
                        None => format!("error: {}", r.error.as_deref().unwrap_or("?")),
                    })
                    .collect();
                let med = p.median_n_tot.map_or("-".to_string(), |v| format!("{v}"));
                let mark = if sweep.minimum_median == Some(p.n_rol) { " <- minimum" } else { "" };
                println!("{:>8} {:>14}  {}{mark}", p.n_rol, med, per.join(" "));
            }
            write(&out.join("sweep_rollout.json"), &serde_json::to_string_pretty(&sweep)?)?;
            write(&out.join("sweep_rollout.csv"), &sweep.csv())?;
        }
    }
    Ok(())
}
