use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use orpo_cli::config::ExperimentConfig;
use orpo_cli::experiment::{
    collect_dataset, run_experiment, train_dynamics, uncertainty_grid, write_grid_csv,
    PretrainedParts,
};
use orpo_core::datasets::ReplayBuffer;
use orpo_core::dynamics::{EnsembleDynamics, UncertaintyHeuristic};
use orpo_core::envs::{make_linear_mdp, MdpKind, RiskWorld};
use orpo_core::eval::{evaluate_policy, Discounting};
use orpo_core::lsvi::{default_lambda_bonus, run_lsvi_orpo};
use orpo_core::numkit::Rng;
use orpo_core::policies::{Policy, SacPolicy, Td3BcPolicy};
use orpo_core::CoreError;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "orpo", about = "Model-based offline RL experiments: optimistic rollouts for pessimistic policy optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Path to a TOML config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override config fields, e.g. --override shaper.lambda_p=50
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self, preset: Option<&str>) -> anyhow::Result<ExperimentConfig> {
        match &self.config {
            Some(path) => ExperimentConfig::load(path, &self.overrides, preset),
            None => ExperimentConfig::load_from_str("", &self.overrides, preset),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Collect the offline dataset and write it as a .rbuf file.
    CollectData {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write a human-readable JSON-lines export.
        #[arg(long)]
        jsonl: bool,
    },
    /// Train the ensemble dynamics model on a dataset.
    TrainDynamics {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Dataset .rbuf; collected fresh from the seed when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a full experiment preset over one or more seeds.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// orpo | mopo | oroo | orpo-nopess
        #[arg(long)]
        preset: Option<String>,
        /// Repeatable; each seed runs in its own subdirectory.
        #[arg(long = "seed")]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Pretrained dataset .rbuf shared across seeds.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Pretrained dynamics checkpoint shared across seeds.
        #[arg(long)]
        dynamics: Option<PathBuf>,
    },
    /// Least-squares value iteration sweeps on synthetic linear MDPs.
    Lsvi {
        /// needle | bandit | random
        #[arg(long, default_value = "needle")]
        instance: String,
        #[arg(long, default_value_t = 2000)]
        episodes: usize,
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        /// Bonus coefficient; confidence-scaled default when omitted.
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a policy checkpoint in the real environment.
    Eval {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, default_value_t = 500)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Discount; episodes are summed undiscounted when omitted.
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Export the uncertainty field over the state square as CSV.
    ExportGrid {
        #[arg(long)]
        dynamics: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 61)]
        resolution: usize,
        /// max-aleatoric | ensemble-var | ensemble-std
        #[arg(long, default_value = "ensemble-std")]
        heuristic: String,
    },
}

fn parse_heuristic(name: &str) -> anyhow::Result<UncertaintyHeuristic> {
    Ok(match name {
        "max-aleatoric" => UncertaintyHeuristic::MaxAleatoric,
        "ensemble-var" => UncertaintyHeuristic::EnsembleVar,
        "ensemble-std" => UncertaintyHeuristic::EnsembleStd,
        other => bail!("unknown heuristic '{other}'"),
    })
}

/// Dispatch on the checkpoint kind byte.
fn load_policy(path: &Path) -> anyhow::Result<Box<dyn Policy>> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if bytes.len() < 9 {
        bail!("checkpoint too short: {}", path.display());
    }
    match bytes[8] {
        1 => Ok(Box::new(SacPolicy::load(path)?)),
        2 => Ok(Box::new(Td3BcPolicy::load(path)?)),
        k => bail!("checkpoint kind {k} is not a policy"),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::CollectData { cfg, seed, out, jsonl } => {
            let cfg = cfg.load(None)?;
            let data = collect_dataset(&cfg, seed)?;
            fs::create_dir_all(&out)?;
            let path = out.join("d_env.rbuf");
            data.save(&path)?;
            println!("wrote {} transitions to {}", data.len(), path.display());
            if jsonl {
                let jpath = out.join("d_env.jsonl");
                data.export_jsonl(&jpath)?;
                println!("wrote JSON-lines export to {}", jpath.display());
            }
        }
        Command::TrainDynamics { cfg, seed, data, out } => {
            let cfg = cfg.load(None)?;
            let dataset = match data {
                Some(path) => ReplayBuffer::load(&path)?,
                None => collect_dataset(&cfg, seed)?,
            };
            let (model, report) = train_dynamics(&cfg, seed, &dataset)?;
            fs::create_dir_all(&out)?;
            let path = out.join("dynamics.bin");
            model.save(&path)?;
            println!("wrote dynamics checkpoint to {}", path.display());
            for (i, (nll, epochs)) in
                report.holdout_nll.iter().zip(report.epochs_run.iter()).enumerate()
            {
                println!("member {i}: holdout NLL {nll:.4} after {epochs} epochs");
            }
        }
        Command::Run { cfg, preset, seeds, out, data, dynamics } => {
            let cfg = cfg.load(preset.as_deref())?;
            let seeds = if seeds.is_empty() { vec![0] } else { seeds };
            let shared_data = data.map(|p| ReplayBuffer::load(&p)).transpose()?;
            let shared_dynamics = dynamics.map(|p| EnsembleDynamics::load(&p)).transpose()?;
            fs::create_dir_all(&out)?;
            fs::write(out.join("config.toml"), cfg.to_toml_string()?)?;
            let mut finals = Vec::new();
            for &seed in &seeds {
                let dir = out.join(format!("seed_{seed}"));
                let parts = PretrainedParts {
                    dataset: shared_data.as_ref(),
                    dynamics: shared_dynamics.as_ref(),
                };
                let summary = run_experiment(&cfg, seed, &dir, parts)?;
                println!(
                    "seed {seed}: final mean return {:.3} (std {:.3}) over {} episodes",
                    summary.final_eval.mean_return,
                    summary.final_eval.std_return,
                    summary.final_eval.episodes
                );
                finals.push(summary.final_eval.mean_return);
            }
            let n = finals.len() as f64;
            let mean = finals.iter().sum::<f64>() / n;
            println!("mean over {} seed(s): {:.3}", finals.len(), mean);
        }
        Command::Lsvi { instance, episodes, seeds, lambda, beta, out } => {
            let kind = match instance.as_str() {
                "needle" => MdpKind::Needle { slip: 0.15 },
                "bandit" => MdpKind::Bandit { rewards: vec![0.2, 0.8] },
                "random" => MdpKind::RandomTabular { n_states: 5, n_actions: 3, horizon: 5 },
                other => bail!("unknown instance '{other}'"),
            };
            fs::create_dir_all(&out)?;
            let mut final_regrets = Vec::new();
            for seed in 0..seeds {
                let mut rng = Rng::new(seed);
                let mdp = make_linear_mdp(&kind, &mut rng)?;
                let lam = lambda.unwrap_or_else(|| {
                    default_lambda_bonus(mdp.feature_dim, mdp.horizon, episodes)
                });
                let (_, regret, _) = run_lsvi_orpo(&mdp, episodes, beta, lam, &mut rng)?;
                let path = out.join(format!("regret_seed_{seed}.csv"));
                let mut w = fs::File::create(&path)?;
                writeln!(w, "episode,instant_regret,cumulative_regret")?;
                for (i, (inst, cum)) in
                    regret.instant.iter().zip(regret.cumulative.iter()).enumerate()
                {
                    writeln!(w, "{},{},{}", i + 1, inst, cum)?;
                }
                let last = *regret.cumulative.last().unwrap();
                println!("seed {seed}: lambda {lam:.3}, cumulative regret {last:.3}");
                final_regrets.push(last);
            }
            final_regrets.sort_by(|a, b| a.partial_cmp(b).unwrap());
            println!("median cumulative regret: {:.3}", final_regrets[final_regrets.len() / 2]);
        }
        Command::Eval { policy, episodes, seed, gamma } => {
            let policy = load_policy(&policy)?;
            let mut env = RiskWorld::new();
            let discounting = match gamma {
                Some(g) => Discounting::Gamma(g),
                None => Discounting::UndiscountedSum,
            };
            let report =
                evaluate_policy(policy.as_ref(), &mut env, episodes, discounting, &mut Rng::new(seed))?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::ExportGrid { dynamics, out, resolution, heuristic } => {
            let model = EnsembleDynamics::load(&dynamics)?;
            let h = parse_heuristic(&heuristic)?;
            let grid = uncertainty_grid(&model, resolution, h);
            write_grid_csv(&grid, &out)?;
            println!("wrote {}x{} uncertainty grid to {}", resolution, resolution, out.display());
        }
    }
    Ok(())
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<CoreError>() {
        Some(CoreError::Validation(_)) => 2,
        Some(CoreError::Numerical(_)) => 3,
        Some(CoreError::Io(_)) | Some(CoreError::Schema(_)) => 4,
        None => {
            if err.downcast_ref::<std::io::Error>().is_some() {
                4
            } else {
                2
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
