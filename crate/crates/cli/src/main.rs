use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use prefrl_core::gradients::{run_gradient_suite, GradientSuiteConfig};
use prefrl_core::theory::{random_bound_cases, write_bound_csv, BoundSearchConfig, Weighting};
use prefrl_core::trainer::baseline::{register_baseline, REGISTRATION_SEEDS, BASELINE_STEPS};
use prefrl_core::trainer::{evaluate_checkpoint, run_scripted, run_with, OracleKind, RunConfig, RunSummary, CONFIG_ENV_VAR};
use prefrl_label_service::LabelService;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "prefrl", version, about = "Preference-based RL with policy-aligned queries")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// TOML run configuration.
    #[arg(long, env = CONFIG_ENV_VAR)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set scheme=uniform --set seed=3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let base = match &self.config {
            Some(path) => RunConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
            None => RunConfig::default(),
        };
        let cfg = base.with_overrides(&self.overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightingArg {
    Occupancy,
    Stationary,
}

#[derive(Subcommand)]
enum Command {
    /// Run one training job and print its evaluation rows.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Train with a human labeling through the HTTP service.
    Serve {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Evaluate a saved checkpoint with deterministic actions.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
    },
    /// Check the value-error bound on random tabular MDPs.
    VerifyBound {
        #[arg(long, default_value_t = 1000)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = WeightingArg::Occupancy)]
        weighting: WeightingArg,
        /// Per-instance CSV output.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Finite-difference checks of every trained gradient path.
    Gradcheck {
        #[arg(long, default_value_t = 10)]
        draws: usize,
        #[arg(long, default_value_t = 1e-3)]
        tolerance: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the ground-truth SAC registration seeds and write the threshold file.
    Baseline {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = BASELINE_STEPS)]
        steps: u64,
        #[arg(long)]
        output: PathBuf,
    },
}

fn print_summary(summary: &RunSummary) {
    print!("{}", summary.metrics_csv());
    let eval = &summary.final_evaluation;
    println!(
        "final return {:.3}, goal distance {}, feedback used {}, steps {}",
        eval.mean_return,
        eval.mean_final_distance().map_or("n/a".into(), |d| format!("{d:.3}")),
        summary.feedback_used,
        summary.steps_run
    );
}

fn train_with_human(cfg: &RunConfig) -> Result<RunSummary> {
    let (service, mut overseer) = LabelService::start(&cfg.label_address, cfg.label_static_dir.clone())?;
    eprintln!("label service listening on {}", service.url());
    let summary = run_with(cfg, &mut overseer);
    overseer.finish();
    Ok(summary?)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train { config } => {
            let cfg = config.resolve()?;
            let summary = match cfg.oracle {
                OracleKind::Scripted => run_scripted(&cfg)?,
                OracleKind::Human => train_with_human(&cfg)?,
            };
            print_summary(&summary);
        }
        Command::Serve { config } => {
            let cfg = RunConfig {
                oracle: OracleKind::Human,
                ..config.resolve()?
            };
            print_summary(&train_with_human(&cfg)?);
        }
        Command::Evaluate { checkpoint, episodes } => {
            let eval = evaluate_checkpoint(&checkpoint, episodes)?;
            for (k, e) in eval.episodes.iter().enumerate() {
                println!("episode {k}: return {:.3}, steps {}", e.episode_return, e.steps);
            }
            println!("mean return {:.3}", eval.mean_return);
        }
        Command::VerifyBound {
            instances,
            seed,
            weighting,
            output,
        } => {
            let config = BoundSearchConfig {
                instances,
                weighting: match weighting {
                    WeightingArg::Occupancy => Weighting::DiscountedOccupancy,
                    WeightingArg::Stationary => Weighting::Stationary,
                },
                ..BoundSearchConfig::default()
            };
            let cases = random_bound_cases(&config, &mut ChaCha8Rng::seed_from_u64(seed))?;
            if let Some(path) = output {
                write_bound_csv(&mut BufWriter::new(fs::File::create(&path)?), &cases)?;
            }
            let violations = cases.iter().filter(|c| !c.report.holds).count();
            println!("{violations} violations in {instances} instances");
            if violations > 0 {
                bail!("bound violated on {violations} instances");
            }
        }
        Command::Gradcheck { draws, tolerance, seed } => {
            let reports = run_gradient_suite(&GradientSuiteConfig {
                draws,
                tolerance,
                seed,
                ..GradientSuiteConfig::default()
            })?;
            let mut failed = false;
            for r in &reports {
                println!("{}: {} (max relative error {:.2e})", r.path.name(), if r.passed() { "pass" } else { "FAIL" }, r.max_relative_error());
                failed |= !r.passed();
            }
            if failed {
                bail!("gradient check failed");
            }
        }
        Command::Baseline { config, steps, output } => {
            let cfg = config.resolve()?;
            let threshold = register_baseline(&cfg, &REGISTRATION_SEEDS, steps)?;
            fs::write(&output, threshold.to_toml_string()?)?;
            let mut out = io::stdout().lock();
            writeln!(out, "returns {:?}", threshold.returns)?;
            writeln!(out, "median {:.3}, threshold {:.3}", threshold.median_return, threshold.threshold)?;
        }
    }
    Ok(())
}
