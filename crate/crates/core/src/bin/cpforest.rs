use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use cpforest::cli::{self, CliError, RunConfig};
use cpforest::equivalence::Fault;
use cpforest::forest::{Aggregation, ForestSummary};

#[derive(Parser)]
#[command(
    name = "cpforest",
    version,
    about = "Causal-policy forests for policy learning"
)]
struct Args {
    /// TOML run configuration; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed of the command (dgp, forest or suite).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Training threads; 0 uses every core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    aggregate: Option<AggregateArg>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum AggregateArg {
    Vote,
    TauMean,
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    SignFlip,
}

#[derive(Subcommand)]
enum Command {
    /// Write train.csv and eval.csv from the synthetic design.
    Simulate,
    /// Train the causal-policy forest (and plug-in baseline).
    Train {
        /// Training CSV; defaults to <out>/train.csv.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Write `action,vote` for each row of a covariate CSV.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Defaults to <out>/predictions.csv.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Compare policies on a held-out CSV with ground-truth columns.
    Evaluate {
        /// Defaults to <out>/eval.csv.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Defaults to <out>/policy_forest.json.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Defaults to <out>/plugin_forest.json when baseline.plugin is set.
        #[arg(long)]
        plugin: Option<PathBuf>,
    },
    /// Check welfare/least-squares equivalence on random finite policy classes.
    VerifyTheorem {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, hide = true, value_enum)]
        inject_fault: Option<FaultArg>,
    },
}

fn print_summary(label: &str, s: &ForestSummary) {
    println!(
        "{label}: {} trees, depth mean {:.2} max {}, leaves mean {:.1}, min leaf arms treated {} control {}",
        s.trees, s.mean_depth, s.max_depth, s.mean_leaves, s.min_leaf_treated, s.min_leaf_control
    );
}

fn run(args: Args) -> Result<(), CliError> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(t) = args.threads {
        cfg.threads = t;
    }
    if let Some(dir) = args.out {
        cfg.output.dir = dir;
    }
    if let Some(a) = args.aggregate {
        cfg.forest.aggregate = match a {
            AggregateArg::Vote => Aggregation::Vote,
            AggregateArg::TauMean => Aggregation::TauMean,
        };
    }

    match args.command {
        Command::Simulate => {
            if let Some(seed) = args.seed {
                cfg.dgp.seed = seed;
            }
            let out = cli::cmd_simulate(&cfg)?;
            println!(
                "wrote {} and {}",
                out.train_path.display(),
                out.eval_path.display()
            );
            println!(
                "oracle policy value: train {:.4}, eval {:.4}",
                out.train_oracle_value, out.eval_oracle_value
            );
        }
        Command::Train { data } => {
            if let Some(seed) = args.seed {
                cfg.forest.seed = seed;
            }
            let data = data.unwrap_or_else(|| cfg.train_path());
            let start = Instant::now();
            let out = cli::cmd_train(&cfg, &data)?;
            print_summary("causal-policy forest", &out.policy_summary);
            println!("wrote {}", out.policy_path.display());
            if let Some((path, summary)) = &out.plugin {
                print_summary("plug-in causal forest", summary);
                println!("wrote {}", path.display());
            }
            println!("training took {:.1}s", start.elapsed().as_secs_f64());
        }
        Command::Predict {
            model,
            input,
            output,
        } => {
            let output = output.unwrap_or_else(|| cfg.output.dir.join("predictions.csv"));
            let rows = cli::cmd_predict(
                &model,
                &input,
                &output,
                args.aggregate.map(|_| cfg.forest.aggregate),
            )?;
            println!("wrote {rows} predictions to {}", output.display());
        }
        Command::Evaluate {
            data,
            model,
            plugin,
        } => {
            let data = data.unwrap_or_else(|| cfg.eval_path());
            let model = model.unwrap_or_else(|| cfg.policy_model_path());
            let plugin = plugin.or_else(|| cfg.baseline.plugin.then(|| cfg.plugin_model_path()));
            let report = cli::cmd_evaluate(&cfg, &model, plugin.as_deref(), &data)?;
            print!("{report}");
        }
        Command::VerifyTheorem {
            trials,
            inject_fault,
        } => {
            if trials == 0 {
                eprintln!("warning: 0 trials requested; nothing to check");
            }
            let fault = inject_fault.map(|FaultArg::SignFlip| Fault::SignFlip);
            let start = Instant::now();
            let summary = cli::cmd_verify_theorem(trials, args.seed.unwrap_or(0), fault)?;
            println!(
                "{} / {} instances passed ({} with tied optima) in {:.2}s",
                summary.passed,
                summary.trials,
                summary.with_ties,
                start.elapsed().as_secs_f64()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
