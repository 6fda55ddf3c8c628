use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lumen_cli::commands::{self, EnhanceArgs, EvalArgs, ServeArgs, TargetArg, TrainArgs};
use lumen_cli::service::DEFAULT_MAX_PIXELS;
use lumen_core::config::SyntheticSpec;

#[derive(Parser)]
#[command(name = "lumen", version, about = "Low-light enhancement by learned Fourier amplitude scaling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy and write checkpoints plus a JSON-lines log.
    Train {
        /// TOML run configuration; flags override its values.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "runs/latest")]
        out: PathBuf,
        /// Train on generated data: seed,count,size
        #[arg(long)]
        synthetic: Option<SyntheticSpec>,
        #[arg(long)]
        rounds: Option<usize>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        patch: Option<usize>,
        #[arg(long)]
        w_iq: Option<f64>,
        #[arg(long)]
        w_amp: Option<f64>,
        /// Target mean luminance for the exposure reward.
        #[arg(long, conflicts_with = "zfc_bar_raw")]
        zfc_bar: Option<f64>,
        /// Target luminance sum for the exposure reward (resolution dependent).
        #[arg(long)]
        zfc_bar_raw: Option<f64>,
        /// Print the effective configuration and exit.
        #[arg(long)]
        print_config: bool,
    },
    /// Enhance one image towards a reference, a ZFC target or for N steps.
    Enhance {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        target: TargetFlags,
        /// Treat --zfc as a raw luminance sum instead of a mean.
        #[arg(long, requires = "zfc")]
        raw: bool,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        max_iterations: Option<usize>,
        /// Write per-step normalized ZFC records (JSON lines).
        #[arg(long)]
        trajectory: Option<PathBuf>,
        /// Write every intermediate image into this directory.
        #[arg(long)]
        step_images: Option<PathBuf>,
        /// Sample actions instead of taking the argmax.
        #[arg(long)]
        stochastic_seed: Option<u64>,
    },
    /// Enhance every low image of a paired dataset and report metrics.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, conflicts_with = "iters")]
        zfc: Option<f64>,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        max_iterations: Option<usize>,
    },
    /// Print the proxy quality score and normalized ZFC of an image.
    Score { input: PathBuf },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        #[arg(long, default_value_t = DEFAULT_MAX_PIXELS)]
        max_pixels: usize,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct TargetFlags {
    /// Reference image whose illumination to match.
    #[arg(long = "ref")]
    reference: Option<PathBuf>,
    /// Target normalized ZFC (mean luminance).
    #[arg(long)]
    zfc: Option<f64>,
    /// Apply exactly this many policy steps.
    #[arg(long)]
    iters: Option<usize>,
}

fn run(cli: Cli) -> commands::CmdResult {
    match cli.command {
        Command::Train {
            config,
            out,
            synthetic,
            rounds,
            workers,
            seed,
            patch,
            w_iq,
            w_amp,
            zfc_bar,
            zfc_bar_raw,
            print_config,
        } => commands::cmd_train(&TrainArgs {
            config,
            out,
            synthetic,
            rounds,
            workers,
            seed,
            patch,
            w_iq,
            w_amp,
            zfc_bar,
            zfc_bar_raw,
            print_config,
        }),
        Command::Enhance {
            checkpoint,
            input,
            out,
            target,
            raw,
            epsilon,
            max_iterations,
            trajectory,
            step_images,
            stochastic_seed,
        } => {
            let target = match (target.reference, target.zfc, target.iters) {
                (Some(p), _, _) => TargetArg::Reference(p),
                (_, Some(value), _) => TargetArg::Zfc { value, raw },
                (_, _, Some(n)) => TargetArg::Iterations(n),
                _ => unreachable!("clap enforces exactly one target"),
            };
            commands::cmd_enhance(&EnhanceArgs {
                checkpoint,
                input,
                out,
                target,
                epsilon,
                max_iterations,
                trajectory,
                step_images,
                stochastic_seed,
            })
        }
        Command::Eval { checkpoint, dataset, report, zfc, iters, epsilon, max_iterations } => {
            commands::cmd_eval(&EvalArgs {
                checkpoint,
                dataset,
                report,
                zfc,
                iterations: iters,
                epsilon,
                max_iterations,
            })
        }
        Command::Score { input } => commands::cmd_score(&input),
        Command::Serve { checkpoint, bind, max_pixels } => {
            commands::cmd_serve(&ServeArgs { checkpoint, bind, max_pixels })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.exit_code())
        }
    }
}
