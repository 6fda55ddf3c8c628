//! Subcommand implementations. Each returns a [`Failure`] carrying the exit
//! code: 2 for usage/configuration problems, 3 for runtime failures.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use serde_json::json;

use lumen_core::config::{RunConfig, SyntheticSpec};
use lumen_core::data_io::{
    load_checkpoint, load_image, save_checkpoint, save_image, synth_dataset, Checkpoint, CheckpointMeta, PairedDataset,
};
use lumen_core::engine::normalized_luminance_zfc;
use lumen_core::inference::{enhance_adaptive, InferenceConfig, PersonalizationTarget};
use lumen_core::metrics::{MetricReport, MetricRow};
use lumen_core::nn::{train, Architecture, PolicyValueNet, TrainEvent};
use lumen_core::rl::{quality_score, scorer_by_name, ZfcTarget};
use lumen_core::{Error as CoreError, ImageTensor};

use crate::service::{self, AppState, LoadedModel};

#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Usage(e) | Failure::Runtime(e) => e,
        }
    }
}

pub type CmdResult<T = ()> = Result<T, Failure>;

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn runtime(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Runtime(e.into())
}

/// Bad inputs the user can fix are usage errors; everything else is runtime.
fn classify(e: CoreError) -> Failure {
    match e {
        CoreError::Config(_)
        | CoreError::MissingFile(_)
        | CoreError::UnsupportedFormat(_)
        | CoreError::CorruptImage(_)
        | CoreError::DegenerateReference(_)
        | CoreError::EmptyDataset
        | CoreError::UnknownScorer(_)
        | CoreError::ValueOutOfRange(_)
        | CoreError::DimensionTooSmall { .. } => usage(e),
        other => runtime(other),
    }
}

fn load_model(path: &Path) -> CmdResult<(PolicyValueNet, Checkpoint)> {
    let ckpt =
        load_checkpoint(path).with_context(|| format!("loading checkpoint {}", path.display())).map_err(runtime)?;
    let net = ckpt.to_net().with_context(|| format!("checkpoint {}", path.display())).map_err(runtime)?;
    Ok((net, ckpt))
}

pub struct TrainArgs {
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub synthetic: Option<SyntheticSpec>,
    pub rounds: Option<usize>,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
    pub patch: Option<usize>,
    pub w_iq: Option<f64>,
    pub w_amp: Option<f64>,
    pub zfc_bar: Option<f64>,
    pub zfc_bar_raw: Option<f64>,
    pub print_config: bool,
}

/// Config file first, then flag overrides.
pub fn resolve_train_config(args: &TrainArgs) -> CmdResult<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p).map_err(|e| usage(anyhow!("config {}: {e}", p.display())))?,
        None => RunConfig::default(),
    };
    if let Some(s) = args.synthetic {
        cfg.dataset.synthetic = Some(s);
    }
    if let Some(n) = args.rounds {
        cfg.train.max_rounds = n;
    }
    if let Some(n) = args.workers {
        cfg.train.workers = n;
    }
    if let Some(n) = args.seed {
        cfg.train.seed = n;
    }
    if let Some(n) = args.patch {
        cfg.train.patch_size = n;
    }
    if let Some(w) = args.w_iq {
        cfg.reward.w_iq = w;
    }
    if let Some(w) = args.w_amp {
        cfg.reward.w_amp = w;
    }
    if let Some(z) = args.zfc_bar {
        cfg.reward.zfc_bar = ZfcTarget::Normalized(z);
    }
    if let Some(z) = args.zfc_bar_raw {
        cfg.reward.zfc_bar = ZfcTarget::Raw(z);
    }
    cfg.validate().map_err(classify)?;
    Ok(cfg)
}

fn training_images(cfg: &RunConfig) -> CmdResult<Vec<ImageTensor>> {
    if let Some(s) = cfg.dataset.synthetic {
        let pairs = synth_dataset(s.seed, s.count, s.size).map_err(classify)?;
        return Ok(pairs.into_iter().map(|p| p.low).collect());
    }
    let Some(dir) = &cfg.dataset.train_dir else {
        return Err(usage(anyhow!("no training data: pass --synthetic seed,count,size or set dataset.train_dir")));
    };
    let (ds, unpaired) = PairedDataset::open(dir).map_err(classify)?;
    for p in unpaired {
        log::warn!("skipping unpaired file {}", p.display());
    }
    ds.load_low().map_err(classify)
}

pub fn cmd_train(args: &TrainArgs) -> CmdResult {
    let cfg = resolve_train_config(args)?;
    if args.print_config {
        print!("{}", cfg.to_toml_string());
        return Ok(());
    }
    let images = training_images(&cfg)?;
    let scorer = scorer_by_name(&cfg.scorer).map_err(classify)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display())).map_err(runtime)?;
    fs::write(args.out.join("run_config.toml"), cfg.to_toml_string()).map_err(runtime)?;
    let config_json = serde_json::to_value(&cfg).map_err(runtime)?;
    let meta = |round: usize| CheckpointMeta { round, seed: cfg.train.seed, config: config_json.clone() };

    let init = PolicyValueNet::init(Architecture::default(), cfg.train.seed).map_err(runtime)?;
    let mut log = BufWriter::new(File::create(args.out.join("train_log.jsonl")).map_err(runtime)?);
    let out_dir = args.out.clone();
    let outcome = train(&cfg.train, cfg.reward, scorer, &images, init, |event| {
        match event {
            TrainEvent::Round(r) => {
                serde_json::to_writer(&mut log, r)?;
                log.write_all(b"\n")?;
            }
            TrainEvent::Checkpoint { round, net } => {
                save_checkpoint(
                    &Checkpoint::from_net(net, meta(round)),
                    out_dir.join(format!("checkpoint_{round:06}.rfll")),
                )?;
                log::info!("round {round}: checkpoint written");
            }
        }
        Ok(())
    })
    .map_err(runtime)?;
    log.flush().map_err(runtime)?;
    let final_path = args.out.join("final.rfll");
    save_checkpoint(&Checkpoint::from_net(&outcome.net, meta(outcome.rounds)), &final_path).map_err(runtime)?;
    println!("{}", json!({ "rounds": outcome.rounds, "checkpoint": final_path }));
    Ok(())
}

pub enum TargetArg {
    Reference(PathBuf),
    Zfc { value: f64, raw: bool },
    Iterations(usize),
}

pub struct EnhanceArgs {
    pub checkpoint: PathBuf,
    pub input: PathBuf,
    pub out: PathBuf,
    pub target: TargetArg,
    pub epsilon: Option<f64>,
    pub max_iterations: Option<usize>,
    pub trajectory: Option<PathBuf>,
    pub step_images: Option<PathBuf>,
    pub stochastic_seed: Option<u64>,
}

pub fn cmd_enhance(args: &EnhanceArgs) -> CmdResult {
    let input = load_image(&args.input).map_err(|e| usage(anyhow!("input {}: {e}", args.input.display())))?;
    let target = match &args.target {
        TargetArg::Reference(p) => PersonalizationTarget::ReferenceImage(
            load_image(p).map_err(|e| usage(anyhow!("reference {}: {e}", p.display())))?,
        ),
        TargetArg::Zfc { value, raw } => PersonalizationTarget::ZfcTarget { value: *value, raw: *raw },
        TargetArg::Iterations(n) => PersonalizationTarget::FixedIterations(*n),
    };
    let defaults = InferenceConfig::default();
    let config = InferenceConfig {
        epsilon: args.epsilon.unwrap_or(defaults.epsilon),
        max_iterations: args.max_iterations.unwrap_or(defaults.max_iterations),
        record_trajectory: args.step_images.is_some(),
        stochastic_seed: args.stochastic_seed,
    };
    config.validate().map_err(classify)?;
    lumen_core::inference::resolve_target(&target, input.pixel_count()).map_err(classify)?;
    let (net, _) = load_model(&args.checkpoint)?;
    let result = enhance_adaptive(&net, &input, &target, &config).map_err(classify)?;
    save_image(&result.output, &args.out).map_err(classify)?;

    if let Some(path) = &args.trajectory {
        let mut w = BufWriter::new(File::create(path).map_err(runtime)?);
        for p in &result.zfc_trajectory {
            serde_json::to_writer(&mut w, p).map_err(runtime)?;
            w.write_all(b"\n").map_err(runtime)?;
        }
        w.flush().map_err(runtime)?;
    }
    if let (Some(dir), Some(images)) = (&args.step_images, &result.step_images) {
        fs::create_dir_all(dir).map_err(runtime)?;
        for (i, im) in images.iter().enumerate() {
            save_image(im, dir.join(format!("step_{i:03}.png"))).map_err(runtime)?;
        }
    }
    println!(
        "{}",
        json!({
            "iterations_used": result.iterations_used,
            "converged": result.converged,
            "output_step": result.output_step,
            "final_normalized_zfc": normalized_luminance_zfc(&result.output),
            "target_zfc": result.target_zfc,
        })
    );
    Ok(())
}

pub struct EvalArgs {
    pub checkpoint: PathBuf,
    pub dataset: PathBuf,
    pub report: PathBuf,
    /// Overrides the default target (the paired normal-light image).
    pub zfc: Option<f64>,
    pub iterations: Option<usize>,
    pub epsilon: Option<f64>,
    pub max_iterations: Option<usize>,
}

pub fn cmd_eval(args: &EvalArgs) -> CmdResult {
    let (ds, unpaired) = PairedDataset::open(&args.dataset).map_err(|e| match e {
        CoreError::EmptyDataset => usage(anyhow!("no low/high pairs under {}", args.dataset.display())),
        other => classify(other),
    })?;
    for p in &unpaired {
        eprintln!("warning: skipping unpaired file {}", p.display());
    }
    let (net, _) = load_model(&args.checkpoint)?;
    let defaults = InferenceConfig::default();
    let config = InferenceConfig {
        epsilon: args.epsilon.unwrap_or(defaults.epsilon),
        max_iterations: args.max_iterations.unwrap_or(defaults.max_iterations),
        ..defaults
    };
    config.validate().map_err(classify)?;
    let mut report = MetricReport::default();
    for (low_path, high_path) in &ds.pairs {
        let low = load_image(low_path).map_err(classify)?;
        let high = load_image(high_path).map_err(classify)?;
        let target = match (args.zfc, args.iterations) {
            (Some(z), _) => PersonalizationTarget::ZfcTarget { value: z, raw: false },
            (None, Some(n)) => PersonalizationTarget::FixedIterations(n),
            (None, None) => PersonalizationTarget::ReferenceImage(high.clone()),
        };
        let result = enhance_adaptive(&net, &low, &target, &config).map_err(classify)?;
        let name = low_path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        report.push(MetricRow::compute(name, &result.output, &high).map_err(classify)?);
    }
    if let Some(parent) = args.report.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(runtime)?;
    }
    let file =
        File::create(&args.report).with_context(|| format!("creating {}", args.report.display())).map_err(runtime)?;
    report.write_jsonl(BufWriter::new(file)).map_err(runtime)?;
    println!("{}", serde_json::to_string(&report.summary()).map_err(runtime)?);
    Ok(())
}

pub fn cmd_score(input: &Path) -> CmdResult {
    let image = load_image(input).map_err(|e| usage(anyhow!("{}: {e}", input.display())))?;
    println!(
        "{}",
        json!({ "quality_score": quality_score(&image), "normalized_zfc": normalized_luminance_zfc(&image) })
    );
    Ok(())
}

pub struct ServeArgs {
    pub checkpoint: Option<PathBuf>,
    pub bind: String,
    pub max_pixels: usize,
}

pub fn cmd_serve(args: &ServeArgs) -> CmdResult {
    let model = match &args.checkpoint {
        Some(p) => {
            let (net, ckpt) = load_model(p)?;
            Some(LoadedModel { net, round: ckpt.metadata.round })
        }
        None => None,
    };
    let state = AppState { max_pixels: args.max_pixels, ..AppState::new(model) };
    let rt = tokio::runtime::Runtime::new().map_err(runtime)?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&args.bind)
            .await
            .with_context(|| format!("binding {}", args.bind))
            .map_err(runtime)?;
        eprintln!("listening on {}", listener.local_addr().map_err(runtime)?);
        service::serve(listener, state).await.map_err(runtime)
    })
}
