//! Asynchronous advantage actor-critic training.
//!
//! Every worker owns its environment, RNG and gradient buffer. A round is
//! one gradient application: the worker snapshots the shared parameters,
//! rolls out `batch_size` episodes on random patches, averages the episode
//! gradients and applies them to the shared store. Rounds are numbered
//! globally across workers.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::a3c::{self, EpisodeTrace, LossOptions, SampleMode};
use super::net::{GradientSet, PolicyValueNet};
use super::shared::SharedParams;
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::rl::{Environment, EpisodeConfig, QualityScorer, RewardWeights, Transition};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub gamma: f64,
    pub max_rounds: usize,
    pub batch_size: usize,
    pub steps_per_episode: usize,
    pub entropy_coeff: f64,
    pub workers: usize,
    pub seed: u64,
    pub patch_size: usize,
    /// Rescale each round's gradient to at most this L2 norm; 0 disables.
    pub max_grad_norm: f64,
    /// Emit a checkpoint event every this many rounds (0 disables).
    pub checkpoint_every: usize,
    /// Multiplies rewards before returns and losses are formed. Logged
    /// rewards stay unscaled.
    pub reward_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.002,
            gamma: 0.95,
            max_rounds: 10_000,
            batch_size: 2,
            steps_per_episode: 10,
            entropy_coeff: 0.01,
            workers: 4,
            seed: 0,
            patch_size: 64,
            max_grad_norm: DEFAULT_MAX_GRAD_NORM,
            checkpoint_every: 1000,
            reward_scale: DEFAULT_REWARD_SCALE,
        }
    }
}

pub const DEFAULT_MAX_GRAD_NORM: f64 = 40.0;
pub const DEFAULT_REWARD_SCALE: f64 = 0.1;

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if self.batch_size == 0 || self.steps_per_episode == 0 || self.workers == 0 {
            return bad("batch_size, steps_per_episode and workers must be positive");
        }
        if self.patch_size < crate::fourier::MIN_DIM {
            return bad("patch_size must be at least 8");
        }
        if !(self.entropy_coeff >= 0.0 && self.entropy_coeff.is_finite()) {
            return bad("entropy_coeff must be non-negative");
        }
        if !(self.reward_scale > 0.0 && self.reward_scale.is_finite()) {
            return bad("reward_scale must be positive");
        }
        if !(self.max_grad_norm >= 0.0 && self.max_grad_norm.is_finite()) {
            return bad("max_grad_norm must be non-negative");
        }
        Ok(())
    }

    pub fn episode(&self) -> EpisodeConfig {
        EpisodeConfig { steps_per_episode: self.steps_per_episode, gamma: self.gamma }
    }

    fn loss_options(&self) -> LossOptions {
        LossOptions { gamma: self.gamma, entropy_coeff: self.entropy_coeff, ..LossOptions::default() }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub round: usize,
    pub worker: usize,
    pub mean_reward: f64,
    pub mean_r_iq: f64,
    pub mean_r_amp: f64,
    /// Mean over the batch of `|target − zfc_T| / target` at the last step.
    pub mean_zfc_gap: f64,
    pub loss: f64,
    pub grad_norm: f64,
}

pub enum TrainEvent<'a> {
    Round(&'a TrainRecord),
    Checkpoint { round: usize, net: &'a PolicyValueNet },
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub net: PolicyValueNet,
    pub rounds: usize,
    pub records: Vec<TrainRecord>,
}

/// Picks a random `patch×patch` window (or the whole image if smaller).
fn random_patch(image: &ImageTensor, patch: usize, rng: &mut impl Rng) -> Result<ImageTensor> {
    let ph = patch.min(image.height());
    let pw = patch.min(image.width());
    let r = rng.random_range(0..=image.height() - ph);
    let c = rng.random_range(0..=image.width() - pw);
    image.crop(r, c, ph, pw)
}

pub struct Rollout {
    pub trace: EpisodeTrace,
    pub r_iq: Vec<f64>,
    pub r_amp: Vec<f64>,
    pub final_gap: f64,
}

/// Runs one episode with stochastic per-cell actions.
pub fn rollout(
    net: &PolicyValueNet,
    image: &ImageTensor,
    episode: EpisodeConfig,
    weights: RewardWeights,
    scorer: Arc<dyn QualityScorer>,
    rng: &mut impl Rng,
) -> Result<Rollout> {
    let mut env = Environment::reset(image, episode, weights, scorer)?;
    let mut transitions = Vec::with_capacity(episode.steps_per_episode);
    let (mut r_iq, mut r_amp) = (Vec::new(), Vec::new());
    let mut final_gap = zfc_gap(env.image(), &weights);
    while !env.is_done() {
        let state_image = env.image().clone();
        let out = net.forward(&state_image)?;
        let actions = a3c::sample_actions_with(&out.logits, SampleMode::Stochastic, rng);
        let step = env.step(&actions)?;
        r_iq.push(step.r_iq);
        r_amp.push(step.r_amp);
        final_gap = zfc_gap(&step.next_state, &weights);
        transitions.push(Transition { state_image, actions, reward: step.reward, value_estimate: out.values });
    }
    Ok(Rollout { trace: EpisodeTrace { transitions, bootstrap: 0.0 }, r_iq, r_amp, final_gap })
}

/// `|target − zfc| / target` for an image under the reward's illumination target.
pub fn zfc_gap(image: &ImageTensor, weights: &RewardWeights) -> f64 {
    let target = weights.zfc_bar.raw_for(image.pixel_count());
    (target - crate::engine::luminance_zfc(image)).abs() / target
}

/// Mean final ZFC gap of greedy episodes over `images`.
pub fn evaluate_zfc_gap(
    net: &PolicyValueNet,
    images: &[ImageTensor],
    steps: usize,
    weights: &RewardWeights,
) -> Result<f64> {
    if images.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut total = 0.0;
    for img in images {
        let mut state = crate::engine::init_state(img)?;
        for _ in 0..steps {
            let out = net.forward(state.materialize())?;
            let grid = a3c::sample_actions(&out.logits, SampleMode::Greedy, 0);
            state = state.apply(&grid.to_gains())?;
        }
        total += zfc_gap(state.materialize(), weights);
    }
    Ok(total / images.len() as f64)
}

struct WorkerCtx<'a> {
    config: &'a TrainConfig,
    weights: RewardWeights,
    scorer: Arc<dyn QualityScorer>,
    dataset: &'a [ImageTensor],
    shared: &'a SharedParams,
    next_round: &'a AtomicUsize,
    abort: &'a AtomicBool,
}

fn worker_seed(seed: u64, worker: usize) -> u64 {
    seed ^ (worker as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn run_worker(ctx: &WorkerCtx<'_>, worker: usize, tx: mpsc::Sender<Result<TrainRecord>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(worker_seed(ctx.config.seed, worker));
    let episode = ctx.config.episode();
    let opts = ctx.config.loss_options();
    loop {
        if ctx.abort.load(Ordering::Relaxed) {
            return;
        }
        let round = ctx.next_round.fetch_add(1, Ordering::SeqCst);
        if round >= ctx.config.max_rounds {
            return;
        }
        let result = (|| -> Result<TrainRecord> {
            let net = ctx.shared.snapshot();
            let mut grads = GradientSet::zeros(net.param_count());
            let (mut reward, mut iq, mut amp, mut gap, mut loss) = (0.0, 0.0, 0.0, 0.0, 0.0);
            let batch = ctx.config.batch_size;
            for _ in 0..batch {
                let img = &ctx.dataset[rng.random_range(0..ctx.dataset.len())];
                let patch = random_patch(img, ctx.config.patch_size, &mut rng)?;
                let mut ro = rollout(&net, &patch, episode, ctx.weights, Arc::clone(&ctx.scorer), &mut rng)?;
                let raw_rewards = ro.trace.rewards();
                for t in &mut ro.trace.transitions {
                    t.reward *= ctx.config.reward_scale;
                }
                let (l, g) = a3c::a3c_losses(&net, &ro.trace, &opts)?;
                grads.add_scaled(&g, 1.0 / batch as f64);
                let steps = ro.trace.transitions.len() as f64;
                reward += raw_rewards.iter().sum::<f64>() / steps;
                iq += ro.r_iq.iter().sum::<f64>() / steps;
                amp += ro.r_amp.iter().sum::<f64>() / steps;
                gap += ro.final_gap;
                loss += l.total;
            }
            if !grads.is_finite() {
                return Err(Error::NonFinite("gradients"));
            }
            let grad_norm = grads.norm();
            let max = ctx.config.max_grad_norm;
            if max > 0.0 && grad_norm > max {
                grads.scale(max / grad_norm);
            }
            ctx.shared.apply_update(&grads, ctx.config.learning_rate)?;
            let b = batch as f64;
            Ok(TrainRecord {
                round: round + 1,
                worker,
                mean_reward: reward / b,
                mean_r_iq: iq / b,
                mean_r_amp: amp / b,
                mean_zfc_gap: gap / b,
                loss: loss / b,
                grad_norm,
            })
        })();
        let failed = result.is_err();
        if tx.send(result).is_err() || failed {
            return;
        }
    }
}

/// Trains `init` on `dataset` and returns the final parameters.
///
/// `on_event` runs on the calling thread, once per completed round and at
/// every checkpoint interval. With one worker the whole run is a pure
/// function of the configuration.
pub fn train(
    config: &TrainConfig,
    weights: RewardWeights,
    scorer: Arc<dyn QualityScorer>,
    dataset: &[ImageTensor],
    init: PolicyValueNet,
    mut on_event: impl FnMut(TrainEvent<'_>) -> Result<()>,
) -> Result<TrainOutcome> {
    config.validate()?;
    weights.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let shared = SharedParams::new(init);
    let next_round = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let ctx = WorkerCtx { config, weights, scorer, dataset, shared: &shared, next_round: &next_round, abort: &abort };
    let mut records = Vec::with_capacity(config.max_rounds.min(1 << 16));
    let mut first_error = None;

    std::thread::scope(|s| {
        let (tx, rx) = mpsc::channel();
        for worker in 0..config.workers {
            let tx = tx.clone();
            let ctx = &ctx;
            s.spawn(move || run_worker(ctx, worker, tx));
        }
        drop(tx);
        let mut done = 0;
        for msg in rx {
            let record = match msg {
                Ok(r) => r,
                Err(e) => {
                    abort.store(true, Ordering::Relaxed);
                    first_error.get_or_insert(e);
                    continue;
                }
            };
            done += 1;
            if first_error.is_none() {
                if let Err(e) = on_event(TrainEvent::Round(&record)) {
                    abort.store(true, Ordering::Relaxed);
                    first_error = Some(e);
                }
            }
            if first_error.is_none() && config.checkpoint_every > 0 && done % config.checkpoint_every == 0 {
                let snap = shared.snapshot();
                if let Err(e) = on_event(TrainEvent::Checkpoint { round: done, net: &snap }) {
                    abort.store(true, Ordering::Relaxed);
                    first_error = Some(e);
                }
            }
            records.push(record);
        }
    });

    if let Some(e) = first_error {
        return Err(e);
    }
    let rounds = records.len();
    Ok(TrainOutcome { net: shared.into_inner(), rounds, records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::net::Architecture;
    use crate::rl::ProxyScorer;

    fn dataset(n: usize, size: usize) -> Vec<ImageTensor> {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        (0..n)
            .map(|_| {
                let s: f64 = rng.random_range(0.1..0.3);
                ImageTensor::from_fn(size, size, |r, c| {
                    let v = s * (0.5 + 0.5 * ((r + c) as f64 / (2 * size) as f64));
                    [v, v * 0.9, v * 0.8]
                })
            })
            .collect()
    }

    fn small_config(rounds: usize) -> TrainConfig {
        TrainConfig {
            max_rounds: rounds,
            workers: 1,
            seed: 5,
            patch_size: 12,
            steps_per_episode: 3,
            checkpoint_every: 0,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_rounds_returns_initialization() {
        let init = PolicyValueNet::init(Architecture::tiny(), 1).unwrap();
        let out = train(
            &small_config(0),
            RewardWeights::default(),
            Arc::new(ProxyScorer),
            &dataset(2, 16),
            init.clone(),
            |_| Ok(()),
        )
        .unwrap();
        assert_eq!(out.net, init);
        assert_eq!(out.rounds, 0);
    }

    #[test]
    fn single_worker_runs_are_identical() {
        let run = || {
            let init = PolicyValueNet::init(Architecture::tiny(), 1).unwrap();
            train(&small_config(3), RewardWeights::default(), Arc::new(ProxyScorer), &dataset(3, 16), init, |_| Ok(()))
                .unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.net, b.net);
        assert_eq!(a.records, b.records);
        assert_eq!(a.records.iter().map(|r| r.round).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_ne!(a.net, PolicyValueNet::init(Architecture::tiny(), 1).unwrap());
    }

    #[test]
    fn multi_worker_completes_every_round() {
        let init = PolicyValueNet::init(Architecture::tiny(), 1).unwrap();
        let cfg = TrainConfig { workers: 3, checkpoint_every: 2, ..small_config(6) };
        let mut checkpoints = 0;
        let out = train(&cfg, RewardWeights::default(), Arc::new(ProxyScorer), &dataset(3, 16), init, |e| {
            if let TrainEvent::Checkpoint { .. } = e {
                checkpoints += 1;
            }
            Ok(())
        })
        .unwrap();
        assert_eq!(out.rounds, 6);
        assert_eq!(checkpoints, 3);
        let mut rounds: Vec<_> = out.records.iter().map(|r| r.round).collect();
        rounds.sort();
        assert_eq!(rounds, (1..=6).collect::<Vec<_>>());
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let init = PolicyValueNet::zeros(Architecture::tiny()).unwrap();
        assert!(matches!(
            train(&small_config(1), RewardWeights::default(), Arc::new(ProxyScorer), &[], init, |_| Ok(())),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn patch_is_cropped() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img = ImageTensor::constant(20, 30, 0.2);
        let p = random_patch(&img, 16, &mut rng).unwrap();
        assert_eq!(p.dims(), (16, 16));
        let whole = random_patch(&img, 64, &mut rng).unwrap();
        assert_eq!(whole.dims(), (20, 30));
    }
}
