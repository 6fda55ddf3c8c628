//! Enhancement environment: the action ladder, the two rewards and the
//! episode loop.
//!
//! Each grid cell picks an index into a 31-step ladder of `α` values from
//! -0.1 to 0.2. The gain applied to the matching spectrum bin is `e^α`. The
//! immediate reward is `w_iq·r_iq − w_amp·r_amp`, where
//!
//! - `r_iq = S(s_t) − S(s_0)` is the gain in no-reference quality score, and
//! - `r_amp = |zfc_bar / zfc_t − 1|` is the relative illumination error.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::engine::{self, EnhanceState};
use crate::error::{Error, Result};
use crate::fourier::Plane;
use crate::image::ImageTensor;

pub const ACTION_COUNT: usize = 31;
pub const ALPHA_MIN: f64 = -0.1;
pub const ALPHA_MAX: f64 = 0.2;
pub const ALPHA_STEP: f64 = 0.01;
/// Index whose gain is exactly 1.
pub const IDENTITY_ACTION: usize = 10;

/// `r_amp` value returned when the image is (numerically) black.
pub const AMP_REWARD_CAP: f64 = 10.0;
const ZFC_FLOOR: f64 = 1e-6;

/// `α` for a ladder index.
pub fn action_alpha(index: usize) -> Result<f64> {
    if index >= ACTION_COUNT {
        return Err(Error::ActionOutOfRange(index));
    }
    // Integer offset keeps index 10 at exactly zero.
    Ok((index as f64 - IDENTITY_ACTION as f64) / 100.0)
}

/// Amplitude gain `e^α` for a ladder index.
pub fn action_to_gain(index: usize) -> Result<f64> {
    action_alpha(index).map(f64::exp)
}

fn gain_table() -> [f64; ACTION_COUNT] {
    std::array::from_fn(|i| action_to_gain(i).expect("index in range"))
}

/// One ladder index per spectrum bin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionGrid {
    height: usize,
    width: usize,
    indices: Vec<u8>,
}

impl ActionGrid {
    pub fn new(height: usize, width: usize, indices: Vec<u8>) -> Result<Self> {
        if indices.len() != height * width {
            return Err(Error::LengthMismatch { expected: height * width, actual: indices.len() });
        }
        if let Some(&i) = indices.iter().find(|&&i| i as usize >= ACTION_COUNT) {
            return Err(Error::ActionOutOfRange(i as usize));
        }
        Ok(Self { height, width, indices })
    }

    pub fn filled(height: usize, width: usize, index: usize) -> Result<Self> {
        Self::new(height, width, vec![u8::try_from(index).map_err(|_| Error::ActionOutOfRange(index))?; height * width])
    }

    pub fn identity(height: usize, width: usize) -> Self {
        Self::filled(height, width, IDENTITY_ACTION).expect("identity index is valid")
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn indices(&self) -> &[u8] {
        &self.indices
    }

    pub fn to_gains(&self) -> Plane {
        let table = gain_table();
        let values = self.indices.iter().map(|&i| table[i as usize]).collect();
        Plane::new(self.height, self.width, values).expect("gains are finite")
    }
}

/// Illumination target used by `r_amp`.
///
/// `Normalized` is a target mean luminance (ZFC divided by the pixel count);
/// `Raw` is a literal luminance-sum target and is resolution dependent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "snake_case")]
pub enum ZfcTarget {
    Normalized(f64),
    Raw(f64),
}

impl ZfcTarget {
    /// Target luminance sum for an image with `pixels` pixels.
    pub fn raw_for(&self, pixels: usize) -> f64 {
        match *self {
            ZfcTarget::Normalized(z) => z * pixels as f64,
            ZfcTarget::Raw(z) => z,
        }
    }

    pub fn value(&self) -> f64 {
        match *self {
            ZfcTarget::Normalized(z) | ZfcTarget::Raw(z) => z,
        }
    }
}

impl Default for ZfcTarget {
    fn default() -> Self {
        ZfcTarget::Normalized(0.45)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardWeights {
    pub w_iq: f64,
    pub w_amp: f64,
    pub zfc_bar: ZfcTarget,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self { w_iq: 1000.0, w_amp: 60.0, zfc_bar: ZfcTarget::default() }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.w_iq >= 0.0 && self.w_amp >= 0.0 && self.w_iq.is_finite() && self.w_amp.is_finite()) {
            return Err(Error::Config("reward weights must be finite and non-negative".into()));
        }
        if !(self.zfc_bar.value() > 0.0 && self.zfc_bar.value().is_finite()) {
            return Err(Error::Config("zfc_bar must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpisodeConfig {
    pub steps_per_episode: usize,
    pub gamma: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self { steps_per_episode: 10, gamma: 0.95 }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps_per_episode == 0 {
            return Err(Error::Config("steps_per_episode must be at least 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config("gamma must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// No-reference image quality score `S(·)`.
pub trait QualityScorer: Send + Sync {
    fn name(&self) -> &str;
    fn score(&self, image: &ImageTensor) -> f64;
}

/// Exposedness-plus-contrast proxy for a learned quality model.
///
/// `S = 0.7·W + 0.3·min(σ_Y / 0.25, 1)` with
/// `W = exp(−(μ_Y − 0.5)² / (2·0.2²))`, where `μ_Y` and `σ_Y` are the mean and
/// population standard deviation of BT.601 luminance.
#[derive(Debug, Clone, Copy, Default)]
pub struct ProxyScorer;

impl QualityScorer for ProxyScorer {
    fn name(&self) -> &str {
        "proxy"
    }

    fn score(&self, image: &ImageTensor) -> f64 {
        let y = image.luminance();
        let n = y.values().len() as f64;
        let mean = y.sum() / n;
        let var = y.values().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let exposedness = (-(mean - 0.5).powi(2) / (2.0 * 0.2 * 0.2)).exp();
        0.7 * exposedness + 0.3 * (var.sqrt() / 0.25).min(1.0)
    }
}

/// Scores every image the same; turns `r_iq` off.
#[derive(Debug, Clone, Copy)]
pub struct ConstantScorer(pub f64);

impl QualityScorer for ConstantScorer {
    fn name(&self) -> &str {
        "constant"
    }

    fn score(&self, _image: &ImageTensor) -> f64 {
        self.0
    }
}

/// Names accepted by [`scorer_by_name`].
pub const SCORER_NAMES: &[&str] = &["proxy", "constant"];

pub fn scorer_by_name(name: &str) -> Result<Arc<dyn QualityScorer>> {
    match name {
        "proxy" => Ok(Arc::new(ProxyScorer)),
        "constant" => Ok(Arc::new(ConstantScorer(0.0))),
        other => Err(Error::UnknownScorer(other.to_string())),
    }
}

/// Built-in proxy score.
pub fn quality_score(image: &ImageTensor) -> f64 {
    ProxyScorer.score(image)
}

pub fn image_quality_reward(s_t: &ImageTensor, s_0: &ImageTensor) -> f64 {
    quality_score(s_t) - quality_score(s_0)
}

/// `|zfc_bar / zfc_t − 1|`, capped at [`AMP_REWARD_CAP`] for black images.
pub fn amplitude_exposure_reward(zfc_t: f64, zfc_bar: f64) -> f64 {
    if zfc_t < ZFC_FLOOR {
        return AMP_REWARD_CAP;
    }
    (zfc_bar / zfc_t - 1.0).abs()
}

pub fn immediate_reward(r_iq: f64, r_amp: f64, weights: &RewardWeights) -> f64 {
    weights.w_iq * r_iq - weights.w_amp * r_amp
}

/// One rollout step as seen by the learner.
#[derive(Debug, Clone)]
pub struct Transition {
    pub state_image: ImageTensor,
    pub actions: ActionGrid,
    pub reward: f64,
    pub value_estimate: Plane,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub next_state: ImageTensor,
    pub reward: f64,
    pub r_iq: f64,
    pub r_amp: f64,
    pub zfc: f64,
    pub done: bool,
}

/// Single-owner episode over one image.
pub struct Environment {
    state: EnhanceState,
    initial: ImageTensor,
    initial_score: f64,
    config: EpisodeConfig,
    weights: RewardWeights,
    scorer: Arc<dyn QualityScorer>,
}

impl fmt::Debug for Environment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Environment")
            .field("step", &self.state.step())
            .field("dims", &self.state.dims())
            .field("initial_score", &self.initial_score)
            .field("scorer", &self.scorer.name())
            .finish()
    }
}

impl Environment {
    pub fn reset(
        image: &ImageTensor,
        config: EpisodeConfig,
        weights: RewardWeights,
        scorer: Arc<dyn QualityScorer>,
    ) -> Result<Self> {
        config.validate()?;
        weights.validate()?;
        let state = engine::init_state(image)?;
        let initial = state.materialize().clone();
        let initial_score = scorer.score(&initial);
        Ok(Self { state, initial, initial_score, config, weights, scorer })
    }

    pub fn state(&self) -> &EnhanceState {
        &self.state
    }

    pub fn image(&self) -> &ImageTensor {
        self.state.materialize()
    }

    pub fn initial_image(&self) -> &ImageTensor {
        &self.initial
    }

    pub fn initial_score(&self) -> f64 {
        self.initial_score
    }

    pub fn t(&self) -> usize {
        self.state.step()
    }

    pub fn is_done(&self) -> bool {
        self.state.step() >= self.config.steps_per_episode
    }

    pub fn weights(&self) -> &RewardWeights {
        &self.weights
    }

    /// Reward terms of an arbitrary image against this episode's `s_0`.
    pub fn reward_terms(&self, image: &ImageTensor) -> (f64, f64, f64) {
        let r_iq = self.scorer.score(image) - self.initial_score;
        let zfc = engine::luminance_zfc(image);
        let r_amp = amplitude_exposure_reward(zfc, self.weights.zfc_bar.raw_for(image.pixel_count()));
        (r_iq, r_amp, zfc)
    }

    pub fn step(&mut self, actions: &ActionGrid) -> Result<StepOutcome> {
        if self.is_done() {
            return Err(Error::EpisodeDone);
        }
        if actions.dims() != self.state.dims() {
            return Err(Error::DimensionMismatch { expected: self.state.dims(), actual: actions.dims() });
        }
        self.state = engine::step_state(&self.state, &actions.to_gains())?;
        let next = self.state.materialize().clone();
        let (r_iq, r_amp, zfc) = self.reward_terms(&next);
        let reward = immediate_reward(r_iq, r_amp, &self.weights);
        Ok(StepOutcome { next_state: next, reward, r_iq, r_amp, zfc, done: self.is_done() })
    }
}

pub fn env_reset(image: &ImageTensor, config: EpisodeConfig) -> Result<Environment> {
    Environment::reset(image, config, RewardWeights::default(), Arc::new(ProxyScorer))
}

pub fn env_step(env: &mut Environment, actions: &ActionGrid) -> Result<StepOutcome> {
    env.step(actions)
}
