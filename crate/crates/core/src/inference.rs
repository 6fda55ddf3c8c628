//! ZFC-guided adaptive inference.
//!
//! The greedy policy is applied step by step until the normalized luminance
//! ZFC of the output matches the user's target, or a fixed number of steps
//! has been taken.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::EnhanceState;
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::nn::{sample_actions_with, PolicyValueNet, SampleMode};

/// Below this normalized ZFC a reference image carries no usable illumination.
pub const DEGENERATE_REFERENCE: f64 = 1e-6;

/// Consecutive gap increases that trigger the best-so-far fallback.
pub const OVERSHOOT_PATIENCE: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub enum PersonalizationTarget {
    ReferenceImage(ImageTensor),
    /// Normalized (mean luminance) target, or a raw luminance sum when `raw`.
    ZfcTarget {
        value: f64,
        raw: bool,
    },
    FixedIterations(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResolvedTarget {
    Zfc(f64),
    Iterations(usize),
}

/// Turns a target into a normalized ZFC or a step count. `pixels` is the
/// input's pixel count, used only for raw scalar targets.
pub fn resolve_target(target: &PersonalizationTarget, pixels: usize) -> Result<ResolvedTarget> {
    match target {
        PersonalizationTarget::ReferenceImage(reference) => {
            let z = crate::engine::normalized_luminance_zfc(reference);
            if z < DEGENERATE_REFERENCE {
                return Err(Error::DegenerateReference(z));
            }
            Ok(ResolvedTarget::Zfc(z))
        }
        PersonalizationTarget::ZfcTarget { value, raw } => {
            if !(value.is_finite() && *value > 0.0) {
                return Err(Error::ValueOutOfRange(*value));
            }
            let z = if *raw { value / pixels.max(1) as f64 } else { *value };
            Ok(ResolvedTarget::Zfc(z))
        }
        PersonalizationTarget::FixedIterations(0) => Err(Error::Config("fixed_iterations must be at least 1".into())),
        PersonalizationTarget::FixedIterations(n) => Ok(ResolvedTarget::Iterations(*n)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferenceConfig {
    pub epsilon: f64,
    pub max_iterations: usize,
    /// Keep every intermediate image in the result.
    pub record_trajectory: bool,
    /// Sample actions from the policy with this seed instead of taking the argmax.
    pub stochastic_seed: Option<u64>,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self { epsilon: 0.05, max_iterations: 20, record_trajectory: false, stochastic_seed: None }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub step: usize,
    pub normalized_zfc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnhanceResult {
    pub output: ImageTensor,
    pub iterations_used: usize,
    pub converged: bool,
    /// One entry per visited state, starting with the input.
    pub zfc_trajectory: Vec<TrajectoryPoint>,
    /// Images for every visited state when recording was requested.
    pub step_images: Option<Vec<ImageTensor>>,
    /// Which step `output` comes from; earlier than `iterations_used` only
    /// after the overshoot fallback.
    pub output_step: usize,
    pub target_zfc: Option<f64>,
}

/// `|zfc_ref / zfc − 1|`
pub fn zfc_gap(target: f64, zfc: f64) -> f64 {
    (target / zfc - 1.0).abs()
}

pub fn enhance_adaptive(
    net: &PolicyValueNet,
    image: &ImageTensor,
    target: &PersonalizationTarget,
    config: &InferenceConfig,
) -> Result<EnhanceResult> {
    config.validate()?;
    let resolved = resolve_target(target, image.pixel_count())?;
    let mut state = EnhanceState::init(image)?;
    let mut rng = config.stochastic_seed.map(ChaCha8Rng::seed_from_u64);
    let mut trajectory = vec![TrajectoryPoint { step: 0, normalized_zfc: state.normalized_zfc() }];
    let mut images = config.record_trajectory.then(|| vec![image.clone()]);

    let mut advance = |state: &EnhanceState| -> Result<EnhanceState> {
        let out = net.forward(state.materialize())?;
        let grid = match rng.as_mut() {
            Some(r) => sample_actions_with(&out.logits, SampleMode::Stochastic, r),
            None => sample_actions_with(&out.logits, SampleMode::Greedy, &mut ChaCha8Rng::seed_from_u64(0)),
        };
        state.apply(&grid.to_gains())
    };

    let finish =
        |output: ImageTensor, iterations_used, converged, output_step, trajectory, images, target_zfc| EnhanceResult {
            output,
            iterations_used,
            converged,
            zfc_trajectory: trajectory,
            step_images: images,
            output_step,
            target_zfc,
        };

    match resolved {
        ResolvedTarget::Iterations(n) => {
            for step in 1..=n {
                state = advance(&state)?;
                trajectory.push(TrajectoryPoint { step, normalized_zfc: state.normalized_zfc() });
                if let Some(v) = images.as_mut() {
                    v.push(state.materialize().clone());
                }
            }
            Ok(finish(state.materialize().clone(), n, true, n, trajectory, images, None))
        }
        ResolvedTarget::Zfc(z_ref) => {
            let mut gap = zfc_gap(z_ref, state.normalized_zfc());
            let mut best = (gap, 0usize, image.clone());
            let mut rising = 0;
            let mut step = 0;
            while gap > config.epsilon && step < config.max_iterations {
                state = advance(&state)?;
                step += 1;
                let z = state.normalized_zfc();
                trajectory.push(TrajectoryPoint { step, normalized_zfc: z });
                if let Some(v) = images.as_mut() {
                    v.push(state.materialize().clone());
                }
                let next_gap = zfc_gap(z_ref, z);
                rising = if next_gap > gap { rising + 1 } else { 0 };
                gap = next_gap;
                if gap < best.0 {
                    best = (gap, step, state.materialize().clone());
                }
                if rising >= OVERSHOOT_PATIENCE {
                    let (_, best_step, best_image) = best;
                    return Ok(finish(best_image, step, false, best_step, trajectory, images, Some(z_ref)));
                }
            }
            let converged = gap <= config.epsilon;
            let output = if step == 0 { image.clone() } else { state.materialize().clone() };
            Ok(finish(output, step, converged, step, trajectory, images, Some(z_ref)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{luminance_zfc, normalized_luminance_zfc};
    use crate::nn::{Architecture, PolicyValueNet};

    /// A net whose policy-head bias forces one action everywhere.
    fn fixed_action_net(action: usize) -> PolicyValueNet {
        let arch = Architecture::tiny();
        let mut net = PolicyValueNet::zeros(arch.clone()).unwrap();
        let mut offset = 0;
        for spec in arch.tensors() {
            let len: usize = spec.shape.iter().product();
            if spec.name == "policy.bias" {
                net.params_mut()[offset + action] = 10.0;
            }
            offset += len;
        }
        net
    }

    fn dark(h: usize, w: usize) -> ImageTensor {
        ImageTensor::from_fn(h, w, |r, c| {
            let v = 0.1 + 0.05 * ((r * 3 + c) % 5) as f64 / 5.0;
            [v, v * 0.9, v * 1.1]
        })
    }

    #[test]
    fn resolve_cases() {
        let reference = ImageTensor::constant(13, 7, 0.6);
        match resolve_target(&PersonalizationTarget::ReferenceImage(reference), 64).unwrap() {
            ResolvedTarget::Zfc(z) => assert!((z - 0.6).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
        assert_eq!(
            resolve_target(&PersonalizationTarget::ZfcTarget { value: 0.45, raw: false }, 64).unwrap(),
            ResolvedTarget::Zfc(0.45)
        );
        assert_eq!(
            resolve_target(&PersonalizationTarget::ZfcTarget { value: 32.0, raw: true }, 64).unwrap(),
            ResolvedTarget::Zfc(0.5)
        );
        assert_eq!(
            resolve_target(&PersonalizationTarget::FixedIterations(5), 64).unwrap(),
            ResolvedTarget::Iterations(5)
        );
        assert!(matches!(
            resolve_target(&PersonalizationTarget::ReferenceImage(ImageTensor::constant(8, 8, 0.0)), 64),
            Err(Error::DegenerateReference(_))
        ));
        assert!(resolve_target(&PersonalizationTarget::ZfcTarget { value: -1.0, raw: false }, 64).is_err());
        assert!(resolve_target(&PersonalizationTarget::FixedIterations(0), 64).is_err());
    }

    #[test]
    fn already_matching_input_is_returned_untouched() {
        let img = ImageTensor::constant(8, 8, 0.44);
        let net = fixed_action_net(30);
        let res = enhance_adaptive(
            &net,
            &img,
            &PersonalizationTarget::ZfcTarget { value: 0.45, raw: false },
            &InferenceConfig::default(),
        )
        .unwrap();
        assert_eq!(res.iterations_used, 0);
        assert!(res.converged);
        assert_eq!(res.output, img);
        assert_eq!(res.zfc_trajectory.len(), 1);
    }

    #[test]
    fn fixed_iterations_ignore_epsilon_and_cap() {
        let img = dark(8, 8);
        let net = fixed_action_net(10);
        let cfg = InferenceConfig { max_iterations: 2, epsilon: 1e9, ..InferenceConfig::default() };
        let res = enhance_adaptive(&net, &img, &PersonalizationTarget::FixedIterations(5), &cfg).unwrap();
        assert_eq!(res.iterations_used, 5);
        assert!(res.converged);
        assert_eq!(res.zfc_trajectory.len(), 6);
        assert_eq!(res.zfc_trajectory.iter().map(|p| p.step).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn brightening_policy_converges_soundly() {
        let img = dark(16, 16);
        // α = 0.05 per step: a 2.5× brightening needs about 18 steps, so
        // use a 30-step cap.
        let net = fixed_action_net(15);
        let cfg = InferenceConfig { max_iterations: 30, record_trajectory: true, ..InferenceConfig::default() };
        let res =
            enhance_adaptive(&net, &img, &PersonalizationTarget::ZfcTarget { value: 0.3, raw: false }, &cfg).unwrap();
        assert!(res.converged, "{:?}", res.zfc_trajectory);
        assert!(zfc_gap(0.3, normalized_luminance_zfc(&res.output)) <= cfg.epsilon);
        let images = res.step_images.as_ref().unwrap();
        assert_eq!(images.len(), res.iterations_used + 1);
        for (p, im) in res.zfc_trajectory.iter().zip(images) {
            assert!((p.normalized_zfc - luminance_zfc(im) / im.pixel_count() as f64).abs() < 1e-9);
        }
        let prev = res.zfc_trajectory[res.iterations_used - 1].normalized_zfc;
        assert!(zfc_gap(0.3, prev) > cfg.epsilon);
    }

    #[test]
    fn unreachable_target_hits_cap() {
        let net = fixed_action_net(10);
        let img = dark(8, 8);
        let cfg = InferenceConfig { max_iterations: 4, ..InferenceConfig::default() };
        let res =
            enhance_adaptive(&net, &img, &PersonalizationTarget::ZfcTarget { value: 0.9, raw: false }, &cfg).unwrap();
        assert_eq!(res.iterations_used, 4);
        assert!(!res.converged);
        assert_eq!(res.step_images, None);
    }

    #[test]
    fn overshoot_returns_best_so_far() {
        // Darkening away from a brighter target widens the gap every step.
        let net = fixed_action_net(0);
        let img = dark(8, 8);
        let res = enhance_adaptive(
            &net,
            &img,
            &PersonalizationTarget::ZfcTarget { value: 0.5, raw: false },
            &InferenceConfig::default(),
        )
        .unwrap();
        assert!(!res.converged);
        assert_eq!(res.iterations_used, OVERSHOOT_PATIENCE);
        assert_eq!(res.output_step, 0);
        assert_eq!(res.output, img);
    }

    #[test]
    fn reference_of_other_size_sets_target() {
        let net = fixed_action_net(15);
        let img = dark(8, 8);
        let reference = ImageTensor::constant(20, 11, 0.3);
        let cfg = InferenceConfig { max_iterations: 40, ..InferenceConfig::default() };
        let res = enhance_adaptive(&net, &img, &PersonalizationTarget::ReferenceImage(reference), &cfg).unwrap();
        assert!((res.target_zfc.unwrap() - 0.3).abs() < 1e-12);
        assert!(res.converged);
    }

    #[test]
    fn greedy_is_deterministic_and_seeded_sampling_repeats() {
        let net = PolicyValueNet::init(Architecture::tiny(), 3).unwrap();
        let img = dark(12, 12);
        let target = PersonalizationTarget::FixedIterations(3);
        let a = enhance_adaptive(&net, &img, &target, &InferenceConfig::default()).unwrap();
        let b = enhance_adaptive(&net, &img, &target, &InferenceConfig::default()).unwrap();
        assert_eq!(a.output, b.output);
        let cfg = InferenceConfig { stochastic_seed: Some(9), ..InferenceConfig::default() };
        let c = enhance_adaptive(&net, &img, &target, &cfg).unwrap();
        let d = enhance_adaptive(&net, &img, &target, &cfg).unwrap();
        assert_eq!(c.output, d.output);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let net = fixed_action_net(10);
        let img = dark(8, 8);
        let t = PersonalizationTarget::FixedIterations(1);
        assert!(enhance_adaptive(&net, &img, &t, &InferenceConfig { epsilon: 0.0, ..Default::default() }).is_err());
        assert!(enhance_adaptive(&net, &img, &t, &InferenceConfig { max_iterations: 0, ..Default::default() }).is_err());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn terminates_within_cap(seed in 0u64..1000, target in 0.05f64..0.95, cap in 1usize..12) {
            let net = PolicyValueNet::init(Architecture::tiny(), seed).unwrap();
            let img = ImageTensor::from_fn(8, 8, |r, c| {
                let v = ((seed as usize + r * 8 + c) % 17) as f64 / 40.0;
                [v, v, v]
            });
            let cfg = InferenceConfig { max_iterations: cap, ..InferenceConfig::default() };
            let res = enhance_adaptive(&net, &img, &PersonalizationTarget::ZfcTarget { value: target, raw: false }, &cfg).unwrap();
            proptest::prop_assert!(res.iterations_used <= cap);
            proptest::prop_assert_eq!(res.zfc_trajectory.len(), res.iterations_used + 1);
            if res.converged {
                proptest::prop_assert!(zfc_gap(target, normalized_luminance_zfc(&res.output)) <= cfg.epsilon);
            }
        }
    }
}
