//! Actor-critic objective over a rollout of per-cell actions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::net::{GradientSet, Logits, PolicyValueNet};
use crate::error::{Error, Result};
use crate::fourier::Plane;
use crate::rl::{ActionGrid, Transition};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    Greedy,
    Stochastic,
}

/// Per-cell actions from logits. Greedy ties go to the lowest index.
pub fn sample_actions(logits: &Logits, mode: SampleMode, seed: u64) -> ActionGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_actions_with(logits, mode, &mut rng)
}

pub fn sample_actions_with(logits: &Logits, mode: SampleMode, rng: &mut impl Rng) -> ActionGrid {
    let cells = logits.cells();
    let mut indices = Vec::with_capacity(cells);
    for cell in 0..cells {
        let choice = match mode {
            SampleMode::Greedy => {
                let mut best = 0;
                for a in 1..logits.actions {
                    if logits.at(cell, a) > logits.at(cell, best) {
                        best = a;
                    }
                }
                best
            }
            SampleMode::Stochastic => {
                let p = logits.probabilities(cell);
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = p.len() - 1;
                for (a, pa) in p.iter().enumerate() {
                    acc += pa;
                    if u < acc {
                        pick = a;
                        break;
                    }
                }
                pick
            }
        };
        indices.push(choice as u8);
    }
    ActionGrid::new(logits.height, logits.width, indices).expect("logits carry valid action count")
}

/// `R_t = r_t + γ·R_{t+1}`, seeded with `bootstrap` after the last reward.
pub fn discounted_returns(rewards: &[f64], gamma: f64, bootstrap: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = bootstrap;
    for (o, r) in out.iter_mut().zip(rewards).rev() {
        acc = r + gamma * acc;
        *o = acc;
    }
    out
}

/// One rollout: the transitions plus the value to bootstrap from after the
/// last one (zero when the episode terminated).
#[derive(Debug, Clone, Default)]
pub struct EpisodeTrace {
    pub transitions: Vec<Transition>,
    pub bootstrap: f64,
}

impl EpisodeTrace {
    pub fn rewards(&self) -> Vec<f64> {
        self.transitions.iter().map(|t| t.reward).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossOptions {
    pub gamma: f64,
    pub entropy_coeff: f64,
    /// Multiplier on the policy-gradient term.
    pub policy_coeff: f64,
    /// Multiplier on the squared-error value term.
    pub value_coeff: f64,
}

impl Default for LossOptions {
    fn default() -> Self {
        Self { gamma: 0.95, entropy_coeff: 0.01, policy_coeff: 1.0, value_coeff: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    /// `−mean(log π(a|s)·A)`
    pub policy: f64,
    /// `mean(entropy(π))`
    pub entropy: f64,
    /// `mean((R − V)²)`
    pub value: f64,
    pub total: f64,
}

/// Actor-critic loss and its gradient.
///
/// With per-cell advantage `A = R_t − V(s_t)` (V detached):
/// `total = policy_coeff·(−mean(log π·A) − entropy_coeff·mean(H)) + value_coeff·mean((R − V)²)`.
/// Means run over every cell of every transition. `baselines`, when given,
/// replaces the network's value estimates inside the advantage only.
pub fn a3c_losses_with(
    net: &PolicyValueNet,
    trace: &EpisodeTrace,
    opts: &LossOptions,
    baselines: Option<&[Plane]>,
) -> Result<(LossBreakdown, GradientSet)> {
    if trace.transitions.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let returns = discounted_returns(&trace.rewards(), opts.gamma, trace.bootstrap);
    let cells_total: usize = trace.transitions.iter().map(|t| t.state_image.pixel_count()).sum();
    let norm = 1.0 / cells_total as f64;

    let mut grads = GradientSet::zeros(net.param_count());
    let mut out = LossBreakdown::default();
    for (i, (tr, &ret)) in trace.transitions.iter().zip(&returns).enumerate() {
        let (fwd, cache) = net.forward_cached(&tr.state_image)?;
        if tr.actions.dims() != fwd.values.dims() {
            return Err(Error::DimensionMismatch { expected: fwd.values.dims(), actual: tr.actions.dims() });
        }
        let cells = fwd.logits.cells();
        let actions = fwd.logits.actions;
        let baseline = baselines.map(|b| &b[i]);
        let mut d_logits = vec![0.0; actions * cells];
        let mut d_values = vec![0.0; cells];
        for cell in 0..cells {
            let p = fwd.logits.probabilities(cell);
            let a = tr.actions.indices()[cell] as usize;
            let v = fwd.values.values()[cell];
            let base = baseline.map_or(v, |b| b.values()[cell]);
            let adv = ret - base;
            let log_pa = p[a].max(f64::MIN_POSITIVE).ln();
            let entropy: f64 = -p.iter().filter(|&&q| q > 0.0).map(|q| q * q.ln()).sum::<f64>();
            out.policy -= log_pa * adv * norm;
            out.entropy += entropy * norm;
            out.value += (ret - v) * (ret - v) * norm;
            for (k, &pk) in p.iter().enumerate() {
                let onehot = if k == a { 1.0 } else { 0.0 };
                let d_pg = -adv * (onehot - pk);
                let d_ent = if pk > 0.0 { pk * (pk.ln() + entropy) } else { 0.0 };
                d_logits[k * cells + cell] = opts.policy_coeff * (d_pg + opts.entropy_coeff * d_ent) * norm;
            }
            d_values[cell] = opts.value_coeff * 2.0 * (v - ret) * norm;
        }
        net.backward(&cache, &d_logits, &d_values, &mut grads);
    }
    out.total = opts.policy_coeff * (out.policy - opts.entropy_coeff * out.entropy) + opts.value_coeff * out.value;
    Ok((out, grads))
}

pub fn a3c_losses(
    net: &PolicyValueNet,
    trace: &EpisodeTrace,
    opts: &LossOptions,
) -> Result<(LossBreakdown, GradientSet)> {
    a3c_losses_with(net, trace, opts, None)
}
