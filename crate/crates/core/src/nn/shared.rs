use std::sync::RwLock;

use super::net::{GradientSet, PolicyValueNet};
use crate::error::{Error, Result};

/// Parameter store shared by the asynchronous workers.
///
/// Reads take a consistent snapshot; updates hold the write lock for the
/// whole accumulate-apply so no update is lost or torn.
#[derive(Debug)]
pub struct SharedParams {
    net: RwLock<PolicyValueNet>,
    updates: RwLock<usize>,
}

impl SharedParams {
    pub fn new(net: PolicyValueNet) -> Self {
        Self { net: RwLock::new(net), updates: RwLock::new(0) }
    }

    pub fn snapshot(&self) -> PolicyValueNet {
        self.net.read().expect("parameter lock poisoned").clone()
    }

    pub fn update_count(&self) -> usize {
        *self.updates.read().expect("update counter poisoned")
    }

    /// `params -= learning_rate · grads`
    pub fn apply_update(&self, grads: &GradientSet, learning_rate: f64) -> Result<()> {
        let mut net = self.net.write().expect("parameter lock poisoned");
        if grads.len() != net.param_count() {
            return Err(Error::ShapeMismatch(format!(
                "gradient has {} entries, network has {}",
                grads.len(),
                net.param_count()
            )));
        }
        for (p, g) in net.params_mut().iter_mut().zip(&grads.values) {
            *p -= learning_rate * g;
        }
        *self.updates.write().expect("update counter poisoned") += 1;
        Ok(())
    }

    pub fn into_inner(self) -> PolicyValueNet {
        self.net.into_inner().expect("parameter lock poisoned")
    }
}

pub fn apply_update(shared: &SharedParams, grads: &GradientSet, learning_rate: f64) -> Result<()> {
    shared.apply_update(grads, learning_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::net::Architecture;

    fn grads_like(net: &PolicyValueNet, f: impl Fn(usize) -> f64) -> GradientSet {
        GradientSet { values: (0..net.param_count()).map(f).collect() }
    }

    #[test]
    fn single_and_sequential_updates() {
        let net = PolicyValueNet::init(Architecture::tiny(), 1).unwrap();
        let shared = SharedParams::new(net.clone());
        let g1 = grads_like(&net, |i| (i % 7) as f64 - 3.0);
        let g2 = grads_like(&net, |i| (i % 5) as f64 * 0.5);
        shared.apply_update(&g1, 0.002).unwrap();
        let after1 = shared.snapshot();
        for ((a, b), g) in after1.params().iter().zip(net.params()).zip(&g1.values) {
            assert!((a - b + 0.002 * g).abs() < 1e-15);
        }
        shared.apply_update(&g2, 0.002).unwrap();
        let after2 = shared.snapshot();
        for (i, (a, b)) in after2.params().iter().zip(net.params()).enumerate() {
            assert!((a - b + 0.002 * (g1.values[i] + g2.values[i])).abs() < 1e-14);
        }
        assert_eq!(shared.update_count(), 2);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let shared = SharedParams::new(PolicyValueNet::zeros(Architecture::tiny()).unwrap());
        assert!(matches!(shared.apply_update(&GradientSet::zeros(3), 0.1), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn concurrent_updates_are_not_lost() {
        let net = PolicyValueNet::zeros(Architecture::tiny()).unwrap();
        let shared = SharedParams::new(net.clone());
        // Powers of two keep the float sums exact regardless of ordering.
        let g = grads_like(&net, |i| if i % 2 == 0 { 1.0 } else { -0.5 });
        let workers = 8;
        let per_worker = 25;
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| {
                    for _ in 0..per_worker {
                        shared.apply_update(&g, 0.125).unwrap();
                        let _ = shared.snapshot();
                    }
                });
            }
        });
        let n = (workers * per_worker) as f64;
        let out = shared.snapshot();
        for (p, gv) in out.params().iter().zip(&g.values) {
            assert_eq!(*p, -0.125 * n * gv);
        }
        assert_eq!(shared.update_count(), workers * per_worker);
    }
}
