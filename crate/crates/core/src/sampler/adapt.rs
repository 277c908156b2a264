//! Random-walk proposal scales tuned during burn-in.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LOG_SCALE_BOUND: f64 = 18.0;

/// One random-walk proposal scale with its acceptance counters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSize {
    pub log_scale: f64,
    /// Acceptances and proposals in the current adaptation window.
    pub accepted: u32,
    pub proposed: u32,
    /// Totals over the whole run, for reporting.
    pub total_accepted: u64,
    pub total_proposed: u64,
}

impl StepSize {
    pub fn new(scale: f64) -> Self {
        Self {
            log_scale: scale.ln(),
            accepted: 0,
            proposed: 0,
            total_accepted: 0,
            total_proposed: 0,
        }
    }

    pub fn scale(&self) -> f64 {
        self.log_scale.exp()
    }

    pub fn jump<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.scale() * z
    }

    pub fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.total_proposed += 1;
        if accepted {
            self.accepted += 1;
            self.total_accepted += 1;
        }
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.total_proposed == 0 {
            f64::NAN
        } else {
            self.total_accepted as f64 / self.total_proposed as f64
        }
    }
}

/// Robbins–Monro step on the log scale: `log s += gain * (rate - target)`,
/// with `gain = 1 / sqrt(window)`. Counters are reset afterwards.
///
/// `window` counts completed adaptation windows starting at 1. Calling this
/// at or after the end of burn-in is a contract violation, since adapting
/// then would break the chain's invariant distribution.
pub fn adapt_step_sizes(
    steps: &mut [StepSize],
    target: f64,
    window: u64,
    iteration: u64,
    n_burnin: u64,
) -> Result<()> {
    if iteration >= n_burnin {
        return Err(Error::Contract(format!(
            "step-size adaptation requested at iteration {iteration}, after burn-in ended at {n_burnin}"
        )));
    }
    let gain = 1.0 / (window.max(1) as f64).sqrt();
    for s in steps {
        if s.proposed > 0 {
            let rate = s.accepted as f64 / s.proposed as f64;
            s.log_scale = (s.log_scale + gain * (rate - target)).clamp(-LOG_SCALE_BOUND, LOG_SCALE_BOUND);
        }
        s.accepted = 0;
        s.proposed = 0;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_rate(acc: u32, n: u32) -> StepSize {
        let mut s = StepSize::new(1.0);
        for i in 0..n {
            s.record(i < acc);
        }
        s
    }

    #[test]
    fn direction_and_fixed_point() {
        let mut v = [with_rate(10, 10), with_rate(0, 10), with_rate(44, 100)];
        adapt_step_sizes(&mut v, 0.44, 1, 5, 100).unwrap();
        assert!(v[0].scale() > 1.0);
        assert!(v[1].scale() < 1.0);
        assert!(v[2].log_scale.abs() < 1e-12);
        assert_eq!(v[0].proposed, 0);
        assert_eq!(v[0].total_proposed, 10);
    }

    #[test]
    fn refuses_after_burnin() {
        let mut v = [with_rate(1, 2)];
        assert!(matches!(adapt_step_sizes(&mut v, 0.44, 3, 100, 100), Err(Error::Contract(_))));
    }
}
