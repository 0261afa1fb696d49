//! Event-driven simulation of the group-server queue.
//!
//! The chain jumps up at rate `lambda` and down at the aggregate rate
//! `u(n).mu`; individual servers are not tracked since the queue length
//! process only depends on the aggregate rate. The time average after a
//! warmup period is split into equal-width batches whose means give a
//! Student-t confidence interval.

use crate::error::{Error, Result};
use crate::policy::{Action, Policy};
use crate::queue::GroupServerModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    pub horizon: f64,
    pub warmup: f64,
    pub seed: u64,
    pub batches: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { horizon: 1e5, warmup: 1e3, seed: 0, batches: 20 }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.warmup > 0.0) || !(self.horizon > self.warmup) || !self.horizon.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "need horizon > warmup > 0, got horizon {} and warmup {}",
                self.horizon, self.warmup
            )));
        }
        if self.batches < 2 {
            return Err(Error::InvalidParameter("at least 2 batches are required".into()));
        }
        Ok(())
    }
}

/// Time-average estimate with a batch-means confidence interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimEstimate {
    pub eta_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Standard error of `eta_hat` from the batch means.
    pub std_err: f64,
    pub batch_means: Vec<f64>,
    pub events: u64,
}

impl SimEstimate {
    /// The 95% interval widened by `z` standard errors on each side.
    pub fn widened(&self, z: f64) -> (f64, f64) {
        (self.ci_lo - z * self.std_err, self.ci_hi + z * self.std_err)
    }

    pub fn widened_contains(&self, x: f64, z: f64) -> bool {
        let (lo, hi) = self.widened(z);
        lo <= x && x <= hi
    }
}

/// Simulate `f(n, u(n))` averaged over time.
pub fn simulate_observable<F>(model: &GroupServerModel, u: &Policy, cfg: &SimConfig, f: F) -> Result<SimEstimate>
where
    F: Fn(usize, &Action) -> f64,
{
    cfg.validate()?;
    let u = u.bind(model)?;
    let lambda = model.lambda();
    let mut rates: Vec<f64> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let ensure = |n: usize, rates: &mut Vec<f64>, values: &mut Vec<f64>| -> Result<()> {
        while rates.len() <= n {
            let m = rates.len();
            let a = u.action_at(m)?;
            rates.push(if m == 0 { 0.0 } else { model.service_rate(a)? });
            values.push(f(m, a));
        }
        Ok(())
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let width = (cfg.horizon - cfg.warmup) / cfg.batches as f64;
    let mut sums = vec![0.0; cfg.batches];
    // value seen throughout a batch, if it never changed
    let mut only: Vec<Option<Option<f64>>> = vec![None; cfg.batches];
    let mut n = 0usize;
    let mut t = 0.0;
    let mut events = 0u64;
    ensure(0, &mut rates, &mut values)?;
    while t < cfg.horizon {
        let down = rates[n];
        let total = lambda + down;
        let dt = if total > 0.0 {
            let e: f64 = rng.sample(Exp1);
            e / total
        } else {
            f64::INFINITY
        };
        let end = (t + dt).min(cfg.horizon);
        for idx in accumulate(&mut sums, cfg.warmup, width, t, end, values[n]) {
            only[idx] = match only[idx] {
                None => Some(Some(values[n])),
                Some(Some(v)) if v == values[n] => Some(Some(v)),
                _ => Some(None),
            };
        }
        t = end;
        if t >= cfg.horizon {
            break;
        }
        events += 1;
        if rng.random::<f64>() * total < lambda {
            n += 1;
        } else {
            n -= 1;
        }
        ensure(n, &mut rates, &mut values)?;
    }

    let batch_means: Vec<f64> = sums
        .iter()
        .zip(&only)
        .map(|(s, c)| match c {
            Some(Some(v)) => *v,
            _ => s / width,
        })
        .collect();
    let b = batch_means.len() as f64;
    let eta_hat = batch_means.iter().sum::<f64>() / b;
    let var = batch_means.iter().map(|x| (x - eta_hat).powi(2)).sum::<f64>() / (b - 1.0);
    let std_err = (var / b).sqrt();
    let t_crit =
        StudentsT::new(0.0, 1.0, b - 1.0).map_err(|e| Error::InvalidParameter(e.to_string()))?.inverse_cdf(0.975);
    Ok(SimEstimate {
        eta_hat,
        ci_lo: eta_hat - t_crit * std_err,
        ci_hi: eta_hat + t_crit * std_err,
        std_err,
        batch_means,
        events,
    })
}

/// Add `value * |[from, to) ∩ batch|` to each batch after the warmup;
/// returns the range of batches touched.
fn accumulate(sums: &mut [f64], warmup: f64, width: f64, from: f64, to: f64, value: f64) -> std::ops::Range<usize> {
    let from = from.max(warmup);
    if to <= from {
        return 0..0;
    }
    let last = sums.len() - 1;
    let first = (((from - warmup) / width) as usize).min(last);
    let mut touched = first;
    let mut a = from;
    while a < to {
        let idx = (((a - warmup) / width) as usize).min(last);
        let edge = if idx == last { to } else { warmup + (idx + 1) as f64 * width };
        let b = edge.min(to);
        sums[idx] += value * (b - a);
        touched = idx;
        if b <= a {
            break;
        }
        a = b;
    }
    first..touched + 1
}

/// Simulated long-run average cost of `u`.
pub fn simulate_eta(model: &GroupServerModel, u: &Policy, cfg: &SimConfig) -> Result<SimEstimate> {
    simulate_observable(model, u, cfg, |n, a| model.cost(n, a).unwrap_or(f64::NAN))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::queue::{HoldingCost, ServerGroup};

    fn mm1(lambda: f64) -> GroupServerModel {
        GroupServerModel::new(
            lambda,
            vec![ServerGroup { servers: 1, mu: 1.0, cost: 0.0 }],
            HoldingCost::Polynomial(vec![2.5, 1.0]),
        )
        .unwrap()
    }

    #[test]
    fn empty_system_stays_empty() {
        let q = mm1(0.0);
        let u: Policy = "prefix=[];tail=constant((1))".parse().unwrap();
        let est = simulate_eta(&q, &u, &SimConfig { horizon: 100.0, warmup: 1.0, seed: 3, batches: 5 }).unwrap();
        assert_eq!(est.eta_hat, 2.5);
        assert_eq!(est.events, 0);
        assert_eq!(est.std_err, 0.0);
    }

    #[test]
    fn same_seed_same_estimate() {
        let q = mm1(0.5);
        let u: Policy = "prefix=[];tail=constant((1))".parse().unwrap();
        let cfg = SimConfig { horizon: 2e4, warmup: 100.0, seed: 42, batches: 10 };
        let a = simulate_eta(&q, &u, &cfg).unwrap();
        let b = simulate_eta(&q, &u, &cfg).unwrap();
        assert_eq!(a, b);
        let c = simulate_eta(&q, &u, &SimConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a.eta_hat, c.eta_hat);
    }

    #[test]
    fn batch_accumulation_splits_intervals() {
        let mut sums = vec![0.0; 4];
        accumulate(&mut sums, 1.0, 1.0, 0.0, 5.0, 2.0);
        assert_eq!(sums, vec![2.0; 4]);
        let mut sums = vec![0.0; 2];
        accumulate(&mut sums, 1.0, 2.0, 1.5, 4.0, 1.0);
        assert_eq!(sums, vec![1.5, 1.0]);
    }

    #[test]
    fn config_checks() {
        assert!(SimConfig { horizon: 10.0, warmup: 10.0, seed: 0, batches: 4 }.validate().is_err());
        assert!(SimConfig { horizon: 10.0, warmup: 0.0, seed: 0, batches: 4 }.validate().is_err());
        assert!(SimConfig { horizon: 10.0, warmup: 1.0, seed: 0, batches: 1 }.validate().is_err());
    }

    #[test]
    fn mm1_estimate_near_one() {
        let q = GroupServerModel::new(
            0.5,
            vec![ServerGroup { servers: 1, mu: 1.0, cost: 0.0 }],
            HoldingCost::Polynomial(vec![0.0, 1.0]),
        )
        .unwrap();
        let u: Policy = "prefix=[];tail=constant((1))".parse().unwrap();
        let est = simulate_eta(&q, &u, &SimConfig { horizon: 2e5, warmup: 1e3, seed: 7, batches: 20 }).unwrap();
        assert!(est.widened_contains(1.0, 3.0), "{est:?}");
        let idle =
            simulate_observable(&q, &u, &SimConfig { horizon: 2e5, warmup: 1e3, seed: 8, batches: 20 }, |n, _| {
                (n == 0) as u8 as f64
            })
            .unwrap();
        assert!(idle.widened_contains(0.5, 3.0), "{idle:?}");
    }
}
