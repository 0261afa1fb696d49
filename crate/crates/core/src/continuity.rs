//! Perturbation bounds between nearby policies.
//!
//! If `u` and `u'` agree on states `0..=n`, their partial products agree
//! there too, so with `S_n = sum_{m<=n} P(m)`
//!
//! ```text
//! 1 + G(u) = S_n + delta(n, u),      1 + G(u') = S_n + delta(n, u'),
//! 1 + sigma = (1 + G(u)) / (1 + G(u')),
//! pi(m, u') = (1 + sigma) pi(m, u)   for m <= n,
//! eta(u') - eta(u) = sigma sum_{m<=n} pi(m,u) f(m,u)
//!                  + sum_{m>n} [pi(m,u') f(m,u') - pi(m,u) f(m,u)].
//! ```
//!
//! Because `S_n >= 1`, `-delta(n, u') < sigma < delta(n, u)`, and both
//! deltas vanish as `n` grows under a geometric certificate. Every term
//! here is computed from certified truncations, giving a bound on
//! `|eta(u) - eta(u')|` that holds for the concrete pair.

use crate::certified::Certified;
use crate::error::{Error, Result};
use crate::line_chain::{eta_line, LineChainModel, LineMode};
use crate::optimizer::Evaluate;
use crate::policy::{distance, Agreement, MetricParams, Policy};
use crate::queue::{EtaWindow, GroupServerModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

/// Full decomposition of `eta(u') - eta(u)` for one policy pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuityReport {
    pub agreement: Agreement,
    /// State through which the head identity is used.
    pub n: usize,
    /// `None` when the metric is undefined for the pair's tails.
    pub distance: Option<f64>,
    pub delta_u: Certified,
    pub delta_u2: Certified,
    /// `sigma` from the truncated deltas, with `error_bound` enclosing
    /// every value consistent with their certified remainders.
    pub sigma: Certified,
    /// `(-delta(n, u'), delta(n, u))`.
    pub sigma_bounds: (f64, f64),
    pub sandwich_holds: bool,
    /// `sigma sum_{m<=n} pi(m,u) f(m,u)`.
    pub head_term: f64,
    /// `sum_{m>n} [pi(m,u') f(m,u') - pi(m,u) f(m,u)]`, truncated.
    pub tail_term: Certified,
    pub eta_u: Certified,
    pub eta_u2: Certified,
    pub eta_diff: Certified,
    /// The three pieces of `rigorous_bound`: the head perturbation
    /// `|sigma| sum |pi f|`, the truncated tail `sum_{m>n} |pi' f'| + |pi f|`,
    /// and the certified remainder beyond the truncation level.
    pub bound_terms: [f64; 3],
    pub rigorous_bound: f64,
    /// `|eta_diff| <= rigorous_bound` up to evaluation error.
    pub sound: bool,
    pub n_trunc: usize,
}

fn window(model: &GroupServerModel, u: &Policy) -> Result<EtaWindow> {
    EtaWindow::new(model, u)
}

/// `sigma(n, u, u')` and the deltas it is bracketed by.
pub fn sigma(model: &GroupServerModel, u: &Policy, u2: &Policy, tol: f64) -> Result<ContinuityReport> {
    eta_diff_bound(model, u, u2, tol)
}

/// Decompose `eta(u') - eta(u)` and bound it; `tol` bounds the error of
/// each `eta` evaluation.
pub fn eta_diff_bound(model: &GroupServerModel, u: &Policy, u2: &Policy, tol: f64) -> Result<ContinuityReport> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    let mut w1 = window(model, u)?;
    let mut w2 = window(model, u2)?;
    let agreement = w1.bound.prefix_agreement(&w2.bound)?;
    let n = match agreement {
        Agreement::Through(k) if k < 0 => return Err(Error::NoAgreement),
        Agreement::Through(k) => k as usize,
        Agreement::Everywhere => w1.bound.prefix_len().max(w2.bound.prefix_len()),
    };
    let dist = distance(&w1.bound, &w2.bound, MetricParams::default()).ok();

    let mut big_n = n.max(w1.prod.certificate.n_bar).max(w2.prod.certificate.n_bar);
    loop {
        w1.extend_to(model, big_n)?;
        w2.extend_to(model, big_n)?;
        if w1.current().error_bound <= tol && w2.current().error_bound <= tol {
            break;
        }
        if big_n >= 50_000_000 {
            return Err(Error::NotConverged { k_cap: big_n, last_change: w1.current().error_bound });
        }
        big_n += 1 + big_n / 16;
    }
    let eta_u = w1.current();
    let eta_u2 = w2.current();

    // u's scale; u2's stored products converted with the shift difference
    let rescale = (w2.prod.log_shift - w1.prod.log_shift).exp();
    let s_n = w1.prod.head(n);
    let d1 = w1.prod.delta_scaled(n, tol)?;
    let d2s = w2.prod.delta_scaled(n, tol)?;
    let d2 = Certified::new(d2s.value * rescale, d2s.error_bound * rescale);
    let sigma_hi = (d1.upper() - d2.value) / (s_n + d2.value);
    let sigma_lo = (d1.value - d2.upper()) / (s_n + d2.upper());
    let sigma_mid = (d1.value - d2.value) / (s_n + d2.value);
    let sigma = Certified::new(sigma_mid, (sigma_hi - sigma_mid).max(sigma_mid - sigma_lo));
    let scale = w1.prod.scale();
    let delta_u = Certified::new(d1.value * scale, d1.error_bound * scale);
    let delta_u2 = Certified::new(d2.value * scale, d2.error_bound * scale);
    let sigma_bounds = (-delta_u2.upper(), delta_u.upper());
    let sandwich_holds = if delta_u.upper() == 0.0 && delta_u2.upper() == 0.0 {
        sigma.value == 0.0
    } else {
        sigma_bounds.0 < sigma.lower() && sigma.upper() < sigma_bounds.1
    };

    let t1 = w1.prod.head(big_n);
    let t2 = w2.prod.head(big_n);
    let pi1 = |m: usize| w1.prod.p[m] / t1;
    let pi2 = |m: usize| w2.prod.p[m] / t2;
    let head_signed: f64 = (0..=n).map(|m| pi1(m) * w1.costs[m]).sum();
    let head_abs: f64 = (0..=n).map(|m| pi1(m) * w1.costs[m].abs()).sum();
    let mut tail_value = 0.0;
    let mut tail_abs = 0.0;
    for m in n + 1..=big_n {
        let a = pi2(m) * w2.costs[m];
        let b = pi1(m) * w1.costs[m];
        tail_value += a - b;
        tail_abs += a.abs() + b.abs();
    }
    let remainder = w1.abs_tail_bound(big_n) + w2.abs_tail_bound(big_n);
    let sigma_abs = sigma.lower().abs().max(sigma.upper().abs());
    // identical policies share pi and f, so the difference vanishes termwise
    let bound_terms = match agreement {
        Agreement::Everywhere => [0.0; 3],
        Agreement::Through(_) => [sigma_abs * head_abs, tail_abs, remainder],
    };
    let rigorous_bound: f64 = bound_terms.iter().sum();
    let eta_diff = Certified::new(eta_u2.value - eta_u.value, eta_u.error_bound + eta_u2.error_bound);
    let sound = eta_diff.value.abs() <= rigorous_bound + eta_diff.error_bound + 1e-10;

    Ok(ContinuityReport {
        agreement,
        n,
        distance: dist,
        delta_u,
        delta_u2,
        sigma,
        sigma_bounds,
        sandwich_holds,
        head_term: sigma.value * head_signed,
        tail_term: Certified::new(tail_value, remainder),
        eta_u,
        eta_u2,
        eta_diff,
        bound_terms,
        rigorous_bound,
        sound,
        n_trunc: big_n,
    })
}

/// `|eta(u') - eta(u)|` and an upper bound on it for one sampled pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairBound {
    pub eta_diff: f64,
    pub bound: f64,
}

/// Models on which neighbourhoods of a policy can be scanned.
pub trait NeighborhoodModel: Evaluate {
    fn pair_bound(&self, u: &Policy, u2: &Policy, tol: f64) -> Result<PairBound>;
}

impl NeighborhoodModel for GroupServerModel {
    fn pair_bound(&self, u: &Policy, u2: &Policy, tol: f64) -> Result<PairBound> {
        let r = eta_diff_bound(self, u, u2, tol)?;
        Ok(PairBound { eta_diff: r.eta_diff.value.abs(), bound: r.rigorous_bound + r.eta_diff.error_bound })
    }
}

impl NeighborhoodModel for LineChainModel {
    /// Exact: if `u` stops inside the agreed prefix both policies stop
    /// there. Otherwise both values lie in `{0} U {f0(i) : i > k}`, which
    /// is `[0, 1/(k+1)]` for costs and `{0} U [1 - 1/(k+1), 1)` for rewards.
    fn pair_bound(&self, u: &Policy, u2: &Policy, _tol: f64) -> Result<PairBound> {
        let u = u.bind(self)?;
        let u2 = u2.bind(self)?;
        let diff = (eta_line(self, &u)? - eta_line(self, &u2)?).abs();
        let k = match u.prefix_agreement(&u2)? {
            Agreement::Everywhere => return Ok(PairBound { eta_diff: diff, bound: 0.0 }),
            Agreement::Through(k) => k.max(0) as usize,
        };
        let eta = eta_line(self, &u)?;
        let bound = match self.first_stop(&u)? {
            Some(i) if i <= k => 0.0,
            _ => match self.mode {
                LineMode::Cost => eta.max(1.0 / (k as f64 + 1.0) - eta),
                LineMode::Reward => eta.max(1.0 - eta),
            },
        };
        Ok(PairBound { eta_diff: diff, bound })
    }
}

/// How neighbours `u'` of `u` agreeing through `k` are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sampler {
    pub samples_per_k: usize,
    /// Mutations touch states `k+1 ..= k+depth`.
    pub depth: usize,
    /// Probability of also replacing the tail by a random constant action.
    pub tail_prob: f64,
    pub seed: u64,
}

impl Default for Sampler {
    fn default() -> Self {
        Self { samples_per_k: 32, depth: 8, tail_prob: 0.25, seed: 0 }
    }
}

impl Sampler {
    /// `u` itself, the deterministic worst case (the first alternative
    /// action at state `k+1`) and random mutations. The boolean is true
    /// when no state in the mutation window has a second action.
    pub fn neighbours<M: NeighborhoodModel>(&self, model: &M, u: &Policy, k: usize) -> Result<(Vec<Policy>, bool)> {
        let u = u.bind(model)?;
        let width = k + 1 + self.depth;
        let base = u.extended_to(width)?;
        let mut out = vec![u.clone()];
        let choices: Vec<Vec<crate::policy::Action>> = (k + 1..width).map(|s| model.actions(s)).collect();
        let exhausted = choices.iter().all(|c| c.len() < 2);
        if exhausted {
            return Ok((out, true));
        }
        if let Some(first) = choices.first() {
            let cur = base.action_at(k + 1)?;
            if let Some(alt) = first.iter().find(|a| *a != cur) {
                let mut worst = base.clone();
                worst.prefix[k + 1] = alt.clone();
                out.push(worst);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(k as u64);
        let tail_actions = model.actions(width);
        for _ in 0..self.samples_per_k {
            let mut v = base.clone();
            for (j, set) in choices.iter().enumerate() {
                if rng.random_bool(0.5) {
                    v.prefix[k + 1 + j] = set[rng.random_range(0..set.len())].clone();
                }
            }
            if rng.random_bool(self.tail_prob) {
                let a = tail_actions[rng.random_range(0..tail_actions.len())].clone();
                v.tail = crate::policy::TailRule::Constant(a);
            }
            out.push(v);
        }
        Ok((out, false))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModulusRow {
    pub k: usize,
    pub radius: f64,
    pub samples: usize,
    pub skipped_unstable: usize,
    pub max_diff: f64,
    pub max_bound: f64,
    pub exhausted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModulusScan {
    pub rows: Vec<ModulusRow>,
    pub diff_nonincreasing: bool,
    pub bound_nonincreasing: bool,
    /// The largest difference at the last `k` is still more than half of
    /// that at the first: the modulus does not appear to vanish.
    pub discontinuity_suspected: bool,
}

/// For each `k`, the largest `|eta(u') - eta(u)|` and the largest bound
/// over sampled `u'` agreeing with `u` through state `k`.
pub fn modulus_scan<M: NeighborhoodModel>(
    model: &M,
    u: &Policy,
    ks: &[usize],
    sampler: &Sampler,
    params: MetricParams,
    tol: f64,
) -> Result<ModulusScan> {
    if ks.is_empty() {
        return Err(Error::InvalidParameter("ks must be nonempty".into()));
    }
    if ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("ks must be strictly ascending".into()));
    }
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let (neighbours, exhausted) = sampler.neighbours(model, u, k)?;
        let results: Vec<Result<PairBound>> = neighbours.par_iter().map(|v| model.pair_bound(u, v, tol)).collect();
        let mut row = ModulusRow {
            k,
            radius: params.radius(k as u32),
            samples: 0,
            skipped_unstable: 0,
            max_diff: 0.0,
            max_bound: 0.0,
            exhausted,
        };
        for r in results {
            match r {
                Ok(b) => {
                    row.samples += 1;
                    row.max_diff = row.max_diff.max(b.eta_diff);
                    row.max_bound = row.max_bound.max(b.bound);
                }
                Err(e) if e.is_instability() => row.skipped_unstable += 1,
                Err(e) => return Err(e),
            }
        }
        rows.push(row);
    }
    let diff_nonincreasing = rows.windows(2).all(|w| w[1].max_diff <= w[0].max_diff);
    let bound_nonincreasing = rows.windows(2).all(|w| w[1].max_bound <= w[0].max_bound);
    let first = rows[0].max_diff;
    let last = rows[rows.len() - 1].max_diff;
    let discontinuity_suspected = rows.len() > 1 && first > tol && last > 0.5 * first;
    Ok(ModulusScan { rows, diff_nonincreasing, bound_nonincreasing, discontinuity_suspected })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::queue::{HoldingCost, ServerGroup};

    fn mm1(lambda: f64) -> GroupServerModel {
        GroupServerModel::new(
            lambda,
            vec![ServerGroup { servers: 2, mu: 1.0, cost: 0.5 }],
            HoldingCost::Polynomial(vec![0.0, 1.0]),
        )
        .unwrap()
    }

    fn p(s: &str) -> Policy {
        s.parse().unwrap()
    }

    #[test]
    fn identical_policies() {
        let q = mm1(0.5);
        let u = p("prefix=[(0),(1)];tail=constant((2))");
        let r = eta_diff_bound(&q, &u, &u, 1e-10).unwrap();
        assert_eq!(r.sigma.value, 0.0);
        assert_eq!(r.eta_diff.value, 0.0);
        assert_eq!(r.rigorous_bound, 0.0);
        assert!(r.sound && r.sandwich_holds);
    }

    #[test]
    fn deep_disagreement_has_tiny_sigma() {
        // single server at rho = 0.5 up to state 10, two servers beyond
        let q = mm1(0.5);
        let u = p("prefix=[];tail=constant((1))");
        let u2 = Policy::new(vec![crate::Action(vec![1]); 11], crate::TailRule::Constant(crate::Action(vec![2])));
        let r = eta_diff_bound(&q, &u, &u2, 1e-12).unwrap();
        assert_eq!(r.n, 10);
        let oracle = 0.5f64.powi(11) / (1.0 - 0.5);
        assert!((r.delta_u.value - oracle).abs() < 1e-12);
        assert!(r.sigma.value.abs() < 2f64.powi(-10));
        assert!(r.sandwich_holds && r.sound);
    }

    #[test]
    fn head_scaling_identity() {
        let q = mm1(0.7);
        let u = p("prefix=[(0),(1),(1),(1)];tail=constant((2))");
        let u2 = p("prefix=[(0),(1),(1),(2),(1)];tail=constant((1))");
        let r = eta_diff_bound(&q, &u, &u2, 1e-12).unwrap();
        assert_eq!(r.n, 2);
        let a = crate::queue::steady_state(&q, &u, 1e-14).unwrap();
        let b = crate::queue::steady_state(&q, &u2, 1e-14).unwrap();
        for m in 0..=r.n {
            assert!((b.pi[m] - (1.0 + r.sigma.value) * a.pi[m]).abs() < 1e-8 * a.pi[m]);
        }
        assert!(r.sound && r.sandwich_holds);
    }

    #[test]
    fn zero_arrivals() {
        let q = mm1(0.0);
        let u = p("prefix=[(0)];tail=constant((1))");
        let u2 = p("prefix=[(0),(2)];tail=constant((1))");
        let r = eta_diff_bound(&q, &u, &u2, 1e-10).unwrap();
        assert_eq!(r.sigma.value, 0.0);
        assert!(r.sandwich_holds);
    }

    #[test]
    fn differing_at_zero_is_rejected() {
        let q = mm1(0.5);
        let u = p("prefix=[(0)];tail=constant((1))");
        let u2 = p("prefix=[(1)];tail=constant((1))");
        assert_eq!(eta_diff_bound(&q, &u, &u2, 1e-10).unwrap_err(), Error::NoAgreement);
    }

    #[test]
    fn scan_of_u_alone() {
        let q = mm1(0.5);
        let u = p("prefix=[];tail=constant((1))");
        let s = Sampler { samples_per_k: 0, depth: 0, tail_prob: 0.0, seed: 1 };
        let scan = modulus_scan(&q, &u, &[0], &s, MetricParams::default(), 1e-10).unwrap();
        assert_eq!(scan.rows[0].max_diff, 0.0);
        assert!(scan.rows[0].exhausted);
    }

    #[test]
    fn line_chain_contrast() {
        let s = Sampler::default();
        let all_one = p("prefix=[];tail=constant(1)");
        let ks = [1, 2, 4, 8, 16];
        let c = modulus_scan(&LineChainModel::cost(), &all_one, &ks, &s, MetricParams::default(), 1e-9).unwrap();
        assert!(!c.discontinuity_suspected && c.diff_nonincreasing && c.bound_nonincreasing);
        let r = modulus_scan(&LineChainModel::reward(), &all_one, &ks, &s, MetricParams::default(), 1e-9).unwrap();
        assert!(r.discontinuity_suspected);
        for row in &r.rows {
            assert!(row.max_diff >= 1.0 - 1.0 / row.k as f64);
            assert!(row.max_diff <= row.max_bound);
        }
    }
}
