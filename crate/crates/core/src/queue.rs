//! Group-server queue with on/off server control.
//!
//! Customers arrive as a Poisson stream with rate `lambda` into one
//! buffer served by `K` groups of exponential servers. At state `n`
//! (customers in system) the action `a = (a_1, ..., a_K)` fixes how many
//! servers of each group are on, giving the birth-death chain
//!
//! ```text
//! n -> n+1 at rate lambda,     n -> n-1 at rate a.mu = sum_k a_k mu_k
//! ```
//!
//! with product-form steady state `pi(n) = P(n) / (1 + G)`,
//! `P(n) = prod_{l=1..n} lambda / (u(l).mu)` and `G = sum_{n>=1} P(n)`.
//! Truncation levels are chosen from a geometric certificate: once every
//! ratio `lambda / (u(l).mu)` beyond some state is at most `q < 1`, the
//! neglected mass after `N` is at most `P(N) q / (1 - q)`.

use crate::certified::{geometric_poly_tail, poly_eval, Certified};
use crate::error::{Error, Result};
use crate::policy::{Action, ActionSpace, Policy};
use serde::Serialize;

/// Hard ceiling on truncation levels; reaching it means the certificate
/// ratio is so close to one that the requested tolerance is unreachable.
const MAX_TRUNCATION: usize = 50_000_000;

/// One homogeneous group of parallel servers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ServerGroup {
    pub servers: u32,
    pub mu: f64,
    pub cost: f64,
}

/// Holding cost rate `h(n)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum HoldingCost {
    /// `h(n) = sum_j coeffs[j] n^j`.
    Polynomial(Vec<f64>),
    /// `h(n) = (-1)^n n`, unbounded above and below.
    SignedLinear,
    /// `h(n) = base^n`; evaluable but without a polynomial growth bound.
    Exponential { base: f64 },
}

impl HoldingCost {
    pub fn eval(&self, n: usize) -> f64 {
        match self {
            HoldingCost::Polynomial(c) => poly_eval(c, n as f64),
            HoldingCost::SignedLinear => {
                if n.is_multiple_of(2) {
                    n as f64
                } else {
                    -(n as f64)
                }
            }
            HoldingCost::Exponential { base } => base.powi(n as i32),
        }
    }

    /// Coefficients of a polynomial with nonnegative coefficients that
    /// dominates `|h(n)|`, or `None` for super-polynomial growth.
    pub fn abs_majorant(&self) -> Option<Vec<f64>> {
        match self {
            HoldingCost::Polynomial(c) => Some(c.iter().map(|x| x.abs()).collect()),
            HoldingCost::SignedLinear => Some(vec![0.0, 1.0]),
            HoldingCost::Exponential { base } if base.abs() <= 1.0 => Some(vec![1.0]),
            HoldingCost::Exponential { .. } => None,
        }
    }

    fn describe(&self) -> String {
        match self {
            HoldingCost::Polynomial(c) => format!("polynomial {c:?}"),
            HoldingCost::SignedLinear => "signed_linear".into(),
            HoldingCost::Exponential { base } => format!("exponential base {base}"),
        }
    }
}

/// Queue with `K` server groups, kept in canonical order `mu_1 >= mu_2 >= ...`.
///
/// Action tuples always refer to the canonical group order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupServerModel {
    lambda: f64,
    groups: Vec<ServerGroup>,
    holding: HoldingCost,
    busy_actions: Option<Vec<Action>>,
}

impl GroupServerModel {
    pub fn new(lambda: f64, mut groups: Vec<ServerGroup>, holding: HoldingCost) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidModel(format!("arrival rate must be finite and >= 0, got {lambda}")));
        }
        if groups.is_empty() {
            return Err(Error::InvalidModel("at least one server group is required".into()));
        }
        for (k, g) in groups.iter().enumerate() {
            if g.servers == 0 {
                return Err(Error::InvalidModel(format!("group {} has no servers", k + 1)));
            }
            if !(g.mu > 0.0) || !g.mu.is_finite() {
                return Err(Error::InvalidModel(format!("group {} service rate must be > 0", k + 1)));
            }
            if !g.cost.is_finite() {
                return Err(Error::InvalidModel(format!("group {} cost rate is not finite", k + 1)));
            }
        }
        groups.sort_by(|a, b| b.mu.total_cmp(&a.mu));
        Ok(Self { lambda, groups, holding, busy_actions: None })
    }

    /// Restrict the action set used at busy states `n >= 1`.
    pub fn with_busy_actions(mut self, actions: Vec<Action>) -> Result<Self> {
        if actions.is_empty() {
            return Err(Error::InvalidModel("restricted action set is empty".into()));
        }
        let mut actions = actions;
        actions.sort();
        actions.dedup();
        for a in &actions {
            self.check_action(a)?;
            if a.0[0] == 0 {
                return Err(Error::InvalidModel(format!("action {a} leaves group 1 idle at a busy state")));
            }
        }
        self.busy_actions = Some(actions);
        Ok(self)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn groups(&self) -> &[ServerGroup] {
        &self.groups
    }

    pub fn holding(&self) -> &HoldingCost {
        &self.holding
    }

    /// Copy of the model with a different arrival rate.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        let mut m = Self::new(lambda, self.groups.clone(), self.holding.clone())?;
        m.busy_actions = self.busy_actions.clone();
        Ok(m)
    }

    fn check_action(&self, a: &Action) -> Result<()> {
        if a.0.len() != self.groups.len() {
            return Err(Error::InvalidParameter(format!(
                "action {a} has {} components, model has {} groups",
                a.0.len(),
                self.groups.len()
            )));
        }
        for (k, (&on, g)) in a.0.iter().zip(&self.groups).enumerate() {
            if on > g.servers {
                return Err(Error::InvalidParameter(format!(
                    "action {a}: group {} has only {} servers",
                    k + 1,
                    g.servers
                )));
            }
        }
        Ok(())
    }

    /// Aggregate service rate `sum_k a_k mu_k`.
    pub fn service_rate(&self, a: &Action) -> Result<f64> {
        self.check_action(a)?;
        Ok(a.0.iter().zip(&self.groups).map(|(&on, g)| on as f64 * g.mu).sum())
    }

    /// Operating cost rate `sum_k c_k a_k`.
    pub fn operating_cost(&self, a: &Action) -> Result<f64> {
        self.check_action(a)?;
        Ok(a.0.iter().zip(&self.groups).map(|(&on, g)| on as f64 * g.cost).sum())
    }

    /// `f(n, a) = h(n) + sum_k c_k a_k`.
    pub fn cost(&self, n: usize, a: &Action) -> Result<f64> {
        Ok(self.holding.eval(n) + self.operating_cost(a)?)
    }

    fn product_actions(&self, first_min: u32) -> Vec<Action> {
        let mut out = vec![Vec::new()];
        for (k, g) in self.groups.iter().enumerate() {
            let lo = if k == 0 { first_min } else { 0 };
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    (lo..=g.servers).map(move |on| {
                        let mut v = prefix.clone();
                        v.push(on);
                        v
                    })
                })
                .collect();
        }
        out.into_iter().map(Action).collect()
    }
}

impl ActionSpace for GroupServerModel {
    fn actions(&self, state: usize) -> Vec<Action> {
        if state == 0 {
            self.product_actions(0)
        } else {
            match &self.busy_actions {
                Some(a) => a.clone(),
                None => self.product_actions(1),
            }
        }
    }

    fn is_feasible(&self, state: usize, action: &Action) -> bool {
        if self.check_action(action).is_err() {
            return false;
        }
        if state == 0 {
            return true;
        }
        match &self.busy_actions {
            Some(a) => a.contains(action),
            None => action.0[0] >= 1,
        }
    }

    fn homogeneous_from(&self) -> usize {
        1
    }

    fn all_on(&self) -> Option<Action> {
        Some(Action(self.groups.iter().map(|g| g.servers).collect()))
    }
}

/// Death rates of the birth-death chain induced by a bound policy.
#[derive(Debug, Clone)]
pub(crate) struct RateProfile {
    lambda: f64,
    prefix: Vec<f64>,
    tail: Vec<f64>,
}

impl RateProfile {
    pub(crate) fn rate(&self, n: usize) -> f64 {
        match self.prefix.get(n) {
            Some(r) => *r,
            None => self.tail[(n - self.prefix.len()) % self.tail.len()],
        }
    }

    fn ratio(&self, n: usize) -> f64 {
        if self.lambda == 0.0 {
            0.0
        } else {
            self.lambda / self.rate(n)
        }
    }
}

/// Geometric stability certificate of a policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityCertificate {
    /// Every state beyond `n_bar` has service rate above `lambda`.
    pub n_bar: usize,
    /// Largest ratio `lambda / (u(n).mu)` over all states after the last
    /// state with service rate `<= lambda`.
    pub rho0: f64,
    /// Largest ratio over the tail states `>= max(L, 1)`; `<= rho0`.
    pub tail_ratio: f64,
}

fn rate_profile(model: &GroupServerModel, u: &Policy) -> Result<(Policy, RateProfile)> {
    // ergodicity first, so a zero-rate action is reported as such rather
    // than as an infeasible action
    let l = u.prefix_len();
    for (n, a) in u.prefix.iter().enumerate().skip(1) {
        if model.service_rate(a)? == 0.0 {
            return Err(Error::ErgodicityViolation { state: n });
        }
    }
    for a in u.tail.actions() {
        if model.service_rate(&a)? == 0.0 {
            return Err(Error::ErgodicityViolation { state: l.max(1) });
        }
    }
    let bound = u.bind(model)?;
    let prefix = bound.prefix.iter().map(|a| model.service_rate(a)).collect::<Result<Vec<_>>>()?;
    let period = match &bound.tail {
        crate::policy::TailRule::Cycle(c) => c.len(),
        _ => 1,
    };
    let tail = (l..l + period).map(|n| model.service_rate(bound.action_at(n)?)).collect::<Result<Vec<_>>>()?;
    Ok((bound, RateProfile { lambda: model.lambda, prefix, tail }))
}

fn certificate_for(profile: &RateProfile, prefix_len: usize) -> Result<StabilityCertificate> {
    let lambda = profile.lambda;
    let first_tail = prefix_len.max(1);
    for j in 0..profile.tail.len() {
        let n = first_tail + j;
        let rate = profile.rate(n);
        if rate <= lambda {
            return Err(Error::Unstable { state: n, rate, lambda });
        }
    }
    let last_bad = (1..prefix_len).filter(|&n| profile.rate(n) <= lambda).max();
    let tail_ratio = (first_tail..first_tail + profile.tail.len()).map(|n| profile.ratio(n)).fold(0.0, f64::max);
    let start = last_bad.map_or(1, |b| b + 1);
    let rho0 = (start..prefix_len).map(|n| profile.ratio(n)).fold(tail_ratio, f64::max);
    let n_bar = last_bad.unwrap_or(0).max(prefix_len.saturating_sub(1));
    Ok(StabilityCertificate { n_bar, rho0, tail_ratio })
}

/// Checks the drift condition `u(n).mu > lambda` beyond some state and
/// returns the geometric ratio bounding the tail of the partial products.
pub fn stability_certificate(model: &GroupServerModel, u: &Policy) -> Result<StabilityCertificate> {
    let (bound, profile) = rate_profile(model, u)?;
    certificate_for(&profile, bound.prefix_len())
}

/// Partial products `P(n)` stored as `P(n) = exp(log_shift) * p[n]`.
///
/// The shift is the largest `ln P(n)` over `n <= n_bar`; beyond `n_bar`
/// every ratio is below one, so no stored value exceeds one.
#[derive(Debug, Clone)]
pub(crate) struct ScaledProducts {
    profile: RateProfile,
    pub(crate) certificate: StabilityCertificate,
    pub(crate) log_shift: f64,
    pub(crate) p: Vec<f64>,
    pub(crate) head_sums: Vec<f64>,
}

impl ScaledProducts {
    pub(crate) fn new(model: &GroupServerModel, u: &Policy) -> Result<(Policy, Self)> {
        let (bound, profile) = rate_profile(model, u)?;
        let certificate = certificate_for(&profile, bound.prefix_len())?;
        let n_bar = certificate.n_bar;
        let mut logs = Vec::with_capacity(n_bar + 1);
        logs.push(0.0);
        for n in 1..=n_bar {
            let prev: f64 = logs[n - 1];
            logs.push(prev + profile.ratio(n).ln());
        }
        let log_shift = logs.iter().copied().fold(0.0, f64::max);
        let p: Vec<f64> = logs.iter().map(|l| (l - log_shift).exp()).collect();
        let mut head_sums = Vec::with_capacity(p.len());
        let mut acc = 0.0;
        for x in &p {
            acc += x;
            head_sums.push(acc);
        }
        Ok((bound, Self { profile, certificate, log_shift, p, head_sums }))
    }

    pub(crate) fn extend_to(&mut self, n: usize) {
        while self.p.len() <= n {
            let m = self.p.len();
            let next = self.p[m - 1] * self.profile.ratio(m);
            self.p.push(next);
            let s = self.head_sums[m - 1] + next;
            self.head_sums.push(s);
        }
    }

    pub(crate) fn ratio_bound(&self) -> f64 {
        self.certificate.tail_ratio
    }

    /// Upper bound on `sum_{m > n} p[m]`, valid for `n >= n_bar`.
    pub(crate) fn tail_bound(&self, n: usize) -> f64 {
        debug_assert!(n >= self.certificate.n_bar);
        let q = self.ratio_bound();
        self.p[n] * q / (1.0 - q)
    }

    /// `sum_{m <= n} p[m]`, the scaled `1 + G_n`.
    pub(crate) fn head(&self, n: usize) -> f64 {
        self.head_sums[n]
    }

    pub(crate) fn scale(&self) -> f64 {
        self.log_shift.exp()
    }

    /// Scaled `sum_{n < m <= upto} p[m]`.
    pub(crate) fn window_sum(&self, n: usize, upto: usize) -> f64 {
        if upto <= n {
            0.0
        } else {
            self.head_sums[upto] - self.head_sums[n]
        }
    }

    /// Certified scaled `delta(n) = sum_{m > n} p[m]`, truncated where the
    /// remainder is below `tol` relative to the partial sum.
    pub(crate) fn delta_scaled(&mut self, n: usize, tol: f64) -> Result<Certified> {
        let mut upto = n.max(self.certificate.n_bar);
        loop {
            self.extend_to(upto);
            let partial = self.window_sum(n, upto);
            let rem = self.tail_bound(upto);
            if rem <= tol * partial || rem == 0.0 {
                // direct sum from the tail end keeps small terms accurate
                let direct: f64 = self.p[n + 1..=upto.max(n)].iter().rev().sum();
                return Ok(Certified::new(direct, rem));
            }
            if upto >= MAX_TRUNCATION {
                return Err(Error::NotConverged { k_cap: MAX_TRUNCATION, last_change: rem });
            }
            upto += 1 + upto / 8;
        }
    }
}

/// Truncated steady state of a stable policy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueueSteadyState {
    /// `pi(n)` for `n = 0..=n_trunc`, normalized over the window.
    pub pi: Vec<f64>,
    /// `f(n, u(n))` over the same window.
    pub costs: Vec<f64>,
    /// Normalizer `G = sum_{n>=1} P(n)`, truncated at `n_trunc`
    /// (may be `inf` when it overflows; see `log_one_plus_g`).
    pub g: f64,
    pub log_one_plus_g: f64,
    pub n_trunc: usize,
    /// Upper bound on the probability mass beyond `n_trunc`.
    pub tail_mass_bound: f64,
    pub certificate: StabilityCertificate,
    pub eta: Option<Certified>,
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")))
    }
}

fn steady_from(
    model: &GroupServerModel,
    bound: &Policy,
    prod: &ScaledProducts,
    n_trunc: usize,
    eta: Option<Certified>,
) -> Result<QueueSteadyState> {
    let total = prod.head(n_trunc);
    let pi: Vec<f64> = prod.p[..=n_trunc].iter().map(|x| x / total).collect();
    let costs = (0..=n_trunc).map(|n| model.cost(n, bound.action_at(n)?)).collect::<Result<Vec<_>>>()?;
    let busy: f64 = prod.p[1..=n_trunc].iter().sum();
    Ok(QueueSteadyState {
        pi,
        costs,
        g: prod.scale() * busy,
        log_one_plus_g: prod.log_shift + total.ln(),
        n_trunc,
        tail_mass_bound: prod.tail_bound(n_trunc) / total,
        certificate: prod.certificate,
        eta,
    })
}

/// Product-form steady state, truncated at the smallest `N >= n_bar`
/// whose certified neglected normalizer mass is at most `tol (1 + G_N)`.
pub fn steady_state(model: &GroupServerModel, u: &Policy, tol: f64) -> Result<QueueSteadyState> {
    check_tol(tol)?;
    let (bound, mut prod) = ScaledProducts::new(model, u)?;
    let mut n = prod.certificate.n_bar;
    loop {
        prod.extend_to(n);
        if prod.tail_bound(n) <= tol * prod.head(n) {
            return steady_from(model, &bound, &prod, n, None);
        }
        if n >= MAX_TRUNCATION {
            return Err(Error::NotConverged { k_cap: n, last_change: prod.tail_bound(n) });
        }
        n += 1;
    }
}

/// State of an incremental evaluation of `eta` over a growing window.
pub(crate) struct EtaWindow {
    pub(crate) bound: Policy,
    pub(crate) prod: ScaledProducts,
    pub(crate) costs: Vec<f64>,
    weighted: f64,
    weighted_abs: f64,
    majorant: Vec<f64>,
}

impl EtaWindow {
    pub(crate) fn new(model: &GroupServerModel, u: &Policy) -> Result<Self> {
        let mut majorant = model.holding.abs_majorant().ok_or_else(|| Error::GrowthCheck(model.holding.describe()))?;
        let (bound, prod) = ScaledProducts::new(model, u)?;
        let tail_op = bound
            .tail
            .actions()
            .iter()
            .map(|a| model.operating_cost(a).map(f64::abs))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        if majorant.is_empty() {
            majorant.push(0.0);
        }
        majorant[0] += tail_op;
        Ok(Self { bound, prod, costs: Vec::new(), weighted: 0.0, weighted_abs: 0.0, majorant })
    }

    pub(crate) fn extend_to(&mut self, model: &GroupServerModel, n: usize) -> Result<()> {
        self.prod.extend_to(n);
        while self.costs.len() <= n {
            let m = self.costs.len();
            let f = model.cost(m, self.bound.action_at(m)?)?;
            self.costs.push(f);
            self.weighted += self.prod.p[m] * f;
            self.weighted_abs += self.prod.p[m] * f.abs();
        }
        Ok(())
    }

    /// Eta over the window `0..=n` (requires `extend_to(n)` and that no
    /// larger state has been added) with its certified error.
    pub(crate) fn current(&self) -> Certified {
        let n = self.costs.len() - 1;
        let total = self.prod.head(n);
        let value = self.weighted / total;
        let norm_gap = self.prod.tail_bound(n) / total;
        let q = self.prod.ratio_bound();
        let tail = self.prod.p[n] / total * geometric_poly_tail(q, &self.majorant, n);
        Certified::new(value, self.weighted_abs / total * norm_gap + tail)
    }

    /// Upper bound on `sum_{m > n} |pi(m) f(m)|` for the true `pi`.
    pub(crate) fn abs_tail_bound(&self, n: usize) -> f64 {
        let total = self.prod.head(n);
        self.prod.p[n] / total * geometric_poly_tail(self.prod.ratio_bound(), &self.majorant, n)
    }
}

/// Long-run average cost `eta(u) = sum_n pi(n) f(n, u(n))` with a
/// certified error bound `<= tol`.
///
/// Beyond the truncation level `N >= n_bar`, `pi(N + m) <= pi(N) q^m`,
/// and `|f|` is dominated by a polynomial; the remainder is the geometric
/// polynomial tail of that majorant.
pub fn average_cost(model: &GroupServerModel, u: &Policy, tol: f64) -> Result<QueueSteadyState> {
    check_tol(tol)?;
    let mut w = EtaWindow::new(model, u)?;
    let mut n = w.prod.certificate.n_bar;
    loop {
        w.extend_to(model, n)?;
        let eta = w.current();
        if eta.error_bound <= tol {
            return steady_from(model, &w.bound, &w.prod, n, Some(eta));
        }
        if n >= MAX_TRUNCATION {
            return Err(Error::NotConverged { k_cap: n, last_change: eta.error_bound });
        }
        n += 1;
    }
}

/// `delta(n, u) = sum_{m > n} prod_{l <= m} lambda / (u(l).mu)` with a
/// certified remainder; the value is a lower bound, `value + error_bound`
/// an upper bound.
pub fn delta(model: &GroupServerModel, u: &Policy, n: usize, tol: f64) -> Result<Certified> {
    check_tol(tol)?;
    let (_, mut prod) = ScaledProducts::new(model, u)?;
    let d = prod.delta_scaled(n, tol)?;
    let s = prod.scale();
    Ok(Certified::new(d.value * s, d.error_bound * s))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mm1(lambda: f64, holding: HoldingCost) -> GroupServerModel {
        GroupServerModel::new(lambda, vec![ServerGroup { servers: 1, mu: 1.0, cost: 0.0 }], holding).unwrap()
    }

    fn two_group(lambda: f64) -> GroupServerModel {
        GroupServerModel::new(
            lambda,
            vec![ServerGroup { servers: 1, mu: 2.0, cost: 1.0 }, ServerGroup { servers: 1, mu: 1.0, cost: 1.0 }],
            HoldingCost::Polynomial(vec![0.0, 1.0]),
        )
        .unwrap()
    }

    fn pol(s: &str) -> Policy {
        s.parse().unwrap()
    }

    #[test]
    fn groups_are_canonicalized_by_rate() {
        let m = GroupServerModel::new(
            1.0,
            vec![ServerGroup { servers: 2, mu: 1.0, cost: 3.0 }, ServerGroup { servers: 1, mu: 4.0, cost: 1.0 }],
            HoldingCost::Polynomial(vec![]),
        )
        .unwrap();
        assert_eq!(m.groups()[0].mu, 4.0);
        assert_eq!(m.all_on(), Some(Action(vec![1, 2])));
    }

    #[test]
    fn service_rate_examples() {
        let m = two_group(1.0);
        assert_eq!(m.service_rate(&Action(vec![0, 0])).unwrap(), 0.0);
        assert_eq!(m.service_rate(&Action(vec![1, 1])).unwrap(), 3.0);
        assert_eq!(m.service_rate(&Action(vec![1, 0])).unwrap(), 2.0);
        assert!(m.service_rate(&Action(vec![2, 0])).is_err());
        assert!(m.service_rate(&Action(vec![1])).is_err());
    }

    #[test]
    fn busy_states_require_first_group() {
        let m = two_group(1.0);
        assert_eq!(m.actions(0).len(), 4);
        assert_eq!(m.actions(1), vec![Action(vec![1, 0]), Action(vec![1, 1])]);
        assert!(!m.is_feasible(3, &Action(vec![0, 1])));
        let r = m.clone().with_busy_actions(vec![Action(vec![1, 1])]).unwrap();
        assert_eq!(r.actions(5), vec![Action(vec![1, 1])]);
        assert!(m.with_busy_actions(vec![Action(vec![0, 1])]).is_err());
    }

    #[test]
    fn certificate_examples() {
        let m = mm1(0.5, HoldingCost::Polynomial(vec![]));
        let c = stability_certificate(&m, &pol("prefix=[];tail=all-on")).unwrap();
        assert_eq!((c.n_bar, c.rho0), (0, 0.5));

        let slow = GroupServerModel::new(
            4.0,
            vec![ServerGroup { servers: 1, mu: 2.0, cost: 1.0 }, ServerGroup { servers: 1, mu: 1.0, cost: 1.0 }],
            HoldingCost::Polynomial(vec![]),
        )
        .unwrap();
        assert!(matches!(stability_certificate(&slow, &pol("prefix=[];tail=all-on")), Err(Error::Unstable { .. })));

        let m = two_group(1.0);
        let c = stability_certificate(&m, &pol("prefix=[(0|0),(1|0)];tail=all-on")).unwrap();
        assert_eq!(c.n_bar, 1);
        assert!((c.rho0 - 0.5).abs() < 1e-15);
        assert!((c.tail_ratio - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn zero_rate_is_an_ergodicity_violation() {
        let m = two_group(1.0);
        assert_eq!(
            stability_certificate(&m, &pol("prefix=[(0|0),(0|0)];tail=all-on")),
            Err(Error::ErgodicityViolation { state: 1 })
        );
    }

    #[test]
    fn slow_prefix_states_move_the_threshold() {
        let m = mm1(0.5, HoldingCost::Polynomial(vec![]));
        let two = GroupServerModel::new(
            0.5,
            vec![ServerGroup { servers: 2, mu: 0.4, cost: 0.0 }],
            HoldingCost::Polynomial(vec![]),
        )
        .unwrap();
        // one server (rate 0.4 < 0.5) at states 1..3, two servers after
        let c = stability_certificate(&two, &pol("prefix=[(0),(1),(1),(1)];tail=constant((2))")).unwrap();
        assert_eq!(c.n_bar, 3);
        assert!((c.rho0 - 0.625).abs() < 1e-15);
        let ss = steady_state(&two, &pol("prefix=[(0),(1),(1),(1)];tail=constant((2))"), 1e-12).unwrap();
        // detailed balance across the slow region
        for n in 1..=ss.n_trunc {
            let rate = if n <= 3 { 0.4 } else { 0.8 };
            assert!((ss.pi[n] * rate - ss.pi[n - 1] * 0.5).abs() <= 1e-12 * ss.pi[n - 1]);
        }
        let _ = m;
    }

    #[test]
    fn mm1_steady_state_matches_geometric_law() {
        let m = mm1(0.5, HoldingCost::Polynomial(vec![]));
        let ss = steady_state(&m, &pol("prefix=[];tail=all-on"), 1e-12).unwrap();
        assert!((ss.g - 1.0).abs() < 1e-11);
        assert!((ss.pi[0] - 0.5).abs() < 1e-11);
        for (n, p) in ss.pi.iter().enumerate() {
            assert!((p - 0.5 * 0.5f64.powi(n as i32)).abs() < 1e-11);
        }
        let total: f64 = ss.pi.iter().sum();
        assert!(total + ss.tail_mass_bound >= 1.0 - 1e-15);
        assert!(total + ss.tail_mass_bound <= 1.0 + 1e-12);
    }

    #[test]
    fn empty_queue_when_no_arrivals() {
        let m = mm1(0.0, HoldingCost::Polynomial(vec![0.0, 1.0]));
        let ss = average_cost(&m, &pol("prefix=[];tail=all-on"), 1e-9).unwrap();
        assert_eq!(ss.g, 0.0);
        assert_eq!(ss.pi[0], 1.0);
        assert_eq!(ss.eta.unwrap().value, 0.0);
        assert_eq!(delta(&m, &pol("prefix=[];tail=all-on"), 3, 1e-9).unwrap().value, 0.0);
    }

    #[test]
    fn two_group_all_on_has_ratio_one_third() {
        let m = two_group(1.0);
        let ss = steady_state(&m, &pol("prefix=[];tail=all-on"), 1e-13).unwrap();
        assert!((ss.g - 0.5).abs() < 1e-12);
        assert!((ss.pi[0] - 2.0 / 3.0).abs() < 1e-12);
        for n in 1..ss.pi.len() {
            assert!((ss.pi[n] - ss.pi[0] * (1.0f64 / 3.0).powi(n as i32)).abs() < 1e-12);
        }
    }

    #[test]
    fn average_cost_examples() {
        let m = mm1(0.5, HoldingCost::Polynomial(vec![0.0, 1.0]));
        let eta = average_cost(&m, &pol("prefix=[];tail=all-on"), 1e-10).unwrap().eta.unwrap();
        assert!((eta.value - 1.0).abs() < 1e-10 && eta.error_bound <= 1e-10);

        let costly = GroupServerModel::new(
            0.5,
            vec![ServerGroup { servers: 1, mu: 1.0, cost: 1.0 }],
            HoldingCost::Polynomial(vec![]),
        )
        .unwrap();
        let eta = average_cost(&costly, &pol("prefix=[(0)];tail=constant((1))"), 1e-10).unwrap().eta.unwrap();
        assert!((eta.value - 0.5).abs() < 1e-10);

        let signed = mm1(0.5, HoldingCost::SignedLinear);
        let eta = average_cost(&signed, &pol("prefix=[];tail=all-on"), 1e-10).unwrap().eta.unwrap();
        assert!((eta.value + 1.0 / 9.0).abs() < 1e-10);
    }

    #[test]
    fn super_polynomial_holding_cost_is_rejected() {
        let m = mm1(0.5, HoldingCost::Exponential { base: 1.5 });
        assert!(matches!(average_cost(&m, &pol("prefix=[];tail=all-on"), 1e-6), Err(Error::GrowthCheck(_))));
        // steady state does not need the growth bound
        assert!(steady_state(&m, &pol("prefix=[];tail=all-on"), 1e-6).is_ok());
    }

    #[test]
    fn bad_tolerance_is_rejected() {
        let m = mm1(0.5, HoldingCost::Polynomial(vec![]));
        assert!(steady_state(&m, &pol("prefix=[];tail=all-on"), 0.0).is_err());
        assert!(average_cost(&m, &pol("prefix=[];tail=all-on"), -1.0).is_err());
    }

    #[test]
    fn delta_examples() {
        let m = mm1(0.5, HoldingCost::Polynomial(vec![]));
        let u = pol("prefix=[];tail=all-on");
        let d0 = delta(&m, &u, 0, 1e-13).unwrap();
        assert!((d0.value - 1.0).abs() < 1e-12);
        let mut prev = d0.value;
        for n in 1..60 {
            let d = delta(&m, &u, n, 1e-13).unwrap().value;
            assert!(d < prev);
            assert!((d - 0.5f64.powi(n as i32)).abs() <= 1e-12 * d);
            prev = d;
        }
        assert!(prev < 1e-15);
    }

    #[test]
    fn tighter_tolerance_moves_eta_by_less_than_tol() {
        let m = two_group(1.0);
        let u = pol("prefix=[(0|0),(1|0),(1|0),(1|0)];tail=all-on");
        for tol in [1e-4, 1e-6, 1e-8] {
            let a = average_cost(&m, &u, tol).unwrap().eta.unwrap().value;
            let b = average_cost(&m, &u, tol / 10.0).unwrap().eta.unwrap().value;
            assert!((a - b).abs() <= tol);
        }
    }

    #[test]
    fn deep_truncation_does_not_overflow() {
        // ratio 10 through a 400-state slow prefix: P(n) reaches ~1e400
        let m = GroupServerModel::new(
            1.0,
            vec![ServerGroup { servers: 20, mu: 0.1, cost: 0.0 }],
            HoldingCost::Polynomial(vec![0.0, 1.0]),
        )
        .unwrap();
        let mut prefix = vec!["(0)".to_string()];
        prefix.extend(std::iter::repeat_n("(1)".to_string(), 400));
        let u: Policy = format!("prefix=[{}];tail=constant((20))", prefix.join(",")).parse().unwrap();
        let ss = average_cost(&m, &u, 1e-8).unwrap();
        assert!(ss.g.is_infinite() || ss.g > 1e60);
        assert!(ss.log_one_plus_g.is_finite());
        let total: f64 = ss.pi.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(ss.eta.unwrap().value.is_finite());
    }
}
