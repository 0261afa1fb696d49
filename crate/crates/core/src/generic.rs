//! Stationary vectors of general CTMDPs through truncated balance systems.
//!
//! For a policy `u`, an un-normalized steady-state vector solves
//!
//! ```text
//! sum_j nu(j) q^{u(j)}(j, i) = 0  for every state i,      nu(0) = 1.
//! ```
//!
//! Models declare a rate bound `Lambda` and a backward band `M`
//! (`q^a(j, i) = 0` whenever `j > i + M`), so equation `i` only involves
//! states `<= i + M`. The first `K + 1` equations restricted to states
//! `0..=K` form a square band system; its solution for the leading states
//! stabilizes as `K` grows, and `solve_nu` doubles `K` until it does.

use crate::banded::BandedMatrix;
use crate::certified::{geometric_poly_tail, Certified};
use crate::error::{Error, Result};
use crate::policy::{Action, ActionSpace, Policy};
use crate::queue::GroupServerModel;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

/// Transition structure of a CTMDP. Implementations must be reentrant.
pub trait RateSource: Send + Sync {
    fn actions(&self, state: usize) -> Vec<Action>;

    /// Action sets are identical for every state `>= homogeneous_from()`.
    fn homogeneous_from(&self) -> usize;

    /// Off-diagonal transitions `(target, rate)` out of `state` under `action`.
    fn transitions(&self, state: usize, action: &Action) -> Vec<(usize, f64)>;

    /// Cost rate `f(state, action)`.
    fn cost(&self, state: usize, action: &Action) -> f64;

    fn all_on(&self) -> Option<Action> {
        None
    }
}

/// Declared `nu(i) <= coef * ratio^i` for every policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeometricMajorant {
    pub coef: f64,
    pub ratio: f64,
}

impl GeometricMajorant {
    /// `sum_{i > k} coef ratio^i`.
    pub fn tail_after(&self, k: usize) -> f64 {
        self.coef * self.ratio.powi(k as i32 + 1) / (1.0 - self.ratio)
    }
}

/// A CTMDP with bounded rates and a bounded backward band.
#[derive(Clone)]
pub struct GenericCtmdpModel {
    source: Arc<dyn RateSource>,
    rate_bound: f64,
    band: usize,
    majorant: Option<GeometricMajorant>,
    cost_growth: Option<Vec<f64>>,
}

impl fmt::Debug for GenericCtmdpModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GenericCtmdpModel")
            .field("rate_bound", &self.rate_bound)
            .field("band", &self.band)
            .field("majorant", &self.majorant)
            .field("cost_growth", &self.cost_growth)
            .finish_non_exhaustive()
    }
}

impl GenericCtmdpModel {
    pub fn new(source: Arc<dyn RateSource>, rate_bound: f64, band: usize) -> Result<Self> {
        if !(rate_bound > 0.0) || !rate_bound.is_finite() {
            return Err(Error::InvalidModel(format!("rate bound must be positive, got {rate_bound}")));
        }
        if band == 0 {
            return Err(Error::InvalidModel("backward band M must be at least 1".into()));
        }
        Ok(Self { source, rate_bound, band, majorant: None, cost_growth: None })
    }

    /// Birth-death generator of a group-server queue.
    pub fn from_queue(model: &GroupServerModel) -> Self {
        let capacity: f64 = model.groups().iter().map(|g| g.servers as f64 * g.mu).sum();
        let op: f64 = model.groups().iter().map(|g| (g.servers as f64 * g.cost).abs()).sum();
        let cost_growth = model.holding().abs_majorant().map(|mut c| {
            if c.is_empty() {
                c.push(0.0);
            }
            c[0] += op;
            c
        });
        Self {
            source: Arc::new(QueueGenerator(model.clone())),
            rate_bound: model.lambda() + capacity,
            band: 1,
            majorant: None,
            cost_growth,
        }
    }

    pub fn with_majorant(mut self, majorant: GeometricMajorant) -> Result<Self> {
        if !(majorant.coef > 0.0) || !(0.0..1.0).contains(&majorant.ratio) {
            return Err(Error::InvalidModel("majorant needs coef > 0 and 0 <= ratio < 1".into()));
        }
        self.majorant = Some(majorant);
        Ok(self)
    }

    /// Declare `|f(i, a)| <= sum_j coeffs[j] i^j` for all `i, a`.
    pub fn with_cost_growth(mut self, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.iter().any(|c| !(*c >= 0.0)) {
            return Err(Error::InvalidModel("cost growth coefficients must be >= 0".into()));
        }
        self.cost_growth = Some(coeffs);
        Ok(self)
    }

    /// Same model with every rate multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) {
            return Err(Error::InvalidParameter(format!("scale factor must be positive, got {factor}")));
        }
        Ok(Self {
            source: Arc::new(Scaled { inner: self.source.clone(), factor }),
            rate_bound: self.rate_bound * factor,
            band: self.band,
            majorant: self.majorant,
            cost_growth: self.cost_growth.clone(),
        })
    }

    pub fn rate_bound(&self) -> f64 {
        self.rate_bound
    }

    pub fn band(&self) -> usize {
        self.band
    }

    pub fn majorant(&self) -> Option<GeometricMajorant> {
        self.majorant
    }

    pub fn rate(&self, i: usize, a: &Action, j: usize) -> f64 {
        if i == j {
            -self.source.transitions(i, a).iter().map(|t| t.1).sum::<f64>()
        } else {
            self.source.transitions(i, a).iter().filter(|t| t.0 == j).map(|t| t.1).sum()
        }
    }

    pub fn cost(&self, i: usize, a: &Action) -> f64 {
        self.source.cost(i, a)
    }
}

impl ActionSpace for GenericCtmdpModel {
    fn actions(&self, state: usize) -> Vec<Action> {
        self.source.actions(state)
    }

    fn homogeneous_from(&self) -> usize {
        self.source.homogeneous_from()
    }

    fn all_on(&self) -> Option<Action> {
        self.source.all_on()
    }
}

struct Scaled {
    inner: Arc<dyn RateSource>,
    factor: f64,
}

impl RateSource for Scaled {
    fn actions(&self, state: usize) -> Vec<Action> {
        self.inner.actions(state)
    }
    fn homogeneous_from(&self) -> usize {
        self.inner.homogeneous_from()
    }
    fn all_on(&self) -> Option<Action> {
        self.inner.all_on()
    }
    fn transitions(&self, state: usize, action: &Action) -> Vec<(usize, f64)> {
        self.inner.transitions(state, action).into_iter().map(|(j, r)| (j, r * self.factor)).collect()
    }
    fn cost(&self, state: usize, action: &Action) -> f64 {
        self.inner.cost(state, action)
    }
}

/// Birth-death view of a [`GroupServerModel`].
pub struct QueueGenerator(pub GroupServerModel);

impl RateSource for QueueGenerator {
    fn actions(&self, state: usize) -> Vec<Action> {
        self.0.actions(state)
    }
    fn homogeneous_from(&self) -> usize {
        self.0.homogeneous_from()
    }
    fn all_on(&self) -> Option<Action> {
        self.0.all_on()
    }
    fn transitions(&self, state: usize, action: &Action) -> Vec<(usize, f64)> {
        let mut out = Vec::with_capacity(2);
        if state > 0 {
            let rate = self.0.service_rate(action).unwrap_or(0.0);
            if rate > 0.0 {
                out.push((state - 1, rate));
            }
        }
        if self.0.lambda() > 0.0 {
            out.push((state + 1, self.0.lambda()));
        }
        out
    }
    fn cost(&self, state: usize, action: &Action) -> f64 {
        self.0.cost(state, action).unwrap_or(f64::NAN)
    }
}

/// Explicit transition table for states `0..horizon`; state `i >= horizon`
/// repeats the pattern of state `horizon - 1` shifted by `i - horizon + 1`.
/// Costs are a per-(state, action) table with the same repetition plus a
/// polynomial in the state.
#[derive(Debug, Clone, Default)]
pub struct TableModel {
    horizon: usize,
    transitions: BTreeMap<(usize, Action), Vec<(usize, f64)>>,
    action_costs: BTreeMap<(usize, Action), f64>,
    state_cost: Vec<f64>,
}

impl TableModel {
    pub fn new(horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidModel("table horizon must be at least 1".into()));
        }
        Ok(Self { horizon, ..Default::default() })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn add_transition(&mut self, state: usize, action: Action, target: usize, rate: f64) -> Result<()> {
        if state >= self.horizon {
            return Err(Error::InvalidModel(format!(
                "transition from state {state} lies beyond the table horizon {}",
                self.horizon
            )));
        }
        if target == state {
            return Err(Error::InvalidModel(format!("self-transition at state {state}")));
        }
        if !(rate >= 0.0) || !rate.is_finite() {
            return Err(Error::InvalidModel(format!("negative or non-finite rate {rate} at state {state}")));
        }
        self.transitions.entry((state, action)).or_default().push((target, rate));
        Ok(())
    }

    pub fn set_action_cost(&mut self, state: usize, action: Action, cost: f64) -> Result<()> {
        if state >= self.horizon {
            return Err(Error::InvalidModel(format!("cost for state {state} lies beyond the horizon")));
        }
        self.action_costs.insert((state, action), cost);
        Ok(())
    }

    /// Adds `sum_j coeffs[j] i^j` to every cost.
    pub fn set_state_cost(&mut self, coeffs: Vec<f64>) {
        self.state_cost = coeffs;
    }

    fn base(&self, state: usize) -> (usize, usize) {
        if state < self.horizon {
            (state, 0)
        } else {
            (self.horizon - 1, state + 1 - self.horizon)
        }
    }

    /// Every action set must be nonempty.
    pub fn validate(&self) -> Result<()> {
        for s in 0..self.horizon {
            if self.actions(s).is_empty() {
                return Err(Error::InvalidModel(format!("state {s} has no actions")));
            }
        }
        Ok(())
    }
}

impl RateSource for TableModel {
    fn actions(&self, state: usize) -> Vec<Action> {
        let (b, _) = self.base(state);
        let mut out: Vec<Action> = self
            .transitions
            .keys()
            .chain(self.action_costs.keys())
            .filter(|(s, _)| *s == b)
            .map(|(_, a)| a.clone())
            .collect();
        out.sort();
        out.dedup();
        out
    }

    fn homogeneous_from(&self) -> usize {
        self.horizon - 1
    }

    fn transitions(&self, state: usize, action: &Action) -> Vec<(usize, f64)> {
        let (b, shift) = self.base(state);
        self.transitions
            .get(&(b, action.clone()))
            .map(|ts| ts.iter().map(|&(t, r)| (t + shift, r)).collect())
            .unwrap_or_default()
    }

    fn cost(&self, state: usize, action: &Action) -> f64 {
        let (b, _) = self.base(state);
        let own = self.action_costs.get(&(b, action.clone())).copied().unwrap_or(0.0);
        own + crate::certified::poly_eval(&self.state_cost, state as f64)
    }
}

/// The anchored `(K+1) x (K+1)` balance system for one policy.
#[derive(Debug, Clone)]
pub struct TruncatedSystem {
    pub k: usize,
    /// Row `i` holds the coefficients `q^{u(j)}(j, i)` of equation `i`;
    /// row 0 is replaced by the anchor `nu(0) = 1`.
    pub matrix: BandedMatrix,
    pub rhs: Vec<f64>,
    /// Rate out of each state into states beyond `K`; the diagonal of the
    /// truncated generator omits it so that its rows sum to zero.
    pub leak: Vec<f64>,
}

/// Assemble the truncated system for `u` at level `K >= M`.
pub fn build_truncated_system(model: &GenericCtmdpModel, u: &Policy, k: usize) -> Result<TruncatedSystem> {
    if k < model.band {
        return Err(Error::InvalidParameter(format!(
            "truncation level K = {k} is below the backward band M = {}",
            model.band
        )));
    }
    let bound = u.bind(model)?;
    let lambda = model.rate_bound;
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(k + 1);
    let mut lower = 0usize;
    let mut upper = 0usize;
    let mut leak = vec![0.0; k + 1];
    for j in 0..=k {
        let a = bound.action_at(j)?;
        let ts = model.source.transitions(j, a);
        let mut total = 0.0;
        for &(target, rate) in &ts {
            if target == j || !(rate >= 0.0) || !rate.is_finite() {
                return Err(Error::InvalidModel(format!(
                    "invalid transition {j} -> {target} at rate {rate} under action {a}"
                )));
            }
            if rate > lambda {
                return Err(Error::InvalidModel(format!(
                    "rate {rate} from {j} to {target} exceeds the declared bound {lambda}"
                )));
            }
            if j > target + model.band && rate > 0.0 {
                return Err(Error::InvalidModel(format!(
                    "backward jump {j} -> {target} exceeds the band M = {}",
                    model.band
                )));
            }
            total += rate;
            if target > k {
                leak[j] += rate;
            } else if target > j {
                lower = lower.max(target - j);
            } else {
                upper = upper.max(j - target);
            }
        }
        if total > lambda * (1.0 + 1e-12) {
            return Err(Error::InvalidModel(format!(
                "total outflow {total} at state {j} exceeds the declared bound {lambda}"
            )));
        }
        rows.push(ts);
    }
    let mut matrix = BandedMatrix::zeros(k + 1, lower, upper.max(1));
    for (j, ts) in rows.iter().enumerate() {
        for &(target, rate) in ts {
            if target <= k && rate > 0.0 {
                matrix.add(target, j, rate);
                matrix.add(j, j, -rate);
            }
        }
    }
    if !matrix.column_has_entries(0, 0) {
        return Err(Error::Singular(
            "state 0 has no transitions inside the window; the truncated chain is reducible".into(),
        ));
    }
    matrix.set_unit_row(0, 1.0);
    let mut rhs = vec![0.0; k + 1];
    rhs[0] = 1.0;
    Ok(TruncatedSystem { k, matrix, rhs, leak })
}

impl TruncatedSystem {
    /// Solve and clip roundoff negatives; entries below `-1e-10` are an error.
    pub fn solve(&self) -> Result<Vec<f64>> {
        let mut nu = self.matrix.solve(&self.rhs)?;
        for (i, x) in nu.iter_mut().enumerate() {
            if !x.is_finite() {
                return Err(Error::NotConverged { k_cap: self.k, last_change: f64::INFINITY });
            }
            if *x < 0.0 {
                if *x < -1e-10 {
                    return Err(Error::NegativeMass { state: i, value: *x });
                }
                *x = 0.0;
            }
        }
        Ok(nu)
    }

    /// Max residual of the untruncated balance rows `1..=K-M`, using the
    /// full diagonal (including the leak out of the window).
    pub fn balance_residual(&self, nu: &[f64], band: usize) -> f64 {
        let mut worst: f64 = 0.0;
        let last = self.k.saturating_sub(band);
        for i in 1..=last {
            let lo = i.saturating_sub(self.matrix.lower());
            let hi = (i + self.matrix.upper()).min(self.k);
            let mut r = 0.0;
            for j in lo..=hi {
                r += nu[j] * self.matrix.get(i, j);
            }
            r -= nu[i] * self.leak[i];
            worst = worst.max(r.abs());
        }
        worst
    }
}

/// Options for the doubling loop of [`solve_nu_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveOptions {
    /// Largest truncation level tried before giving up.
    pub k_cap: usize,
    /// Also require the average cost to stabilize.
    pub track_cost: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { k_cap: 1 << 20, track_cost: false }
    }
}

/// Un-normalized stationary vector and what was learnt while computing it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NuSolution {
    /// `nu(0..=K)` with `nu(0) = 1`.
    pub nu: Vec<f64>,
    pub k_trunc: usize,
    pub residual: f64,
    /// Change observed at the last doubling (max of the relative change of
    /// the leading entries and the mass fraction beyond `K/2`).
    pub error_estimate: f64,
    /// `Lambda * sum_{i > K} nu_bar(i)` when a majorant is declared.
    pub kappa_bound: Option<f64>,
    pub pi: Vec<f64>,
    pub costs: Vec<f64>,
    pub eta: Option<Certified>,
}

/// Solve for `nu` with the default options.
pub fn solve_nu(model: &GenericCtmdpModel, u: &Policy, tol: f64) -> Result<NuSolution> {
    solve_nu_with(model, u, tol, SolveOptions::default())
}

struct Level {
    k: usize,
    nu: Vec<f64>,
    residual: f64,
    eta: f64,
}

fn solve_level(model: &GenericCtmdpModel, u: &Policy, k: usize, costs: &mut Vec<f64>) -> Result<Level> {
    let system = build_truncated_system(model, u, k)?;
    let nu = system.solve()?;
    let residual = system.balance_residual(&nu, model.band);
    while costs.len() <= k {
        let i = costs.len();
        costs.push(model.cost(i, u.action_at(i)?));
    }
    let mass: f64 = nu.iter().sum();
    let eta = nu.iter().zip(costs.iter()).map(|(n, f)| n * f).sum::<f64>() / mass;
    Ok(Level { k, nu, residual, eta })
}

/// Doubles `K` from `max(2M, 16)` until the leading `K/2 + 1` entries of
/// `nu` move by less than `tol` (relative to their largest value) and the
/// mass beyond `K/2` is below `tol`.
pub fn solve_nu_with(model: &GenericCtmdpModel, u: &Policy, tol: f64, opts: SolveOptions) -> Result<NuSolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    let u = u.bind(model)?;
    let mut costs = Vec::new();
    let mut k = (2 * model.band).max(16);
    let mut prev = solve_level(model, &u, k, &mut costs)?;
    let mut last_change = f64::INFINITY;
    loop {
        if k >= opts.k_cap {
            return Err(Error::NotConverged { k_cap: opts.k_cap, last_change });
        }
        k = (2 * k).min(opts.k_cap);
        let cur = match solve_level(model, &u, k, &mut costs) {
            Ok(level) => level,
            // overflow, or pivots collapsing under mass that keeps moving out
            Err(Error::NotConverged { .. } | Error::Singular(_)) => {
                return Err(Error::NotConverged { k_cap: k, last_change })
            }
            Err(e) => return Err(e),
        };
        let n = prev.k;
        let scale = cur.nu[..=n].iter().copied().fold(1.0, f64::max);
        let change = cur.nu[..=n].iter().zip(&prev.nu).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale;
        let mass: f64 = cur.nu.iter().sum();
        let beyond: f64 = cur.nu[cur.k / 2 + 1..].iter().sum::<f64>() / mass;
        let eta_change = (cur.eta - prev.eta).abs();
        last_change = change.max(beyond);
        let eta_ok = !opts.track_cost || eta_change <= tol;
        if change <= tol && beyond <= tol && eta_ok && mass.is_finite() {
            let pi: Vec<f64> = cur.nu.iter().map(|x| x / mass).collect();
            let kappa_bound = model.majorant.map(|m| model.rate_bound * m.tail_after(cur.k));
            let eta = opts.track_cost.then(|| {
                let tail = match (&model.majorant, &model.cost_growth) {
                    (Some(m), Some(g)) => {
                        m.coef * m.ratio.powi(cur.k as i32) / mass * geometric_poly_tail(m.ratio, g, cur.k)
                    }
                    _ => 0.0,
                };
                Certified::new(cur.eta, eta_change + tail)
            });
            costs.truncate(cur.k + 1);
            return Ok(NuSolution {
                k_trunc: cur.k,
                residual: cur.residual,
                error_estimate: last_change,
                kappa_bound,
                pi,
                costs,
                eta,
                nu: cur.nu,
            });
        }
        prev = cur;
    }
}

/// `eta(u) = sum_i pi(i) f(i, u(i))` from the truncated stationary vector.
///
/// The error estimate is the change of `eta` over the last doubling plus,
/// when the model declares both a majorant and a cost growth bound, the
/// certified remainder beyond `K`.
pub fn average_cost_generic(model: &GenericCtmdpModel, u: &Policy, tol: f64) -> Result<NuSolution> {
    solve_nu_with(model, u, tol, SolveOptions { track_cost: true, ..Default::default() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::queue::{HoldingCost, ServerGroup};

    fn mm1_table(lambda: f64, mu: f64) -> GenericCtmdpModel {
        let mut t = TableModel::new(2).unwrap();
        let a = Action::index(0);
        t.add_transition(0, a.clone(), 1, lambda).unwrap();
        t.add_transition(1, a.clone(), 2, lambda).unwrap();
        t.add_transition(1, a, 0, mu).unwrap();
        t.set_state_cost(vec![0.0, 1.0]);
        GenericCtmdpModel::new(Arc::new(t), lambda + mu, 1).unwrap()
    }

    fn zero_policy() -> Policy {
        "prefix=[];tail=constant(0)".parse().unwrap()
    }

    #[test]
    fn two_state_system_by_hand() {
        let m = mm1_table(0.5, 1.0);
        let sys = build_truncated_system(&m, &zero_policy(), 1).unwrap();
        assert_eq!(sys.matrix.get(0, 0), 1.0);
        assert_eq!(sys.matrix.get(0, 1), 0.0);
        assert_eq!(sys.matrix.get(1, 0), 0.5);
        assert_eq!(sys.matrix.get(1, 1), -1.0);
        assert_eq!(sys.rhs, vec![1.0, 0.0]);
        let nu = sys.solve().unwrap();
        assert!((nu[0] - 1.0).abs() < 1e-15 && (nu[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn level_below_band_is_rejected() {
        let mut t = TableModel::new(3).unwrap();
        t.add_transition(0, Action::index(0), 1, 1.0).unwrap();
        t.add_transition(2, Action::index(0), 0, 1.0).unwrap();
        let m = GenericCtmdpModel::new(Arc::new(t), 2.0, 2).unwrap();
        assert!(matches!(build_truncated_system(&m, &zero_policy(), 1), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn absorbing_origin_is_singular() {
        let mut t = TableModel::new(2).unwrap();
        t.set_action_cost(0, Action::index(0), 0.0).unwrap();
        t.add_transition(1, Action::index(0), 0, 1.0).unwrap();
        t.add_transition(1, Action::index(0), 2, 0.5).unwrap();
        let m = GenericCtmdpModel::new(Arc::new(t), 2.0, 1).unwrap();
        assert!(matches!(build_truncated_system(&m, &zero_policy(), 4), Err(Error::Singular(_))));
    }

    #[test]
    fn band_and_bound_violations_are_caught() {
        let mut t = TableModel::new(4).unwrap();
        let a = Action::index(0);
        t.add_transition(0, a.clone(), 1, 1.0).unwrap();
        for s in 1..3 {
            t.add_transition(s, a.clone(), s - 1, 1.0).unwrap();
        }
        t.add_transition(3, a.clone(), 0, 1.0).unwrap();
        let m = GenericCtmdpModel::new(Arc::new(t.clone()), 5.0, 1).unwrap();
        assert!(matches!(build_truncated_system(&m, &zero_policy(), 4), Err(Error::InvalidModel(_))));
        let m = GenericCtmdpModel::new(Arc::new(t), 0.5, 3).unwrap();
        assert!(matches!(build_truncated_system(&m, &zero_policy(), 4), Err(Error::InvalidModel(_))));
    }

    #[test]
    fn controlled_mm1_nu_is_the_ratio_product() {
        let m = mm1_table(0.5, 1.0);
        let sol = solve_nu(&m, &zero_policy(), 1e-12).unwrap();
        for (i, x) in sol.nu.iter().enumerate() {
            assert!((x - 0.5f64.powi(i as i32)).abs() < 1e-14);
        }
        assert!(sol.residual < 1e-14);
        assert!(sol.kappa_bound.is_none());
    }

    #[test]
    fn unstable_chain_hits_the_cap() {
        let m = mm1_table(2.0, 1.0);
        assert!(matches!(solve_nu(&m, &zero_policy(), 1e-8), Err(Error::NotConverged { .. })));
    }

    #[test]
    fn average_cost_examples() {
        let m = mm1_table(0.5, 1.0);
        let sol = average_cost_generic(&m, &zero_policy(), 1e-12).unwrap();
        assert!((sol.eta.unwrap().value - 1.0).abs() < 1e-10);

        // constant cost
        let mut t = TableModel::new(2).unwrap();
        let a = Action::index(0);
        t.add_transition(0, a.clone(), 1, 0.5).unwrap();
        t.add_transition(1, a.clone(), 2, 0.5).unwrap();
        t.add_transition(1, a.clone(), 0, 1.0).unwrap();
        t.set_state_cost(vec![3.25]);
        let m = GenericCtmdpModel::new(Arc::new(t.clone()), 1.5, 1).unwrap();
        let sol = average_cost_generic(&m, &zero_policy(), 1e-12).unwrap();
        assert!((sol.eta.unwrap().value - 3.25).abs() < 1e-12);

        // indicator of the empty state
        t.set_state_cost(vec![]);
        t.set_action_cost(0, a, 1.0).unwrap();
        let m = GenericCtmdpModel::new(Arc::new(t), 1.5, 1).unwrap();
        let sol = average_cost_generic(&m, &zero_policy(), 1e-12).unwrap();
        assert!((sol.eta.unwrap().value - 0.5).abs() < 1e-10);
    }

    #[test]
    fn majorant_gives_kappa_and_cost_remainder() {
        let m = mm1_table(0.5, 1.0)
            .with_majorant(GeometricMajorant { coef: 1.0, ratio: 0.5 })
            .unwrap()
            .with_cost_growth(vec![0.0, 1.0])
            .unwrap();
        let sol = average_cost_generic(&m, &zero_policy(), 1e-10).unwrap();
        let kappa = sol.kappa_bound.unwrap();
        assert!(kappa > 0.0 && kappa < 1e-8);
        let eta = sol.eta.unwrap();
        assert!(eta.contains(1.0));
    }

    #[test]
    fn queue_generator_matches_product_form() {
        let q = GroupServerModel::new(
            1.0,
            vec![ServerGroup { servers: 1, mu: 2.0, cost: 1.0 }, ServerGroup { servers: 2, mu: 0.75, cost: 0.5 }],
            HoldingCost::Polynomial(vec![0.0, 1.0]),
        )
        .unwrap();
        let g = GenericCtmdpModel::from_queue(&q);
        let u: Policy = "prefix=[(0|0),(1|0),(1|1)];tail=all-on".parse().unwrap();
        let sol = average_cost_generic(&g, &u, 1e-12).unwrap();
        let ss = crate::queue::average_cost(&q, &u, 1e-12).unwrap();
        for n in 0..ss.pi.len().min(sol.pi.len()) {
            assert!((ss.pi[n] - sol.pi[n]).abs() < 1e-10);
        }
        assert!((ss.eta.unwrap().value - sol.eta.unwrap().value).abs() < 1e-9);
    }

    #[test]
    fn batch_arrivals_use_a_wider_lower_band() {
        // arrivals of size 1 or 2, single departures
        let mut t = TableModel::new(3).unwrap();
        let a = Action::index(0);
        for s in 0..3 {
            t.add_transition(s, a.clone(), s + 1, 0.3).unwrap();
            t.add_transition(s, a.clone(), s + 2, 0.1).unwrap();
            if s > 0 {
                t.add_transition(s, a.clone(), s - 1, 1.0).unwrap();
            }
        }
        let m = GenericCtmdpModel::new(Arc::new(t), 1.5, 1).unwrap();
        let sol = solve_nu(&m, &zero_policy(), 1e-11).unwrap();
        let sys = build_truncated_system(&m, &zero_policy(), 64).unwrap();
        assert_eq!(sys.matrix.lower(), 2);
        // global balance on the leading states
        for i in 1..20 {
            let inflow = sol.nu[i - 1] * 0.3 + if i >= 2 { sol.nu[i - 2] * 0.1 } else { 0.0 } + sol.nu[i + 1];
            let out = sol.nu[i] * 1.4;
            assert!((inflow - out).abs() < 1e-9);
        }
    }
}
