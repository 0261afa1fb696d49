//! Exhaustive search over prefix-enumerable policy classes and the c/mu
//! priority rule for group-server queues.

use crate::certified::Certified;
use crate::error::{Error, Result};
use crate::generic::{average_cost_generic, GenericCtmdpModel};
use crate::line_chain::{eta_line, LineChainModel};
use crate::policy::{enumerate_prefixes, Action, ActionSpace, Policy, TailRule};
use crate::queue::{average_cost, GroupServerModel};
use rayon::prelude::*;
use serde::Serialize;

/// Models whose stationary policies can be scored.
pub trait Evaluate: ActionSpace + Sync {
    fn evaluate(&self, u: &Policy, tol: f64) -> Result<Certified>;
}

impl Evaluate for GroupServerModel {
    fn evaluate(&self, u: &Policy, tol: f64) -> Result<Certified> {
        Ok(average_cost(self, u, tol)?.eta.expect("average_cost fills eta"))
    }
}

impl Evaluate for GenericCtmdpModel {
    fn evaluate(&self, u: &Policy, tol: f64) -> Result<Certified> {
        Ok(average_cost_generic(self, u, tol)?.eta.expect("average_cost_generic fills eta"))
    }
}

impl Evaluate for LineChainModel {
    fn evaluate(&self, u: &Policy, _tol: f64) -> Result<Certified> {
        Ok(Certified::exact(eta_line(self, u)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum Mode {
    #[default]
    Min,
    Max,
}

impl Mode {
    fn better(self, a: f64, b: f64) -> bool {
        match self {
            Mode::Min => a < b,
            Mode::Max => a > b,
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min" => Ok(Mode::Min),
            "max" => Ok(Mode::Max),
            other => Err(Error::InvalidParameter(format!("mode must be min or max, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SearchOptions {
    pub cap: u64,
    pub mode: Mode,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self { cap: 1 << 20, mode: Mode::Min }
    }
}

/// One enumerated policy; `eta` is `None` when it was skipped as unstable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub policy: Policy,
    pub eta: Option<Certified>,
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchResult {
    pub best_policy: Policy,
    pub best_eta: Certified,
    pub evaluated: u64,
    pub skipped_unstable: u64,
    /// Distance from the best value to the runner-up (nonnegative in
    /// either mode); `None` with a single stable candidate.
    pub runner_up_gap: Option<f64>,
    pub cmu: Option<CmuVerdict>,
    pub candidates: Vec<Candidate>,
}

impl SearchResult {
    /// Attach the c/mu check of the best policy.
    pub fn with_cmu_check(mut self, model: &GroupServerModel) -> Result<Self> {
        self.cmu = Some(verify_cmu(model, &self.best_policy)?);
        Ok(self)
    }

    /// Stable candidates sorted from best to worst, ties in enumeration order.
    pub fn ranked(&self, mode: Mode) -> Vec<&Candidate> {
        let mut out: Vec<&Candidate> = self.candidates.iter().filter(|c| c.eta.is_some()).collect();
        out.sort_by(|a, b| {
            let (x, y) = (a.eta.unwrap().value, b.eta.unwrap().value);
            match mode {
                Mode::Min => x.total_cmp(&y),
                Mode::Max => y.total_cmp(&x),
            }
        });
        out
    }
}

/// Evaluate every prefix-`L` policy with the given tail and keep the best;
/// the first one in lexicographic order wins ties.
pub fn exhaustive_search<M: Evaluate>(
    model: &M,
    prefix_len: usize,
    tail: &TailRule,
    tol: f64,
    opts: SearchOptions,
) -> Result<SearchResult> {
    let policies: Vec<Policy> = enumerate_prefixes(model, prefix_len, tail, opts.cap)?.collect();
    let results: Vec<Result<Certified>> = policies.par_iter().map(|u| model.evaluate(u, tol)).collect();

    let mut candidates = Vec::with_capacity(policies.len());
    let mut skipped = 0u64;
    let mut best: Option<usize> = None;
    let mut runner_up: Option<f64> = None;
    for (policy, result) in policies.into_iter().zip(results) {
        let (eta, note) = match result {
            Ok(eta) => (Some(eta), None),
            Err(e) if e.is_instability() => {
                skipped += 1;
                (None, Some(e.to_string()))
            }
            Err(e) => return Err(e),
        };
        candidates.push(Candidate { policy, eta, skipped: note });
        let Some(eta) = eta else { continue };
        match best {
            None => best = Some(candidates.len() - 1),
            Some(b) => {
                let incumbent = candidates[b].eta.unwrap().value;
                if opts.mode.better(eta.value, incumbent) {
                    runner_up = Some(incumbent);
                    best = Some(candidates.len() - 1);
                } else if runner_up.is_none_or(|r| opts.mode.better(eta.value, r)) {
                    runner_up = Some(eta.value);
                }
            }
        }
    }
    let evaluated = candidates.len() as u64;
    let Some(b) = best else {
        return Err(Error::AllCandidatesUnstable { skipped: skipped as usize });
    };
    let best_eta = candidates[b].eta.unwrap();
    Ok(SearchResult {
        best_policy: candidates[b].policy.clone(),
        best_eta,
        evaluated,
        skipped_unstable: skipped,
        runner_up_gap: runner_up.map(|r| (r - best_eta.value).abs()),
        cmu: None,
        candidates,
    })
}

/// Servers in activation order: ascending `c/mu`, ties by group index.
/// Returns the group index of each server.
pub fn cmu_order(model: &GroupServerModel) -> Vec<usize> {
    let mut groups: Vec<usize> = (0..model.groups().len()).collect();
    groups.sort_by(|&a, &b| {
        let ga = &model.groups()[a];
        let gb = &model.groups()[b];
        (ga.cost / ga.mu).total_cmp(&(gb.cost / gb.mu)).then(a.cmp(&b))
    });
    groups.into_iter().flat_map(|k| std::iter::repeat_n(k, model.groups()[k].servers as usize)).collect()
}

/// Policy switching on the `j`-th server of [`cmu_order`] at every state
/// `n > thresholds[j]`; all servers are on beyond the largest threshold.
pub fn cmu_policy(model: &GroupServerModel, thresholds: &[usize]) -> Result<Policy> {
    let order = cmu_order(model);
    if thresholds.len() != order.len() {
        return Err(Error::InvalidParameter(format!(
            "expected {} thresholds (one per server), got {}",
            order.len(),
            thresholds.len()
        )));
    }
    if thresholds.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidParameter("thresholds must be nondecreasing".into()));
    }
    let last = thresholds.iter().copied().max().unwrap_or(0);
    let k = model.groups().len();
    let prefix: Vec<Action> = (0..=last)
        .map(|n| {
            let mut on = vec![0u32; k];
            for (j, &g) in order.iter().enumerate() {
                if n > thresholds[j] {
                    on[g] += 1;
                }
            }
            Action(on)
        })
        .collect();
    if let Some(n) = (1..prefix.len()).find(|&n| prefix[n].0[0] == 0) {
        return Err(Error::InvalidParameter(format!("thresholds leave group 1 idle at busy state {n}")));
    }
    let all_on = model.all_on().expect("queue models have an all-on action");
    Policy::new(prefix, TailRule::Constant(all_on)).bind(model)
}

/// Violation of the c/mu priority: at `state`, a server of group
/// `active_group` is on while group `idle_group`, with strictly smaller
/// `c/mu`, is not fully on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CmuWitness {
    pub state: usize,
    pub active_group: usize,
    pub idle_group: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CmuVerdict {
    pub conformant: bool,
    pub witness: Option<CmuWitness>,
}

/// Check the priority property on the prefix and on every tail action.
pub fn verify_cmu(model: &GroupServerModel, u: &Policy) -> Result<CmuVerdict> {
    let u = u.bind(model)?;
    let groups = model.groups();
    let ratio: Vec<f64> = groups.iter().map(|g| g.cost / g.mu).collect();
    let period = match &u.tail {
        TailRule::Cycle(c) => c.len(),
        _ => 1,
    };
    for state in 0..u.prefix_len() + period {
        let a = u.action_at(state)?;
        for (hi, &on) in a.0.iter().enumerate() {
            if on == 0 {
                continue;
            }
            for lo in 0..groups.len() {
                if ratio[lo] < ratio[hi] && a.0[lo] < groups[lo].servers {
                    return Ok(CmuVerdict {
                        conformant: false,
                        witness: Some(CmuWitness { state, active_group: hi, idle_group: lo }),
                    });
                }
            }
        }
    }
    Ok(CmuVerdict { conformant: true, witness: None })
}
