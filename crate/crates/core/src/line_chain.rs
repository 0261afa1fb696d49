//! Deterministic line chains on `{1, 2, ...}` started at state 1.
//!
//! At state `i` the action 1 moves to `i + 1` and pays nothing; the
//! action 0 stays at `i` and pays `f0(i)`. A stationary policy therefore
//! either stops forever at the first state `i*` where it picks 0, earning
//! `f0(i*)` per step, or drifts off and earns 0.
//!
//! - cost mode: `f0(i) = 1/i`; the infimum 0 is attained by always moving.
//! - reward mode: `f0(i) = 1 - 1/i`; the supremum 1 is approached by
//!   stopping later and later but never attained by a stationary policy.
//!
//! Policies are indexed by state, so index 0 is a placeholder that the
//! chain never visits. Actions are listed as `[1, 0]` so lexicographic
//! enumeration tries "advance" first.

use crate::error::{Error, Result};
use crate::policy::{Action, ActionSpace, Policy, TailRule};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LineMode {
    Cost,
    Reward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LineChainModel {
    pub mode: LineMode,
}

impl LineChainModel {
    pub fn cost() -> Self {
        Self { mode: LineMode::Cost }
    }

    pub fn reward() -> Self {
        Self { mode: LineMode::Reward }
    }

    /// Payoff per step of staying at `i >= 1`.
    pub fn f0(&self, i: usize) -> f64 {
        let x = 1.0 / i as f64;
        match self.mode {
            LineMode::Cost => x,
            LineMode::Reward => 1.0 - x,
        }
    }

    /// First state `>= 1` where `u` stays, if any.
    pub fn first_stop(&self, u: &Policy) -> Result<Option<usize>> {
        let u = u.bind(self)?;
        let stay = Action::index(0);
        for i in 1..u.prefix_len().max(1) {
            if *u.action_at(i)? == stay {
                return Ok(Some(i));
            }
        }
        match &u.tail {
            TailRule::Constant(a) if *a == stay => Ok(Some(u.prefix_len().max(1))),
            TailRule::Constant(_) => Ok(None),
            TailRule::Cycle(c) => {
                // accepted only when it is a constant written as a cycle
                if c.iter().all(|a| *a == c[0]) {
                    Ok((c[0] == stay).then(|| u.prefix_len().max(1)))
                } else {
                    Err(Error::InvalidParameter(format!("tail rule {} is not eventually constant", u.tail)))
                }
            }
            TailRule::AllOn => unreachable!("bound policies have no symbolic tails"),
        }
    }
}

impl ActionSpace for LineChainModel {
    fn actions(&self, _state: usize) -> Vec<Action> {
        vec![Action::index(1), Action::index(0)]
    }

    fn homogeneous_from(&self) -> usize {
        0
    }

    /// Always advance.
    fn all_on(&self) -> Option<Action> {
        Some(Action::index(1))
    }
}

/// Long-run average payoff of `u` from state 1.
pub fn eta_line(model: &LineChainModel, u: &Policy) -> Result<f64> {
    Ok(model.first_stop(u)?.map_or(0.0, |i| model.f0(i)))
}

/// Best stationary reward representable with prefix length `L` and a
/// constant tail, against the optimal reward 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupremumGap {
    pub prefix_len: usize,
    pub max_stationary: f64,
    /// Stopping state attaining the maximum; `None` when drifting is best.
    pub argmax_stop: Option<usize>,
    pub gap: f64,
}

/// The stopping state of a prefix-`L` policy with a constant tail is
/// either some `i* < L`, exactly `L` (all advance, then stay), or absent.
/// Enumerating these classes gives the maximum over all `2^(L+1)`
/// policies without listing them.
pub fn stationary_supremum_gap(model: &LineChainModel, prefix_len: usize) -> Result<SupremumGap> {
    if model.mode != LineMode::Reward {
        return Err(Error::InvalidParameter("supremum gap is defined for the reward chain".into()));
    }
    let mut best = 0.0;
    let mut argmax = None;
    for i in 1..=prefix_len.max(1) {
        let v = model.f0(i);
        if v > best {
            best = v;
            argmax = Some(i);
        }
    }
    Ok(SupremumGap { prefix_len, max_stationary: best, argmax_stop: argmax, gap: 1.0 - best })
}

/// Reward stream of the history-dependent policy that stays `i` times at
/// state `i` and then advances: `0, 0, 1/2, 1/2, 0, 2/3, 2/3, 2/3, 0, ...`.
#[derive(Debug, Clone, Default)]
pub struct HistoryStream {
    state: usize,
    stays_left: usize,
}

impl HistoryStream {
    pub fn new() -> Self {
        Self { state: 1, stays_left: 1 }
    }
}

impl Iterator for HistoryStream {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        let i = self.state;
        if self.stays_left > 0 {
            self.stays_left -= 1;
            Some(1.0 - 1.0 / i as f64)
        } else {
            self.state += 1;
            self.stays_left = self.state;
            Some(0.0)
        }
    }
}

/// Running average of the first `T` rewards of [`HistoryStream`].
pub fn history_stream_average(t: usize) -> Result<f64> {
    if t == 0 {
        return Err(Error::InvalidParameter("stream length T must be at least 1".into()));
    }
    Ok(HistoryStream::new().take(t).sum::<f64>() / t as f64)
}

/// `(T_i, average)` at the end of each completed block `i = 1..=blocks`,
/// where block `i` is the `i` stays at state `i` followed by the advance.
pub fn block_averages(blocks: usize) -> Vec<(usize, f64)> {
    let mut out = Vec::with_capacity(blocks);
    let mut t = 0usize;
    let mut sum = 0.0;
    let mut stream = HistoryStream::new();
    for i in 1..=blocks {
        for _ in 0..=i {
            sum += stream.next().unwrap_or(0.0);
            t += 1;
        }
        out.push((t, sum / t as f64));
    }
    out
}
