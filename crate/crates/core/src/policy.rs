//! Stationary policies on the state space `{0, 1, 2, ...}` and the
//! weighted-disagreement metric between them.
//!
//! A policy is an explicit action prefix for states `0..L` followed by a
//! tail rule covering every state `>= L`. Tail rules are either constant,
//! periodic (`cycle`), or the symbolic `all-on` rule that only a queue
//! model can resolve. The metric
//!
//! ```text
//! d(u1, u2) = sum_{i >= 0} 1[u1(i) != u2(i)] * r^i,   0 < r < 1/2
//! ```
//!
//! makes agreement on a long prefix equivalent to being close:
//! `d(u1, u2) < r^k` exactly when the policies agree on states `0..=k`.

use crate::error::{Error, Result};
use serde::Serialize;
use std::fmt;
use std::str::FromStr;

/// One action: a tuple of nonnegative integers. Index-style actions are
/// 1-tuples; queue actions hold the number of active servers per group.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Action(pub Vec<u32>);

impl Action {
    pub fn index(i: u32) -> Self {
        Action(vec![i])
    }

    pub fn components(&self) -> &[u32] {
        &self.0
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.len() == 1 {
            write!(f, "{}", self.0[0])
        } else {
            write!(f, "(")?;
            for (k, a) in self.0.iter().enumerate() {
                if k > 0 {
                    write!(f, "|")?;
                }
                write!(f, "{a}")?;
            }
            write!(f, ")")
        }
    }
}

impl FromStr for Action {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let inner = match s.strip_prefix('(') {
            Some(rest) => {
                rest.strip_suffix(')').ok_or_else(|| Error::PolicySyntax(format!("unbalanced parenthesis in `{s}`")))?
            }
            None => s,
        };
        if inner.is_empty() {
            return Err(Error::PolicySyntax("empty action".into()));
        }
        inner
            .split('|')
            .map(|t| {
                t.trim().parse::<u32>().map_err(|_| Error::PolicySyntax(format!("bad action component `{t}` in `{s}`")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Action)
    }
}

/// What a policy does on states beyond its explicit prefix.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub enum TailRule {
    /// The same action at every state `>= L`.
    Constant(Action),
    /// Repeats the listed actions: state `L + j` uses `cycle[j % len]`.
    Cycle(Vec<Action>),
    /// Every server switched on; resolved against a queue model on binding.
    AllOn,
}

impl TailRule {
    /// Action at offset `j` past the prefix. `None` for unresolved rules.
    fn at_offset(&self, j: usize) -> Option<&Action> {
        match self {
            TailRule::Constant(a) => Some(a),
            TailRule::Cycle(c) => Some(&c[j % c.len()]),
            TailRule::AllOn => None,
        }
    }

    fn period(&self) -> usize {
        match self {
            TailRule::Cycle(c) => c.len(),
            _ => 1,
        }
    }

    /// The distinct actions the rule can produce.
    pub fn actions(&self) -> Vec<Action> {
        let mut out: Vec<Action> = match self {
            TailRule::Constant(a) => vec![a.clone()],
            TailRule::Cycle(c) => c.clone(),
            TailRule::AllOn => Vec::new(),
        };
        out.sort();
        out.dedup();
        out
    }
}

impl fmt::Display for TailRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TailRule::Constant(a) => write!(f, "constant({a})"),
            TailRule::AllOn => write!(f, "all-on"),
            TailRule::Cycle(c) => {
                write!(f, "cycle(")?;
                for (k, a) in c.iter().enumerate() {
                    if k > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

impl FromStr for TailRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "all-on" {
            return Ok(TailRule::AllOn);
        }
        let call = |name: &str| -> Option<&str> {
            s.strip_prefix(name).and_then(|r| r.trim_start().strip_prefix('(')).and_then(|r| r.strip_suffix(')'))
        };
        if let Some(arg) = call("constant") {
            return Ok(TailRule::Constant(arg.parse()?));
        }
        if let Some(arg) = call("cycle") {
            let actions = split_top_level(arg).into_iter().map(|t| t.parse()).collect::<Result<Vec<Action>>>()?;
            if actions.is_empty() {
                return Err(Error::PolicySyntax("cycle() needs at least one action".into()));
            }
            return Ok(TailRule::Cycle(actions));
        }
        Err(Error::PolicySyntax(format!("unknown tail rule `{s}`")))
    }
}

/// Split on commas that are not inside parentheses.
fn split_top_level(s: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, ch) in s.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                parts.push(s[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    let last = s[start..].trim();
    if !last.is_empty() || !parts.is_empty() {
        parts.push(last);
    }
    parts
}

/// The models a policy can be bound to: finite, nonempty action sets per
/// state, listed in a fixed order that defines lexicographic enumeration.
pub trait ActionSpace {
    fn actions(&self, state: usize) -> Vec<Action>;

    fn is_feasible(&self, state: usize, action: &Action) -> bool {
        self.actions(state).contains(action)
    }

    /// Action sets are identical for every state `>= homogeneous_from()`.
    fn homogeneous_from(&self) -> usize;

    /// Resolution of the `all-on` tail rule, when the model has one.
    fn all_on(&self) -> Option<Action> {
        None
    }
}

/// A stationary policy: prefix for states `0..L`, tail rule beyond.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Policy {
    pub prefix: Vec<Action>,
    pub tail: TailRule,
    pub label: Option<String>,
}

/// Longest common prefix of two policies, as returned by
/// [`Policy::prefix_agreement`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Agreement {
    /// Agree on states `0..=k`; `k = -1` means they differ at state 0.
    Through(i64),
    /// Agree on every state.
    Everywhere,
}

impl Agreement {
    pub fn is_everywhere(&self) -> bool {
        matches!(self, Agreement::Everywhere)
    }

    /// Agreement through at least `k`.
    pub fn at_least(&self, k: i64) -> bool {
        match self {
            Agreement::Everywhere => true,
            Agreement::Through(j) => *j >= k,
        }
    }
}

impl fmt::Display for Agreement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Agreement::Through(k) => write!(f, "{k}"),
            Agreement::Everywhere => write!(f, "inf"),
        }
    }
}

impl Policy {
    pub fn new(prefix: Vec<Action>, tail: TailRule) -> Self {
        Self { prefix, tail, label: None }
    }

    pub fn constant(action: Action) -> Self {
        Self::new(Vec::new(), TailRule::Constant(action))
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn prefix_len(&self) -> usize {
        self.prefix.len()
    }

    pub fn is_bound(&self) -> bool {
        !matches!(self.tail, TailRule::AllOn)
    }

    pub fn action_at(&self, state: usize) -> Result<&Action> {
        match self.prefix.get(state) {
            Some(a) => Ok(a),
            None => self.tail.at_offset(state - self.prefix.len()).ok_or_else(|| Error::Unbound(self.tail.to_string())),
        }
    }

    /// Resolve symbolic tail rules and check every action against the
    /// model's action sets. Binding an already-bound policy re-validates it.
    pub fn bind<M: ActionSpace + ?Sized>(&self, model: &M) -> Result<Policy> {
        let tail = match &self.tail {
            TailRule::AllOn => TailRule::Constant(
                model.all_on().ok_or_else(|| Error::InvalidParameter("model has no all-on action".into()))?,
            ),
            other => other.clone(),
        };
        let bound = Policy { prefix: self.prefix.clone(), tail, label: self.label.clone() };
        for (state, a) in bound.prefix.iter().enumerate() {
            if !model.is_feasible(state, a) {
                return Err(Error::InfeasibleAction { state, action: a.to_string() });
            }
        }
        let l = bound.prefix.len();
        let end = l.max(model.homogeneous_from()) + bound.tail.period();
        for state in l..end {
            let a = bound.action_at(state)?;
            if !model.is_feasible(state, a) {
                return Err(Error::InfeasibleAction { state, action: a.to_string() });
            }
        }
        Ok(bound)
    }

    /// Number of leading states on which both policies must be compared
    /// explicitly before their tails become jointly periodic.
    fn joint_horizon(&self, other: &Policy) -> (usize, usize) {
        let h = self.prefix.len().max(other.prefix.len());
        let p = lcm(self.tail.period(), other.tail.period());
        (h, p)
    }

    /// Largest `k` with `self(i) == other(i)` for all `i <= k`.
    pub fn prefix_agreement(&self, other: &Policy) -> Result<Agreement> {
        let (h, p) = self.joint_horizon(other);
        for state in 0..h + p {
            if self.action_at(state)? != other.action_at(state)? {
                return Ok(Agreement::Through(state as i64 - 1));
            }
        }
        Ok(Agreement::Everywhere)
    }

    /// Extensional equality: same action at every state.
    pub fn same_as(&self, other: &Policy) -> Result<bool> {
        Ok(self.prefix_agreement(other)?.is_everywhere())
    }

    /// Expand into an explicit prefix of at least `len` states with the
    /// same tail behaviour.
    pub fn extended_to(&self, len: usize) -> Result<Policy> {
        if len <= self.prefix.len() {
            return Ok(self.clone());
        }
        let mut prefix = self.prefix.clone();
        for state in self.prefix.len()..len {
            prefix.push(self.action_at(state)?.clone());
        }
        let shift = len - self.prefix.len();
        let tail = match &self.tail {
            TailRule::Cycle(c) => {
                let mut rotated = c.clone();
                rotated.rotate_left(shift % c.len());
                TailRule::Cycle(rotated)
            }
            other => other.clone(),
        };
        Ok(Policy { prefix, tail, label: self.label.clone() })
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "prefix=[")?;
        for (k, a) in self.prefix.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, "];tail={}", self.tail)
    }
}

impl FromStr for Policy {
    type Err = Error;

    /// Parses `prefix=[a0,a1,...];tail=constant(a)` with optional
    /// `;label=name`. Actions are integers or tuples like `(1|0)`.
    fn from_str(s: &str) -> Result<Self> {
        let mut prefix = None;
        let mut tail = None;
        let mut label = None;
        for field in s.split(';').map(str::trim).filter(|f| !f.is_empty()) {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| Error::PolicySyntax(format!("expected key=value, got `{field}`")))?;
            match key.trim() {
                "prefix" => {
                    let v = value.trim();
                    let body = v
                        .strip_prefix('[')
                        .and_then(|r| r.strip_suffix(']'))
                        .ok_or_else(|| Error::PolicySyntax(format!("prefix must be [..], got `{v}`")))?;
                    prefix = Some(split_top_level(body).into_iter().map(str::parse).collect::<Result<Vec<Action>>>()?);
                }
                "tail" => tail = Some(value.parse::<TailRule>()?),
                "label" => label = Some(value.trim().to_string()),
                other => return Err(Error::PolicySyntax(format!("unknown policy field `{other}`"))),
            }
        }
        let tail = tail.ok_or_else(|| Error::PolicySyntax("missing tail=...".into()))?;
        Ok(Policy { prefix: prefix.unwrap_or_default(), tail, label })
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

/// Parameters of the policy metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricParams {
    r: f64,
}

impl MetricParams {
    pub fn new(r: f64) -> Result<Self> {
        if r > 0.0 && r < 0.5 {
            Ok(Self { r })
        } else {
            Err(Error::InvalidParameter(format!("metric ratio r must lie in (0, 0.5), got {r}")))
        }
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    /// `r^k`, the radius of the ball of policies agreeing through `k`.
    pub fn radius(&self, k: u32) -> f64 {
        self.r.powi(k as i32)
    }
}

impl Default for MetricParams {
    fn default() -> Self {
        Self { r: 0.1 }
    }
}

/// `sum_i 1[u1(i) != u2(i)] r^i`, exact over the explicit prefixes and in
/// closed form over the tails.
pub fn distance(u1: &Policy, u2: &Policy, params: MetricParams) -> Result<f64> {
    if !u1.is_bound() {
        return Err(Error::Unbound(u1.tail.to_string()));
    }
    if !u2.is_bound() {
        return Err(Error::Unbound(u2.tail.to_string()));
    }
    let r = params.r;
    let (h, p) = u1.joint_horizon(u2);
    let mut d = 0.0;
    for state in 0..h {
        if u1.action_at(state)? != u2.action_at(state)? {
            d += r.powi(state as i32);
        }
    }
    let mut differs = Vec::with_capacity(p);
    for state in h..h + p {
        differs.push(u1.action_at(state)? != u2.action_at(state)?);
    }
    if differs.iter().all(|x| *x) {
        d += r.powi(h as i32) / (1.0 - r);
    } else if differs.iter().any(|x| *x) {
        return Err(Error::UndecidableTail { from: h });
    }
    Ok(d)
}

/// Membership in the open ball `{v : d(center, v) < eps}`.
pub fn in_ball(u: &Policy, center: &Policy, eps: f64, params: MetricParams) -> Result<bool> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("ball radius must be positive, got {eps}")));
    }
    Ok(distance(u, center, params)? < eps)
}

/// Lexicographic enumeration of all prefix-`L` policies with a fixed tail.
///
/// Yields `prod_{i<L} |A(i)|` policies; fails with
/// [`Error::SearchSpaceTooLarge`] when that product exceeds `cap`.
pub fn enumerate_prefixes<M: ActionSpace + ?Sized>(
    model: &M,
    len: usize,
    tail: &TailRule,
    cap: u64,
) -> Result<PrefixEnumeration> {
    let sets: Vec<Vec<Action>> = (0..len).map(|s| model.actions(s)).collect();
    if let Some(state) = sets.iter().position(|s| s.is_empty()) {
        return Err(Error::InvalidModel(format!("empty action set at state {state}")));
    }
    let mut count: u64 = 1;
    for set in &sets {
        count = match count.checked_mul(set.len() as u64) {
            Some(c) if c <= cap => c,
            _ => {
                let approx: f64 = sets.iter().map(|s| (s.len() as f64).log10()).sum();
                return Err(Error::SearchSpaceTooLarge { count: format!("~1e{approx:.1}"), cap });
            }
        };
    }
    Ok(PrefixEnumeration { sets, tail: tail.clone(), cursor: Some(vec![0; len]), total: count })
}

/// Iterator returned by [`enumerate_prefixes`].
#[derive(Debug, Clone)]
pub struct PrefixEnumeration {
    sets: Vec<Vec<Action>>,
    tail: TailRule,
    cursor: Option<Vec<usize>>,
    total: u64,
}

impl PrefixEnumeration {
    pub fn total(&self) -> u64 {
        self.total
    }
}

impl Iterator for PrefixEnumeration {
    type Item = Policy;

    fn next(&mut self) -> Option<Policy> {
        let cursor = self.cursor.as_mut()?;
        let prefix = cursor.iter().zip(&self.sets).map(|(&i, set)| set[i].clone()).collect();
        let policy = Policy::new(prefix, self.tail.clone());
        // odometer, last state varies fastest
        let mut pos = cursor.len();
        loop {
            if pos == 0 {
                self.cursor = None;
                break;
            }
            pos -= 1;
            cursor[pos] += 1;
            if cursor[pos] < self.sets[pos].len() {
                break;
            }
            cursor[pos] = 0;
        }
        Some(policy)
    }
}
