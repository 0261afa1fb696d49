//! TOML model files.
//!
//! A queue:
//!
//! ```toml
//! lambda = 1.0
//!
//! [[group]]
//! m = 1
//! mu = 2.0
//! c = 1.0
//!
//! [[group]]
//! m = 1
//! mu = 1.0
//! c = 1.0
//!
//! [holding]
//! kind = "polynomial"      # or "signed_linear", "exponential"
//! coeffs = [0.0, 1.0]      # h(n) = sum_j coeffs[j] n^j
//!
//! [metric]
//! r = 0.1
//! ```
//!
//! `busy_actions = ["(1|0)", "(1|1)"]` restricts the actions at states
//! `n >= 1`. `model = "birth-death"` keeps the queue parameters but
//! evaluates through the truncated-system solver.
//!
//! A transition table (`model = "table"`):
//!
//! ```toml
//! model = "table"
//!
//! [table]
//! horizon = 2
//! rate_bound = 1.5
//! band = 1
//! transitions = [[0, 0, 1, 0.5], [1, 0, 2, 0.5], [1, 0, 0, 1.0]]  # state, action, target, rate
//! costs = [[0, 0, 1.0]]                                           # state, action, cost
//! cost_poly = [0.0, 1.0]
//! cost_growth = [1.0, 1.0]
//!
//! [majorant]
//! coef = 1.0
//! ratio = 0.5
//! ```
//!
//! States at or beyond `horizon - 1` repeat the last row shifted.

use crate::error::{Error, Result};
use crate::generic::{GenericCtmdpModel, GeometricMajorant, TableModel};
use crate::policy::{Action, MetricParams};
use crate::queue::{GroupServerModel, HoldingCost, ServerGroup};
use serde::Deserialize;
use std::path::Path;
use std::sync::Arc;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: Option<String>,
    lambda: Option<f64>,
    #[serde(default)]
    group: Vec<RawGroup>,
    holding: Option<RawHolding>,
    busy_actions: Option<Vec<String>>,
    metric: Option<RawMetric>,
    table: Option<RawTable>,
    majorant: Option<RawMajorant>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGroup {
    m: u32,
    mu: f64,
    #[serde(default)]
    c: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHolding {
    kind: String,
    coeffs: Option<Vec<f64>>,
    base: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMetric {
    r: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTable {
    horizon: usize,
    rate_bound: f64,
    band: usize,
    transitions: Vec<(usize, u32, usize, f64)>,
    #[serde(default)]
    costs: Vec<(usize, u32, f64)>,
    #[serde(default)]
    cost_poly: Vec<f64>,
    cost_growth: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMajorant {
    coef: f64,
    ratio: f64,
}

/// A model read from a config file.
#[derive(Debug, Clone)]
pub enum LoadedModel {
    Queue(GroupServerModel),
    /// Queue parameters evaluated through the truncated-system solver.
    BirthDeath(GroupServerModel, GenericCtmdpModel),
    Table(GenericCtmdpModel),
}

#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub model: LoadedModel,
    pub metric: MetricParams,
}

impl ModelConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        text.parse()
    }

    /// The queue, for the model kinds that have one.
    pub fn queue(&self) -> Option<&GroupServerModel> {
        match &self.model {
            LoadedModel::Queue(q) | LoadedModel::BirthDeath(q, _) => Some(q),
            LoadedModel::Table(_) => None,
        }
    }
}

impl std::str::FromStr for ModelConfig {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let metric = match &raw.metric {
            Some(m) => MetricParams::new(m.r)?,
            None => MetricParams::default(),
        };
        let kind = raw.model.as_deref().unwrap_or("queue");
        let model = match kind {
            "queue" => LoadedModel::Queue(queue_from(&raw)?),
            "birth-death" => {
                let q = queue_from(&raw)?;
                let mut g = GenericCtmdpModel::from_queue(&q);
                if let Some(m) = &raw.majorant {
                    g = g.with_majorant(GeometricMajorant { coef: m.coef, ratio: m.ratio })?;
                }
                LoadedModel::BirthDeath(q, g)
            }
            "table" => LoadedModel::Table(table_from(&raw)?),
            other => {
                return Err(Error::Config(format!(
                    "unknown model kind `{other}` (expected queue, birth-death or table)"
                )))
            }
        };
        Ok(Self { model, metric })
    }
}

fn queue_from(raw: &RawConfig) -> Result<GroupServerModel> {
    if raw.table.is_some() {
        return Err(Error::Config("[table] is only valid with model = \"table\"".into()));
    }
    let lambda = raw.lambda.ok_or_else(|| Error::Config("missing `lambda`".into()))?;
    if raw.group.is_empty() {
        return Err(Error::Config("at least one [[group]] is required".into()));
    }
    let groups = raw.group.iter().map(|g| ServerGroup { servers: g.m, mu: g.mu, cost: g.c }).collect();
    let holding = match &raw.holding {
        None => HoldingCost::Polynomial(vec![0.0, 1.0]),
        Some(h) => match h.kind.as_str() {
            "polynomial" => HoldingCost::Polynomial(
                h.coeffs.clone().ok_or_else(|| Error::Config("polynomial holding cost needs `coeffs`".into()))?,
            ),
            "signed_linear" => HoldingCost::SignedLinear,
            "exponential" => HoldingCost::Exponential {
                base: h.base.ok_or_else(|| Error::Config("exponential holding cost needs `base`".into()))?,
            },
            other => return Err(Error::Config(format!("unknown holding kind `{other}`"))),
        },
    };
    let mut q = GroupServerModel::new(lambda, groups, holding)?;
    if let Some(actions) = &raw.busy_actions {
        let parsed = actions.iter().map(|a| a.parse::<Action>()).collect::<Result<Vec<_>>>()?;
        q = q.with_busy_actions(parsed)?;
    }
    Ok(q)
}

fn table_from(raw: &RawConfig) -> Result<GenericCtmdpModel> {
    if raw.lambda.is_some() || !raw.group.is_empty() || raw.holding.is_some() {
        return Err(Error::Config("queue keys are not valid with model = \"table\"".into()));
    }
    let t = raw.table.as_ref().ok_or_else(|| Error::Config("model = \"table\" needs a [table] section".into()))?;
    let mut table = TableModel::new(t.horizon)?;
    for &(s, a, target, rate) in &t.transitions {
        table.add_transition(s, Action::index(a), target, rate)?;
    }
    for &(s, a, cost) in &t.costs {
        table.set_action_cost(s, Action::index(a), cost)?;
    }
    table.set_state_cost(t.cost_poly.clone());
    table.validate()?;
    let mut model = GenericCtmdpModel::new(Arc::new(table), t.rate_bound, t.band)?;
    if let Some(m) = &raw.majorant {
        model = model.with_majorant(GeometricMajorant { coef: m.coef, ratio: m.ratio })?;
    }
    if let Some(g) = &t.cost_growth {
        model = model.with_cost_growth(g.clone())?;
    }
    Ok(model)
}
