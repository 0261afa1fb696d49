use thiserror::Error;

/// Errors raised by model construction, policy handling and the solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("policy syntax error: {0}")]
    PolicySyntax(String),

    #[error("policy is not bound to a model (tail rule `{0}` needs a model to resolve)")]
    Unbound(String),

    #[error("action {action} is not feasible at state {state}")]
    InfeasibleAction { state: usize, action: String },

    #[error("tail disagreement set is not eventually constant beyond state {from}")]
    UndecidableTail { from: usize },

    #[error("search space too large: {count} policies exceed cap {cap}")]
    SearchSpaceTooLarge { count: String, cap: u64 },

    #[error("ergodicity violated: aggregate service rate is zero at state {state}")]
    ErgodicityViolation { state: usize },

    #[error("no stability certificate: service rate {rate} <= arrival rate {lambda} at tail state {state}")]
    Unstable { state: usize, rate: f64, lambda: f64 },

    #[error("holding cost `{0}` grows faster than any polynomial; no certified remainder")]
    GrowthCheck(String),

    #[error("truncated system is singular: {0}")]
    Singular(String),

    #[error("truncation did not stabilize up to K = {k_cap} (last change {last_change:e})")]
    NotConverged { k_cap: usize, last_change: f64 },

    #[error("negative un-normalized mass {value:e} at state {state}")]
    NegativeMass { state: usize, value: f64 },

    #[error("every enumerated candidate was unstable ({skipped} skipped)")]
    AllCandidatesUnstable { skipped: usize },

    #[error("agreement is empty (policies differ at state 0); only the distance is defined")]
    NoAgreement,
}

impl Error {
    /// True for failures caused by the numerics or the dynamics of a
    /// particular policy rather than by malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::ErgodicityViolation { .. }
                | Error::Unstable { .. }
                | Error::Singular(_)
                | Error::NotConverged { .. }
                | Error::NegativeMass { .. }
                | Error::AllCandidatesUnstable { .. }
                | Error::SearchSpaceTooLarge { .. }
                | Error::UndecidableTail { .. }
                | Error::GrowthCheck(_)
        )
    }

    /// Instability of a single candidate; searches skip these.
    pub fn is_instability(&self) -> bool {
        matches!(self, Error::ErgodicityViolation { .. } | Error::Unstable { .. } | Error::NotConverged { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
