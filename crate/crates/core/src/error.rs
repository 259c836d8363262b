use serde::Serialize;
use thiserror::Error;

use crate::chsh::ChshReport;

pub type Result<T, E = QpqError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum QpqError {
    /// An input broke an operation's precondition (non-Hermitian operator,
    /// unnormalised state, empty round count, ...).
    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("unsupported input: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("protocol aborted: {0}")]
    Abort(AbortReason),

    #[error("no known final key bit after {attempts} attempt(s)")]
    RetriesExhausted { attempts: u32 },

    /// A min-entropy quantity diverges (θ too close to 0 for the value to be
    /// represented).
    #[error("entropy saturated: {0}")]
    EntropySaturated(String),
}

/// A violated [`crate::ProtocolConfig`] constraint. The message names the
/// constraint so callers can surface it verbatim.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("theta must lie in (0, pi/2], got {0}")]
    Theta(f64),
    #[error("gamma must lie in (0, 1/2), got {0}")]
    Gamma(f64),
    #[error("gamma*K must be an even integer (gamma*K/2 pairs per referee), got {0}")]
    VerificationSplit(f64),
    #[error("(1-2*gamma)*K != k*N: {remaining} != {key_len}")]
    KeyLength { remaining: i64, key_len: usize },
    #[error("{0} must be positive")]
    NonPositive(&'static str),
    #[error("eta must be finite and >= 0, got {0}")]
    Eta(f64),
    #[error("invalid parameter: {0}")]
    Invalid(String),
}

/// Why a protocol phase aborted.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AbortReason {
    /// A CHSH sub-test fell below `cos²(π/8) − η`.
    Chsh { report: ChshReport },
    /// POVM sub-test 1 saw a conclusive outcome contradicting Bob's state.
    PovmConflict { conflicts: usize, checked: usize },
    /// POVM sub-test 2 saw too few conclusive outcomes.
    PovmRate { conclusive: usize, threshold: f64, checked: usize },
    /// Estimated final-key error rate exceeded the configured ε.
    ErrorRate { rate: f64, epsilon: f64 },
}

impl std::fmt::Display for AbortReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AbortReason::Chsh { report } => write!(
                f,
                "CHSH test ({:?} referee) Z = {:.4} below threshold {:.4}",
                report.referee, report.z_statistic, report.threshold
            ),
            AbortReason::PovmConflict { conflicts, checked } => write!(
                f,
                "POVM conflict test: {conflicts} conflicting outcome(s) in {checked} checked pairs"
            ),
            AbortReason::PovmRate { conclusive, threshold, checked } => write!(
                f,
                "POVM rate test: {conclusive} conclusive of {checked}, threshold {threshold:.2}"
            ),
            AbortReason::ErrorRate { rate, epsilon } => {
                write!(f, "final key error rate {rate:.4} exceeds epsilon {epsilon}")
            }
        }
    }
}
