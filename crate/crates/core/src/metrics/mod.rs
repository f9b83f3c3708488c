//! Evaluation measures, the kickout protocol and rank-based comparison tests.

mod classification;
mod kickout;
mod stats;

pub use classification::{auc, brier, r_precision, DEFAULT_ACCEPT_FRACTION};
pub use kickout::{
    kickout, kickout_protocol, kickout_protocol_with, KickoutInputs, KickoutOutcome,
    KickoutProtocolConfig,
};
pub use stats::{
    average_ranks, friedman_test, nemenyi_cd, nemenyi_q05, spearman, FriedmanResult,
};
