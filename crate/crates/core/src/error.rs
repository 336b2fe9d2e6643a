use crate::scenario::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("scenario has {} invariant violation(s): {}", .0.len(), Violation::join(.0))]
    Validation(Vec<Violation>),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("link from BS {bs} to user {user} has zero channel gain")]
    InfeasibleLink { bs: usize, user: usize },

    #[error(
        "URLLC user {user} on BS {bs} needs {required_w:.6e} W, above p_max = {p_max_w:.6e} W"
    )]
    ReliabilityInfeasible {
        bs: usize,
        user: usize,
        required_w: f64,
        p_max_w: f64,
    },

    #[error("URLLC demand {required_w:.6e} W exceeds the budget {budget_w:.6e} W of BS {bs}")]
    BudgetOverdraw {
        bs: usize,
        required_w: f64,
        budget_w: f64,
    },

    #[error("URLLC infeasible for (bs, user) pairs {0:?}")]
    UrllcInfeasible(Vec<(usize, usize)>),

    #[error("instance too large for exhaustive search: {bs} BSs and {users} users (limit {max_bs} BSs, {max_users} users)")]
    TooLarge {
        bs: usize,
        users: usize,
        max_bs: usize,
        max_users: usize,
    },
}
