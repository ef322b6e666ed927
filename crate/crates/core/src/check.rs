//! Strong-compliance checks that race the unbounded and bounded encodings.

use std::collections::BTreeSet;
use std::time::Duration;

use crate::schema::{PolicyBundle, PolicyError, RequestContext};
use crate::smt::{choose_bounds, encode_bounded, encode_strong_compliance, TraceItem};
use crate::solver::{SolverError, SolverOutcome, SolverPool, UnknownReason};
use crate::sql::BasicQuery;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StrongVerdict {
    /// Proved by the unbounded encoding; `core` holds indices of the trace
    /// entries the solver used.
    Compliant { core: BTreeSet<usize> },
    NonCompliant,
    Unknown(String),
}

#[derive(Debug, thiserror::Error)]
pub enum CheckError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

fn trace_indices(core: &BTreeSet<String>) -> BTreeSet<usize> {
    core.iter()
        .filter_map(|l| l.strip_prefix("LQ_").and_then(|n| n.parse::<usize>().ok()).map(|n| n - 1))
        .collect()
}

/// Decides whether `q` is strongly compliant given the trace. An unbounded
/// unsat answer proves compliance; a sat answer from either encoding refutes it.
pub fn check_strong(
    policy: &PolicyBundle,
    ctx: &RequestContext,
    trace: &[TraceItem],
    q: &BasicQuery,
    pool: &SolverPool,
    budget: Duration,
) -> Result<StrongVerdict, CheckError> {
    let unbounded = encode_strong_compliance(policy, ctx, trace, q)?;
    let bounded = encode_bounded(policy, ctx, trace, q, &choose_bounds(trace, q, policy))?;
    let results = pool.solve_until(&[&unbounded, &bounded], budget, |i, o| {
        matches!(o, SolverOutcome::Sat) || (i == 0 && o.is_unsat())
    });
    let mut reason = String::from("solver timed out");
    for (i, r) in results.iter().enumerate() {
        match r {
            Ok(SolverOutcome::Unsat(core)) if i == 0 => {
                return Ok(StrongVerdict::Compliant { core: trace_indices(core) });
            }
            Err(e) if i == 0 => return Err(e.clone().into()),
            Ok(SolverOutcome::Unknown(UnknownReason::SolverError(e))) => reason = e.clone(),
            _ => {}
        }
    }
    if results.iter().any(|r| matches!(r, Ok(SolverOutcome::Sat))) {
        return Ok(StrongVerdict::NonCompliant);
    }
    Ok(StrongVerdict::Unknown(reason))
}
