//! Request sessions: per-query decisions over a growing trace.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::Arc;
use std::time::Duration;

use crate::cache::{CacheLoadError, DecisionCache};
use crate::check::{check_strong, StrongVerdict};
use crate::schema::{PolicyBundle, PolicyError, RequestContext, View};
use crate::smt::TraceItem;
use crate::solver::{thread_calls, SolverConfig, SolverError, SolverPool};
use crate::sql::basic::{BasicQuery, Operand, Predicate};
use crate::sql::{split_in, to_basic};
use crate::template::{generate_template, TemplateConfig};
use crate::value::Value;

#[derive(Clone, Debug)]
pub struct EngineConfig {
    pub solvers: Vec<SolverConfig>,
    /// Budget for one compliance check.
    pub check_budget: Duration,
    pub template: TemplateConfig,
    pub use_cache: bool,
    /// Allow every query, flagging the ones that would be denied.
    pub log_only: bool,
    pub cache_max_entries: Option<usize>,
    /// Queries that returned more rows than this contribute only rows keyed by
    /// a constant of the checked query.
    pub prune_threshold: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            solvers: vec![SolverConfig::z3()],
            check_budget: Duration::from_secs(2),
            template: TemplateConfig::default(),
            use_cache: true,
            log_only: false,
            cache_max_entries: None,
            prune_threshold: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DenyReason {
    NonCompliant,
    Unknown(String),
    Unsupported(String),
}

impl std::fmt::Display for DenyReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DenyReason::NonCompliant => write!(f, "not compliant"),
            DenyReason::Unknown(r) => write!(f, "undecided: {r}"),
            DenyReason::Unsupported(r) => write!(f, "unsupported: {r}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Decision {
    Allow,
    Deny(DenyReason),
}

impl Decision {
    pub fn is_allow(&self) -> bool {
        matches!(self, Decision::Allow)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecidedBy {
    Frontend,
    FastAccept,
    Cache,
    Solver,
    Split,
}

impl DecidedBy {
    pub fn name(self) -> &'static str {
        match self {
            DecidedBy::Frontend => "frontend",
            DecidedBy::FastAccept => "fast_accept",
            DecidedBy::Cache => "cache",
            DecidedBy::Solver => "solver",
            DecidedBy::Split => "split",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckReport {
    /// The decision to enforce. Under log-only mode this is always `Allow`.
    pub decision: Decision,
    pub decided_by: DecidedBy,
    /// The denial that log-only mode overrode.
    pub flagged: Option<DenyReason>,
    pub template_cached: bool,
    pub solver_calls: u64,
    /// Decisions (whole query or IN-split parts) proved by the solver.
    pub solver_decisions: u64,
    /// Decisions (whole query or IN-split parts) taken from the cache.
    pub cache_hits: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SessionStats {
    pub queries: u64,
    pub allows: u64,
    pub denies: u64,
    pub flagged: u64,
    pub fast_accepts: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub solver_decisions: u64,
    pub solver_calls: u64,
    pub templates_cached: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("session already ended")]
    SessionClosed,
    #[error("result row has {got} values but the query returns {expected} columns")]
    RowArity { expected: usize, got: usize },
    #[error("result row value: {0}")]
    RowType(String),
    #[error(transparent)]
    Context(#[from] PolicyError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

struct Shared {
    policy: PolicyBundle,
    cache: DecisionCache,
    pool: SolverPool,
    config: EngineConfig,
}

/// A policy with its solver pool and decision cache, shared across sessions.
#[derive(Clone)]
pub struct Engine {
    shared: Arc<Shared>,
}

impl Engine {
    pub fn new(policy: PolicyBundle, config: EngineConfig) -> Result<Engine, EngineError> {
        if config.solvers.is_empty() {
            return Err(SolverError::NoSolvers.into());
        }
        let cache = match config.cache_max_entries {
            Some(n) => DecisionCache::with_max_entries(n),
            None => DecisionCache::new(),
        };
        let pool = SolverPool::new(config.solvers.clone());
        Ok(Engine { shared: Arc::new(Shared { policy, cache, pool, config }) })
    }

    pub fn policy(&self) -> &PolicyBundle {
        &self.shared.policy
    }

    pub fn cache(&self) -> &DecisionCache {
        &self.shared.cache
    }

    pub fn config(&self) -> &EngineConfig {
        &self.shared.config
    }

    pub fn solver_calls(&self) -> u64 {
        self.shared.pool.calls()
    }

    /// Loads a cache dump, re-verifying every template.
    pub fn load_cache(&self, json: &serde_json::Value) -> Result<usize, CacheLoadError> {
        let s = &self.shared;
        s.cache.load(json, &s.policy, &s.pool, s.config.template.total_budget)
    }

    pub fn dump_cache(&self) -> serde_json::Value {
        self.shared.cache.dump(&self.shared.policy)
    }

    /// Starts a request with context values named as in the policy.
    pub fn begin_request(&self, raw: &BTreeMap<String, Value>) -> Result<Session, EngineError> {
        Ok(self.begin_with_context(self.shared.policy.make_context(raw)?))
    }

    pub fn begin_with_context(&self, ctx: RequestContext) -> Session {
        Session {
            shared: self.shared.clone(),
            ctx,
            trace: Vec::new(),
            seen: HashSet::new(),
            next_origin: 0,
            stats: SessionStats::default(),
            closed: false,
        }
    }
}

/// A trace entry with the query that produced it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceEntry {
    pub item: TraceItem,
    pub origin: usize,
    /// The producing query had a LIMIT, so its rows are a subset of the result.
    pub partial: bool,
}

pub struct Session {
    shared: Arc<Shared>,
    ctx: RequestContext,
    trace: Vec<TraceEntry>,
    seen: HashSet<TraceItem>,
    next_origin: usize,
    stats: SessionStats,
    closed: bool,
}

struct Outcome {
    decision: Decision,
    by: DecidedBy,
    template_cached: bool,
}

impl Outcome {
    fn allow(by: DecidedBy) -> Outcome {
        Outcome { decision: Decision::Allow, by, template_cached: false }
    }
}

impl Session {
    pub fn context(&self) -> &RequestContext {
        &self.ctx
    }

    pub fn trace(&self) -> &[TraceEntry] {
        &self.trace
    }

    pub fn stats(&self) -> &SessionStats {
        &self.stats
    }

    /// Decides one query. On `Allow`, `rows` (the query's result) join the trace.
    pub fn check_query(&mut self, sql: &str, params: &[Value], rows: &[Vec<Value>]) -> Result<CheckReport, EngineError> {
        if self.closed {
            return Err(EngineError::SessionClosed);
        }
        let calls_before = thread_calls();
        let before = self.stats.clone();
        let policy = &self.shared.policy;
        let rewritten = match to_basic(sql, params, &policy.schema, &policy.context_types()) {
            Ok(r) => r,
            Err(e) => {
                let o = Outcome {
                    decision: Decision::Deny(DenyReason::Unsupported(e.to_string())),
                    by: DecidedBy::Frontend,
                    template_cached: false,
                };
                return Ok(self.finish(o, calls_before, &before));
            }
        };
        let rows = match &rewritten.observed {
            Some(obs) => coerce_rows(obs, rows)?,
            None => Vec::new(),
        };
        let outcome = self.decide(&rewritten.query);
        let report = self.finish(outcome, calls_before, &before);
        let origin = self.next_origin;
        self.next_origin += 1;
        if report.flagged.is_none() && report.decision.is_allow() {
            if let Some(obs) = rewritten.observed {
                for row in rows {
                    let item = TraceItem::concrete(obs.clone(), &row);
                    if self.seen.insert(item.clone()) {
                        self.trace.push(TraceEntry { item, origin, partial: rewritten.limit_dropped });
                    }
                }
            }
        }
        Ok(report)
    }

    fn finish(&mut self, o: Outcome, calls_before: u64, before: &SessionStats) -> CheckReport {
        let solver_calls = thread_calls() - calls_before;
        let log_only = self.shared.config.log_only;
        let s = &mut self.stats;
        s.queries += 1;
        s.solver_calls += solver_calls;
        s.templates_cached += o.template_cached as u64;
        if o.by == DecidedBy::FastAccept {
            s.fast_accepts += 1;
        }
        let (decision, flagged) = match o.decision {
            Decision::Deny(r) if log_only => (Decision::Allow, Some(r)),
            d => (d, None),
        };
        if flagged.is_some() {
            s.flagged += 1;
        }
        if decision.is_allow() {
            s.allows += 1;
        } else {
            s.denies += 1;
        }
        CheckReport {
            decision,
            decided_by: o.by,
            flagged,
            template_cached: o.template_cached,
            solver_calls,
            solver_decisions: s.solver_decisions - before.solver_decisions,
            cache_hits: s.cache_hits - before.cache_hits,
        }
    }

    fn decide(&mut self, q: &BasicQuery) -> Outcome {
        if fast_accept(&self.shared.policy, q) {
            return Outcome::allow(DecidedBy::FastAccept);
        }
        if self.lookup(q) {
            return Outcome::allow(DecidedBy::Cache);
        }
        if let Ok(parts) = split_in(q) {
            if parts.len() > 1 {
                let mut cached = false;
                let mut all = true;
                for part in &parts {
                    let o = self.decide_single(part);
                    cached |= o.template_cached;
                    if !o.decision.is_allow() {
                        all = false;
                        break;
                    }
                }
                if all {
                    return Outcome { decision: Decision::Allow, by: DecidedBy::Split, template_cached: cached };
                }
                let mut o = self.solve(q);
                o.template_cached |= cached;
                return o;
            }
        }
        self.solve(q)
    }

    fn decide_single(&mut self, q: &BasicQuery) -> Outcome {
        if fast_accept(&self.shared.policy, q) {
            return Outcome::allow(DecidedBy::FastAccept);
        }
        if self.lookup(q) {
            return Outcome::allow(DecidedBy::Cache);
        }
        self.solve(q)
    }

    fn lookup(&mut self, q: &BasicQuery) -> bool {
        if !self.shared.config.use_cache {
            return false;
        }
        let items: Vec<TraceItem> = self.trace.iter().map(|e| e.item.clone()).collect();
        let hit = self.shared.cache.lookup(q, &items, &self.ctx).is_some();
        if hit {
            self.stats.cache_hits += 1;
        } else {
            self.stats.cache_misses += 1;
        }
        hit
    }

    fn solve(&mut self, q: &BasicQuery) -> Outcome {
        let s = &self.shared;
        let trace = prune_trace(&s.policy, q, &self.trace, s.config.prune_threshold);
        let verdict = check_strong(&s.policy, &self.ctx, &trace, q, &s.pool, s.config.check_budget);
        self.stats.solver_decisions += 1;
        let decision = match verdict {
            Ok(StrongVerdict::Compliant { core }) => {
                let mut cached = false;
                if s.config.use_cache {
                    match generate_template(q, &trace, &self.ctx, &s.policy, &s.pool, &s.config.template, Some(&core)) {
                        Ok(g) => cached = s.cache.insert(g.template),
                        Err(e) => log::debug!("template generation failed: {e}"),
                    }
                }
                return Outcome { decision: Decision::Allow, by: DecidedBy::Solver, template_cached: cached };
            }
            Ok(StrongVerdict::NonCompliant) => Decision::Deny(DenyReason::NonCompliant),
            Ok(StrongVerdict::Unknown(r)) => Decision::Deny(DenyReason::Unknown(r)),
            Err(e) => Decision::Deny(DenyReason::Unknown(e.to_string())),
        };
        Outcome { decision, by: DecidedBy::Solver, template_cached: false }
    }

    /// Ends the request; later queries fail with `SessionClosed`.
    pub fn end_request(&mut self) -> SessionStats {
        self.closed = true;
        self.trace.clear();
        self.seen.clear();
        self.stats.clone()
    }
}

fn coerce_rows(q: &BasicQuery, rows: &[Vec<Value>]) -> Result<Vec<Vec<Value>>, EngineError> {
    rows.iter()
        .map(|row| {
            if row.len() != q.arity() {
                return Err(EngineError::RowArity { expected: q.arity(), got: row.len() });
            }
            row.iter()
                .zip(&q.column_types)
                .map(|(v, &ty)| v.clone().coerce(ty).map_err(|e| EngineError::RowType(e.to_string())))
                .collect()
        })
        .collect()
}

/// Columns of `table` that a view reveals for every row, if it reveals any.
fn open_columns(view: &View, table: &str) -> Option<BTreeSet<usize>> {
    let q = &view.query;
    let [b] = q.blocks.as_slice() else { return None };
    if b.from.len() != 1 || b.from[0].table != table || b.predicate != Predicate::True || !q.params().is_empty() {
        return None;
    }
    b.projection.iter().map(|c| c.operand.as_column().map(|c| c.column)).collect()
}

/// Accepts queries that only touch columns some unconditional single-table view reveals.
pub fn fast_accept(policy: &PolicyBundle, q: &BasicQuery) -> bool {
    q.blocks.iter().all(|b| {
        b.from.iter().enumerate().all(|(i, inst)| {
            let mut used = BTreeSet::new();
            b.for_each_operand(&mut |o| {
                if let Operand::Column(c) = o {
                    if c.instance == i {
                        used.insert(c.column);
                    }
                }
            });
            policy.views.iter().any(|v| open_columns(v, &inst.table).is_some_and(|cols| used.is_subset(&cols)))
        })
    })
}

/// Trace entries handed to the solver. Queries that returned many rows keep
/// only the first row carrying each constant of `q` in a key column.
pub fn prune_trace(policy: &PolicyBundle, q: &BasicQuery, trace: &[TraceEntry], threshold: usize) -> Vec<TraceItem> {
    let mut per_origin: BTreeMap<usize, usize> = BTreeMap::new();
    for e in trace {
        *per_origin.entry(e.origin).or_insert(0) += 1;
    }
    let mut constants = BTreeSet::new();
    q.for_each_operand(&mut |o| {
        if let Operand::Const(v) = o {
            if !v.is_null() {
                constants.insert(v.clone());
            }
        }
    });
    let mut taken: BTreeSet<(usize, Value)> = BTreeSet::new();
    let mut out = Vec::new();
    for e in trace {
        if per_origin[&e.origin] <= threshold {
            out.push(e.item.clone());
            continue;
        }
        let keys = key_positions(policy, &e.item.query);
        let fresh: Vec<Value> = keys
            .iter()
            .filter_map(|&i| match &e.item.tuple[i] {
                Operand::Const(v) if constants.contains(v) && !taken.contains(&(e.origin, v.clone())) => Some(v.clone()),
                _ => None,
            })
            .collect();
        if !fresh.is_empty() {
            taken.extend(fresh.into_iter().map(|v| (e.origin, v)));
            out.push(e.item.clone());
        }
    }
    out
}

/// Output positions holding a column that belongs to a key of its table.
fn key_positions(policy: &PolicyBundle, q: &BasicQuery) -> Vec<usize> {
    let b = &q.blocks[0];
    b.projection
        .iter()
        .enumerate()
        .filter(|(_, c)| {
            c.operand.as_column().is_some_and(|c| {
                let t = policy.schema.table(&b.from[c.instance].table).expect("resolved table");
                t.all_keys().any(|k| k.contains(&c.column))
            })
        })
        .map(|(i, _)| i)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn policy() -> PolicyBundle {
        PolicyBundle::from_json_str(
            r#"{"format_version": 1,
                "tables": [{"name": "T", "columns": [{"name": "A", "type": "int"}, {"name": "B", "type": "int"}],
                            "primary_key": ["A"]}],
                "constraints": [],
                "views": [{"name": "V", "sql": "SELECT A FROM T"}],
                "context": []}"#,
        )
        .unwrap()
    }

    fn q(p: &PolicyBundle, sql: &str) -> BasicQuery {
        to_basic(sql, &[], &p.schema, &p.context_types()).unwrap().query
    }

    #[test]
    fn fast_accept_needs_covering_view() {
        let p = policy();
        assert!(fast_accept(&p, &q(&p, "SELECT A FROM T WHERE A = 3")));
        assert!(!fast_accept(&p, &q(&p, "SELECT A FROM T WHERE B = 3")));
        assert!(!fast_accept(&p, &q(&p, "SELECT * FROM T")));
    }

    #[test]
    fn pruning_keeps_keyed_rows_of_large_results() {
        let p = policy();
        let src = q(&p, "SELECT * FROM T");
        let trace: Vec<TraceEntry> = (0..20)
            .map(|i| TraceEntry {
                item: TraceItem::concrete(src.clone(), &[Value::Int(i), Value::Int(0)]),
                origin: 0,
                partial: false,
            })
            .collect();
        let kept = prune_trace(&p, &q(&p, "SELECT A FROM T WHERE A = 7"), &trace, 10);
        assert_eq!(kept, vec![trace[7].item.clone()]);
        assert_eq!(prune_trace(&p, &q(&p, "SELECT A FROM T WHERE A = 7"), &trace[..5], 10).len(), 5);
    }
}
