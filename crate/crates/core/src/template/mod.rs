//! Decision templates: generalizing a proved decision into a reusable rule.

pub mod atoms;
pub mod closure;
pub mod json;
pub mod param;
pub mod search;

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use crate::schema::{PolicyBundle, RequestContext, Schema};
use crate::smt::{bump_bounds, choose_bounds, encode_parameterized, BoundsMap, Encoding, TraceItem};
use crate::solver::{SolverError, SolverPool};
use crate::sql::basic::{BasicQuery, Certificate, Operand};
use crate::sql::print::to_sql;
use crate::value::{ColumnType, Value};
use atoms::{candidate_atoms, var_label, CandidateAtom};
use closure::{augment, Closure};
use param::{parameterize, substitute, vars_in_order, Parameterized};

/// A sound rule `(query, premise, condition)`: whenever some valuation maps the
/// query onto an incoming query, every premise entry onto a trace entry, and
/// satisfies the condition, the incoming query is compliant.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DecisionTemplate {
    pub query: BasicQuery,
    pub premise: Vec<TraceItem>,
    /// Conjunction of atoms. `EqVars(x, x)` states that `x` is not NULL.
    pub condition: Vec<CandidateAtom>,
    pub var_types: BTreeMap<u32, ColumnType>,
}

/// Query shape with constants, parameters, variables and aliases erased.
pub fn signature(q: &BasicQuery) -> BasicQuery {
    let mut s = q.map_operands(&mut |o| match o {
        Operand::Column(c) => Operand::Column(*c),
        _ => Operand::Const(Value::Null),
    });
    for b in &mut s.blocks {
        for inst in &mut b.from {
            inst.alias.clear();
        }
    }
    s.certificate = Certificate::SetSemantics;
    s
}

impl DecisionTemplate {
    pub fn signature(&self) -> BasicQuery {
        signature(&self.query)
    }

    fn occurrences(&self) -> BTreeMap<u32, usize> {
        let mut n = BTreeMap::new();
        let mut count = |o: &Operand| {
            if let Operand::Var(k) = o {
                *n.entry(*k).or_insert(0) += 1;
            }
        };
        for t in &self.premise {
            t.query.for_each_operand(&mut count);
            t.tuple.iter().for_each(&mut count);
        }
        self.query.for_each_operand(&mut count);
        for a in &self.condition {
            a.operands().into_iter().for_each(&mut count);
        }
        n
    }

    /// Variables that occur once: nothing constrains them.
    pub fn wildcards(&self) -> BTreeSet<u32> {
        self.occurrences().into_iter().filter(|(_, n)| *n == 1).map(|(k, _)| k).collect()
    }

    pub fn var_name(&self, k: u32) -> String {
        if self.wildcards().contains(&k) {
            "*".into()
        } else {
            format!("?{k}")
        }
    }

    fn operand_text(&self, o: &Operand, wild: &BTreeSet<u32>) -> String {
        match o {
            Operand::Var(k) if wild.contains(k) => "*".into(),
            Operand::Var(k) => format!("?{k}"),
            Operand::Param(p) => format!("?{p}"),
            Operand::Const(v) => v.to_sql(),
            Operand::Column(_) => var_label(o),
        }
    }

    pub fn query_sql(&self, q: &BasicQuery, schema: &Schema) -> String {
        let wild = self.wildcards();
        to_sql(q, schema, &|k| if wild.contains(&k) { "*".into() } else { format!("?{k}") })
    }

    pub fn atom_text(&self, a: &CandidateAtom) -> String {
        let wild = self.wildcards();
        let t = |o: &Operand| self.operand_text(o, &wild);
        match a {
            CandidateAtom::EqVars(x, y) if x == y => format!("{} IS NOT NULL", t(x)),
            CandidateAtom::Eq(x, v) => format!("{} = {}", t(x), v.to_sql()),
            CandidateAtom::IsNull(x) => format!("{} IS NULL", t(x)),
            CandidateAtom::EqVars(x, y) => format!("{} = {}", t(x), t(y)),
            CandidateAtom::Lt(x, y) => format!("{} < {}", t(x), t(y)),
        }
    }

    /// Premise and conclusion in a readable layout.
    pub fn render(&self, schema: &Schema) -> String {
        let wild = self.wildcards();
        let mut out = String::from("premise:\n");
        if self.premise.is_empty() {
            out.push_str("  (none)\n");
        }
        for t in &self.premise {
            out.push_str(&format!("  {}\n", self.query_sql(&t.query, schema)));
            let names = t.query.blocks[0].projection.iter().map(|c| c.name.as_str());
            let cells: Vec<String> =
                names.zip(&t.tuple).map(|(n, o)| format!("{n} = {}", self.operand_text(o, &wild))).collect();
            out.push_str(&format!("    ({})\n", cells.join(", ")));
        }
        out.push_str(&format!("conclusion:\n  {}\n", self.query_sql(&self.query, schema)));
        out.push_str("condition:\n");
        if self.condition.is_empty() {
            out.push_str("  (none)\n");
        } else {
            let atoms: Vec<String> = self.condition.iter().map(|a| self.atom_text(a)).collect();
            out.push_str(&format!("  {}\n", atoms.join(" AND ")));
        }
        out
    }

    /// The script whose unsatisfiability means the template is sound.
    pub fn soundness_script(&self, policy: &PolicyBundle, encoding: Encoding) -> crate::smt::SmtScript {
        encode_parameterized(policy, &self.query, &self.premise, &self.condition, &self.var_types, encoding)
    }
}

/// A template that passed unbounded soundness verification. Only
/// verification and generation construct it.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct VerifiedTemplate(DecisionTemplate);

impl VerifiedTemplate {
    /// Checks soundness on the unbounded encoding.
    pub fn verify(
        t: DecisionTemplate,
        policy: &PolicyBundle,
        pool: &SolverPool,
        budget: Duration,
    ) -> Result<VerifiedTemplate, TemplateError> {
        match pool.solve(&t.soundness_script(policy, Encoding::Unbounded), budget)? {
            crate::solver::SolverOutcome::Unsat(_) => Ok(VerifiedTemplate(t)),
            o => Err(TemplateError::NoTemplate(format!("soundness not verified: {o:?}"))),
        }
    }

    pub fn get(&self) -> &DecisionTemplate {
        &self.0
    }

    pub fn into_inner(self) -> DecisionTemplate {
        self.0
    }
}

impl std::ops::Deref for VerifiedTemplate {
    type Target = DecisionTemplate;

    fn deref(&self) -> &DecisionTemplate {
        &self.0
    }
}

#[derive(Clone, Debug)]
pub struct TemplateConfig {
    /// Budget per solver call.
    pub probe_budget: Duration,
    /// Budget for one whole generation.
    pub total_budget: Duration,
    pub core_window: Duration,
    pub max_bound_bumps: usize,
    /// Above this many atoms the subset search is skipped and the core is used.
    pub max_search_atoms: usize,
}

impl Default for TemplateConfig {
    fn default() -> Self {
        TemplateConfig {
            probe_budget: Duration::from_secs(2),
            total_budget: Duration::from_secs(10),
            core_window: Duration::from_millis(250),
            max_bound_bumps: 3,
            max_search_atoms: 24,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TemplateError {
    #[error("no template: {0}")]
    NoTemplate(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Intermediate results of one generation, kept for inspection and tests.
#[derive(Clone, Debug)]
pub struct GenerationReport {
    /// Indices of the input trace entries kept by minimization.
    pub trace_min: Vec<usize>,
    pub parameterized: Parameterized,
    pub candidates: Vec<CandidateAtom>,
    /// Atoms named in the first unsat core the solver returned.
    pub solver_core: Vec<CandidateAtom>,
    pub core: Vec<CandidateAtom>,
    pub augmented: Vec<CandidateAtom>,
    pub small: Vec<CandidateAtom>,
    pub bounds: BoundsMap,
    pub bound_bumps: usize,
}

#[derive(Clone, Debug)]
pub struct Generated {
    pub template: VerifiedTemplate,
    pub report: GenerationReport,
}

/// Shared state for the solver calls of one generation.
pub struct Gen<'a> {
    pub policy: &'a PolicyBundle,
    pub ctx: &'a RequestContext,
    pub pool: &'a SolverPool,
    pub cfg: &'a TemplateConfig,
    pub deadline: Instant,
}

impl Gen<'_> {
    pub fn budget(&self) -> Result<Duration, TemplateError> {
        let left = self.deadline.saturating_duration_since(Instant::now());
        if left.is_zero() {
            return Err(TemplateError::NoTemplate("time budget exhausted".into()));
        }
        Ok(left.min(self.cfg.probe_budget))
    }
}

fn context_bindings(policy: &PolicyBundle, ctx: &RequestContext) -> Vec<(String, Value, ColumnType)> {
    let types = policy.context_types();
    policy
        .referenced_params()
        .into_iter()
        .filter_map(|p| Some((p.clone(), ctx.get(&p)?.clone(), types[&p])))
        .collect()
}

/// Generalizes a proved decision. `seed` lists trace entries the proving
/// solver used, if known.
pub fn generate_template(
    q: &BasicQuery,
    trace: &[TraceItem],
    ctx: &RequestContext,
    policy: &PolicyBundle,
    pool: &SolverPool,
    cfg: &TemplateConfig,
    seed: Option<&BTreeSet<usize>>,
) -> Result<Generated, TemplateError> {
    let g = Gen { policy, ctx, pool, cfg, deadline: Instant::now() + cfg.total_budget };
    let trace_min = search::minimize_trace(&g, q, trace, seed)?;
    let min_items: Vec<TraceItem> = trace_min.iter().map(|&i| trace[i].clone()).collect();
    let p = parameterize(q, &min_items, &context_bindings(policy, ctx));
    let candidates = candidate_atoms(&p.nu, &p.types);
    let mut bounds = choose_bounds(&min_items, q, policy);
    for bump in 0..=cfg.max_bound_bumps {
        let (solver_core, core) = search::core_atoms(&g, &p, &candidates, &bounds)?;
        let augmented = augment(&core, &candidates);
        let small = search::smallest_sound_subset(&g, &p, &augmented, &core, &bounds)?;
        let template = fold(&p, &small);
        if search::verify_unbounded(&g, &template)? {
            let report = GenerationReport {
                trace_min,
                parameterized: p,
                candidates,
                solver_core,
                core,
                augmented,
                small,
                bounds,
                bound_bumps: bump,
            };
            return Ok(Generated { template: VerifiedTemplate(template), report });
        }
        bounds = bump_bounds(&bounds);
    }
    Err(TemplateError::NoTemplate("unbounded verification failed after bound increases".into()))
}

/// Substitutes variables the condition forces equal, keeps a non-NULL
/// obligation for each merged class, and renumbers variables by first appearance.
pub fn fold(p: &Parameterized, small: &[CandidateAtom]) -> DecisionTemplate {
    let closure = Closure::new(small);
    let ops: Vec<Operand> = p.nu.iter().map(|(o, _)| o.clone()).collect();
    let mut rep: BTreeMap<Operand, Operand> = BTreeMap::new();
    let mut merged: BTreeSet<Operand> = BTreeSet::new();
    let mut extra = Vec::new();
    for (i, o) in ops.iter().enumerate() {
        if rep.contains_key(o) {
            continue;
        }
        for o2 in &ops[i + 1..] {
            if rep.contains_key(o2) || !closure.implies(&CandidateAtom::EqVars(o.clone(), o2.clone())) {
                continue;
            }
            match o2 {
                Operand::Var(_) => {
                    rep.insert(o2.clone(), o.clone());
                    merged.insert(o.clone());
                }
                _ => extra.push(CandidateAtom::EqVars(o.clone(), o2.clone())),
            }
        }
    }
    let (query, premise) = substitute(&p.query, &p.trace, &rep);
    let mut sub = |o: &Operand| rep.get(o).cloned().unwrap_or_else(|| o.clone());
    let mut condition: Vec<CandidateAtom> = Vec::new();
    for a in small.iter().map(|a| a.map_operands(&mut sub)).chain(extra) {
        let trivial = matches!(&a, CandidateAtom::EqVars(x, y) if x == y);
        if !trivial && !condition.contains(&a) {
            condition.push(a);
        }
    }
    for r in &merged {
        let nn = CandidateAtom::EqVars(r.clone(), r.clone());
        if !Closure::new(&condition).implies(&nn) {
            condition.push(nn);
        }
    }
    let types = p.var_types();
    let order = vars_in_order(&query, &premise);
    let renumber: BTreeMap<Operand, Operand> =
        order.iter().enumerate().map(|(i, &k)| (Operand::Var(k), Operand::Var(i as u32))).collect();
    let (mut query, mut premise) = substitute(&query, &premise, &renumber);
    query.certificate = Certificate::SetSemantics;
    for e in &mut premise {
        e.query.certificate = Certificate::SetSemantics;
    }
    let mut ren = |o: &Operand| renumber.get(o).cloned().unwrap_or_else(|| o.clone());
    let condition = condition.iter().map(|a| a.map_operands(&mut ren)).collect();
    let var_types = order.iter().enumerate().map(|(i, k)| (i as u32, types[k])).collect();
    DecisionTemplate { query, premise, condition, var_types }
}
