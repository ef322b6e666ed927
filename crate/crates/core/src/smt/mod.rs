//! Logical encoding of compliance questions as SMT-LIB scripts.

pub mod encode;
pub mod formula;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

pub use encode::{Encoder, Encoding, Problem};
pub use formula::{Formula, Sort, Structure, Term};

use crate::schema::{instantiate_view, PolicyBundle, PolicyError, RequestContext};
use crate::sql::basic::{BasicQuery, Operand};
use crate::value::{ColumnType, Value};
use formula::{literal_name, lt_name, null_name, sort_name};

/// Row bound per table for conditional-table encodings.
pub type BoundsMap = BTreeMap<String, usize>;

/// One trace entry as the encoder sees it: a query and one of its rows, whose
/// positions may be constants, template variables or context parameters.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TraceItem {
    pub query: BasicQuery,
    pub tuple: Vec<Operand>,
}

impl TraceItem {
    pub fn concrete(query: BasicQuery, row: &[Value]) -> TraceItem {
        TraceItem { query, tuple: row.iter().cloned().map(Operand::Const).collect() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    Axiom,
    Schema,
    View(usize),
    Trace(usize),
    Atom(usize),
    Conclusion,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Assertion {
    pub label: Option<String>,
    pub role: Role,
    pub formula: Formula,
}

/// A complete solver script: declarations are derived from the recorded
/// symbols, assertions keep their labels and roles.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SmtScript {
    pub logic: String,
    pub literals: Vec<Value>,
    pub lt_sorts: Vec<Sort>,
    pub relations: Vec<(String, Vec<Sort>)>,
    pub constants: Vec<(Term, Sort)>,
    pub bools: Vec<String>,
    pub assertions: Vec<Assertion>,
}

impl SmtScript {
    pub fn labels(&self) -> Vec<String> {
        self.assertions.iter().filter_map(|a| a.label.clone()).collect()
    }

    pub fn is_quantifier_free(&self) -> bool {
        self.assertions.iter().all(|a| a.formula.is_quantifier_free())
    }

    /// Drops labeled assertions whose label is not kept.
    pub fn restricted(&self, keep: &BTreeSet<String>) -> SmtScript {
        let mut s = self.clone();
        s.assertions.retain(|a| a.label.as_ref().is_none_or(|l| keep.contains(l)));
        s
    }

    /// Adds an unlabeled assertion.
    pub fn with_assertion(&self, role: Role, formula: Formula) -> SmtScript {
        let mut s = self.clone();
        s.assertions.push(Assertion { label: None, role, formula });
        s
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let labeled = self.assertions.iter().any(|a| a.label.is_some());
        if labeled {
            out.push_str("(set-option :produce-unsat-cores true)\n");
        }
        let _ = writeln!(out, "(set-logic {})", self.logic);
        for s in ColumnType::ALL {
            let _ = writeln!(out, "(declare-sort {} 0)", sort_name(s));
            let _ = writeln!(out, "(declare-const {} {})", null_name(s), sort_name(s));
        }
        for v in &self.literals {
            let s = v.column_type().expect("non-null literal");
            let _ = writeln!(out, "(declare-const {} {})", literal_name(v), sort_name(s));
        }
        for &s in &self.lt_sorts {
            let _ = writeln!(out, "(declare-fun {} ({} {}) Bool)", lt_name(s), sort_name(s), sort_name(s));
        }
        for (r, sorts) in &self.relations {
            let args: Vec<&str> = sorts.iter().map(|s| sort_name(*s)).collect();
            let _ = writeln!(out, "(declare-fun {r} ({}) Bool)", args.join(" "));
        }
        for (c, s) in &self.constants {
            let _ = writeln!(out, "(declare-const {c} {})", sort_name(*s));
        }
        for b in &self.bools {
            let _ = writeln!(out, "(declare-const {b} Bool)");
        }
        for a in &self.assertions {
            match &a.label {
                Some(l) => {
                    let _ = writeln!(out, "(assert (! {} :named {l}))", a.formula.render());
                }
                None => {
                    let _ = writeln!(out, "(assert {})", a.formula.render());
                }
            }
        }
        out.push_str("(check-sat)\n");
        if labeled {
            out.push_str("(get-unsat-core)\n");
        }
        out
    }
}

/// `x̄ ∈ q(db)` as a formula over the given terms.
pub fn encode_query(q: &BasicQuery, policy: &PolicyBundle, db: &str, tuple: &[Term]) -> Formula {
    let ctx_types = policy.context_types();
    let var_types = BTreeMap::new();
    Encoder::new(&policy.schema, &ctx_types, &var_types, Encoding::Unbounded).member(q, db, tuple)
}

fn instantiated_views(policy: &PolicyBundle, ctx: &RequestContext) -> Result<Vec<BasicQuery>, PolicyError> {
    policy.views.iter().map(|v| instantiate_view(v, ctx)).collect()
}

/// Unbounded script that is unsatisfiable iff `q` is strongly compliant given the trace.
pub fn encode_strong_compliance(
    policy: &PolicyBundle,
    ctx: &RequestContext,
    trace: &[TraceItem],
    q: &BasicQuery,
) -> Result<SmtScript, PolicyError> {
    encode_with(policy, ctx, trace, q, Encoding::Unbounded)
}

/// The same question over conditional tables of the given sizes.
pub fn encode_bounded(
    policy: &PolicyBundle,
    ctx: &RequestContext,
    trace: &[TraceItem],
    q: &BasicQuery,
    bounds: &BoundsMap,
) -> Result<SmtScript, PolicyError> {
    encode_with(policy, ctx, trace, q, Encoding::Bounded { bounds: bounds.clone(), order_axioms: true })
}

fn encode_with(
    policy: &PolicyBundle,
    ctx: &RequestContext,
    trace: &[TraceItem],
    q: &BasicQuery,
    encoding: Encoding,
) -> Result<SmtScript, PolicyError> {
    let views = instantiated_views(policy, ctx)?;
    let q = q.bind_params(&ctx.params).map_err(PolicyError::UnboundParameter)?;
    let trace = trace
        .iter()
        .map(|t| {
            Ok(TraceItem {
                query: t.query.bind_params(&ctx.params).map_err(PolicyError::UnboundParameter)?,
                tuple: t.tuple.clone(),
            })
        })
        .collect::<Result<Vec<_>, PolicyError>>()?;
    let ctx_types = policy.context_types();
    let var_types = BTreeMap::new();
    let problem = Problem {
        schema: &policy.schema,
        constraints: &policy.constraints,
        views: &views,
        trace: &trace,
        query: &q,
        atoms: &[],
        ctx_types: &ctx_types,
        var_types: &var_types,
    };
    Ok(Encoder::new(&policy.schema, &ctx_types, &var_types, encoding).script(&problem))
}

/// Tables relevant to a trace and query: those mentioned, closed under the
/// right-hand sides of constraints whose left-hand side mentions a relevant table.
pub fn relevant_tables(policy: &PolicyBundle, trace: &[TraceItem], q: &BasicQuery) -> BTreeSet<String> {
    let mut rel: BTreeSet<String> = q.tables();
    for t in trace {
        rel.extend(t.query.tables());
    }
    let pairs: Vec<(BTreeSet<String>, BTreeSet<String>)> = policy
        .constraints
        .iter()
        .flat_map(|c| c.as_containments(&policy.schema))
        .map(|(l, r)| (l.tables(), r.tables()))
        .collect();
    loop {
        let before = rel.len();
        for (l, r) in &pairs {
            if l.iter().any(|t| rel.contains(t)) {
                rel.extend(r.iter().cloned());
            }
        }
        if rel.len() == before {
            return rel;
        }
    }
}

/// Bounds for template generation: each relevant table gets one more row than
/// the trace needs (counting instances per entry, and rows forced through
/// containment constraints); irrelevant tables get zero.
pub fn choose_bounds(trace: &[TraceItem], q: &BasicQuery, policy: &PolicyBundle) -> BoundsMap {
    let relevant = relevant_tables(policy, trace, q);
    let mut need: BTreeMap<String, usize> = BTreeMap::new();
    for t in trace {
        for table in t.query.tables() {
            *need.entry(table.clone()).or_default() += t.query.instances_of(&table);
        }
    }
    let containments: Vec<(BasicQuery, BasicQuery)> = policy
        .constraints
        .iter()
        .filter(|c| !matches!(c, crate::schema::Constraint::PrimaryKeyUnique { .. }))
        .flat_map(|c| c.as_containments(&policy.schema))
        .collect();
    // Rows on a left-hand side may require matching rows on the right.
    for _ in 0..policy.schema.tables.len() {
        let mut changed = false;
        for (l, r) in &containments {
            let lhs_rows: usize = l.tables().iter().map(|t| need.get(t).copied().unwrap_or(0)).max().unwrap_or(0);
            for table in r.tables() {
                let want = lhs_rows * r.instances_of(&table);
                let cur = need.entry(table).or_default();
                if *cur < want {
                    *cur = want;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    policy
        .schema
        .tables
        .iter()
        .map(|t| {
            let b = if relevant.contains(&t.name) {
                need.get(&t.name).copied().unwrap_or(0) + q.instances_of(&t.name).max(1)
            } else {
                0
            };
            (t.name.clone(), b)
        })
        .collect()
}

/// Adds one row to every nonzero bound.
pub fn bump_bounds(bounds: &BoundsMap) -> BoundsMap {
    bounds.iter().map(|(t, &b)| (t.clone(), if b > 0 { b + 1 } else { 0 })).collect()
}

/// Script over a parameterized query and trace: context parameters and
/// template variables stay free, so unsatisfiability covers every valuation.
/// Each atom is labeled `LC_i`, each trace entry `LQ_i`.
pub fn encode_parameterized(
    policy: &PolicyBundle,
    q: &BasicQuery,
    trace: &[TraceItem],
    atoms: &[crate::template::atoms::CandidateAtom],
    var_types: &BTreeMap<u32, ColumnType>,
    encoding: Encoding,
) -> SmtScript {
    let ctx_types = policy.context_types();
    let views: Vec<BasicQuery> = policy.views.iter().map(|v| v.query.clone()).collect();
    let problem = Problem {
        schema: &policy.schema,
        constraints: &policy.constraints,
        views: &views,
        trace,
        query: q,
        atoms,
        ctx_types: &ctx_types,
        var_types,
    };
    Encoder::new(&policy.schema, &ctx_types, var_types, encoding).script(&problem)
}
