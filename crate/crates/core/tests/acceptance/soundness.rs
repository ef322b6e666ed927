//! Re-verification and random instantiation of generated templates.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use qcomply::cache::match_template;
use qcomply::engine::EngineConfig;
use qcomply::oracle::{oracle_decide, DomainSpec, Mode, Observation, OracleVerdict};
use qcomply::schema::{PolicyBundle, RequestContext};
use qcomply::smt::TraceItem;
use qcomply::solver::SolverPool;
use qcomply::sql::basic::Operand;
use qcomply::template::atoms::CandidateAtom;
use qcomply::template::{DecisionTemplate, VerifiedTemplate};
use qcomply::value::{ColumnType, Value};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use crate::{Corpus, Outcome};

/// Tolerances.
const SEED: u64 = 0x5eed_0005;
const VALUATIONS: usize = 20;
const MAX_ATTEMPTS: usize = 20_000;
const VERIFY_BUDGET: Duration = Duration::from_secs(10);
const DOM_PER_TYPE: usize = 3;
const DOM_ROWS: usize = 2;

fn base_pool(ty: ColumnType) -> Vec<Value> {
    match ty {
        ColumnType::Int => vec![Value::Int(1), Value::Int(2)],
        ColumnType::String => vec![Value::Str("a".into()), Value::Str("b".into())],
        ColumnType::Timestamp => vec![Value::Time(100), Value::Time(200)],
        ColumnType::Bool => vec![Value::Bool(false), Value::Bool(true)],
    }
}

struct Sampler {
    pools: BTreeMap<ColumnType, Vec<Value>>,
}

impl Sampler {
    fn new(t: &DecisionTemplate) -> Sampler {
        let mut pools: BTreeMap<ColumnType, Vec<Value>> = ColumnType::ALL.into_iter().map(|ty| (ty, base_pool(ty))).collect();
        for a in &t.condition {
            if let CandidateAtom::Eq(_, v) = a {
                if let Some(ty) = v.column_type() {
                    let pool = pools.entry(ty).or_default();
                    if !pool.contains(v) {
                        pool.push(v.clone());
                    }
                }
            }
        }
        Sampler { pools }
    }

    fn value(&self, rng: &mut StdRng, ty: ColumnType) -> Value {
        if rng.gen_bool(0.1) {
            return Value::Null;
        }
        self.pools[&ty].choose(rng).cloned().unwrap_or(Value::Null)
    }
}

struct Instantiation {
    ctx: RequestContext,
    query: qcomply::sql::BasicQuery,
    trace: Vec<TraceItem>,
}

fn instantiate(t: &DecisionTemplate, ctx: &RequestContext, vals: &BTreeMap<u32, Value>) -> Option<Instantiation> {
    let bind = |q: &qcomply::sql::BasicQuery| q.bind_params(&ctx.params).ok().map(|q| q.bind_vars(vals));
    let value = |o: &Operand| match o {
        Operand::Var(k) => vals.get(k).cloned(),
        Operand::Param(p) => ctx.get(p).cloned(),
        Operand::Const(v) => Some(v.clone()),
        Operand::Column(_) => None,
    };
    let trace = t
        .premise
        .iter()
        .map(|e| {
            let tuple = e.tuple.iter().map(|o| value(o).map(Operand::Const)).collect::<Option<Vec<_>>>()?;
            Some(TraceItem { query: bind(&e.query)?, tuple })
        })
        .collect::<Option<Vec<_>>>()?;
    Some(Instantiation { ctx: ctx.clone(), query: bind(&t.query)?, trace })
}

fn observations(trace: &[TraceItem]) -> Vec<Observation> {
    trace
        .iter()
        .map(|e| Observation {
            query: e.query.clone(),
            rows: BTreeSet::from([e
                .tuple
                .iter()
                .map(|o| match o {
                    Operand::Const(v) => v.clone(),
                    _ => Value::Null,
                })
                .collect()]),
            partial: false,
        })
        .collect()
}

fn domain(policy: &PolicyBundle, inst: &Instantiation) -> DomainSpec {
    let mut consts: Vec<Value> = inst.ctx.params.values().cloned().collect();
    let mut collect = |o: &Operand| {
        if let Operand::Const(v) = o {
            consts.push(v.clone());
        }
    };
    inst.query.for_each_operand(&mut collect);
    for e in &inst.trace {
        e.query.for_each_operand(&mut collect);
        e.tuple.iter().for_each(&mut collect);
    }
    let types: BTreeSet<ColumnType> = policy
        .schema
        .tables
        .iter()
        .flat_map(|t| t.columns.iter().map(|c| c.ty))
        .chain(policy.context_types().into_values())
        .collect();
    DomainSpec::from_constants(consts, types, DOM_PER_TYPE, DOM_ROWS)
}

#[derive(Default)]
struct Audit {
    templates: usize,
    reverified: usize,
    instantiations: usize,
    matched: usize,
    compliant: usize,
    exhausted: usize,
    unsatisfiable: usize,
    failures: Vec<String>,
}

fn audit_one(a: &mut Audit, rng: &mut StdRng, pool: &SolverPool, name: &str, policy: &PolicyBundle, t: &DecisionTemplate) {
    a.templates += 1;
    match VerifiedTemplate::verify(t.clone(), policy, pool, VERIFY_BUDGET) {
        Ok(_) => a.reverified += 1,
        Err(e) => a.failures.push(format!("{name}: re-verification failed: {e}")),
    }
    let sampler = Sampler::new(t);
    let ctx_types = policy.context_types();
    let mut found = 0;
    for _ in 0..MAX_ATTEMPTS {
        if found == VALUATIONS {
            break;
        }
        let mut params = BTreeMap::new();
        for (p, ty) in &ctx_types {
            let v = if *ty == ColumnType::Timestamp { Value::Time(0) } else { sampler.pools[ty].choose(rng).cloned().unwrap() };
            params.insert(p.clone(), v);
        }
        let ctx = RequestContext { params };
        let vals: BTreeMap<u32, Value> = t.var_types.iter().map(|(k, ty)| (*k, sampler.value(rng, *ty))).collect();
        let nu = |o: &Operand| match o {
            Operand::Var(k) => vals.get(k).cloned(),
            Operand::Param(p) => ctx.get(p).cloned(),
            Operand::Const(v) => Some(v.clone()),
            Operand::Column(_) => None,
        };
        if !t.condition.iter().all(|c| c.holds(&nu)) {
            continue;
        }
        found += 1;
        a.instantiations += 1;
        let Some(inst) = instantiate(t, &ctx, &vals) else {
            a.failures.push(format!("{name}: instantiation failed for {vals:?}"));
            continue;
        };
        if match_template(t, &inst.query, &inst.trace, &inst.ctx).is_some() {
            a.matched += 1;
        } else {
            a.failures.push(format!("{name}: template does not match its own instantiation {vals:?}"));
        }
        let obs = observations(&inst.trace);
        match oracle_decide(Mode::Strong, &inst.query, &obs, policy, &inst.ctx, &domain(policy, &inst)) {
            OracleVerdict::Compliant => a.compliant += 1,
            OracleVerdict::Exhausted => a.exhausted += 1,
            OracleVerdict::NonCompliant(w) => a.failures.push(format!(
                "{name}: instantiation {vals:?} is not compliant (d1 {} d2 {})",
                w.d1.to_json(),
                w.d2.to_json()
            )),
        }
    }
    if found < VALUATIONS {
        a.unsatisfiable += 1;
        a.failures.push(format!("{name}: only {found} satisfying valuations in {MAX_ATTEMPTS} draws"));
    }
}

pub fn criterion5(corpus: &mut Corpus) -> Outcome {
    let mut rng = StdRng::seed_from_u64(SEED);
    let pool = SolverPool::new(EngineConfig::default().solvers);
    let mut a = Audit::default();
    for (name, policy, t) in &corpus.templates {
        audit_one(&mut a, &mut rng, &pool, name, policy, t);
    }
    let pass = a.templates > 0 && a.failures.is_empty();
    let mut detail = format!(
        "{} templates, {} re-verified; {} instantiations: {} matched, {} oracle-compliant, {} oracle exhausted",
        a.templates, a.reverified, a.instantiations, a.matched, a.compliant, a.exhausted
    );
    if !a.failures.is_empty() {
        detail.push_str(&format!("; {} failures, first: {}", a.failures.len(), a.failures[0]));
    }
    Outcome::check(pass, detail)
}
