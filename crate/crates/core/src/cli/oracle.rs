use std::collections::BTreeSet;

use qcomply::engine::{Decision, DenyReason, Engine, EngineConfig};
use qcomply::oracle::{oracle_decide, trace_feasible, DomainSpec, Mode, Observation, OracleVerdict, Witness};
use qcomply::sql::basic::Operand;
use qcomply::sql::to_basic;
use qcomply::value::Value;
use serde_json::json;

use super::{load_inputs, CliError, OracleArgs};

fn verdict_name(v: &OracleVerdict) -> &'static str {
    match v {
        OracleVerdict::Compliant => "compliant",
        OracleVerdict::NonCompliant(_) => "not_compliant",
        OracleVerdict::Exhausted => "exhausted",
    }
}

fn witness_json(v: &OracleVerdict) -> serde_json::Value {
    match v {
        OracleVerdict::NonCompliant(w) => {
            let Witness { d1, d2 } = w.as_ref();
            json!({"d1": d1.to_json(), "d2": d2.to_json()})
        }
        _ => serde_json::Value::Null,
    }
}

struct Row {
    engine: String,
    strong: Option<OracleVerdict>,
    compliance: Option<OracleVerdict>,
    feasible: Option<bool>,
    agree: Option<bool>,
}

/// Cross-checks every engine decision against brute-force enumeration over a
/// small domain. Exit status 1 means some decided pair disagreed.
pub fn run(a: &OracleArgs) -> Result<i32, CliError> {
    let Some((replay, policy)) = load_inputs(&a.common)? else {
        return Ok(0);
    };
    let mut types: BTreeSet<_> = policy.schema.tables.iter().flat_map(|t| t.columns.iter().map(|c| c.ty)).collect();
    types.extend(policy.context.iter().map(|p| p.ty));
    let engine = Engine::new(policy.clone(), EngineConfig::default()).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut disagreements = 0;
    for (ri, req) in replay.requests.iter().enumerate() {
        let mut session = engine.begin_request(&req.ctx).map_err(|e| CliError::Usage(e.to_string()))?;
        let ctx = session.context().clone();
        let mut trace: Vec<Observation> = Vec::new();
        for (qi, rq) in req.queries.iter().enumerate() {
            let report = session
                .check_query(&rq.sql, &rq.params, &rq.rows)
                .map_err(|e| CliError::Usage(format!("line {}: {e}", rq.line)))?;
            let mut row = Row {
                engine: match &report.decision {
                    Decision::Allow => "allow".into(),
                    Decision::Deny(d) => format!("deny ({d})"),
                },
                strong: None,
                compliance: None,
                feasible: None,
                agree: None,
            };
            if let Ok(r) = to_basic(&rq.sql, &rq.params, &policy.schema, &policy.context_types()) {
                let mut consts: Vec<Value> = ctx.params.values().cloned().collect();
                r.query.for_each_operand(&mut |o| {
                    if let Operand::Const(v) = o {
                        consts.push(v.clone());
                    }
                });
                consts.extend(trace.iter().flat_map(|o| o.rows.iter().flatten().cloned()));
                let dom = DomainSpec::from_constants(consts, types.iter().copied(), a.dom_consts, a.dom_rows);
                row.feasible = trace_feasible(&trace, &policy, &dom);
                if row.feasible != Some(false) {
                    let strong = oracle_decide(Mode::Strong, &r.query, &trace, &policy, &ctx, &dom);
                    let compliance = oracle_decide(Mode::Compliance, &r.query, &trace, &policy, &ctx, &dom);
                    let decided = !matches!(
                        report.decision,
                        Decision::Deny(DenyReason::Unknown(_) | DenyReason::Unsupported(_))
                    );
                    if decided && strong != OracleVerdict::Exhausted {
                        row.agree = Some(report.decision.is_allow() == (strong == OracleVerdict::Compliant));
                    }
                    row.strong = Some(strong);
                    row.compliance = Some(compliance);
                }
                if report.decision.is_allow() {
                    if let Some(obs) = r.observed {
                        let rows = session.trace().iter().filter(|e| e.item.query == obs);
                        let rows = rows
                            .map(|e| {
                                e.item.tuple.iter().map(|o| match o {
                                    Operand::Const(v) => v.clone(),
                                    _ => Value::Null,
                                })
                            })
                            .map(|t| t.collect())
                            .collect();
                        trace.retain(|o| o.query != obs);
                        trace.push(Observation { query: obs, rows, partial: r.limit_dropped });
                    }
                }
            }
            if row.agree == Some(false) {
                disagreements += 1;
            }
            print_row(a.common.json, ri, qi, &rq.sql, &row);
        }
        session.end_request();
    }
    Ok(if disagreements > 0 { 1 } else { 0 })
}

fn print_row(as_json: bool, ri: usize, qi: usize, sql: &str, row: &Row) {
    if as_json {
        let j = json!({
            "kind": "oracle",
            "request": ri,
            "query": qi,
            "sql": sql,
            "engine": row.engine,
            "trace_feasible": row.feasible,
            "strong": row.strong.as_ref().map(verdict_name),
            "compliance": row.compliance.as_ref().map(verdict_name),
            "witness": row.compliance.as_ref().map(witness_json),
            "agree": row.agree,
        });
        println!("{j}");
        return;
    }
    let agree = match row.agree {
        Some(true) => "agree",
        Some(false) => "DISAGREE",
        None => "n/a",
    };
    if row.feasible == Some(false) {
        println!("[{ri}.{qi}] engine {}; trace infeasible over the domain: {sql}", row.engine);
        return;
    }
    println!(
        "[{ri}.{qi}] {agree}: engine {}, strong {}, compliance {}: {sql}",
        row.engine,
        row.strong.as_ref().map_or("-", verdict_name),
        row.compliance.as_ref().map_or("-", verdict_name),
    );
    if let Some(OracleVerdict::NonCompliant(w)) = &row.compliance {
        println!("  witness d1: {}\n  witness d2: {}", w.d1.to_json(), w.d2.to_json());
    }
}
