//! Property tests for policy loading, the SQL frontend, the oracle and the engine.

mod common;
#[allow(dead_code)]
#[path = "acceptance/gen.rs"]
mod gen;

use std::collections::BTreeMap;

use proptest::prelude::*;
use qcomply::engine::{Decision, Engine, EngineConfig};
use qcomply::oracle::eval::cross_constraint_ok;
use qcomply::oracle::{evaluate, oracle_decide, Database, Mode, Observation, OracleVerdict};
use qcomply::schema::{instantiate_view, Constraint, PolicyBundle};
use qcomply::sql::basic::Predicate;
use qcomply::sql::{classify_basic, parse, split_in, to_basic, Classification};
use qcomply::value::Value;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rusqlite::types::ValueRef;
use rusqlite::Connection;

use common::{random_db, small_dom};

const SHOP: &str = r#"{
  "format_version": 1,
  "tables": [
    {"name": "Products", "primary_key": ["PId"], "columns": [
      {"name": "PId", "type": "int"}, {"name": "OwnerId", "type": "int", "nullable": false},
      {"name": "Price", "type": "int"}]},
    {"name": "Orders", "primary_key": ["OId"], "columns": [
      {"name": "OId", "type": "int"}, {"name": "PId", "type": "int"},
      {"name": "Buyer", "type": "int", "nullable": false}]}
  ],
  "constraints": [
    {"kind": "foreign_key", "from": {"table": "Orders", "columns": ["PId"]}, "to": {"table": "Products", "columns": ["PId"]}}
  ],
  "views": [{"name": "Mine", "sql": "SELECT PId, Price FROM Products WHERE OwnerId = ?MyUId"}],
  "context": [{"name": "MyUId", "type": "int"}]
}"#;

const SHOP_DDL: &str = "
CREATE TABLE Products (PId INTEGER PRIMARY KEY, OwnerId INTEGER NOT NULL, Price INTEGER);
CREATE TABLE Orders (OId INTEGER PRIMARY KEY, PId INTEGER, Buyer INTEGER NOT NULL);
";

const COLUMNS: [(&str, &[&str]); 2] = [("Products", &["PId", "OwnerId", "Price"]), ("Orders", &["OId", "PId", "Buyer"])];

fn shop() -> PolicyBundle {
    PolicyBundle::from_json_str(SHOP).unwrap()
}

fn sqlite_load(conn: &Connection, db: &Database) {
    conn.execute_batch("DELETE FROM Orders; DELETE FROM Products;").unwrap();
    for (table, rows) in &db.tables {
        for row in rows {
            let marks = vec!["?"; row.len()].join(", ");
            let vals: Vec<Option<i64>> = row.iter().map(|v| if let Value::Int(i) = v { Some(*i) } else { None }).collect();
            conn.execute(&format!("INSERT INTO {table} VALUES ({marks})"), rusqlite::params_from_iter(vals)).unwrap();
        }
    }
}

fn sqlite_rows(conn: &Connection, sql: &str) -> Vec<Vec<Value>> {
    let mut stmt = conn.prepare(sql).unwrap();
    let n = stmt.column_count();
    stmt.query_map([], |r| {
        (0..n)
            .map(|i| Ok(if let ValueRef::Integer(v) = r.get_ref(i)? { Value::Int(v) } else { Value::Null }))
            .collect()
    })
    .unwrap()
    .collect::<rusqlite::Result<_>>()
    .unwrap()
}

/// Random key-respecting databases over values {1, 2, 3}.
fn shop_db(rng: &mut StdRng) -> Database {
    let p = shop();
    let dom = small_dom(&[1, 2, 3], &[], 3);
    loop {
        let db = random_db(&p, &dom, rng);
        if p.constraints.iter().filter(|c| matches!(c, Constraint::PrimaryKeyUnique { .. })).all(|c| cross_constraint_ok(c, &p.schema, &db)) {
            return db;
        }
    }
}

/// A random plain `SELECT` (no DISTINCT) over one or two instances.
fn random_select(rng: &mut StdRng) -> String {
    let n = rng.gen_range(1..=2);
    let insts: Vec<(usize, String)> = (0..n).map(|i| (rng.gen_range(0..2), format!("t{i}"))).collect();
    let col = |rng: &mut StdRng| {
        let (t, a) = insts.choose(rng).unwrap();
        format!("{a}.{}", COLUMNS[*t].1.choose(rng).unwrap())
    };
    let mut proj: Vec<String> = (0..rng.gen_range(1..=3)).map(|_| col(rng)).collect();
    proj.dedup();
    let mut conj = Vec::new();
    for _ in 0..rng.gen_range(0..=3) {
        conj.push(match rng.gen_range(0..4) {
            0 | 1 => format!("{} = {}", col(rng), rng.gen_range(1..=3)),
            2 => format!("{} = {}", col(rng), col(rng)),
            _ => format!("{} IS NOT NULL", col(rng)),
        });
    }
    let from: Vec<String> = insts.iter().map(|(t, a)| format!("{} {a}", COLUMNS[*t].0)).collect();
    let mut sql = format!("SELECT {} FROM {}", proj.join(", "), from.join(", "));
    if !conj.is_empty() {
        sql.push_str(&format!(" WHERE {}", conj.join(" AND ")));
    }
    if rng.gen_bool(0.15) {
        sql.push_str(" LIMIT 1");
    }
    sql
}

fn count_in(p: &Predicate) -> usize {
    match p {
        Predicate::In { .. } => 1,
        Predicate::And(ps) | Predicate::Or(ps) => ps.iter().map(count_in).sum(),
        _ => 0,
    }
}

fn observation(policy: &PolicyBundle, sql: &str, rows: &[Vec<Value>]) -> Observation {
    let q = to_basic(sql, &[], &policy.schema, &policy.context_types()).unwrap().query;
    Observation { query: q, rows: rows.iter().cloned().collect(), partial: false }
}

struct Run {
    decisions: Vec<bool>,
}

/// Runs an instance's trace queries and final query through an engine,
/// checking each Allow against the oracle and each Deny against the trace.
fn run_session(inst: &gen::Instance, cfg: EngineConfig) -> Result<Run, TestCaseError> {
    let engine = Engine::new(inst.policy.clone(), cfg).unwrap();
    let mut session = engine.begin_with_context(inst.ctx.clone());
    let mut steps: Vec<(String, Vec<Vec<Value>>)> =
        inst.trace_sql.iter().zip(&inst.trace).map(|(s, o)| (s.clone(), o.rows.iter().cloned().collect())).collect();
    steps.push((inst.query_sql.clone(), evaluate(&inst.query, &inst.d0).into_iter().collect()));
    let mut allowed: Vec<Observation> = Vec::new();
    let mut decisions = Vec::new();
    for (sql, rows) in &steps {
        let before = session.trace().to_vec();
        let report = session.check_query(sql, &[], rows).unwrap();
        let allow = report.decision == Decision::Allow;
        decisions.push(allow);
        if allow {
            let q = to_basic(sql, &[], &inst.policy.schema, &inst.policy.context_types()).unwrap().query;
            let verdict = oracle_decide(Mode::Compliance, &q, &allowed, &inst.policy, &inst.ctx, &inst.dom());
            prop_assert!(
                !matches!(verdict, OracleVerdict::NonCompliant(_)),
                "allowed a noncompliant query: {sql} after {:?}; {}",
                allowed.iter().map(|o| &o.rows).collect::<Vec<_>>(),
                inst.describe()
            );
            allowed.push(observation(&inst.policy, sql, rows));
        } else {
            prop_assert_eq!(session.trace(), before.as_slice());
        }
    }
    Ok(Run { decisions })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn foreign_key_containment_is_referential_integrity(seed in any::<u64>()) {
        let p = shop();
        let mut rng = StdRng::seed_from_u64(seed);
        let db = random_db(&p, &small_dom(&[1, 2, 3], &[], 2), &mut rng);
        let fk = p.constraints.iter().find(|c| matches!(c, Constraint::ForeignKey(_))).unwrap();
        let direct = db.rows("Orders").all(|o| o[1].is_null() || db.rows("Products").any(|pr| pr[0] == o[1]));
        prop_assert_eq!(cross_constraint_ok(fk, &p.schema, &db), direct);
    }

    #[test]
    fn policy_loading_and_view_instantiation_are_deterministic(uid in -5i64..5) {
        let (a, b) = (shop(), shop());
        prop_assert_eq!(&a, &b);
        let raw = BTreeMap::from([("MyUId".to_string(), Value::Int(uid))]);
        let (c1, c2) = (a.make_context(&raw).unwrap(), a.make_context(&raw).unwrap());
        for v in &a.views {
            prop_assert_eq!(instantiate_view(v, &c1).unwrap(), instantiate_view(v, &c2).unwrap());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn certified_queries_never_return_duplicates(seed in any::<u64>()) {
        let p = shop();
        let mut rng = StdRng::seed_from_u64(seed);
        let sql = random_select(&mut rng);
        let ast = parse(&sql, &[]).unwrap();
        let Classification::Basic(_) = classify_basic(&ast, &p.schema, &p.context_types()).unwrap() else {
            return Ok(());
        };
        let conn = Connection::open_in_memory().unwrap();
        conn.execute_batch(SHOP_DDL).unwrap();
        for _ in 0..20 {
            let db = shop_db(&mut rng);
            sqlite_load(&conn, &db);
            let rows = sqlite_rows(&conn, &sql);
            let distinct: std::collections::BTreeSet<_> = rows.iter().collect();
            prop_assert_eq!(distinct.len(), rows.len(), "{} returned duplicates on {}", sql, db.to_json());
        }
    }

    #[test]
    fn split_parts_drop_the_in_list_and_keep_the_result(seed in any::<u64>(), len in 2usize..6) {
        let p = shop();
        let mut rng = StdRng::seed_from_u64(seed);
        let (table, cols) = COLUMNS[rng.gen_range(0..2)];
        let col = cols.choose(&mut rng).unwrap();
        let list: Vec<String> = (0..len).map(|i| (i as i64 + rng.gen_range(0..2)).to_string()).collect();
        let extra = if rng.gen_bool(0.5) { format!(" AND {} = 1", cols[2]) } else { String::new() };
        let sql = format!("SELECT {} FROM {table} WHERE {col} IN ({}){extra}", cols[0], list.join(", "));
        let q = to_basic(&sql, &[], &p.schema, &p.context_types()).unwrap().query;
        let parts = split_in(&q).unwrap();
        prop_assert!(parts.len() > 1);
        for part in &parts {
            prop_assert!(part.blocks.iter().all(|b| count_in(&b.predicate) == 0), "{:?}", part);
        }
        for _ in 0..10 {
            let db = shop_db(&mut rng);
            let union: qcomply::oracle::Relation = parts.iter().flat_map(|x| evaluate(x, &db)).collect();
            prop_assert_eq!(&union, &evaluate(&q, &db));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn strong_compliance_implies_compliance_and_is_monotone(seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let inst = gen::instance(&mut rng);
        let dom = inst.dom();
        let decide = |mode, trace: &[Observation]| oracle_decide(mode, &inst.query, trace, &inst.policy, &inst.ctx, &dom);
        prop_assert_eq!(evaluate(&inst.query, &inst.d0), evaluate(&inst.query, &inst.d0));
        let strong = decide(Mode::Strong, &inst.trace);
        if strong == OracleVerdict::Compliant {
            let plain = decide(Mode::Compliance, &inst.trace);
            prop_assert!(!matches!(plain, OracleVerdict::NonCompliant(_)), "{}", inst.describe());
        }
        for k in 0..inst.trace.len() {
            if decide(Mode::Strong, &inst.trace[..k]) == OracleVerdict::Compliant {
                prop_assert!(!matches!(strong, OracleVerdict::NonCompliant(_)), "prefix {} of {}", k, inst.describe());
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn engine_allows_only_compliant_queries(seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let inst = gen::instance(&mut rng);
        run_session(&inst, EngineConfig::default())?;
        let pruned = EngineConfig { prune_threshold: 0, use_cache: false, ..EngineConfig::default() };
        let first = run_session(&inst, pruned.clone())?;
        let second = run_session(&inst, pruned)?;
        prop_assert_eq!(first.decisions, second.decisions);
    }
}

#[test]
fn cores_from_the_solver_are_unsat_on_their_own() {
    use qcomply::smt::{encode_strong_compliance, TraceItem};
    use qcomply::solver::{solve, solve_for_core, SolverConfig, SolverOutcome};
    use std::time::Duration;

    let p = common::calendar();
    let ctx = common::ctx(&p, &[("MyUId", Value::Int(1))]);
    let trace = vec![
        TraceItem::concrete(common::basic(&p, "SELECT * FROM Users WHERE UId = 1"), &[Value::Int(1), Value::Str("J".into())]),
        TraceItem::concrete(
            common::basic(&p, "SELECT * FROM Attendances WHERE UId = 1 AND EId = 42"),
            &[Value::Int(1), Value::Int(42), Value::Null],
        ),
    ];
    let q = common::basic(&p, "SELECT * FROM Events WHERE EId = 42");
    let script = encode_strong_compliance(&p, &ctx, &trace, &q).unwrap();
    let z3 = vec![SolverConfig::z3()];
    let budget = Duration::from_secs(10);
    let SolverOutcome::Unsat(core) = solve_for_core(&script, &z3, budget, Duration::from_millis(250)).unwrap() else {
        panic!("expected unsat");
    };
    assert!(core.len() < script.labels().len());
    assert!(core.iter().all(|l| script.labels().contains(l)));
    assert!(solve(&script.restricted(&core), &z3, budget).unwrap().is_unsat());
}
