//! Rewritten queries against SQLite running the original SQL.

use std::collections::BTreeSet;

use qcomply::oracle::{evaluate, Database, Relation};
use qcomply::schema::PolicyBundle;
use qcomply::sql::{split_in, to_basic, BasicQuery, RewriteResult};
use qcomply::value::Value;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rusqlite::types::ValueRef;
use rusqlite::Connection;

use crate::{Corpus, Outcome};

/// Tolerances.
const SEED: u64 = 0x5eed_0006;
const DATABASES: usize = 50;

const POLICY: &str = r#"{
  "format_version": 1,
  "tables": [
    {"name": "Products", "primary_key": ["PId"], "columns": [
      {"name": "PId", "type": "int"}, {"name": "OwnerId", "type": "int", "nullable": false},
      {"name": "Name", "type": "string", "nullable": true}, {"name": "Price", "type": "int", "nullable": true}]},
    {"name": "Orders", "primary_key": ["OId"], "columns": [
      {"name": "OId", "type": "int"}, {"name": "PId", "type": "int", "nullable": false},
      {"name": "Buyer", "type": "int", "nullable": false}, {"name": "Quantity", "type": "int", "nullable": true}]},
    {"name": "Reviews", "primary_key": ["RId"], "columns": [
      {"name": "RId", "type": "int"}, {"name": "PId", "type": "int", "nullable": true},
      {"name": "Stars", "type": "int", "nullable": true}]}
  ],
  "constraints": [
    {"kind": "foreign_key", "from": {"table": "Orders", "columns": ["PId"]}, "to": {"table": "Products", "columns": ["PId"]}}
  ],
  "views": [{"name": "All", "sql": "SELECT * FROM Products"}],
  "context": [{"name": "MyUId", "type": "int"}]
}"#;

const DDL: &str = "
CREATE TABLE Products (PId INTEGER PRIMARY KEY, OwnerId INTEGER NOT NULL, Name TEXT, Price INTEGER);
CREATE TABLE Orders (OId INTEGER PRIMARY KEY, PId INTEGER NOT NULL REFERENCES Products(PId), Buyer INTEGER NOT NULL, Quantity INTEGER);
CREATE TABLE Reviews (RId INTEGER PRIMARY KEY, PId INTEGER, Stars INTEGER);
";

/// How a rewrite must relate to the original result.
#[derive(Clone, Copy, PartialEq)]
enum Rule {
    /// Same set of rows.
    Exact,
    /// The observed query returns exactly the original rows.
    Observed,
    /// The original rows are a subset of the observed rows.
    Prefix,
    /// SUM of the named column equals the original aggregate.
    Sum(&'static str),
    /// The union of the split parts equals the original.
    Split,
}

const CASES: &[(&str, Rule, &str)] = &[
    ("inner JOIN", Rule::Exact, "SELECT o.OId, p.Name FROM Orders o JOIN Products p ON o.PId = p.PId WHERE p.OwnerId = 1"),
    ("LEFT JOIN on a foreign key", Rule::Exact, "SELECT o.OId, o.Buyer, p.Price FROM Orders o LEFT JOIN Products p ON o.PId = p.PId"),
    (
        "DISTINCT LEFT JOIN",
        Rule::Exact,
        "SELECT DISTINCT p.PId, p.OwnerId, p.Name, p.Price FROM Products p LEFT JOIN Reviews r ON r.PId = p.PId WHERE r.Stars = 5 OR p.OwnerId = 1",
    ),
    ("ORDER BY output column", Rule::Exact, "SELECT PId, Name FROM Products WHERE OwnerId = 1 ORDER BY Name"),
    ("ORDER BY other column", Rule::Observed, "SELECT PId, Name FROM Products ORDER BY Price"),
    ("LIMIT", Rule::Prefix, "SELECT OId, Quantity FROM Orders WHERE Buyer = 1 ORDER BY Quantity LIMIT 2"),
    ("SUM", Rule::Sum("Quantity"), "SELECT SUM(Quantity) FROM Orders WHERE Buyer = 2"),
    ("SUM over a key column", Rule::Sum("PId"), "SELECT SUM(PId) FROM Products WHERE Price IS NOT NULL"),
    ("UNION", Rule::Exact, "SELECT PId FROM Products WHERE OwnerId = 1 UNION SELECT PId FROM Orders WHERE Buyer = 2"),
    ("IN splitting", Rule::Split, "SELECT PId, Name FROM Products WHERE PId IN (1, 2, 3)"),
];

fn random_db(rng: &mut StdRng) -> Database {
    let mut db = Database::default();
    let ints = |rng: &mut StdRng, xs: &[i64], null: bool| {
        if null && rng.gen_bool(0.2) {
            Value::Null
        } else {
            Value::Int(*xs.choose(rng).unwrap())
        }
    };
    let mut products = Vec::new();
    for pid in 1..=4 {
        if rng.gen_bool(0.6) {
            products.push(pid);
            let name = if rng.gen_bool(0.2) { Value::Null } else { Value::Str(["a", "b"].choose(rng).unwrap().to_string()) };
            let row = vec![Value::Int(pid), ints(rng, &[1, 2], false), name, ints(rng, &[1, 2, 3], true)];
            db.insert("Products", row);
        }
    }
    for oid in 1..=4 {
        if !products.is_empty() && rng.gen_bool(0.6) {
            let pid = *products.choose(rng).unwrap();
            db.insert("Orders", vec![Value::Int(oid), Value::Int(pid), ints(rng, &[1, 2], false), ints(rng, &[1, 2, 5], true)]);
        }
    }
    for rid in 1..=3 {
        if rng.gen_bool(0.6) {
            db.insert("Reviews", vec![Value::Int(rid), ints(rng, &[1, 2, 9], true), ints(rng, &[1, 5], true)]);
        }
    }
    for t in ["Products", "Orders", "Reviews"] {
        db.tables.entry(t.to_string()).or_default();
    }
    db
}

fn load(conn: &Connection, db: &Database) -> rusqlite::Result<()> {
    conn.execute_batch("DELETE FROM Orders; DELETE FROM Reviews; DELETE FROM Products;")?;
    for (table, rows) in &db.tables {
        for row in rows {
            let marks = vec!["?"; row.len()].join(", ");
            let sql = format!("INSERT INTO {table} VALUES ({marks})");
            let params: Vec<rusqlite::types::Value> = row
                .iter()
                .map(|v| match v {
                    Value::Int(i) => rusqlite::types::Value::Integer(*i),
                    Value::Str(s) => rusqlite::types::Value::Text(s.clone()),
                    _ => rusqlite::types::Value::Null,
                })
                .collect();
            conn.execute(&sql, rusqlite::params_from_iter(params))?;
        }
    }
    Ok(())
}

fn run(conn: &Connection, sql: &str) -> rusqlite::Result<Vec<Vec<Value>>> {
    let mut stmt = conn.prepare(sql)?;
    let n = stmt.column_count();
    let rows = stmt.query_map([], |r| {
        (0..n)
            .map(|i| {
                Ok(match r.get_ref(i)? {
                    ValueRef::Integer(v) => Value::Int(v),
                    ValueRef::Text(t) => Value::Str(String::from_utf8_lossy(t).into_owned()),
                    _ => Value::Null,
                })
            })
            .collect()
    })?;
    rows.collect()
}

fn column_sum(q: &BasicQuery, rows: &Relation, name: &str) -> Option<i64> {
    let idx = q.blocks[0].projection.iter().position(|o| o.name.eq_ignore_ascii_case(name))?;
    let mut total = None;
    for r in rows {
        if let Value::Int(v) = r[idx] {
            *total.get_or_insert(0) += v;
        }
    }
    total
}

fn agrees(rule: Rule, rw: &RewriteResult, original: &[Vec<Value>], db: &Database) -> bool {
    let set: Relation = original.iter().cloned().collect();
    match rule {
        Rule::Exact => rw.exact && set.len() == original.len() && evaluate(&rw.query, db) == set,
        Rule::Observed => !rw.exact && rw.observed.as_ref().is_some_and(|o| evaluate(o, db) == set),
        Rule::Prefix => {
            rw.limit_dropped && rw.observed.as_ref().is_some_and(|o| evaluate(o, db).is_superset(&set))
        }
        Rule::Sum(col) => {
            let expected = match original.first().map(|r| &r[0]) {
                Some(Value::Int(v)) => Some(*v),
                _ => None,
            };
            column_sum(&rw.query, &evaluate(&rw.query, db), col) == expected
        }
        Rule::Split => {
            let whole = evaluate(&rw.query, db);
            let parts: Relation = match split_in(&rw.query) {
                Ok(ps) if ps.len() > 1 => ps.iter().flat_map(|p| evaluate(p, db)).collect(),
                _ => return false,
            };
            whole == set && parts == set
        }
    }
}

pub fn criterion6(_: &mut Corpus) -> Outcome {
    let policy = PolicyBundle::from_json_str(POLICY).expect("rewrite policy");
    let conn = Connection::open_in_memory().expect("sqlite");
    conn.execute_batch(DDL).expect("ddl");
    let mut rng = StdRng::seed_from_u64(SEED);
    let dbs: Vec<Database> = (0..DATABASES).map(|_| random_db(&mut rng)).collect();
    let mut failures = Vec::new();
    let mut rules = BTreeSet::new();
    for (name, rule, sql) in CASES {
        let rw = match to_basic(sql, &[], &policy.schema, &policy.context_types()) {
            Ok(r) => r,
            Err(e) => {
                failures.push(format!("{name}: {e}"));
                continue;
            }
        };
        let bad = dbs
            .iter()
            .enumerate()
            .find(|(_, db)| {
                load(&conn, db).expect("load");
                let original = run(&conn, sql).expect("sqlite query");
                !agrees(*rule, &rw, &original, db)
            })
            .map(|(i, _)| i);
        match bad {
            Some(i) => failures.push(format!("{name}: database {i} {}", dbs[i].to_json())),
            None => {
                rules.insert(*name);
            }
        }
    }
    Outcome::check(
        failures.is_empty(),
        format!(
            "{}/{} rewrite rules agree with SQLite on {DATABASES} databases{}",
            rules.len(),
            CASES.len(),
            if failures.is_empty() { String::new() } else { format!("; failed: {}", failures.join("; ")) }
        ),
    )
}
