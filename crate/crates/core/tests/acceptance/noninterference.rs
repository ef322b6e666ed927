//! Scripted programs run under enforcement over every small database: any two
//! databases with equal views must yield equal program outputs.

use std::collections::{BTreeMap, HashMap};

use qcomply::engine::{Decision, Engine, EngineConfig};
use qcomply::schema::PolicyBundle;
use qcomply::value::Value;
use rusqlite::types::ValueRef;
use rusqlite::Connection;

use crate::{Corpus, Outcome};

const POLICY: &str = r#"{
  "format_version": 1,
  "tables": [
    {"name": "Users", "primary_key": ["UId"], "columns": [
      {"name": "UId", "type": "int"}, {"name": "Team", "type": "int", "nullable": false}]},
    {"name": "Docs", "primary_key": ["DId"], "columns": [
      {"name": "DId", "type": "int"}, {"name": "Owner", "type": "int", "nullable": false},
      {"name": "Secret", "type": "int", "nullable": false}]}
  ],
  "constraints": [],
  "views": [
    {"name": "Directory", "sql": "SELECT * FROM Users"},
    {"name": "MyDocs", "sql": "SELECT * FROM Docs WHERE Owner = ?MyUId"}
  ],
  "context": [{"name": "MyUId", "type": "int"}]
}"#;

const DDL: &str = "
CREATE TABLE Users (UId INTEGER PRIMARY KEY, Team INTEGER NOT NULL);
CREATE TABLE Docs (DId INTEGER PRIMARY KEY, Owner INTEGER NOT NULL, Secret INTEGER NOT NULL);
";

const VIEWS: [&str; 2] = ["SELECT * FROM Users ORDER BY UId", "SELECT * FROM Docs WHERE Owner = 1 ORDER BY DId"];

/// Steps may refer to earlier results as `$step.column` (first row).
const PROGRAMS: &[&[&str]] = &[
    &["SELECT * FROM Users WHERE UId = 1"],
    &["SELECT Team FROM Users WHERE UId = 2"],
    &["SELECT * FROM Docs WHERE Owner = 1"],
    &["SELECT Secret FROM Docs WHERE DId = 1"],
    &["SELECT DId FROM Docs WHERE Owner = 1", "SELECT Secret FROM Docs WHERE DId = $0.0"],
    &["SELECT * FROM Docs WHERE Owner = 2"],
    &["SELECT * FROM Docs WHERE DId = 2 AND Owner = 1"],
    &["SELECT Owner FROM Docs WHERE DId = 1", "SELECT Team FROM Users WHERE UId = $0.0"],
    &["SELECT Team FROM Users WHERE UId = 1", "SELECT UId FROM Users WHERE Team = $0.0"],
    &["SELECT DId, Secret FROM Docs WHERE Owner = 1 AND Secret = 2"],
    &["SELECT SUM(Secret) FROM Docs WHERE Owner = 1"],
    &["SELECT d.DId, u.Team FROM Docs d JOIN Users u ON d.Owner = u.UId WHERE u.UId = 1"],
    &["SELECT d.DId, d.Secret FROM Docs d JOIN Users u ON d.Owner = u.UId WHERE u.Team = 1"],
    &["SELECT DId FROM Docs WHERE Owner = 1 ORDER BY Secret LIMIT 1", "SELECT Secret FROM Docs WHERE DId = $0.0"],
    &["SELECT Secret FROM Docs WHERE DId = 1", "SELECT * FROM Users"],
    &[
        "SELECT DId FROM Docs WHERE Owner = 1",
        "SELECT Owner, Secret FROM Docs WHERE DId = $0.0",
        "SELECT Team FROM Users WHERE UId = $1.0",
    ],
    &["SELECT DId FROM Docs WHERE Owner = 1 UNION SELECT DId FROM Docs WHERE Owner = 2"],
    &["SELECT UId FROM Users WHERE UId IN (1, 2)"],
    &["SELECT * FROM Docs WHERE DId IN (1, 2) AND Owner = 1"],
    &["SELECT Secret FROM Docs WHERE DId = 2 AND Owner = 2"],
];

type Rows = Vec<Vec<Value>>;

fn run(conn: &Connection, sql: &str) -> Rows {
    let mut stmt = conn.prepare(sql).expect("sqlite prepare");
    let n = stmt.column_count();
    stmt.query_map([], |r| {
        (0..n)
            .map(|i| {
                Ok(match r.get_ref(i)? {
                    ValueRef::Integer(v) => Value::Int(v),
                    _ => Value::Null,
                })
            })
            .collect()
    })
    .expect("sqlite query")
    .collect::<rusqlite::Result<_>>()
    .expect("sqlite rows")
}

/// Every database over keys {1, 2} and values {1, 2}.
fn databases() -> Vec<(Rows, Rows)> {
    let users_opts: Vec<Option<i64>> = vec![None, Some(1), Some(2)];
    let docs_opts: Vec<Option<(i64, i64)>> =
        std::iter::once(None).chain([(1, 1), (1, 2), (2, 1), (2, 2)].into_iter().map(Some)).collect();
    let mut out = Vec::new();
    for u1 in &users_opts {
        for u2 in &users_opts {
            for d1 in &docs_opts {
                for d2 in &docs_opts {
                    let users = [(1, u1), (2, u2)]
                        .iter()
                        .filter_map(|(k, t)| t.map(|t| vec![Value::Int(*k), Value::Int(t)]))
                        .collect();
                    let docs = [(1, d1), (2, d2)]
                        .iter()
                        .filter_map(|(k, d)| d.map(|(o, s)| vec![Value::Int(*k), Value::Int(o), Value::Int(s)]))
                        .collect();
                    out.push((users, docs));
                }
            }
        }
    }
    out
}

fn load(conn: &Connection, users: &Rows, docs: &Rows) {
    conn.execute_batch("DELETE FROM Users; DELETE FROM Docs;").expect("clear");
    let int = |v: &Value| if let Value::Int(i) = v { *i } else { unreachable!() };
    for r in users {
        conn.execute("INSERT INTO Users VALUES (?1, ?2)", [int(&r[0]), int(&r[1])]).expect("insert");
    }
    for r in docs {
        conn.execute("INSERT INTO Docs VALUES (?1, ?2, ?3)", [int(&r[0]), int(&r[1]), int(&r[2])]).expect("insert");
    }
}

fn substitute(sql: &str, results: &[Rows]) -> Option<String> {
    let mut out = String::new();
    let mut rest = sql;
    while let Some(i) = rest.find('$') {
        out.push_str(&rest[..i]);
        let tail = &rest[i + 1..];
        let end = tail.find(|c: char| !c.is_ascii_digit() && c != '.').unwrap_or(tail.len());
        let (step, col) = tail[..end].split_once('.')?;
        let v = results.get(step.parse::<usize>().ok()?)?.first()?.get(col.parse::<usize>().ok()?)?;
        match v {
            Value::Int(x) => out.push_str(&x.to_string()),
            _ => return None,
        }
        rest = &tail[end..];
    }
    out.push_str(rest);
    Some(out)
}

#[derive(Default)]
struct Stats {
    allowed: usize,
    denied: usize,
    memo_hits: usize,
}

/// Runs one program under enforcement; the output is what the application sees.
fn execute(
    engine: &Engine,
    conn: &Connection,
    program: &[&str],
    memo: &mut HashMap<String, bool>,
    stats: &mut Stats,
) -> Vec<String> {
    let mut session = engine.begin_request(&BTreeMap::from([("MyUId".to_string(), Value::Int(1))])).expect("context");
    let mut results: Vec<Rows> = Vec::new();
    let mut seen = Vec::new();
    let mut output = Vec::new();
    for step in program {
        let Some(sql) = substitute(step, &results) else {
            output.push("missing input".to_string());
            break;
        };
        let rows = run(conn, &sql);
        let key = format!("{sql} | {seen:?}");
        let allowed = match memo.get(&key) {
            Some(false) => {
                stats.memo_hits += 1;
                false
            }
            _ => {
                let allowed = session.check_query(&sql, &[], &rows).expect("check").decision == Decision::Allow;
                if !allowed {
                    memo.insert(key, false);
                }
                allowed
            }
        };
        if !allowed {
            stats.denied += 1;
            output.push("denied".to_string());
            break;
        }
        stats.allowed += 1;
        output.push(format!("{rows:?}"));
        seen.push((sql, rows.clone()));
        results.push(rows);
    }
    session.end_request();
    output
}

pub fn criterion7(_: &mut Corpus) -> Outcome {
    let policy = PolicyBundle::from_json_str(POLICY).expect("policy");
    let engine = Engine::new(policy, EngineConfig::default()).expect("engine");
    let conn = Connection::open_in_memory().expect("sqlite");
    conn.execute_batch(DDL).expect("ddl");
    let dbs = databases();
    let mut memo = HashMap::new();
    let mut stats = Stats::default();
    // (program, view results) -> first output seen.
    let mut reference: HashMap<(usize, Vec<Rows>), (usize, Vec<String>)> = HashMap::new();
    let mut groups = std::collections::HashSet::new();
    let mut violations = Vec::new();
    for (d, (users, docs)) in dbs.iter().enumerate() {
        load(&conn, users, docs);
        let views: Vec<Rows> = VIEWS.iter().map(|v| run(&conn, v)).collect();
        groups.insert(views.clone());
        for (p, program) in PROGRAMS.iter().enumerate() {
            let out = execute(&engine, &conn, program, &mut memo, &mut stats);
            match reference.get(&(p, views.clone())) {
                Some((d0, expected)) if *expected != out => {
                    violations.push(format!("program {p} differs on databases {d0} and {d}: {expected:?} vs {out:?}"))
                }
                Some(_) => {}
                None => {
                    reference.insert((p, views.clone()), (d, out));
                }
            }
        }
    }
    let pass = violations.is_empty() && stats.allowed > 0 && stats.denied > 0;
    let mut detail = format!(
        "{} programs x {} databases ({} view-equivalence classes): {} steps allowed, {} denied \
         ({} denials memoized), {} solver calls, {} violations",
        PROGRAMS.len(),
        dbs.len(),
        groups.len(),
        stats.allowed,
        stats.denied,
        stats.memo_hits,
        engine.solver_calls(),
        violations.len()
    );
    if let Some(v) = violations.first() {
        detail.push_str(&format!("; first: {v}"));
    }
    Outcome::check(pass, detail)
}
