#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use qcomply::oracle::{Database, DomainSpec};
use qcomply::schema::{PolicyBundle, RequestContext};
use qcomply::sql::{self, BasicQuery};
use qcomply::value::{ColumnType, Value};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn calendar() -> PolicyBundle {
    qcomply::schema::load_policy(fixture("calendar_policy.json")).expect("calendar policy loads")
}

pub fn ctx(policy: &PolicyBundle, pairs: &[(&str, Value)]) -> RequestContext {
    let raw: BTreeMap<String, Value> = pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
    let mut ctx = policy.make_context(&raw).expect("context");
    ctx.params.insert("NOW".into(), Value::Time(1_650_000_000));
    ctx
}

pub fn basic(policy: &PolicyBundle, sql: &str) -> BasicQuery {
    sql::to_basic(sql, &[], &policy.schema, &policy.context_types()).expect("basic query").query
}

/// A random database whose rows draw from the domain pools; keys are not enforced.
pub fn random_db(policy: &PolicyBundle, dom: &DomainSpec, rng: &mut impl Rng) -> Database {
    let mut db = Database::default();
    for t in &policy.schema.tables {
        let n = rng.gen_range(0..=dom.max_rows);
        let mut rows = qcomply::oracle::Relation::new();
        for _ in 0..n {
            let row: Vec<Value> = t
                .columns
                .iter()
                .map(|c| {
                    if c.nullable && rng.gen_bool(0.2) {
                        Value::Null
                    } else {
                        dom.pool(c.ty).choose(rng).cloned().unwrap_or(Value::Null)
                    }
                })
                .collect();
            rows.insert(row);
        }
        db.tables.insert(t.name.clone(), rows);
    }
    db
}

pub fn small_dom(ints: &[i64], strs: &[&str], rows: usize) -> DomainSpec {
    DomainSpec::new(rows)
        .with_pool(ColumnType::Int, ints.iter().map(|&i| Value::Int(i)).collect())
        .with_pool(ColumnType::String, strs.iter().map(|&s| Value::Str(s.into())).collect())
        .with_pool(ColumnType::Timestamp, vec![Value::Time(100), Value::Time(200)])
}
