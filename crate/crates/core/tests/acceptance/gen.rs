//! Random tiny policies, traces and queries for solver/oracle agreement runs.

use std::collections::BTreeMap;

use qcomply::oracle::{evaluate, Database, DomainSpec, Observation, Relation};
use qcomply::schema::{PolicyBundle, RequestContext};
use qcomply::smt::TraceItem;
use qcomply::sql::{self, BasicQuery};
use qcomply::value::{ColumnType, Value};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::json;

/// Values the generated SQL and context use; the oracle domain adds one more.
pub const CONSTS: [i64; 2] = [1, 2];
pub const DOMAIN: [i64; 3] = [1, 2, 3];

#[derive(Clone, Debug)]
pub struct TableShape {
    pub name: String,
    pub columns: usize,
    pub nullable: Vec<bool>,
}

pub struct Instance {
    pub policy: PolicyBundle,
    pub ctx: RequestContext,
    pub views: Vec<String>,
    pub trace_sql: Vec<String>,
    pub trace: Vec<Observation>,
    pub query_sql: String,
    pub query: BasicQuery,
    /// The database the trace results came from.
    pub d0: Database,
}

impl Instance {
    pub fn trace_items(&self) -> Vec<TraceItem> {
        self.trace
            .iter()
            .flat_map(|o| o.rows.iter().map(|r| TraceItem::concrete(o.query.clone(), r)))
            .collect()
    }

    pub fn dom(&self) -> DomainSpec {
        let mut d = DomainSpec::new(DOMAIN.len()).with_pool(ColumnType::Int, DOMAIN.iter().map(|&v| Value::Int(v)).collect());
        d.max_databases = 2_000_000;
        d
    }

    pub fn describe(&self) -> String {
        format!(
            "views {:?}; ctx MyUId={:?}; trace {:?} -> {:?}; query {}",
            self.views,
            self.ctx.get("MyUId"),
            self.trace_sql,
            self.trace.iter().map(|o| &o.rows).collect::<Vec<_>>(),
            self.query_sql
        )
    }
}

fn shapes(rng: &mut StdRng) -> Vec<TableShape> {
    let n = rng.gen_range(1..=3);
    (0..n)
        .map(|i| {
            let columns = *[1, 2, 2, 2, 3].choose(rng).unwrap();
            let nullable = (0..columns).map(|c| c > 0 && rng.gen_bool(0.25)).collect();
            TableShape { name: format!("T{i}"), columns, nullable }
        })
        .collect()
}

fn policy_json(tables: &[TableShape], views: &[String]) -> String {
    let tables: Vec<_> = tables
        .iter()
        .map(|t| {
            let cols: Vec<_> = (0..t.columns)
                .map(|c| json!({"name": format!("c{c}"), "type": "int", "nullable": t.nullable[c]}))
                .collect();
            json!({"name": t.name, "columns": cols, "primary_key": ["c0"]})
        })
        .collect();
    let views: Vec<_> = views.iter().enumerate().map(|(i, v)| json!({"name": format!("V{i}"), "sql": v})).collect();
    json!({
        "format_version": 1,
        "tables": tables,
        "constraints": [],
        "views": views,
        "context": [{"name": "MyUId", "type": "int"}],
    })
    .to_string()
}

struct Block<'a> {
    tables: &'a [TableShape],
    insts: Vec<(usize, String)>,
}

impl Block<'_> {
    fn column(&self, rng: &mut StdRng) -> (usize, usize, String) {
        let i = rng.gen_range(0..self.insts.len());
        let (t, alias) = &self.insts[i];
        let c = rng.gen_range(0..self.tables[*t].columns);
        (i, c, format!("{alias}.c{c}"))
    }

    fn atom(&self, rng: &mut StdRng, allow_param: bool) -> String {
        let (i, c, col) = self.column(rng);
        let nullable = self.tables[self.insts[i].0].nullable[c];
        let k = CONSTS.choose(rng).unwrap();
        match rng.gen_range(0..10) {
            0..=3 => format!("{col} = {k}"),
            4 | 5 if allow_param => format!("{col} = ?MyUId"),
            4 | 5 => format!("{col} = {k}"),
            6 => {
                let (_, _, other) = self.column(rng);
                format!("{col} = {other}")
            }
            7 if nullable => format!("{col} IS NULL"),
            7 => format!("{col} IS NOT NULL"),
            8 => format!("{col} IN (1, 2)"),
            _ => format!("({col} = {k} OR {})", self.atom(rng, allow_param)),
        }
    }
}

/// One `SELECT DISTINCT` block over one or two instances.
fn select(rng: &mut StdRng, tables: &[TableShape], view: bool) -> String {
    let n = if rng.gen_bool(0.35) { 2 } else { 1 };
    let insts: Vec<(usize, String)> = (0..n).map(|i| (rng.gen_range(0..tables.len()), format!("a{i}"))).collect();
    let b = Block { tables, insts };
    let mut proj = Vec::new();
    for (t, alias) in &b.insts {
        for c in 0..tables[*t].columns {
            if rng.gen_bool(0.5) {
                proj.push(format!("{alias}.c{c}"));
            }
        }
    }
    if proj.is_empty() {
        proj.push(b.column(rng).2);
    }
    let mut conj = Vec::new();
    if n == 2 && rng.gen_bool(0.7) {
        let (t0, t1) = (b.insts[0].0, b.insts[1].0);
        let c0 = rng.gen_range(0..tables[t0].columns);
        let c1 = rng.gen_range(0..tables[t1].columns);
        conj.push(format!("a0.c{c0} = a1.c{c1}"));
    }
    for _ in 0..rng.gen_range(0..=2) {
        conj.push(b.atom(rng, view));
    }
    let from: Vec<String> = b.insts.iter().map(|(t, a)| format!("{} {a}", tables[*t].name)).collect();
    let mut sql = format!("SELECT DISTINCT {} FROM {}", proj.join(", "), from.join(", "));
    if !conj.is_empty() {
        sql.push_str(&format!(" WHERE {}", conj.join(" AND ")));
    }
    sql
}

fn random_db(rng: &mut StdRng, tables: &[TableShape]) -> Database {
    let mut db = Database::default();
    for t in tables {
        let mut rel = Relation::new();
        for &k in &CONSTS {
            if rng.gen_bool(0.6) {
                let mut row = vec![Value::Int(k)];
                for c in 1..t.columns {
                    row.push(if t.nullable[c] && rng.gen_bool(0.2) {
                        Value::Null
                    } else {
                        Value::Int(*CONSTS.choose(rng).unwrap())
                    });
                }
                rel.insert(row);
            }
        }
        db.tables.insert(t.name.clone(), rel);
    }
    db
}

pub fn instance(rng: &mut StdRng) -> Instance {
    loop {
        if let Some(i) = try_instance(rng) {
            return i;
        }
    }
}

fn try_instance(rng: &mut StdRng) -> Option<Instance> {
    let tables = shapes(rng);
    let views: Vec<String> = (0..rng.gen_range(1..=3)).map(|_| select(rng, &tables, true)).collect();
    let policy = PolicyBundle::from_json_str(&policy_json(&tables, &views)).ok()?;
    let uid = *CONSTS.choose(rng).unwrap();
    let raw = BTreeMap::from([("MyUId".to_string(), Value::Int(uid))]);
    let mut ctx = policy.make_context(&raw).ok()?;
    ctx.params.insert("NOW".into(), Value::Time(0));
    let d0 = random_db(rng, &tables);
    let mut trace_sql = Vec::new();
    let mut trace = Vec::new();
    let mut rows = 0;
    for _ in 0..rng.gen_range(0..=2) {
        let sql = select(rng, &tables, false);
        let q = sql::to_basic(&sql, &[], &policy.schema, &policy.context_types()).ok()?.query;
        let result = evaluate(&q, &d0);
        if result.is_empty() || rows + result.len() > 3 {
            continue;
        }
        rows += result.len();
        trace_sql.push(sql);
        trace.push(Observation { query: q, rows: result, partial: false });
    }
    let query_sql = select(rng, &tables, false);
    let query = sql::to_basic(&query_sql, &[], &policy.schema, &policy.context_types()).ok()?.query;
    Some(Instance { policy, ctx, views, trace_sql, trace, query_sql, query, d0 })
}
