use std::collections::{BTreeMap, BTreeSet};

use super::eval::{table_ok, Database, Relation, Tuple};
use crate::schema::Schema;
use crate::value::{ColumnType, Value};

/// Finite constant pools and row bounds for database enumeration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DomainSpec {
    pub pools: BTreeMap<ColumnType, Vec<Value>>,
    pub max_rows: usize,
    /// Give up (Exhausted) beyond this many candidate databases per component.
    pub max_databases: u64,
}

impl DomainSpec {
    pub fn new(max_rows: usize) -> Self {
        let mut pools = BTreeMap::new();
        pools.insert(ColumnType::Bool, vec![Value::Bool(false), Value::Bool(true)]);
        DomainSpec { pools, max_rows, max_databases: 5_000_000 }
    }

    pub fn with_pool(mut self, ty: ColumnType, values: Vec<Value>) -> Self {
        self.pools.insert(ty, values);
        self
    }

    /// Pools made of the given constants plus fresh values, at least `per_type`
    /// values per type and always at least one fresh value.
    pub fn from_constants(
        constants: impl IntoIterator<Item = Value>,
        types: impl IntoIterator<Item = ColumnType>,
        per_type: usize,
        max_rows: usize,
    ) -> Self {
        let mut by_type: BTreeMap<ColumnType, BTreeSet<Value>> = BTreeMap::new();
        for v in constants {
            if let Some(t) = v.column_type() {
                by_type.entry(t).or_default().insert(v);
            }
        }
        let mut spec = DomainSpec::new(max_rows);
        for ty in types {
            if ty == ColumnType::Bool {
                continue;
            }
            let known = by_type.remove(&ty).unwrap_or_default();
            let mut pool: Vec<Value> = known.iter().cloned().collect();
            let fresh_needed = per_type.saturating_sub(pool.len()).max(1);
            let mut k = 0i64;
            while pool.len() < known.len() + fresh_needed {
                let cand = fresh_value(ty, &known, k);
                k += 1;
                if !pool.contains(&cand) {
                    pool.push(cand);
                }
            }
            pool.sort();
            spec.pools.insert(ty, pool);
        }
        spec
    }

    pub fn pool(&self, ty: ColumnType) -> &[Value] {
        self.pools.get(&ty).map(|v| v.as_slice()).unwrap_or(&[])
    }
}

fn fresh_value(ty: ColumnType, known: &BTreeSet<Value>, k: i64) -> Value {
    match ty {
        ColumnType::Int => {
            let max = known.iter().filter_map(|v| if let Value::Int(i) = v { Some(*i) } else { None }).max();
            Value::Int(max.map(|m| m + 1 + k).unwrap_or(k + 1))
        }
        ColumnType::Timestamp => {
            let max = known.iter().filter_map(|v| if let Value::Time(i) = v { Some(*i) } else { None }).max();
            Value::Time(max.map(|m| m + 3600 * (k + 1)).unwrap_or(1_600_000_000 + 3600 * k))
        }
        ColumnType::String => Value::Str(format!("v{k}")),
        ColumnType::Bool => Value::Bool(k % 2 == 0),
    }
}

/// All rows of a table over the pools.
pub fn row_universe(schema: &Schema, table: &str, dom: &DomainSpec) -> Vec<Tuple> {
    let t = schema.table(table).expect("known table");
    let mut rows: Vec<Tuple> = vec![vec![]];
    for c in &t.columns {
        let mut vals: Vec<Value> = dom.pool(c.ty).to_vec();
        if c.nullable {
            vals.insert(0, Value::Null);
        }
        rows = rows
            .into_iter()
            .flat_map(|r| {
                vals.iter().map(move |v| {
                    let mut r = r.clone();
                    r.push(v.clone());
                    r
                })
            })
            .collect();
    }
    rows
}

/// Every key-respecting set of at most `max_rows` rows of one table.
pub fn table_instances(schema: &Schema, table: &str, dom: &DomainSpec, limit: u64) -> Option<Vec<Relation>> {
    let universe = row_universe(schema, table, dom);
    let mut out = vec![Relation::new()];
    let mut frontier: Vec<(Vec<usize>, Relation)> = vec![(vec![], Relation::new())];
    for _ in 0..dom.max_rows {
        let mut next = Vec::new();
        for (idx, rel) in &frontier {
            let start = idx.last().map(|&i| i + 1).unwrap_or(0);
            for (i, row) in universe.iter().enumerate().skip(start) {
                let mut r = rel.clone();
                r.insert(row.clone());
                if table_ok(schema, table, &r) {
                    let mut j = idx.clone();
                    j.push(i);
                    out.push(r.clone());
                    next.push((j, r));
                    if out.len() as u64 > limit {
                        return None;
                    }
                }
            }
        }
        frontier = next;
    }
    Some(out)
}

/// Mixed-radix indexing over per-table candidate lists.
pub struct Product<'a> {
    pub tables: Vec<String>,
    pub choices: Vec<&'a [Relation]>,
}

impl Product<'_> {
    pub fn len(&self) -> u64 {
        self.choices.iter().map(|c| c.len() as u64).try_fold(1u64, |a, b| a.checked_mul(b)).unwrap_or(u64::MAX)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn database(&self, mut index: u64) -> Database {
        let mut db = Database::default();
        for (t, c) in self.tables.iter().zip(&self.choices).rev() {
            let n = c.len() as u64;
            let rel = &c[(index % n) as usize];
            index /= n;
            db.tables.insert(t.clone(), rel.clone());
        }
        db
    }
}
