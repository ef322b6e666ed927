use std::collections::{BTreeMap, BTreeSet};

use crate::schema::{Constraint, PolicyBundle, Schema};
use crate::sql::basic::*;
use crate::value::Value;

pub type Tuple = Vec<Value>;
pub type Relation = BTreeSet<Tuple>;

/// A concrete database: one set of rows per table.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Database {
    pub tables: BTreeMap<String, Relation>,
}

impl Database {
    pub fn rows(&self, table: &str) -> impl Iterator<Item = &Tuple> {
        self.tables.get(table).into_iter().flatten()
    }

    pub fn insert(&mut self, table: &str, row: Tuple) {
        self.tables.entry(table.to_string()).or_default().insert(row);
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::Value::Object(
            self.tables
                .iter()
                .filter(|(_, rows)| !rows.is_empty())
                .map(|(t, rows)| {
                    let rows = rows.iter().map(|r| serde_json::Value::Array(r.iter().map(Value::to_json).collect()));
                    (t.clone(), serde_json::Value::Array(rows.collect()))
                })
                .collect(),
        )
    }
}

fn operand_value<'a>(o: &'a Operand, rows: &[&'a Tuple]) -> &'a Value {
    static NULL: Value = Value::Null;
    match o {
        Operand::Column(c) => &rows[c.instance][c.column],
        Operand::Const(v) => v,
        // Open queries are not evaluable; unbound placeholders act as NULL.
        Operand::Param(_) | Operand::Var(_) => &NULL,
    }
}

/// Two-valued SQL predicate evaluation.
pub fn eval_predicate(p: &Predicate, rows: &[&Tuple]) -> bool {
    match p {
        Predicate::True => true,
        Predicate::False => false,
        Predicate::And(ps) => ps.iter().all(|q| eval_predicate(q, rows)),
        Predicate::Or(ps) => ps.iter().any(|q| eval_predicate(q, rows)),
        Predicate::Cmp(op, a, b) => {
            let (a, b) = (operand_value(a, rows), operand_value(b, rows));
            if a.is_null() || b.is_null() {
                return false;
            }
            match op {
                CmpOp::Eq => a == b,
                CmpOp::Ne => a != b,
                CmpOp::Lt => a.sql_lt(b),
                CmpOp::Le => a.sql_lt(b) || a == b,
                CmpOp::Gt => b.sql_lt(a),
                CmpOp::Ge => b.sql_lt(a) || a == b,
            }
        }
        Predicate::In { operand, list, negated } => {
            let v = operand_value(operand, rows);
            if v.is_null() {
                return false;
            }
            let vals: Vec<&Value> = list.iter().map(|o| operand_value(o, rows)).collect();
            if *negated {
                vals.iter().all(|w| !w.is_null() && *w != v)
            } else {
                vals.contains(&v)
            }
        }
        Predicate::IsNull { operand, negated } => operand_value(operand, rows).is_null() != *negated,
    }
}

fn eval_block(b: &SelectBlock, db: &Database, out: &mut Relation) {
    let tables: Vec<Vec<&Tuple>> = b.from.iter().map(|i| db.rows(&i.table).collect()).collect();
    if tables.iter().any(|t| t.is_empty()) {
        return;
    }
    let mut idx = vec![0usize; tables.len()];
    loop {
        let rows: Vec<&Tuple> = idx.iter().zip(&tables).map(|(&i, t)| t[i]).collect();
        if eval_predicate(&b.predicate, &rows) {
            out.insert(b.projection.iter().map(|c| operand_value(&c.operand, &rows).clone()).collect());
        }
        let mut k = idx.len();
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < tables[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// Set-semantics evaluation of a closed query.
pub fn evaluate(q: &BasicQuery, db: &Database) -> Relation {
    let mut out = Relation::new();
    for b in &q.blocks {
        eval_block(b, db, &mut out);
    }
    out
}

/// Bag-semantics evaluation of one block, used to test duplicate-freeness certificates.
pub fn evaluate_bag(b: &SelectBlock, db: &Database) -> Vec<Tuple> {
    let tables: Vec<Vec<&Tuple>> = b.from.iter().map(|i| db.rows(&i.table).collect()).collect();
    let mut out = Vec::new();
    if tables.iter().any(|t| t.is_empty()) {
        return out;
    }
    let mut idx = vec![0usize; tables.len()];
    'outer: loop {
        let rows: Vec<&Tuple> = idx.iter().zip(&tables).map(|(&i, t)| t[i]).collect();
        if eval_predicate(&b.predicate, &rows) {
            out.push(b.projection.iter().map(|c| operand_value(&c.operand, &rows).clone()).collect());
        }
        let mut k = idx.len();
        loop {
            if k == 0 {
                break 'outer;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < tables[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
    out
}

/// Key uniqueness and NOT NULL for one table's rows.
pub fn table_ok(schema: &Schema, table: &str, rows: &Relation) -> bool {
    let Some(t) = schema.table(table) else { return false };
    for r in rows {
        if r.len() != t.columns.len() {
            return false;
        }
        if t.columns.iter().zip(r).any(|(c, v)| !c.nullable && v.is_null()) {
            return false;
        }
    }
    for key in t.all_keys() {
        let mut seen = BTreeSet::new();
        for r in rows {
            let k: Vec<&Value> = key.iter().map(|&c| &r[c]).collect();
            if k.iter().any(|v| v.is_null()) {
                continue;
            }
            if !seen.insert(k) {
                return false;
            }
        }
    }
    true
}

/// Whether a constraint other than key uniqueness holds.
pub fn cross_constraint_ok(c: &Constraint, schema: &Schema, db: &Database) -> bool {
    match c {
        Constraint::PrimaryKeyUnique { table } => {
            table_ok(schema, table, db.tables.get(table).unwrap_or(&Relation::new()))
        }
        c => c
            .as_containments(schema)
            .iter()
            .all(|(lhs, rhs)| evaluate(lhs, db).is_subset(&evaluate(rhs, db))),
    }
}

pub fn check_constraints(db: &Database, policy: &PolicyBundle) -> bool {
    policy.constraints.iter().all(|c| cross_constraint_ok(c, &policy.schema, db))
}
