//! Replacing constants in a query and its supporting trace by template variables.

use std::collections::{BTreeMap, BTreeSet};

use crate::smt::TraceItem;
use crate::sql::basic::{BasicQuery, CmpOp, Operand, Predicate};
use crate::value::{ColumnType, Value};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Parameterized {
    pub query: BasicQuery,
    pub trace: Vec<TraceItem>,
    /// Context parameters first (in the given order), then `x0, x1, ...`.
    pub nu: Vec<(Operand, Value)>,
    pub types: BTreeMap<Operand, ColumnType>,
}

impl Parameterized {
    pub fn var_types(&self) -> BTreeMap<u32, ColumnType> {
        self.types
            .iter()
            .filter_map(|(o, t)| match o {
                Operand::Var(k) => Some((*k, *t)),
                _ => None,
            })
            .collect()
    }

    pub fn value_of(&self, o: &Operand) -> Option<Value> {
        match o {
            Operand::Const(v) => Some(v.clone()),
            o => self.nu.iter().find(|(x, _)| x == o).map(|(_, v)| v.clone()),
        }
    }
}

struct Fresh {
    next: u32,
    nu: Vec<(Operand, Value)>,
    types: BTreeMap<Operand, ColumnType>,
}

impl Fresh {
    fn var(&mut self, v: Value, ty: ColumnType) -> Operand {
        let o = Operand::Var(self.next);
        self.next += 1;
        self.nu.push((o.clone(), v));
        self.types.insert(o.clone(), ty);
        o
    }

    fn query(&mut self, q: &BasicQuery) -> BasicQuery {
        q.map_operands(&mut |o| match o {
            Operand::Const(v) if !v.is_null() => {
                let ty = v.column_type().expect("non-null");
                self.var(v.clone(), ty)
            }
            o => o.clone(),
        })
    }
}

/// Variables a conjunct `column = x` pins to projected output positions.
fn pinned_outputs(q: &BasicQuery) -> BTreeMap<usize, Operand> {
    let mut out = BTreeMap::new();
    let [block] = q.blocks.as_slice() else { return out };
    for c in block.predicate.conjuncts() {
        let Predicate::Cmp(CmpOp::Eq, a, b) = c else { continue };
        let (col, x) = match (a, b) {
            (Operand::Column(c), x @ Operand::Var(_)) | (x @ Operand::Var(_), Operand::Column(c)) => (*c, x),
            _ => continue,
        };
        for (k, p) in block.projection.iter().enumerate() {
            if p.operand == Operand::Column(col) {
                out.entry(k).or_insert_with(|| x.clone());
            }
        }
    }
    out
}

/// Parameterizes trace entries (in order) and then the query. Every non-NULL
/// constant occurrence becomes a fresh variable, except output positions that
/// a top-level equality forces equal to a variable already introduced.
pub fn parameterize(q: &BasicQuery, trace: &[TraceItem], ctx: &[(String, Value, ColumnType)]) -> Parameterized {
    let mut f = Fresh { next: 0, nu: Vec::new(), types: BTreeMap::new() };
    for (name, v, ty) in ctx {
        f.nu.push((Operand::Param(name.clone()), v.clone()));
        f.types.insert(Operand::Param(name.clone()), *ty);
    }
    let mut items = Vec::new();
    for item in trace {
        let query = f.query(&item.query);
        let pinned = pinned_outputs(&query);
        let tuple = item
            .tuple
            .iter()
            .enumerate()
            .map(|(k, o)| {
                let Operand::Const(v) = o else { return o.clone() };
                if let Some(x) = pinned.get(&k) {
                    let same = f.nu.iter().any(|(y, w)| y == x && w == v);
                    if same && !v.is_null() {
                        return x.clone();
                    }
                }
                f.var(v.clone(), query.column_types[k])
            })
            .collect();
        items.push(TraceItem { query, tuple });
    }
    let query = f.query(q);
    Parameterized { query, trace: items, nu: f.nu, types: f.types }
}

/// Applies an operand substitution to a query and trace.
pub fn substitute(
    q: &BasicQuery,
    trace: &[TraceItem],
    map: &BTreeMap<Operand, Operand>,
) -> (BasicQuery, Vec<TraceItem>) {
    let mut f = |o: &Operand| map.get(o).cloned().unwrap_or_else(|| o.clone());
    let q = q.map_operands(&mut f);
    let trace = trace
        .iter()
        .map(|t| TraceItem { query: t.query.map_operands(&mut f), tuple: t.tuple.iter().map(&mut f).collect() })
        .collect();
    (q, trace)
}

/// Variables in order of first appearance: trace entries, then the query.
pub fn vars_in_order(q: &BasicQuery, trace: &[TraceItem]) -> Vec<u32> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    let mut visit = |o: &Operand| {
        if let Operand::Var(k) = o {
            if seen.insert(*k) {
                out.push(*k);
            }
        }
    };
    for t in trace {
        t.query.for_each_operand(&mut visit);
        t.tuple.iter().for_each(&mut visit);
    }
    q.for_each_operand(&mut visit);
    out
}
