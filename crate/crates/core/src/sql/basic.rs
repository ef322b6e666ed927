//! Resolved query representation shared by the encoder, the oracle and the cache.

use std::collections::{BTreeMap, BTreeSet};

pub use super::ast::CmpOp;
use crate::schema::Schema;
use crate::value::{ColumnType, Value};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TableInstance {
    /// Canonical table name from the schema.
    pub table: String,
    pub alias: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ColumnRef {
    pub instance: usize,
    pub column: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Operand {
    Column(ColumnRef),
    Const(Value),
    /// Context parameter, e.g. `?MyUId`.
    Param(String),
    /// Template variable.
    Var(u32),
}

impl Operand {
    pub fn is_column(&self) -> bool {
        matches!(self, Operand::Column(_))
    }

    pub fn as_column(&self) -> Option<ColumnRef> {
        match self {
            Operand::Column(c) => Some(*c),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Predicate {
    True,
    False,
    And(Vec<Predicate>),
    Or(Vec<Predicate>),
    Cmp(CmpOp, Operand, Operand),
    In { operand: Operand, list: Vec<Operand>, negated: bool },
    IsNull { operand: Operand, negated: bool },
}

impl Predicate {
    /// Conjunction with flattening and constant folding.
    pub fn and(parts: Vec<Predicate>) -> Predicate {
        let mut out = Vec::new();
        for p in parts {
            match p {
                Predicate::True => {}
                Predicate::False => return Predicate::False,
                Predicate::And(inner) => out.extend(inner),
                p => out.push(p),
            }
        }
        match out.len() {
            0 => Predicate::True,
            1 => out.pop().unwrap(),
            _ => Predicate::And(out),
        }
    }

    /// Disjunction with flattening and constant folding.
    pub fn or(parts: Vec<Predicate>) -> Predicate {
        let mut out = Vec::new();
        for p in parts {
            match p {
                Predicate::False => {}
                Predicate::True => return Predicate::True,
                Predicate::Or(inner) => out.extend(inner),
                p => out.push(p),
            }
        }
        match out.len() {
            0 => Predicate::False,
            1 => out.pop().unwrap(),
            _ => Predicate::Or(out),
        }
    }

    /// Top-level conjuncts.
    pub fn conjuncts(&self) -> Vec<&Predicate> {
        match self {
            Predicate::True => vec![],
            Predicate::And(ps) => ps.iter().collect(),
            p => vec![p],
        }
    }

    pub fn for_each_operand<'a>(&'a self, f: &mut impl FnMut(&'a Operand)) {
        match self {
            Predicate::True | Predicate::False => {}
            Predicate::And(ps) | Predicate::Or(ps) => ps.iter().for_each(|p| p.for_each_operand(f)),
            Predicate::Cmp(_, a, b) => {
                f(a);
                f(b);
            }
            Predicate::In { operand, list, .. } => {
                f(operand);
                list.iter().for_each(&mut *f);
            }
            Predicate::IsNull { operand, .. } => f(operand),
        }
    }

    pub fn map_operands(&self, f: &mut impl FnMut(&Operand) -> Operand) -> Predicate {
        match self {
            Predicate::True => Predicate::True,
            Predicate::False => Predicate::False,
            Predicate::And(ps) => Predicate::And(ps.iter().map(|p| p.map_operands(f)).collect()),
            Predicate::Or(ps) => Predicate::Or(ps.iter().map(|p| p.map_operands(f)).collect()),
            Predicate::Cmp(op, a, b) => {
                let a = f(a);
                let b = f(b);
                Predicate::Cmp(*op, a, b)
            }
            Predicate::In { operand, list, negated } => {
                let operand = f(operand);
                let list = list.iter().map(&mut *f).collect();
                Predicate::In { operand, list, negated: *negated }
            }
            Predicate::IsNull { operand, negated } => {
                Predicate::IsNull { operand: f(operand), negated: *negated }
            }
        }
    }

    /// Whether any `NOT`-like construct occurs (`<>`, `NOT IN`, `IS NOT NULL`).
    pub fn has_negation(&self) -> bool {
        match self {
            Predicate::True | Predicate::False => false,
            Predicate::And(ps) | Predicate::Or(ps) => ps.iter().any(|p| p.has_negation()),
            Predicate::Cmp(op, _, _) => *op == CmpOp::Ne,
            Predicate::In { negated, .. } | Predicate::IsNull { negated, .. } => *negated,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct OutputColumn {
    pub name: String,
    pub operand: Operand,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SelectBlock {
    pub from: Vec<TableInstance>,
    pub projection: Vec<OutputColumn>,
    pub predicate: Predicate,
}

impl SelectBlock {
    pub fn for_each_operand<'a>(&'a self, f: &mut impl FnMut(&'a Operand)) {
        self.projection.iter().for_each(|c| f(&c.operand));
        self.predicate.for_each_operand(f);
    }

    pub fn map_operands(&self, f: &mut impl FnMut(&Operand) -> Operand) -> SelectBlock {
        SelectBlock {
            from: self.from.clone(),
            projection: self
                .projection
                .iter()
                .map(|c| OutputColumn { name: c.name.clone(), operand: f(&c.operand) })
                .collect(),
            predicate: self.predicate.map_operands(f),
        }
    }

    /// The schema type of a column reference in this block.
    pub fn column_type(&self, schema: &Schema, c: ColumnRef) -> ColumnType {
        let t = schema.table(&self.from[c.instance].table).expect("resolved table");
        t.columns[c.column].ty
    }

    pub fn column_name<'s>(&self, schema: &'s Schema, c: ColumnRef) -> &'s str {
        let t = schema.table(&self.from[c.instance].table).expect("resolved table");
        &t.columns[c.column].name
    }

    /// Whether the projection is exactly every column of every instance, in order.
    pub fn projects_all(&self, schema: &Schema) -> bool {
        let mut expected = Vec::new();
        for (i, inst) in self.from.iter().enumerate() {
            let t = schema.table(&inst.table).expect("resolved table");
            for (j, col) in t.columns.iter().enumerate() {
                expected.push((ColumnRef { instance: i, column: j }, &col.name));
            }
        }
        expected.len() == self.projection.len()
            && expected
                .iter()
                .zip(&self.projection)
                .all(|((r, name), o)| o.operand == Operand::Column(*r) && &o.name == *name)
    }
}

/// Why a query never returns duplicate rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Certificate {
    Distinct,
    Limit1,
    ProjectsKeys,
    KeyConstrainedWhere,
    UnionDedup,
    /// Only set-semantics membership is used (constraint sides, trace records,
    /// and query shapes loaded from trusted templates).
    SetSemantics,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BasicQuery {
    pub blocks: Vec<SelectBlock>,
    pub certificate: Certificate,
    /// Output column types; for NULL or placeholder outputs these come from context.
    pub column_types: Vec<ColumnType>,
}

impl BasicQuery {
    pub fn single(block: SelectBlock, certificate: Certificate, schema: &Schema) -> BasicQuery {
        let column_types = output_types(&block, schema);
        BasicQuery { blocks: vec![block], certificate, column_types }
    }

    pub fn arity(&self) -> usize {
        self.column_types.len()
    }

    pub fn for_each_operand<'a>(&'a self, f: &mut impl FnMut(&'a Operand)) {
        for b in &self.blocks {
            b.for_each_operand(f);
        }
    }

    pub fn map_operands(&self, f: &mut impl FnMut(&Operand) -> Operand) -> BasicQuery {
        BasicQuery {
            blocks: self.blocks.iter().map(|b| b.map_operands(f)).collect(),
            certificate: self.certificate,
            column_types: self.column_types.clone(),
        }
    }

    /// True if no parameters or template variables remain.
    pub fn is_closed(&self) -> bool {
        let mut closed = true;
        self.for_each_operand(&mut |o| {
            if matches!(o, Operand::Param(_) | Operand::Var(_)) {
                closed = false;
            }
        });
        closed
    }

    pub fn params(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.for_each_operand(&mut |o| {
            if let Operand::Param(p) = o {
                out.insert(p.clone());
            }
        });
        out
    }

    pub fn vars(&self) -> BTreeSet<u32> {
        let mut out = BTreeSet::new();
        self.for_each_operand(&mut |o| {
            if let Operand::Var(v) = o {
                out.insert(*v);
            }
        });
        out
    }

    /// Replaces context parameters by their values. Fails with the first unbound name.
    pub fn bind_params(&self, ctx: &BTreeMap<String, Value>) -> Result<BasicQuery, String> {
        let mut missing = None;
        let q = self.map_operands(&mut |o| match o {
            Operand::Param(p) => match ctx.get(p) {
                Some(v) => Operand::Const(v.clone()),
                None => {
                    missing.get_or_insert_with(|| p.clone());
                    o.clone()
                }
            },
            _ => o.clone(),
        });
        match missing {
            Some(p) => Err(p),
            None => Ok(q),
        }
    }

    /// Replaces template variables by values; unbound variables are left in place.
    pub fn bind_vars(&self, vals: &BTreeMap<u32, Value>) -> BasicQuery {
        self.map_operands(&mut |o| match o {
            Operand::Var(v) => vals.get(v).map(|c| Operand::Const(c.clone())).unwrap_or_else(|| o.clone()),
            _ => o.clone(),
        })
    }

    pub fn tables(&self) -> BTreeSet<String> {
        self.blocks.iter().flat_map(|b| b.from.iter().map(|i| i.table.clone())).collect()
    }

    /// Number of instances of `table` needed to produce one output row.
    pub fn instances_of(&self, table: &str) -> usize {
        self.blocks
            .iter()
            .map(|b| b.from.iter().filter(|i| i.table == table).count())
            .max()
            .unwrap_or(0)
    }
}

/// Output types of a block, using the other side of comparisons for placeholders.
pub fn output_types(block: &SelectBlock, schema: &Schema) -> Vec<ColumnType> {
    let types = operand_types(block, schema);
    block
        .projection
        .iter()
        .map(|c| match &c.operand {
            Operand::Column(r) => block.column_type(schema, *r),
            Operand::Const(v) => v.column_type().unwrap_or(ColumnType::Int),
            other => types.get(other).copied().unwrap_or(ColumnType::Int),
        })
        .collect()
}

/// Infers types of non-column operands from the columns they are compared with.
pub fn operand_types(block: &SelectBlock, schema: &Schema) -> BTreeMap<Operand, ColumnType> {
    fn visit(p: &Predicate, block: &SelectBlock, schema: &Schema, out: &mut BTreeMap<Operand, ColumnType>) {
        let ty_of = |o: &Operand, out: &BTreeMap<Operand, ColumnType>| match o {
            Operand::Column(r) => Some(block.column_type(schema, *r)),
            Operand::Const(v) if !v.is_null() => v.column_type(),
            other => out.get(other).copied(),
        };
        match p {
            Predicate::And(ps) | Predicate::Or(ps) => ps.iter().for_each(|q| visit(q, block, schema, out)),
            Predicate::Cmp(_, a, b) => {
                if let Some(t) = ty_of(a, out) {
                    if !b.is_column() && !matches!(b, Operand::Const(v) if !v.is_null()) {
                        out.entry(b.clone()).or_insert(t);
                    }
                }
                if let Some(t) = ty_of(b, out) {
                    if !a.is_column() && !matches!(a, Operand::Const(v) if !v.is_null()) {
                        out.entry(a.clone()).or_insert(t);
                    }
                }
            }
            Predicate::In { operand, list, .. } => {
                let t = ty_of(operand, out).or_else(|| list.iter().find_map(|l| ty_of(l, out)));
                if let Some(t) = t {
                    for o in std::iter::once(operand).chain(list) {
                        if !o.is_column() && !matches!(o, Operand::Const(v) if !v.is_null()) {
                            out.entry(o.clone()).or_insert(t);
                        }
                    }
                }
            }
            _ => {}
        }
    }
    let mut out = BTreeMap::new();
    // Two passes propagate through chains such as `?0 = ?1 AND ?1 = col`.
    for _ in 0..2 {
        visit(&block.predicate, block, schema, &mut out);
    }
    out
}
