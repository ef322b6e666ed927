//! Name resolution and type checking of parsed SELECT blocks.

use std::collections::BTreeMap;

use super::ast::*;
use super::basic::*;
use super::{ParseMode, SqlError};
use crate::schema::Schema;
use crate::value::{ColumnType, Value};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ResolvedItem {
    Plain(OutputColumn),
    Sum(OutputColumn),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResolvedJoin {
    pub kind: JoinKind,
    /// Index of the joined instance in `from`.
    pub instance: usize,
    pub on: Predicate,
}

/// A SELECT block with names resolved but joins and aggregates not yet rewritten.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResolvedSelect {
    pub distinct: bool,
    pub from: Vec<TableInstance>,
    pub items: Vec<ResolvedItem>,
    pub predicate: Predicate,
    pub joins: Vec<ResolvedJoin>,
}

pub struct Resolver<'a> {
    pub schema: &'a Schema,
    pub ctx_types: &'a BTreeMap<String, ColumnType>,
    pub mode: ParseMode,
    /// Identifier handed to the next `*` operand in template SQL.
    pub next_wildcard: u32,
}

fn res_err(msg: String) -> SqlError {
    SqlError::Resolution(msg)
}

impl<'a> Resolver<'a> {
    pub fn new(schema: &'a Schema, ctx_types: &'a BTreeMap<String, ColumnType>, mode: ParseMode) -> Self {
        Resolver { schema, ctx_types, mode, next_wildcard: 1 << 20 }
    }

    pub fn resolve_select(&mut self, s: &SelectAst) -> Result<ResolvedSelect, SqlError> {
        let mut from: Vec<TableInstance> = Vec::new();
        let mut pending_joins = Vec::new();
        for item in &s.from {
            self.push_instance(&mut from, &item.base)?;
            for j in &item.joins {
                self.push_instance(&mut from, &j.table)?;
                pending_joins.push((j.kind, from.len() - 1, &j.on));
            }
        }
        let mut joins = Vec::new();
        for (kind, instance, on) in pending_joins {
            let on = self.predicate(on, &from)?;
            joins.push(ResolvedJoin { kind, instance, on });
        }
        let mut distinct = s.distinct;
        let mut extra = Vec::new();
        let outer = from.len();
        let predicate = match &s.where_clause {
            None => Predicate::True,
            Some(e) => {
                let top: Vec<&Expr> = match e {
                    Expr::And(parts) => parts.iter().collect(),
                    e => vec![e],
                };
                let mut parts = Vec::new();
                for e in top {
                    match e {
                        Expr::InSubquery { operand, query, negated: false } if self.mode == ParseMode::View => {
                            parts.push(self.flatten_in_subquery(operand, query, &mut from, &mut extra)?);
                            distinct = true;
                        }
                        e => parts.push(self.predicate(e, &from[..outer])?),
                    }
                }
                Predicate::and(parts)
            }
        };
        let predicate = Predicate::and(std::iter::once(predicate).chain(extra).collect());
        let mut items = Vec::new();
        // Only instances named in the original FROM are visible to `*`.
        let visible: usize = s.from.iter().map(|f| 1 + f.joins.len()).sum();
        for it in &s.items {
            match it {
                SelectItem::Star => {
                    for i in 0..visible {
                        items.extend(self.all_columns(&from, i).into_iter().map(ResolvedItem::Plain));
                    }
                }
                SelectItem::QualifiedStar(q) => {
                    let i = find_instance(&from[..visible], q)?;
                    items.extend(self.all_columns(&from, i).into_iter().map(ResolvedItem::Plain));
                }
                SelectItem::Operand { operand, alias } => {
                    let op = self.operand(operand, &from)?;
                    let name = match (&op, alias) {
                        (_, Some(a)) => a.clone(),
                        (Operand::Column(r), None) => self.col_name(&from, *r).to_string(),
                        _ => "?column?".to_string(),
                    };
                    items.push(ResolvedItem::Plain(OutputColumn { name, operand: op }));
                }
                SelectItem::Sum { column, alias } => {
                    let r = self.column(column, &from)?;
                    let ty = self.col_type(&from, r);
                    if ty != ColumnType::Int {
                        return Err(SqlError::Type(format!("SUM over non-integer column {}", column.name)));
                    }
                    let name = alias.clone().unwrap_or_else(|| format!("SUM({})", column.name));
                    items.push(ResolvedItem::Sum(OutputColumn { name, operand: Operand::Column(r) }));
                }
            }
        }
        Ok(ResolvedSelect { distinct, from, items, predicate, joins })
    }

    fn push_instance(&self, from: &mut Vec<TableInstance>, t: &TableRef) -> Result<(), SqlError> {
        let def = self
            .schema
            .table(&t.name)
            .ok_or_else(|| res_err(format!("unknown table {}", t.name)))?;
        let alias = t.alias.clone().unwrap_or_else(|| def.name.clone());
        if from.iter().any(|i| i.alias.eq_ignore_ascii_case(&alias)) {
            return Err(res_err(format!("duplicate table alias {alias}")));
        }
        from.push(TableInstance { table: def.name.clone(), alias });
        Ok(())
    }

    /// `x IN (SELECT y FROM ... WHERE p)` as a top-level conjunct becomes a join.
    fn flatten_in_subquery(
        &mut self,
        operand: &AstOperand,
        query: &QueryAst,
        from: &mut Vec<TableInstance>,
        extra: &mut Vec<Predicate>,
    ) -> Result<Predicate, SqlError> {
        if query.selects.len() != 1 || query.limit.is_some() {
            return Err(SqlError::UnsupportedFeature("IN subquery must be a single SELECT without LIMIT".into()));
        }
        let inner = self.resolve_select(&query.selects[0])?;
        if !inner.joins.is_empty() && inner.joins.iter().any(|j| j.kind == JoinKind::Left) {
            return Err(SqlError::UnsupportedFeature("LEFT JOIN inside IN subquery".into()));
        }
        let [ResolvedItem::Plain(out)] = inner.items.as_slice() else {
            return Err(SqlError::UnsupportedFeature("IN subquery must select exactly one column".into()));
        };
        let offset = from.len();
        let lhs = self.operand(operand, from)?;
        for inst in &inner.from {
            let mut alias = inst.alias.clone();
            let mut n = 1;
            while from.iter().any(|i| i.alias.eq_ignore_ascii_case(&alias)) {
                alias = format!("{}_{n}", inst.alias);
                n += 1;
            }
            from.push(TableInstance { table: inst.table.clone(), alias });
        }
        let shift = |o: &Operand| match o {
            Operand::Column(r) => Operand::Column(ColumnRef { instance: r.instance + offset, column: r.column }),
            o => o.clone(),
        };
        let mut shift_mut = shift;
        extra.push(inner.predicate.map_operands(&mut shift_mut));
        for j in &inner.joins {
            extra.push(j.on.map_operands(&mut shift_mut));
        }
        let rhs = shift_mut(&out.operand);
        self.typed_cmp(CmpOp::Eq, lhs, rhs, from)
    }

    fn all_columns(&self, from: &[TableInstance], i: usize) -> Vec<OutputColumn> {
        let t = self.schema.table(&from[i].table).expect("resolved");
        t.columns
            .iter()
            .enumerate()
            .map(|(j, c)| OutputColumn {
                name: c.name.clone(),
                operand: Operand::Column(ColumnRef { instance: i, column: j }),
            })
            .collect()
    }

    fn col_type(&self, from: &[TableInstance], r: ColumnRef) -> ColumnType {
        self.schema.table(&from[r.instance].table).expect("resolved").columns[r.column].ty
    }

    fn col_name<'s>(&'s self, from: &[TableInstance], r: ColumnRef) -> &'s str {
        &self.schema.table(&from[r.instance].table).expect("resolved").columns[r.column].name
    }

    pub fn column(&self, c: &ColumnName, from: &[TableInstance]) -> Result<ColumnRef, SqlError> {
        match &c.qualifier {
            Some(q) => {
                let i = find_instance(from, q)?;
                let t = self.schema.table(&from[i].table).expect("resolved");
                let j = t
                    .column_index(&c.name)
                    .ok_or_else(|| res_err(format!("unknown column {q}.{}", c.name)))?;
                Ok(ColumnRef { instance: i, column: j })
            }
            None => {
                let mut found = None;
                for (i, inst) in from.iter().enumerate() {
                    let t = self.schema.table(&inst.table).expect("resolved");
                    if let Some(j) = t.column_index(&c.name) {
                        if found.is_some() {
                            return Err(res_err(format!("ambiguous column {}", c.name)));
                        }
                        found = Some(ColumnRef { instance: i, column: j });
                    }
                }
                found.ok_or_else(|| res_err(format!("unknown column {}", c.name)))
            }
        }
    }

    fn operand(&mut self, o: &AstOperand, from: &[TableInstance]) -> Result<Operand, SqlError> {
        match o {
            AstOperand::Column(c) => self.column(c, from).map(Operand::Column),
            AstOperand::Literal(v) => Ok(Operand::Const(v.clone())),
            AstOperand::Param(p) => {
                if !self.ctx_types.contains_key(p) {
                    return Err(res_err(format!("unknown context parameter ?{p}")));
                }
                Ok(Operand::Param(p.clone()))
            }
            AstOperand::Var(k) => Ok(Operand::Var(*k)),
            AstOperand::Wildcard => {
                let v = self.next_wildcard;
                self.next_wildcard += 1;
                Ok(Operand::Var(v))
            }
        }
    }

    fn static_type(&self, o: &Operand, from: &[TableInstance]) -> Option<ColumnType> {
        match o {
            Operand::Column(r) => Some(self.col_type(from, *r)),
            Operand::Param(p) => self.ctx_types.get(p).copied(),
            Operand::Const(v) => v.column_type(),
            Operand::Var(_) => None,
        }
    }

    fn coerce_to(&self, o: Operand, ty: ColumnType) -> Result<Operand, SqlError> {
        match o {
            Operand::Const(v) => v
                .coerce(ty)
                .map(Operand::Const)
                .map_err(|e| SqlError::Type(e.to_string())),
            o => Ok(o),
        }
    }

    /// Type-checks `a op b`, coercing literals toward the column side.
    fn typed_cmp(&self, op: CmpOp, a: Operand, b: Operand, from: &[TableInstance]) -> Result<Predicate, SqlError> {
        let anchor = [&a, &b]
            .into_iter()
            .find(|o| matches!(o, Operand::Column(_) | Operand::Param(_)))
            .and_then(|o| self.static_type(o, from));
        let (a, b) = match anchor {
            Some(ty) => (self.coerce_to(a, ty)?, self.coerce_to(b, ty)?),
            None => (a, b),
        };
        if let (Some(ta), Some(tb)) = (self.static_type(&a, from), self.static_type(&b, from)) {
            if ta != tb {
                return Err(SqlError::Type(format!("cannot compare {ta} with {tb}")));
            }
        }
        Ok(Predicate::Cmp(op, a, b))
    }

    pub fn predicate(&mut self, e: &Expr, from: &[TableInstance]) -> Result<Predicate, SqlError> {
        match e {
            Expr::And(ps) => {
                let parts = ps.iter().map(|p| self.predicate(p, from)).collect::<Result<Vec<_>, _>>()?;
                Ok(Predicate::and(parts))
            }
            Expr::Or(ps) => {
                let parts = ps.iter().map(|p| self.predicate(p, from)).collect::<Result<Vec<_>, _>>()?;
                Ok(Predicate::or(parts))
            }
            Expr::Const(true) => Ok(Predicate::True),
            Expr::Const(false) => Ok(Predicate::False),
            Expr::Cmp(op, a, b) => {
                let a = self.operand(a, from)?;
                let b = self.operand(b, from)?;
                self.typed_cmp(*op, a, b, from)
            }
            Expr::Truth(o) => {
                let o = self.operand(o, from)?;
                match self.static_type(&o, from) {
                    Some(ColumnType::Bool) | None => {
                        Ok(Predicate::Cmp(CmpOp::Eq, o, Operand::Const(Value::Bool(true))))
                    }
                    Some(t) => Err(SqlError::Type(format!("{t} operand used as a condition"))),
                }
            }
            Expr::IsNull { operand, negated } => {
                let operand = self.operand(operand, from)?;
                Ok(Predicate::IsNull { operand, negated: *negated })
            }
            Expr::InList { operand, list, negated } => {
                let operand = self.operand(operand, from)?;
                let list = list.iter().map(|o| self.operand(o, from)).collect::<Result<Vec<_>, _>>()?;
                let ty = self
                    .static_type(&operand, from)
                    .filter(|_| matches!(operand, Operand::Column(_) | Operand::Param(_)))
                    .or_else(|| {
                        list.iter()
                            .find(|o| matches!(o, Operand::Column(_) | Operand::Param(_)))
                            .and_then(|o| self.static_type(o, from))
                    });
                let (operand, list) = match ty {
                    Some(ty) => (
                        self.coerce_to(operand, ty)?,
                        list.into_iter().map(|o| self.coerce_to(o, ty)).collect::<Result<Vec<_>, _>>()?,
                    ),
                    None => (operand, list),
                };
                if let Some(ty) = ty {
                    for o in std::iter::once(&operand).chain(&list) {
                        if let Some(t) = self.static_type(o, from) {
                            if t != ty {
                                return Err(SqlError::Type(format!("IN list mixes {ty} and {t}")));
                            }
                        }
                    }
                }
                Ok(Predicate::In { operand, list, negated: *negated })
            }
            Expr::InSubquery { .. } => Err(SqlError::UnsupportedFeature(
                "IN subquery is only supported as a top-level conjunct of a view".into(),
            )),
        }
    }
}

pub fn find_instance(from: &[TableInstance], q: &str) -> Result<usize, SqlError> {
    from.iter()
        .position(|i| i.alias.eq_ignore_ascii_case(q))
        .or_else(|| from.iter().position(|i| i.table.eq_ignore_ascii_case(q)))
        .ok_or_else(|| res_err(format!("unknown table or alias {q}")))
}
