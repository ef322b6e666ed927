//! Rewriting of practical queries into basic queries.

use std::collections::BTreeMap;

use super::ast::{JoinKind, QueryAst};
use super::basic::*;
use super::classify::certify;
use super::resolve::{ResolvedItem, ResolvedSelect, Resolver};
use super::{ParseMode, SqlError};
use crate::schema::Schema;
use crate::value::{ColumnType, Value};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RewriteResult {
    pub query: BasicQuery,
    /// True when `query` is equivalent to the input; false when it reveals at least as much.
    pub exact: bool,
    pub limit_dropped: bool,
    /// A query whose result contains every row the original returns, with the
    /// original arity; `None` when returned rows are not tuples of base data
    /// (aggregates).
    pub observed: Option<BasicQuery>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Classification {
    Basic(BasicQuery),
    NotBasic(String),
}

/// Certifies an already-basic query without rewriting it.
pub fn classify_basic(
    ast: &QueryAst,
    schema: &Schema,
    ctx_types: &BTreeMap<String, ColumnType>,
) -> Result<Classification, SqlError> {
    if !ast.order_by.is_empty() {
        return Ok(Classification::NotBasic("ORDER BY needs rewriting".into()));
    }
    if matches!(ast.limit, Some(k) if k != 1) {
        return Ok(Classification::NotBasic("LIMIT needs rewriting".into()));
    }
    let mut resolver = Resolver::new(schema, ctx_types, ParseMode::Application);
    let mut blocks = Vec::new();
    let mut distinct = false;
    for s in &ast.selects {
        let rs = resolver.resolve_select(s)?;
        if !rs.joins.is_empty() {
            return Ok(Classification::NotBasic("explicit JOIN needs rewriting".into()));
        }
        if rs.items.iter().any(|i| matches!(i, ResolvedItem::Sum(_))) {
            return Ok(Classification::NotBasic("aggregate needs rewriting".into()));
        }
        distinct = rs.distinct;
        blocks.push(plain_block(rs));
    }
    finish(blocks, schema, distinct, ast.limit == Some(1)).map(|r| match r {
        Ok(q) => Classification::Basic(q),
        Err(reason) => Classification::NotBasic(reason),
    })
}

fn plain_block(rs: ResolvedSelect) -> SelectBlock {
    SelectBlock {
        from: rs.from,
        projection: rs
            .items
            .into_iter()
            .map(|i| match i {
                ResolvedItem::Plain(c) | ResolvedItem::Sum(c) => c,
            })
            .collect(),
        predicate: rs.predicate,
    }
}

fn finish(
    blocks: Vec<SelectBlock>,
    schema: &Schema,
    distinct: bool,
    limit1: bool,
) -> Result<Result<BasicQuery, String>, SqlError> {
    let types: Vec<Vec<ColumnType>> = blocks.iter().map(|b| output_types(b, schema)).collect();
    if types.windows(2).any(|w| w[0] != w[1]) {
        return Err(SqlError::Type("UNION branches have different column types".into()));
    }
    if blocks.len() > 1 {
        return Ok(Ok(BasicQuery { blocks, certificate: Certificate::UnionDedup, column_types: types[0].clone() }));
    }
    let block = blocks.into_iter().next().expect("at least one block");
    Ok(match certify(&block, schema, distinct, limit1) {
        Some(certificate) => Ok(BasicQuery { column_types: types[0].clone(), blocks: vec![block], certificate }),
        None => Err("query may return duplicate rows".into()),
    })
}

/// Left join on a foreign key whose source columns are non-nullable: every row matches.
fn left_join_is_total(rs: &ResolvedSelect, instance: usize, on: &Predicate, schema: &Schema) -> bool {
    let mut pairs = Vec::new();
    for c in on.conjuncts() {
        let Predicate::Cmp(CmpOp::Eq, Operand::Column(a), Operand::Column(b)) = c else {
            return false;
        };
        let (outer, inner) = if b.instance == instance && a.instance != instance {
            (*a, *b)
        } else if a.instance == instance && b.instance != instance {
            (*b, *a)
        } else {
            return false;
        };
        pairs.push((outer, inner));
    }
    let Some(first) = pairs.first() else { return false };
    let outer_inst = first.0.instance;
    if pairs.iter().any(|(o, _)| o.instance != outer_inst) {
        return false;
    }
    let from_table = &rs.from[outer_inst].table;
    let to_table = &rs.from[instance].table;
    let from_def = schema.table(from_table).expect("resolved");
    schema.foreign_keys.iter().any(|fk| {
        &fk.from_table == from_table
            && &fk.to_table == to_table
            && fk.from_columns.len() == pairs.len()
            && fk.from_columns.iter().zip(&fk.to_columns).all(|(fc, tc)| {
                pairs.iter().any(|(o, i)| o.column == *fc && i.column == *tc)
            })
            && fk.from_columns.iter().all(|&c| !from_def.columns[c].nullable)
    })
}

/// Replaces every atom mentioning `instance` by its value when that instance's
/// columns are all NULL. Returns `None` if the predicate is not negation-free
/// or contains an atom that becomes true at NULL (`IS NULL`).
fn null_propagate(p: &Predicate, instance: usize) -> Option<Predicate> {
    let mentions = |o: &Operand| matches!(o, Operand::Column(c) if c.instance == instance);
    Some(match p {
        Predicate::True | Predicate::False => p.clone(),
        Predicate::And(ps) => Predicate::and(ps.iter().map(|q| null_propagate(q, instance)).collect::<Option<_>>()?),
        Predicate::Or(ps) => Predicate::or(ps.iter().map(|q| null_propagate(q, instance)).collect::<Option<_>>()?),
        Predicate::Cmp(op, a, b) => {
            if *op == CmpOp::Ne {
                return None;
            }
            if mentions(a) || mentions(b) {
                Predicate::False
            } else {
                p.clone()
            }
        }
        Predicate::In { operand, list, negated } => {
            if *negated {
                return None;
            }
            if mentions(operand) {
                Predicate::False
            } else {
                let kept: Vec<Operand> = list.iter().filter(|o| !mentions(o)).cloned().collect();
                if kept.is_empty() {
                    Predicate::False
                } else {
                    Predicate::In { operand: operand.clone(), list: kept, negated: false }
                }
            }
        }
        Predicate::IsNull { operand, negated } => {
            if *negated {
                return None;
            }
            if mentions(operand) {
                return None;
            }
            p.clone()
        }
    })
}

/// Rewrites a query to basic form. Rules apply in a fixed order: joins,
/// ORDER BY/LIMIT, aggregates, then the DISTINCT left join.
pub fn rewrite_to_basic(
    ast: &QueryAst,
    schema: &Schema,
    ctx_types: &BTreeMap<String, ColumnType>,
    mode: ParseMode,
) -> Result<RewriteResult, SqlError> {
    let mut resolver = Resolver::new(schema, ctx_types, mode);
    let mut exact = true;
    let mut selects = Vec::new();
    let mut pending_left = Vec::new();
    for s in &ast.selects {
        let mut rs = resolver.resolve_select(s)?;
        let mut left = Vec::new();
        let mut conj = vec![rs.predicate.clone()];
        for j in std::mem::take(&mut rs.joins) {
            match j.kind {
                JoinKind::Inner => conj.push(j.on),
                JoinKind::Left if left_join_is_total(&rs, j.instance, &j.on, schema) => conj.push(j.on),
                JoinKind::Left => left.push(j),
            }
        }
        rs.predicate = Predicate::and(conj);
        pending_left.push(left);
        selects.push(rs);
    }

    let original_arity: usize = selects[0].items.len();
    if !ast.order_by.is_empty() {
        if selects.len() == 1 {
            let rs = &mut selects[0];
            for c in &ast.order_by {
                let by_name = c.qualifier.is_none()
                    && rs.items.iter().any(|i| matches!(i, ResolvedItem::Plain(o) if o.name.eq_ignore_ascii_case(&c.name)));
                if by_name {
                    continue;
                }
                let r = resolver.column(c, &rs.from)?;
                let present = rs.items.iter().any(|i| matches!(i, ResolvedItem::Plain(o) if o.operand == Operand::Column(r)));
                if !present {
                    let name = schema.table(&rs.from[r.instance].table).expect("resolved").columns[r.column].name.clone();
                    rs.items.push(ResolvedItem::Plain(OutputColumn { name, operand: Operand::Column(r) }));
                    exact = false;
                }
            }
        } else {
            for c in &ast.order_by {
                let known = c.qualifier.is_none()
                    && selects[0].items.iter().any(|i| matches!(i, ResolvedItem::Plain(o) if o.name.eq_ignore_ascii_case(&c.name)));
                if !known {
                    return Err(SqlError::UnsupportedFeature(format!(
                        "ORDER BY {} does not name an output column of the UNION",
                        c.name
                    )));
                }
            }
        }
    }
    let limit_dropped = ast.limit.is_some();
    if limit_dropped {
        exact = false;
    }

    let mut aggregated = false;
    for rs in &mut selects {
        let sums: Vec<OutputColumn> = rs
            .items
            .iter()
            .filter_map(|i| match i {
                ResolvedItem::Sum(c) => Some(c.clone()),
                _ => None,
            })
            .collect();
        if sums.is_empty() {
            continue;
        }
        if sums.len() != rs.items.len() {
            return Err(SqlError::UnsupportedFeature("SUM mixed with plain columns without GROUP BY".into()));
        }
        let mut items = Vec::new();
        for (i, inst) in rs.from.iter().enumerate() {
            let t = schema.table(&inst.table).expect("resolved");
            for &c in &t.primary_key {
                items.push(OutputColumn {
                    name: t.columns[c].name.clone(),
                    operand: Operand::Column(ColumnRef { instance: i, column: c }),
                });
            }
        }
        for s in sums {
            if !items.iter().any(|o| o.operand == s.operand) {
                let r = s.operand.as_column().expect("SUM over a column");
                let name = schema.table(&rs.from[r.instance].table).expect("resolved").columns[r.column].name.clone();
                items.push(OutputColumn { name, operand: s.operand });
            }
        }
        rs.items = items.into_iter().map(ResolvedItem::Plain).collect();
        exact = false;
        aggregated = true;
    }

    let mut blocks: Vec<SelectBlock> = Vec::new();
    let mut distinct = false;
    for (rs, left) in selects.into_iter().zip(pending_left) {
        distinct = rs.distinct;
        if left.is_empty() {
            blocks.push(plain_block(rs));
            continue;
        }
        // SELECT DISTINCT A.* FROM A LEFT JOIN B ON C1 WHERE C2
        if !(ast.selects.len() == 1 && rs.distinct && rs.from.len() == 2 && left.len() == 1 && left[0].instance == 1) {
            return Err(SqlError::UnsupportedFeature("LEFT JOIN not on a non-nullable foreign key".into()));
        }
        let a_only = rs.items.iter().all(|i| matches!(i, ResolvedItem::Plain(o) if matches!(o.operand, Operand::Column(c) if c.instance == 0)));
        let a_cols = schema.table(&rs.from[0].table).expect("resolved").columns.len();
        if !a_only || rs.items.len() != a_cols {
            return Err(SqlError::UnsupportedFeature("LEFT JOIN must project exactly the left table".into()));
        }
        let join = &left[0];
        let c3 = null_propagate(&rs.predicate, 1).ok_or_else(|| {
            SqlError::UnsupportedFeature("LEFT JOIN with a WHERE clause that is not negation-free".into())
        })?;
        let projection: Vec<OutputColumn> = rs
            .items
            .iter()
            .map(|i| match i {
                ResolvedItem::Plain(o) | ResolvedItem::Sum(o) => o.clone(),
            })
            .collect();
        blocks.push(SelectBlock {
            from: rs.from.clone(),
            projection: projection.clone(),
            predicate: Predicate::and(vec![join.on.clone(), rs.predicate.clone()]),
        });
        blocks.push(SelectBlock { from: vec![rs.from[0].clone()], projection, predicate: c3 });
    }

    let query = match finish(blocks, schema, distinct, ast.limit == Some(1))? {
        Ok(q) => q,
        Err(reason) => return Err(SqlError::UnsupportedFeature(reason)),
    };
    let observed = if aggregated {
        None
    } else if query.arity() == original_arity {
        Some(query.clone())
    } else {
        let mut o = query.clone();
        for b in &mut o.blocks {
            b.projection.truncate(original_arity);
        }
        o.column_types.truncate(original_arity);
        o.certificate = Certificate::SetSemantics;
        Some(o)
    };
    Ok(RewriteResult { query, exact, limit_dropped, observed })
}

/// Sum of the last column over a rewritten aggregate result.
pub fn sum_last_column(rows: &std::collections::BTreeSet<Vec<Value>>) -> Option<i64> {
    let mut total = None;
    for r in rows {
        if let Some(Value::Int(v)) = r.last() {
            *total.get_or_insert(0) += v;
        }
    }
    total
}
