use super::basic::*;
use super::SqlError;

/// Splits a query on its first top-level `IN` list into one query per element.
pub fn split_in(q: &BasicQuery) -> Result<Vec<BasicQuery>, SqlError> {
    if q.blocks.len() != 1 {
        return Err(SqlError::NotSplittable("UNION queries are checked whole".into()));
    }
    let block = &q.blocks[0];
    if block.predicate.has_negation() {
        return Err(SqlError::NotSplittable("query contains a negation".into()));
    }
    let conjuncts = block.predicate.conjuncts();
    let pos = conjuncts
        .iter()
        .position(|p| matches!(p, Predicate::In { negated: false, .. }))
        .ok_or_else(|| SqlError::NotSplittable("no top-level IN list".into()))?;
    let Predicate::In { operand, list, .. } = conjuncts[pos] else { unreachable!() };
    Ok(list
        .iter()
        .map(|item| {
            let parts: Vec<Predicate> = conjuncts
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    if i == pos {
                        Predicate::Cmp(CmpOp::Eq, operand.clone(), item.clone())
                    } else {
                        (*p).clone()
                    }
                })
                .collect();
            BasicQuery {
                blocks: vec![SelectBlock {
                    from: block.from.clone(),
                    projection: block.projection.clone(),
                    predicate: Predicate::and(parts),
                }],
                certificate: q.certificate,
                column_types: q.column_types.clone(),
            }
        })
        .collect())
}
