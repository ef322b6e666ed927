//! Duplicate-freeness certification of SELECT blocks.

use std::collections::BTreeSet;

use super::basic::*;
use crate::schema::Schema;

/// Every instance has a non-nullable key whose columns are all projected.
pub fn projects_keys(block: &SelectBlock, schema: &Schema) -> bool {
    let projected: BTreeSet<ColumnRef> = block.projection.iter().filter_map(|c| c.operand.as_column()).collect();
    block.from.iter().enumerate().all(|(i, inst)| {
        let t = schema.table(&inst.table).expect("resolved");
        t.strict_keys()
            .any(|k| k.iter().all(|&c| projected.contains(&ColumnRef { instance: i, column: c })))
    })
}

/// Every instance's row is pinned down by a key whose columns are fixed by the
/// output row, directly or through top-level equality conjuncts.
pub fn key_constrained_where(block: &SelectBlock, schema: &Schema) -> bool {
    let mut fixed: BTreeSet<ColumnRef> = block.projection.iter().filter_map(|c| c.operand.as_column()).collect();
    let mut col_eqs = Vec::new();
    for p in block.predicate.conjuncts() {
        match p {
            Predicate::Cmp(CmpOp::Eq, Operand::Column(a), Operand::Column(b)) => col_eqs.push((*a, *b)),
            Predicate::Cmp(CmpOp::Eq, Operand::Column(a), _) | Predicate::Cmp(CmpOp::Eq, _, Operand::Column(a)) => {
                fixed.insert(*a);
            }
            Predicate::In { operand: Operand::Column(a), list, negated: false }
                if list.len() == 1 && !list[0].is_column() =>
            {
                fixed.insert(*a);
            }
            _ => {}
        }
    }
    let mut whole: BTreeSet<usize> = BTreeSet::new();
    loop {
        let before = (fixed.len(), whole.len());
        for &(a, b) in &col_eqs {
            if fixed.contains(&a) {
                fixed.insert(b);
            }
            if fixed.contains(&b) {
                fixed.insert(a);
            }
        }
        for (i, inst) in block.from.iter().enumerate() {
            if whole.contains(&i) {
                continue;
            }
            let t = schema.table(&inst.table).expect("resolved");
            if t.strict_keys().any(|k| k.iter().all(|&c| fixed.contains(&ColumnRef { instance: i, column: c }))) {
                whole.insert(i);
                for c in 0..t.columns.len() {
                    fixed.insert(ColumnRef { instance: i, column: c });
                }
            }
        }
        if (fixed.len(), whole.len()) == before {
            break;
        }
    }
    whole.len() == block.from.len()
}

/// The first applicable certificate, in the fixed order
/// Distinct, Limit1, ProjectsKeys, KeyConstrainedWhere.
pub fn certify(block: &SelectBlock, schema: &Schema, distinct: bool, limit1: bool) -> Option<Certificate> {
    if distinct {
        Some(Certificate::Distinct)
    } else if limit1 {
        Some(Certificate::Limit1)
    } else if projects_keys(block, schema) {
        Some(Certificate::ProjectsKeys)
    } else if key_constrained_where(block, schema) {
        Some(Certificate::KeyConstrainedWhere)
    } else {
        None
    }
}
