//! Candidate atoms over template variables.

use std::collections::BTreeMap;
use std::fmt;

use crate::sql::basic::Operand;
use crate::value::{ColumnType, Value};

/// A condition atom. Operands are template variables (`Var`) or context
/// parameters (`Param`).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CandidateAtom {
    /// `x = v`, implying `x` is not NULL.
    Eq(Operand, Value),
    IsNull(Operand),
    /// `x = x'`, implying both are not NULL.
    EqVars(Operand, Operand),
    Lt(Operand, Operand),
}

pub fn var_label(o: &Operand) -> String {
    match o {
        Operand::Param(p) => p.clone(),
        Operand::Var(k) => format!("x{k}"),
        Operand::Const(v) => v.to_sql(),
        Operand::Column(c) => format!("#{}.{}", c.instance, c.column),
    }
}

impl fmt::Display for CandidateAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CandidateAtom::Eq(x, v) => write!(f, "{} = {}", var_label(x), v.to_sql()),
            CandidateAtom::IsNull(x) => write!(f, "{} IS NULL", var_label(x)),
            CandidateAtom::EqVars(x, y) => write!(f, "{} = {}", var_label(x), var_label(y)),
            CandidateAtom::Lt(x, y) => write!(f, "{} < {}", var_label(x), var_label(y)),
        }
    }
}

impl CandidateAtom {
    pub fn operands(&self) -> Vec<&Operand> {
        match self {
            CandidateAtom::Eq(x, _) | CandidateAtom::IsNull(x) => vec![x],
            CandidateAtom::EqVars(x, y) | CandidateAtom::Lt(x, y) => vec![x, y],
        }
    }

    /// Whether the atom holds when every operand takes its value under `nu`.
    pub fn holds(&self, nu: &dyn Fn(&Operand) -> Option<Value>) -> bool {
        let val = |o: &Operand| match o {
            Operand::Const(v) => Some(v.clone()),
            o => nu(o),
        };
        match self {
            CandidateAtom::Eq(x, v) => val(x).is_some_and(|a| !a.is_null() && a == *v),
            CandidateAtom::IsNull(x) => val(x).is_some_and(|a| a.is_null()),
            CandidateAtom::EqVars(x, y) => match (val(x), val(y)) {
                (Some(a), Some(b)) => !a.is_null() && a == b,
                _ => false,
            },
            CandidateAtom::Lt(x, y) => match (val(x), val(y)) {
                (Some(a), Some(b)) => a.sql_lt(&b),
                _ => false,
            },
        }
    }

    pub fn map_operands(&self, f: &mut impl FnMut(&Operand) -> Operand) -> CandidateAtom {
        match self {
            CandidateAtom::Eq(x, v) => CandidateAtom::Eq(f(x), v.clone()),
            CandidateAtom::IsNull(x) => CandidateAtom::IsNull(f(x)),
            CandidateAtom::EqVars(x, y) => CandidateAtom::EqVars(f(x), f(y)),
            CandidateAtom::Lt(x, y) => CandidateAtom::Lt(f(x), f(y)),
        }
    }
}

/// Builds the candidate atom set for a valuation. The input lists variables in
/// a fixed order; `x = x'` and `x < x'` pairs follow that order.
pub fn candidate_atoms(nu: &[(Operand, Value)], types: &BTreeMap<Operand, ColumnType>) -> Vec<CandidateAtom> {
    let mut out = Vec::new();
    for (x, v) in nu {
        if v.is_null() {
            out.push(CandidateAtom::IsNull(x.clone()));
        } else {
            out.push(CandidateAtom::Eq(x.clone(), v.clone()));
        }
    }
    let same_type = |a: &Operand, b: &Operand| types.get(a).is_some() && types.get(a) == types.get(b);
    for (i, (x, v)) in nu.iter().enumerate() {
        for (y, w) in &nu[i + 1..] {
            if !v.is_null() && v == w && same_type(x, y) {
                out.push(CandidateAtom::EqVars(x.clone(), y.clone()));
            }
        }
    }
    for (x, v) in nu {
        for (y, w) in nu {
            let ordered = types.get(x).is_some_and(|t| t.is_ordered());
            if ordered && same_type(x, y) && v.sql_lt(w) {
                out.push(CandidateAtom::Lt(x.clone(), y.clone()));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atoms_hold_under_valuation() {
        let nu = vec![
            (Operand::Param("U".into()), Value::Int(1)),
            (Operand::Var(0), Value::Int(1)),
            (Operand::Var(1), Value::Str("a".into())),
            (Operand::Var(2), Value::Null),
            (Operand::Var(3), Value::Int(4)),
        ];
        let types: BTreeMap<Operand, ColumnType> = [
            (Operand::Param("U".into()), ColumnType::Int),
            (Operand::Var(0), ColumnType::Int),
            (Operand::Var(1), ColumnType::String),
            (Operand::Var(2), ColumnType::Int),
            (Operand::Var(3), ColumnType::Int),
        ]
        .into_iter()
        .collect();
        let atoms = candidate_atoms(&nu, &types);
        let lookup = |o: &Operand| nu.iter().find(|(x, _)| x == o).map(|(_, v)| v.clone());
        assert!(atoms.iter().all(|a| a.holds(&lookup)));
        assert!(atoms.contains(&CandidateAtom::IsNull(Operand::Var(2))));
        assert!(atoms.contains(&CandidateAtom::EqVars(Operand::Param("U".into()), Operand::Var(0))));
        assert_eq!(atoms.iter().filter(|a| matches!(a, CandidateAtom::Lt(..))).count(), 2);
    }
}
