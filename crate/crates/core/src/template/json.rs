//! JSON form of decision templates, used for dumps and warm-start loads.

use std::collections::BTreeMap;

use serde_json::{json, Value as Json};

use super::atoms::CandidateAtom;
use super::param::{substitute, vars_in_order};
use super::DecisionTemplate;
use crate::schema::PolicyBundle;
use crate::smt::TraceItem;
use crate::sql::basic::Operand;
use crate::sql::{resolve_set_query, ParseMode};
use crate::value::{ColumnType, Value};

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("bad template JSON: {0}")]
pub struct TemplateJsonError(pub String);

fn err(m: impl Into<String>) -> TemplateJsonError {
    TemplateJsonError(m.into())
}

fn operand_json(t: &DecisionTemplate, o: &Operand) -> Json {
    match o {
        Operand::Var(k) => Json::String(t.var_name(*k)),
        Operand::Param(p) => Json::String(format!("?{p}")),
        Operand::Const(v) => json!({ "value": v.to_json() }),
        Operand::Column(_) => Json::Null,
    }
}

fn atom_json(t: &DecisionTemplate, a: &CandidateAtom) -> Json {
    let o = |x: &Operand| operand_json(t, x);
    match a {
        CandidateAtom::EqVars(x, y) if x == y => json!({ "kind": "not_null", "args": [o(x)] }),
        CandidateAtom::Eq(x, v) => json!({ "kind": "eq", "args": [o(x)], "value": v.to_json() }),
        CandidateAtom::IsNull(x) => json!({ "kind": "is_null", "args": [o(x)] }),
        CandidateAtom::EqVars(x, y) => json!({ "kind": "eq_vars", "args": [o(x), o(y)] }),
        CandidateAtom::Lt(x, y) => json!({ "kind": "lt", "args": [o(x), o(y)] }),
    }
}

pub fn to_json(t: &DecisionTemplate, policy: &PolicyBundle) -> Json {
    let schema = &policy.schema;
    let premise: Vec<Json> = t
        .premise
        .iter()
        .map(|e| {
            json!({
                "query": t.query_sql(&e.query, schema),
                "tuple": e.tuple.iter().map(|o| operand_json(t, o)).collect::<Vec<_>>(),
            })
        })
        .collect();
    json!({
        "format_version": FORMAT_VERSION,
        "query": t.query_sql(&t.query, schema),
        "premise": premise,
        "condition": t.condition.iter().map(|a| atom_json(t, a)).collect::<Vec<_>>(),
        "var_types": t.var_types.values().map(|ty| ty.name()).collect::<Vec<_>>(),
    })
}

fn parse_type(s: &str) -> Option<ColumnType> {
    ColumnType::ALL.into_iter().find(|t| t.name() == s)
}

struct Loader<'a> {
    policy: &'a PolicyBundle,
    next_wild: u32,
}

impl Loader<'_> {
    fn operand(&mut self, j: &Json) -> Result<Operand, TemplateJsonError> {
        if let Some(v) = j.get("value") {
            return Value::from_json(v).map(Operand::Const).ok_or_else(|| err("bad constant"));
        }
        let s = j.as_str().ok_or_else(|| err("operand must be a string"))?;
        if s == "*" {
            self.next_wild += 1;
            return Ok(Operand::Var(self.next_wild));
        }
        let name = s.strip_prefix('?').ok_or_else(|| err(format!("bad operand {s}")))?;
        if name.chars().all(|c| c.is_ascii_digit()) {
            return name.parse().map(Operand::Var).map_err(|_| err(format!("bad variable {s}")));
        }
        if !self.policy.context_types().contains_key(name) {
            return Err(err(format!("unknown context parameter {s}")));
        }
        Ok(Operand::Param(name.to_string()))
    }

    /// Parses template SQL; each `*` becomes a variable of its own.
    fn query(&mut self, j: &Json) -> Result<crate::sql::BasicQuery, TemplateJsonError> {
        let sql = j.as_str().ok_or_else(|| err("query must be SQL text"))?;
        let q = resolve_set_query(sql, &self.policy.schema, &self.policy.context_types(), ParseMode::Template)
            .map_err(|e| err(format!("{sql}: {e}")))?;
        Ok(q.map_operands(&mut |o| match o {
            Operand::Var(k) if *k >= 1 << 20 => {
                self.next_wild += 1;
                Operand::Var(self.next_wild)
            }
            o => o.clone(),
        }))
    }
}

pub fn from_json(j: &Json, policy: &PolicyBundle) -> Result<DecisionTemplate, TemplateJsonError> {
    if j.get("format_version").and_then(Json::as_u64) != Some(FORMAT_VERSION) {
        return Err(err("unsupported format_version"));
    }
    let mut l = Loader { policy, next_wild: 2 << 20 };
    let mut premise = Vec::new();
    for e in j.get("premise").and_then(Json::as_array).ok_or_else(|| err("premise"))? {
        let query = l.query(e.get("query").ok_or_else(|| err("premise query"))?)?;
        let tuple = e
            .get("tuple")
            .and_then(Json::as_array)
            .ok_or_else(|| err("premise tuple"))?
            .iter()
            .map(|o| l.operand(o))
            .collect::<Result<Vec<_>, _>>()?;
        if tuple.len() != query.arity() {
            return Err(err("premise tuple arity"));
        }
        premise.push(TraceItem { query, tuple });
    }
    let query = l.query(j.get("query").ok_or_else(|| err("query"))?)?;
    let order = vars_in_order(&query, &premise);
    let renumber: BTreeMap<Operand, Operand> =
        order.iter().enumerate().map(|(i, &k)| (Operand::Var(k), Operand::Var(i as u32))).collect();
    let (query, premise) = substitute(&query, &premise, &renumber);
    let types: Vec<ColumnType> = j
        .get("var_types")
        .and_then(Json::as_array)
        .ok_or_else(|| err("var_types"))?
        .iter()
        .map(|t| t.as_str().and_then(parse_type).ok_or_else(|| err("bad type")))
        .collect::<Result<_, _>>()?;
    if types.len() != order.len() {
        return Err(err("var_types length"));
    }
    let var_types: BTreeMap<u32, ColumnType> = types.into_iter().enumerate().map(|(i, t)| (i as u32, t)).collect();
    let ctx_types = policy.context_types();
    let type_of = |o: &Operand| match o {
        Operand::Var(k) => var_types.get(k).copied(),
        Operand::Param(p) => ctx_types.get(p).copied(),
        _ => None,
    };
    let mut condition = Vec::new();
    for a in j.get("condition").and_then(Json::as_array).ok_or_else(|| err("condition"))? {
        let kind = a.get("kind").and_then(Json::as_str).ok_or_else(|| err("atom kind"))?;
        let args = a
            .get("args")
            .and_then(Json::as_array)
            .ok_or_else(|| err("atom args"))?
            .iter()
            .map(|o| l.operand(o).map(|o| renumber.get(&o).cloned().unwrap_or(o)))
            .collect::<Result<Vec<_>, _>>()?;
        let atom = match (kind, args.as_slice()) {
            ("not_null", [x]) => CandidateAtom::EqVars(x.clone(), x.clone()),
            ("is_null", [x]) => CandidateAtom::IsNull(x.clone()),
            ("eq_vars", [x, y]) => CandidateAtom::EqVars(x.clone(), y.clone()),
            ("lt", [x, y]) => CandidateAtom::Lt(x.clone(), y.clone()),
            ("eq", [x]) => {
                let ty = type_of(x).ok_or_else(|| err("untyped atom operand"))?;
                let v = a.get("value").and_then(Value::from_json).ok_or_else(|| err("atom value"))?;
                CandidateAtom::Eq(x.clone(), v.coerce(ty).map_err(|e| err(e.to_string()))?)
            }
            _ => return Err(err(format!("bad atom {a}"))),
        };
        if atom.operands().iter().any(|o| type_of(o).is_none()) {
            return Err(err("atom mentions an unknown variable"));
        }
        condition.push(atom);
    }
    Ok(DecisionTemplate { query, premise, condition, var_types })
}
