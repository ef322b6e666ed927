//! First-order formulas over uninterpreted sorts, rendered as SMT-LIB and
//! evaluable on finite structures.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write;

use crate::value::{ColumnType, Value};

pub type Sort = ColumnType;

pub fn sort_name(s: Sort) -> &'static str {
    match s {
        ColumnType::Int => "SInt",
        ColumnType::String => "SStr",
        ColumnType::Bool => "SBool",
        ColumnType::Timestamp => "STime",
    }
}

pub fn null_name(s: Sort) -> String {
    format!("null_{}", sort_name(s))
}

pub fn lt_name(s: Sort) -> String {
    format!("lt_{}", sort_name(s))
}

/// Symbol naming a non-null literal.
pub fn literal_name(v: &Value) -> String {
    let num = |n: i64| if n < 0 { format!("m{}", n.unsigned_abs()) } else { n.to_string() };
    match v {
        Value::Null => unreachable!("NULL is a per-sort constant"),
        Value::Int(i) => format!("int_{}", num(*i)),
        Value::Time(t) => format!("ts_{}", num(*t)),
        Value::Bool(b) => format!("bool_{b}"),
        Value::Str(s) => {
            let mut out = String::from("str_");
            for b in s.bytes() {
                let _ = write!(out, "{b:02x}");
            }
            out
        }
    }
}

/// Terms are constant or variable symbols.
pub type Term = String;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Formula {
    True,
    False,
    Eq(Term, Term),
    Lt(Sort, Term, Term),
    Rel(String, Vec<Term>),
    BoolConst(String),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Distinct(Vec<Term>),
    Forall(Vec<(Term, Sort)>, Box<Formula>),
    Exists(Vec<(Term, Sort)>, Box<Formula>),
}

impl Formula {
    pub fn eq(a: impl Into<Term>, b: impl Into<Term>) -> Formula {
        let (a, b) = (a.into(), b.into());
        if a == b {
            Formula::True
        } else {
            Formula::Eq(a, b)
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Formula {
        match f {
            Formula::True => Formula::False,
            Formula::False => Formula::True,
            Formula::Not(g) => *g,
            f => Formula::Not(Box::new(f)),
        }
    }

    pub fn and(parts: impl IntoIterator<Item = Formula>) -> Formula {
        let mut out = Vec::new();
        for p in parts {
            match p {
                Formula::True => {}
                Formula::False => return Formula::False,
                Formula::And(ps) => out.extend(ps),
                p => out.push(p),
            }
        }
        match out.len() {
            0 => Formula::True,
            1 => out.pop().unwrap(),
            _ => Formula::And(out),
        }
    }

    pub fn or(parts: impl IntoIterator<Item = Formula>) -> Formula {
        let mut out = Vec::new();
        for p in parts {
            match p {
                Formula::False => {}
                Formula::True => return Formula::True,
                Formula::Or(ps) => out.extend(ps),
                p => out.push(p),
            }
        }
        match out.len() {
            0 => Formula::False,
            1 => out.pop().unwrap(),
            _ => Formula::Or(out),
        }
    }

    pub fn implies(a: Formula, b: Formula) -> Formula {
        match (a, b) {
            (Formula::False, _) | (_, Formula::True) => Formula::True,
            (Formula::True, b) => b,
            (a, Formula::False) => Formula::not(a),
            (a, b) => Formula::Implies(Box::new(a), Box::new(b)),
        }
    }

    pub fn forall(vars: Vec<(Term, Sort)>, body: Formula) -> Formula {
        match body {
            Formula::True | Formula::False => body,
            body if vars.is_empty() => body,
            body => Formula::Forall(vars, Box::new(body)),
        }
    }

    pub fn exists(vars: Vec<(Term, Sort)>, body: Formula) -> Formula {
        match body {
            Formula::True | Formula::False => body,
            body if vars.is_empty() => body,
            body => Formula::Exists(vars, Box::new(body)),
        }
    }

    pub fn is_quantifier_free(&self) -> bool {
        match self {
            Formula::Forall(..) | Formula::Exists(..) => false,
            Formula::Not(f) => f.is_quantifier_free(),
            Formula::And(ps) | Formula::Or(ps) => ps.iter().all(Formula::is_quantifier_free),
            Formula::Implies(a, b) => a.is_quantifier_free() && b.is_quantifier_free(),
            _ => true,
        }
    }

    /// Replaces free occurrences of term symbols.
    pub fn substitute(&self, map: &HashMap<Term, Term>) -> Formula {
        let s = |t: &Term| map.get(t).cloned().unwrap_or_else(|| t.clone());
        let bound_filter = |vars: &[(Term, Sort)]| -> HashMap<Term, Term> {
            let mut m = map.clone();
            for (v, _) in vars {
                m.remove(v);
            }
            m
        };
        match self {
            Formula::True | Formula::False | Formula::BoolConst(_) => self.clone(),
            Formula::Eq(a, b) => Formula::eq(s(a), s(b)),
            Formula::Lt(so, a, b) => Formula::Lt(*so, s(a), s(b)),
            Formula::Rel(r, ts) => Formula::Rel(r.clone(), ts.iter().map(s).collect()),
            Formula::Not(f) => Formula::not(f.substitute(map)),
            Formula::And(ps) => Formula::and(ps.iter().map(|p| p.substitute(map))),
            Formula::Or(ps) => Formula::or(ps.iter().map(|p| p.substitute(map))),
            Formula::Implies(a, b) => Formula::implies(a.substitute(map), b.substitute(map)),
            Formula::Distinct(ts) => Formula::Distinct(ts.iter().map(s).collect()),
            Formula::Forall(vs, f) => Formula::forall(vs.clone(), f.substitute(&bound_filter(vs))),
            Formula::Exists(vs, f) => Formula::exists(vs.clone(), f.substitute(&bound_filter(vs))),
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        self.render_into(&mut out);
        out
    }

    fn render_into(&self, out: &mut String) {
        let list = |out: &mut String, head: &str, ps: &[Formula]| {
            out.push('(');
            out.push_str(head);
            for p in ps {
                out.push(' ');
                p.render_into(out);
            }
            out.push(')');
        };
        let binder = |out: &mut String, q: &str, vs: &[(Term, Sort)], f: &Formula| {
            let _ = write!(out, "({q} (");
            for (i, (v, s)) in vs.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "({v} {})", sort_name(*s));
            }
            out.push_str(") ");
            f.render_into(out);
            out.push(')');
        };
        match self {
            Formula::True => out.push_str("true"),
            Formula::False => out.push_str("false"),
            Formula::Eq(a, b) => {
                let _ = write!(out, "(= {a} {b})");
            }
            Formula::Lt(s, a, b) => {
                let _ = write!(out, "({} {a} {b})", lt_name(*s));
            }
            Formula::Rel(r, ts) if ts.is_empty() => out.push_str(r),
            Formula::Rel(r, ts) => {
                let _ = write!(out, "({r} {})", ts.join(" "));
            }
            Formula::BoolConst(b) => out.push_str(b),
            Formula::Not(f) => {
                out.push_str("(not ");
                f.render_into(out);
                out.push(')');
            }
            Formula::And(ps) => list(out, "and", ps),
            Formula::Or(ps) => list(out, "or", ps),
            Formula::Implies(a, b) => {
                out.push_str("(=> ");
                a.render_into(out);
                out.push(' ');
                b.render_into(out);
                out.push(')');
            }
            Formula::Distinct(ts) if ts.len() < 2 => out.push_str("true"),
            Formula::Distinct(ts) => {
                let _ = write!(out, "(distinct {})", ts.join(" "));
            }
            Formula::Forall(vs, f) => binder(out, "forall", vs, f),
            Formula::Exists(vs, f) => binder(out, "exists", vs, f),
        }
    }
}

/// A finite interpretation: values for constants, extensions for relations and
/// Boolean constants, and a universe per sort for quantifiers.
#[derive(Clone, Debug, Default)]
pub struct Structure {
    pub consts: HashMap<Term, Value>,
    pub bools: HashMap<String, bool>,
    pub rels: HashMap<String, HashSet<Vec<Value>>>,
    pub universe: BTreeMap<Sort, Vec<Value>>,
}

impl Structure {
    /// Interprets every literal and NULL symbol by its value.
    pub fn with_literals(literals: impl IntoIterator<Item = Value>) -> Structure {
        let mut s = Structure::default();
        for ty in ColumnType::ALL {
            s.consts.insert(null_name(ty), Value::Null);
        }
        for v in literals {
            if !v.is_null() {
                s.consts.insert(literal_name(&v), v);
            }
        }
        s
    }

    fn value(&self, t: &Term, env: &HashMap<Term, Value>) -> Value {
        env.get(t)
            .or_else(|| self.consts.get(t))
            .cloned()
            .unwrap_or_else(|| panic!("uninterpreted term {t}"))
    }

    pub fn holds(&self, f: &Formula) -> bool {
        self.eval(f, &mut HashMap::new())
    }

    fn eval(&self, f: &Formula, env: &mut HashMap<Term, Value>) -> bool {
        match f {
            Formula::True => true,
            Formula::False => false,
            Formula::Eq(a, b) => self.value(a, env) == self.value(b, env),
            Formula::Lt(_, a, b) => self.value(a, env).sql_lt(&self.value(b, env)),
            Formula::Rel(r, ts) => {
                let tuple: Vec<Value> = ts.iter().map(|t| self.value(t, env)).collect();
                self.rels.get(r).is_some_and(|rel| rel.contains(&tuple))
            }
            Formula::BoolConst(b) => *self.bools.get(b).unwrap_or_else(|| panic!("uninterpreted {b}")),
            Formula::Not(g) => !self.eval(g, env),
            Formula::And(ps) => ps.iter().all(|p| self.eval(p, env)),
            Formula::Or(ps) => ps.iter().any(|p| self.eval(p, env)),
            Formula::Implies(a, b) => !self.eval(a, env) || self.eval(b, env),
            Formula::Distinct(ts) => {
                let vals: Vec<Value> = ts.iter().map(|t| self.value(t, env)).collect();
                vals.iter().collect::<BTreeSet<_>>().len() == vals.len()
            }
            Formula::Forall(vs, g) => self.quantify(vs, g, env, true),
            Formula::Exists(vs, g) => self.quantify(vs, g, env, false),
        }
    }

    fn quantify(&self, vs: &[(Term, Sort)], body: &Formula, env: &mut HashMap<Term, Value>, all: bool) -> bool {
        let Some(((v, s), rest)) = vs.split_first() else {
            return self.eval(body, env);
        };
        let empty = Vec::new();
        let dom = self.universe.get(s).unwrap_or(&empty);
        let saved = env.get(v).cloned();
        let mut result = all;
        for val in dom {
            env.insert(v.clone(), val.clone());
            let r = self.quantify(rest, body, env, all);
            if r != all {
                result = r;
                break;
            }
        }
        match saved {
            Some(x) => env.insert(v.clone(), x),
            None => env.remove(v),
        };
        result
    }
}
