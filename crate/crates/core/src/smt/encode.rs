use std::collections::{BTreeMap, BTreeSet};

use super::formula::*;
use super::{Assertion, BoundsMap, Role, SmtScript, TraceItem};
use crate::schema::{Constraint, Schema};
use crate::sql::basic::*;
use crate::template::atoms::CandidateAtom;
use crate::value::{ColumnType, Value};

/// How tables are represented.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Encoding {
    /// One uninterpreted relation per table and database.
    Unbounded,
    /// Conditional tables of bounded size. With `order_axioms`, ground
    /// transitivity and totality of `<` are asserted over the script's terms.
    Bounded { bounds: BoundsMap, order_axioms: bool },
}

/// Everything a strong-compliance style script talks about.
pub struct Problem<'a> {
    pub schema: &'a Schema,
    pub constraints: &'a [Constraint],
    pub views: &'a [BasicQuery],
    pub trace: &'a [TraceItem],
    pub query: &'a BasicQuery,
    pub atoms: &'a [CandidateAtom],
    pub ctx_types: &'a BTreeMap<String, ColumnType>,
    pub var_types: &'a BTreeMap<u32, ColumnType>,
}

pub struct Encoder<'a> {
    schema: &'a Schema,
    ctx_types: &'a BTreeMap<String, ColumnType>,
    var_types: &'a BTreeMap<u32, ColumnType>,
    encoding: Encoding,
    fresh: usize,
    literals: BTreeSet<Value>,
    lt_used: BTreeSet<Sort>,
    constants: BTreeMap<Term, Sort>,
    bools: BTreeSet<String>,
}

pub fn db_relation(db: &str, table: &str) -> String {
    format!("{db}_{table}")
}

pub fn cell_name(db: &str, table: &str, row: usize, col: usize) -> String {
    format!("{db}_{table}_r{row}_{col}")
}

pub fn exists_name(db: &str, table: &str, row: usize) -> String {
    format!("{db}_{table}_r{row}_b")
}

pub fn var_term(k: u32) -> Term {
    format!("x_{k}")
}

pub fn ctx_term(name: &str) -> Term {
    format!("ctx_{name}")
}

pub fn skolem_term(k: usize) -> Term {
    format!("sk_{k}")
}

impl<'a> Encoder<'a> {
    pub fn new(
        schema: &'a Schema,
        ctx_types: &'a BTreeMap<String, ColumnType>,
        var_types: &'a BTreeMap<u32, ColumnType>,
        encoding: Encoding,
    ) -> Self {
        Encoder {
            schema,
            ctx_types,
            var_types,
            encoding,
            fresh: 0,
            literals: BTreeSet::new(),
            lt_used: BTreeSet::new(),
            constants: BTreeMap::new(),
            bools: BTreeSet::new(),
        }
    }

    fn bound(&self, table: &str) -> Option<usize> {
        match &self.encoding {
            Encoding::Unbounded => None,
            Encoding::Bounded { bounds, .. } => Some(bounds.get(table).copied().unwrap_or(0)),
        }
    }

    fn fresh_var(&mut self) -> Term {
        self.fresh += 1;
        format!("q{}", self.fresh)
    }

    fn literal(&mut self, v: &Value) -> Term {
        self.literals.insert(v.clone());
        literal_name(v)
    }

    fn sort_of(&self, o: &Operand, block: Option<&SelectBlock>) -> Option<Sort> {
        match o {
            Operand::Column(c) => block.map(|b| b.column_type(self.schema, *c)),
            Operand::Const(v) => v.column_type(),
            Operand::Param(p) => self.ctx_types.get(p).copied(),
            Operand::Var(k) => self.var_types.get(k).copied(),
        }
    }

    /// Term for a non-column operand; `None` for a NULL literal.
    pub fn free_term(&mut self, o: &Operand) -> Option<Term> {
        match o {
            Operand::Column(_) => panic!("column outside a block"),
            Operand::Const(Value::Null) => None,
            Operand::Const(v) => Some(self.literal(v)),
            Operand::Param(p) => {
                let s = *self.ctx_types.get(p).unwrap_or_else(|| panic!("untyped context parameter {p}"));
                let t = ctx_term(p);
                self.constants.insert(t.clone(), s);
                Some(t)
            }
            Operand::Var(k) => {
                let s = self.var_types.get(k).copied().unwrap_or(ColumnType::Int);
                let t = var_term(*k);
                self.constants.insert(t.clone(), s);
                Some(t)
            }
        }
    }

    fn term(&mut self, o: &Operand, env: &[Vec<Term>]) -> Option<Term> {
        match o {
            Operand::Column(c) => Some(env[c.instance][c.column].clone()),
            o => self.free_term(o),
        }
    }

    /// Term for an output position, with NULL resolved through the column type.
    fn out_term(&mut self, o: &Operand, env: &[Vec<Term>], ty: Sort) -> Term {
        self.term(o, env).unwrap_or_else(|| null_name(ty))
    }

    fn nonnull(&self, t: &Term, s: Sort) -> Formula {
        if t.starts_with("int_") || t.starts_with("str_") || t.starts_with("ts_") || t.starts_with("bool_") {
            Formula::True
        } else {
            Formula::not(Formula::eq(t.clone(), null_name(s)))
        }
    }

    /// Two-valued translation of a SQL predicate.
    fn predicate(&mut self, p: &Predicate, block: &SelectBlock, env: &[Vec<Term>]) -> Formula {
        match p {
            Predicate::True => Formula::True,
            Predicate::False => Formula::False,
            Predicate::And(ps) => {
                let parts: Vec<Formula> = ps.iter().map(|q| self.predicate(q, block, env)).collect();
                Formula::and(parts)
            }
            Predicate::Or(ps) => {
                let parts: Vec<Formula> = ps.iter().map(|q| self.predicate(q, block, env)).collect();
                Formula::or(parts)
            }
            Predicate::Cmp(op, a, b) => {
                let sort = self.sort_of(a, Some(block)).or_else(|| self.sort_of(b, Some(block)));
                let (Some(ta), Some(tb), Some(s)) = (self.term(a, env), self.term(b, env), sort) else {
                    return Formula::False;
                };
                let guard = Formula::and([self.nonnull(&ta, s), self.nonnull(&tb, s)]);
                let core = match op {
                    CmpOp::Eq => Formula::eq(ta, tb),
                    CmpOp::Ne => Formula::not(Formula::eq(ta, tb)),
                    CmpOp::Lt => self.lt(s, ta, tb),
                    CmpOp::Gt => self.lt(s, tb, ta),
                    CmpOp::Le => {
                        let l = self.lt(s, ta.clone(), tb.clone());
                        Formula::or([l, Formula::eq(ta, tb)])
                    }
                    CmpOp::Ge => {
                        let l = self.lt(s, tb.clone(), ta.clone());
                        Formula::or([l, Formula::eq(ta, tb)])
                    }
                };
                Formula::and([guard, core])
            }
            Predicate::In { operand, list, negated } => {
                let sort = self
                    .sort_of(operand, Some(block))
                    .or_else(|| list.iter().find_map(|o| self.sort_of(o, Some(block))));
                let (Some(t), Some(s)) = (self.term(operand, env), sort) else {
                    return Formula::False;
                };
                let guard = self.nonnull(&t, s);
                let mut items = Vec::new();
                for o in list {
                    match self.term(o, env) {
                        Some(u) => items.push(u),
                        None if *negated => return Formula::False,
                        None => {}
                    }
                }
                if *negated {
                    let parts: Vec<Formula> = items
                        .into_iter()
                        .map(|u| Formula::and([self.nonnull(&u, s), Formula::not(Formula::eq(t.clone(), u))]))
                        .collect();
                    Formula::and(std::iter::once(guard).chain(parts))
                } else {
                    let parts: Vec<Formula> = items.into_iter().map(|u| Formula::eq(t.clone(), u)).collect();
                    Formula::and([guard, Formula::or(parts)])
                }
            }
            Predicate::IsNull { operand, negated } => {
                let Some(s) = self.sort_of(operand, Some(block)) else {
                    // Only an untyped NULL literal lacks a sort.
                    return if *negated { Formula::False } else { Formula::True };
                };
                match self.term(operand, env) {
                    None => {
                        if *negated {
                            Formula::False
                        } else {
                            Formula::True
                        }
                    }
                    Some(t) => {
                        let is_null = Formula::eq(t, null_name(s));
                        if *negated {
                            Formula::not(is_null)
                        } else {
                            is_null
                        }
                    }
                }
            }
        }
    }

    fn lt(&mut self, s: Sort, a: Term, b: Term) -> Formula {
        self.lt_used.insert(s);
        if a == b {
            return Formula::False;
        }
        Formula::Lt(s, a, b)
    }

    fn table_sorts(&self, table: &str) -> Vec<Sort> {
        self.schema.table(table).expect("resolved").columns.iter().map(|c| c.ty).collect()
    }

    /// Row environments for a block: one entry per combination of rows in
    /// bounded mode, a single quantified environment otherwise.
    fn block_envs(&mut self, block: &SelectBlock, db: &str) -> Vec<(Vec<Vec<Term>>, Vec<Formula>)> {
        if self.bound(&block.from[0].table).is_none() {
            let mut env = Vec::new();
            let mut atoms = Vec::new();
            for inst in &block.from {
                let vars: Vec<Term> = self.table_sorts(&inst.table).iter().map(|_| self.fresh_var()).collect();
                atoms.push(Formula::Rel(db_relation(db, &inst.table), vars.clone()));
                env.push(vars);
            }
            return vec![(env, atoms)];
        }
        let bounds: Vec<usize> = block.from.iter().map(|i| self.bound(&i.table).unwrap()).collect();
        if bounds.contains(&0) {
            return vec![];
        }
        let mut out = Vec::new();
        let mut idx = vec![0usize; bounds.len()];
        loop {
            let mut env = Vec::new();
            let mut conds = Vec::new();
            for (inst, &r) in block.from.iter().zip(&idx) {
                let n = self.table_sorts(&inst.table).len();
                env.push((0..n).map(|c| cell_name(db, &inst.table, r, c)).collect());
                conds.push(Formula::BoolConst(exists_name(db, &inst.table, r)));
            }
            out.push((env, conds));
            let mut k = idx.len();
            loop {
                if k == 0 {
                    return out;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < bounds[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
    }

    fn quantified(&self, block: &SelectBlock, env: &[Vec<Term>]) -> Vec<(Term, Sort)> {
        block
            .from
            .iter()
            .zip(env)
            .flat_map(|(inst, vars)| vars.iter().cloned().zip(self.table_sorts(&inst.table)))
            .collect()
    }

    /// `tuple ∈ q(db)`.
    pub fn member(&mut self, q: &BasicQuery, db: &str, tuple: &[Term]) -> Formula {
        assert_eq!(q.arity(), tuple.len(), "tuple arity");
        let mut parts = Vec::new();
        for block in &q.blocks {
            let unbounded = self.bound(&block.from[0].table).is_none();
            for (mut env, conds) in self.block_envs(block, db) {
                let own: BTreeSet<Term> = env.iter().flatten().cloned().collect();
                let mut bound_vars = BTreeSet::new();
                let mut eqs = Vec::new();
                if unbounded {
                    // Substitute output terms for projected columns instead of quantifying them.
                    for (k, out) in block.projection.iter().enumerate() {
                        if let Operand::Column(c) = &out.operand {
                            let v = env[c.instance][c.column].clone();
                            if own.contains(&v) && !bound_vars.contains(&v) {
                                bound_vars.insert(v.clone());
                                for vars in env.iter_mut() {
                                    for t in vars.iter_mut() {
                                        if *t == v {
                                            *t = tuple[k].clone();
                                        }
                                    }
                                }
                                continue;
                            }
                        }
                        let t = self.out_term(&out.operand, &env, q.column_types[k]);
                        eqs.push(Formula::eq(tuple[k].clone(), t));
                    }
                } else {
                    for (k, out) in block.projection.iter().enumerate() {
                        let t = self.out_term(&out.operand, &env, q.column_types[k]);
                        eqs.push(Formula::eq(tuple[k].clone(), t));
                    }
                }
                let conds = if unbounded {
                    block
                        .from
                        .iter()
                        .zip(&env)
                        .map(|(inst, vars)| Formula::Rel(db_relation(db, &inst.table), vars.clone()))
                        .collect()
                } else {
                    conds
                };
                let pred = self.predicate(&block.predicate, block, &env);
                let body = Formula::and(conds.into_iter().chain([pred]).chain(eqs));
                let vars: Vec<(Term, Sort)> = if unbounded {
                    self.quantified(block, &env).into_iter().filter(|(v, _)| own.contains(v) && !bound_vars.contains(v)).collect()
                } else {
                    vec![]
                };
                let vars: Vec<(Term, Sort)> = dedup_vars(vars);
                parts.push(Formula::exists(vars, body));
            }
        }
        Formula::or(parts)
    }

    /// `lhs(db_l) ⊆ rhs(db_r)`.
    pub fn contained(&mut self, lhs: &BasicQuery, db_l: &str, rhs: &BasicQuery, db_r: &str) -> Formula {
        let mut parts = Vec::new();
        for block in &lhs.blocks {
            for (env, conds) in self.block_envs(block, db_l) {
                let pred = self.predicate(&block.predicate, block, &env);
                let outs: Vec<Term> = block
                    .projection
                    .iter()
                    .enumerate()
                    .map(|(k, o)| self.out_term(&o.operand, &env, lhs.column_types[k]))
                    .collect();
                let concl = self.member(rhs, db_r, &outs);
                let body = Formula::implies(Formula::and(conds.into_iter().chain([pred])), concl);
                let vars = if self.bound(&block.from[0].table).is_none() { self.quantified(block, &env) } else { vec![] };
                parts.push(Formula::forall(vars, body));
            }
        }
        Formula::and(parts)
    }

    /// NOT NULL and key constraints of one table in one database.
    fn table_constraints(&mut self, table: &str, db: &str) -> Vec<Formula> {
        let t = self.schema.table(table).expect("resolved").clone();
        let sorts: Vec<Sort> = t.columns.iter().map(|c| c.ty).collect();
        let mut out = Vec::new();
        match self.bound(table) {
            None => {
                let x: Vec<Term> = sorts.iter().map(|_| self.fresh_var()).collect();
                let rel = Formula::Rel(db_relation(db, table), x.clone());
                let nn: Vec<Formula> = t
                    .columns
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| !c.nullable)
                    .map(|(i, c)| self.nonnull(&x[i], c.ty))
                    .collect();
                if !nn.is_empty() {
                    let vars = x.iter().cloned().zip(sorts.iter().copied()).collect();
                    out.push(Formula::forall(vars, Formula::implies(rel, Formula::and(nn))));
                }
                for key in t.all_keys() {
                    let x: Vec<Term> = sorts.iter().map(|_| self.fresh_var()).collect();
                    let y: Vec<Term> = sorts.iter().map(|_| self.fresh_var()).collect();
                    let mut hyp = vec![
                        Formula::Rel(db_relation(db, table), x.clone()),
                        Formula::Rel(db_relation(db, table), y.clone()),
                    ];
                    for &k in key {
                        hyp.push(Formula::eq(x[k].clone(), y[k].clone()));
                        hyp.push(self.nonnull(&x[k], sorts[k]));
                    }
                    let concl = Formula::and((0..sorts.len()).map(|j| Formula::eq(x[j].clone(), y[j].clone())));
                    let vars = x.iter().chain(&y).cloned().zip(sorts.iter().chain(&sorts).copied()).collect();
                    out.push(Formula::forall(vars, Formula::implies(Formula::and(hyp), concl)));
                }
            }
            Some(n) => {
                for r in 0..n {
                    let b = Formula::BoolConst(exists_name(db, table, r));
                    let nn: Vec<Formula> = t
                        .columns
                        .iter()
                        .enumerate()
                        .filter(|(_, c)| !c.nullable)
                        .map(|(i, c)| self.nonnull(&cell_name(db, table, r, i), c.ty))
                        .collect();
                    out.push(Formula::implies(b, Formula::and(nn)));
                }
                for key in t.all_keys() {
                    for r in 0..n {
                        for s in r + 1..n {
                            let mut hyp = vec![
                                Formula::BoolConst(exists_name(db, table, r)),
                                Formula::BoolConst(exists_name(db, table, s)),
                            ];
                            for &k in key {
                                hyp.push(Formula::eq(cell_name(db, table, r, k), cell_name(db, table, s, k)));
                                hyp.push(self.nonnull(&cell_name(db, table, r, k), sorts[k]));
                            }
                            let concl = Formula::and(
                                (0..sorts.len()).map(|j| Formula::eq(cell_name(db, table, r, j), cell_name(db, table, s, j))),
                            );
                            out.push(Formula::implies(Formula::and(hyp), concl));
                        }
                    }
                }
            }
        }
        out.into_iter().filter(|f| *f != Formula::True).collect()
    }

    fn atom(&mut self, a: &CandidateAtom) -> Formula {
        let sort = |e: &Self, o: &Operand| e.sort_of(o, None).unwrap_or(ColumnType::Int);
        match a {
            CandidateAtom::Eq(x, v) => {
                let s = sort(self, x);
                let t = self.free_term(x).unwrap_or_else(|| null_name(s));
                match v {
                    Value::Null => Formula::False,
                    v => {
                        let l = self.literal(v);
                        Formula::eq(t, l)
                    }
                }
            }
            CandidateAtom::IsNull(x) => {
                let s = sort(self, x);
                match self.free_term(x) {
                    Some(t) => Formula::eq(t, null_name(s)),
                    None => Formula::True,
                }
            }
            CandidateAtom::EqVars(x, y) => {
                let s = sort(self, x);
                let (Some(a), Some(b)) = (self.free_term(x), self.free_term(y)) else { return Formula::False };
                Formula::and([self.nonnull(&a, s), self.nonnull(&b, s), Formula::eq(a, b)])
            }
            CandidateAtom::Lt(x, y) => {
                let s = sort(self, x);
                let (Some(a), Some(b)) = (self.free_term(x), self.free_term(y)) else { return Formula::False };
                let l = self.lt(s, a.clone(), b.clone());
                Formula::and([self.nonnull(&a, s), self.nonnull(&b, s), l])
            }
        }
    }

    /// Builds the full script for a problem.
    pub fn script(mut self, p: &Problem) -> SmtScript {
        let mut body = Vec::new();
        let tables: Vec<String> = self.schema.tables.iter().map(|t| t.name.clone()).collect();
        for db in ["D1", "D2"] {
            for t in &tables {
                for f in self.table_constraints(t, db) {
                    body.push(Assertion { label: None, role: Role::Schema, formula: f });
                }
            }
            for c in p.constraints {
                if matches!(c, Constraint::PrimaryKeyUnique { .. }) {
                    continue;
                }
                for (l, r) in c.as_containments(self.schema) {
                    let f = self.contained(&l, db, &r, db);
                    if f != Formula::True {
                        body.push(Assertion { label: None, role: Role::Schema, formula: f });
                    }
                }
            }
        }
        for (i, v) in p.views.iter().enumerate() {
            let f = self.contained(v, "D1", v, "D2");
            body.push(Assertion { label: None, role: Role::View(i), formula: f });
        }
        for (i, item) in p.trace.iter().enumerate() {
            let terms: Vec<Term> = item
                .tuple
                .iter()
                .enumerate()
                .map(|(k, o)| self.free_term(o).unwrap_or_else(|| null_name(item.query.column_types[k])))
                .collect();
            let f = self.member(&item.query, "D1", &terms);
            body.push(Assertion { label: Some(format!("LQ_{}", i + 1)), role: Role::Trace(i), formula: f });
        }
        for (i, a) in p.atoms.iter().enumerate() {
            let f = self.atom(a);
            body.push(Assertion { label: Some(format!("LC_{}", i + 1)), role: Role::Atom(i), formula: f });
        }
        let sk: Vec<Term> = (0..p.query.arity()).map(skolem_term).collect();
        for (t, s) in sk.iter().zip(&p.query.column_types) {
            self.constants.insert(t.clone(), *s);
        }
        let pos = self.member(p.query, "D1", &sk);
        let neg = Formula::not(self.member(p.query, "D2", &sk));
        body.push(Assertion { label: None, role: Role::Conclusion, formula: Formula::and([pos, neg]) });
        self.finish(body)
    }

    fn finish(mut self, body: Vec<Assertion>) -> SmtScript {
        let bounded = matches!(self.encoding, Encoding::Bounded { .. });
        let order_axioms = matches!(self.encoding, Encoding::Bounded { order_axioms: true, .. });
        let mut relations = Vec::new();
        if let Encoding::Bounded { bounds, .. } = &self.encoding {
            for t in &self.schema.tables {
                let n = bounds.get(&t.name).copied().unwrap_or(0);
                for db in ["D1", "D2"] {
                    for r in 0..n {
                        for (c, col) in t.columns.iter().enumerate() {
                            self.constants.insert(cell_name(db, &t.name, r, c), col.ty);
                        }
                        self.bools.insert(exists_name(db, &t.name, r));
                    }
                }
            }
        } else {
            for db in ["D1", "D2"] {
                for t in &self.schema.tables {
                    relations.push((db_relation(db, &t.name), t.columns.iter().map(|c| c.ty).collect::<Vec<_>>()));
                }
            }
        }
        let bool_used = self.schema.tables.iter().flat_map(|t| &t.columns).any(|c| c.ty == ColumnType::Bool)
            || self.constants.values().any(|s| *s == ColumnType::Bool)
            || self.literals.iter().any(|v| matches!(v, Value::Bool(_)));
        if bool_used {
            self.literals.insert(Value::Bool(false));
            self.literals.insert(Value::Bool(true));
        }
        let mut axioms = Vec::new();
        for s in ColumnType::ALL {
            let mut terms = vec![null_name(s)];
            terms.extend(self.literals.iter().filter(|v| v.column_type() == Some(s)).map(literal_name));
            if terms.len() > 1 {
                axioms.push(Formula::Distinct(terms));
            }
        }
        if bool_used {
            let one_of = |t: &Term| {
                Formula::or([
                    Formula::eq(t.clone(), "bool_true"),
                    Formula::eq(t.clone(), "bool_false"),
                    Formula::eq(t.clone(), null_name(ColumnType::Bool)),
                ])
            };
            if bounded {
                for (t, s) in &self.constants {
                    if *s == ColumnType::Bool {
                        axioms.push(one_of(t));
                    }
                }
            } else {
                axioms.push(Formula::forall(vec![("b".into(), ColumnType::Bool)], one_of(&"b".to_string())));
            }
        }
        for &s in &self.lt_used {
            let lits: Vec<&Value> = self.literals.iter().filter(|v| v.column_type() == Some(s)).collect();
            for (i, a) in lits.iter().enumerate() {
                for b in &lits[i + 1..] {
                    let (lo, hi) = if a.sql_lt(b) { (a, b) } else { (b, a) };
                    axioms.push(Formula::Lt(s, literal_name(lo), literal_name(hi)));
                    axioms.push(Formula::not(Formula::Lt(s, literal_name(hi), literal_name(lo))));
                }
            }
            let nn = |t: &str| Formula::not(Formula::eq(t.to_string(), null_name(s)));
            if !bounded {
                let v = |n: &str| (n.to_string(), s);
                axioms.push(Formula::forall(vec![v("a")], Formula::not(Formula::Lt(s, "a".into(), "a".into()))));
                axioms.push(Formula::forall(
                    vec![v("a"), v("b"), v("c")],
                    Formula::implies(
                        Formula::and([Formula::Lt(s, "a".into(), "b".into()), Formula::Lt(s, "b".into(), "c".into())]),
                        Formula::Lt(s, "a".into(), "c".into()),
                    ),
                ));
                axioms.push(Formula::forall(
                    vec![v("a"), v("b")],
                    Formula::implies(
                        Formula::and([nn("a"), nn("b"), Formula::not(Formula::eq("a", "b"))]),
                        Formula::or([Formula::Lt(s, "a".into(), "b".into()), Formula::Lt(s, "b".into(), "a".into())]),
                    ),
                ));
            } else if order_axioms {
                let mut terms: Vec<Term> =
                    self.constants.iter().filter(|(_, t)| **t == s).map(|(n, _)| n.clone()).collect();
                terms.extend(lits.iter().map(|v| literal_name(v)));
                for a in &terms {
                    axioms.push(Formula::not(Formula::Lt(s, a.clone(), a.clone())));
                }
                for a in &terms {
                    for b in &terms {
                        if a >= b {
                            continue;
                        }
                        axioms.push(Formula::implies(
                            Formula::and([nn(a), nn(b), Formula::not(Formula::eq(a.clone(), b.clone()))]),
                            Formula::or([Formula::Lt(s, a.clone(), b.clone()), Formula::Lt(s, b.clone(), a.clone())]),
                        ));
                        for c in &terms {
                            if c == a || c == b {
                                continue;
                            }
                            for (x, y, z) in [(a, b, c), (b, a, c)] {
                                axioms.push(Formula::implies(
                                    Formula::and([
                                        Formula::Lt(s, x.clone(), y.clone()),
                                        Formula::Lt(s, y.clone(), z.clone()),
                                    ]),
                                    Formula::Lt(s, x.clone(), z.clone()),
                                ));
                            }
                        }
                    }
                }
            }
        }
        let mut assertions: Vec<Assertion> = axioms
            .into_iter()
            .filter(|f| *f != Formula::True)
            .map(|formula| Assertion { label: None, role: Role::Axiom, formula })
            .collect();
        assertions.extend(body);
        SmtScript {
            logic: if bounded { "QF_UF" } else { "UF" }.to_string(),
            literals: self.literals.into_iter().collect(),
            lt_sorts: self.lt_used.into_iter().collect(),
            relations,
            constants: self.constants.into_iter().collect(),
            bools: self.bools.into_iter().collect(),
            assertions,
        }
    }
}

fn dedup_vars(vars: Vec<(Term, Sort)>) -> Vec<(Term, Sort)> {
    let mut seen = BTreeSet::new();
    vars.into_iter().filter(|(v, _)| seen.insert(v.clone())).collect()
}
