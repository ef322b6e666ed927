//! Syntactic implication over conjunctions of candidate atoms: union-find for
//! equalities plus reachability for the strict order.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::atoms::CandidateAtom;
use crate::sql::basic::Operand;
use crate::value::Value;

/// The consequences of a conjunction of atoms. Constants are nodes too, so
/// `x = 4` and `y = 4` put `x` and `y` in one class.
#[derive(Clone, Debug)]
pub struct Closure {
    parent: BTreeMap<Operand, Operand>,
    nonnull: BTreeSet<Operand>,
    lt_edges: Vec<(Operand, Operand)>,
    consistent: bool,
}

fn null() -> Operand {
    Operand::Const(Value::Null)
}

impl Closure {
    pub fn new(atoms: &[CandidateAtom]) -> Closure {
        let mut c = Closure { parent: BTreeMap::new(), nonnull: BTreeSet::new(), lt_edges: Vec::new(), consistent: true };
        for a in atoms {
            match a {
                CandidateAtom::Eq(x, v) => {
                    c.nonnull.insert(x.clone());
                    c.union(x, &Operand::Const(v.clone()));
                    if v.is_null() {
                        c.consistent = false;
                    }
                }
                CandidateAtom::IsNull(x) => c.union(x, &null()),
                CandidateAtom::EqVars(x, y) => {
                    c.nonnull.insert(x.clone());
                    c.nonnull.insert(y.clone());
                    c.union(x, y);
                }
                CandidateAtom::Lt(x, y) => {
                    c.nonnull.insert(x.clone());
                    c.nonnull.insert(y.clone());
                    c.find(x);
                    c.find(y);
                    c.lt_edges.push((x.clone(), y.clone()));
                }
            }
        }
        c.check_consistency();
        c
    }

    fn find(&mut self, x: &Operand) -> Operand {
        let p = self.parent.entry(x.clone()).or_insert_with(|| x.clone()).clone();
        if &p == x {
            return p;
        }
        let root = self.find(&p);
        self.parent.insert(x.clone(), root.clone());
        root
    }

    fn root(&self, x: &Operand) -> Operand {
        let mut cur = x.clone();
        while let Some(p) = self.parent.get(&cur) {
            if *p == cur {
                break;
            }
            cur = p.clone();
        }
        cur
    }

    fn union(&mut self, a: &Operand, b: &Operand) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Prefer constants as representatives.
            if matches!(rb, Operand::Const(_)) {
                self.parent.insert(ra, rb);
            } else {
                self.parent.insert(rb, ra);
            }
        }
    }

    fn classes(&self) -> BTreeMap<Operand, Vec<Operand>> {
        let mut out: BTreeMap<Operand, Vec<Operand>> = BTreeMap::new();
        for x in self.parent.keys() {
            out.entry(self.root(x)).or_default().push(x.clone());
        }
        out
    }

    fn class_constant(members: &[Operand]) -> Option<&Value> {
        members.iter().find_map(|m| match m {
            Operand::Const(v) => Some(v),
            _ => None,
        })
    }

    fn class_nonnull(&self, members: &[Operand]) -> bool {
        members.iter().any(|m| self.nonnull.contains(m) || matches!(m, Operand::Const(v) if !v.is_null()))
    }

    fn check_consistency(&mut self) {
        let classes = self.classes();
        for members in classes.values() {
            let consts: BTreeSet<&Value> = members
                .iter()
                .filter_map(|m| match m {
                    Operand::Const(v) => Some(v),
                    _ => None,
                })
                .collect();
            let has_null = consts.contains(&Value::Null);
            if consts.len() > 1 || (has_null && self.class_nonnull(members)) {
                self.consistent = false;
            }
        }
        let graph = self.order_graph();
        for r in graph.keys() {
            if self.reaches(&graph, r, r) {
                self.consistent = false;
            }
        }
    }

    /// Edges between class representatives: atoms plus facts between constants.
    fn order_graph(&self) -> BTreeMap<Operand, BTreeSet<Operand>> {
        let mut g: BTreeMap<Operand, BTreeSet<Operand>> = BTreeMap::new();
        for (x, y) in &self.lt_edges {
            g.entry(self.root(x)).or_default().insert(self.root(y));
        }
        let classes = self.classes();
        let consts: Vec<(Operand, Value)> = classes
            .iter()
            .filter_map(|(r, m)| Closure::class_constant(m).map(|v| (r.clone(), v.clone())))
            .collect();
        for (ra, a) in &consts {
            for (rb, b) in &consts {
                if a.sql_lt(b) {
                    g.entry(ra.clone()).or_default().insert(rb.clone());
                }
            }
        }
        g
    }

    fn reaches(&self, g: &BTreeMap<Operand, BTreeSet<Operand>>, from: &Operand, to: &Operand) -> bool {
        let mut seen = BTreeSet::new();
        let mut queue: VecDeque<&Operand> = g.get(from).into_iter().flatten().collect();
        while let Some(n) = queue.pop_front() {
            if n == to {
                return true;
            }
            if seen.insert(n.clone()) {
                queue.extend(g.get(n).into_iter().flatten());
            }
        }
        false
    }

    pub fn is_consistent(&self) -> bool {
        self.consistent
    }

    /// Whether the two operands are forced equal (possibly both NULL).
    pub fn same_class(&self, x: &Operand, y: &Operand) -> bool {
        self.root(x) == self.root(y)
    }

    pub fn implies(&self, a: &CandidateAtom) -> bool {
        if !self.consistent {
            return true;
        }
        match a {
            CandidateAtom::Eq(x, v) => !v.is_null() && self.same_class(x, &Operand::Const(v.clone())),
            CandidateAtom::IsNull(x) => self.same_class(x, &null()),
            CandidateAtom::EqVars(x, y) => {
                let r = self.root(x);
                if r != self.root(y) {
                    return false;
                }
                let members: Vec<Operand> = self.parent.keys().filter(|m| self.root(m) == r).cloned().collect();
                let members = if members.is_empty() { vec![x.clone()] } else { members };
                self.class_nonnull(&members)
            }
            CandidateAtom::Lt(x, y) => {
                let g = self.order_graph();
                self.reaches(&g, &self.root(x), &self.root(y))
            }
        }
    }
}

/// Atoms of `all` implied by `core`, in the order of `all`.
pub fn augment(core: &[CandidateAtom], all: &[CandidateAtom]) -> Vec<CandidateAtom> {
    let c = Closure::new(core);
    all.iter().filter(|a| core.contains(a) || c.implies(a)).cloned().collect()
}
