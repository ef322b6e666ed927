//! Thread-safe store of verified decision templates with backtracking matching.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use std::time::Duration;

use crate::schema::{PolicyBundle, RequestContext};
use crate::smt::TraceItem;
use crate::solver::SolverPool;
use crate::sql::basic::{BasicQuery, Operand};
use crate::template::json::{from_json, to_json};
use crate::template::{signature, DecisionTemplate, TemplateError, VerifiedTemplate};
use crate::value::Value;

/// A successful match: the template and the valuation of its variables.
#[derive(Clone, Debug)]
pub struct CacheMatch {
    pub template: Arc<DecisionTemplate>,
    pub valuation: BTreeMap<u32, Value>,
}

struct Entry {
    template: Arc<DecisionTemplate>,
    seq: u64,
    last_hit: AtomicU64,
}

#[derive(Default)]
struct Inner {
    buckets: HashMap<BasicQuery, Vec<Entry>>,
    len: usize,
}

/// Templates indexed by the erased shape of their conclusion query.
#[derive(Default)]
pub struct DecisionCache {
    inner: RwLock<Inner>,
    clock: AtomicU64,
    max_entries: Option<usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum CacheLoadError {
    #[error("cache file must hold a JSON array of templates")]
    NotAnArray,
    #[error(transparent)]
    Json(#[from] crate::template::json::TemplateJsonError),
    #[error(transparent)]
    Verification(#[from] TemplateError),
}

/// Valuation under construction: template variables plus the request context.
struct Binding<'a> {
    vars: BTreeMap<u32, Value>,
    ctx: &'a RequestContext,
}

impl Binding<'_> {
    fn unify(&mut self, t: &Operand, v: &Operand) -> bool {
        match (t, v) {
            (Operand::Column(a), Operand::Column(b)) => a == b,
            (Operand::Var(k), Operand::Const(c)) => match self.vars.get(k) {
                Some(b) => b == c,
                None => {
                    self.vars.insert(*k, c.clone());
                    true
                }
            },
            (Operand::Param(p), Operand::Const(c)) => self.ctx.get(p) == Some(c),
            (Operand::Param(p), Operand::Param(q)) => p == q,
            (Operand::Const(a), Operand::Const(b)) => a == b,
            _ => false,
        }
    }

    fn unify_query(&mut self, t: &BasicQuery, q: &BasicQuery) -> bool {
        let mut a = Vec::new();
        t.for_each_operand(&mut |o| a.push(o));
        let mut b = Vec::new();
        q.for_each_operand(&mut |o| b.push(o));
        a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| self.unify(x, y))
    }

    fn unify_entry(&mut self, t: &TraceItem, e: &TraceItem) -> bool {
        t.tuple.len() == e.tuple.len()
            && self.unify_query(&t.query, &e.query)
            && t.tuple.iter().zip(&e.tuple).all(|(x, y)| self.unify(x, y))
    }

    fn value(&self, o: &Operand) -> Option<Value> {
        match o {
            Operand::Var(k) => self.vars.get(k).cloned(),
            Operand::Param(p) => self.ctx.get(p).cloned(),
            Operand::Const(v) => Some(v.clone()),
            Operand::Column(_) => None,
        }
    }

    fn bound_count(&self, t: &TraceItem) -> usize {
        let mut n = 0;
        let mut count = |o: &Operand| {
            if matches!(o, Operand::Var(k) if self.vars.contains_key(k)) || matches!(o, Operand::Param(_)) {
                n += 1;
            }
        };
        t.query.for_each_operand(&mut count);
        t.tuple.iter().for_each(&mut count);
        n
    }
}

struct Matcher<'a> {
    template: &'a DecisionTemplate,
    /// Candidate trace entries per premise entry (same query shape).
    candidates: Vec<Vec<&'a TraceItem>>,
}

impl Matcher<'_> {
    fn search(&self, left: &mut Vec<usize>, b: &mut Binding) -> bool {
        if left.is_empty() {
            let nu = |o: &Operand| b.value(o);
            return self.template.condition.iter().all(|a| a.holds(&nu));
        }
        let (pos, _) = left
            .iter()
            .enumerate()
            .max_by_key(|(i, &p)| (b.bound_count(&self.template.premise[p]), std::cmp::Reverse(*i)))
            .expect("nonempty");
        let p = left.swap_remove(pos);
        for e in &self.candidates[p] {
            let saved = b.vars.clone();
            if b.unify_entry(&self.template.premise[p], e) && self.search(left, b) {
                return true;
            }
            b.vars = saved;
        }
        left.push(p);
        let last = left.len() - 1;
        left.swap(pos, last);
        false
    }
}

/// Finds a valuation under which `t` matches the query and trace.
pub fn match_template(
    t: &DecisionTemplate,
    q: &BasicQuery,
    trace: &[TraceItem],
    ctx: &RequestContext,
) -> Option<BTreeMap<u32, Value>> {
    let mut b = Binding { vars: BTreeMap::new(), ctx };
    if signature(&t.query) != signature(q) || !b.unify_query(&t.query, q) {
        return None;
    }
    let sigs: Vec<BasicQuery> = trace.iter().map(|e| signature(&e.query)).collect();
    let candidates = t
        .premise
        .iter()
        .map(|p| {
            let s = signature(&p.query);
            trace.iter().zip(&sigs).filter(|(_, es)| **es == s).map(|(e, _)| e).collect()
        })
        .collect();
    let m = Matcher { template: t, candidates };
    let mut left: Vec<usize> = (0..t.premise.len()).collect();
    m.search(&mut left, &mut b).then_some(b.vars)
}

impl DecisionCache {
    pub fn new() -> DecisionCache {
        DecisionCache::default()
    }

    /// A cache that evicts the least recently hit template beyond `max` entries.
    pub fn with_max_entries(max: usize) -> DecisionCache {
        DecisionCache { max_entries: Some(max.max(1)), ..DecisionCache::default() }
    }

    fn tick(&self) -> u64 {
        self.clock.fetch_add(1, Ordering::Relaxed) + 1
    }

    pub fn len(&self) -> usize {
        self.inner.read().expect("cache lock").len
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&self) {
        let mut inner = self.inner.write().expect("cache lock");
        inner.buckets.clear();
        inner.len = 0;
    }

    /// Stores a template; returns false if an identical one is already stored.
    pub fn insert(&self, t: VerifiedTemplate) -> bool {
        let t = t.into_inner();
        let sig = t.signature();
        let seq = self.tick();
        let mut inner = self.inner.write().expect("cache lock");
        if inner.buckets.get(&sig).is_some_and(|b| b.iter().any(|e| *e.template == t)) {
            return false;
        }
        if let Some(max) = self.max_entries {
            if inner.len >= max {
                evict_one(&mut inner);
            }
        }
        let entry = Entry { template: Arc::new(t), seq, last_hit: AtomicU64::new(seq) };
        inner.buckets.entry(sig).or_default().push(entry);
        inner.len += 1;
        true
    }

    /// First stored template (in insertion order) matching the query and trace.
    pub fn lookup(&self, q: &BasicQuery, trace: &[TraceItem], ctx: &RequestContext) -> Option<CacheMatch> {
        let inner = self.inner.read().expect("cache lock");
        let bucket = inner.buckets.get(&signature(q))?;
        for e in bucket {
            if let Some(valuation) = match_template(&e.template, q, trace, ctx) {
                e.last_hit.store(self.tick(), Ordering::Relaxed);
                return Some(CacheMatch { template: e.template.clone(), valuation });
            }
        }
        None
    }

    /// All templates in insertion order.
    pub fn templates(&self) -> Vec<Arc<DecisionTemplate>> {
        let inner = self.inner.read().expect("cache lock");
        let mut all: Vec<&Entry> = inner.buckets.values().flatten().collect();
        all.sort_by_key(|e| e.seq);
        all.into_iter().map(|e| e.template.clone()).collect()
    }

    pub fn dump(&self, policy: &PolicyBundle) -> serde_json::Value {
        serde_json::Value::Array(self.templates().iter().map(|t| to_json(t, policy)).collect())
    }

    /// Loads templates from a dump, re-verifying each. Returns how many were added.
    pub fn load(
        &self,
        json: &serde_json::Value,
        policy: &PolicyBundle,
        pool: &SolverPool,
        budget: Duration,
    ) -> Result<usize, CacheLoadError> {
        let items = json.as_array().ok_or(CacheLoadError::NotAnArray)?;
        let mut added = 0;
        for j in items {
            let t = from_json(j, policy)?;
            if self.insert(VerifiedTemplate::verify(t, policy, pool, budget)?) {
                added += 1;
            }
        }
        Ok(added)
    }
}

fn evict_one(inner: &mut Inner) {
    let victim = inner
        .buckets
        .iter()
        .flat_map(|(sig, b)| b.iter().enumerate().map(move |(i, e)| (e.last_hit.load(Ordering::Relaxed), sig, i)))
        .min_by_key(|(hit, _, _)| *hit)
        .map(|(_, sig, i)| (sig.clone(), i));
    if let Some((sig, i)) = victim {
        let bucket = inner.buckets.get_mut(&sig).expect("bucket");
        bucket.remove(i);
        if bucket.is_empty() {
            inner.buckets.remove(&sig);
        }
        inner.len -= 1;
    }
}
