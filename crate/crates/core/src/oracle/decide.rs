use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;

use super::enumerate::{table_instances, DomainSpec, Product};
use super::eval::{cross_constraint_ok, evaluate, Database, Relation, Tuple};
use crate::schema::{instantiate_view, Constraint, PolicyBundle, RequestContext};
use crate::sql::BasicQuery;

/// All rows one query returned. `partial` marks results cut short by LIMIT.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Observation {
    pub query: BasicQuery,
    pub rows: Relation,
    pub partial: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Equal views and exact trace results force equal query results.
    Compliance,
    /// Contained views and trace rows present force contained query results.
    Strong,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Witness {
    pub d1: Database,
    pub d2: Database,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OracleVerdict {
    Compliant,
    NonCompliant(Box<Witness>),
    /// The enumeration budget was exceeded before a verdict was reached.
    Exhausted,
}

/// Database index, view results, trace consistency and query result.
type Evaluated = (u64, Vec<Relation>, bool, Relation);

const CHUNK: u64 = 1 << 14;
/// Cap on signature-pair comparisons in strong mode.
const PAIR_BUDGET: u64 = 400_000_000;

struct Setup {
    views: Vec<BasicQuery>,
    components: Vec<Vec<String>>,
}

fn tables_of_constraint(c: &Constraint, policy: &PolicyBundle) -> BTreeSet<String> {
    c.as_containments(&policy.schema)
        .iter()
        .flat_map(|(l, r)| l.tables().into_iter().chain(r.tables()))
        .collect()
}

/// Groups tables that share a view, a query, a trace query or a constraint.
fn components(policy: &PolicyBundle, queries: &[&BasicQuery]) -> Vec<Vec<String>> {
    let names: Vec<String> = policy.schema.tables.iter().map(|t| t.name.clone()).collect();
    let mut parent: Vec<usize> = (0..names.len()).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut y = x;
        while p[y] != r {
            let n = p[y];
            p[y] = r;
            y = n;
        }
        r
    }
    let idx = |t: &str| names.iter().position(|n| n == t).expect("known table");
    let mut groups: Vec<BTreeSet<String>> = queries.iter().map(|q| q.tables()).collect();
    groups.extend(policy.views.iter().map(|v| v.query.tables()));
    groups.extend(policy.constraints.iter().map(|c| tables_of_constraint(c, policy)));
    for g in groups {
        let ids: Vec<usize> = g.iter().map(|t| idx(t)).collect();
        for w in ids.windows(2) {
            let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
            parent[a] = b;
        }
    }
    let mut comps: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (i, n) in names.iter().enumerate() {
        let r = find(&mut parent, i);
        comps.entry(r).or_default().push(n.clone());
    }
    comps.into_values().collect()
}

fn trace_ok(mode: Mode, obs: &Observation, db: &Database) -> bool {
    let got = evaluate(&obs.query, db);
    match mode {
        Mode::Compliance if !obs.partial => got == obs.rows,
        _ => obs.rows.is_subset(&got),
    }
}

/// Candidate databases over one component, or `None` if over budget.
fn component_product<'a>(
    policy: &PolicyBundle,
    tables: &[String],
    dom: &DomainSpec,
    store: &'a mut Vec<Vec<Relation>>,
) -> Option<Product<'a>> {
    store.clear();
    for t in tables {
        store.push(table_instances(&policy.schema, t, dom, dom.max_databases)?);
    }
    let p = Product { tables: tables.to_vec(), choices: store.iter().map(|v| v.as_slice()).collect() };
    (p.len() <= dom.max_databases).then_some(p)
}

fn constraints_within<'a>(policy: &'a PolicyBundle, tables: &[String]) -> Vec<&'a Constraint> {
    policy
        .constraints
        .iter()
        .filter(|c| !matches!(c, Constraint::PrimaryKeyUnique { .. }))
        .filter(|c| tables_of_constraint(c, policy).iter().all(|t| tables.contains(t)))
        .collect()
}

/// Finds one database over `tables` satisfying the observations.
fn find_feasible(
    mode: Mode,
    policy: &PolicyBundle,
    tables: &[String],
    trace: &[&Observation],
    dom: &DomainSpec,
) -> Option<Option<Database>> {
    let mut store = Vec::new();
    let product = component_product(policy, tables, dom, &mut store)?;
    let cons = constraints_within(policy, tables);
    let n = product.len();
    let mut start = 0;
    while start < n {
        let end = (start + CHUNK).min(n);
        let found = (start..end).into_par_iter().find_first(|&i| {
            let db = product.database(i);
            cons.iter().all(|c| cross_constraint_ok(c, &policy.schema, &db))
                && trace.iter().all(|o| trace_ok(mode, o, &db))
        });
        if let Some(i) = found {
            return Some(Some(product.database(i)));
        }
        start = end;
    }
    Some(None)
}

impl Setup {
    fn new(policy: &PolicyBundle, ctx: &RequestContext, query: Option<&BasicQuery>, trace: &[Observation]) -> Self {
        let views = policy
            .views
            .iter()
            .map(|v| instantiate_view(v, ctx).expect("context binds every view parameter"))
            .collect();
        let mut qs: Vec<&BasicQuery> = trace.iter().map(|o| &o.query).collect();
        qs.extend(query);
        Setup { views, components: components(policy, &qs) }
    }

    fn views_in(&self, tables: &[String]) -> Vec<&BasicQuery> {
        self.views.iter().filter(|v| v.tables().iter().all(|t| tables.contains(t))).collect()
    }
}

fn in_component<'t>(trace: &'t [Observation], tables: &[String]) -> Vec<&'t Observation> {
    trace.iter().filter(|o| o.query.tables().iter().all(|t| tables.contains(t))).collect()
}

/// Whether some constraint-satisfying database over `dom` yields every recorded row.
/// `None` when the enumeration budget is exceeded.
pub fn trace_feasible(trace: &[Observation], policy: &PolicyBundle, dom: &DomainSpec) -> Option<bool> {
    let qs: Vec<&BasicQuery> = trace.iter().map(|o| &o.query).collect();
    for tables in components(policy, &qs) {
        let obs = in_component(trace, &tables);
        if obs.is_empty() {
            continue;
        }
        if find_feasible(Mode::Strong, policy, &tables, &obs, dom)?.is_none() {
            return Some(false);
        }
    }
    Some(true)
}

struct Eval {
    index: u64,
    sig: Vec<u32>,
    trace_ok: bool,
    result: Vec<u32>,
}

#[derive(Default)]
struct Interner {
    ids: HashMap<(usize, Tuple), u32>,
}

impl Interner {
    fn id(&mut self, space: usize, t: &Tuple) -> u32 {
        let n = self.ids.len() as u32;
        *self.ids.entry((space, t.clone())).or_insert(n)
    }
}

struct SigInfo {
    inter: Option<BTreeSet<u32>>,
    d1_union: BTreeSet<u32>,
    members: Vec<u64>,
}

/// Brute-force decision over all constraint-satisfying database pairs within `dom`.
pub fn oracle_decide(
    mode: Mode,
    query: &BasicQuery,
    trace: &[Observation],
    policy: &PolicyBundle,
    ctx: &RequestContext,
    dom: &DomainSpec,
) -> OracleVerdict {
    let setup = Setup::new(policy, ctx, Some(query), trace);
    let qtables = query.tables();
    let mut background = Database::default();
    let mut main_tables = None;
    for tables in &setup.components {
        if tables.iter().any(|t| qtables.contains(t)) {
            main_tables = Some(tables.clone());
            continue;
        }
        let obs = in_component(trace, tables);
        if obs.is_empty() {
            continue;
        }
        match find_feasible(mode, policy, tables, &obs, dom) {
            None => return OracleVerdict::Exhausted,
            // No database is consistent with the trace: vacuously compliant.
            Some(None) => return OracleVerdict::Compliant,
            Some(Some(db)) => background.tables.extend(db.tables),
        }
    }
    let tables = main_tables.expect("query touches at least one table");
    let views = setup.views_in(&tables);
    let obs = in_component(trace, &tables);
    let cons = constraints_within(policy, &tables);
    let mut store = Vec::new();
    let Some(product) = component_product(policy, &tables, dom, &mut store) else {
        return OracleVerdict::Exhausted;
    };
    let complete = |db: Database| {
        let mut full = background.clone();
        full.tables.extend(db.tables);
        full
    };

    let n = product.len();
    let mut interner = Interner::default();
    let q_space = views.len();
    let mut compl: HashMap<Vec<u32>, (Vec<u32>, u64)> = HashMap::new();
    let mut sigs: HashMap<Vec<u32>, usize> = HashMap::new();
    let mut infos: Vec<(Vec<u32>, SigInfo)> = Vec::new();
    let mut start = 0;
    while start < n {
        let end = (start + CHUNK).min(n);
        let evals: Vec<Option<Evaluated>> = (start..end)
            .into_par_iter()
            .map(|i| {
                let db = product.database(i);
                if !cons.iter().all(|c| cross_constraint_ok(c, &policy.schema, &db)) {
                    return None;
                }
                let ok = obs.iter().all(|o| trace_ok(mode, o, &db));
                if mode == Mode::Compliance && !ok {
                    return None;
                }
                let v = views.iter().map(|v| evaluate(v, &db)).collect();
                Some((i, v, ok, evaluate(query, &db)))
            })
            .collect();
        for (index, vrels, trace_ok, res) in evals.into_iter().flatten() {
            let mut sig: Vec<u32> = Vec::new();
            for (k, rel) in vrels.iter().enumerate() {
                sig.extend(rel.iter().map(|t| interner.id(k, t)));
            }
            sig.sort_unstable();
            let mut result: Vec<u32> = res.iter().map(|t| interner.id(q_space, t)).collect();
            result.sort_unstable();
            let e = Eval { index, sig, trace_ok, result };
            match mode {
                Mode::Compliance => match compl.get(&e.sig) {
                    Some((r, j)) if *r != e.result => {
                        return OracleVerdict::NonCompliant(Box::new(Witness {
                            d1: complete(product.database(*j)),
                            d2: complete(product.database(e.index)),
                        }));
                    }
                    Some(_) => {}
                    None => {
                        compl.insert(e.sig, (e.result, e.index));
                    }
                },
                Mode::Strong => {
                    let slot = *sigs.entry(e.sig.clone()).or_insert_with(|| {
                        infos.push((
                            e.sig.clone(),
                            SigInfo { inter: None, d1_union: BTreeSet::new(), members: Vec::new() },
                        ));
                        infos.len() - 1
                    });
                    let info = &mut infos[slot].1;
                    let rs: BTreeSet<u32> = e.result.iter().copied().collect();
                    info.inter = Some(match info.inter.take() {
                        None => rs.clone(),
                        Some(x) => x.intersection(&rs).copied().collect(),
                    });
                    if e.trace_ok {
                        info.d1_union.extend(rs);
                    }
                    info.members.push(e.index);
                }
            }
        }
        start = end;
    }
    if mode == Mode::Compliance {
        return OracleVerdict::Compliant;
    }

    let words = interner.ids.len().div_ceil(64).max(1);
    let bits: Vec<Vec<u64>> = infos
        .iter()
        .map(|(sig, _)| {
            let mut b = vec![0u64; words];
            for &id in sig {
                b[id as usize / 64] |= 1 << (id % 64);
            }
            b
        })
        .collect();
    let d1_sigs: Vec<usize> = (0..infos.len()).filter(|&i| !infos[i].1.d1_union.is_empty()).collect();
    if (d1_sigs.len() as u64).saturating_mul(infos.len() as u64) > PAIR_BUDGET {
        return OracleVerdict::Exhausted;
    }
    let found = d1_sigs.par_iter().find_map_first(|&s1| {
        let u = &infos[s1].1.d1_union;
        let check = |s2: usize| {
            let inter = infos[s2].1.inter.as_ref().expect("nonempty group");
            u.iter().find(|t| !inter.contains(t)).map(|&t| (s1, s2, t))
        };
        if let Some(w) = check(s1) {
            return Some(w);
        }
        (0..infos.len()).filter(|&s2| s2 != s1).find_map(|s2| {
            let sup = bits[s1].iter().zip(&bits[s2]).all(|(a, b)| a & b == *a);
            if sup {
                check(s2)
            } else {
                None
            }
        })
    });
    let Some((s1, s2, t)) = found else {
        return OracleVerdict::Compliant;
    };
    let tuple = interner
        .ids
        .iter()
        .find(|(k, &v)| v == t && k.0 == q_space)
        .map(|(k, _)| k.1.clone())
        .expect("interned");
    let d1 = infos[s1]
        .1
        .members
        .iter()
        .map(|&i| product.database(i))
        .find(|db| obs.iter().all(|o| trace_ok(mode, o, db)) && evaluate(query, db).contains(&tuple))
        .expect("witness member");
    let d2 = infos[s2]
        .1
        .members
        .iter()
        .map(|&i| product.database(i))
        .find(|db| !evaluate(query, db).contains(&tuple))
        .expect("witness member");
    OracleVerdict::NonCompliant(Box::new(Witness { d1: complete(d1), d2: complete(d2) }))
}
