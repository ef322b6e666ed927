//! Solver-driven steps of template generation.

use std::collections::BTreeSet;

use super::atoms::CandidateAtom;
use super::param::Parameterized;
use super::{DecisionTemplate, Gen, TemplateError};
use crate::check::{check_strong, CheckError, StrongVerdict};
use crate::smt::{encode_parameterized, BoundsMap, Encoding, TraceItem};
use crate::solver::SolverOutcome;
use crate::sql::basic::{BasicQuery, Operand};

fn compliant(g: &Gen, q: &BasicQuery, trace: &[TraceItem], keep: &[usize]) -> Result<bool, TemplateError> {
    let items: Vec<TraceItem> = keep.iter().map(|&i| trace[i].clone()).collect();
    match check_strong(g.policy, g.ctx, &items, q, g.pool, g.budget()?) {
        Ok(StrongVerdict::Compliant { .. }) => Ok(true),
        Ok(_) => Ok(false),
        Err(CheckError::Solver(e)) => Err(e.into()),
        Err(CheckError::Policy(e)) => Err(TemplateError::NoTemplate(e.to_string())),
    }
}

/// Subset-minimal sub-trace preserving strong compliance, by deletion from the
/// solver-used entries (or the whole trace when that set does not suffice).
pub fn minimize_trace(
    g: &Gen,
    q: &BasicQuery,
    trace: &[TraceItem],
    seed: Option<&BTreeSet<usize>>,
) -> Result<Vec<usize>, TemplateError> {
    let all: Vec<usize> = (0..trace.len()).collect();
    let seeded: Option<Vec<usize>> = seed.map(|s| s.iter().copied().filter(|&i| i < trace.len()).collect());
    let mut cur = match seeded {
        Some(s) if s.len() < all.len() && compliant(g, q, trace, &s)? => s,
        _ if compliant(g, q, trace, &all)? => all,
        _ => return Err(TemplateError::NoTemplate("query is not provably compliant".into())),
    };
    for i in cur.clone() {
        let without: Vec<usize> = cur.iter().copied().filter(|&j| j != i).collect();
        if compliant(g, q, trace, &without)? {
            cur = without;
        }
    }
    Ok(cur)
}

fn bounded(p: &Parameterized, g: &Gen, atoms: &[CandidateAtom], bounds: &BoundsMap) -> crate::smt::SmtScript {
    let encoding = Encoding::Bounded { bounds: bounds.clone(), order_axioms: true };
    encode_parameterized(g.policy, &p.query, &p.trace, atoms, &p.var_types(), encoding)
}

fn sound(g: &Gen, p: &Parameterized, atoms: &[CandidateAtom], bounds: &BoundsMap) -> Result<bool, TemplateError> {
    Ok(g.pool.solve(&bounded(p, g, atoms, bounds), g.budget()?)?.is_unsat())
}

/// Deletion order: atoms least likely to matter are tried first, so that ties
/// between interchangeable atoms resolve towards links to the context and
/// pinned values of unlinked variables.
fn deletion_rank(a: &CandidateAtom, p: &Parameterized) -> u8 {
    let is_param = |o: &Operand| matches!(o, Operand::Param(_));
    let ctx_values: Vec<_> = p.nu.iter().filter(|(o, _)| is_param(o)).map(|(_, v)| v).collect();
    match a {
        CandidateAtom::Lt(..) => 0,
        CandidateAtom::EqVars(x, y) if !is_param(x) && !is_param(y) => 1,
        CandidateAtom::Eq(x, _) if is_param(x) => 2,
        CandidateAtom::Eq(_, v) if ctx_values.contains(&v) => 3,
        CandidateAtom::Eq(..) | CandidateAtom::IsNull(_) => 4,
        CandidateAtom::EqVars(..) => 5,
    }
}

/// Returns the atoms of the solver's core and the deletion-minimized core.
/// Deletion runs over all candidates in a fixed order, so the result does not
/// depend on which core a solver happens to return.
pub fn core_atoms(
    g: &Gen,
    p: &Parameterized,
    candidates: &[CandidateAtom],
    bounds: &BoundsMap,
) -> Result<(Vec<CandidateAtom>, Vec<CandidateAtom>), TemplateError> {
    let script = bounded(p, g, candidates, bounds);
    let solver_core = match g.pool.solve_for_core(&script, g.budget()?, g.cfg.core_window)? {
        SolverOutcome::Unsat(core) => candidates
            .iter()
            .enumerate()
            .filter(|(i, _)| core.contains(&format!("LC_{}", i + 1)))
            .map(|(_, a)| a.clone())
            .collect::<Vec<_>>(),
        _ => return Err(TemplateError::NoTemplate("bounded check with all candidate atoms failed".into())),
    };
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by_key(|&i| deletion_rank(&candidates[i], p));
    let mut keep: Vec<bool> = vec![true; candidates.len()];
    for i in order {
        keep[i] = false;
        let trial: Vec<CandidateAtom> =
            candidates.iter().zip(&keep).filter(|(_, k)| **k).map(|(a, _)| a.clone()).collect();
        if !sound(g, p, &trial, bounds)? {
            keep[i] = true;
        }
    }
    let core = candidates.iter().zip(&keep).filter(|(_, k)| **k).map(|(a, _)| a.clone()).collect();
    Ok((solver_core, core))
}

/// Advances `c` to the next `k`-combination of `0..n` in lexicographic order.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    for i in (0..k).rev() {
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Smallest subset of `augmented` whose conjunction is sound on the bounded
/// encoding, enumerating by increasing size and lexicographically within a
/// size. Subsets of known-unsound sets are skipped. Falls back to `core`
/// when the search is too large or runs out of time.
pub fn smallest_sound_subset(
    g: &Gen,
    p: &Parameterized,
    augmented: &[CandidateAtom],
    core: &[CandidateAtom],
    bounds: &BoundsMap,
) -> Result<Vec<CandidateAtom>, TemplateError> {
    let n = augmented.len();
    if n > g.cfg.max_search_atoms {
        return Ok(core.to_vec());
    }
    let mut unsound: Vec<BTreeSet<usize>> = Vec::new();
    for k in 0..=core.len().min(n) {
        let mut c: Vec<usize> = (0..k).collect();
        loop {
            let set: BTreeSet<usize> = c.iter().copied().collect();
            if !unsound.iter().any(|u| set.is_subset(u)) {
                let atoms: Vec<CandidateAtom> = c.iter().map(|&i| augmented[i].clone()).collect();
                let ok = match g.budget() {
                    Ok(_) => sound(g, p, &atoms, bounds)?,
                    Err(_) => return Ok(core.to_vec()),
                };
                if ok {
                    return Ok(atoms);
                }
                unsound.push(set);
            }
            if k == 0 || !next_combination(&mut c, n) {
                break;
            }
        }
    }
    Ok(core.to_vec())
}

/// Soundness of a finished template on the unbounded encoding.
pub fn verify_unbounded(g: &Gen, t: &DecisionTemplate) -> Result<bool, TemplateError> {
    let script = t.soundness_script(g.policy, Encoding::Unbounded);
    Ok(g.pool.solve(&script, g.budget()?)?.is_unsat())
}
