//! Random tiny instances decided by the solver and by exhaustive enumeration.

use std::time::Duration;

use qcomply::check::{check_strong, StrongVerdict};
use qcomply::engine::EngineConfig;
use qcomply::oracle::{oracle_decide, Mode, OracleVerdict};
use qcomply::solver::SolverPool;
use qcomply::template::{generate_template, TemplateConfig};
use rand::rngs::StdRng;
use rand::SeedableRng;

use crate::gen::instance;
use crate::{Corpus, Outcome};

/// Tolerances.
const SEED: u64 = 0x5eed_0004;
const INSTANCES: usize = 240;
const MIN_DECIDED: usize = 200;
const SOLVER_BUDGET: Duration = Duration::from_secs(5);
/// Templates harvested for the soundness audit.
const MAX_HARVEST: usize = 25;

#[derive(Default, Debug)]
struct Tally {
    decided: usize,
    compliant_agree: usize,
    noncompliant_agree: usize,
    /// Solver proved compliance but the oracle found a witness: a soundness bug.
    unsound: usize,
    /// Solver found no proof although the oracle says compliant within its bound.
    incomplete: usize,
    unknown: usize,
    exhausted: usize,
}

pub fn criterion4(corpus: &mut Corpus) -> Outcome {
    let mut rng = StdRng::seed_from_u64(SEED);
    let pool = SolverPool::new(EngineConfig::default().solvers);
    let mut t = Tally::default();
    let mut first_unsound = None;
    let mut harvested = 0;
    for n in 0..INSTANCES {
        let inst = instance(&mut rng);
        let items = inst.trace_items();
        let solver = match check_strong(&inst.policy, &inst.ctx, &items, &inst.query, &pool, SOLVER_BUDGET) {
            Ok(v) => v,
            Err(e) => {
                t.unknown += 1;
                log::warn!("instance {n}: {e}");
                continue;
            }
        };
        if let StrongVerdict::Unknown(_) = solver {
            t.unknown += 1;
            continue;
        }
        let dom = inst.dom();
        let strong = oracle_decide(Mode::Strong, &inst.query, &inst.trace, &inst.policy, &inst.ctx, &dom);
        if strong == OracleVerdict::Exhausted {
            t.exhausted += 1;
            continue;
        }
        t.decided += 1;
        let proved = matches!(solver, StrongVerdict::Compliant { .. });
        match (proved, &strong) {
            (true, OracleVerdict::Compliant) => t.compliant_agree += 1,
            (false, OracleVerdict::NonCompliant(_)) => t.noncompliant_agree += 1,
            (false, _) => t.incomplete += 1,
            (true, _) => {}
        }
        if proved {
            let compliance = oracle_decide(Mode::Compliance, &inst.query, &inst.trace, &inst.policy, &inst.ctx, &dom);
            if matches!(strong, OracleVerdict::NonCompliant(_)) || matches!(compliance, OracleVerdict::NonCompliant(_)) {
                t.unsound += 1;
                first_unsound.get_or_insert_with(|| format!("instance {n}: {}", inst.describe()));
            } else if harvested < MAX_HARVEST && !items.is_empty() {
                let cfg = TemplateConfig::default();
                if let Ok(g) = generate_template(&inst.query, &items, &inst.ctx, &inst.policy, &pool, &cfg, None) {
                    corpus.templates.push((format!("random instance {n}"), inst.policy.clone(), g.template.into_inner()));
                    harvested += 1;
                }
            }
        }
    }
    let pass = t.unsound == 0 && t.decided >= MIN_DECIDED;
    let mut detail = format!(
        "{} of {INSTANCES} decided (min {MIN_DECIDED}): {} compliant agree, {} noncompliant agree, \
         {} unsound, {} unproved-but-compliant; excluded {} solver unknown, {} oracle exhausted",
        t.decided, t.compliant_agree, t.noncompliant_agree, t.unsound, t.incomplete, t.unknown, t.exhausted
    );
    if let Some(u) = first_unsound {
        detail.push_str(&format!("; first unsound {u}"));
    }
    Outcome::check(pass, detail)
}
