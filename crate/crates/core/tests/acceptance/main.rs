//! Acceptance suite: one PASS/FAIL line per criterion.

#[path = "../common/mod.rs"]
mod common;

mod agreement;
mod calendar;
#[allow(dead_code)]
mod gen;
mod noninterference;
mod rewrites;
mod soundness;

use std::time::Instant;

use qcomply::template::DecisionTemplate;

pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    pub fn check(pass: bool, detail: impl Into<String>) -> Outcome {
        Outcome { pass, detail: detail.into() }
    }
}

/// Templates produced by earlier criteria, audited by criterion 5.
#[derive(Default)]
pub struct Corpus {
    pub templates: Vec<(String, qcomply::schema::PolicyBundle, DecisionTemplate)>,
}

fn main() {
    let filter: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |n: u32| filter.as_ref().is_none_or(|f| f.contains(&n));
    let mut corpus = Corpus::default();
    let mut failed = 0;
    let mut run = |n: u32, name: &str, f: &mut dyn FnMut(&mut Corpus) -> Outcome, corpus: &mut Corpus| {
        if !wanted(n) {
            return;
        }
        let start = Instant::now();
        let o = f(corpus);
        let secs = start.elapsed().as_secs_f64();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {n} [{name}]: {verdict} ({secs:.1} s) {}", o.detail);
        if !o.pass {
            failed += 1;
        }
    };
    run(1, "calendar end-to-end", &mut calendar::criterion1, &mut corpus);
    run(2, "generalization hit", &mut calendar::criterion2, &mut corpus);
    run(3, "noncompliance", &mut calendar::criterion3, &mut corpus);
    run(4, "solver/oracle agreement", &mut agreement::criterion4, &mut corpus);
    run(8, "IN-splitting", &mut calendar::criterion8, &mut corpus);
    run(5, "template soundness audit", &mut soundness::criterion5, &mut corpus);
    run(6, "rewrite equivalence", &mut rewrites::criterion6, &mut corpus);
    run(7, "noninterference simulation", &mut noninterference::criterion7, &mut corpus);
    run(9, "performance (informational)", &mut calendar::criterion9, &mut corpus);
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
