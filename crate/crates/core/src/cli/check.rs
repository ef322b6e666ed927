use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use qcomply::engine::{CheckReport, Decision, Engine, EngineConfig, EngineError, SessionStats};
use qcomply::replay::ReplayRequest;
use qcomply::solver::SolverConfig;
use qcomply::template::TemplateConfig;
use rayon::prelude::*;
use serde_json::json;

use super::{io_error, load_inputs, CheckArgs, CliError};

fn config(a: &CheckArgs) -> Result<EngineConfig, CliError> {
    let solvers = if a.solvers.is_empty() {
        vec![SolverConfig::z3()]
    } else {
        a.solvers
            .iter()
            .map(|s| SolverConfig::from_command_line(s).ok_or_else(|| CliError::Usage(format!("bad --solver {s:?}"))))
            .collect::<Result<_, _>>()?
    };
    let template = TemplateConfig {
        total_budget: Duration::from_millis(a.timeout_template_ms),
        probe_budget: Duration::from_millis(a.timeout_check_ms),
        ..TemplateConfig::default()
    };
    Ok(EngineConfig {
        solvers,
        check_budget: Duration::from_millis(a.timeout_check_ms),
        template,
        use_cache: !a.no_cache,
        log_only: a.log_only,
        ..EngineConfig::default()
    })
}

struct QueryLine {
    request: usize,
    query: usize,
    sql: String,
    result: Result<CheckReport, EngineError>,
    micros: u128,
}

fn run_request(e: &Engine, idx: usize, req: &ReplayRequest, cold: bool) -> (Vec<QueryLine>, Option<SessionStats>) {
    if cold {
        e.cache().clear();
    }
    let mut session = match e.begin_request(&req.ctx) {
        Ok(s) => s,
        Err(err) => {
            let line = QueryLine { request: idx, query: 0, sql: String::new(), result: Err(err), micros: 0 };
            return (vec![line], None);
        }
    };
    let mut out = Vec::new();
    for (k, q) in req.queries.iter().enumerate() {
        let start = Instant::now();
        let result = session.check_query(&q.sql, &q.params, &q.rows);
        out.push(QueryLine { request: idx, query: k, sql: q.sql.clone(), result, micros: start.elapsed().as_micros() });
    }
    (out, Some(session.end_request()))
}

fn print_line(l: &QueryLine, as_json: bool) {
    match (&l.result, as_json) {
        (Ok(r), true) => {
            let (decision, reason) = match &r.decision {
                Decision::Allow => ("allow", None),
                Decision::Deny(d) => ("deny", Some(d.to_string())),
            };
            let j = json!({
                "kind": "decision",
                "request": l.request,
                "query": l.query,
                "sql": l.sql,
                "decision": decision,
                "reason": reason,
                "decided_by": r.decided_by.name(),
                "flagged": r.flagged.as_ref().map(|f| f.to_string()),
                "template_cached": r.template_cached,
                "solver_calls": r.solver_calls,
                "micros": l.micros,
            });
            println!("{j}");
        }
        (Ok(r), false) => {
            let verdict = match (&r.decision, &r.flagged) {
                (Decision::Allow, None) => "ALLOW".to_string(),
                (Decision::Allow, Some(f)) => format!("FLAG ({f})"),
                (Decision::Deny(d), _) => format!("DENY ({d})"),
            };
            println!(
                "[{}.{}] {verdict} by {} in {:.1} ms: {}",
                l.request,
                l.query,
                r.decided_by.name(),
                l.micros as f64 / 1000.0,
                l.sql
            );
        }
        (Err(e), true) => {
            println!("{}", json!({"kind": "error", "request": l.request, "query": l.query, "sql": l.sql, "error": e.to_string()}))
        }
        (Err(e), false) => println!("[{}.{}] ERROR {e}: {}", l.request, l.query, l.sql),
    }
}

pub fn run(a: &CheckArgs, show_templates: bool) -> Result<i32, CliError> {
    if a.parallel_requests == 0 {
        return Err(CliError::Usage("--parallel-requests must be at least 1".into()));
    }
    let Some((replay, policy)) = load_inputs(&a.common)? else {
        if a.common.json {
            println!("{}", json!({"kind": "summary", "queries": 0}));
        } else {
            println!("0 queries");
        }
        return Ok(0);
    };
    let engine = Engine::new(policy, config(a)?).map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(path) = &a.cache_load {
        let text = std::fs::read_to_string(path).map_err(io_error(path))?;
        let json: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let n = engine.load_cache(&json).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        log::info!("loaded {n} templates");
    }
    let denied = AtomicU64::new(0);
    let errors = AtomicU64::new(0);
    let totals = Mutex::new(SessionStats::default());
    let handle = |(idx, req): (usize, &ReplayRequest)| {
        let (lines, stats) = run_request(&engine, idx, req, a.cold_cache);
        for l in &lines {
            match &l.result {
                Ok(r) if !r.decision.is_allow() => {
                    denied.fetch_add(1, Ordering::Relaxed);
                }
                Err(_) => {
                    errors.fetch_add(1, Ordering::Relaxed);
                }
                _ => {}
            }
        }
        if let Some(s) = stats {
            add_stats(&mut totals.lock().expect("stats lock"), &s);
        }
        lines
    };
    let requests: Vec<(usize, &ReplayRequest)> = replay.requests.iter().enumerate().collect();
    let all: Vec<Vec<QueryLine>> = if a.parallel_requests > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(a.parallel_requests)
            .build()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        pool.install(|| requests.into_par_iter().map(handle).collect())
    } else {
        requests.into_iter().map(handle).collect()
    };
    for l in all.iter().flatten() {
        print_line(l, a.common.json);
    }
    let t = totals.into_inner().expect("stats lock");
    if show_templates {
        for (i, tpl) in engine.cache().templates().iter().enumerate() {
            if a.common.json {
                let j = qcomply::template::json::to_json(tpl, engine.policy());
                println!("{}", json!({"kind": "template", "index": i, "template": j}));
            } else {
                println!("template {i}:\n{}", tpl.render(&engine.policy().schema));
            }
        }
    }
    if a.common.json {
        println!(
            "{}",
            json!({
                "kind": "summary",
                "queries": t.queries,
                "allows": t.allows,
                "denies": t.denies,
                "flagged": t.flagged,
                "errors": errors.load(Ordering::Relaxed),
                "fast_accepts": t.fast_accepts,
                "cache_hits": t.cache_hits,
                "cache_misses": t.cache_misses,
                "solver_decisions": t.solver_decisions,
                "solver_calls": t.solver_calls,
                "templates_cached": t.templates_cached,
                "cache_size": engine.cache().len(),
            })
        );
    } else {
        println!(
            "{} queries: {} allowed, {} denied, {} flagged, {} errors; {} fast accepts, {} cache hits, {} solver decisions, {} solver calls, {} templates cached",
            t.queries,
            t.allows,
            t.denies,
            t.flagged,
            errors.load(Ordering::Relaxed),
            t.fast_accepts,
            t.cache_hits,
            t.solver_decisions,
            t.solver_calls,
            t.templates_cached
        );
    }
    if let Some(path) = &a.cache_dump {
        let text = serde_json::to_string_pretty(&engine.dump_cache()).expect("serializable");
        std::fs::write(path, text).map_err(io_error(path))?;
    }
    if errors.load(Ordering::Relaxed) > 0 {
        return Ok(2);
    }
    Ok(if denied.load(Ordering::Relaxed) > 0 { 1 } else { 0 })
}

fn add_stats(t: &mut SessionStats, s: &SessionStats) {
    t.queries += s.queries;
    t.allows += s.allows;
    t.denies += s.denies;
    t.flagged += s.flagged;
    t.fast_accepts += s.fast_accepts;
    t.cache_hits += s.cache_hits;
    t.cache_misses += s.cache_misses;
    t.solver_decisions += s.solver_decisions;
    t.solver_calls += s.solver_calls;
    t.templates_cached += s.templates_cached;
}
