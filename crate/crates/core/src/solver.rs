//! External SMT solvers driven as subprocesses, raced against each other.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{mpsc, Arc};
use std::thread;
use std::time::{Duration, Instant};

use crate::smt::SmtScript;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SolverConfig {
    pub name: String,
    /// Executable followed by its arguments; the script arrives on stdin.
    pub command: Vec<String>,
    pub supports_cores: bool,
}

impl SolverConfig {
    /// Parses a shell-like command line such as `"z3 -in"`.
    pub fn from_command_line(line: &str) -> Option<SolverConfig> {
        let command: Vec<String> = line.split_whitespace().map(str::to_string).collect();
        let exe = command.first()?;
        let name = std::path::Path::new(exe).file_name()?.to_string_lossy().into_owned();
        Some(SolverConfig { name, command, supports_cores: true })
    }

    pub fn z3() -> SolverConfig {
        SolverConfig::from_command_line("z3 -in").expect("non-empty")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum UnknownReason {
    Timeout,
    SolverError(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SolverOutcome {
    Unsat(BTreeSet<String>),
    Sat,
    Unknown(UnknownReason),
}

impl SolverOutcome {
    pub fn is_unsat(&self) -> bool {
        matches!(self, SolverOutcome::Unsat(_))
    }

    pub fn is_decisive(&self) -> bool {
        !matches!(self, SolverOutcome::Unknown(_))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum SolverError {
    #[error("could not start solver `{command}`: {message}")]
    Spawn { command: String, message: String },
    #[error("no solver configured")]
    NoSolvers,
}

/// Parses solver stdout. Anything unexpected counts as an error for that solver.
pub fn parse_output(out: &str) -> SolverOutcome {
    let mut lines = out.lines().map(str::trim).filter(|l| !l.is_empty());
    match lines.next() {
        Some("sat") => SolverOutcome::Sat,
        Some("unsat") => {
            let rest: String = lines.collect::<Vec<_>>().join(" ");
            let core = rest
                .find('(')
                .and_then(|start| rest[start..].find(')').map(|end| &rest[start + 1..start + end]))
                .map(|s| s.split_whitespace().map(str::to_string).collect())
                .unwrap_or_default();
            SolverOutcome::Unsat(core)
        }
        Some("unknown") => SolverOutcome::Unknown(UnknownReason::SolverError("solver answered unknown".into())),
        Some("timeout") => SolverOutcome::Unknown(UnknownReason::Timeout),
        Some(other) => SolverOutcome::Unknown(UnknownReason::SolverError(format!("unexpected output: {other}"))),
        None => SolverOutcome::Unknown(UnknownReason::SolverError("no output".into())),
    }
}

fn run_child(
    mut child: Child,
    text: Arc<String>,
    deadline: Instant,
    cancel: Arc<AtomicBool>,
    outer: Arc<AtomicBool>,
) -> SolverOutcome {
    let mut stdin = child.stdin.take().expect("piped");
    let writer = thread::spawn(move || {
        let _ = stdin.write_all(text.as_bytes());
    });
    let mut stdout = child.stdout.take().expect("piped");
    let reader = thread::spawn(move || {
        let mut s = String::new();
        let _ = stdout.read_to_string(&mut s);
        s
    });
    loop {
        match child.try_wait() {
            Ok(Some(_)) => break,
            Ok(None) => {}
            Err(e) => return SolverOutcome::Unknown(UnknownReason::SolverError(e.to_string())),
        }
        if cancel.load(Ordering::Relaxed) || outer.load(Ordering::Relaxed) || Instant::now() >= deadline {
            let _ = child.kill();
            let _ = child.wait();
            let _ = writer.join();
            let _ = reader.join();
            return SolverOutcome::Unknown(UnknownReason::Timeout);
        }
        thread::sleep(Duration::from_millis(1));
    }
    let _ = writer.join();
    let out = reader.join().unwrap_or_default();
    parse_output(&out)
}

/// Runs all solvers on the text. Returns the first decisive answer or, with a
/// window, the smallest core received within the window after the first unsat.
fn race(
    text: String,
    configs: &[SolverConfig],
    budget: Duration,
    window: Option<Duration>,
    outer: &Arc<AtomicBool>,
) -> Result<SolverOutcome, SolverError> {
    if configs.is_empty() {
        return Err(SolverError::NoSolvers);
    }
    let text = Arc::new(text);
    let deadline = Instant::now() + budget;
    let cancel = Arc::new(AtomicBool::new(false));
    let (tx, rx) = mpsc::channel();
    let mut running = 0;
    let mut spawn_error = None;
    for cfg in configs {
        let child = Command::new(&cfg.command[0])
            .args(&cfg.command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn();
        match child {
            Ok(child) => {
                running += 1;
                let (text, cancel, tx, outer) = (text.clone(), cancel.clone(), tx.clone(), outer.clone());
                thread::spawn(move || {
                    let _ = tx.send(run_child(child, text, deadline, cancel, outer));
                });
            }
            Err(e) => {
                spawn_error = Some(SolverError::Spawn { command: cfg.command.join(" "), message: e.to_string() });
            }
        }
    }
    drop(tx);
    if running == 0 {
        return Err(spawn_error.unwrap_or(SolverError::NoSolvers));
    }
    let mut best: Option<BTreeSet<String>> = None;
    let mut last_unknown = SolverOutcome::Unknown(UnknownReason::Timeout);
    let mut stop_at = deadline + Duration::from_millis(50);
    while running > 0 {
        let now = Instant::now();
        if now >= stop_at {
            break;
        }
        match rx.recv_timeout(stop_at - now) {
            Ok(outcome) => {
                running -= 1;
                match outcome {
                    SolverOutcome::Sat if best.is_none() => {
                        cancel.store(true, Ordering::Relaxed);
                        return Ok(SolverOutcome::Sat);
                    }
                    SolverOutcome::Sat => {}
                    SolverOutcome::Unsat(core) => {
                        let smaller = best.as_ref().is_none_or(|b| core.len() < b.len());
                        if smaller {
                            best = Some(core);
                        }
                        match window {
                            None => break,
                            Some(w) => stop_at = stop_at.min(Instant::now() + w),
                        }
                    }
                    u @ SolverOutcome::Unknown(_) => last_unknown = u,
                }
            }
            Err(_) => break,
        }
    }
    cancel.store(true, Ordering::Relaxed);
    Ok(match best {
        Some(core) => SolverOutcome::Unsat(core),
        None => last_unknown,
    })
}

/// Races the configured solvers on a script.
pub fn solve(script: &SmtScript, configs: &[SolverConfig], budget: Duration) -> Result<SolverOutcome, SolverError> {
    let labels: BTreeSet<String> = script.labels().into_iter().collect();
    let out = race(script.render(), configs, budget, None, &Arc::default())?;
    Ok(filter_core(out, &labels))
}

fn filter_core(out: SolverOutcome, labels: &BTreeSet<String>) -> SolverOutcome {
    match out {
        SolverOutcome::Unsat(core) => SolverOutcome::Unsat(core.into_iter().filter(|l| labels.contains(l)).collect()),
        o => o,
    }
}

/// Like [`solve`], collecting cores for `window` after the first unsat answer
/// and returning the smallest. The core is verified by re-solving the script
/// restricted to it; if that fails, every label is returned.
pub fn solve_for_core(
    script: &SmtScript,
    configs: &[SolverConfig],
    budget: Duration,
    window: Duration,
) -> Result<SolverOutcome, SolverError> {
    let labels: BTreeSet<String> = script.labels().into_iter().collect();
    let core_configs: Vec<SolverConfig> = configs.iter().filter(|c| c.supports_cores).cloned().collect();
    let configs = if core_configs.is_empty() { configs.to_vec() } else { core_configs };
    let out = filter_core(race(script.render(), &configs, budget, Some(window), &Arc::default())?, &labels);
    if let SolverOutcome::Unsat(core) = &out {
        if core.len() < labels.len() {
            let check = race(script.restricted(core).render(), &configs, budget, None, &Arc::default())?;
            if !check.is_unsat() {
                return Ok(SolverOutcome::Unsat(labels));
            }
        }
    }
    Ok(out)
}

thread_local! {
    static THREAD_CALLS: std::cell::Cell<u64> = const { std::cell::Cell::new(0) };
}

/// Solver calls issued from the current thread through any pool.
pub fn thread_calls() -> u64 {
    THREAD_CALLS.with(|c| c.get())
}

/// A solver configuration plus call counting, shared by sessions.
#[derive(Debug)]
pub struct SolverPool {
    pub configs: Vec<SolverConfig>,
    calls: AtomicU64,
}

impl SolverPool {
    pub fn new(configs: Vec<SolverConfig>) -> SolverPool {
        SolverPool { configs, calls: AtomicU64::new(0) }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    fn count(&self, n: u64) {
        self.calls.fetch_add(n, Ordering::Relaxed);
        THREAD_CALLS.with(|c| c.set(c.get() + n));
    }

    pub fn solve(&self, script: &SmtScript, budget: Duration) -> Result<SolverOutcome, SolverError> {
        self.count(1);
        solve(script, &self.configs, budget)
    }

    pub fn solve_for_core(
        &self,
        script: &SmtScript,
        budget: Duration,
        window: Duration,
    ) -> Result<SolverOutcome, SolverError> {
        self.count(1);
        solve_for_core(script, &self.configs, budget, window)
    }

    /// Runs several scripts concurrently. As soon as `done(i, outcome)` holds
    /// for some finished script, the others are cancelled. Returns every
    /// outcome; cancelled scripts report a timeout.
    pub fn solve_until(
        &self,
        scripts: &[&SmtScript],
        budget: Duration,
        done: impl Fn(usize, &SolverOutcome) -> bool,
    ) -> Vec<Result<SolverOutcome, SolverError>> {
        self.count(scripts.len() as u64);
        let stop = Arc::new(AtomicBool::new(false));
        let (tx, rx) = mpsc::channel();
        let mut results: Vec<Option<Result<SolverOutcome, SolverError>>> = vec![None; scripts.len()];
        thread::scope(|s| {
            for (i, script) in scripts.iter().enumerate() {
                let (tx, stop) = (tx.clone(), stop.clone());
                let configs = &self.configs;
                s.spawn(move || {
                    let labels: BTreeSet<String> = script.labels().into_iter().collect();
                    let r = race(script.render(), configs, budget, None, &stop).map(|o| filter_core(o, &labels));
                    let _ = tx.send((i, r));
                });
            }
            drop(tx);
            for (i, r) in rx {
                if let Ok(o) = &r {
                    if done(i, o) {
                        stop.store(true, Ordering::Relaxed);
                    }
                }
                results[i] = Some(r);
            }
        });
        results.into_iter().map(|r| r.unwrap_or(Ok(SolverOutcome::Unknown(UnknownReason::Timeout)))).collect()
    }
}
