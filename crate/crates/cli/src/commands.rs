use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, ensure, Context, Result};
use hitlbo_core::bo::bounds::{bound_report, cell_ub, dominance_factor, BoundReport};
use hitlbo_core::reduction::{InstanceRef, ReductionDescriptor};
use hitlbo_core::search::EvalRecord;
use hitlbo_core::suites::{self, SuiteReport};
use hitlbo_core::{
    run_bo, Assignment, BoConfig, BoRunResult, Cell, ExpertQueue, PartialAssignment, PriorSpec, ReducedFunction,
    SearchConfig, SearchResult, SearchRun,
};
use log::info;
use serde::{Deserialize, Serialize};

use crate::artifact::{now_iso, read_json, write_json, Provenance};
use crate::experts::{self, ExpertMode};
use crate::instance::{sha256_hex, InstanceSpec, Loaded};
use crate::server::{self, OnTimeout, Registry};
use crate::{BenchArgs, BoArgs, BoundsArgs, BruteArgs, Outcome, ReduceArgs, SearchArgs, ServeArgs};

fn emit<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    match out {
        Some(path) => write_json(path, value),
        None => {
            let mut stdout = std::io::stdout().lock();
            serde_json::to_writer_pretty(&mut stdout, value)?;
            writeln!(stdout)?;
            Ok(())
        }
    }
}

fn full_domain(loaded: &Loaded, seed: u64, scale: f64) -> Result<ReducedFunction> {
    let n = loaded.instance.variable_count();
    ensure!(n < 64, "instance has {n} variables, the domain must fit in 64 bits");
    let d1 = 1u64 << n;
    Ok(ReducedFunction::build(loaded.instance.clone(), seed, scale, PartialAssignment::new(), 1, d1)?)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ReductionDocument {
    pub provenance: Provenance,
    pub domain_size: u64,
    pub descriptor: ReductionDescriptor,
}

pub fn reduce(a: &ReduceArgs) -> Result<Outcome> {
    let loaded = a.instance.spec()?.load()?;
    let rf = full_domain(&loaded, a.seed, a.scale)?;
    let descriptor = rf.descriptor(loaded.reference.clone());
    let doc = ReductionDocument {
        provenance: Provenance::new("reduce", a.seed, &(&loaded.reference.sha256, a.scale))?,
        domain_size: rf.domain_size(),
        descriptor,
    };
    emit(a.out.as_deref(), &doc)?;
    Ok(Outcome::Done)
}

#[derive(Debug, Serialize)]
struct BruteDocument {
    provenance: Provenance,
    instance: InstanceRef,
    value: f64,
    witness: Assignment,
    epsilon: f64,
    epsilon_optimal_count: u64,
}

pub fn brute(a: &BruteArgs) -> Result<Outcome> {
    let loaded = a.instance.spec()?.load()?;
    let opt = loaded.instance.brute_force_optimum(a.epsilon)?;
    let doc = BruteDocument {
        provenance: Provenance::new("brute", 0, &(&loaded.reference.sha256, a.epsilon))?,
        instance: loaded.reference,
        value: opt.value,
        witness: opt.witness,
        epsilon: opt.epsilon,
        epsilon_optimal_count: opt.epsilon_optimal_count,
    };
    emit(a.out.as_deref(), &doc)?;
    Ok(Outcome::Done)
}

#[derive(Debug, Serialize)]
struct BoDocument {
    provenance: Provenance,
    descriptor: ReductionDescriptor,
    prior: PriorSpec,
    config: BoConfig,
    best_assignment: Assignment,
    best_objective: f64,
    result: BoRunResult,
}

pub fn bo(a: &BoArgs) -> Result<Outcome> {
    let loaded = a.instance.spec()?.load()?;
    let rf = full_domain(&loaded, a.seed, a.scale)?;
    let prior = PriorSpec::wiener(a.variance)?;
    let cfg = BoConfig { budget: a.x, acquisition: a.acquisition.acquisition(), seed: a.seed };
    let (lo, hi) = rf.bounds();
    let result = run_bo(|x| rf.eval(x).expect("point inside the domain"), lo, hi, &prior, &cfg)?;
    let best_assignment = rf.decode(result.best_point)?;
    let best_objective = loaded.instance.evaluate(&best_assignment)?;
    let doc = BoDocument {
        provenance: Provenance::new("bo", a.seed, &(&loaded.reference.sha256, a.scale, &prior, &cfg))?,
        descriptor: rf.descriptor(loaded.reference),
        prior,
        config: cfg,
        best_assignment,
        best_objective,
        result,
    };
    emit(a.out.as_deref(), &doc)?;
    Ok(Outcome::Done)
}

#[derive(Debug, Serialize)]
struct BoundsDocument {
    #[serde(flatten)]
    report: BoundReport,
    /// Undefined for small `t`.
    dominance_factor: Option<f64>,
    cell_ub: Option<f64>,
}

pub fn bounds(a: &BoundsArgs) -> Result<Outcome> {
    let report = bound_report(a.t, a.n, a.epsilon, a.exponent.into())?;
    let cell = match a.val {
        Some(val) => {
            ensure!(a.t.fract() == 0.0 && a.n.fract() == 0.0, "the cell bound needs integer --t and --n");
            ensure!(a.n < u64::MAX as f64, "the cell bound needs --n below 2^64");
            Some(cell_ub(val, a.t as u64, a.n as u64))
        }
        None => None,
    };
    let doc = BoundsDocument { report, dominance_factor: dominance_factor(a.t).ok(), cell_ub: cell };
    emit(None, &doc)?;
    Ok(Outcome::Done)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpertSetting {
    pub mode: ExpertMode,
    pub variance: f64,
}

/// `run.json` written by a finished search.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub provenance: Provenance,
    pub created_at: String,
    pub instance: InstanceRef,
    pub config: SearchConfig,
    pub expert: ExpertSetting,
    pub result: SearchResult,
    pub cells: Vec<Cell>,
}

/// Everything needed to pick a suspended search back up.
#[derive(Debug, Serialize, Deserialize)]
pub struct SuspendedState {
    pub provenance: Provenance,
    pub suspended_at: String,
    pub instance: InstanceSpec,
    pub reference: InstanceRef,
    pub expert: ExpertSetting,
    pub pending_query: String,
    pub run: SearchRun,
}

pub const RUN_RECORD: &str = "run.json";
pub const TRACE_CSV: &str = "trace.csv";
pub const SUSPENDED: &str = "suspended.json";

fn search_provenance(reference: &InstanceRef, cfg: &SearchConfig, expert: ExpertSetting) -> Result<Provenance> {
    Provenance::new("search", cfg.seed, &(&reference.sha256, cfg, expert))
}

/// Stable across expert modes so a run resumed under another mode keeps
/// its query ids.
fn search_run_id(reference: &InstanceRef, cfg: &SearchConfig) -> Result<String> {
    let cfg = SearchConfig { deadline_hint_secs: None, ..cfg.clone() };
    let hash = sha256_hex(&serde_json::to_vec(&(&reference.sha256, cfg))?);
    Ok(format!("run-{}", &hash[..12]))
}

pub fn write_trace(path: &Path, run_id: &str, evals: &[EvalRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(["run_id", "cell", "lo", "hi", "sample", "iteration", "point", "value"])?;
    for e in evals {
        w.write_record([
            run_id.to_string(),
            e.cell.to_string(),
            e.lo.to_string(),
            e.hi.to_string(),
            e.sample.to_string(),
            e.iteration.to_string(),
            e.point.to_string(),
            e.value.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn absolute(spec: InstanceSpec) -> InstanceSpec {
    let path = spec.path.map(|p| fs::canonicalize(&p).map(|a| a.to_string_lossy().into_owned()).unwrap_or(p));
    InstanceSpec { path, ..spec }
}

pub fn search(a: &SearchArgs) -> Result<Outcome> {
    let (spec, reference, run, expert) = match &a.resume {
        Some(token) => {
            let saved: SuspendedState =
                read_json(token).with_context(|| format!("cannot resume from {}", token.display()))?;
            let loaded = saved.instance.load()?;
            if loaded.reference.sha256 != saved.reference.sha256 {
                bail!("instance {} changed since the run was suspended", saved.reference.path);
            }
            let mut run = saved.run;
            run.attach(loaded.instance.clone())?;
            let expert = ExpertSetting { mode: a.expert.unwrap_or(saved.expert.mode), variance: saved.expert.variance };
            info!("resuming {} at query {}", run.run_id(), saved.pending_query);
            (saved.instance, saved.reference, run, expert)
        }
        None => {
            let spec = absolute(a.instance.spec()?);
            let loaded = spec.load()?;
            let cfg = SearchConfig {
                s: a.s,
                x: a.x,
                max_expansions: a.max_expansions,
                epsilon: a.epsilon,
                acquisition: a.acquisition.acquisition(),
                seed: a.seed,
                scale: a.scale,
                deadline_hint_secs: (a.expert == Some(ExpertMode::Remote)).then_some(a.timeout),
            };
            let run = SearchRun::new(search_run_id(&loaded.reference, &cfg)?, loaded.instance.clone(), cfg)?;
            let expert = ExpertSetting { mode: a.expert.unwrap_or(ExpertMode::Sim), variance: a.variance };
            (spec, loaded.reference, run, expert)
        }
    };
    let cfg = run.config().clone();
    let provenance = search_provenance(&reference, &cfg, expert)?;

    let queue = Arc::new(ExpertQueue::new());
    let registry = Registry::new(queue.clone());
    registry.register(&run, Some(reference.clone()), expert.mode);
    if expert.mode == ExpertMode::Remote {
        let addr = server::spawn(registry.clone(), &a.bind)?;
        eprintln!("expert bridge listening on http://{addr}/api/v1");
    }
    let mut boxed = experts::build(expert.mode, expert.variance, &queue, Duration::from_secs(a.timeout))?;

    fs::create_dir_all(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;
    match server::drive(&registry, run, &mut boxed, OnTimeout::Suspend)? {
        server::Outcome::Finished(run) => {
            let result = run.result().context("finished run has no result")?;
            write_trace(&a.out.join(TRACE_CSV), run.run_id(), run.evaluations())?;
            let record = RunRecord {
                provenance,
                created_at: now_iso(),
                instance: reference,
                config: cfg,
                expert,
                result,
                cells: run.cells().to_vec(),
            };
            write_json(&a.out.join(RUN_RECORD), &record)?;
            let r = &record.result;
            println!(
                "best_value={} best_objective={} best_point={} evaluations={} expert_queries={} stop={}",
                r.best_value,
                r.best_objective,
                r.best_point,
                r.total_evaluations,
                r.expert_queries,
                r.stop_reason.map(|s| format!("{s:?}")).unwrap_or_default()
            );
            Ok(Outcome::Done)
        }
        server::Outcome::Suspended { run, query_id } => {
            let path: PathBuf = a.out.join(SUSPENDED);
            let state = SuspendedState {
                provenance,
                suspended_at: now_iso(),
                instance: spec,
                reference,
                expert,
                pending_query: query_id.clone(),
                run,
            };
            write_json(&path, &state)?;
            let token = path.to_string_lossy().into_owned();
            println!("suspended: query {query_id} has no answer");
            println!("resume-token: {token}");
            Ok(Outcome::Suspended { token })
        }
    }
}

pub fn serve(a: &ServeArgs) -> Result<Outcome> {
    let registry = Registry::new(Arc::new(ExpertQueue::new()));
    let listener = std::net::TcpListener::bind(&a.bind).with_context(|| format!("cannot bind {}", a.bind))?;
    eprintln!("expert bridge listening on http://{}/api/v1", listener.local_addr()?);
    server::serve_blocking(registry, listener)?;
    Ok(Outcome::Done)
}

pub fn bench(a: &BenchArgs) -> Result<Outcome> {
    let names: Vec<&str> = if a.suite == "all" { suites::SUITES.to_vec() } else { vec![a.suite.as_str()] };
    let mut reports: Vec<SuiteReport> = Vec::new();
    for name in names {
        let report = suites::run_suite(name)?;
        println!("{report}");
        reports.push(report);
    }
    if let Some(out) = &a.out {
        write_json(out, &reports)?;
    }
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed).map(|r| r.suite.as_str()).collect();
    if !failed.is_empty() {
        bail!("failed suites: {}", failed.join(", "));
    }
    Ok(Outcome::Done)
}
