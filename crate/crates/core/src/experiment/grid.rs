use std::collections::BTreeSet;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{read_records, AccessLog, DomainDir, ExperimentConfig, ExperimentError, Scope};
use crate::construction::{build_initial_domain, ConstructionResult, DomainDescription, Prompts};
use crate::feedback::FeedbackCase;
use crate::generator::{
    Backend, BackendConfig, BackendKind, Defect, History, MutationBackend, RemoteBackend, ScriptedBackend,
};
use crate::hde::{hde_domain, to_f64, EvalCase, Fraction, HdeBreakdown};
use crate::pddl::Domain;
use crate::planner::PlannerConfig;
use crate::search::{run_pipeline, PipelineConfig, PipelineKind, RunResult, Termination};
use crate::seed::stable_seed;
use crate::text::print_domain;

pub const RECORDS_FILE: &str = "records.jsonl";

/// One grid cell: a single trial of one pipeline on one domain and class.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Coord {
    pub domain: String,
    pub pipeline: PipelineKind,
    pub class: String,
    pub trial: usize,
}

impl Coord {
    fn artifact_dir(&self, out: &Path) -> PathBuf {
        out.join("trials")
            .join(&self.domain)
            .join(self.pipeline.as_str())
            .join(&self.class)
            .join(format!("{:03}", self.trial))
    }
}

pub fn trial_seed(base: u64, c: &Coord) -> u64 {
    stable_seed(&[
        &base.to_be_bytes(),
        c.domain.as_bytes(),
        c.pipeline.as_str().as_bytes(),
        c.class.as_bytes(),
        &(c.trial as u64).to_be_bytes(),
    ])
}

/// Grid cells in (domain, pipeline, class, trial) order. Trials are split
/// evenly over classes; earlier classes take any remainder.
pub fn coordinates(cfg: &ExperimentConfig) -> Vec<Coord> {
    let classes = cfg.description_classes.len();
    let mut out = Vec::new();
    for domain in &cfg.domains {
        for &pipeline in &cfg.pipelines {
            for (ci, class) in cfg.description_classes.iter().enumerate() {
                let n = cfg.trials / classes + usize::from(ci < cfg.trials % classes);
                out.extend((0..n).map(|trial| Coord {
                    domain: domain.clone(),
                    pipeline,
                    class: class.clone(),
                    trial,
                }));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    #[serde(flatten)]
    pub coord: Coord,
    pub seed: u64,
    /// Present iff construction succeeded.
    pub hde: Option<HdeBreakdown>,
    pub score: f64,
    pub termination: Termination,
    pub llm_calls: usize,
    pub construction_calls: usize,
    pub expansions: usize,
    pub wall_time_ms: u64,
    pub error: Option<String>,
}

impl TrialRecord {
    /// Exact aggregate HDE; 0 without a breakdown.
    pub fn exact_score(&self) -> Fraction {
        self.hde
            .as_ref()
            .map_or(Fraction::from_integer(0), HdeBreakdown::aggregate)
    }
}

/// A trial's record plus what it produced.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub record: TrialRecord,
    pub construction: Option<ConstructionResult>,
    pub construction_transcript: Option<History>,
    pub run: Option<RunResult>,
}

/// Reference material for one domain, each part read under its own scope.
#[derive(Debug, Clone)]
pub struct DomainAssets {
    pub description: DomainDescription,
    pub reference: Domain,
    pub feedback: Vec<FeedbackCase>,
    pub eval: Vec<EvalCase>,
    pub oracle: DomainDir,
}

impl DomainAssets {
    pub fn load(cfg: &ExperimentConfig, domain: &str, log: &AccessLog) -> Result<Self, ExperimentError> {
        let eval_dir = cfg.domain_dir(domain, Scope::Evaluation, log);
        Ok(DomainAssets {
            description: cfg.domain_dir(domain, Scope::Construction, log).description()?,
            reference: eval_dir.domain()?,
            feedback: eval_dir.feedback_cases()?,
            eval: eval_dir.eval_cases()?,
            oracle: cfg.domain_dir(domain, Scope::Oracle, log),
        })
    }
}

fn resolve(dir: &DomainDir, path: &Path) -> Result<String, ExperimentError> {
    if path.is_absolute() {
        fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))
    } else {
        dir.read(path)
    }
}

/// Backend for one trial. Relative script and defect paths resolve inside
/// the domain directory.
pub fn build_backend(cfg: &BackendConfig, oracle: &DomainDir, seed: u64) -> Result<Box<dyn Backend>, ExperimentError> {
    match cfg.kind {
        BackendKind::Remote => {
            let cfg = BackendConfig { seed, ..cfg.clone() };
            let b = RemoteBackend::from_config(&cfg).map_err(|e| ExperimentError::Config(e.to_string()))?;
            Ok(Box::new(b))
        }
        BackendKind::Scripted => {
            let path = cfg
                .script_path
                .as_ref()
                .ok_or_else(|| ExperimentError::Config("scripted backend requires script_path".into()))?;
            Ok(Box::new(ScriptedBackend::from_script(&resolve(oracle, path)?)))
        }
        BackendKind::Mutation => {
            let reference = oracle.domain()?;
            let defects = match &cfg.defect_spec {
                Some(p) => {
                    Defect::parse_spec(&resolve(oracle, p)?).map_err(|e| ExperimentError::Config(e.to_string()))?
                }
                None => Vec::new(),
            };
            let b = MutationBackend::new(&reference, defects, cfg.repair_probability, seed)
                .map_err(|e| ExperimentError::Config(e.to_string()))?;
            Ok(Box::new(b))
        }
    }
}

/// Every predicate named in a feedback problem's init or goal must be
/// described when plan feedback is in use.
pub fn check_description_coverage(desc: &DomainDescription, cases: &[FeedbackCase]) -> Result<(), ExperimentError> {
    let missing: BTreeSet<&str> = cases
        .iter()
        .flat_map(|c| c.problem.init.iter().chain(&c.problem.goal))
        .map(|a| a.predicate.as_str())
        .filter(|p| !desc.predicates.contains_key(*p))
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(ExperimentError::Config(format!(
            "description lacks predicates used by feedback problems: {}",
            missing.into_iter().collect::<Vec<_>>().join(", ")
        )))
    }
}

fn prompts(cfg: &ExperimentConfig) -> Result<Prompts, ExperimentError> {
    match &cfg.prompts_dir {
        Some(d) => Prompts::load(d).map_err(|e| ExperimentError::io(d, e)),
        None => Ok(Prompts::builtin()),
    }
}

/// Construction, refinement and scoring for one coordinate. Errors end up
/// in the record.
pub fn run_trial(cfg: &ExperimentConfig, coord: &Coord, assets: &DomainAssets, prompts: &Prompts) -> TrialOutcome {
    let start = Instant::now();
    let seed = trial_seed(cfg.base_seed, coord);
    let mut record = TrialRecord {
        coord: coord.clone(),
        seed,
        hde: None,
        score: 0.0,
        termination: Termination::Failure,
        llm_calls: 0,
        construction_calls: 0,
        expansions: 0,
        wall_time_ms: 0,
        error: None,
    };
    let mut outcome = TrialOutcome {
        record: record.clone(),
        construction: None,
        construction_transcript: None,
        run: None,
    };
    let finish = |mut record: TrialRecord, mut outcome: TrialOutcome| {
        record.wall_time_ms = start.elapsed().as_millis() as u64;
        outcome.record = record;
        outcome
    };
    let backend = match build_backend(&cfg.backend, &assets.oracle, seed) {
        Ok(b) => b,
        Err(e) => {
            record.error = Some(e.to_string());
            return finish(record, outcome);
        }
    };
    let built = build_initial_domain(
        &assets.description,
        &coord.class,
        &coord.domain,
        backend.as_ref(),
        prompts,
        cfg.construction_retry_limit,
    );
    let root = match built {
        Ok(r) => r,
        Err(e) => {
            record.construction_calls = e.calls();
            record.llm_calls = e.calls();
            record.error = Some(e.to_string());
            outcome.construction_transcript = e.transcript().cloned();
            return finish(record, outcome);
        }
    };
    record.construction_calls = root.calls;
    let pcfg = PipelineConfig {
        kind: coord.pipeline,
        budget: cfg.budget,
        child_cap: cfg.child_cap,
        weight: cfg.weight,
        planner: PlannerConfig::with_k(cfg.feedback_plans_per_problem),
        seed,
        syntax_retry_in_refinement: cfg.refinement_retry_limit,
    };
    let run = run_pipeline(&root, &pcfg, &assets.feedback, backend.as_ref());
    record.llm_calls = root.calls + run.llm_calls;
    record.expansions = run.expansions;
    record.termination = run.termination;
    record.error = run.error.clone();
    match hde_domain(
        &assets.reference,
        &run.final_domain,
        &assets.eval,
        &PlannerConfig::with_k(cfg.eval_plans_per_problem),
    ) {
        Ok(b) => {
            record.score = to_f64(b.aggregate());
            record.hde = Some(b);
        }
        Err(e) => {
            record.termination = Termination::Failure;
            record.error = Some(e.to_string());
        }
    }
    outcome.construction_transcript = Some(root.transcript.clone());
    outcome.construction = Some(root);
    outcome.run = Some(run);
    finish(record, outcome)
}

fn write_atomic(path: &Path, text: &str) -> Result<(), ExperimentError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, text).map_err(|e| ExperimentError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| ExperimentError::io(path, e))
}

/// Tree dump, construction transcript, per-node transcripts and the final
/// domain under `out/trials/<domain>/<pipeline>/<class>/<trial>/`.
pub fn write_artifacts(out: &Path, o: &TrialOutcome) -> Result<PathBuf, ExperimentError> {
    let dir = o.record.coord.artifact_dir(out);
    let nodes = dir.join("nodes");
    fs::create_dir_all(&nodes).map_err(|e| ExperimentError::io(&nodes, e))?;
    if let Some(t) = &o.construction_transcript {
        write_atomic(&dir.join("construction.txt"), &t.transcript())?;
    }
    if let Some(run) = &o.run {
        write_atomic(&dir.join("tree.txt"), &run.tree_dump())?;
        write_atomic(&dir.join("final_domain.pddl"), &print_domain(&run.final_domain))?;
        for n in &run.tree {
            write_atomic(&nodes.join(format!("{:03}.txt", n.id)), &n.history.transcript())?;
        }
    }
    Ok(dir)
}

/// Checks that fail the whole grid before any trial starts.
fn preflight(cfg: &ExperimentConfig, domains: &[(String, DomainAssets)]) -> Result<(), ExperimentError> {
    cfg.validate()?;
    for (name, assets) in domains {
        build_backend(&cfg.backend, &assets.oracle, cfg.base_seed)
            .map_err(|e| ExperimentError::Config(format!("{name}: {e}")))?;
        if cfg.pipelines.iter().any(|p| p.uses_plans()) {
            check_description_coverage(&assets.description, &assets.feedback)
                .map_err(|e| ExperimentError::Config(format!("{name}: {e}")))?;
        }
    }
    Ok(())
}

/// Runs every coordinate without a record in `output_dir/records.jsonl`,
/// appending each record as it completes. Returns all records sorted by
/// coordinate.
pub fn run_grid(cfg: &ExperimentConfig, log: &AccessLog) -> Result<Vec<TrialRecord>, ExperimentError> {
    cfg.validate()?;
    if cfg.backend.kind == BackendKind::Remote {
        RemoteBackend::from_config(&cfg.backend).map_err(|e| ExperimentError::Config(e.to_string()))?;
    }
    let domains = cfg
        .domains
        .iter()
        .map(|d| Ok((d.clone(), DomainAssets::load(cfg, d, log)?)))
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    preflight(cfg, &domains)?;
    let prompts = prompts(cfg)?;
    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(|e| ExperimentError::io(out, e))?;
    let path = out.join(RECORDS_FILE);
    let mut records = if path.exists() {
        read_records(&path)?
    } else {
        Vec::new()
    };
    let done: BTreeSet<Coord> = records.iter().map(|r| r.coord.clone()).collect();
    let todo: Vec<Coord> = coordinates(cfg).into_iter().filter(|c| !done.contains(c)).collect();
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .map_err(|e| ExperimentError::io(&path, e))?;
    let sink = Mutex::new(file);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| ExperimentError::Config(e.to_string()))?;
    let fresh = pool.install(|| {
        todo.par_iter()
            .map(|c| {
                let assets = &domains.iter().find(|(n, _)| *n == c.domain).expect("domain loaded").1;
                let outcome = run_trial(cfg, c, assets, &prompts);
                if let Err(e) = write_artifacts(out, &outcome) {
                    log::warn!("artifacts for {c:?}: {e}");
                }
                let mut line = serde_json::to_string(&outcome.record).expect("record serializes");
                line.push('\n');
                let mut f = sink.lock().unwrap_or_else(|e| e.into_inner());
                f.write_all(line.as_bytes())
                    .and_then(|_| f.sync_data())
                    .map_err(|e| ExperimentError::io(&path, e))?;
                Ok(outcome.record)
            })
            .collect::<Result<Vec<_>, ExperimentError>>()
    })?;
    records.extend(fresh);
    records.sort_by(|a, b| a.coord.cmp(&b.coord));
    Ok(records)
}
