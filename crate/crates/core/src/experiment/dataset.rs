use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use super::ExperimentError;
use crate::construction::DomainDescription;
use crate::feedback::FeedbackCase;
use crate::hde::EvalCase;
use crate::landmarks::{action_landmarks, read_landmarks, write_landmarks};
use crate::pddl::{Domain, Plan, Problem};
use crate::planner::{enumerate_plans, PlannerConfig, EVAL_K, FEEDBACK_K};
use crate::text::{parse_domain, parse_plan, parse_problem, print_plan};

pub const DOMAIN_FILE: &str = "domain.pddl";
pub const DESCRIPTION_FILE: &str = "description.json";
pub const POOL_DIR: &str = "pool";

/// What a phase of the experiment may read from a domain directory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scope {
    /// Asset generation: reference domain and problem pool, never the description.
    Assets,
    /// Domain construction: the description only.
    Construction,
    /// Refinement and scoring: reference domain and generated assets.
    Evaluation,
    /// Mock backends that simulate a model from the reference domain and
    /// defect specs; never the description.
    Oracle,
}

impl Scope {
    fn allows(self, rel: &Path) -> bool {
        let first = rel
            .components()
            .next()
            .and_then(|c| c.as_os_str().to_str())
            .unwrap_or("");
        match self {
            Scope::Assets => first != DESCRIPTION_FILE,
            Scope::Construction => first == DESCRIPTION_FILE,
            Scope::Evaluation | Scope::Oracle => first != DESCRIPTION_FILE && first != POOL_DIR,
        }
    }
}

/// Shared record of every file read, tagged with the reading scope.
#[derive(Debug, Clone, Default)]
pub struct AccessLog(Arc<Mutex<Vec<(Scope, PathBuf)>>>);

impl AccessLog {
    pub fn entries(&self) -> Vec<(Scope, PathBuf)> {
        self.0.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    fn record(&self, scope: Scope, rel: &Path) {
        self.0
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push((scope, rel.to_path_buf()));
    }
}

/// Read access to one domain directory under a fixed [`Scope`].
#[derive(Debug, Clone)]
pub struct DomainDir {
    root: PathBuf,
    scope: Scope,
    log: AccessLog,
}

impl DomainDir {
    pub fn new(root: impl Into<PathBuf>, scope: Scope, log: AccessLog) -> Self {
        DomainDir {
            root: root.into(),
            scope,
            log,
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn name(&self) -> String {
        self.root
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or("domain")
            .to_string()
    }

    pub fn with_scope(&self, scope: Scope) -> Self {
        DomainDir { scope, ..self.clone() }
    }

    pub fn read(&self, rel: impl AsRef<Path>) -> Result<String, ExperimentError> {
        let rel = rel.as_ref();
        if !self.scope.allows(rel) {
            return Err(ExperimentError::AccessDenied {
                scope: format!("{:?}", self.scope),
                path: rel.to_path_buf(),
            });
        }
        self.log.record(self.scope, rel);
        let path = self.root.join(rel);
        fs::read_to_string(&path).map_err(|e| ExperimentError::io(&path, e))
    }

    /// Sorted file names with the given extension under `rel`.
    pub fn list(&self, rel: impl AsRef<Path>, ext: &str) -> Result<Vec<String>, ExperimentError> {
        let rel = rel.as_ref();
        if !self.scope.allows(rel) {
            return Err(ExperimentError::AccessDenied {
                scope: format!("{:?}", self.scope),
                path: rel.to_path_buf(),
            });
        }
        let dir = self.root.join(rel);
        let mut names: Vec<String> = fs::read_dir(&dir)
            .map_err(|e| ExperimentError::io(&dir, e))?
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().to_str().map(str::to_string))
            .filter(|n| Path::new(n).extension().and_then(|x| x.to_str()) == Some(ext))
            .collect();
        names.sort();
        Ok(names)
    }

    pub fn domain(&self) -> Result<Domain, ExperimentError> {
        let text = self.read(DOMAIN_FILE)?;
        parse_domain(&text).map_err(|e| ExperimentError::Parse {
            path: self.root.join(DOMAIN_FILE),
            error: e.to_string(),
        })
    }

    pub fn description(&self) -> Result<DomainDescription, ExperimentError> {
        let text = self.read(DESCRIPTION_FILE)?;
        DomainDescription::from_json(&text).map_err(|e| ExperimentError::Parse {
            path: self.root.join(DESCRIPTION_FILE),
            error: e.to_string(),
        })
    }

    fn problem(&self, rel: &Path) -> Result<Problem, ExperimentError> {
        parse_problem(&self.read(rel)?).map_err(|e| ExperimentError::Parse {
            path: self.root.join(rel),
            error: e.to_string(),
        })
    }

    fn plans(&self, dir: &str, id: &str) -> Result<Vec<Plan>, ExperimentError> {
        let prefix = format!("{id}-");
        self.list(dir, "soln")?
            .into_iter()
            .filter(|n| n.starts_with(&prefix))
            .map(|n| {
                let rel = Path::new(dir).join(&n);
                parse_plan(&self.read(&rel)?).map_err(|e| ExperimentError::Parse {
                    path: self.root.join(rel),
                    error: e.to_string(),
                })
            })
            .collect()
    }

    fn problem_ids(&self, dir: &str) -> Result<Vec<String>, ExperimentError> {
        Ok(self
            .list(dir, "pddl")?
            .into_iter()
            .map(|n| n.trim_end_matches(".pddl").to_string())
            .collect())
    }

    pub fn feedback_cases(&self) -> Result<Vec<FeedbackCase>, ExperimentError> {
        self.problem_ids("feedback/problems")?
            .into_iter()
            .map(|id| {
                let problem = self.problem(&Path::new("feedback/problems").join(format!("{id}.pddl")))?;
                let plans = self.plans("feedback/plans", &id)?;
                let rel = Path::new("feedback/landmarks").join(format!("{id}.lmk"));
                let landmarks = read_landmarks(&self.read(&rel)?).map_err(|e| ExperimentError::Parse {
                    path: self.root.join(&rel),
                    error: e.to_string(),
                })?;
                Ok(FeedbackCase {
                    id,
                    problem,
                    plans,
                    landmarks,
                })
            })
            .collect()
    }

    pub fn eval_cases(&self) -> Result<Vec<EvalCase>, ExperimentError> {
        self.eval_cases_at("eval")
    }

    /// Evaluation cases from `<prefix>/problems` and `<prefix>/plans`.
    pub fn eval_cases_at(&self, prefix: &str) -> Result<Vec<EvalCase>, ExperimentError> {
        let problems = format!("{prefix}/problems");
        let plans = format!("{prefix}/plans");
        self.problem_ids(&problems)?
            .into_iter()
            .map(|id| {
                let problem = self.problem(&Path::new(&problems).join(format!("{id}.pddl")))?;
                let plans = self.plans(&plans, &id)?;
                Ok(EvalCase { id, problem, plans })
            })
            .collect()
    }
}

/// Problem split and plan counts for asset generation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssetConfig {
    pub feedback_problems: usize,
    pub eval_problems: usize,
    pub feedback_plans: usize,
    pub eval_plans: usize,
}

impl Default for AssetConfig {
    fn default() -> Self {
        AssetConfig {
            feedback_problems: 5,
            eval_problems: 5,
            feedback_plans: FEEDBACK_K,
            eval_plans: EVAL_K,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AssetSummary {
    pub feedback: Vec<String>,
    pub eval: Vec<String>,
    pub skipped: Vec<String>,
    pub files: BTreeMap<PathBuf, usize>,
}

fn reset_dir(path: &Path) -> Result<(), ExperimentError> {
    if path.exists() {
        fs::remove_dir_all(path).map_err(|e| ExperimentError::io(path, e))?;
    }
    fs::create_dir_all(path).map_err(|e| ExperimentError::io(path, e))
}

fn write(path: &Path, text: &str, summary: &mut AssetSummary) -> Result<(), ExperimentError> {
    fs::write(path, text).map_err(|e| ExperimentError::io(path, e))?;
    summary.files.insert(path.to_path_buf(), text.len());
    Ok(())
}

/// `{id}-000.soln`, `{id}-001.soln`, ...
pub fn write_plan_files(dir: &Path, id: &str, plans: &[Plan]) -> Result<Vec<PathBuf>, ExperimentError> {
    let mut out = Vec::new();
    for (i, p) in plans.iter().enumerate() {
        let path = dir.join(format!("{id}-{i:03}.soln"));
        fs::write(&path, print_plan(p)).map_err(|e| ExperimentError::io(&path, e))?;
        out.push(path);
    }
    Ok(out)
}

/// Up to `k` reference plans and the action landmarks of `problem`.
pub fn feedback_case(domain: &Domain, id: &str, problem: Problem, k: usize) -> Result<FeedbackCase, ExperimentError> {
    let plans = enumerate_plans(domain, &problem, &PlannerConfig::with_k(k)).plans;
    let landmarks = action_landmarks(domain, &problem).map_err(|e| ExperimentError::Landmarks {
        problem: id.to_string(),
        error: e.to_string(),
    })?;
    Ok(FeedbackCase {
        id: id.to_string(),
        problem,
        plans,
        landmarks,
    })
}

/// Up to `k` reference plans of `problem`.
pub fn eval_case(domain: &Domain, id: &str, problem: Problem, k: usize) -> EvalCase {
    let plans = enumerate_plans(domain, &problem, &PlannerConfig::with_k(k)).plans;
    EvalCase {
        id: id.to_string(),
        problem,
        plans,
    }
}

/// Splits the solvable pool problems (in file-name order) into feedback and
/// evaluation sets and writes their plans and landmarks.
pub fn gen_assets(dir: &DomainDir, cfg: &AssetConfig) -> Result<AssetSummary, ExperimentError> {
    let domain = dir.domain()?;
    let mut summary = AssetSummary::default();
    let mut solvable = Vec::new();
    for name in dir.list(POOL_DIR, "pddl")? {
        let rel = Path::new(POOL_DIR).join(&name);
        let text = dir.read(&rel)?;
        let problem = dir.problem(&rel)?;
        let id = name.trim_end_matches(".pddl").to_string();
        if enumerate_plans(&domain, &problem, &PlannerConfig::with_k(1))
            .plans
            .is_empty()
        {
            summary.skipped.push(id);
            continue;
        }
        solvable.push((id, text, problem));
        if solvable.len() == cfg.feedback_problems + cfg.eval_problems {
            break;
        }
    }
    let needed = cfg.feedback_problems + cfg.eval_problems;
    if solvable.len() < needed {
        return Err(ExperimentError::Shortfall {
            needed,
            found: solvable.len(),
        });
    }
    let root = dir.root();
    for sub in [
        "feedback/problems",
        "feedback/plans",
        "feedback/landmarks",
        "eval/problems",
        "eval/plans",
    ] {
        reset_dir(&root.join(sub))?;
    }
    for (i, (id, text, problem)) in solvable.into_iter().enumerate() {
        let feedback = i < cfg.feedback_problems;
        let (set, k) = if feedback {
            ("feedback", cfg.feedback_plans)
        } else {
            ("eval", cfg.eval_plans)
        };
        write(
            &root.join(set).join("problems").join(format!("{id}.pddl")),
            &text,
            &mut summary,
        )?;
        if feedback {
            let case = feedback_case(&domain, &id, problem, k)?;
            for p in write_plan_files(&root.join("feedback/plans"), &id, &case.plans)? {
                let len = fs::metadata(&p).map(|m| m.len() as usize).unwrap_or(0);
                summary.files.insert(p, len);
            }
            write(
                &root.join("feedback/landmarks").join(format!("{id}.lmk")),
                &write_landmarks(&case.landmarks),
                &mut summary,
            )?;
            summary.feedback.push(id);
        } else {
            let case = eval_case(&domain, &id, problem, k);
            for p in write_plan_files(&root.join("eval/plans"), &id, &case.plans)? {
                let len = fs::metadata(&p).map(|m| m.len() as usize).unwrap_or(0);
                summary.files.insert(p, len);
            }
            summary.eval.push(id);
        }
    }
    Ok(summary)
}
