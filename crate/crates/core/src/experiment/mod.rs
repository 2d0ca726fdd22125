//! Asset generation, the experiment grid and its reports.

mod dataset;
mod grid;
mod report;
mod sampler;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::construction::CONSTRUCTION_RETRY_LIMIT;
use crate::generator::BackendConfig;
use crate::search::PipelineKind;

pub use dataset::{
    eval_case, feedback_case, gen_assets, write_plan_files, AccessLog, AssetConfig, AssetSummary, DomainDir, Scope,
    DESCRIPTION_FILE, DOMAIN_FILE, POOL_DIR,
};
pub use grid::{
    build_backend, check_description_coverage, coordinates, run_grid, run_trial, trial_seed, write_artifacts, Coord,
    DomainAssets, TrialOutcome, TrialRecord, RECORDS_FILE,
};
pub use report::{read_records, report, Report, ReportRow};
pub use sampler::sample_problem;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {error}")]
    Parse { path: PathBuf, error: String },
    #[error("scope {scope} may not read {path}")]
    AccessDenied { scope: String, path: PathBuf },
    #[error("need {needed} solvable problems, found {found} (short by {})", needed - found)]
    Shortfall { needed: usize, found: usize },
    #[error("landmark extraction failed for {problem}: {error}")]
    Landmarks { problem: String, error: String },
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl ExperimentError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        ExperimentError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Grid definition. Missing keys take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset_root: PathBuf,
    pub output_dir: PathBuf,
    pub domains: Vec<String>,
    pub pipelines: Vec<PipelineKind>,
    pub backend: BackendConfig,
    /// Total per (domain, pipeline), split evenly across classes.
    pub trials: usize,
    pub description_classes: Vec<String>,
    pub feedback_problem_count: usize,
    pub eval_problem_count: usize,
    pub feedback_plans_per_problem: usize,
    pub eval_plans_per_problem: usize,
    pub base_seed: u64,
    pub workers: usize,
    pub budget: usize,
    pub child_cap: usize,
    pub weight: f64,
    pub construction_retry_limit: usize,
    pub refinement_retry_limit: usize,
    pub prompts_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset_root: PathBuf::from("dataset"),
            output_dir: PathBuf::from("runs"),
            domains: Vec::new(),
            pipelines: PipelineKind::ALL.to_vec(),
            backend: BackendConfig::default(),
            trials: 20,
            description_classes: vec!["simple".into(), "detailed".into()],
            feedback_problem_count: 5,
            eval_problem_count: 5,
            feedback_plans_per_problem: 2,
            eval_plans_per_problem: 100,
            base_seed: 0,
            workers: 4,
            budget: 15,
            child_cap: 10,
            weight: 1.0,
            construction_retry_limit: CONSTRUCTION_RETRY_LIMIT,
            refinement_retry_limit: 3,
            prompts_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Relative paths in the file resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut cfg.dataset_root);
        fix(&mut cfg.output_dir);
        if let Some(p) = cfg.prompts_dir.as_mut() {
            fix(p);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let positive = [
            ("trials", self.trials),
            ("feedback_problem_count", self.feedback_problem_count),
            ("eval_problem_count", self.eval_problem_count),
            ("feedback_plans_per_problem", self.feedback_plans_per_problem),
            ("eval_plans_per_problem", self.eval_plans_per_problem),
            ("workers", self.workers),
            ("child_cap", self.child_cap),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(ExperimentError::Config(format!("{name} must be positive")));
        }
        if self.pipelines.is_empty() {
            return Err(ExperimentError::Config("pipelines must not be empty".into()));
        }
        if self.description_classes.is_empty() {
            return Err(ExperimentError::Config("description_classes must not be empty".into()));
        }
        if let Some(c) = self
            .description_classes
            .iter()
            .find(|c| !crate::construction::CLASSES.contains(&c.as_str()))
        {
            return Err(ExperimentError::Config(format!("unknown description class {c}")));
        }
        Ok(())
    }

    pub fn asset_config(&self) -> AssetConfig {
        AssetConfig {
            feedback_problems: self.feedback_problem_count,
            eval_problems: self.eval_problem_count,
            feedback_plans: self.feedback_plans_per_problem,
            eval_plans: self.eval_plans_per_problem,
        }
    }

    pub fn domain_dir(&self, domain: &str, scope: Scope, log: &AccessLog) -> DomainDir {
        DomainDir::new(self.dataset_root.join(domain), scope, log.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_overrides_defaults() {
        let cfg = ExperimentConfig::from_toml(
            "domains = [\"blocks\"]\npipelines = [\"LVS\", \"N\"]\ntrials = 4\n[backend]\nkind = \"scripted\"\n",
        )
        .unwrap();
        assert_eq!(cfg.pipelines, vec![PipelineKind::LVS, PipelineKind::N]);
        assert_eq!(cfg.trials, 4);
        assert_eq!(cfg.eval_plans_per_problem, 100);
        assert_eq!(cfg.backend.timeout_secs, 120);
    }

    #[test]
    fn rejects_zero_counts_and_unknown_keys() {
        assert!(ExperimentConfig::from_toml("trials = 0").is_err());
        assert!(ExperimentConfig::from_toml("pipelines = []").is_err());
        assert!(ExperimentConfig::from_toml("colour = 1").is_err());
        assert!(ExperimentConfig::from_toml("description_classes = [\"verbose\"]").is_err());
    }

    #[test]
    fn shortfall_names_the_gap() {
        let e = ExperimentError::Shortfall { needed: 10, found: 7 };
        assert_eq!(e.to_string(), "need 10 solvable problems, found 7 (short by 3)");
    }
}
