use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use forge::construction::{build_initial_domain, Prompts, CONSTRUCTION_RETRY_LIMIT};
use forge::experiment::{
    build_backend, gen_assets, read_records, report, run_grid, run_trial, write_artifacts, write_plan_files, AccessLog,
    AssetConfig, Coord, DomainAssets, DomainDir, ExperimentConfig, Scope,
};
use forge::generator::{BackendConfig, BackendKind};
use forge::hde::{hde_domain, to_f64};
use forge::landmarks::{action_landmarks, write_landmarks};
use forge::planner::{enumerate_plans, PlannerConfig, EVAL_K};
use forge::search::PipelineKind;
use forge::text::{parse_domain, parse_problem, print_plan};

#[derive(Parser)]
#[command(
    name = "forge",
    version,
    about = "Build and refine PDDL domains from natural-language descriptions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Select feedback and evaluation problems from a domain's pool and
    /// write their plans and landmarks.
    GenAssets {
        dir: PathBuf,
        #[arg(long, default_value_t = 5)]
        feedback: usize,
        #[arg(long, default_value_t = 5)]
        eval: usize,
        #[arg(long, default_value_t = 2)]
        feedback_plans: usize,
        #[arg(long, default_value_t = EVAL_K)]
        eval_plans: usize,
    },
    /// Generate a domain action by action from its description.
    Construct {
        #[arg(long)]
        domain_dir: PathBuf,
        #[arg(long, default_value = "simple")]
        class: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        backend: BackendArgs,
        /// Where to write the domain; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
    /// Run one trial: construction, refinement and scoring.
    Run {
        #[arg(long)]
        domain_dir: PathBuf,
        #[arg(long)]
        pipeline: PipelineKind,
        #[arg(long, default_value = "simple")]
        class: String,
        #[arg(long, default_value_t = 0)]
        trial: usize,
        /// Base seed; the trial seed is derived from it and the coordinates.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Score a generated domain against a reference on evaluation problems.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        gen: PathBuf,
        /// Directory with problems/*.pddl and plans/*.soln.
        #[arg(long)]
        eval_dir: PathBuf,
        #[arg(long, default_value_t = EVAL_K)]
        k: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Enumerate the k shortest plans of a problem.
    Plan {
        #[arg(long)]
        domain: PathBuf,
        #[arg(long)]
        problem: PathBuf,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long)]
        max_length: Option<usize>,
        /// Write `<problem>-NNN.soln` files here instead of printing.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Extract disjunctive action landmarks of a problem.
    Landmarks {
        #[arg(long)]
        domain: PathBuf,
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize a records file as a table.
    Report {
        records: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Run every trial of an experiment config, resuming if records exist.
    Grid {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        backend: BackendArgs,
    },
}

/// Overrides applied on top of the configured backend.
#[derive(Args, Default)]
struct BackendArgs {
    #[arg(long, value_parser = parse_kind)]
    backend: Option<BackendKind>,
    #[arg(long)]
    defects: Option<PathBuf>,
    #[arg(long)]
    script: Option<PathBuf>,
    #[arg(long)]
    repair_probability: Option<f64>,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    api_key_env: Option<String>,
}

fn parse_kind(s: &str) -> Result<BackendKind, String> {
    match s.to_ascii_lowercase().as_str() {
        "remote" => Ok(BackendKind::Remote),
        "scripted" => Ok(BackendKind::Scripted),
        "mutation" => Ok(BackendKind::Mutation),
        _ => Err(format!("unknown backend {s}; expected remote, scripted or mutation")),
    }
}

impl BackendArgs {
    fn apply(self, cfg: &mut BackendConfig) {
        if let Some(k) = self.backend {
            cfg.kind = k;
        }
        if let Some(p) = self.defects {
            cfg.defect_spec = Some(absolute(p));
        }
        if let Some(p) = self.script {
            cfg.script_path = Some(absolute(p));
        }
        if let Some(p) = self.repair_probability {
            cfg.repair_probability = p;
        }
        cfg.endpoint = self.endpoint.or(cfg.endpoint.take());
        cfg.model_name = self.model.or(cfg.model_name.take());
        cfg.api_key_env = self.api_key_env.or(cfg.api_key_env.take());
    }
}

fn absolute(p: PathBuf) -> PathBuf {
    if p.is_absolute() {
        p
    } else {
        std::env::current_dir().map(|d| d.join(&p)).unwrap_or(p)
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn split_domain_dir(dir: &Path) -> Result<(PathBuf, String)> {
    let dir = absolute(dir.to_path_buf());
    let name = dir
        .file_name()
        .and_then(|n| n.to_str())
        .context("domain directory has no name")?
        .to_string();
    let root = dir.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((root, name))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::GenAssets {
            dir,
            feedback,
            eval,
            feedback_plans,
            eval_plans,
        } => {
            let cfg = AssetConfig {
                feedback_problems: feedback,
                eval_problems: eval,
                feedback_plans,
                eval_plans,
            };
            let summary = gen_assets(&DomainDir::new(&dir, Scope::Assets, AccessLog::default()), &cfg)?;
            println!("feedback: {}", summary.feedback.join(" "));
            println!("eval: {}", summary.eval.join(" "));
            if !summary.skipped.is_empty() {
                println!("skipped (unsolvable): {}", summary.skipped.join(" "));
            }
        }
        Command::Construct {
            domain_dir,
            class,
            seed,
            backend,
            out,
            transcript,
        } => {
            let mut bcfg = BackendConfig::default();
            backend.apply(&mut bcfg);
            let log = AccessLog::default();
            let dir = DomainDir::new(&domain_dir, Scope::Construction, log.clone());
            let desc = dir.description()?;
            let b = build_backend(&bcfg, &dir.with_scope(Scope::Oracle), seed)?;
            let result = build_initial_domain(
                &desc,
                &class,
                &dir.name(),
                b.as_ref(),
                &Prompts::builtin(),
                CONSTRUCTION_RETRY_LIMIT,
            );
            match result {
                Ok(r) => {
                    if let Some(t) = transcript {
                        write(&t, &r.transcript.transcript())?;
                    }
                    match out {
                        Some(p) => write(&p, &r.domain_text())?,
                        None => print!("{}", r.domain_text()),
                    }
                    eprintln!("construction finished in {} backend calls", r.calls);
                }
                Err(e) => {
                    if let (Some(t), Some(h)) = (transcript, e.transcript()) {
                        write(&t, &h.transcript())?;
                    }
                    bail!("construction failed: {e}");
                }
            }
        }
        Command::Run {
            domain_dir,
            pipeline,
            class,
            trial,
            seed,
            config,
            backend,
            out,
        } => {
            let mut cfg = match config {
                Some(p) => ExperimentConfig::load(&p)?,
                None => ExperimentConfig::default(),
            };
            let (root, name) = split_domain_dir(&domain_dir)?;
            cfg.dataset_root = root;
            cfg.domains = vec![name.clone()];
            cfg.pipelines = vec![pipeline];
            cfg.output_dir = out;
            if let Some(s) = seed {
                cfg.base_seed = s;
            }
            backend.apply(&mut cfg.backend);
            cfg.validate()?;
            let log = AccessLog::default();
            let assets = DomainAssets::load(&cfg, &name, &log)?;
            let coord = Coord {
                domain: name,
                pipeline,
                class,
                trial,
            };
            let prompts = match &cfg.prompts_dir {
                Some(d) => Prompts::load(d).with_context(|| format!("loading prompts from {}", d.display()))?,
                None => Prompts::builtin(),
            };
            let outcome = run_trial(&cfg, &coord, &assets, &prompts);
            let dir = write_artifacts(&cfg.output_dir, &outcome)?;
            if let Some(h) = &outcome.record.hde {
                print!("{}", h.to_table());
            }
            println!("{}", serde_json::to_string(&outcome.record)?);
            eprintln!("artifacts in {}", dir.display());
        }
        Command::Eval {
            gt,
            gen,
            eval_dir,
            k,
            csv,
        } => {
            let reference = parse_domain(&read(&gt)?).with_context(|| gt.display().to_string())?;
            let candidate = parse_domain(&read(&gen)?).with_context(|| gen.display().to_string())?;
            let cases = DomainDir::new(&eval_dir, Scope::Evaluation, AccessLog::default()).eval_cases_at(".")?;
            let b = hde_domain(&reference, &candidate, &cases, &PlannerConfig::with_k(k))?;
            print!("{}", b.to_table());
            println!("HDE {} = {:.4}", b.aggregate(), to_f64(b.aggregate()));
            if let Some(p) = csv {
                write(&p, &b.to_csv())?;
            }
        }
        Command::Plan {
            domain,
            problem,
            k,
            max_length,
            out_dir,
        } => {
            let d = parse_domain(&read(&domain)?).with_context(|| domain.display().to_string())?;
            let p = parse_problem(&read(&problem)?).with_context(|| problem.display().to_string())?;
            let cfg = PlannerConfig {
                max_plan_length: max_length,
                ..PlannerConfig::with_k(k)
            };
            let set = enumerate_plans(&d, &p, &cfg);
            for diag in &set.diagnostics {
                eprintln!("{diag}");
            }
            match out_dir {
                Some(dir) => {
                    fs::create_dir_all(&dir).with_context(|| dir.display().to_string())?;
                    write_plan_files(&dir, &p.name, &set.plans)?;
                }
                None => {
                    for (i, plan) in set.plans.iter().enumerate() {
                        if i > 0 {
                            println!();
                        }
                        print!("{}", print_plan(plan));
                    }
                }
            }
            eprintln!(
                "{} plan(s) up to length {}{}",
                set.plans.len(),
                set.horizon,
                set.flag().map(|f| format!(" ({f})")).unwrap_or_default()
            );
        }
        Command::Landmarks { domain, problem, out } => {
            let d = parse_domain(&read(&domain)?).with_context(|| domain.display().to_string())?;
            let p = parse_problem(&read(&problem)?).with_context(|| problem.display().to_string())?;
            let text = write_landmarks(&action_landmarks(&d, &p)?);
            match out {
                Some(path) => write(&path, &text)?,
                None => print!("{text}"),
            }
        }
        Command::Report { records, csv, table } => {
            let r = report(&read_records(&records)?);
            let text = r.to_table();
            print!("{text}");
            if let Some(p) = csv {
                write(&p, &r.to_csv())?;
            }
            if let Some(p) = table {
                write(&p, &text)?;
            }
        }
        Command::Grid {
            config,
            workers,
            trials,
            seed,
            out,
            backend,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(w) = workers {
                cfg.workers = w;
            }
            if let Some(t) = trials {
                cfg.trials = t;
            }
            if let Some(s) = seed {
                cfg.base_seed = s;
            }
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            backend.apply(&mut cfg.backend);
            let records = run_grid(&cfg, &AccessLog::default())?;
            let r = report(&records);
            write(&cfg.output_dir.join("report.csv"), &r.to_csv())?;
            write(&cfg.output_dir.join("report.txt"), &r.to_table())?;
            print!("{}", r.to_table());
        }
    }
    Ok(())
}
