mod common;

use std::fs;

use common::*;
use forge::construction::{action_name_contract, build_initial_domain, ConstructionResult, DomainDescription, Prompts};
use forge::experiment::{AccessLog, DomainDir, Scope};
use forge::feedback::{landmark_feedback_pool, plan_feedback_pool, Evidence, FeedbackCase};
use forge::generator::{Backend, Defect, MutationBackend, ScriptedBackend};
use forge::pddl::{check_domain_wellformed, rebind_problem};
use forge::planner::PlannerConfig;
use forge::search::{run_pipeline, score_h, PipelineConfig, PipelineKind, Termination};
use forge::text::{parse_plan, parse_problem};

fn description() -> DomainDescription {
    DomainDir::new(dataset().join("blocks"), Scope::Construction, AccessLog::default())
        .description()
        .unwrap()
}

fn cases() -> Vec<FeedbackCase> {
    DomainDir::new(dataset().join("blocks"), Scope::Evaluation, AccessLog::default())
        .feedback_cases()
        .unwrap()
}

fn defects(file: &str) -> Vec<Defect> {
    Defect::parse_spec(&fs::read_to_string(fixture(file)).unwrap()).unwrap()
}

fn construct(backend: &dyn Backend, class: &str) -> ConstructionResult {
    build_initial_domain(&description(), class, "blocks", backend, &Prompts::builtin(), 5).unwrap()
}

fn is_prefix(short: &forge::generator::History, long: &forge::generator::History) -> bool {
    long.messages().starts_with(short.messages())
}

#[test]
fn constructions_are_well_formed_and_keep_action_names() {
    let script = fs::read_to_string(fixture("blocks_construction.txt")).unwrap();
    for class in ["simple", "detailed"] {
        let r = construct(&ScriptedBackend::from_script(&script), class);
        assert_eq!(check_domain_wellformed(&r.domain), vec![]);
        assert!(action_name_contract(&description(), &r));
        for c in cases() {
            assert!(rebind_problem(&c.problem, &r.domain).is_ok(), "{}", c.id);
        }
    }
    for spec in ["single_defect.txt", "two_defects.txt", "overgeneralized.txt"] {
        let backend = MutationBackend::new(&load_domain("blocks"), defects(spec), 1.0, 0).unwrap();
        let r = construct(&backend, "detailed");
        assert_eq!(check_domain_wellformed(&r.domain), vec![], "{spec}");
        assert_eq!(&r.domain, backend.defective(), "{spec}");
    }
}

#[test]
fn mock_backends_produce_identical_transcripts() {
    let script = fs::read_to_string(fixture("blocks_construction.txt")).unwrap();
    let a = construct(&ScriptedBackend::from_script(&script), "simple");
    let b = construct(&ScriptedBackend::from_script(&script), "simple");
    assert_eq!(a.transcript, b.transcript);

    let run = |seed| {
        let backend = MutationBackend::new(&load_domain("blocks"), defects("two_defects.txt"), 0.5, seed).unwrap();
        let root = construct(&backend, "simple");
        let cfg = PipelineConfig {
            seed,
            ..PipelineConfig::new(PipelineKind::LVS)
        };
        run_pipeline(&root, &cfg, &cases(), &backend)
    };
    assert_eq!(run(4), run(4));
}

#[test]
fn reference_domain_yields_no_feedback() {
    let gt = load_domain("blocks");
    assert!(plan_feedback_pool(&gt, &cases()).is_empty());
    assert!(landmark_feedback_pool(&gt, &cases(), &PlannerConfig::with_k(2)).is_empty());
    assert_eq!(score_h(&gt, &cases()), 0);
}

#[test]
fn feedback_splices_reparse_and_are_pure() {
    let mut gen = load_domain("blocks");
    for d in defects("two_defects.txt") {
        d.apply(&mut gen).unwrap();
    }
    let cfg = PlannerConfig::with_k(2);
    let pools = || {
        let mut all = plan_feedback_pool(&gen, &cases());
        all.extend(landmark_feedback_pool(&gen, &cases(), &cfg));
        all
    };
    let messages = pools();
    assert!(!messages.is_empty());
    assert_eq!(messages, pools());
    for m in &messages {
        let fences: Vec<&str> = m.rendered.split("```").skip(1).step_by(2).collect();
        assert!(parse_problem(fences[0]).is_ok(), "{}", m.rendered);
        let plan_text = match &m.evidence {
            Evidence::Plan { .. } => fences[1],
            Evidence::Landmark {
                shown_plan: Some(_), ..
            } => fences[2],
            Evidence::Landmark { shown_plan: None, .. } => continue,
        };
        assert!(parse_plan(plan_text).is_ok(), "{plan_text}");
    }
}

#[test]
fn search_trees_keep_structural_invariants() {
    let gt = load_domain("blocks");
    for p in [1.0, 0.5] {
        let backend = MutationBackend::new(&gt, defects("two_defects.txt"), p, 7).unwrap();
        let root = construct(&backend, "simple");
        for kind in PipelineKind::ALL {
            let cfg = PipelineConfig::new(kind);
            let r = run_pipeline(&root, &cfg, &cases(), &backend);
            assert!(r.expansions <= cfg.budget, "{kind}");
            assert!(
                r.llm_calls <= cfg.budget * cfg.child_cap * (1 + cfg.syntax_retry_in_refinement),
                "{kind}"
            );
            if r.termination == Termination::Goal {
                assert_eq!(score_h(&r.final_domain, &cases()), 0, "{kind}");
            }
            for (i, n) in r.tree.iter().enumerate() {
                assert_eq!(n.id, i);
                match n.parent {
                    None => assert_eq!(i, 0),
                    Some(parent) => {
                        assert!(parent < i, "{kind}: parent after child");
                        let up = &r.tree[parent];
                        assert_eq!(n.g, up.g + 1, "{kind}");
                        assert!(n.feedback_used.is_some(), "{kind}: node {i}");
                        assert!(is_prefix(&up.history, &n.history), "{kind}: transcript rewritten");
                    }
                }
            }
            assert!(is_prefix(&root.transcript, &r.tree[0].history), "{kind}");
        }
    }
}
