//! Heuristic domain equivalence between a reference and a candidate domain.

use std::fmt::Write;

use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::pddl::{rebind_problem, Domain, Plan, Problem};
use crate::planner::{enumerate_plans, PlannerConfig};
use crate::semantics::validate_plan;

pub type Fraction = Ratio<u64>;

pub const REBIND_FAILURE: &str = "rebind failure";
pub const TRUNCATED: &str = "truncated";

/// Per-problem counts. A zero denominator reads as a zero fraction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HdeEntry {
    pub problem: String,
    pub forward_valid: u64,
    pub p: u64,
    pub backward_valid: u64,
    pub p_prime: u64,
    pub flags: Vec<String>,
}

fn frac(num: u64, den: u64) -> Fraction {
    if den == 0 {
        Fraction::from_integer(0)
    } else {
        Fraction::new(num, den)
    }
}

impl HdeEntry {
    pub fn forward(&self) -> Fraction {
        frac(self.forward_valid, self.p)
    }

    pub fn backward(&self) -> Fraction {
        frac(self.backward_valid, self.p_prime)
    }

    pub fn score(&self) -> Fraction {
        (self.forward() + self.backward()) / 2
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HdeBreakdown {
    pub entries: Vec<HdeEntry>,
}

impl HdeBreakdown {
    /// Mean of per-problem scores; 0 for an empty breakdown.
    pub fn aggregate(&self) -> Fraction {
        if self.entries.is_empty() {
            return Fraction::from_integer(0);
        }
        let sum = self
            .entries
            .iter()
            .fold(Fraction::from_integer(0), |acc, e| acc + e.score());
        sum / self.entries.len() as u64
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("problem,forward_num,forward_den,backward_num,backward_den,score\n");
        for e in &self.entries {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{:.6}",
                e.problem,
                e.forward_valid,
                e.p,
                e.backward_valid,
                e.p_prime,
                to_f64(e.score())
            );
        }
        s
    }

    pub fn to_table(&self) -> String {
        let width = self.entries.iter().map(|e| e.problem.len()).max().unwrap_or(0).max(7);
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<width$}  {:>9}  {:>9}  {:>7}  flags",
            "problem", "forward", "backward", "score"
        );
        for e in &self.entries {
            let _ = writeln!(
                s,
                "{:<width$}  {:>9}  {:>9}  {:>7.4}  {}",
                e.problem,
                format!("{}/{}", e.forward_valid, e.p),
                format!("{}/{}", e.backward_valid, e.p_prime),
                to_f64(e.score()),
                e.flags.join(",")
            );
        }
        let agg = self.aggregate();
        let _ = writeln!(
            s,
            "{:<width$}  {:>9}  {:>9}  {:>7.4}  ({agg})",
            "mean",
            "",
            "",
            to_f64(agg)
        );
        s
    }
}

pub fn to_f64(f: Fraction) -> f64 {
    *f.numer() as f64 / *f.denom() as f64
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HdeError {
    #[error("problem {0} has no reference plans")]
    EmptyPlanSet(String),
}

/// Forward: share of `plans` valid under `candidate`. Backward: share of the
/// candidate's own top-k plans valid under `reference`.
pub fn hde_pair(
    reference: &Domain,
    candidate: &Domain,
    id: &str,
    problem: &Problem,
    plans: &[Plan],
    cfg: &PlannerConfig,
) -> Result<HdeEntry, HdeError> {
    if plans.is_empty() {
        return Err(HdeError::EmptyPlanSet(id.to_string()));
    }
    let mut entry = HdeEntry {
        problem: id.to_string(),
        forward_valid: 0,
        p: plans.len() as u64,
        backward_valid: 0,
        p_prime: 0,
        flags: Vec::new(),
    };
    let Ok(rebound) = rebind_problem(problem, candidate) else {
        entry.flags.push(REBIND_FAILURE.to_string());
        return Ok(entry);
    };
    entry.forward_valid = plans
        .iter()
        .filter(|p| validate_plan(candidate, &rebound, p).is_valid())
        .count() as u64;
    let own = enumerate_plans(candidate, &rebound, cfg);
    if own.truncated {
        entry.flags.push(TRUNCATED.to_string());
    }
    entry.p_prime = own.plans.len() as u64;
    entry.backward_valid = own
        .plans
        .iter()
        .filter(|p| validate_plan(reference, problem, p).is_valid())
        .count() as u64;
    Ok(entry)
}

/// One evaluation problem with its reference plans.
#[derive(Debug, Clone)]
pub struct EvalCase {
    pub id: String,
    pub problem: Problem,
    pub plans: Vec<Plan>,
}

/// Per-problem entries in input order.
pub fn hde_domain(
    reference: &Domain,
    candidate: &Domain,
    cases: &[EvalCase],
    cfg: &PlannerConfig,
) -> Result<HdeBreakdown, HdeError> {
    let entries = cases
        .par_iter()
        .map(|c| hde_pair(reference, candidate, &c.id, &c.problem, &c.plans, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(HdeBreakdown { entries })
}

/// Entries exactly equal to one.
pub fn perfect_count(scores: &[Fraction]) -> usize {
    scores.iter().filter(|s| **s == Fraction::from_integer(1)).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{parse_domain, parse_plan, parse_problem};

    const BLOCKS: &str = include_str!("../../../dataset/blocks/domain.pddl");

    fn two() -> Problem {
        parse_problem(
            "(define (problem t) (:domain blocks) (:objects a b - block)
             (:init (ontable a) (ontable b) (clear a) (clear b) (handempty)) (:goal (on a b)))",
        )
        .unwrap()
    }

    #[test]
    fn identical_domains_score_one() {
        let d = parse_domain(BLOCKS).unwrap();
        let plans = enumerate_plans(&d, &two(), &PlannerConfig::with_k(5)).plans;
        let e = hde_pair(&d, &d, "t", &two(), &plans, &PlannerConfig::with_k(5)).unwrap();
        assert_eq!(e.score(), Fraction::from_integer(1));
    }

    #[test]
    fn empty_p_prime_counts_zero() {
        let e = HdeEntry {
            problem: "x".into(),
            forward_valid: 1,
            p: 2,
            backward_valid: 0,
            p_prime: 0,
            flags: vec![],
        };
        assert_eq!(e.score(), Fraction::new(1, 4));
    }

    #[test]
    fn aggregate_is_mean() {
        let mk = |f: u64| HdeEntry {
            problem: "x".into(),
            forward_valid: f,
            p: 1,
            backward_valid: 1,
            p_prime: 1,
            flags: vec![],
        };
        let b = HdeBreakdown {
            entries: vec![mk(0), mk(1), mk(1), mk(1), mk(1)],
        };
        assert_eq!(b.aggregate(), Fraction::new(9, 10));
    }

    #[test]
    fn perfect_counts() {
        let one = Fraction::from_integer(1);
        assert_eq!(perfect_count(&[one, Fraction::new(9, 10), one]), 2);
        assert_eq!(perfect_count(&[]), 0);
    }

    #[test]
    fn empty_reference_plans_is_an_error() {
        let d = parse_domain(BLOCKS).unwrap();
        assert!(hde_pair(&d, &d, "t", &two(), &[], &PlannerConfig::default()).is_err());
    }

    #[test]
    fn rebind_failure_scores_zero() {
        let d = parse_domain(BLOCKS).unwrap();
        let gen = parse_domain(
            "(define (domain blocks) (:types block) (:predicates (on ?x - block ?y - block))
             (:action noop :parameters () :precondition (and) :effect (and)))",
        )
        .unwrap();
        let plans = vec![parse_plan("(pick-up a)\n(stack a b)").unwrap()];
        let e = hde_pair(&d, &gen, "t", &two(), &plans, &PlannerConfig::default()).unwrap();
        assert_eq!(e.score(), Fraction::from_integer(0));
        assert_eq!(e.flags, vec![REBIND_FAILURE.to_string()]);
    }
}
