use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::pddl::{Diagnostic, Domain, Problem};
use crate::semantics::{AtomId, Task};

/// Problem with `base`'s objects and init whose goal is drawn from the state
/// reached by a random walk of up to `steps` actions. Goal atoms prefer
/// facts that do not already hold initially; the result is solvable by
/// construction.
pub fn sample_problem(
    domain: &Domain,
    base: &Problem,
    name: &str,
    steps: usize,
    goal_size: usize,
    seed: u64,
) -> Result<Problem, Vec<Diagnostic>> {
    let task = Task::compile(domain, base, false)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = task.init.clone();
    for _ in 0..steps {
        let succ: Vec<_> = task.successors(&state).collect();
        if succ.is_empty() {
            break;
        }
        state = succ[rng.gen_range(0..succ.len())].1.clone();
    }
    let (mut fresh, mut old): (Vec<AtomId>, Vec<AtomId>) = state.ids().partition(|id| !task.init.contains(*id));
    fresh.shuffle(&mut rng);
    old.shuffle(&mut rng);
    let goal: Vec<AtomId> = fresh.into_iter().chain(old).take(goal_size.max(1)).collect();
    Ok(Problem {
        name: name.to_lowercase(),
        domain_name: base.domain_name.clone(),
        objects: base.objects.clone(),
        init: base.init.clone(),
        goal: task.atom_set(&goal),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::{enumerate_plans, PlannerConfig};
    use crate::text::{parse_domain, parse_problem};

    #[test]
    fn sampled_problems_are_solvable_and_seeded() {
        let d = parse_domain(include_str!("../../../../dataset/blocks/domain.pddl")).unwrap();
        let base = parse_problem(include_str!("../../../../dataset/blocks/pool/p03.pddl")).unwrap();
        for seed in 0..5 {
            let p = sample_problem(&d, &base, "s", 6, 2, seed).unwrap();
            assert_eq!(p, sample_problem(&d, &base, "s", 6, 2, seed).unwrap());
            assert!(!p.goal.is_empty());
            assert!(!enumerate_plans(&d, &p, &PlannerConfig::with_k(1)).plans.is_empty());
        }
    }
}
