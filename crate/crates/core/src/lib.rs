pub mod construction;
pub mod experiment;
pub mod feedback;
pub mod generator;
pub mod hde;
pub mod landmarks;
pub mod pddl;
pub mod planner;
pub mod search;
pub mod seed;
pub mod semantics;
pub mod text;
