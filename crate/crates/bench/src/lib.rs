//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use genplan_core::pddl::parse_instance;
use genplan_core::{domains, Task};

/// A task for a bundled domain from generator output.
pub fn task(domain: &str, pddl: &str) -> Task {
    let d = Arc::new(domains::load(domain).expect("bundled domain"));
    let inst = parse_instance(pddl, &d).expect("generated instance parses");
    Task::new(d, inst)
}
