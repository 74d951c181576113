//! Bundled domain files.

use crate::pddl::{parse_domain, Domain};

pub const BLOCKS: &str = include_str!("../domains/blocks.pddl");
pub const GRIPPER: &str = include_str!("../domains/gripper.pddl");
pub const DELIVERY: &str = include_str!("../domains/delivery.pddl");
pub const SPANNER: &str = include_str!("../domains/spanner.pddl");
pub const LOGISTICS: &str = include_str!("../domains/logistics.pddl");

pub const NAMES: &[&str] = &["blocks", "gripper", "delivery", "spanner", "logistics"];

pub fn source(name: &str) -> Option<&'static str> {
    match name {
        "blocks" => Some(BLOCKS),
        "gripper" => Some(GRIPPER),
        "delivery" => Some(DELIVERY),
        "spanner" => Some(SPANNER),
        "logistics" => Some(LOGISTICS),
        _ => None,
    }
}

/// Parses a bundled domain. `None` for unknown names.
pub fn load(name: &str) -> Option<Domain> {
    source(name).map(|text| parse_domain(text).expect("bundled domain files parse"))
}
