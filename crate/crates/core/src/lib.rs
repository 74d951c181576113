//! Learning generalized value functions for classical planning.
//!
//! The pipeline parses lifted STRIPS domains ([`pddl`]), grounds them
//! ([`grounding`]), expands small instances into labelled state spaces
//! ([`state_space`]), optionally extends states with derived atoms
//! ([`derived`]), trains a relational message-passing network ([`gnn`],
//! [`training`]) and runs the greedy policy it induces ([`policy`]) to
//! produce coverage and plan-quality reports ([`report`]).

pub mod derived;
pub mod domains;
pub mod generators;
pub mod gnn;
pub mod grounding;
pub mod pddl;
pub mod policy;
pub mod report;
pub mod state_space;
pub mod training;

pub use grounding::{GroundAction, GroundAtom, State, Task};
pub use pddl::{Domain, Instance, ObjId, PredId};
