//! Lifted STRIPS frontend: parsing, validation and printing of PDDL
//! domains and problems.

mod error;
mod model;
mod parse;
mod print;
pub mod sexpr;
mod validate;

pub use error::{Diagnostic, ErrorKind, ParseError};
pub use model::*;
pub(crate) use model::canonicalize_atoms;
pub use parse::{parse_domain, parse_instance};
pub use print::{domain_to_pddl, instance_to_pddl};
pub use validate::validate;
