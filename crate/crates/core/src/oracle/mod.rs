//! Concrete evaluation and brute-force compliance decisions over small databases.

pub mod decide;
pub mod enumerate;
pub mod eval;

pub use decide::{oracle_decide, trace_feasible, Mode, Observation, OracleVerdict, Witness};
pub use enumerate::DomainSpec;
pub use eval::{check_constraints, evaluate, Database, Relation, Tuple};
