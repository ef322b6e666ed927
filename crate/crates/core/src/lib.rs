//! Query-compliance checking against view-based access policies.

pub mod cache;
pub mod check;
pub mod engine;
pub mod oracle;
pub mod replay;
pub mod schema;
pub mod smt;
pub mod solver;
pub mod sql;
pub mod template;
pub mod value;
