//! Information-flow analysis for a small P4-like packet-processing language.
//!
//! Security types pair a two-point label with an interval per bitvector
//! slice. The crate holds the language front end, a concrete interpreter,
//! the type system, policy checking and a brute-force noninterference
//! oracle used to cross-check the analyzer.

pub mod abstract_domain;
pub mod frontend;
pub mod interp;
pub mod lang_ast;
pub mod oracle;
pub mod policy;
pub mod state_types;
pub mod typer;

#[cfg(test)]
mod test_support;
