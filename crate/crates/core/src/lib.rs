//! Nonstandard transfinite graphs built as ultrapowers of sequences of
//! standard transfinite graphs, and hyperreal operating points of the
//! resistive networks they carry.
//!
//! The crate is organised bottom-up:
//!
//! * [`index_set`] and [`oracle`]: decidable index sets and the residue-tower
//!   stand-in for a fixed nonprincipal ultrafilter.
//! * [`seq`] and [`closed_form`]: finite descriptors of infinite sequences.
//! * [`hyperreal`]: hyperreals and hypernaturals modulo the oracle.
//! * [`graph`]: standard transfinite graphs of ranks `0..=μ`, `ω⃗` and `ω`.
//! * [`ultrapower`]: nonstandard extremities, nodes and graphs.
//! * [`network`]: per-index circuit solves, hyperreal operating points and
//!   law verification.
//! * [`project`]: the textual project format and the command pipelines used
//!   by the `nsgraph` binary.

#![forbid(unsafe_code)]

pub mod closed_form;
pub mod graph;
pub mod hyperreal;
pub mod index_set;
pub mod network;
pub mod oracle;
pub mod project;
pub mod seq;
pub mod ultrapower;

mod periodic;

pub use graph::{Ident, Rank, StandardGraph};
pub use hyperreal::{Hypernatural, Hyperreal, Magnitude};
pub use index_set::IndexSet;
pub use oracle::{FilterOracle, Membership};
pub use seq::{SeqDescriptor, Traits};
