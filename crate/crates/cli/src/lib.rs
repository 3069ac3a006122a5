//! File formats, validation and orchestration around `nestsim-core`.
//!
//! The core crate is `no_std` and owns the model; this crate owns everything
//! that touches the filesystem:
//!
//! - [`trace`]: versioned CSV formats for packet traces, feedback packets and
//!   the sender-side frame ledger.
//! - [`logs`]: JSON-lines logs for metric samples and controller decisions.
//! - [`manifest`]: run manifests (scenario by path or inline) and the run
//!   identity hash.
//! - [`oracle`]: an independent recomputation of every metric from a packet
//!   trace, used to cross-validate the streaming engine's logs.
//! - [`runner`]: manifest execution, result-directory layout, loading and
//!   file-level validation.
//! - [`summary`]: interval parsing and table rendering for aggregates.

pub mod logs;
pub mod manifest;
pub mod oracle;
pub mod runner;
pub mod summary;
pub mod trace;
