//! Session-search toolkit built around a symbolic graph representation.
//!
//! The pipeline: ingest query/click session logs ([`session`]), build
//! heterogeneous session graphs ([`graph`]), serialize them to a symbolic
//! text grammar ([`grammar`]), generate self-supervised training data
//! ([`pretrain`]), rank candidate documents through a pluggable scorer
//! ([`scorer`], [`rank`]), audit the training losses ([`loss`]), and score
//! rankings with trec_eval-compatible metrics ([`eval`]).
//!
//! Every stage is exposed as a subcommand of the `sgr` binary and exchanges
//! line-oriented JSONL or TREC text, so stages compose with standard tooling.

pub mod eval;
pub mod grammar;
pub mod graph;
pub mod loss;
pub mod pretrain;
pub mod rank;
pub mod scorer;
pub mod session;
pub mod util;
