//! Black-box LLM personalization pipeline.
//!
//! This crate personalizes the output of a text-in/text-out language model
//! without touching its parameters. It combines three learned pieces:
//!
//! 1. a BM25 **retriever** over a user's behavior history ([`retriever`]),
//! 2. a **reranker** that reorders retrieved history by usefulness rather
//!    than relevance ([`reranker`]), and
//! 3. an **adapter** that scores `b` sampled generations and keeps the best
//!    one ([`adapter`]).
//!
//! Both the reranker and the adapter are [`model::FactorizedModel`]s: a
//! shared base encoder plus one small feed-forward head per user. The base
//! captures patterns common to all users; the heads capture individual
//! preference. New users get a fresh head fitted on their own history while
//! the base stays frozen.
//!
//! Everything runs offline against a deterministic simulated LLM
//! ([`llm::Simulator`]) or online against any OpenAI-compatible chat
//! endpoint ([`llm::HttpBackend`]). End-to-end orchestration, baselines
//! (zero-shot / ICL / RAG / PAG), caching, and audit dumps live in
//! [`pipeline`].
//!
//! See the `examples/` directory for one runnable example per capability;
//! the `hydra` binary exposes the same phases as subcommands.

pub mod adapter;
pub mod datamodel;
pub mod error;
pub(crate) mod hashing;
pub mod llm;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod reranker;
pub mod retriever;

pub use error::{HydraError, Result};
