//! Training engine for late-interaction (multi-vector) retrievers driven by a
//! hard-negative difficulty curriculum.
//!
//! The crate is split along the training pipeline:
//!
//! - [`scoring`]: token matrices, MaxSim scoring and its subgradient, nDCG.
//! - [`losses`]: softplus margin loss, dual-view/bidirectional composition, InfoNCE.
//! - [`mining`]: offline candidate pools and per-step negative selection.
//! - [`curriculum`]: the difficulty action space and the rule-based phase controller.
//! - [`controller`]: prompt rendering, answer parsing and LLM fallback.
//! - [`hnqs`]: negative query synthesis prompt, parsing and a mock generator.
//! - [`mva`]: raster multi-view composites (original, downsampled, rotated).
//! - [`sim`]: synthetic data, the toy encoder and the end-to-end training loop.
//! - [`config`], [`replay`], [`plot`]: operator-facing plumbing used by the CLI.

pub mod config;
pub mod controller;
pub mod curriculum;
pub mod error;
pub mod hnqs;
pub mod jsonl;
pub mod losses;
pub mod mining;
pub mod mva;
pub mod plot;
pub mod replay;
pub mod scoring;
pub mod sim;

pub use error::{Error, Result};
