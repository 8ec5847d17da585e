//! Streaming inference for memory-augmented neural networks, with
//! data-based early-exit inner-product search in the output layer.
//!
//! The crate has three layers:
//!
//! - [`model`] holds weights and the exact single-threaded forward pass —
//!   the reference every other path is checked against.
//! - [`engine`] re-runs that computation as a five-stage streaming pipeline
//!   over bounded FIFO queues, instrumenting every multiplication, weight
//!   column read, exponential, division, and logit comparison.
//! - [`thresholding`] calibrates per-class early-exit thresholds and an
//!   efficient class evaluation order from data, so the sequential output
//!   scan can stop as soon as one logit is convincing.
//!
//! [`data`] supplies bAbI-format parsing and deterministic synthetic
//! planted tasks; [`trainer`] is a small SGD trainer for producing
//! realistic logit distributions on parsed corpora.
//!
//! ```
//! use mannstream::data::synthesize_planted;
//! use mannstream::engine::{engine_infer, PipelineConfig};
//! use mannstream::model::oracle_infer;
//!
//! let task = synthesize_planted(3, 4, 2, 10, 42).unwrap();
//! let sample = &task.samples[0];
//! let (label, _) = oracle_infer(&task.model, &sample.story, &sample.question).unwrap();
//! assert_eq!(label, sample.answer);
//!
//! let cfg = PipelineConfig::for_model(&task.model);
//! let out = engine_infer(&task.model, &sample.story, &sample.question, &cfg).unwrap();
//! assert_eq!(out.label, label);
//! ```

pub mod counters;
pub mod data;
pub mod engine;
pub mod matrix;
pub mod model;
pub mod model_io;
pub mod thresholding;
pub mod trainer;

pub use counters::{OpCounters, StageBreakdown};
pub use matrix::Matrix;
pub use model::{Dimensions, LogitVector, MemoryState, ModelWeights, Sentence};
