//! Token vocabulary of the streaming pipeline.

use std::sync::Arc;

use crate::matrix::Matrix;
use crate::model::{Dimensions, LogitVector, MemoryState, ModelWeights, Sentence};

use super::EngineError;

/// One weight broadcast unit. The driver splits a model into fragments and
/// streams them through the pipeline before any input data; each stage
/// caches the fragments it needs and forwards everything.
#[derive(Debug, Clone)]
pub enum WeightFragment {
    Dims(Dimensions),
    EmbedAddress(Arc<Matrix>),
    EmbedContext(Arc<Matrix>),
    EmbedQuestion(Arc<Matrix>),
    Controller(Arc<Matrix>),
    Output(Arc<Matrix>),
}

/// Splits a model into broadcast fragments (dimension metadata first).
pub fn model_fragments(model: &ModelWeights) -> Vec<WeightFragment> {
    vec![
        WeightFragment::Dims(model.dims),
        WeightFragment::EmbedAddress(Arc::new(model.w_emb_a.clone())),
        WeightFragment::EmbedContext(Arc::new(model.w_emb_c.clone())),
        WeightFragment::EmbedQuestion(Arc::new(model.w_emb_q.clone())),
        WeightFragment::Controller(Arc::new(model.w_r.clone())),
        WeightFragment::Output(Arc::new(model.w_o.clone())),
    ]
}

/// Result of answering one question.
#[derive(Debug, Clone, PartialEq)]
pub struct AnswerRecord {
    /// Predicted class.
    pub label: usize,
    /// Output-layer dot products spent on this question.
    pub dot_products: u64,
    /// Scalar logit comparisons spent on this question (threshold tests plus
    /// any fallback argmax scan).
    pub scalar_comparisons: u64,
    /// Full logit vector; present only when thresholding is disabled.
    pub logits: Option<LogitVector>,
}

/// Host-facing stream vocabulary.
///
/// Inbound: `ModelChunk`, `StorySentence`, `Question`, `Flush`,
/// `EndOfInput`. Outbound: `Answer`, one per question, in order.
#[derive(Debug, Clone)]
pub enum StreamToken {
    ModelChunk(WeightFragment),
    StorySentence(Sentence),
    Question(Sentence),
    EndOfInput,
    Answer(AnswerRecord),
    Flush,
}

/// Tokens on the internal stage-to-stage queues. Superset of the host
/// vocabulary: carries embedded rows, memory snapshots, and controller
/// outputs between stages.
#[derive(Debug, Clone)]
pub(crate) enum PipeToken {
    Fragment(WeightFragment),
    Sentence(Sentence),
    /// Embedded row pair produced by the input/write stage.
    WriteRows { addr: Vec<f64>, ctx: Vec<f64> },
    Question(Sentence),
    /// Question plus the memory contents it should be answered against.
    Query {
        question: Sentence,
        memory: MemoryState,
    },
    /// Final controller output, ready for the output layer.
    Hidden(Vec<f64>),
    Answer(AnswerRecord),
    Flush,
    End,
    /// Error propagation: downstream stages forward this to the sink.
    Failed(EngineError),
}

impl From<StreamToken> for PipeToken {
    fn from(tok: StreamToken) -> PipeToken {
        match tok {
            StreamToken::ModelChunk(f) => PipeToken::Fragment(f),
            StreamToken::StorySentence(s) => PipeToken::Sentence(s),
            StreamToken::Question(q) => PipeToken::Question(q),
            StreamToken::EndOfInput => PipeToken::End,
            StreamToken::Flush => PipeToken::Flush,
            StreamToken::Answer(a) => PipeToken::Answer(a),
        }
    }
}
