//! Streaming inference engine.
//!
//! Software realization of a five-stage dataflow pipeline: control,
//! input/write, mem, read, and output stages connected by bounded FIFO
//! queues. Model weights are broadcast once at pipeline start; stories and
//! questions then flow through as tokens, and every answer carries its
//! output-layer cost. All arithmetic goes through the same primitives as
//! the reference path in [`crate::model`], so engine logits match the
//! oracle bit for bit, and counters are exact deterministic functions of
//! the input stream.

mod exec;
mod stage;
mod token;

use std::sync::Arc;

use thiserror::Error;

use crate::counters::{OpCounters, StageBreakdown};
use crate::model::{
    embed_sentence_pair, exact_argmax, output_logits, LogitVector, MemoryState, ModelError,
    ModelWeights, Sentence,
};
use crate::thresholding::{thresholded_argmax, ThresholdTable};

pub use token::{model_fragments, AnswerRecord, StreamToken, WeightFragment};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EngineError {
    #[error("invalid pipeline config: {0}")]
    InvalidConfig(String),
    #[error("stream protocol violation: {0}")]
    Protocol(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("pipeline finished without emitting an answer")]
    MissingAnswer,
}

/// How the stage workers are driven.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecutionMode {
    /// One OS thread per stage with blocking bounded channels.
    #[default]
    Threaded,
    /// Single-threaded round-robin scheduling; handy under a debugger.
    Sequential,
}

/// Pipeline construction parameters.
#[derive(Debug, Clone, Default)]
pub struct PipelineConfig {
    /// Tokens each inter-stage FIFO can hold; must be at least 1.
    pub queue_capacity: usize,
    /// Recursive read hops per question.
    pub hops: usize,
    /// Early-exit table for the output stage; full scan when absent.
    pub thresholding: Option<Arc<ThresholdTable>>,
    pub mode: ExecutionMode,
}

impl PipelineConfig {
    /// Defaults for a given model: capacity 8, the model's own hop count,
    /// no thresholding, threaded execution.
    pub fn for_model(model: &ModelWeights) -> Self {
        PipelineConfig {
            queue_capacity: 8,
            hops: model.dims.hops,
            thresholding: None,
            mode: ExecutionMode::Threaded,
        }
    }

    fn validate(&self) -> Result<(), EngineError> {
        if self.queue_capacity == 0 {
            return Err(EngineError::InvalidConfig(
                "queue_capacity must be >= 1".into(),
            ));
        }
        if self.hops == 0 {
            return Err(EngineError::InvalidConfig("hops must be >= 1".into()));
        }
        Ok(())
    }
}

/// Everything a pipeline run produced.
#[derive(Debug, Clone)]
pub struct EngineReport {
    /// One record per question, in arrival order.
    pub answers: Vec<AnswerRecord>,
    /// Work tally summed over all stages.
    pub counters: OpCounters,
    /// Work tally per functional stage.
    pub by_stage: StageBreakdown,
}

/// Outcome of a single-question run.
#[derive(Debug, Clone)]
pub struct EngineOutcome {
    pub label: usize,
    /// Present when thresholding is off.
    pub logits: Option<LogitVector>,
    pub dot_products: u64,
    pub scalar_comparisons: u64,
    pub counters: OpCounters,
    pub by_stage: StageBreakdown,
}

fn build_stages(cfg: &PipelineConfig) -> Vec<Box<dyn stage::PipelineStage>> {
    vec![
        Box::new(stage::ControlStage::default()),
        Box::new(stage::InputWriteStage::new()),
        Box::new(stage::MemStage::new()),
        Box::new(stage::ReadStage::new(cfg.hops)),
        Box::new(stage::OutputStage::new(cfg.thresholding.clone())),
    ]
}

/// Streams an arbitrary token sequence through the pipeline.
///
/// The model broadcast is prepended automatically; callers only supply
/// story/question/flush tokens. A trailing [`StreamToken::EndOfInput`] is
/// optional — closing the stream ends the run either way.
pub fn run_stream(
    model: &ModelWeights,
    cfg: &PipelineConfig,
    tokens: impl IntoIterator<Item = StreamToken>,
) -> Result<EngineReport, EngineError> {
    cfg.validate()?;
    model.validate()?;
    let mut inputs: Vec<token::PipeToken> = model_fragments(model)
        .into_iter()
        .map(|f| token::PipeToken::Fragment(f))
        .collect();
    inputs.extend(tokens.into_iter().map(token::PipeToken::from));

    let stages = build_stages(cfg);
    let run = match cfg.mode {
        ExecutionMode::Threaded => exec::run_threaded(stages, cfg.queue_capacity, inputs)?,
        ExecutionMode::Sequential => exec::run_sequential(stages, cfg.queue_capacity, inputs)?,
    };
    Ok(EngineReport {
        answers: run.answers,
        counters: run.by_stage.total(),
        by_stage: run.by_stage,
    })
}

/// Answers one question about one story through the full pipeline.
pub fn engine_infer(
    model: &ModelWeights,
    story: &[Sentence],
    question: &Sentence,
    cfg: &PipelineConfig,
) -> Result<EngineOutcome, EngineError> {
    if story.len() > model.dims.memory_slots {
        return Err(EngineError::Model(ModelError::StoryOverflow {
            len: story.len(),
            capacity: model.dims.memory_slots,
        }));
    }
    let mut tokens: Vec<StreamToken> = story
        .iter()
        .cloned()
        .map(StreamToken::StorySentence)
        .collect();
    tokens.push(StreamToken::Question(question.clone()));
    tokens.push(StreamToken::EndOfInput);

    let report = run_stream(model, cfg, tokens)?;
    let answer = report
        .answers
        .into_iter()
        .next()
        .ok_or(EngineError::MissingAnswer)?;
    Ok(EngineOutcome {
        label: answer.label,
        logits: answer.logits,
        dot_products: answer.dot_products,
        scalar_comparisons: answer.scalar_comparisons,
        counters: report.counters,
        by_stage: report.by_stage,
    })
}

/// Write-path reference: embeds a sentence through both tables and appends
/// the row pair. This is exactly what the input/write and mem stages do
/// between them for each story sentence.
pub fn write_stage(
    memory: &mut MemoryState,
    sentence: &Sentence,
    model: &ModelWeights,
    counters: &mut OpCounters,
) -> Result<(), EngineError> {
    let (addr, ctx) = embed_sentence_pair(&model.w_emb_a, &model.w_emb_c, sentence, counters)?;
    memory.write(&addr, &ctx)?;
    Ok(())
}

/// Result of one output-layer pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputResult {
    pub label: usize,
    pub dot_products: u64,
    pub comparisons: u64,
}

/// Output-layer reference: full sequential scan, or the early-exit scan
/// when a threshold table is supplied.
pub fn output_stage(
    hidden: &[f64],
    model: &ModelWeights,
    thresholding: Option<&ThresholdTable>,
    counters: &mut OpCounters,
) -> Result<OutputResult, EngineError> {
    let before = counters.logit_comparisons;
    match thresholding {
        None => {
            let logits = output_logits(hidden, &model.w_o, counters)?;
            let label = exact_argmax(&logits, counters)?;
            Ok(OutputResult {
                label,
                dot_products: model.w_o.rows() as u64,
                comparisons: counters.logit_comparisons - before,
            })
        }
        Some(table) => {
            let (label, dots) = thresholded_argmax(hidden, &model.w_o, table, counters);
            Ok(OutputResult {
                label,
                dot_products: dots,
                comparisons: counters.logit_comparisons - before,
            })
        }
    }
}

/// Clears the memory for the next story.
pub fn reset(memory: &mut MemoryState) {
    memory.reset();
}
