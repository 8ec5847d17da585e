//! The five pipeline stages.
//!
//! Control validates the stream protocol; input/write embeds sentences;
//! mem owns the memories; read runs the hop recurrence; output scans or
//! threshold-scans the logits. Each stage is a deterministic token
//! transducer with its own counter ledger, so results and counts cannot
//! depend on how stages are scheduled.

use std::sync::Arc;

use crate::counters::StageBreakdown;
use crate::matrix::Matrix;
use crate::model::{
    address, controller_step, embed_sentence_pair, exact_argmax, output_logits, read_key,
    read_vector, MemoryState, ReadKeyInput,
};
use crate::thresholding::{thresholded_argmax, ThresholdTable};

use super::token::{AnswerRecord, PipeToken, WeightFragment};
use super::EngineError;

pub(crate) trait PipelineStage: Send {
    fn name(&self) -> &'static str;

    /// Consumes one token, pushing any outputs in order.
    fn on_token(&mut self, token: PipeToken, out: &mut Vec<PipeToken>)
        -> Result<(), EngineError>;

    /// Counter ledger accumulated so far.
    fn breakdown(&self) -> StageBreakdown;
}

fn missing(stage: &'static str, what: &str) -> EngineError {
    EngineError::Protocol(format!("{stage} received data before {what} was broadcast"))
}

/// Validates stream ordering and forwards everything else untouched.
#[derive(Default)]
pub(crate) struct ControlStage {
    sentences_since_flush: usize,
    ledger: StageBreakdown,
}

impl PipelineStage for ControlStage {
    fn name(&self) -> &'static str {
        "control"
    }

    fn on_token(
        &mut self,
        token: PipeToken,
        out: &mut Vec<PipeToken>,
    ) -> Result<(), EngineError> {
        match &token {
            PipeToken::Sentence(_) => self.sentences_since_flush += 1,
            PipeToken::Question(_) => {
                if self.sentences_since_flush == 0 {
                    return Err(EngineError::Protocol(
                        "question arrived with no story sentence since the last flush".into(),
                    ));
                }
            }
            PipeToken::Flush => self.sentences_since_flush = 0,
            _ => {}
        }
        out.push(token);
        Ok(())
    }

    fn breakdown(&self) -> StageBreakdown {
        self.ledger
    }
}

/// Embeds incoming sentences into address/context row pairs.
pub(crate) struct InputWriteStage {
    w_emb_a: Option<Arc<Matrix>>,
    w_emb_c: Option<Arc<Matrix>>,
    ledger: StageBreakdown,
}

impl InputWriteStage {
    pub(crate) fn new() -> Self {
        InputWriteStage {
            w_emb_a: None,
            w_emb_c: None,
            ledger: StageBreakdown::default(),
        }
    }
}

impl PipelineStage for InputWriteStage {
    fn name(&self) -> &'static str {
        "input_write"
    }

    fn on_token(
        &mut self,
        token: PipeToken,
        out: &mut Vec<PipeToken>,
    ) -> Result<(), EngineError> {
        match token {
            PipeToken::Fragment(frag) => {
                match &frag {
                    WeightFragment::EmbedAddress(m) => self.w_emb_a = Some(Arc::clone(m)),
                    WeightFragment::EmbedContext(m) => self.w_emb_c = Some(Arc::clone(m)),
                    _ => {}
                }
                out.push(PipeToken::Fragment(frag));
            }
            PipeToken::Sentence(s) => {
                let w_a = self.w_emb_a.as_ref().ok_or_else(|| missing(self.name(), "the address embedding"))?;
                let w_c = self.w_emb_c.as_ref().ok_or_else(|| missing(self.name(), "the context embedding"))?;
                let (addr, ctx) =
                    embed_sentence_pair(w_a, w_c, &s, &mut self.ledger.input_write)?;
                out.push(PipeToken::WriteRows { addr, ctx });
            }
            other => out.push(other),
        }
        Ok(())
    }

    fn breakdown(&self) -> StageBreakdown {
        self.ledger
    }
}

/// Owns the address and context memories; appends written rows and hands a
/// snapshot to the read stage when a question arrives.
pub(crate) struct MemStage {
    memory: Option<MemoryState>,
    ledger: StageBreakdown,
}

impl MemStage {
    pub(crate) fn new() -> Self {
        MemStage {
            memory: None,
            ledger: StageBreakdown::default(),
        }
    }
}

impl PipelineStage for MemStage {
    fn name(&self) -> &'static str {
        "mem"
    }

    fn on_token(
        &mut self,
        token: PipeToken,
        out: &mut Vec<PipeToken>,
    ) -> Result<(), EngineError> {
        match token {
            PipeToken::Fragment(frag) => {
                if let WeightFragment::Dims(dims) = &frag {
                    self.memory = Some(MemoryState::new(dims.memory_slots, dims.embed_dim));
                }
                out.push(PipeToken::Fragment(frag));
            }
            PipeToken::WriteRows { addr, ctx } => {
                let mem = self
                    .memory
                    .as_mut()
                    .ok_or_else(|| missing("mem", "dimension metadata"))?;
                mem.write(&addr, &ctx)?;
            }
            PipeToken::Question(question) => {
                let mem = self
                    .memory
                    .as_ref()
                    .ok_or_else(|| missing("mem", "dimension metadata"))?;
                out.push(PipeToken::Query {
                    question,
                    memory: mem.clone(),
                });
            }
            PipeToken::Flush => {
                if let Some(mem) = self.memory.as_mut() {
                    mem.reset();
                }
                out.push(PipeToken::Flush);
            }
            other => out.push(other),
        }
        Ok(())
    }

    fn breakdown(&self) -> StageBreakdown {
        self.ledger
    }
}

/// Runs the recurrent read path: key generation, addressing, read vector,
/// controller update, `hops` times.
///
/// The recurrence lives inside this stage (the previous controller output is
/// the next key), which keeps the stage graph acyclic. Addressing and
/// read-vector work executes here but is tallied in the `mem` bucket, since
/// those are memory-module operations wherever they are scheduled.
pub(crate) struct ReadStage {
    w_emb_q: Option<Arc<Matrix>>,
    w_r: Option<Arc<Matrix>>,
    hops: usize,
    ledger: StageBreakdown,
}

impl ReadStage {
    pub(crate) fn new(hops: usize) -> Self {
        ReadStage {
            w_emb_q: None,
            w_r: None,
            hops,
            ledger: StageBreakdown::default(),
        }
    }
}

impl PipelineStage for ReadStage {
    fn name(&self) -> &'static str {
        "read"
    }

    fn on_token(
        &mut self,
        token: PipeToken,
        out: &mut Vec<PipeToken>,
    ) -> Result<(), EngineError> {
        match token {
            PipeToken::Fragment(frag) => {
                match &frag {
                    WeightFragment::EmbedQuestion(m) => self.w_emb_q = Some(Arc::clone(m)),
                    WeightFragment::Controller(m) => self.w_r = Some(Arc::clone(m)),
                    _ => {}
                }
                out.push(PipeToken::Fragment(frag));
            }
            PipeToken::Query { question, memory } => {
                let w_emb_q = self.w_emb_q.as_ref().ok_or_else(|| missing(self.name(), "the question embedding"))?;
                let w_r = self.w_r.as_ref().ok_or_else(|| missing(self.name(), "the controller weight"))?;
                let used = memory.used_slots();
                let mut key = read_key(
                    ReadKeyInput::Question(&question),
                    1,
                    w_emb_q,
                    &mut self.ledger.read,
                )?;
                let mut hidden = Vec::new();
                for t in 1..=self.hops {
                    if t > 1 {
                        key = read_key(
                            ReadKeyInput::Previous(&hidden),
                            t,
                            w_emb_q,
                            &mut self.ledger.read,
                        )?;
                    }
                    let attention =
                        address(memory.address_memory(), &key, used, &mut self.ledger.mem)?;
                    let r =
                        read_vector(memory.context_memory(), &attention, used, &mut self.ledger.mem)?;
                    hidden = controller_step(&r, &key, w_r, &mut self.ledger.read)?;
                }
                out.push(PipeToken::Hidden(hidden));
            }
            other => out.push(other),
        }
        Ok(())
    }

    fn breakdown(&self) -> StageBreakdown {
        self.ledger
    }
}

/// Sequential output layer: full argmax scan, or the early-exit threshold
/// scan when a table is configured.
pub(crate) struct OutputStage {
    w_o: Option<Arc<Matrix>>,
    thresholding: Option<Arc<ThresholdTable>>,
    ledger: StageBreakdown,
}

impl OutputStage {
    pub(crate) fn new(thresholding: Option<Arc<ThresholdTable>>) -> Self {
        OutputStage {
            w_o: None,
            thresholding,
            ledger: StageBreakdown::default(),
        }
    }
}

impl PipelineStage for OutputStage {
    fn name(&self) -> &'static str {
        "output"
    }

    fn on_token(
        &mut self,
        token: PipeToken,
        out: &mut Vec<PipeToken>,
    ) -> Result<(), EngineError> {
        match token {
            PipeToken::Fragment(frag) => {
                if let WeightFragment::Output(m) = &frag {
                    self.w_o = Some(Arc::clone(m));
                }
                // Last stage: fragments are fully consumed here.
            }
            PipeToken::Hidden(hidden) => {
                let w_o = self.w_o.as_ref().ok_or_else(|| missing(self.name(), "the output weight"))?;
                for v in &hidden {
                    if !v.is_finite() {
                        return Err(EngineError::Protocol(
                            "non-finite controller output reached the output layer".into(),
                        ));
                    }
                }
                let record = match &self.thresholding {
                    None => {
                        let before = self.ledger.output.logit_comparisons;
                        let logits = output_logits(&hidden, w_o, &mut self.ledger.output)?;
                        let label = exact_argmax(&logits, &mut self.ledger.output)?;
                        AnswerRecord {
                            label,
                            dot_products: w_o.rows() as u64,
                            scalar_comparisons: self.ledger.output.logit_comparisons - before,
                            logits: Some(logits),
                        }
                    }
                    Some(table) => {
                        let before = self.ledger.output.logit_comparisons;
                        let (label, dots) =
                            thresholded_argmax(&hidden, w_o, table, &mut self.ledger.output);
                        AnswerRecord {
                            label,
                            dot_products: dots,
                            scalar_comparisons: self.ledger.output.logit_comparisons - before,
                            logits: None,
                        }
                    }
                };
                out.push(PipeToken::Answer(record));
            }
            PipeToken::Flush => {}
            other => out.push(other),
        }
        Ok(())
    }

    fn breakdown(&self) -> StageBreakdown {
        self.ledger
    }
}
