//! Pipeline executors.
//!
//! Two ways to drive the same stage objects: one OS thread per stage with
//! blocking bounded channels, or a single-threaded round-robin scheduler
//! over capacity-bounded queues. Stages are deterministic transducers on a
//! linear chain of single-producer single-consumer queues, so every edge
//! carries the same token sequence under either executor and any capacity;
//! the two must (and do) produce identical answers and counters.

use std::collections::VecDeque;
use std::sync::mpsc::{sync_channel, Receiver, SyncSender};
use std::thread;

use crate::counters::StageBreakdown;

use super::stage::PipelineStage;
use super::token::{AnswerRecord, PipeToken};
use super::EngineError;

pub(crate) struct RunOutput {
    pub answers: Vec<AnswerRecord>,
    pub by_stage: StageBreakdown,
}

fn collect_sink_token(
    token: PipeToken,
    answers: &mut Vec<AnswerRecord>,
    error: &mut Option<EngineError>,
) {
    match token {
        PipeToken::Answer(a) => answers.push(a),
        PipeToken::Failed(e) => {
            if error.is_none() {
                *error = Some(e);
            }
        }
        _ => {}
    }
}

/// One OS thread per stage, bounded channels between them.
pub(crate) fn run_threaded(
    stages: Vec<Box<dyn PipelineStage>>,
    capacity: usize,
    inputs: Vec<PipeToken>,
) -> Result<RunOutput, EngineError> {
    assert!(capacity >= 1);
    let (source_tx, mut upstream_rx) = sync_channel::<PipeToken>(capacity);
    let feeder = thread::spawn(move || {
        for tok in inputs {
            if source_tx.send(tok).is_err() {
                break;
            }
        }
    });

    let mut handles = Vec::with_capacity(stages.len());
    for stage in stages {
        let (tx, next_rx) = sync_channel::<PipeToken>(capacity);
        let rx = std::mem::replace(&mut upstream_rx, next_rx);
        handles.push(thread::spawn(move || stage_worker(stage, rx, tx)));
    }

    let mut answers = Vec::new();
    let mut error = None;
    while let Ok(tok) = upstream_rx.recv() {
        collect_sink_token(tok, &mut answers, &mut error);
    }

    feeder.join().expect("feeder thread panicked");
    let mut by_stage = StageBreakdown::default();
    for h in handles {
        by_stage += h.join().expect("stage thread panicked");
    }
    match error {
        Some(e) => Err(e),
        None => Ok(RunOutput { answers, by_stage }),
    }
}

fn stage_worker(
    mut stage: Box<dyn PipelineStage>,
    rx: Receiver<PipeToken>,
    tx: SyncSender<PipeToken>,
) -> StageBreakdown {
    let mut out = Vec::new();
    let mut poisoned = false;
    while let Ok(tok) = rx.recv() {
        if poisoned {
            // Keep draining so upstream senders never block forever.
            continue;
        }
        if matches!(tok, PipeToken::Failed(_)) {
            let _ = tx.send(tok);
            poisoned = true;
            continue;
        }
        out.clear();
        match stage.on_token(tok, &mut out) {
            Ok(()) => {
                for t in out.drain(..) {
                    if tx.send(t).is_err() {
                        poisoned = true;
                        break;
                    }
                }
            }
            Err(e) => {
                let _ = tx.send(PipeToken::Failed(e));
                poisoned = true;
            }
        }
    }
    stage.breakdown()
}

struct SeqSlot {
    stage: Box<dyn PipelineStage>,
    input: VecDeque<PipeToken>,
    pending: VecDeque<PipeToken>,
    poisoned: bool,
}

/// Single-threaded round-robin executor over bounded queues; the debugging
/// fallback. Serves tokens downstream-first so a full queue always drains
/// before its producer runs again.
pub(crate) fn run_sequential(
    stages: Vec<Box<dyn PipelineStage>>,
    capacity: usize,
    inputs: Vec<PipeToken>,
) -> Result<RunOutput, EngineError> {
    assert!(capacity >= 1);
    let mut source: VecDeque<PipeToken> = inputs.into();
    let mut slots: Vec<SeqSlot> = stages
        .into_iter()
        .map(|stage| SeqSlot {
            stage,
            input: VecDeque::new(),
            pending: VecDeque::new(),
            poisoned: false,
        })
        .collect();
    let mut answers = Vec::new();
    let mut error = None;

    loop {
        let mut progress = false;

        for i in (0..slots.len()).rev() {
            // Flush pending outputs into the next queue (the sink is
            // unbounded: the host is assumed to consume answers).
            while let Some(tok) = slots[i].pending.pop_front() {
                if i + 1 < slots.len() {
                    if slots[i + 1].input.len() >= capacity {
                        slots[i].pending.push_front(tok);
                        break;
                    }
                    slots[i + 1].input.push_back(tok);
                } else {
                    collect_sink_token(tok, &mut answers, &mut error);
                }
                progress = true;
            }

            // Process one input token if the pending buffer is clear.
            if slots[i].pending.is_empty() {
                if let Some(tok) = slots[i].input.pop_front() {
                    progress = true;
                    let slot = &mut slots[i];
                    if slot.poisoned {
                        continue;
                    }
                    if matches!(tok, PipeToken::Failed(_)) {
                        slot.pending.push_back(tok);
                        slot.poisoned = true;
                        continue;
                    }
                    let mut out = Vec::new();
                    match slot.stage.on_token(tok, &mut out) {
                        Ok(()) => slot.pending.extend(out),
                        Err(e) => {
                            slot.pending.push_back(PipeToken::Failed(e));
                            slot.poisoned = true;
                        }
                    }
                }
            }
        }

        // Refill the first stage from the source stream.
        while !source.is_empty() && slots[0].input.len() < capacity {
            slots[0].input.push_back(source.pop_front().expect("nonempty"));
            progress = true;
        }

        if !progress {
            break;
        }
    }

    let mut by_stage = StageBreakdown::default();
    for slot in &slots {
        by_stage += slot.stage.breakdown();
    }
    match error {
        Some(e) => Err(e),
        None => Ok(RunOutput { answers, by_stage }),
    }
}
