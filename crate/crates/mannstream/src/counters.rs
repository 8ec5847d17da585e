//! Deterministic operation counters.
//!
//! The engine never measures wall-clock time or power; instead every
//! arithmetic and weight-access operation is tallied here. Counts are exact
//! functions of the processed input, so two runs over the same data always
//! produce identical counters regardless of thread scheduling.

use std::ops::{Add, AddAssign};

/// Tallies of the cost-relevant operations performed during inference.
///
/// Counters only grow while work is performed; use [`OpCounters::reset`] to
/// start a new measurement window.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounters {
    /// Scalar floating-point multiplications.
    pub multiplications: u64,
    /// Embedding-table column fetches (one per word occurrence looked up).
    pub weight_column_reads: u64,
    /// Scalar comparisons between logits (argmax scans and threshold tests).
    pub logit_comparisons: u64,
    /// Exponential evaluations (softmax numerators).
    pub exp_evaluations: u64,
    /// Scalar divisions (softmax normalization passes).
    pub divisions: u64,
}

impl OpCounters {
    pub fn new() -> Self {
        Self::default()
    }

    /// Zeroes every tally.
    pub fn reset(&mut self) {
        *self = Self::default();
    }

    /// Sum of all tallies; a crude single-number cost figure.
    pub fn total(&self) -> u64 {
        self.multiplications
            + self.weight_column_reads
            + self.logit_comparisons
            + self.exp_evaluations
            + self.divisions
    }
}

impl Add for OpCounters {
    type Output = OpCounters;

    fn add(self, rhs: OpCounters) -> OpCounters {
        OpCounters {
            multiplications: self.multiplications + rhs.multiplications,
            weight_column_reads: self.weight_column_reads + rhs.weight_column_reads,
            logit_comparisons: self.logit_comparisons + rhs.logit_comparisons,
            exp_evaluations: self.exp_evaluations + rhs.exp_evaluations,
            divisions: self.divisions + rhs.divisions,
        }
    }
}

impl AddAssign for OpCounters {
    fn add_assign(&mut self, rhs: OpCounters) {
        *self = *self + rhs;
    }
}

/// Per-stage view of the work done by one pipeline run.
///
/// Buckets follow the functional split of the streaming architecture, not the
/// thread that happened to execute an operation: content addressing and read
/// vectors always land in `mem` even though the hop recurrence runs inside the
/// read stage worker.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StageBreakdown {
    pub control: OpCounters,
    pub input_write: OpCounters,
    pub mem: OpCounters,
    pub read: OpCounters,
    pub output: OpCounters,
}

impl StageBreakdown {
    /// Collapses the per-stage buckets into one total.
    pub fn total(&self) -> OpCounters {
        self.control + self.input_write + self.mem + self.read + self.output
    }
}

impl Add for StageBreakdown {
    type Output = StageBreakdown;

    fn add(self, rhs: StageBreakdown) -> StageBreakdown {
        StageBreakdown {
            control: self.control + rhs.control,
            input_write: self.input_write + rhs.input_write,
            mem: self.mem + rhs.mem,
            read: self.read + rhs.read,
            output: self.output + rhs.output,
        }
    }
}

impl AddAssign for StageBreakdown {
    fn add_assign(&mut self, rhs: StageBreakdown) {
        *self = *self + rhs;
    }
}
