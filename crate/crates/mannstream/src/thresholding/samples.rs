//! Calibration sample storage.

/// Per-class logit samples gathered during calibration.
///
/// For every calibration example the model got right, the logit of the
/// correct class goes into that class's positive list and the logits of all
/// other classes go into their negative lists. `class_counts` tallies the
/// labels of *all* calibration examples, right or wrong: the class priors
/// describe the data, not the model.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitSampleSet {
    positives: Vec<Vec<f64>>,
    negatives: Vec<Vec<f64>>,
    class_counts: Vec<u64>,
    correct: u64,
    total: u64,
    finalized: bool,
}

impl LogitSampleSet {
    pub fn new(classes: usize) -> Self {
        LogitSampleSet {
            positives: vec![Vec::new(); classes],
            negatives: vec![Vec::new(); classes],
            class_counts: vec![0; classes],
            correct: 0,
            total: 0,
            finalized: false,
        }
    }

    pub fn class_count(&self) -> usize {
        self.class_counts.len()
    }

    pub fn positives(&self, class: usize) -> &[f64] {
        &self.positives[class]
    }

    pub fn negatives(&self, class: usize) -> &[f64] {
        &self.negatives[class]
    }

    pub fn class_counts(&self) -> &[u64] {
        &self.class_counts
    }

    /// Calibration examples the model answered correctly.
    pub fn correct_samples(&self) -> u64 {
        self.correct
    }

    /// All calibration examples seen.
    pub fn total_samples(&self) -> u64 {
        self.total
    }

    pub(crate) fn push_positive(&mut self, class: usize, z: f64) {
        self.positives[class].push(z);
    }

    pub(crate) fn push_negative(&mut self, class: usize, z: f64) {
        self.negatives[class].push(z);
    }

    pub(crate) fn count_label(&mut self, label: usize) {
        self.class_counts[label] += 1;
        self.total += 1;
    }

    pub(crate) fn count_correct(&mut self) {
        self.correct += 1;
    }

    /// Sorts every sample list. Downstream density and silhouette
    /// computations then sum in a fixed order, making calibration output
    /// bit-identical no matter how the dataset was shuffled.
    pub(crate) fn finalize(&mut self) {
        for list in self.positives.iter_mut().chain(self.negatives.iter_mut()) {
            list.sort_by(f64::total_cmp);
        }
        self.finalized = true;
    }

    pub fn is_finalized(&self) -> bool {
        self.finalized
    }
}
