//! Calibration and early-exit maximum inner-product search.
//!
//! The output layer computes logits one class at a time, so a query can
//! finish early if some logit is already convincing. Calibration learns
//! what "convincing" means from data:
//!
//! 1. run the model over a calibration set, keeping per-class logit samples
//!    from the correctly answered examples (positives where the class was
//!    the answer, negatives elsewhere);
//! 2. fit Gaussian KDEs to both sample sets and turn them into a posterior
//!    `p(y = i | z_i)` via Bayes' rule with the observed class priors;
//! 3. set each class threshold to the smallest observed positive logit
//!    whose posterior reaches the confidence bar `rho`;
//! 4. order classes by descending silhouette score so the classes that
//!    separate best are tested first.
//!
//! At inference time [`thresholded_argmax`] walks classes in that order and
//! returns as soon as a logit exceeds its class threshold, falling back to
//! an exact argmax over the (by then fully computed) logits when nothing
//! exits.

mod kde;
mod samples;
mod silhouette;
mod table;

use thiserror::Error;

use crate::counters::OpCounters;
use crate::matrix::Matrix;
use crate::model::{oracle_infer, ModelError, ModelWeights};

pub use kde::{silverman_bandwidth, GaussianKde};
pub use samples::LogitSampleSet;
pub use silhouette::{
    order_by_scores, silhouette_scores, SILHOUETTE_SUBSAMPLE_CAP, UNSCORED,
};
pub use table::{
    decode_table, encode_table, load_table, save_table, TableIoError, ThresholdTable,
    TABLE_FORMAT_VERSION,
};

use crate::data::QASample;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("calibration dataset is empty")]
    EmptyDataset,
    #[error("calibration label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("calibration failed: the model answered no calibration sample correctly")]
    NoCorrectPredictions,
    #[error("rho {0} outside (0, 1]")]
    RhoOutOfRange(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Table(#[from] TableIoError),
}

/// Runs the model over the calibration set and gathers per-class logit
/// samples from correctly answered examples.
pub fn collect_samples(
    model: &ModelWeights,
    dataset: &[QASample],
) -> Result<LogitSampleSet, CalibrationError> {
    if dataset.is_empty() {
        return Err(CalibrationError::EmptyDataset);
    }
    let classes = model.dims.output_dim;
    let mut set = LogitSampleSet::new(classes);
    for sample in dataset {
        if sample.answer >= classes {
            return Err(CalibrationError::LabelOutOfRange {
                label: sample.answer,
                classes,
            });
        }
        let (predicted, logits) = oracle_infer(model, &sample.story, &sample.question)?;
        set.count_label(sample.answer);
        if predicted == sample.answer {
            set.count_correct();
            for (i, &z) in logits.as_slice().iter().enumerate() {
                if i == sample.answer {
                    set.push_positive(i, z);
                } else {
                    set.push_negative(i, z);
                }
            }
        }
    }
    if set.correct_samples() == 0 {
        return Err(CalibrationError::NoCorrectPredictions);
    }
    set.finalize();
    Ok(set)
}

/// Positive/negative KDEs for one thresholdable class.
#[derive(Debug, Clone)]
pub struct ClassDensity {
    pub positive: GaussianKde,
    pub negative: GaussianKde,
}

/// Density estimates plus class priors.
///
/// Classes with fewer than two positive samples carry no density and are
/// non-thresholdable: their threshold comes out `+inf` downstream.
#[derive(Debug, Clone)]
pub struct DensityModel {
    classes: Vec<Option<ClassDensity>>,
    priors: Vec<f64>,
}

impl DensityModel {
    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn class(&self, i: usize) -> Option<&ClassDensity> {
        self.classes[i].as_ref()
    }

    pub fn prior(&self, i: usize) -> f64 {
        self.priors[i]
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn is_thresholdable(&self, i: usize) -> bool {
        self.classes[i].is_some()
    }
}

/// Fits per-class positive and negative KDEs and computes priors from the
/// calibration label counts.
pub fn estimate_densities(samples: &LogitSampleSet) -> DensityModel {
    let n = samples.class_count();
    let total: u64 = samples.class_counts().iter().sum();
    let priors: Vec<f64> = samples
        .class_counts()
        .iter()
        .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
        .collect();
    let classes = (0..n)
        .map(|i| {
            let pos = samples.positives(i);
            if pos.len() < 2 {
                None
            } else {
                Some(ClassDensity {
                    positive: GaussianKde::fit(pos),
                    negative: GaussianKde::fit(samples.negatives(i)),
                })
            }
        })
        .collect();
    DensityModel { classes, priors }
}

/// Normalized posterior `p(y = i | z)`.
///
/// The negative-class KDE provides the complement hypothesis:
/// `pos * prior / (pos * prior + neg * (1 - prior))`. Returns 0 when both
/// densities underflow or the class is non-thresholdable.
pub fn posterior(density: &DensityModel, class: usize, z: f64) -> f64 {
    let Some(cd) = density.class(class) else {
        return 0.0;
    };
    let prior = density.prior(class);
    let p_pos = cd.positive.density(z) * prior;
    let p_neg = cd.negative.density(z) * (1.0 - prior);
    let denom = p_pos + p_neg;
    if denom == 0.0 {
        0.0
    } else {
        p_pos / denom
    }
}

/// Per-class exit thresholds: the smallest observed positive logit whose
/// posterior reaches `rho`, or `+inf` when no candidate qualifies.
pub fn compute_thresholds(
    density: &DensityModel,
    samples: &LogitSampleSet,
    rho: f64,
) -> Result<Vec<f64>, CalibrationError> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(CalibrationError::RhoOutOfRange(rho));
    }
    let mut theta = vec![f64::INFINITY; samples.class_count()];
    for i in 0..samples.class_count() {
        if !density.is_thresholdable(i) {
            continue;
        }
        // Candidates are the observed positives, already sorted ascending;
        // the first qualifying one is the minimum.
        for &z in samples.positives(i) {
            if posterior(density, i, z) >= rho {
                theta[i] = z;
                break;
            }
        }
    }
    Ok(theta)
}

/// Per-class silhouette scores and the descending evaluation order.
pub fn silhouette_order(samples: &LogitSampleSet) -> (Vec<f64>, Vec<usize>) {
    let scores = silhouette_scores(samples);
    let order = order_by_scores(&scores);
    (scores, order)
}

/// Full calibration pipeline: sample collection, density estimation,
/// thresholds, and index ordering. Deterministic given its inputs and
/// invariant to dataset order.
pub fn calibrate(
    model: &ModelWeights,
    dataset: &[QASample],
    rho: f64,
) -> Result<ThresholdTable, CalibrationError> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(CalibrationError::RhoOutOfRange(rho));
    }
    let samples = collect_samples(model, dataset)?;
    let density = estimate_densities(&samples);
    let theta = compute_thresholds(&density, &samples, rho)?;
    let (scores, order) = silhouette_order(&samples);
    Ok(ThresholdTable::new(rho, theta, order, scores)?)
}

/// Early-exit output scan.
///
/// Walks classes in table order computing one dot product each; returns as
/// soon as a logit strictly exceeds its class threshold. If no class exits,
/// every logit has been computed and an exact argmax over them is returned
/// with the full dot-product count.
pub fn thresholded_argmax(
    hidden: &[f64],
    w_o: &Matrix,
    table: &ThresholdTable,
    counters: &mut OpCounters,
) -> (usize, u64) {
    debug_assert_eq!(table.class_count(), w_o.rows());
    let mut logits = vec![0.0; w_o.rows()];
    let mut dots = 0u64;
    for &class in table.order() {
        let row = w_o.row(class);
        let mut acc = 0.0;
        for c in 0..row.len() {
            acc += row[c] * hidden[c];
        }
        counters.multiplications += row.len() as u64;
        dots += 1;
        logits[class] = acc;
        counters.logit_comparisons += 1;
        if acc > table.theta()[class] {
            return (class, dots);
        }
    }
    // No exit fired: all logits are computed, fall back to an exact scan.
    let mut best = 0;
    for i in 1..logits.len() {
        counters.logit_comparisons += 1;
        if logits[i] > logits[best] {
            best = i;
        }
    }
    (best, dots)
}
