//! Per-class silhouette scores over 1-D logit samples.
//!
//! For each class the two clusters are its positive and negative logit
//! samples; distance is absolute difference. The class score averages the
//! silhouette of the positive samples only: classes whose correct-answer
//! logits sit far from their wrong-answer logits score near 1 and are the
//! most profitable to test first in the early-exit scan.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::samples::LogitSampleSet;

/// Score given to classes that cannot be scored (no positive or no negative
/// samples). Sorted last.
pub const UNSCORED: f64 = -1.0;

/// Clusters larger than this are subsampled before the O(n^2) scan.
pub const SILHOUETTE_SUBSAMPLE_CAP: usize = 2048;

/// Deterministically subsamples a sorted cluster down to the cap. Seeded by
/// the class index only, so results do not depend on dataset order.
fn subsample(sorted: &[f64], class: usize) -> Vec<f64> {
    if sorted.len() <= SILHOUETTE_SUBSAMPLE_CAP {
        return sorted.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x51_1140_7e_7e ^ class as u64);
    let mut picked: Vec<f64> =
        rand::seq::index::sample(&mut rng, sorted.len(), SILHOUETTE_SUBSAMPLE_CAP)
            .into_iter()
            .map(|i| sorted[i])
            .collect();
    picked.sort_by(f64::total_cmp);
    picked
}

/// Silhouette of one point against its own cluster and the other cluster.
fn point_silhouette(z: f64, own: &[f64], other: &[f64]) -> f64 {
    // Mean absolute distance to the rest of the own cluster; a singleton
    // cluster contributes zero intra-cluster distance.
    let a = if own.len() <= 1 {
        0.0
    } else {
        let sum: f64 = own.iter().map(|&x| (z - x).abs()).sum();
        sum / (own.len() as f64 - 1.0)
    };
    let b = other.iter().map(|&x| (z - x).abs()).sum::<f64>() / other.len() as f64;
    let denom = a.max(b);
    if denom == 0.0 {
        0.0
    } else {
        (b - a) / denom
    }
}

/// Scores every class. Requires the sample set to be finalized (sorted).
pub fn silhouette_scores(samples: &LogitSampleSet) -> Vec<f64> {
    let classes = samples.class_count();
    let mut scores = vec![UNSCORED; classes];
    for i in 0..classes {
        let pos = samples.positives(i);
        let neg = samples.negatives(i);
        if pos.is_empty() || neg.is_empty() {
            continue;
        }
        let pos = subsample(pos, i);
        let neg = subsample(neg, i);
        let total: f64 = pos.iter().map(|&z| point_silhouette(z, &pos, &neg)).sum();
        scores[i] = total / pos.len() as f64;
    }
    scores
}

/// Indices sorted by descending score, ties broken by smaller index.
pub fn order_by_scores(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("silhouette scores are finite")
            .then(a.cmp(&b))
    });
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::thresholding::samples::LogitSampleSet;

    fn set_with(pos: &[&[f64]], neg: &[&[f64]], counts: &[u64]) -> LogitSampleSet {
        let mut s = LogitSampleSet::new(pos.len());
        for (i, p) in pos.iter().enumerate() {
            for &z in *p {
                s.push_positive(i, z);
            }
        }
        for (i, n) in neg.iter().enumerate() {
            for &z in *n {
                s.push_negative(i, z);
            }
        }
        for (i, &c) in counts.iter().enumerate() {
            for _ in 0..c {
                s.count_label(i);
            }
        }
        s.finalize();
        s
    }

    #[test]
    fn well_separated_clusters_score_near_one() {
        let s = set_with(&[&[10.0, 10.1]], &[&[0.0, 0.1]], &[2]);
        let scores = silhouette_scores(&s);
        // Direct formula: a = 0.1 for both points; b ~ 10.05 and 9.95.
        let a = 0.1;
        let b0 = (10.0 + 9.9) / 2.0;
        let b1 = (10.1 + 10.0) / 2.0;
        let expected = ((b0 - a) / b0 + (b1 - a) / b1) / 2.0;
        assert!((scores[0] - expected).abs() < 1e-12);
        assert!(scores[0] > 0.98);
    }

    #[test]
    fn identical_multisets_score_about_zero() {
        let vals = [1.0, 2.0, 3.0];
        let s = set_with(&[&vals], &[&vals], &[3]);
        let scores = silhouette_scores(&s);
        assert!(scores[0].abs() < 0.35, "score {}", scores[0]);
    }

    #[test]
    fn class_without_negatives_gets_sentinel_and_sorts_last() {
        let s = set_with(
            &[&[5.0, 5.1], &[1.0, 1.2]],
            &[&[], &[4.0, 4.2]],
            &[2, 2],
        );
        let scores = silhouette_scores(&s);
        assert_eq!(scores[0], UNSCORED);
        assert!(scores[1] > UNSCORED);
        let order = order_by_scores(&scores);
        assert_eq!(order, vec![1, 0]);
    }

    #[test]
    fn order_breaks_ties_by_index() {
        let order = order_by_scores(&[0.5, 0.9, 0.5, -1.0]);
        assert_eq!(order, vec![1, 0, 2, 3]);
    }

    #[test]
    fn singleton_positive_cluster_has_zero_intra_distance() {
        let s = set_with(&[&[3.0]], &[&[0.0, 1.0]], &[1]);
        let scores = silhouette_scores(&s);
        // a = 0, b = 2.5 -> s = 1.
        assert!((scores[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn subsample_is_deterministic_and_sorted() {
        let big: Vec<f64> = (0..5000).map(|i| i as f64).collect();
        let a = subsample(&big, 3);
        let b = subsample(&big, 3);
        assert_eq!(a, b);
        assert_eq!(a.len(), SILHOUETTE_SUBSAMPLE_CAP);
        assert!(a.windows(2).all(|w| w[0] <= w[1]));
        // A different class picks a different subsample.
        let c = subsample(&big, 4);
        assert_ne!(a, c);
    }
}
