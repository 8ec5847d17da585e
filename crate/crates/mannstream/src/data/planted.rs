//! Synthetic planted tasks with analytically constructed weights.
//!
//! Stories are "entity at location" facts; the question names an entity and
//! the answer is that entity's most recent location. The weights are built
//! so content addressing provably recovers the matching fact:
//!
//! - address embeddings place each entity in its own one-hot block, scaled
//!   so the softmax concentrates on the matching fact;
//! - the question embedding uses the same entity block unscaled;
//! - context embeddings encode the location identity;
//! - the controller weight is zero and the output weight reads the location
//!   block back out.
//!
//! With one hop, the read vector is (nearly) the answer's location one-hot
//! and the argmax is exact on every generated sample. Entities never repeat
//! within a story: two identical facts at different slots would split the
//! attention and position-blind addressing could not prefer the later one,
//! so the single-occurrence rule is what makes the guarantee unconditional.
//! The "latest fact wins" labeling rule still governs answer resolution.
//!
//! Low-index locations are deliberately underused: the first third of the
//! location vocabulary never appears as an answer and the rest follow an
//! alternating frequency pattern. Calibration then has both unscoreable
//! classes (no positives) and a skewed prior, which is what gives silhouette
//! index ordering something real to exploit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::matrix::Matrix;
use crate::model::{Dimensions, ModelWeights, Sentence};

use super::{DataError, QASample, Vocabulary};

/// Scale applied to address-side entity blocks so attention on the matching
/// fact exceeds 0.99 even with a full memory of distractors.
pub const ADDRESS_SCALE: f64 = 10.0;

/// A generated dataset plus the weights that solve it.
#[derive(Debug, Clone)]
pub struct PlantedTask {
    pub samples: Vec<QASample>,
    pub vocab: Vocabulary,
    pub model: ModelWeights,
}

/// Per-location sampling weight: the first `n_locations / 3` locations are
/// reserved (never answers), the rest alternate between weight 1 and 2.
fn location_weight(j: usize, n_locations: usize) -> u32 {
    let reserved = n_locations / 3;
    if j < reserved {
        0
    } else {
        1 + ((j - reserved) % 2) as u32
    }
}

fn pick_weighted(weights: &[u32], rng: &mut ChaCha8Rng) -> usize {
    let total: u32 = weights.iter().sum();
    debug_assert!(total > 0);
    let mut roll = rng.gen_range(0..total);
    for (i, &w) in weights.iter().enumerate() {
        if roll < w {
            return i;
        }
        roll -= w;
    }
    unreachable!("weights sum covers every roll")
}

/// Latest-fact-wins answer resolution over (entity, location) facts.
fn last_location_of(facts: &[(usize, usize)], entity: usize) -> Option<usize> {
    facts
        .iter()
        .rev()
        .find(|(e, _)| *e == entity)
        .map(|&(_, l)| l)
}

fn build_model(n_entities: usize, n_locations: usize, memory_slots: usize) -> ModelWeights {
    let vocab_size = n_entities + n_locations + 1;
    let embed_dim = n_entities + n_locations;
    let dims = Dimensions {
        vocab_size,
        embed_dim,
        output_dim: n_locations,
        memory_slots,
        hops: 1,
    };
    let mut model = ModelWeights::zeros(dims);
    for e in 0..n_entities {
        model.w_emb_a[(e, e)] = ADDRESS_SCALE;
        model.w_emb_q[(e, e)] = 1.0;
    }
    for l in 0..n_locations {
        model.w_emb_c[(n_entities + l, n_entities + l)] = 1.0;
    }
    model.w_o = Matrix::from_fn(n_locations, embed_dim, |row, col| {
        if col == n_entities + row {
            1.0
        } else {
            0.0
        }
    });
    model
}

fn build_vocab(n_entities: usize, n_locations: usize) -> Vocabulary {
    let mut vocab = Vocabulary::new();
    for e in 0..n_entities {
        vocab.intern(&format!("e{e}"));
    }
    for l in 0..n_locations {
        vocab.intern(&format!("l{l}"));
    }
    vocab.intern("at");
    for l in 0..n_locations {
        vocab.intern_answer(&format!("l{l}"));
    }
    vocab
}

/// Generates `n_samples` planted stories and the exact model for them.
///
/// Deterministic in `seed`. Fails when the parameters cannot produce a
/// sound task (zero counts, or more facts per story than distinct
/// entities).
pub fn synthesize_planted(
    n_entities: usize,
    n_locations: usize,
    facts_per_story: usize,
    n_samples: usize,
    seed: u64,
) -> Result<PlantedTask, DataError> {
    if n_entities == 0 || n_locations == 0 || facts_per_story == 0 || n_samples == 0 {
        return Err(DataError::InvalidParams(
            "entities, locations, facts_per_story, and samples must all be >= 1".into(),
        ));
    }
    if facts_per_story > n_entities {
        return Err(DataError::InvalidParams(format!(
            "facts_per_story {facts_per_story} exceeds the {n_entities} distinct entities \
             available; repeated entities would make single-hop addressing ambiguous"
        )));
    }

    let vocab = build_vocab(n_entities, n_locations);
    let model = build_model(n_entities, n_locations, facts_per_story);
    let at_index = n_entities + n_locations;
    let weights: Vec<u32> = (0..n_locations)
        .map(|j| location_weight(j, n_locations))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let entities = rand::seq::index::sample(&mut rng, n_entities, facts_per_story);
        let facts: Vec<(usize, usize)> = entities
            .into_iter()
            .map(|e| (e, pick_weighted(&weights, &mut rng)))
            .collect();
        let story: Vec<Sentence> = facts
            .iter()
            .map(|&(e, l)| {
                Sentence::new(vec![e, at_index, n_entities + l]).expect("three tokens")
            })
            .collect();
        let asked = facts[rng.gen_range(0..facts.len())].0;
        let answer = last_location_of(&facts, asked).expect("asked entity is in the story");
        let fact_pos = facts.iter().rposition(|(e, _)| *e == asked).expect("present");
        samples.push(QASample {
            story,
            question: Sentence::new(vec![asked]).expect("one token"),
            answer,
            supporting_fact_ids: Some(vec![fact_pos + 1]),
        });
    }

    Ok(PlantedTask {
        samples,
        vocab,
        model,
    })
}
