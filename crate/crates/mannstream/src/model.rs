//! Model parameters and the exact reference implementation of the
//! memory-network forward pass.
//!
//! Everything in this module is the ground truth the rest of the crate is
//! checked against: the streaming engine must reproduce these numbers
//! bit for bit, and the calibration pipeline collects its logit samples
//! through [`oracle_infer`]. All arithmetic is `f64`.
//!
//! The forward pass for one question is:
//!
//! 1. every story sentence is embedded twice (address side and context side)
//!    and appended to memory;
//! 2. the question is embedded into an initial read key;
//! 3. for each hop: attention over the address memory, an attention-weighted
//!    sum of context memory rows, and a controller update
//!    `h = r + W_r * k`; the controller output becomes the next key;
//! 4. output logits `z_i = W_o[i] . h` and an argmax.

use crate::counters::OpCounters;
use crate::matrix::Matrix;

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ModelError {
    #[error("word index {index} out of range for vocabulary of size {vocab_size}")]
    WordIndexOutOfRange { index: usize, vocab_size: usize },
    #[error("sentence must contain at least one word")]
    EmptySentence,
    #[error("memory holds no written slots; cannot address")]
    EmptyMemory,
    #[error("memory full: all {capacity} slots written")]
    MemoryFull { capacity: usize },
    #[error("story of {len} sentences exceeds memory capacity {capacity}")]
    StoryOverflow { len: usize, capacity: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("read key contract violated at hop {hop}: expected {expected}")]
    ReadKeyContract { hop: usize, expected: &'static str },
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
}

/// Shape metadata shared by every weight matrix and memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dimensions {
    /// Number of word indices the embedding tables cover.
    pub vocab_size: usize,
    /// Width of embedded vectors, keys, and controller state.
    pub embed_dim: usize,
    /// Number of answer classes (rows of the output weight).
    pub output_dim: usize,
    /// Memory capacity in slots.
    pub memory_slots: usize,
    /// Number of recursive read hops per question.
    pub hops: usize,
}

impl Dimensions {
    pub fn new(
        vocab_size: usize,
        embed_dim: usize,
        output_dim: usize,
        memory_slots: usize,
        hops: usize,
    ) -> Result<Self, ModelError> {
        let dims = Dimensions {
            vocab_size,
            embed_dim,
            output_dim,
            memory_slots,
            hops,
        };
        dims.validate()?;
        Ok(dims)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, v) in [
            ("vocab_size", self.vocab_size),
            ("embed_dim", self.embed_dim),
            ("output_dim", self.output_dim),
            ("memory_slots", self.memory_slots),
            ("hops", self.hops),
        ] {
            if v == 0 {
                return Err(ModelError::InvalidDimensions(format!("{name} must be >= 1")));
            }
        }
        Ok(())
    }
}

/// A sentence as a non-empty ordered list of word indices.
///
/// Repeated indices are meaningful: the bag-of-words embedding sums the same
/// column once per occurrence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    words: Vec<usize>,
}

impl Sentence {
    pub fn new(words: Vec<usize>) -> Result<Self, ModelError> {
        if words.is_empty() {
            return Err(ModelError::EmptySentence);
        }
        Ok(Sentence { words })
    }

    pub fn words(&self) -> &[usize] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        false // constructor rejects empty word lists
    }
}

/// Pre-argmax scores, one per answer class.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVector {
    values: Vec<f64>,
}

impl LogitVector {
    pub fn new(values: Vec<f64>) -> Self {
        LogitVector { values }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// All trained parameters plus their dimension metadata.
///
/// `w_emb_a` and `w_emb_c` are separate address-side and context-side
/// embedding tables; with `shared_embeddings` set they hold identical
/// content and the on-disk format stores the table once.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub dims: Dimensions,
    pub shared_embeddings: bool,
    /// Address-side word embedding, `E x V`.
    pub w_emb_a: Matrix,
    /// Context-side word embedding, `E x V`.
    pub w_emb_c: Matrix,
    /// Question embedding, `E x V`.
    pub w_emb_q: Matrix,
    /// Controller weight, `E x E`.
    pub w_r: Matrix,
    /// Output weight, `I x E`.
    pub w_o: Matrix,
}

impl ModelWeights {
    /// All-zero weights of the given shape; useful as a trainer starting
    /// point and in tests.
    pub fn zeros(dims: Dimensions) -> Self {
        let (v, e, i) = (dims.vocab_size, dims.embed_dim, dims.output_dim);
        ModelWeights {
            dims,
            shared_embeddings: false,
            w_emb_a: Matrix::zeros(e, v),
            w_emb_c: Matrix::zeros(e, v),
            w_emb_q: Matrix::zeros(e, v),
            w_r: Matrix::zeros(e, e),
            w_o: Matrix::zeros(i, e),
        }
    }

    /// Checks shapes against `dims` and rejects NaN/Inf entries.
    pub fn validate(&self) -> Result<(), ModelError> {
        self.dims.validate()?;
        let (v, e, i) = (
            self.dims.vocab_size,
            self.dims.embed_dim,
            self.dims.output_dim,
        );
        let shapes = [
            ("w_emb_a", &self.w_emb_a, e, v),
            ("w_emb_c", &self.w_emb_c, e, v),
            ("w_emb_q", &self.w_emb_q, e, v),
            ("w_r", &self.w_r, e, e),
            ("w_o", &self.w_o, i, e),
        ];
        for (name, m, rows, cols) in shapes {
            if m.rows() != rows || m.cols() != cols {
                return Err(ModelError::ShapeMismatch(format!(
                    "{name} is {}x{}, expected {rows}x{cols}",
                    m.rows(),
                    m.cols()
                )));
            }
            if !m.is_finite() {
                return Err(ModelError::NonFinite(name.to_string()));
            }
        }
        if self.shared_embeddings && self.w_emb_a != self.w_emb_c {
            return Err(ModelError::ShapeMismatch(
                "shared_embeddings set but address and context tables differ".into(),
            ));
        }
        Ok(())
    }
}

/// Address memory and context memory, written append-only.
///
/// Rows at index `>= used_slots` stay all-zero; there is no eviction, a
/// write into a full memory is a hard error.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryState {
    m_a: Matrix,
    m_c: Matrix,
    used_slots: usize,
}

impl MemoryState {
    pub fn new(slots: usize, embed_dim: usize) -> Self {
        MemoryState {
            m_a: Matrix::zeros(slots, embed_dim),
            m_c: Matrix::zeros(slots, embed_dim),
            used_slots: 0,
        }
    }

    pub fn used_slots(&self) -> usize {
        self.used_slots
    }

    pub fn capacity(&self) -> usize {
        self.m_a.rows()
    }

    pub fn address_memory(&self) -> &Matrix {
        &self.m_a
    }

    pub fn context_memory(&self) -> &Matrix {
        &self.m_c
    }

    /// Appends one embedded row pair at the next free slot.
    pub fn write(&mut self, addr_row: &[f64], ctx_row: &[f64]) -> Result<(), ModelError> {
        if self.used_slots >= self.capacity() {
            return Err(ModelError::MemoryFull {
                capacity: self.capacity(),
            });
        }
        let e = self.m_a.cols();
        if addr_row.len() != e || ctx_row.len() != e {
            return Err(ModelError::ShapeMismatch(format!(
                "memory row width {e}, got {} and {}",
                addr_row.len(),
                ctx_row.len()
            )));
        }
        self.m_a.row_mut(self.used_slots).copy_from_slice(addr_row);
        self.m_c.row_mut(self.used_slots).copy_from_slice(ctx_row);
        self.used_slots += 1;
        Ok(())
    }

    /// Zeroes all slots. Idempotent.
    pub fn reset(&mut self) {
        self.m_a.as_mut_slice().fill(0.0);
        self.m_c.as_mut_slice().fill(0.0);
        self.used_slots = 0;
    }
}

/// Numerically stabilized softmax: shifts by the maximum before
/// exponentiation so large dot products cannot overflow.
pub(crate) fn stable_softmax(values: &[f64]) -> Vec<f64> {
    debug_assert!(!values.is_empty());
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Sums the embedding columns of every word occurrence in `s`.
///
/// This is the sparse form of the embedding product: `|s|` column reads and
/// zero multiplications, regardless of the vocabulary size.
pub fn embed_sentence(
    w: &Matrix,
    s: &Sentence,
    counters: &mut OpCounters,
) -> Result<Vec<f64>, ModelError> {
    let mut out = vec![0.0; w.rows()];
    for &idx in s.words() {
        if idx >= w.cols() {
            return Err(ModelError::WordIndexOutOfRange {
                index: idx,
                vocab_size: w.cols(),
            });
        }
        w.add_column_to(idx, &mut out);
        counters.weight_column_reads += 1;
    }
    Ok(out)
}

/// Embeds one sentence through the address and context tables in a single
/// pass over its words.
///
/// Each word costs one weight-column read: the write path fetches the
/// address and context columns of a word together, the way a single shared
/// embedding table would be read. Results are identical to two separate
/// [`embed_sentence`] calls.
pub fn embed_sentence_pair(
    w_a: &Matrix,
    w_c: &Matrix,
    s: &Sentence,
    counters: &mut OpCounters,
) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
    if w_a.cols() != w_c.cols() || w_a.rows() != w_c.rows() {
        return Err(ModelError::ShapeMismatch(format!(
            "embedding tables {}x{} vs {}x{}",
            w_a.rows(),
            w_a.cols(),
            w_c.rows(),
            w_c.cols()
        )));
    }
    let mut addr = vec![0.0; w_a.rows()];
    let mut ctx = vec![0.0; w_c.rows()];
    for &idx in s.words() {
        if idx >= w_a.cols() {
            return Err(ModelError::WordIndexOutOfRange {
                index: idx,
                vocab_size: w_a.cols(),
            });
        }
        w_a.add_column_to(idx, &mut addr);
        w_c.add_column_to(idx, &mut ctx);
        counters.weight_column_reads += 1;
    }
    Ok((addr, ctx))
}

/// Content-based addressing: softmax of dot products between the key and
/// each written address-memory row.
///
/// Counts `E` multiplications per slot for the dot products, then one
/// exponential and one division per slot for the softmax pass.
pub fn address(
    m_a: &Matrix,
    key: &[f64],
    used_slots: usize,
    counters: &mut OpCounters,
) -> Result<Vec<f64>, ModelError> {
    if used_slots == 0 {
        return Err(ModelError::EmptyMemory);
    }
    if used_slots > m_a.rows() {
        return Err(ModelError::ShapeMismatch(format!(
            "used_slots {used_slots} exceeds memory rows {}",
            m_a.rows()
        )));
    }
    if key.len() != m_a.cols() {
        return Err(ModelError::ShapeMismatch(format!(
            "key length {} vs memory width {}",
            key.len(),
            m_a.cols()
        )));
    }
    let mut dots = vec![0.0; used_slots];
    for i in 0..used_slots {
        let row = m_a.row(i);
        let mut acc = 0.0;
        for e in 0..key.len() {
            acc += row[e] * key[e];
        }
        counters.multiplications += key.len() as u64;
        dots[i] = acc;
    }
    counters.exp_evaluations += used_slots as u64;
    counters.divisions += used_slots as u64;
    Ok(stable_softmax(&dots))
}

/// Attention-weighted sum of the written context-memory rows.
pub fn read_vector(
    m_c: &Matrix,
    attention: &[f64],
    used_slots: usize,
    counters: &mut OpCounters,
) -> Result<Vec<f64>, ModelError> {
    if attention.len() != used_slots {
        return Err(ModelError::ShapeMismatch(format!(
            "attention length {} vs used_slots {used_slots}",
            attention.len()
        )));
    }
    if used_slots > m_c.rows() {
        return Err(ModelError::ShapeMismatch(format!(
            "used_slots {used_slots} exceeds memory rows {}",
            m_c.rows()
        )));
    }
    let e = m_c.cols();
    let mut out = vec![0.0; e];
    for (i, &a) in attention.iter().enumerate() {
        let row = m_c.row(i);
        for c in 0..e {
            out[c] += a * row[c];
        }
        counters.multiplications += e as u64;
    }
    Ok(out)
}

/// Input to [`read_key`]: the question on the first hop, the previous
/// controller output afterwards.
#[derive(Debug, Clone, Copy)]
pub enum ReadKeyInput<'a> {
    Question(&'a Sentence),
    Previous(&'a [f64]),
}

/// Selects the read key for hop `t`: the embedded question at `t = 1`, the
/// previous controller output unchanged at `t > 1`.
pub fn read_key(
    input: ReadKeyInput<'_>,
    t: usize,
    w_emb_q: &Matrix,
    counters: &mut OpCounters,
) -> Result<Vec<f64>, ModelError> {
    match (t, input) {
        (0, _) => Err(ModelError::ReadKeyContract {
            hop: 0,
            expected: "hop index >= 1",
        }),
        (1, ReadKeyInput::Question(q)) => embed_sentence(w_emb_q, q, counters),
        (1, ReadKeyInput::Previous(_)) => Err(ModelError::ReadKeyContract {
            hop: 1,
            expected: "a question",
        }),
        (_, ReadKeyInput::Previous(h)) => Ok(h.to_vec()),
        (t, ReadKeyInput::Question(_)) => Err(ModelError::ReadKeyContract {
            hop: t,
            expected: "the previous controller output",
        }),
    }
}

/// Controller update `h = r + W_r * k`.
pub fn controller_step(
    r: &[f64],
    k: &[f64],
    w_r: &Matrix,
    counters: &mut OpCounters,
) -> Result<Vec<f64>, ModelError> {
    if w_r.rows() != r.len() || w_r.cols() != k.len() {
        return Err(ModelError::ShapeMismatch(format!(
            "controller weight {}x{} vs r length {} and k length {}",
            w_r.rows(),
            w_r.cols(),
            r.len(),
            k.len()
        )));
    }
    let mut out = vec![0.0; r.len()];
    for row_idx in 0..w_r.rows() {
        let row = w_r.row(row_idx);
        let mut acc = 0.0;
        for c in 0..row.len() {
            acc += row[c] * k[c];
        }
        counters.multiplications += row.len() as u64;
        out[row_idx] = r[row_idx] + acc;
    }
    Ok(out)
}

/// Output logits `z_i = W_o[i] . h` for every class.
pub fn output_logits(
    h: &[f64],
    w_o: &Matrix,
    counters: &mut OpCounters,
) -> Result<LogitVector, ModelError> {
    if w_o.cols() != h.len() {
        return Err(ModelError::ShapeMismatch(format!(
            "output weight width {} vs h length {}",
            w_o.cols(),
            h.len()
        )));
    }
    let mut z = vec![0.0; w_o.rows()];
    for i in 0..w_o.rows() {
        let row = w_o.row(i);
        let mut acc = 0.0;
        for c in 0..row.len() {
            acc += row[c] * h[c];
        }
        counters.multiplications += row.len() as u64;
        z[i] = acc;
    }
    Ok(LogitVector::new(z))
}

/// Full scan argmax. Ties break to the smallest index; exactly `I - 1`
/// comparisons are counted.
pub fn exact_argmax(z: &LogitVector, counters: &mut OpCounters) -> Result<usize, ModelError> {
    let values = z.as_slice();
    if values.is_empty() {
        return Err(ModelError::ShapeMismatch("empty logit vector".into()));
    }
    let mut best = 0;
    for i in 1..values.len() {
        counters.logit_comparisons += 1;
        if values[i] > values[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Runs the complete forward pass up to the final controller output `h`.
///
/// Shared by the oracle, the calibration pipeline, and the sweep harness so
/// they all follow the identical floating-point path.
pub fn forward_hidden(
    model: &ModelWeights,
    story: &[Sentence],
    question: &Sentence,
    counters: &mut OpCounters,
) -> Result<Vec<f64>, ModelError> {
    let dims = &model.dims;
    if story.len() > dims.memory_slots {
        return Err(ModelError::StoryOverflow {
            len: story.len(),
            capacity: dims.memory_slots,
        });
    }
    let mut memory = MemoryState::new(dims.memory_slots, dims.embed_dim);
    for s in story {
        let addr = embed_sentence(&model.w_emb_a, s, counters)?;
        let ctx = embed_sentence(&model.w_emb_c, s, counters)?;
        memory.write(&addr, &ctx)?;
    }
    let used = memory.used_slots();
    let mut key = read_key(ReadKeyInput::Question(question), 1, &model.w_emb_q, counters)?;
    let mut hidden = Vec::new();
    for t in 1..=dims.hops {
        if t > 1 {
            key = read_key(ReadKeyInput::Previous(&hidden), t, &model.w_emb_q, counters)?;
        }
        let attention = address(memory.address_memory(), &key, used, counters)?;
        let r = read_vector(memory.context_memory(), &attention, used, counters)?;
        hidden = controller_step(&r, &key, &model.w_r, counters)?;
    }
    Ok(hidden)
}

/// Exact single-threaded inference: the correctness oracle for the engine.
pub fn oracle_infer(
    model: &ModelWeights,
    story: &[Sentence],
    question: &Sentence,
) -> Result<(usize, LogitVector), ModelError> {
    let mut scratch = OpCounters::new();
    oracle_infer_counted(model, story, question, &mut scratch)
}

/// [`oracle_infer`] with explicit instrumentation.
pub fn oracle_infer_counted(
    model: &ModelWeights,
    story: &[Sentence],
    question: &Sentence,
    counters: &mut OpCounters,
) -> Result<(usize, LogitVector), ModelError> {
    let hidden = forward_hidden(model, story, question, counters)?;
    let logits = output_logits(&hidden, &model.w_o, counters)?;
    let label = exact_argmax(&logits, counters)?;
    Ok((label, logits))
}
