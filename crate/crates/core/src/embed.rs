//! Token vocabulary and skip-gram embeddings over node-label sequences.
//!
//! Training is plain skip-gram with negative sampling: for every in-window
//! (center, context) pair the context vector is pushed toward the center's
//! input vector and a handful of sampled words are pushed away. Everything is
//! single-threaded and seeded, so identical inputs give bitwise-identical
//! tables.

use crate::binio;
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::io::{self, Read, Write};
use thiserror::Error;

/// Index 0 is reserved for out-of-vocabulary lookups.
pub const UNKNOWN_TOKEN: &str = "<unk>";

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("corpus has no tokens")]
    EmptyCorpus,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("embedding file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Bijection between tokens and dense indices; the unknown token sits at 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_index: HashMap<String, usize>,
    index_to_token: Vec<String>,
}

impl Vocabulary {
    /// Builds the vocabulary in first-occurrence order over the corpus.
    pub fn build(corpus: &[Vec<String>]) -> Result<Self, EmbedError> {
        if corpus.iter().all(|seq| seq.is_empty()) {
            return Err(EmbedError::EmptyCorpus);
        }
        let mut vocab = Vocabulary {
            token_to_index: HashMap::new(),
            index_to_token: vec![UNKNOWN_TOKEN.to_string()],
        };
        for sequence in corpus {
            for token in sequence {
                if !vocab.token_to_index.contains_key(token) {
                    let index = vocab.index_to_token.len();
                    vocab.token_to_index.insert(token.clone(), index);
                    vocab.index_to_token.push(token.clone());
                }
            }
        }
        Ok(vocab)
    }

    fn from_tokens(tokens: Vec<String>) -> Self {
        let token_to_index = tokens
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary {
            token_to_index,
            index_to_token: tokens,
        }
    }

    /// Total number of entries, including the unknown slot.
    pub fn len(&self) -> usize {
        self.index_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index_to_token.len() <= 1
    }

    /// Index of a token; unknown tokens map to 0.
    pub fn index_of(&self, token: &str) -> usize {
        self.token_to_index.get(token).copied().unwrap_or(0)
    }

    pub fn token_at(&self, index: usize) -> Option<&str> {
        self.index_to_token.get(index).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.index_to_token
    }
}

/// Skip-gram hyperparameters. Only the dimension is model-critical; the rest
/// follow common word2vec defaults.
#[derive(Debug, Clone)]
pub struct SkipgramConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub initial_lr: f64,
    pub min_lr: f64,
    pub seed: u64,
}

impl Default for SkipgramConfig {
    fn default() -> Self {
        SkipgramConfig {
            dim: 300,
            window: 5,
            negatives: 5,
            epochs: 5,
            initial_lr: 0.025,
            min_lr: 1e-4,
            seed: 0,
        }
    }
}

impl SkipgramConfig {
    fn validate(&self) -> Result<(), EmbedError> {
        if self.dim == 0 {
            return Err(EmbedError::Config("dim must be positive".into()));
        }
        if self.window == 0 {
            return Err(EmbedError::Config("window must be positive".into()));
        }
        Ok(())
    }
}

/// Vocabulary plus one dense vector per token, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    vocab: Vocabulary,
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingTable {
    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vector(&self, index: usize) -> &[f64] {
        &self.data[index * self.dim..(index + 1) * self.dim]
    }

    /// Embedding matrix for a label sequence: one row per label, unknown
    /// labels take row 0. The result does not require gradients (embeddings
    /// stay frozen during model training).
    pub fn lookup(&self, labels: &[String]) -> Tensor {
        let mut data = Vec::with_capacity(labels.len() * self.dim);
        for label in labels {
            data.extend_from_slice(self.vector(self.vocab.index_of(label)));
        }
        Tensor::new(vec![labels.len(), self.dim], data).expect("lookup shape is consistent")
    }

    pub fn cosine(&self, a: &str, b: &str) -> f64 {
        let va = self.vector(self.vocab.index_of(a));
        let vb = self.vector(self.vocab.index_of(b));
        let dot: f64 = va.iter().zip(vb).map(|(x, y)| x * y).sum();
        let na: f64 = va.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = vb.iter().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na * nb)
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Cumulative unigram^0.75 table over indices >= 1 for negative sampling.
fn sampling_table(counts: &[u64]) -> Vec<f64> {
    let mut cumulative = Vec::with_capacity(counts.len());
    let mut total = 0.0;
    for &count in counts {
        total += (count as f64).powf(0.75);
        cumulative.push(total);
    }
    cumulative
}

fn sample_negative(cumulative: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total = *cumulative.last().expect("non-empty table");
    let target = rng.gen_range(0.0..total);
    // First index whose cumulative weight exceeds the draw; +1 skips <unk>.
    cumulative.partition_point(|&c| c <= target).min(cumulative.len() - 1) + 1
}

/// Trains skip-gram embeddings over the corpus. Deterministic for a fixed
/// config (seed included).
pub fn train_skipgram(
    corpus: &[Vec<String>],
    vocab: &Vocabulary,
    config: &SkipgramConfig,
) -> Result<EmbeddingTable, EmbedError> {
    train_skipgram_with_history(corpus, vocab, config).map(|(table, _)| table)
}

/// As [`train_skipgram`], also returning the mean negative-sampling loss per
/// epoch, measured on the fly before each update.
pub fn train_skipgram_with_history(
    corpus: &[Vec<String>],
    vocab: &Vocabulary,
    config: &SkipgramConfig,
) -> Result<(EmbeddingTable, Vec<f64>), EmbedError> {
    config.validate()?;
    let dim = config.dim;
    let vocab_len = vocab.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // Input vectors: small uniform noise; row 0 (<unk>) stays zero. Output
    // vectors start at zero, as in word2vec.
    let mut input = vec![0.0; vocab_len * dim];
    for value in input.iter_mut().skip(dim) {
        *value = (rng.gen_range(0.0..1.0) - 0.5) / dim as f64;
    }
    let mut output = vec![0.0; vocab_len * dim];

    let sequences: Vec<Vec<usize>> = corpus
        .iter()
        .map(|seq| seq.iter().map(|t| vocab.index_of(t)).collect())
        .collect();
    let mut counts = vec![0u64; vocab_len.saturating_sub(1)];
    for seq in &sequences {
        for &idx in seq {
            if idx >= 1 {
                counts[idx - 1] += 1;
            }
        }
    }
    if counts.iter().all(|&c| c == 0) {
        return Err(EmbedError::EmptyCorpus);
    }
    let cumulative = sampling_table(&counts);

    let centers_per_epoch: usize = sequences.iter().map(Vec::len).sum();
    let total_centers = (centers_per_epoch * config.epochs.max(1)) as f64;
    let mut processed = 0usize;
    let mut grad_acc = vec![0.0; dim];
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for _epoch in 0..config.epochs {
        let mut loss_sum = 0.0;
        let mut loss_terms = 0usize;
        for seq in &sequences {
            for (t, &center) in seq.iter().enumerate() {
                let progress = processed as f64 / total_centers;
                let lr = (config.initial_lr * (1.0 - progress)).max(config.min_lr);
                processed += 1;
                let lo = t.saturating_sub(config.window);
                let hi = (t + config.window).min(seq.len() - 1);
                for context_pos in lo..=hi {
                    if context_pos == t {
                        continue;
                    }
                    let context = seq[context_pos];
                    let center_row = center * dim;
                    grad_acc.iter_mut().for_each(|g| *g = 0.0);
                    for k in 0..=config.negatives {
                        let (target, label) = if k == 0 {
                            (context, 1.0)
                        } else {
                            let mut negative = sample_negative(&cumulative, &mut rng);
                            let mut tries = 0;
                            while negative == context && tries < 8 {
                                negative = sample_negative(&cumulative, &mut rng);
                                tries += 1;
                            }
                            if negative == context {
                                continue;
                            }
                            (negative, 0.0)
                        };
                        let target_row = target * dim;
                        let dot: f64 = (0..dim)
                            .map(|d| input[center_row + d] * output[target_row + d])
                            .sum();
                        let predicted = sigmoid(dot);
                        let probability = if label == 1.0 {
                            predicted
                        } else {
                            1.0 - predicted
                        };
                        loss_sum -= probability.clamp(1e-12, 1.0).ln();
                        loss_terms += 1;
                        let gradient = (label - predicted) * lr;
                        for d in 0..dim {
                            grad_acc[d] += gradient * output[target_row + d];
                            output[target_row + d] += gradient * input[center_row + d];
                        }
                    }
                    for d in 0..dim {
                        input[center_row + d] += grad_acc[d];
                    }
                }
            }
        }
        epoch_losses.push(loss_sum / loss_terms.max(1) as f64);
    }

    Ok((
        EmbeddingTable {
            vocab: vocab.clone(),
            dim,
            data: input,
        },
        epoch_losses,
    ))
}

// ---------------------------------------------------------------------------
// Embedding file: magic, |V|, m, row-major f64 data, then the vocabulary as
// length-prefixed UTF-8 strings.
// ---------------------------------------------------------------------------

const EMBEDDING_MAGIC: &[u8; 8] = b"ACREMB01";
const MAX_VOCAB: u64 = 1 << 28;
const MAX_DIM: u64 = 1 << 20;

pub fn save_embeddings<W: Write>(w: &mut W, table: &EmbeddingTable) -> Result<(), EmbedError> {
    w.write_all(EMBEDDING_MAGIC)?;
    binio::write_u64(w, table.vocab.len() as u64)?;
    binio::write_u64(w, table.dim as u64)?;
    binio::write_f64_slice(w, &table.data)?;
    for token in table.vocab.tokens() {
        binio::write_string(w, token)?;
    }
    Ok(())
}

pub fn load_embeddings<R: Read>(r: &mut R) -> Result<EmbeddingTable, EmbedError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != EMBEDDING_MAGIC {
        return Err(EmbedError::Format("bad magic header".into()));
    }
    let vocab_len = binio::read_u64(r)?;
    let dim = binio::read_u64(r)?;
    if vocab_len == 0 || vocab_len > MAX_VOCAB {
        return Err(EmbedError::Format(format!("bad vocabulary size {vocab_len}")));
    }
    if dim == 0 || dim > MAX_DIM {
        return Err(EmbedError::Format(format!("bad dimension {dim}")));
    }
    let data = binio::read_f64_vec(r, (vocab_len * dim) as usize)?;
    if data.iter().any(|v| !v.is_finite()) {
        return Err(EmbedError::Format("non-finite embedding value".into()));
    }
    let mut tokens = Vec::with_capacity(vocab_len as usize);
    for _ in 0..vocab_len {
        tokens.push(binio::read_string(r)?);
    }
    Ok(EmbeddingTable {
        vocab: Vocabulary::from_tokens(tokens),
        dim: dim as usize,
        data,
    })
}
