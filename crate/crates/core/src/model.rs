//! The fragment encoder and pair classifier.
//!
//! A fragment's label sequence is embedded, run through a bidirectional GRU,
//! propagated over the relation graph by a stack of GCN layers
//! (`LeakyReLU(L h W + b)`), and pooled with retrieval-based attention: each
//! node's score is the dot product of its contextual state with the summed
//! graph states. The pair prediction applies a linear classifier to the
//! difference of the two fragment representations (or their concatenation for
//! the concat-compare variant) followed by a softmax.

use crate::config::{ModelConfig, Variant};
use crate::embed::EmbeddingTable;
use crate::graph::FragmentGraph;
use crate::tensor::{Tensor, TensorError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::rc::Rc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("fragment has no nodes to encode")]
    EmptyFragment,
    #[error("config expects {expected} GCN layers, parameters hold {got}")]
    LayerMismatch { expected: usize, got: usize },
    #[error("embedding table dim {table} does not match config embedding_dim {config}")]
    EmbeddingDimMismatch { table: usize, config: usize },
    #[error("checkpoint is missing tensor {0:?}")]
    MissingTensor(String),
    #[error("checkpoint tensor {name:?} has shape {got:?}, expected {expected:?}")]
    ShapeMismatch {
        name: String,
        got: Vec<usize>,
        expected: Vec<usize>,
    },
}

type Result<T> = std::result::Result<T, ModelError>;

/// One GRU gate: input projection, hidden projection and bias.
#[derive(Debug, Clone)]
pub struct GruGate {
    pub input: Tensor,  // m x h
    pub hidden: Tensor, // h x h
    pub bias: Tensor,   // h
}

/// The three gates of one GRU direction.
#[derive(Debug, Clone)]
pub struct GruDirection {
    pub update: GruGate,
    pub reset: GruGate,
    pub candidate: GruGate,
}

#[derive(Debug, Clone)]
pub struct GcnLayer {
    pub weight: Tensor, // 2h x 2h
    pub bias: Tensor,   // 2h
}

/// All trainable parameters.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub forward: GruDirection,
    pub backward: GruDirection,
    pub gcn: Vec<GcnLayer>,
    pub classifier_weight: Tensor, // 2 x 2h, or 2 x 4h for concat-compare
    pub classifier_bias: Tensor,   // 2
}

fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.gen_range(-bound..bound))
        .collect();
    Tensor::new(vec![rows, cols], data)
        .expect("matrix shape is consistent")
        .with_grad()
}

// Biases start as near-zero uniform noise; matrices get Glorot-style bounds.
fn uniform_bias(rng: &mut ChaCha8Rng, len: usize) -> Tensor {
    let bound = 0.01;
    let data = (0..len).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::new(vec![len], data)
        .expect("bias shape is consistent")
        .with_grad()
}

fn init_gate(rng: &mut ChaCha8Rng, m: usize, h: usize) -> GruGate {
    GruGate {
        input: uniform_matrix(rng, m, h),
        hidden: uniform_matrix(rng, h, h),
        bias: uniform_bias(rng, h),
    }
}

fn init_direction(rng: &mut ChaCha8Rng, m: usize, h: usize) -> GruDirection {
    GruDirection {
        update: init_gate(rng, m, h),
        reset: init_gate(rng, m, h),
        candidate: init_gate(rng, m, h),
    }
}

impl ModelParams {
    /// Fresh parameters drawn from a uniform distribution, seeded.
    pub fn init(config: &ModelConfig, seed: u64) -> ModelParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = config.embedding_dim;
        let h = config.hidden;
        let width = 2 * h;
        let forward = init_direction(&mut rng, m, h);
        let backward = init_direction(&mut rng, m, h);
        let gcn = (0..config.gcn_layers)
            .map(|_| GcnLayer {
                weight: uniform_matrix(&mut rng, width, width),
                bias: uniform_bias(&mut rng, width),
            })
            .collect();
        let cmp_width = match config.variant {
            Variant::ConcatCompare => 2 * width,
            _ => width,
        };
        ModelParams {
            forward,
            backward,
            gcn,
            classifier_weight: uniform_matrix(&mut rng, 2, cmp_width),
            classifier_bias: uniform_bias(&mut rng, 2),
        }
    }

    /// Named view of every parameter, in a fixed order.
    pub fn named(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (dir_name, dir) in [("forward", &self.forward), ("backward", &self.backward)] {
            for (gate_name, gate) in [
                ("update", &dir.update),
                ("reset", &dir.reset),
                ("candidate", &dir.candidate),
            ] {
                out.push((format!("gru.{dir_name}.{gate_name}.input"), gate.input.clone()));
                out.push((format!("gru.{dir_name}.{gate_name}.hidden"), gate.hidden.clone()));
                out.push((format!("gru.{dir_name}.{gate_name}.bias"), gate.bias.clone()));
            }
        }
        for (i, layer) in self.gcn.iter().enumerate() {
            out.push((format!("gcn.{i}.weight"), layer.weight.clone()));
            out.push((format!("gcn.{i}.bias"), layer.bias.clone()));
        }
        out.push(("classifier.weight".into(), self.classifier_weight.clone()));
        out.push(("classifier.bias".into(), self.classifier_bias.clone()));
        out
    }

    /// Parameters the given variant actually trains. The no-GCN variant
    /// leaves the GCN stack untouched.
    pub fn trainable(&self, variant: Variant) -> Vec<Tensor> {
        self.named()
            .into_iter()
            .filter(|(name, _)| variant != Variant::NoGcn || !name.starts_with("gcn."))
            .map(|(_, tensor)| tensor)
            .collect()
    }

    /// Weight matrices entering the L2 penalty (biases excluded).
    pub fn penalized_weights(&self, variant: Variant) -> Vec<Tensor> {
        self.named()
            .into_iter()
            .filter(|(name, _)| !name.ends_with(".bias") && name != "classifier.bias")
            .filter(|(name, _)| variant != Variant::NoGcn || !name.starts_with("gcn."))
            .map(|(_, tensor)| tensor)
            .collect()
    }

    /// Rebuilds parameters from checkpoint entries, validating shapes against
    /// the configuration.
    pub fn from_named(
        entries: Vec<(String, Tensor)>,
        config: &ModelConfig,
    ) -> Result<ModelParams> {
        let template = ModelParams::init(config, 0);
        let expected = template.named();
        let mut map: std::collections::HashMap<String, Tensor> = entries.into_iter().collect();
        let mut take = |name: &str, shape: Vec<usize>| -> Result<Tensor> {
            let tensor = map
                .remove(name)
                .ok_or_else(|| ModelError::MissingTensor(name.to_string()))?;
            if tensor.shape() != shape {
                return Err(ModelError::ShapeMismatch {
                    name: name.to_string(),
                    got: tensor.shape(),
                    expected: shape,
                });
            }
            Ok(tensor.with_grad())
        };
        let mut tensors = Vec::with_capacity(expected.len());
        for (name, tensor) in &expected {
            tensors.push(take(name, tensor.shape())?);
        }
        let mut iter = tensors.into_iter();
        let mut gate = || GruGate {
            input: iter.next().unwrap(),
            hidden: iter.next().unwrap(),
            bias: iter.next().unwrap(),
        };
        let forward = GruDirection {
            update: gate(),
            reset: gate(),
            candidate: gate(),
        };
        let backward = GruDirection {
            update: gate(),
            reset: gate(),
            candidate: gate(),
        };
        let gcn = (0..config.gcn_layers)
            .map(|_| GcnLayer {
                weight: iter.next().unwrap(),
                bias: iter.next().unwrap(),
            })
            .collect();
        Ok(ModelParams {
            forward,
            backward,
            gcn,
            classifier_weight: iter.next().unwrap(),
            classifier_bias: iter.next().unwrap(),
        })
    }
}

const META_TENSOR: &str = "meta.config";

/// Writes parameters plus a small metadata tensor capturing the architecture
/// (dims, layer count, variant, slope, lambda) so a checkpoint is
/// self-describing.
pub fn save_model<W: std::io::Write>(
    writer: &mut W,
    params: &ModelParams,
    config: &ModelConfig,
) -> Result<()> {
    let meta = Tensor::new(
        vec![6],
        vec![
            config.embedding_dim as f64,
            config.hidden as f64,
            config.gcn_layers as f64,
            match config.variant {
                Variant::Full => 0.0,
                Variant::NoGcn => 1.0,
                Variant::ConcatCompare => 2.0,
            },
            config.leaky_slope,
            config.lambda,
        ],
    )?;
    let mut entries = vec![(META_TENSOR.to_string(), meta)];
    entries.extend(params.named());
    crate::tensor::save_checkpoint(writer, &entries)?;
    Ok(())
}

/// Reads a checkpoint written by [`save_model`], rebuilding the architecture
/// from the embedded metadata. Class weighting and the learning rate are not
/// part of a checkpoint; the returned config carries their defaults.
pub fn load_model<R: std::io::Read>(reader: &mut R) -> Result<(ModelParams, ModelConfig)> {
    let mut entries = crate::tensor::load_checkpoint(reader)?;
    let meta_pos = entries
        .iter()
        .position(|(name, _)| name == META_TENSOR)
        .ok_or_else(|| ModelError::MissingTensor(META_TENSOR.to_string()))?;
    let (_, meta) = entries.remove(meta_pos);
    if meta.shape() != [6] {
        return Err(ModelError::ShapeMismatch {
            name: META_TENSOR.to_string(),
            got: meta.shape(),
            expected: vec![6],
        });
    }
    let values = meta.value();
    let variant = match values[3] as i64 {
        0 => Variant::Full,
        1 => Variant::NoGcn,
        2 => Variant::ConcatCompare,
        other => {
            return Err(ModelError::MissingTensor(format!(
                "unknown variant code {other} in {META_TENSOR}"
            )))
        }
    };
    let config = ModelConfig {
        embedding_dim: values[0] as usize,
        hidden: values[1] as usize,
        gcn_layers: values[2] as usize,
        variant,
        leaky_slope: values[4],
        lambda: values[5],
        ..ModelConfig::default()
    };
    let params = ModelParams::from_named(entries, &config)?;
    Ok((params, config))
}

fn gru_step(
    gates: &GruDirection,
    x_t: &Tensor,
    h_prev: &Tensor,
    ones: &Tensor,
) -> Result<Tensor> {
    let update = x_t
        .vecmat(&gates.update.input)?
        .add(&h_prev.vecmat(&gates.update.hidden)?)?
        .add(&gates.update.bias)?
        .sigmoid()?;
    let reset = x_t
        .vecmat(&gates.reset.input)?
        .add(&h_prev.vecmat(&gates.reset.hidden)?)?
        .add(&gates.reset.bias)?
        .sigmoid()?;
    let candidate = x_t
        .vecmat(&gates.candidate.input)?
        .add(&reset.mul(&h_prev.vecmat(&gates.candidate.hidden)?)?)?
        .add(&gates.candidate.bias)?
        .tanh()?;
    // h = (1 - z) * candidate + z * h_prev
    let keep = ones.sub(&update)?;
    Ok(keep.mul(&candidate)?.add(&update.mul(h_prev)?)?)
}

fn gru_direction(
    gates: &GruDirection,
    x: &Tensor,
    order: impl Iterator<Item = usize>,
    n: usize,
    h: usize,
) -> Result<Vec<Tensor>> {
    let ones = Tensor::new(vec![h], vec![1.0; h]).expect("ones");
    let mut states: Vec<Option<Tensor>> = vec![None; n];
    let mut hidden = Tensor::zeros(vec![h]);
    for t in order {
        hidden = gru_step(gates, &x.row(t)?, &hidden, &ones)?;
        states[t] = Some(hidden.clone());
    }
    Ok(states.into_iter().map(|s| s.expect("all steps visited")).collect())
}

/// Bidirectional GRU over the embedded sequence: row `t` of the result is the
/// forward state at `t` (left-to-right from zero) concatenated with the
/// backward state at `t` (right-to-left from zero).
pub fn bigru_forward(x: &Tensor, params: &ModelParams, config: &ModelConfig) -> Result<Tensor> {
    let shape = x.shape();
    let n = shape[0];
    if n == 0 {
        return Err(ModelError::EmptyFragment);
    }
    let h = config.hidden;
    let fwd = gru_direction(&params.forward, x, 0..n, n, h)?;
    let bwd = gru_direction(&params.backward, x, (0..n).rev(), n, h)?;
    let rows: Vec<Tensor> = fwd
        .iter()
        .zip(&bwd)
        .map(|(f, b)| f.concat(b))
        .collect::<std::result::Result<_, _>>()?;
    Ok(Tensor::stack_rows(&rows)?)
}

fn sparse_rows(graph: &FragmentGraph) -> Rc<Vec<(Vec<usize>, f64)>> {
    Rc::new(
        graph
            .propagation_rows()
            .iter()
            .map(|row| (row.cols.clone(), row.weight))
            .collect(),
    )
}

/// Applies `layers` GCN layers: `h_l = LeakyReLU(L h_{l-1} W_l + b_l)`.
/// Zero layers return the input unchanged.
pub fn gcn_forward(
    hidden: &Tensor,
    rows: Rc<Vec<(Vec<usize>, f64)>>,
    params: &ModelParams,
    config: &ModelConfig,
) -> Result<Tensor> {
    if params.gcn.len() != config.gcn_layers {
        return Err(ModelError::LayerMismatch {
            expected: config.gcn_layers,
            got: params.gcn.len(),
        });
    }
    let mut state = hidden.clone();
    for layer in &params.gcn {
        state = state
            .propagate(Rc::clone(&rows))?
            .matmul(&layer.weight)?
            .add(&layer.bias)?
            .leaky_relu(config.leaky_slope)?;
    }
    Ok(state)
}

/// Attention scores: softmax over `score_t = h_t . sum_i g_i`, where `h` are
/// the contextual states and `g` the graph states.
pub fn attention_weights(contextual: &Tensor, graph_states: &Tensor) -> Result<Tensor> {
    if contextual.shape() != graph_states.shape() {
        return Err(ModelError::Tensor(TensorError::ShapeMismatch {
            op: "attention",
            lhs: contextual.shape(),
            rhs: graph_states.shape(),
        }));
    }
    if contextual.shape()[0] == 0 {
        return Err(ModelError::EmptyFragment);
    }
    let summed = graph_states.sum_rows()?;
    Ok(contextual.matvec(&summed)?.softmax()?)
}

/// Pools the contextual states with the attention weights into one fragment
/// representation.
pub fn attention_pool(contextual: &Tensor, graph_states: &Tensor) -> Result<Tensor> {
    let weights = attention_weights(contextual, graph_states)?;
    Ok(weights.vecmat(contextual)?)
}

/// Encodes one fragment into its representation vector.
pub fn encode(
    graph: &FragmentGraph,
    table: &EmbeddingTable,
    params: &ModelParams,
    config: &ModelConfig,
) -> Result<Tensor> {
    if graph.is_empty() {
        return Err(ModelError::EmptyFragment);
    }
    if table.dim() != config.embedding_dim {
        return Err(ModelError::EmbeddingDimMismatch {
            table: table.dim(),
            config: config.embedding_dim,
        });
    }
    let x = table.lookup(graph.labels());
    let contextual = bigru_forward(&x, params, config)?;
    match config.variant {
        Variant::NoGcn => attention_pool(&contextual, &contextual),
        Variant::Full | Variant::ConcatCompare => {
            let graph_states = gcn_forward(&contextual, sparse_rows(graph), params, config)?;
            attention_pool(&contextual, &graph_states)
        }
    }
}

/// Classifier logits before the bias: `W (r_o - r_r)` for the subtraction
/// variants, `W [r_o ; r_r]` for concat-compare.
pub fn pre_bias_logits(
    original: &Tensor,
    revised: &Tensor,
    params: &ModelParams,
    config: &ModelConfig,
) -> Result<Tensor> {
    let comparison = match config.variant {
        Variant::ConcatCompare => original.concat(revised)?,
        _ => original.sub(revised)?,
    };
    Ok(params.classifier_weight.matvec(&comparison)?)
}

/// Probability pair `(reject, accept)` for a pair of fragment
/// representations.
pub fn predict_pair(
    original: &Tensor,
    revised: &Tensor,
    params: &ModelParams,
    config: &ModelConfig,
) -> Result<Tensor> {
    let logits = pre_bias_logits(original, revised, params, config)?
        .add(&params.classifier_bias)?;
    Ok(logits.softmax()?)
}

/// Per-sample weighted cross entropy: `-(w_reject * y * ln p + w_accept *
/// (1 - y) * ln (1 - p))` with `p` the accept probability clamped away from
/// 0 and 1.
pub fn sample_loss(
    probabilities: &Tensor,
    label: u8,
    weight_reject: f64,
    weight_accept: f64,
) -> Result<Tensor> {
    let p_accept = probabilities.element(1)?.clamp(1e-12, 1.0 - 1e-12)?;
    let loss = if label == 1 {
        p_accept.ln()?.scale(-weight_reject)?
    } else {
        Tensor::scalar(1.0)
            .sub(&p_accept)?
            .ln()?
            .scale(-weight_accept)?
    };
    Ok(loss)
}

/// `lambda * sum of squared weight entries` over the variant's weight
/// matrices; biases are excluded.
pub fn l2_penalty(params: &ModelParams, lambda: f64, variant: Variant) -> Result<Tensor> {
    let mut total = Tensor::scalar(0.0);
    for weight in params.penalized_weights(variant) {
        total = total.add(&weight.l2_norm_squared()?)?;
    }
    Ok(total.scale(lambda)?)
}
