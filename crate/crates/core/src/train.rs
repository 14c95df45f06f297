//! Training loop, evaluation pass and the repeated-experiment driver.
//!
//! Training is per-sample: each pair is encoded and backpropagated on its
//! own, gradients accumulate across the mini-batch, the L2 penalty is added
//! once per batch, and one Adam step closes the batch. Everything is seeded
//! and single-threaded, so a (config, data, seed) triple fully determines the
//! outcome.

use crate::config::{ClassWeight, ModelConfig};
use crate::data::{class_weights, stratified_split_pairs, DataError, PreparedPair};
use crate::embed::EmbeddingTable;
use crate::metrics::{accuracy, auc, f1, mcc, ConfusionCounts, MetricsError};
use crate::model::{
    encode, l2_penalty, predict_pair, sample_loss, ModelError, ModelParams,
};
use crate::tensor::{adam_step, AdamState, TensorError};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyTrainSet,
    #[error("evaluation set is empty")]
    EmptyEvalSet,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: 10,
            batch_size: 128,
            seed: 0,
        }
    }
}

/// One evaluation snapshot. AUC is absent when the evaluated set held a
/// single class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub accuracy: f64,
    pub f1: f64,
    pub auc: Option<f64>,
    pub mcc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub metrics: MetricsRow,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepetitionRow {
    pub repetition: usize,
    pub seed: u64,
    pub metrics: MetricsRow,
}

/// Resolves the configured class weighting against the training labels.
pub fn resolve_class_weights(
    config: &ModelConfig,
    train_pairs: &[PreparedPair],
) -> Result<(f64, f64), TrainError> {
    match config.class_weight {
        ClassWeight::Fixed(reject, accept) => Ok((reject, accept)),
        ClassWeight::Balanced => {
            let labels: Vec<u8> = train_pairs.iter().map(|p| p.label).collect();
            Ok(class_weights(&labels)?)
        }
    }
}

/// Forward pass over every pair: confusion counts from the argmax prediction
/// plus the accept-probability score per pair.
pub fn evaluate(
    params: &ModelParams,
    config: &ModelConfig,
    table: &EmbeddingTable,
    pairs: &[PreparedPair],
) -> Result<(ConfusionCounts, Vec<(f64, u8)>), TrainError> {
    let mut counts = ConfusionCounts::default();
    let mut scores = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let original = encode(&pair.original, table, params, config)?;
        let revised = encode(&pair.revised, table, params, config)?;
        let probabilities = predict_pair(&original, &revised, params, config)?;
        let values = probabilities.value();
        let accept_probability = values[1];
        let predicted = u8::from(accept_probability > values[0]);
        counts.record(predicted, pair.label);
        scores.push((accept_probability, pair.label));
    }
    Ok((counts, scores))
}

/// Collapses an evaluation into the four reported metrics.
pub fn metrics_row(
    counts: &ConfusionCounts,
    scores: &[(f64, u8)],
) -> Result<MetricsRow, TrainError> {
    Ok(MetricsRow {
        accuracy: accuracy(counts)?,
        f1: f1(counts),
        auc: match auc(scores) {
            Ok(value) => Some(value),
            Err(MetricsError::SingleClass) => None,
            Err(other) => return Err(other.into()),
        },
        mcc: mcc(counts),
    })
}

/// Trains a fresh model. Per-epoch history rows carry the mean per-sample
/// training loss (batch L2 penalties amortized in) and metrics on the
/// evaluation set (the training set when no evaluation pairs are given).
pub fn train(
    config: &ModelConfig,
    table: &EmbeddingTable,
    train_pairs: &[PreparedPair],
    eval_pairs: &[PreparedPair],
    options: &TrainOptions,
) -> Result<(ModelParams, Vec<EpochStats>), TrainError> {
    if train_pairs.is_empty() {
        return Err(TrainError::EmptyTrainSet);
    }
    let (weight_reject, weight_accept) = resolve_class_weights(config, train_pairs)?;
    let params = ModelParams::init(config, options.seed);
    let trainable = params.trainable(config.variant);
    let mut optimizer = AdamState::new(config.learning_rate, &trainable);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(options.seed.wrapping_add(0x9e3779b97f4a7c15));
    let measured = if eval_pairs.is_empty() { train_pairs } else { eval_pairs };

    let mut history = Vec::with_capacity(options.epochs);
    let mut order: Vec<usize> = (0..train_pairs.len()).collect();
    for epoch in 1..=options.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(options.batch_size.max(1)) {
            for &index in batch {
                let pair = &train_pairs[index];
                let original = encode(&pair.original, table, &params, config)?;
                let revised = encode(&pair.revised, table, &params, config)?;
                let probabilities = predict_pair(&original, &revised, &params, config)?;
                let loss =
                    sample_loss(&probabilities, pair.label, weight_reject, weight_accept)?;
                loss.backward()?;
                epoch_loss += loss.item();
            }
            let penalty = l2_penalty(&params, config.lambda, config.variant)?;
            penalty.backward()?;
            epoch_loss += penalty.item();
            adam_step(&trainable, &mut optimizer)?;
        }
        let (counts, scores) = evaluate(&params, config, table, measured)?;
        history.push(EpochStats {
            epoch,
            loss: epoch_loss / train_pairs.len() as f64,
            metrics: metrics_row(&counts, &scores)?,
        });
    }
    Ok((params, history))
}

/// One repetition: split with the given seed, train, evaluate on the held
/// out side.
pub fn run_single_repetition(
    config: &ModelConfig,
    table: &EmbeddingTable,
    pairs: &[PreparedPair],
    repetition: usize,
    seed: u64,
    train_fraction: f64,
    options: &TrainOptions,
) -> Result<RepetitionRow, TrainError> {
    let (train_pairs, test_pairs) =
        stratified_split_pairs(pairs.to_vec(), train_fraction, seed)?;
    let rep_options = TrainOptions { seed, ..*options };
    let (params, _) = train(config, table, &train_pairs, &test_pairs, &rep_options)?;
    let (counts, scores) = evaluate(&params, config, table, &test_pairs)?;
    Ok(RepetitionRow {
        repetition,
        seed,
        metrics: metrics_row(&counts, &scores)?,
    })
}

/// Repeats split/init/train/evaluate `repetitions` times; repetition `k` uses
/// seed `base_seed + k` for the split, the initialization and the shuffling.
pub fn run_repetitions(
    config: &ModelConfig,
    table: &EmbeddingTable,
    pairs: &[PreparedPair],
    repetitions: usize,
    base_seed: u64,
    train_fraction: f64,
    options: &TrainOptions,
) -> Result<Vec<RepetitionRow>, TrainError> {
    (0..repetitions)
        .map(|repetition| {
            let seed = base_seed.wrapping_add(repetition as u64);
            run_single_repetition(config, table, pairs, repetition, seed, train_fraction, options)
        })
        .collect()
}

fn format_opt(value: Option<f64>) -> String {
    value.map(|v| format!("{v:.6}")).unwrap_or_default()
}

/// CSV with columns epoch, loss, accuracy, f1, auc, mcc.
pub fn history_csv(history: &[EpochStats]) -> String {
    let mut out = String::from("epoch,loss,accuracy,f1,auc,mcc\n");
    for row in history {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{},{:.6}\n",
            row.epoch,
            row.loss,
            row.metrics.accuracy,
            row.metrics.f1,
            format_opt(row.metrics.auc),
            row.metrics.mcc,
        ));
    }
    out
}

/// CSV with one row per repetition plus a trailing mean row.
pub fn repetitions_csv(rows: &[RepetitionRow]) -> String {
    let mut out = String::from("repetition,seed,accuracy,f1,auc,mcc\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{},{:.6}\n",
            row.repetition,
            row.seed,
            row.metrics.accuracy,
            row.metrics.f1,
            format_opt(row.metrics.auc),
            row.metrics.mcc,
        ));
    }
    if !rows.is_empty() {
        let n = rows.len() as f64;
        let mean = |f: fn(&MetricsRow) -> f64| rows.iter().map(|r| f(&r.metrics)).sum::<f64>() / n;
        let auc_values: Vec<f64> = rows.iter().filter_map(|r| r.metrics.auc).collect();
        let auc_mean = if auc_values.is_empty() {
            String::new()
        } else {
            format!(
                "{:.6}",
                auc_values.iter().sum::<f64>() / auc_values.len() as f64
            )
        };
        out.push_str(&format!(
            "mean,,{:.6},{:.6},{},{:.6}\n",
            mean(|m| m.accuracy),
            mean(|m| m.f1),
            auc_mean,
            mean(|m| m.mcc),
        ));
    }
    out
}

/// Parses a repetitions CSV back into metric samples keyed by column.
pub fn parse_repetitions_csv(text: &str) -> Result<Vec<RepetitionRow>, DataError> {
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 || line.trim().is_empty() || line.starts_with("mean,") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let bad = |message: &str| DataError::Line {
            line: idx + 1,
            message: message.to_string(),
        };
        if fields.len() != 6 {
            return Err(bad("expected 6 columns"));
        }
        let parse_f = |s: &str, what: &str| -> Result<f64, DataError> {
            s.parse::<f64>().map_err(|_| bad(&format!("bad {what}")))
        };
        rows.push(RepetitionRow {
            repetition: fields[0].parse().map_err(|_| bad("bad repetition"))?,
            seed: fields[1].parse().map_err(|_| bad("bad seed"))?,
            metrics: MetricsRow {
                accuracy: parse_f(fields[2], "accuracy")?,
                f1: parse_f(fields[3], "f1")?,
                auc: if fields[4].is_empty() {
                    None
                } else {
                    Some(parse_f(fields[4], "auc")?)
                },
                mcc: parse_f(fields[5], "mcc")?,
            },
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Variant;
    use crate::data::prepare_record;
    use crate::embed::{train_skipgram, SkipgramConfig, Vocabulary};
    use crate::simplify::KeepRule;
    use crate::synthetic::generate_records;

    fn tiny_setup(pairs_count: usize) -> (ModelConfig, EmbeddingTable, Vec<PreparedPair>) {
        let records = generate_records(pairs_count, 77);
        let rule = KeepRule::default();
        let pairs: Vec<PreparedPair> = records
            .iter()
            .map(|r| prepare_record(r, Some(&rule)).unwrap())
            .collect();
        let corpus: Vec<Vec<String>> = pairs
            .iter()
            .flat_map(|p| {
                [
                    p.original.labels().to_vec(),
                    p.revised.labels().to_vec(),
                ]
            })
            .collect();
        let vocab = Vocabulary::build(&corpus).unwrap();
        let table = train_skipgram(
            &corpus,
            &vocab,
            &SkipgramConfig {
                dim: 8,
                epochs: 2,
                seed: 1,
                ..Default::default()
            },
        )
        .unwrap();
        let config = ModelConfig {
            embedding_dim: 8,
            hidden: 8,
            gcn_layers: 3,
            ..ModelConfig::default()
        };
        (config, table, pairs)
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let (config, table, pairs) = tiny_setup(8);
        let options = TrainOptions {
            epochs: 0,
            seed: 5,
            ..Default::default()
        };
        let (params, history) = train(&config, &table, &pairs, &[], &options).unwrap();
        assert!(history.is_empty());
        let fresh = ModelParams::init(&config, 5);
        for ((_, a), (_, b)) in params.named().iter().zip(fresh.named()) {
            assert_eq!(a.value(), b.value());
        }
    }

    #[test]
    fn same_seed_gives_identical_history() {
        let (config, table, pairs) = tiny_setup(8);
        let options = TrainOptions {
            epochs: 2,
            batch_size: 4,
            seed: 9,
        };
        let (_, history_a) = train(&config, &table, &pairs, &[], &options).unwrap();
        let (_, history_b) = train(&config, &table, &pairs, &[], &options).unwrap();
        assert_eq!(history_a, history_b);
    }

    #[test]
    fn empty_train_set_is_an_error() {
        let (config, table, _) = tiny_setup(4);
        assert!(matches!(
            train(&config, &table, &[], &[], &TrainOptions::default()).unwrap_err(),
            TrainError::EmptyTrainSet
        ));
    }

    #[test]
    fn empty_pair_list_evaluates_to_zero_counts() {
        let (config, table, _) = tiny_setup(4);
        let params = ModelParams::init(&config, 3);
        let (counts, scores) = evaluate(&params, &config, &table, &[]).unwrap();
        assert_eq!(counts.total(), 0);
        assert!(scores.is_empty());
    }

    #[test]
    fn zero_classifier_weights_predict_constantly() {
        let (config, table, pairs) = tiny_setup(6);
        let params = ModelParams::init(&config, 4);
        params
            .classifier_weight
            .set_data(&vec![0.0; params.classifier_weight.len()]);
        params.classifier_bias.set_data(&[0.3, -0.2]);
        let (counts, scores) = evaluate(&params, &config, &table, &pairs).unwrap();
        // Logits equal the bias for every pair, so every prediction is 0.
        assert_eq!(counts.true_positive, 0);
        assert_eq!(counts.false_positive, 0);
        let first = scores[0].0;
        assert!(scores.iter().all(|(s, _)| (*s - first).abs() < 1e-15));
    }

    #[test]
    fn epoch_loss_matches_a_manual_replay() {
        let (config, table, pairs) = tiny_setup(4);
        let options = TrainOptions {
            epochs: 1,
            batch_size: 2,
            seed: 21,
        };
        let (_, history) = train(&config, &table, &pairs, &[], &options).unwrap();

        // Replay the same schedule by hand.
        let (w_reject, w_accept) = resolve_class_weights(&config, &pairs).unwrap();
        let params = ModelParams::init(&config, options.seed);
        let trainable = params.trainable(config.variant);
        let mut optimizer = AdamState::new(config.learning_rate, &trainable);
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed.wrapping_add(0x9e3779b97f4a7c15));
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(2) {
            for &index in batch {
                let pair = &pairs[index];
                let original = encode(&pair.original, &table, &params, &config).unwrap();
                let revised = encode(&pair.revised, &table, &params, &config).unwrap();
                let probabilities =
                    predict_pair(&original, &revised, &params, &config).unwrap();
                let loss = sample_loss(&probabilities, pair.label, w_reject, w_accept).unwrap();
                loss.backward().unwrap();
                total += loss.item();
            }
            let penalty = l2_penalty(&params, config.lambda, config.variant).unwrap();
            penalty.backward().unwrap();
            total += penalty.item();
            adam_step(&trainable, &mut optimizer).unwrap();
        }
        let expected = total / pairs.len() as f64;
        assert!((history[0].loss - expected).abs() < 1e-9);
    }

    #[test]
    fn nogcn_variant_trains_without_touching_gcn_parameters() {
        let (mut config, table, pairs) = tiny_setup(6);
        config.variant = Variant::NoGcn;
        let options = TrainOptions {
            epochs: 1,
            batch_size: 3,
            seed: 13,
        };
        let (params, _) = train(&config, &table, &pairs, &[], &options).unwrap();
        let fresh = ModelParams::init(&config, 13);
        for (layer, fresh_layer) in params.gcn.iter().zip(&fresh.gcn) {
            assert_eq!(layer.weight.value(), fresh_layer.weight.value());
            assert_eq!(layer.bias.value(), fresh_layer.bias.value());
        }
        // Classifier did move.
        assert_ne!(
            params.classifier_weight.value(),
            fresh.classifier_weight.value()
        );
    }

    #[test]
    fn repetitions_are_deterministic_and_seeded() {
        let (config, table, pairs) = tiny_setup(12);
        let options = TrainOptions {
            epochs: 1,
            batch_size: 4,
            seed: 0,
        };
        let rows_a =
            run_repetitions(&config, &table, &pairs, 2, 100, 0.75, &options).unwrap();
        let rows_b =
            run_repetitions(&config, &table, &pairs, 2, 100, 0.75, &options).unwrap();
        assert_eq!(rows_a, rows_b);
        assert_eq!(rows_a.len(), 2);
        assert_eq!(rows_a[0].seed, 100);
        assert_eq!(rows_a[1].seed, 101);
        assert_eq!(repetitions_csv(&rows_a), repetitions_csv(&rows_b));
    }

    #[test]
    fn history_csv_layout() {
        let history = vec![EpochStats {
            epoch: 1,
            loss: 0.5,
            metrics: MetricsRow {
                accuracy: 0.75,
                f1: 0.8,
                auc: Some(0.9),
                mcc: 0.5,
            },
        }];
        let text = history_csv(&history);
        assert!(text.starts_with("epoch,loss,accuracy,f1,auc,mcc\n"));
        assert!(text.contains("1,0.500000,0.750000,0.800000,0.900000,0.500000"));
    }

    #[test]
    fn repetitions_csv_round_trip() {
        let rows = vec![
            RepetitionRow {
                repetition: 0,
                seed: 7,
                metrics: MetricsRow {
                    accuracy: 0.5,
                    f1: 0.25,
                    auc: None,
                    mcc: 0.0,
                },
            },
            RepetitionRow {
                repetition: 1,
                seed: 8,
                metrics: MetricsRow {
                    accuracy: 1.0,
                    f1: 1.0,
                    auc: Some(1.0),
                    mcc: 1.0,
                },
            },
        ];
        let text = repetitions_csv(&rows);
        let parsed = parse_repetitions_csv(&text).unwrap();
        assert_eq!(parsed, rows);
    }

    #[test]
    fn loss_is_finite_every_epoch() {
        let (config, table, pairs) = tiny_setup(8);
        let options = TrainOptions {
            epochs: 3,
            batch_size: 4,
            seed: 2,
        };
        let (_, history) = train(&config, &table, &pairs, &[], &options).unwrap();
        assert_eq!(history.len(), 3);
        assert!(history.iter().all(|e| e.loss.is_finite()));
    }
}
