//! Review records and dataset plumbing: JSONL loading, the preprocessing
//! pipeline from raw fragments to relation graphs, deterministic stratified
//! splitting, and balanced class weights.

use crate::ast::Ast;
use crate::graph::{build_graph, serialize, FragmentGraph, FragmentRecord, GraphError};
use crate::parse::{ingest_interchange, parse_subset, SourceFragment};
use crate::simplify::{simplify, KeepRule};
use serde::Deserialize;
use std::io::{BufRead, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("record {id:?}: {message}")]
    Record { id: String, message: String },
    #[error("both classes must be present (have {rejected} rejected, {accepted} accepted)")]
    MissingClass { rejected: usize, accepted: usize },
    #[error("split leaves the {side} side empty")]
    DegenerateSplit { side: &'static str },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A code fragment as it arrives: raw subset source or a pre-parsed tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Fragment {
    Source(String),
    Tree(Ast),
}

/// One (original, revised, label) unit of training or prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct ReviewRecord {
    pub id: String,
    pub original: Fragment,
    pub revised: Fragment,
    pub label: u8,
}

/// A record after preprocessing: two relation graphs plus the label.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedPair {
    pub original: FragmentGraph,
    pub revised: FragmentGraph,
    pub label: u8,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    id: String,
    #[serde(default)]
    format: Option<String>,
    original: serde_json::Value,
    revised: serde_json::Value,
    label: serde_json::Value,
}

fn fragment_from_value(
    value: serde_json::Value,
    format: &str,
    what: &str,
) -> Result<Fragment, String> {
    match format {
        "source" => {
            let serde_json::Value::String(text) = value else {
                return Err(format!("{what} must be a string for format \"source\""));
            };
            let fragment =
                SourceFragment::new(text).map_err(|e| format!("{what}: {e}"))?;
            Ok(Fragment::Source(fragment.text().to_string()))
        }
        "ast" => {
            if !value.is_object() {
                return Err(format!("{what} must be a node object for format \"ast\""));
            }
            let doc = value.to_string();
            let ast = ingest_interchange(&doc).map_err(|e| format!("{what}: {e}"))?;
            Ok(Fragment::Tree(ast))
        }
        other => Err(format!("unknown format {other:?} (expected source or ast)")),
    }
}

/// Parses one JSONL record line.
pub fn parse_record_line(line: &str) -> Result<ReviewRecord, String> {
    let raw: RawRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let label = match raw.label.as_u64() {
        Some(0) => 0,
        Some(1) => 1,
        _ => return Err(format!("label must be 0 or 1, got {}", raw.label)),
    };
    let format = raw.format.as_deref().unwrap_or("source");
    let original = fragment_from_value(raw.original, format, "original")?;
    let revised = fragment_from_value(raw.revised, format, "revised")?;
    Ok(ReviewRecord {
        id: raw.id,
        original,
        revised,
        label,
    })
}

/// Loads review records, one JSON object per line; blank lines are skipped.
pub fn load_jsonl<R: BufRead>(reader: R) -> Result<Vec<ReviewRecord>, DataError> {
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = parse_record_line(&line).map_err(|message| DataError::Line {
            line: idx + 1,
            message,
        })?;
        records.push(record);
    }
    Ok(records)
}

fn fragment_to_graph(
    fragment: &Fragment,
    rule: Option<&KeepRule>,
) -> Result<FragmentGraph, String> {
    let ast = match fragment {
        Fragment::Source(text) => {
            let source = SourceFragment::new(text.clone()).map_err(|e| e.to_string())?;
            parse_subset(&source).map_err(|e| e.to_string())?
        }
        Fragment::Tree(ast) => ast.clone(),
    };
    let tree = match rule {
        Some(rule) => simplify(&ast, rule),
        None => ast,
    };
    let (labels, parents) = serialize(&tree);
    build_graph(labels, parents).map_err(|e| e.to_string())
}

/// Parses (or ingests), optionally simplifies, and serializes both fragments
/// of a record. `rule = None` skips simplification.
pub fn prepare_record(
    record: &ReviewRecord,
    rule: Option<&KeepRule>,
) -> Result<PreparedPair, DataError> {
    let wrap = |message: String| DataError::Record {
        id: record.id.clone(),
        message,
    };
    Ok(PreparedPair {
        original: fragment_to_graph(&record.original, rule).map_err(wrap)?,
        revised: fragment_to_graph(&record.revised, rule).map_err(wrap)?,
        label: record.label,
    })
}

/// Writes prepared pairs as adjacent fragment lines: the original carries the
/// pair's label, the revised line follows without one.
pub fn write_pairs<W: Write>(writer: &mut W, pairs: &[PreparedPair]) -> Result<(), DataError> {
    for pair in pairs {
        let original = FragmentRecord {
            labels: pair.original.labels().to_vec(),
            parents: pair.original.parents().to_vec(),
            label01: Some(pair.label),
        };
        let revised = FragmentRecord {
            labels: pair.revised.labels().to_vec(),
            parents: pair.revised.parents().to_vec(),
            label01: None,
        };
        writeln!(writer, "{}", serde_json::to_string(&original).expect("serializable"))?;
        writeln!(writer, "{}", serde_json::to_string(&revised).expect("serializable"))?;
    }
    Ok(())
}

/// Reads a pairs file written by [`write_pairs`]; matrices are rebuilt from
/// the stored labels and parent indices.
pub fn read_pairs<R: BufRead>(reader: R) -> Result<Vec<PreparedPair>, DataError> {
    let mut fragments: Vec<(usize, FragmentRecord)> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: FragmentRecord =
            serde_json::from_str(&line).map_err(|e| DataError::Line {
                line: idx + 1,
                message: e.to_string(),
            })?;
        fragments.push((idx + 1, record));
    }
    if fragments.len() % 2 != 0 {
        return Err(DataError::Line {
            line: fragments.last().map(|(l, _)| *l).unwrap_or(0),
            message: "odd number of fragments; pairs must be adjacent".into(),
        });
    }
    let mut pairs = Vec::with_capacity(fragments.len() / 2);
    let mut iter = fragments.into_iter();
    while let (Some((line_a, original)), Some((line_b, revised))) = (iter.next(), iter.next()) {
        let label = original.label01.ok_or(DataError::Line {
            line: line_a,
            message: "original fragment is missing label01".into(),
        })?;
        if label > 1 {
            return Err(DataError::Line {
                line: line_a,
                message: format!("label01 must be 0 or 1, got {label}"),
            });
        }
        let build = |record: FragmentRecord, line: usize| -> Result<FragmentGraph, DataError> {
            record.into_graph().map_err(|e: GraphError| DataError::Line {
                line,
                message: e.to_string(),
            })
        };
        pairs.push(PreparedPair {
            original: build(original, line_a)?,
            revised: build(revised, line_b)?,
            label,
        });
    }
    Ok(pairs)
}

fn fnv1a64(seed: u64, key: &str) -> u64 {
    let mut hash = 0xcbf29ce484222325u64 ^ seed.wrapping_mul(0x100000001b3);
    for byte in key.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Deterministic stratified split keyed on item identity: membership depends
/// only on (seed, key, label), not on input order. Output keeps input order.
pub fn stratified_split_by<T>(
    items: Vec<T>,
    label_of: impl Fn(&T) -> u8,
    key_of: impl Fn(&T) -> String,
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>), DataError> {
    let labels: Vec<u8> = items.iter().map(&label_of).collect();
    let rejected = labels.iter().filter(|l| **l == 0).count();
    let accepted = labels.len() - rejected;
    if rejected == 0 || accepted == 0 {
        return Err(DataError::MissingClass { rejected, accepted });
    }
    let mut in_train = vec![false; items.len()];
    for class in [0u8, 1u8] {
        let mut members: Vec<(u64, String, usize)> = items
            .iter()
            .enumerate()
            .filter(|(i, _)| labels[*i] == class)
            .map(|(i, item)| {
                let key = key_of(item);
                (fnv1a64(seed, &key), key, i)
            })
            .collect();
        members.sort();
        let train_count = (train_fraction * members.len() as f64).round() as usize;
        for (_, _, index) in members.iter().take(train_count.min(members.len())) {
            in_train[*index] = true;
        }
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (item, keep) in items.into_iter().zip(in_train) {
        if keep {
            train.push(item);
        } else {
            test.push(item);
        }
    }
    if train.is_empty() {
        return Err(DataError::DegenerateSplit { side: "train" });
    }
    if test.is_empty() {
        return Err(DataError::DegenerateSplit { side: "test" });
    }
    Ok((train, test))
}

/// Stratified split of review records, keyed on record id.
pub fn stratified_split(
    records: Vec<ReviewRecord>,
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<ReviewRecord>, Vec<ReviewRecord>), DataError> {
    stratified_split_by(records, |r| r.label, |r| r.id.clone(), train_fraction, seed)
}

/// Stratified split of prepared pairs, keyed on their position in the pairs
/// file.
pub fn stratified_split_pairs(
    pairs: Vec<PreparedPair>,
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<PreparedPair>, Vec<PreparedPair>), DataError> {
    let indexed: Vec<(usize, PreparedPair)> = pairs.into_iter().enumerate().collect();
    let (train, test) = stratified_split_by(
        indexed,
        |(_, p)| p.label,
        |(i, _)| i.to_string(),
        train_fraction,
        seed,
    )?;
    Ok((
        train.into_iter().map(|(_, p)| p).collect(),
        test.into_iter().map(|(_, p)| p).collect(),
    ))
}

/// Balanced class weights over training labels:
/// `w_reject = S / (2 * S_rejected)`, `w_accept = S / (2 * S_accepted)`.
pub fn class_weights(labels: &[u8]) -> Result<(f64, f64), DataError> {
    let total = labels.len();
    let rejected = labels.iter().filter(|l| **l == 0).count();
    let accepted = total - rejected;
    if rejected == 0 || accepted == 0 {
        return Err(DataError::MissingClass { rejected, accepted });
    }
    Ok((
        total as f64 / (2.0 * rejected as f64),
        total as f64 / (2.0 * accepted as f64),
    ))
}
