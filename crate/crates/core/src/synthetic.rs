//! Seeded generator of synthetic review records in the built-in subset
//! language. Accepted revisions (label 1) insert an early-return guard into
//! the method body; rejected revisions (label 0) only swap one literal, so no
//! return path is added.

use crate::data::{Fragment, ReviewRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const VARS: &[&str] = &["acc", "tmp", "count", "total", "value", "delta"];

#[derive(Clone)]
struct Statement {
    kind: u8,
    target: &'static str,
    source: &'static str,
    literal: u8,
}

impl Statement {
    fn random(rng: &mut ChaCha8Rng) -> Statement {
        Statement {
            kind: rng.gen_range(0..4),
            target: VARS[rng.gen_range(0..VARS.len())],
            source: VARS[rng.gen_range(0..VARS.len())],
            literal: rng.gen_range(0..100),
        }
    }

    fn render(&self) -> String {
        match self.kind {
            0 => format!("int {} = {};", self.target, self.literal),
            1 => format!("{} = {} + {};", self.target, self.source, self.literal),
            2 => format!("{} = {} * {};", self.target, self.source, self.literal),
            _ => format!("{} = first + {};", self.target, self.literal),
        }
    }
}

fn method_source(name: &str, body: &[Statement], guard: Option<(usize, &str)>) -> String {
    let mut rendered: Vec<String> = body.iter().map(Statement::render).collect();
    if let Some((position, text)) = guard {
        rendered.insert(position, text.to_string());
    }
    format!(
        "int {name}(int first, int second){{ {} return first; }}",
        rendered.join(" ")
    )
}

/// Generates `count` records, labels alternating so both classes are exactly
/// balanced. Deterministic for a fixed seed.
pub fn generate_records(count: usize, seed: u64) -> Vec<ReviewRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(count);
    for index in 0..count {
        let label = (index % 2) as u8;
        let name = format!("method{index}");
        let body_len = rng.gen_range(1..=2);
        let body: Vec<Statement> = (0..body_len).map(|_| Statement::random(&mut rng)).collect();
        let original = method_source(&name, &body, None);

        let revised = if label == 1 {
            let guard = format!(
                "if ({} < {}) return {};",
                if rng.gen_bool(0.5) { "first" } else { "second" },
                rng.gen_range(0..100),
                rng.gen_range(0..100),
            );
            let position = rng.gen_range(0..=body.len());
            method_source(&name, &body, Some((position, &guard)))
        } else {
            // Insert a plain assignment: a change of similar size that adds
            // no return path.
            let extra = Statement::random(&mut rng).render();
            let position = rng.gen_range(0..=body.len());
            method_source(&name, &body, Some((position, &extra)))
        };

        records.push(ReviewRecord {
            id: format!("syn{index:04}"),
            original: Fragment::Source(original),
            revised: Fragment::Source(revised),
            label,
        });
    }
    records
}

/// Renders records as JSONL in the input format of the pipeline.
pub fn records_to_jsonl(records: &[ReviewRecord]) -> String {
    let mut out = String::new();
    for record in records {
        let (original, revised) = match (&record.original, &record.revised) {
            (Fragment::Source(o), Fragment::Source(r)) => (o, r),
            _ => unreachable!("generator emits source fragments"),
        };
        let line = serde_json::json!({
            "id": record.id,
            "original": original,
            "revised": revised,
            "label": record.label,
        });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{load_jsonl, prepare_record};
    use crate::simplify::KeepRule;
    use std::io::Cursor;

    #[test]
    fn generator_is_deterministic_and_balanced() {
        let a = generate_records(20, 5);
        let b = generate_records(20, 5);
        assert_eq!(a, b);
        assert_eq!(a.iter().filter(|r| r.label == 1).count(), 10);
    }

    #[test]
    fn every_record_parses_and_prepares() {
        let records = generate_records(30, 11);
        let rule = KeepRule::default();
        for record in &records {
            let pair = prepare_record(record, Some(&rule)).unwrap();
            assert!(!pair.original.is_empty());
            assert!(!pair.revised.is_empty());
        }
    }

    #[test]
    fn revisions_differ_from_originals() {
        for record in generate_records(30, 17) {
            assert_ne!(record.original, record.revised, "{}", record.id);
        }
    }

    #[test]
    fn accepted_revisions_add_a_return_guard() {
        let records = generate_records(40, 3);
        for record in records {
            let rule = KeepRule::default();
            let pair = prepare_record(&record, Some(&rule)).unwrap();
            let returns = |g: &crate::graph::FragmentGraph| {
                g.labels().iter().filter(|l| *l == "ReturnStatement").count()
            };
            let added = returns(&pair.revised) as i64 - returns(&pair.original) as i64;
            if record.label == 1 {
                assert_eq!(added, 1, "guard adds exactly one return: {}", record.id);
            } else {
                assert_eq!(added, 0, "rejected revisions add no return: {}", record.id);
            }
        }
    }

    #[test]
    fn jsonl_round_trips_through_the_loader() {
        let records = generate_records(6, 2);
        let text = records_to_jsonl(&records);
        let loaded = load_jsonl(Cursor::new(text)).unwrap();
        assert_eq!(loaded, records);
    }
}
