//! Writes a synthetic records file to stdout.
//!
//! Usage: cargo run -p acr-core --example generate_fixture -- [count] [seed]

use acr_core::synthetic::{generate_records, records_to_jsonl};

fn main() {
    let mut args = std::env::args().skip(1);
    let count: usize = args
        .next()
        .map(|v| v.parse().expect("count must be an integer"))
        .unwrap_or(60);
    let seed: u64 = args
        .next()
        .map(|v| v.parse().expect("seed must be an integer"))
        .unwrap_or(424242);
    print!("{}", records_to_jsonl(&generate_records(count, seed)));
}
