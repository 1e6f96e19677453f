//! Regenerates `fixtures/corpus.jsonl`, the labeled completion corpus.
//!
//! cargo run --example generate_corpus [-- <out path>]

use std::collections::BTreeMap;

use policy_inspect::config::Fixtures;
use policy_inspect::corpus::{generate, to_jsonl};

fn main() -> std::io::Result<()> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/corpus.jsonl").to_string());
    let entries = generate(&Fixtures::builtin());
    std::fs::write(&out, to_jsonl(&entries))?;

    let mut by_label: BTreeMap<String, usize> = BTreeMap::new();
    for e in &entries {
        *by_label.entry(e.label.to_string()).or_default() += 1;
    }
    println!("wrote {} entries to {out}", entries.len());
    for (label, n) in by_label {
        println!("  {label:<10} {n}");
    }
    Ok(())
}
