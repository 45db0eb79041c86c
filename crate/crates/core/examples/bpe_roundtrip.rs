//! Learn BPE merges, segment text, and restore it.
//!
//!     cargo run --example bpe_roundtrip -- [NUM_MERGES]

use std::collections::BTreeSet;

use gendertag::bpe::{learn_bpe, undo_bpe, BpeModel};

const TEXT: &[&str] = &[
    "MALE i am very satisfied with the report",
    "FEMALE i am satisfied that the rapporteur reported",
    "the reports are satisfactory and the rapporteurs agree",
    "FEMALE i am delighted to report satisfaction",
];

fn main() -> Result<(), Box<dyn std::error::Error + Send + Sync>> {
    let merges = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(40);
    let protected: BTreeSet<String> = ["MALE", "FEMALE"].map(String::from).into();
    let model = learn_bpe(TEXT, merges, &protected)?;

    println!("{} merges learned, first ten:", model.num_merges());
    for (l, r) in model.merges().iter().take(10) {
        println!("  {l} + {r}");
    }
    for line in TEXT.iter().chain(&["MALE unreported dissatisfaction"]) {
        let seg = model.apply(line);
        assert_eq!(undo_bpe(&seg)?, *line);
        println!("{seg}");
    }

    let mut file = Vec::new();
    model.write_merges(&mut file)?;
    let back = BpeModel::read(file.as_slice(), Some(&model.sidecar()))?;
    assert_eq!(back, model);
    println!("merge file round-trips ({} bytes)", file.len());
    Ok(())
}
