//! Gender-tagged training data and the general / M / F / M1 / F1 test sets.
//!
//!     cargo run --example build_datasets -- [OUT_DIR]

use std::path::PathBuf;

use gendertag::dataset::{apply_gender_tag, plan_datasets, write_datasets, BuildSpec, GenderTagConfig, SplitSpec};
use gendertag::nmt::{gen_toy_language, ToyLanguageSpec};

fn main() -> Result<(), Box<dyn std::error::Error + Send + Sync>> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("gendertag-build"));

    // Toy sentences all contain "i"; mix in plural ones so first-person filtering has work to do.
    let mut corpus = gen_toy_language(&ToyLanguageSpec { size: 3000, seed: 2, ..Default::default() })?;
    for (k, p) in corpus.pairs.iter_mut().enumerate().filter(|(k, _)| k % 3 == 0) {
        p.src = p.src.replacen("i am", "we are", 1);
        p.tgt = format!("{k} {}", p.tgt);
    }

    let tags = GenderTagConfig::default();
    println!("{}", apply_gender_tag(&corpus.pairs[1], &tags)?.src);

    let spec = BuildSpec {
        split: SplitSpec { test_size: 300, seed: 9, exclude_unknown: true },
        gender_test_size: 200,
        first_person_size: 150,
        pronouns: ["i".to_string()].into(),
    };
    let plan = plan_datasets(&corpus, &spec)?;
    for (tagged, dir) in [(false, "base"), (true, "tag")] {
        let manifest = write_datasets(&corpus, &plan, &spec, tagged, &tags, &out.join(dir))?;
        println!("{dir}: {:?}", manifest.counts);
    }
    println!("written under {}", out.display());
    Ok(())
}
