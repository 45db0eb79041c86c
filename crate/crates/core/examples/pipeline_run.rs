//! Every pipeline stage on a small toy configuration, run twice.
//!
//!     cargo run --release --example pipeline_run -- [CONFIG.toml]
//!
//! The second run finds all inputs unchanged and skips every stage.

use std::path::Path;

use gendertag::dataset::{BuildSpec, SplitSpec};
use gendertag::nmt::{Hyperparams, ToyLanguageSpec};
use gendertag::pipeline::{read_evaluation, run, BpeOptions, DataSource, PipelineConfig, Stage};

fn small_config() -> PipelineConfig {
    PipelineConfig {
        work_dir: std::env::temp_dir().join("gendertag-pipeline"),
        data: DataSource::Toy(ToyLanguageSpec { size: 2000, seed: 4, ..Default::default() }),
        build: BuildSpec {
            split: SplitSpec { test_size: 200, seed: 4, exclude_unknown: true },
            gender_test_size: 100,
            first_person_size: 100,
            pronouns: ["i".to_string()].into(),
        },
        bpe: BpeOptions { merges: 1000, joint: true },
        model: Hyperparams { embed_dim: 24, hidden_dim: 32, epochs: 8, learning_rate: 1.0, clip_norm: Some(5.0), ..Default::default() },
        ..Default::default()
    }
}

fn main() -> Result<(), Box<dyn std::error::Error + Send + Sync>> {
    let cfg = match std::env::args().nth(1) {
        Some(p) => PipelineConfig::load(Path::new(&p))?,
        None => small_config(),
    };
    for attempt in 1..=2 {
        let report = run(&cfg, &Stage::ALL)?;
        let summary: Vec<String> = report.stages.iter().map(|s| format!("{}={:?}", s.stage, s.status)).collect();
        println!("run {attempt}: {}", summary.join(" "));
    }
    print!("{}", read_evaluation(&cfg.work_dir)?.to_table());
    Ok(())
}
