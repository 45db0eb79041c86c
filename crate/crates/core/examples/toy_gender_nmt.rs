//! BASE vs TAG on the synthetic gendered language.
//!
//!     cargo run --release --example toy_gender_nmt -- [SEED [TRAIN_SIZE]]
//!
//! Both systems see the same sentences; TAG sources start with the speaker's
//! gender tag. Only TAG can pick the right adjective form.

use std::time::Instant;

use gendertag::dataset::{bitext_lines, GenderTagConfig};
use gendertag::eval::{approx_randomization, corpus_bleu};
use gendertag::nmt::{agreement_accuracy, gen_toy_language, train, translate_lines, Hyperparams, ToyLanguageSpec};

fn main() -> Result<(), Box<dyn std::error::Error + Send + Sync>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let seed: u64 = args.first().map(|s| s.parse()).transpose()?.unwrap_or(1);
    let n_train: usize = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(5000);
    let n_test = 500;

    let spec = ToyLanguageSpec { size: n_train + n_test, seed, ..Default::default() };
    let corpus = gen_toy_language(&spec)?;
    let train_set = corpus.select(&(0..n_train).collect::<Vec<_>>());
    let test_set = corpus.select(&(n_train..n_train + n_test).collect::<Vec<_>>());
    let hp = Hyperparams { learning_rate: 1.0, clip_norm: Some(5.0), seed, ..Default::default() };
    let tags = GenderTagConfig::default();

    let mut hyps = Vec::new();
    let mut refs = Vec::new();
    for tagged in [false, true] {
        let (src, tgt) = bitext_lines(&train_set, tagged, &tags)?;
        let (test_src, test_tgt) = bitext_lines(&test_set, tagged, &tags)?;
        let t0 = Instant::now();
        let outcome = train(&src, &tgt, &hp)?;
        let out = translate_lines(&outcome.model, &test_src);
        let name = if tagged { "TAG " } else { "BASE" };
        println!(
            "{name}  accuracy {:.3}  BLEU {:6.2}  best epoch {:>2}  ({:.0?})",
            agreement_accuracy(&out, &test_tgt, &spec.lexicon),
            corpus_bleu(&out, &test_tgt, false)?.score,
            outcome.best_epoch,
            t0.elapsed()
        );
        println!("      {:?} -> {:?}", test_src[0], out[0]);
        hyps.push(out);
        refs = test_tgt;
    }
    let sig = approx_randomization(&hyps[1], &hyps[0], &refs, 10_000, seed, false)?;
    println!("TAG - BASE = {:.2} BLEU, p = {:.4}", sig.delta, sig.p_value);
    Ok(())
}
