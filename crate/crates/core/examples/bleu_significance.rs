//! Corpus BLEU and significance of a system difference.
//!
//!     cargo run --release --example bleu_significance

use gendertag::eval::{approx_randomization, corpus_bleu, paired_bootstrap};

fn main() -> Result<(), Box<dyn std::error::Error + Send + Sync>> {
    let refs: Vec<String> = (0..200).map(|i| format!("je suis {} du rapport numéro {i}", if i % 2 == 0 { "satisfait" } else { "satisfaite" })).collect();
    // System a always agrees with the speaker, system b always uses the masculine.
    let a = refs.clone();
    let b: Vec<String> = (0..200).map(|i| format!("je suis satisfait du rapport numéro {i}")).collect();

    let ra = corpus_bleu(&a, &refs, false)?;
    let rb = corpus_bleu(&b, &refs, false)?;
    println!("a: BLEU {:.2}  precisions {:?}", ra.score, ra.precisions);
    println!("b: BLEU {:.2}  precisions {:?}  BP {:.3}", rb.score, rb.precisions, rb.brevity_penalty);

    let ar = approx_randomization(&a, &b, &refs, 10_000, 1, false)?;
    let bs = paired_bootstrap(&a, &b, &refs, 10_000, 1, false)?;
    println!("approximate randomization p = {:.4}", ar.p_value);
    println!("paired bootstrap         p = {:.4}", bs.p_value);
    let same = approx_randomization(&b, &b, &refs, 10_000, 1, false)?;
    println!("b against itself         p = {:.4}", same.p_value);
    Ok(())
}
