//! Gender shares, the age-by-gender histogram and per-gender word ranks.
//!
//!     cargo run --example corpus_stats -- [CORPUS.jsonl [TOKEN...]]
//!
//! Without arguments a small synthetic corpus with ages is generated.

use std::path::Path;

use chrono::NaiveDate;
use gendertag::analysis::{age_gender_histogram, frequency_rank, gender_distribution, histogram_csv, Side};
use gendertag::ingest::{AnnotatedCorpus, Gender, SentencePair, SpeakerRecord};
use gendertag::pipeline::commands::read_corpus;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn synthetic(n: usize) -> AnnotatedCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let session = NaiveDate::from_ymd_opt(2005, 6, 1).unwrap();
    let words = ["je", "crois", "pense", "que", "nous", "devons", "agir", "madame", "monsieur"];
    let pairs = (0..n)
        .map(|i| {
            let gender = if rng.gen_bool(0.67) { Gender::Male } else { Gender::Female };
            let dob = NaiveDate::from_ymd_opt(rng.gen_range(1930..1975), 1, 1).unwrap();
            let speaker = SpeakerRecord::new(format!("{i}"), format!("mep {i}"), gender, Some(dob), None);
            let tgt: Vec<&str> = (0..6).map(|_| words[rng.gen_range(0..words.len())]).collect();
            SentencePair::annotated("x", tgt.join(" "), "EN-FR", Some(session), "mep", Some(speaker)).unwrap().0
        })
        .collect();
    AnnotatedCorpus::from_pairs("EN-FR", pairs)
}

fn main() -> Result<(), Box<dyn std::error::Error + Send + Sync>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let corpus = match args.first() {
        Some(p) => read_corpus(Path::new(p))?,
        None => synthetic(5000),
    };
    let probes: Vec<&str> = if args.len() > 1 { args[1..].iter().map(String::as_str).collect() } else { vec!["crois", "pense"] };

    let stats = gender_distribution(&corpus)?;
    println!("{} pairs", stats.total_pairs);
    println!("male {:.2}%  female {:.2}% of known gender, unknown {:.2}% of all", 100.0 * stats.male_share, 100.0 * stats.female_share, 100.0 * stats.unknown_share);
    for (bucket, share) in &stats.bucket_shares {
        println!("  age {:<7} {:5.2}% of all pairs", bucket.label(), 100.0 * share);
    }

    println!("\n{}", histogram_csv(&age_gender_histogram(&corpus, 10)));

    let male = frequency_rank(&corpus, Side::Tgt, Gender::Male);
    let female = frequency_rank(&corpus, Side::Tgt, Gender::Female);
    for tok in probes {
        println!("rank of {tok:?}: male {:?}, female {:?}", male.rank_of(tok), female.rank_of(tok));
    }
    Ok(())
}
