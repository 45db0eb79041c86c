//! Annotate a pair of Europarl directories with speaker metadata.
//!
//!     cargo run --example ingest_europarl -- [EUROPARL_DIR MEP_TSV [--fuzzy]]
//!
//! Without arguments the bundled test fixtures are used. The JSONL corpus is
//! printed to stdout; counts and diagnostics go to stderr.

use std::path::PathBuf;

use gendertag::pipeline::commands::ingest_dirs;

fn main() -> Result<(), Box<dyn std::error::Error + Send + Sync>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let (dir, table) = match args.as_slice() {
        [d, t, ..] => (PathBuf::from(d), PathBuf::from(t)),
        _ => (fixtures.join("europarl"), fixtures.join("mep.tsv")),
    };
    let fuzzy = args.iter().any(|a| a == "--fuzzy");

    let corpus = ingest_dirs(&dir.join("en"), &dir.join("fr"), &table, "EN-FR", fuzzy)?;
    corpus.write_jsonl(std::io::stdout().lock())?;

    let c = corpus.stats();
    eprintln!("{} pairs ({} male, {} female, {} unknown gender, {} unresolved)", c.total_pairs, c.male, c.female, c.unknown_gender, c.unresolved_count);
    for d in &corpus.diagnostics {
        eprintln!("  {}: {}", d.file, d.message);
    }
    Ok(())
}
