//! Toolkit for speaker-gender experiments in machine translation.
//!
//! * [`ingest`] turns Europarl session files plus an MEP metadata table into
//!   speaker-annotated parallel corpora.
//! * [`analysis`] reports gender shares, age histograms and per-gender word ranks.
//! * [`dataset`] prefixes sources with gender tags and carves the general,
//!   male, female and first-person test sets.
//! * [`bpe`] learns and applies byte-pair-encoding segmentation that never
//!   splits the tags.
//! * [`nmt`] is a desk-scale GRU encoder–decoder with attention, trained by
//!   hand-written backpropagation, and a synthetic agreement language.
//! * [`eval`] computes corpus BLEU and approximate-randomization significance.
//! * [`pipeline`] wires the stages together behind a TOML config.
//!
//! Runnable walkthroughs of each piece live in the crate's `examples/` directory.

pub mod analysis;
pub mod bpe;
pub mod dataset;
pub mod eval;
pub mod ingest;
pub mod nmt;
pub mod pipeline;
