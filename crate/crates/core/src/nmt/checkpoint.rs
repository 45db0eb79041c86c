//! Checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 8     | magic `GTS2SCKP` |
//! | 4     | format version (`u32`, currently 1) |
//! | 8     | header length `L` (`u64`) |
//! | L     | UTF-8 JSON header: hyperparameters, both vocabularies, tensor shapes |
//! | ...   | tensors as `f64` little-endian, in [`PARAM_NAMES`] order, row-major |

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::model::{Hyperparams, Params, Seq2SeqModel, PARAM_NAMES};
use super::tensor::Tensor;
use super::vocab::Vocab;
use super::NmtError;

pub const MAGIC: &[u8; 8] = b"GTS2SCKP";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorShape {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    hyperparams: Hyperparams,
    src_vocab: Vec<String>,
    tgt_vocab: Vec<String>,
    tensors: Vec<TensorShape>,
}

pub fn write_checkpoint<W: Write>(model: &Seq2SeqModel, mut out: W) -> Result<(), NmtError> {
    let header = Header {
        hyperparams: model.hp.clone(),
        src_vocab: model.src_vocab.tokens().to_vec(),
        tgt_vocab: model.tgt_vocab.tokens().to_vec(),
        tensors: PARAM_NAMES
            .iter()
            .zip(model.params.tensors())
            .map(|(n, t)| TensorShape { name: n.to_string(), rows: t.rows, cols: t.cols })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;
    for t in model.params.tensors() {
        for v in &t.data {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn to_bytes(model: &Seq2SeqModel) -> Vec<u8> {
    let mut buf = Vec::new();
    write_checkpoint(model, &mut buf).expect("writing to memory");
    buf
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Seq2SeqModel, NmtError> {
    let bad = |m: &str| NmtError::BadCheckpoint(m.to_string());
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("not a checkpoint (bad magic)"));
    }
    let mut b4 = [0u8; 4];
    input.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != VERSION {
        return Err(NmtError::BadCheckpoint(format!("unsupported version {version}")));
    }
    let mut b8 = [0u8; 8];
    input.read_exact(&mut b8)?;
    let len = usize::try_from(u64::from_le_bytes(b8)).map_err(|_| bad("header too large"))?;
    let mut json = vec![0u8; len];
    input.read_exact(&mut json)?;
    let header: Header = serde_json::from_slice(&json)?;

    let src_vocab = Vocab::from_tokens(header.src_vocab).ok_or_else(|| bad("invalid source vocabulary"))?;
    let tgt_vocab = Vocab::from_tokens(header.tgt_vocab).ok_or_else(|| bad("invalid target vocabulary"))?;
    let hp = header.hyperparams;
    if hp.src_vocab != src_vocab.len() || hp.tgt_vocab != tgt_vocab.len() {
        return Err(bad("vocabulary sizes disagree with hyperparameters"));
    }
    let mut params = Params::zeros(&hp);
    if header.tensors.len() != PARAM_NAMES.len() {
        return Err(bad("wrong tensor count"));
    }
    for ((shape, t), name) in header.tensors.iter().zip(params.tensors_mut()).zip(PARAM_NAMES) {
        if shape.name != name || shape.rows != t.rows || shape.cols != t.cols {
            return Err(NmtError::BadCheckpoint(format!("tensor {name}: shape mismatch")));
        }
        let mut raw = vec![0u8; t.len() * 8];
        input.read_exact(&mut raw)?;
        *t = Tensor { rows: t.rows, cols: t.cols, data: raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect() };
    }
    let mut trailing = [0u8; 1];
    if input.read(&mut trailing)? != 0 {
        return Err(bad("trailing bytes after tensors"));
    }
    Ok(Seq2SeqModel { hp, src_vocab, tgt_vocab, params })
}
