//! Binary checkpoint format.
//!
//! ```text
//! "ARRW" | version u32 = 1 | dim u32 | rank u32 | vocab u32 | eps f32
//! | h0 | E | U | V | gain | bias | W_out      (f32, row-major)
//! | crc32 of every preceding byte
//! ```
//!
//! All integers and floats little-endian. The vocabulary is written next to the
//! checkpoint, at `<path>.vocab`, in the plain vocabulary file format.

use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{ModelParams, Scalar};
use crate::corpus::{CorpusError, Vocab};

pub const MAGIC: &[u8; 4] = b"ARRW";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 * 4;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("unsupported or inconsistent checkpoint: {0}")]
    FormatVersionMismatch(String),
    #[error("checksum mismatch (file truncated or corrupted)")]
    ChecksumMismatch,
    #[error("vocabulary file: {0}")]
    Vocab(#[from] CorpusError),
}

/// Serialize `params` as 32-bit floats.
pub fn write_checkpoint<F: Scalar>(params: &ModelParams<F>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + params.param_count() * 4 + 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for n in [params.dim, params.rank, params.vocab] {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    out.extend_from_slice(&params.eps.to_f32().unwrap_or(f32::NAN).to_le_bytes());
    for tensor in params.tensors() {
        for x in tensor {
            out.extend_from_slice(&x.to_f32().unwrap_or(f32::NAN).to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<ModelParams<f32>, CheckpointError> {
    if bytes.len() < HEADER_LEN + 4 {
        return Err(CheckpointError::ChecksumMismatch);
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err(CheckpointError::ChecksumMismatch);
    }
    if &body[..4] != MAGIC {
        return Err(CheckpointError::FormatVersionMismatch("bad magic bytes".into()));
    }
    let word = |at: usize| u32::from_le_bytes(body[at..at + 4].try_into().expect("4 bytes"));
    let version = word(4);
    if version != VERSION {
        return Err(CheckpointError::FormatVersionMismatch(format!("version {version}, expected {VERSION}")));
    }
    let (dim, rank, vocab) = (word(8) as usize, word(12) as usize, word(16) as usize);
    let eps = f32::from_le_bytes(body[20..24].try_into().expect("4 bytes"));
    if rank == 0 || rank > dim || vocab == 0 {
        return Err(CheckpointError::FormatVersionMismatch(format!(
            "header shape dim={dim} rank={rank} vocab={vocab} is invalid"
        )));
    }
    let sizes = [dim, vocab * rank, dim * rank, dim * rank, dim, dim, vocab * dim];
    let expected: usize = sizes.iter().sum::<usize>() * 4;
    let payload = &body[HEADER_LEN..];
    if payload.len() != expected {
        return Err(CheckpointError::FormatVersionMismatch(format!(
            "header implies {expected} tensor bytes, found {}",
            payload.len()
        )));
    }
    let mut floats = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")));
    let mut take = |n: usize| -> Vec<f32> { floats.by_ref().take(n).collect() };
    Ok(ModelParams {
        dim,
        rank,
        vocab,
        h0: take(sizes[0]),
        gates: take(sizes[1]),
        u: take(sizes[2]),
        v: take(sizes[3]),
        gain: take(sizes[4]),
        bias: take(sizes[5]),
        w_out: take(sizes[6]),
        eps,
    })
}

pub fn vocab_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".vocab");
    PathBuf::from(s)
}

pub fn save_checkpoint<F: Scalar>(params: &ModelParams<F>, vocab: &Vocab, path: &Path) -> Result<(), CheckpointError> {
    if vocab.len() != params.vocab {
        return Err(CheckpointError::FormatVersionMismatch(format!(
            "vocabulary has {} entries, model expects {}",
            vocab.len(),
            params.vocab
        )));
    }
    std::fs::write(path, write_checkpoint(params))?;
    std::fs::write(vocab_path(path), vocab.to_file_string())?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams<f32>, Vocab), CheckpointError> {
    let params = read_checkpoint(&std::fs::read(path)?)?;
    let vocab = Vocab::from_file_string(&std::fs::read_to_string(vocab_path(path))?)?;
    if vocab.len() != params.vocab {
        return Err(CheckpointError::FormatVersionMismatch(format!(
            "vocabulary has {} entries, checkpoint has {}",
            vocab.len(),
            params.vocab
        )));
    }
    Ok((params, vocab))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let p = ModelParams::<f32>::init(13, 16, 4, 7).unwrap();
        let back = read_checkpoint(&write_checkpoint(&p)).unwrap();
        assert_eq!(p, back);
        for (a, b) in p.tensors().iter().zip(back.tensors()) {
            assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn truncation_is_a_checksum_error() {
        let bytes = write_checkpoint(&ModelParams::<f32>::init(5, 4, 2, 1).unwrap());
        for cut in [1, 10, bytes.len() - 5] {
            assert!(matches!(read_checkpoint(&bytes[..bytes.len() - cut]), Err(CheckpointError::ChecksumMismatch)));
        }
        let mut flipped = bytes.clone();
        flipped[30] ^= 1;
        assert!(matches!(read_checkpoint(&flipped), Err(CheckpointError::ChecksumMismatch)));
    }

    #[test]
    fn header_shape_mismatch_is_a_format_error() {
        let mut bytes = write_checkpoint(&ModelParams::<f32>::init(5, 4, 2, 1).unwrap());
        bytes.truncate(bytes.len() - 4);
        bytes[12..16].copy_from_slice(&3u32.to_le_bytes()); // rank 2 -> 3
        let crc = crc32fast::hash(&bytes);
        bytes.extend_from_slice(&crc.to_le_bytes());
        assert!(matches!(read_checkpoint(&bytes), Err(CheckpointError::FormatVersionMismatch(_))));
    }

    #[test]
    fn wrong_version_is_rejected() {
        let mut bytes = write_checkpoint(&ModelParams::<f32>::init(5, 4, 2, 1).unwrap());
        bytes.truncate(bytes.len() - 4);
        bytes[4..8].copy_from_slice(&2u32.to_le_bytes());
        let crc = crc32fast::hash(&bytes);
        bytes.extend_from_slice(&crc.to_le_bytes());
        assert!(matches!(read_checkpoint(&bytes), Err(CheckpointError::FormatVersionMismatch(_))));
    }

    #[test]
    fn files_round_trip_with_vocab() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.arrw");
        let vocab = Vocab::build(&[vec!["a".to_string(), "b".to_string()]]).unwrap();
        let p = ModelParams::<f32>::init(vocab.len(), 4, 2, 3).unwrap();
        save_checkpoint(&p, &vocab, &path).unwrap();
        let (q, v) = load_checkpoint(&path).unwrap();
        assert_eq!(p, q);
        assert_eq!(v, vocab);
        assert!(matches!(load_checkpoint(&dir.path().join("missing")), Err(CheckpointError::Io(_))));
    }
}
