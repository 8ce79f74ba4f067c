//! Binary model checkpoints.
//!
//! Layout: `TRLM`, version byte, kind byte (0 transformer, 1 MLP), u32 length
//! and JSON of the config, u32 input dimension, u32 tensor count, then per
//! tensor u32 rows, u32 cols and row-major f64 values. Integers and floats
//! are little-endian.

use std::fs;
use std::path::Path;

use super::{MlpModel, Scorer, StreamConfig, StreamModel, TransformerModel};
use crate::{Error, FormatError, Result};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"TRLM";
const VERSION: u8 = 1;

pub fn checkpoint_bytes(model: &StreamModel) -> Vec<u8> {
    let config = serde_json::to_vec(model.config()).expect("config serializes");
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.push(VERSION);
    out.push(match model {
        StreamModel::Transformer(_) => 0,
        StreamModel::Mlp(_) => 1,
    });
    out.extend_from_slice(&(config.len() as u32).to_le_bytes());
    out.extend_from_slice(&config);
    out.extend_from_slice(&(model.input_dim() as u32).to_le_bytes());
    let tensors = model.tensors();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.nrows() as u32).to_le_bytes());
        out.extend_from_slice(&(t.ncols() as u32).to_le_bytes());
        for v in t.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn save_checkpoint(path: &Path, model: &StreamModel) -> Result<()> {
    fs::write(path, checkpoint_bytes(model)).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(FormatError::Truncated {
                expected: end,
                found: self.bytes.len(),
            }
            .into());
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<StreamModel> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().expect("4 bytes");
    if magic != CHECKPOINT_MAGIC {
        return Err(FormatError::BadMagic(magic).into());
    }
    let version = r.take(1)?[0];
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion(version).into());
    }
    let kind = r.take(1)?[0];
    let config_len = r.u32()?;
    let config: StreamConfig = serde_json::from_slice(r.take(config_len)?)
        .map_err(|e| FormatError::Malformed(format!("checkpoint config: {e}")))?;
    let input_dim = r.u32()?;
    let mut model = match kind {
        0 => StreamModel::Transformer(TransformerModel::new(input_dim, &config)?),
        1 => StreamModel::Mlp(MlpModel::new(input_dim, &config)?),
        k => return Err(FormatError::Malformed(format!("unknown model kind {k}")).into()),
    };
    let count = r.u32()?;
    let mut tensors = model.tensors_mut();
    if count != tensors.len() {
        return Err(FormatError::CountMismatch {
            expected: tensors.len(),
            found: count,
        }
        .into());
    }
    for t in tensors.iter_mut() {
        let (rows, cols) = (r.u32()?, r.u32()?);
        if (rows, cols) != t.dim() {
            return Err(FormatError::Malformed(format!(
                "tensor shape {rows}x{cols}, expected {}x{}",
                t.nrows(),
                t.ncols()
            ))
            .into());
        }
        let raw = r.take(rows * cols * 8)?;
        for (v, chunk) in t.iter_mut().zip(raw.chunks_exact(8)) {
            *v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        }
    }
    drop(tensors);
    if r.pos != bytes.len() {
        return Err(FormatError::TrailingBytes(bytes.len() - r.pos).into());
    }
    Ok(model)
}

pub fn load_checkpoint(path: &Path) -> Result<StreamModel> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact {
            path: path.to_path_buf(),
            hint: "model checkpoint not found; run the `train` stage first".into(),
        },
        _ => Error::io(path, e),
    })?;
    checkpoint_from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> StreamConfig {
        StreamConfig {
            d_k: 8,
            n_heads: 2,
            mlp_hidden: Some(12),
            seed: 9,
            ..StreamConfig::default()
        }
    }

    #[test]
    fn round_trips_both_kinds() {
        let t = StreamModel::Transformer(TransformerModel::new(5, &tiny()).unwrap());
        let m = StreamModel::Mlp(MlpModel::new(5, &tiny()).unwrap());
        for model in [t, m] {
            let bytes = checkpoint_bytes(&model);
            assert_eq!(&bytes[..4], b"TRLM");
            assert_eq!(checkpoint_from_bytes(&bytes).unwrap(), model);
        }
    }

    #[test]
    fn rejects_corruption() {
        let model = StreamModel::Mlp(MlpModel::new(3, &tiny()).unwrap());
        let bytes = checkpoint_bytes(&model);
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            checkpoint_from_bytes(&bad),
            Err(Error::Format(FormatError::BadMagic(_)))
        ));
        let mut bad = bytes.clone();
        bad[4] = 7;
        assert!(matches!(
            checkpoint_from_bytes(&bad),
            Err(Error::Format(FormatError::UnsupportedVersion(7)))
        ));
        assert!(checkpoint_from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(
            checkpoint_from_bytes(&long),
            Err(Error::Format(FormatError::TrailingBytes(1)))
        ));
        for cut in 0..40 {
            assert!(checkpoint_from_bytes(&bytes[..cut]).is_err());
        }
    }

    #[test]
    fn missing_file_is_missing_artifact() {
        let err = load_checkpoint(Path::new("/nonexistent/model.trlm")).unwrap_err();
        assert!(matches!(err, Error::MissingArtifact { .. }));
    }
}
