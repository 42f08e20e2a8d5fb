//! Binary run snapshots.
//!
//! A checkpoint captures everything a deterministic resume needs: every
//! parameter tensor with its optimizer moments, step counters and freeze
//! flags, the RNG seed and stream position, and the SHA-256 of the config
//! that launched the run. The whole file is covered by a trailing SHA-256,
//! so truncation or bit-rot is detected before any of it is trusted.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic            8  b"TOOLSTRM"
//! format version   4  u32
//! config hash     32  sha256 of the canonical config JSON
//! rng seed        32
//! rng word pos    16  u128
//! model dims      32  context/feature/hidden/vocab as u64
//! prompt position  1  u8
//! param count      4  u32
//! per parameter:      name (u32 len + bytes), rows u64, cols u64,
//!                     trainable u8, steps u64, then value / first moment /
//!                     second moment as rows*cols f64 each
//! checksum        32  sha256 of every byte above
//! ```

use std::path::Path;

use rand::SeedableRng as _;
use sha2::{Digest, Sha256};

use crate::codebook::ToolCodebook;
use crate::model::{ModelDims, ModelState, PromptPosition};
use crate::numerics::{Param, Rng, Tensor2};

use super::stage::Pipeline;

pub const MAGIC: &[u8; 8] = b"TOOLSTRM";
pub const FORMAT_VERSION: u32 = 1;

/// Canonical on-disk parameter order.
const PARAM_ORDER: [&str; 10] = [
    "projector_w",
    "projector_b",
    "token_embedding",
    "query_embedding",
    "query_linear",
    "dec_w1",
    "dec_b1",
    "dec_w2",
    "dec_b2",
    "codebook",
];

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("i/o on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint format {got} (this build reads {supported})")]
    Version { got: u32, supported: u32 },
    #[error("checkpoint corrupt: {what}")]
    Corrupt { what: String },
    #[error("checkpoint was written by a run with a different configuration")]
    ConfigMismatch,
}

/// A loaded snapshot.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub pipeline: Pipeline,
    pub rng: Rng,
    pub config_hash: [u8; 32],
}

fn position_tag(p: PromptPosition) -> u8 {
    match p {
        PromptPosition::ToolVisionText => 0,
        PromptPosition::VisionToolText => 1,
        PromptPosition::VisionTextTool => 2,
    }
}

fn position_from_tag(tag: u8) -> Result<PromptPosition, CheckpointError> {
    match tag {
        0 => Ok(PromptPosition::ToolVisionText),
        1 => Ok(PromptPosition::VisionToolText),
        2 => Ok(PromptPosition::VisionTextTool),
        other => Err(CheckpointError::Corrupt {
            what: format!("unknown prompt position tag {other}"),
        }),
    }
}

fn push_tensor(out: &mut Vec<u8>, t: &Tensor2) {
    for v in t.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn push_param(out: &mut Vec<u8>, name: &str, p: &Param) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(p.value.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(p.value.cols() as u64).to_le_bytes());
    out.push(p.trainable as u8);
    out.extend_from_slice(&p.steps.to_le_bytes());
    push_tensor(out, &p.value);
    push_tensor(out, &p.first_moment);
    push_tensor(out, &p.second_moment);
}

/// Serializes a pipeline and RNG position to `path`.
pub fn save_checkpoint(
    path: &Path,
    pipe: &Pipeline,
    rng: &Rng,
    config_hash: &[u8; 32],
) -> Result<(), CheckpointError> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(config_hash);
    out.extend_from_slice(&rng.get_seed());
    out.extend_from_slice(&rng.get_word_pos().to_le_bytes());
    let d = &pipe.model.dims;
    for v in [d.context_width, d.feature_dim, d.hidden, d.vocab_size] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    out.push(position_tag(pipe.model.position));
    out.extend_from_slice(&(PARAM_ORDER.len() as u32).to_le_bytes());
    for (name, p) in pipe.model.named_params() {
        push_param(&mut out, name, p);
    }
    push_param(&mut out, "codebook", &pipe.codebook.prompts);
    let digest: [u8; 32] = Sha256::digest(&out).into();
    out.extend_from_slice(&digest);
    std::fs::write(path, out).map_err(|e| CheckpointError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.buf.len() {
            return Err(CheckpointError::Corrupt {
                what: format!("unexpected end of file reading {what}"),
            });
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self, what: &str) -> Result<u8, CheckpointError> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn u128(&mut self, what: &str) -> Result<u128, CheckpointError> {
        Ok(u128::from_le_bytes(self.take(16, what)?.try_into().unwrap()))
    }

    fn tensor(&mut self, rows: usize, cols: usize, what: &str) -> Result<Tensor2, CheckpointError> {
        let bytes = self.take(rows * cols * 8, what)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Tensor2::new(rows, cols, data))
    }

    fn param(&mut self, expected_name: &str) -> Result<Param, CheckpointError> {
        let len = self.u32("parameter name length")? as usize;
        if len > 256 {
            return Err(CheckpointError::Corrupt {
                what: format!("parameter name of {len} bytes"),
            });
        }
        let name = std::str::from_utf8(self.take(len, "parameter name")?).map_err(|_| {
            CheckpointError::Corrupt {
                what: "parameter name is not utf-8".to_string(),
            }
        })?;
        if name != expected_name {
            return Err(CheckpointError::Corrupt {
                what: format!("expected parameter {expected_name:?}, found {name:?}"),
            });
        }
        let rows = self.u64("rows")? as usize;
        let cols = self.u64("cols")? as usize;
        if rows.checked_mul(cols).map_or(true, |n| n > (1 << 28)) {
            return Err(CheckpointError::Corrupt {
                what: format!("implausible tensor shape {rows}x{cols}"),
            });
        }
        let trainable = match self.u8("trainable flag")? {
            0 => false,
            1 => true,
            other => {
                return Err(CheckpointError::Corrupt {
                    what: format!("trainable flag {other}"),
                })
            }
        };
        let steps = self.u64("step counter")?;
        let value = self.tensor(rows, cols, "parameter value")?;
        let first_moment = self.tensor(rows, cols, "first moment")?;
        let second_moment = self.tensor(rows, cols, "second moment")?;
        Ok(Param {
            value,
            grad: Tensor2::zeros(rows, cols),
            first_moment,
            second_moment,
            steps,
            trainable,
        })
    }
}

/// Reads and verifies a checkpoint.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let bytes = std::fs::read(path).map_err(|e| CheckpointError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    if bytes.len() < 32 + MAGIC.len() {
        return Err(CheckpointError::Corrupt {
            what: "file shorter than its own checksum".to_string(),
        });
    }
    let (body, stored) = bytes.split_at(bytes.len() - 32);
    let digest: [u8; 32] = Sha256::digest(body).into();
    if digest != stored {
        return Err(CheckpointError::Corrupt {
            what: "checksum mismatch".to_string(),
        });
    }
    let mut r = Reader { buf: body, pos: 0 };
    if r.take(MAGIC.len(), "magic")? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32("format version")?;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::Version {
            got: version,
            supported: FORMAT_VERSION,
        });
    }
    let config_hash: [u8; 32] = r.take(32, "config hash")?.try_into().unwrap();
    let seed: [u8; 32] = r.take(32, "rng seed")?.try_into().unwrap();
    let word_pos = r.u128("rng word position")?;
    let mut rng = Rng::from_seed(seed);
    rng.set_word_pos(word_pos);
    let dims = ModelDims {
        context_width: r.u64("context width")? as usize,
        feature_dim: r.u64("feature dim")? as usize,
        hidden: r.u64("hidden width")? as usize,
        vocab_size: r.u64("vocab size")? as usize,
    };
    let position = position_from_tag(r.u8("prompt position")?)?;
    let count = r.u32("parameter count")? as usize;
    if count != PARAM_ORDER.len() {
        return Err(CheckpointError::Corrupt {
            what: format!("expected {} parameters, found {count}", PARAM_ORDER.len()),
        });
    }
    let mut params: Vec<Param> = Vec::with_capacity(count);
    for name in PARAM_ORDER {
        params.push(r.param(name)?);
    }
    if r.pos != body.len() {
        return Err(CheckpointError::Corrupt {
            what: format!("{} trailing bytes", body.len() - r.pos),
        });
    }
    let mut it = params.into_iter();
    let model = ModelState {
        dims,
        position,
        projector_w: it.next().unwrap(),
        projector_b: it.next().unwrap(),
        token_embedding: it.next().unwrap(),
        query_embedding: it.next().unwrap(),
        query_linear: it.next().unwrap(),
        dec_w1: it.next().unwrap(),
        dec_b1: it.next().unwrap(),
        dec_w2: it.next().unwrap(),
        dec_b2: it.next().unwrap(),
    };
    let codebook = ToolCodebook {
        prompts: it.next().unwrap(),
    };
    Ok(Checkpoint {
        pipeline: Pipeline { model, codebook },
        rng,
        config_hash,
    })
}

/// Loads a checkpoint and insists it came from the given config.
pub fn load_matching(path: &Path, expected: &[u8; 32]) -> Result<Checkpoint, CheckpointError> {
    let ckpt = load_checkpoint(path)?;
    if &ckpt.config_hash != expected {
        return Err(CheckpointError::ConfigMismatch);
    }
    Ok(ckpt)
}
