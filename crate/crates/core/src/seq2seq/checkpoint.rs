//! Binary checkpoints. Everything is little-endian:
//!
//! ```text
//! magic        8 bytes  "LSHS2S\0\x01"
//! version      u32      1
//! layers       u32
//! hidden       u32
//! embedding    u32
//! config echo  u64 epochs, u64 batch_size, f64 learning_rate, u64 seed,
//!              f64 clip_norm, f64 init_scale, u64 plateau_patience,
//!              u8 parallel
//! source vocab u32 count, then per token: u32 byte length, UTF-8 bytes
//! target vocab same encoding; must equal the fixed 14-token list
//! blocks       u32 count, then per block: u32 name length, name,
//!              u32 rows, u32 cols, rows*cols f64 in row-major order
//! ```

use std::path::Path;

use super::model::{Layout, ModelShape, Seq2SeqModel};
use super::train::TrainConfig;
use super::vocab::{Vocab, TARGET_TOKENS};
use super::ModelError;

pub const MAGIC: [u8; 8] = *b"LSHS2S\0\x01";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Seq2SeqModel,
    pub config: TrainConfig,
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

pub fn to_bytes(model: &Seq2SeqModel, config: &TrainConfig) -> Vec<u8> {
    let shape = model.shape();
    let mut out = Vec::with_capacity(64 + model.params().len() * 8);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_u32(&mut out, shape.layers);
    put_u32(&mut out, shape.hidden);
    put_u32(&mut out, shape.embedding);
    out.extend_from_slice(&(config.epochs as u64).to_le_bytes());
    out.extend_from_slice(&(config.batch_size as u64).to_le_bytes());
    out.extend_from_slice(&config.learning_rate.to_le_bytes());
    out.extend_from_slice(&config.seed.to_le_bytes());
    out.extend_from_slice(&config.clip_norm.to_le_bytes());
    out.extend_from_slice(&config.init_scale.to_le_bytes());
    out.extend_from_slice(&(config.plateau_patience as u64).to_le_bytes());
    out.push(config.parallel as u8);
    let source = model.vocab().source_tokens();
    put_u32(&mut out, source.len());
    for t in source {
        put_str(&mut out, t);
    }
    put_u32(&mut out, TARGET_TOKENS.len());
    for t in TARGET_TOKENS {
        put_str(&mut out, t);
    }
    let blocks = model.layout().named_blocks();
    put_u32(&mut out, blocks.len());
    for (name, block) in blocks {
        put_str(&mut out, &name);
        put_u32(&mut out, block.rows);
        put_u32(&mut out, block.cols);
        for v in &model.params()[block.range()] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| ModelError::Format(format!("truncated checkpoint at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], ModelError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<usize, ModelError> {
        Ok(u32::from_le_bytes(self.array()?) as usize)
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64, ModelError> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn string(&mut self) -> Result<String, ModelError> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| ModelError::Format("token is not UTF-8".into()))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint, ModelError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(ModelError::Format("not a seq2seq checkpoint (bad magic)".into()));
    }
    let version = r.u32()? as u32;
    if version != VERSION {
        return Err(ModelError::Format(format!("unsupported checkpoint version {version}")));
    }
    let (layers, hidden, embedding) = (r.u32()?, r.u32()?, r.u32()?);
    let config = TrainConfig {
        epochs: r.u64()? as usize,
        batch_size: r.u64()? as usize,
        learning_rate: r.f64()?,
        seed: r.u64()?,
        clip_norm: r.f64()?,
        init_scale: r.f64()?,
        plateau_patience: r.u64()? as usize,
        parallel: r.take(1)?[0] != 0,
        layers,
        hidden,
        embedding,
    };
    let n_source = r.u32()?;
    let source = (0..n_source).map(|_| r.string()).collect::<Result<Vec<_>, _>>()?;
    let vocab = Vocab::from_ordered(source)?;
    let n_target = r.u32()?;
    let target = (0..n_target).map(|_| r.string()).collect::<Result<Vec<_>, _>>()?;
    if target != TARGET_TOKENS {
        return Err(ModelError::Format("target vocabulary differs from the fixed token list".into()));
    }
    let shape = ModelShape {
        source_vocab: vocab.source_size(),
        layers,
        hidden,
        embedding,
    };
    shape.validate()?;
    let expected = Layout::new(&shape).named_blocks();
    let n_blocks = r.u32()?;
    if n_blocks != expected.len() {
        return Err(ModelError::Shape(format!("expected {} blocks, found {n_blocks}", expected.len())));
    }
    let mut params = Vec::new();
    for (name, block) in expected {
        let found = r.string()?;
        let (rows, cols) = (r.u32()?, r.u32()?);
        if found != name || rows != block.rows || cols != block.cols {
            return Err(ModelError::Shape(format!(
                "block `{found}` is {rows}x{cols}, expected `{name}` {}x{}",
                block.rows, block.cols
            )));
        }
        for _ in 0..block.len() {
            params.push(r.f64()?);
        }
    }
    if r.pos != bytes.len() {
        return Err(ModelError::Format("trailing bytes after last block".into()));
    }
    let model = Seq2SeqModel::from_parts(vocab, shape, params)?;
    Ok(Checkpoint { model, config })
}

pub fn save(path: &Path, model: &Seq2SeqModel, config: &TrainConfig) -> Result<(), ModelError> {
    std::fs::write(path, to_bytes(model, config)).map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))
}

pub fn load(path: &Path) -> Result<Checkpoint, ModelError> {
    let bytes = std::fs::read(path).map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))?;
    from_bytes(&bytes)
}
