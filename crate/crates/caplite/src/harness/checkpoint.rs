//! Binary model persistence: magic, format version, a config echo, then
//! named tensors in registration order. All integers and reals are
//! little-endian; tensor data is 32-bit, row-major.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{AttentionMode, BottleneckMode, Model, ModelConfig};
use crate::numerics::Tensor2D;

const MAGIC: &[u8; 4] = b"CGRU";
const VERSION: u16 = 1;

fn corrupt(path: &Path, reason: impl Into<String>) -> Error {
    Error::Checkpoint {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

fn push_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn write_config(out: &mut Vec<u8>, c: &ModelConfig) {
    push_u32(out, c.d);
    push_u32(out, c.h);
    push_u32(out, c.v_dim);
    push_u32(out, c.vocab_size);
    out.push(match c.attention_mode {
        AttentionMode::Pooled => 0,
        AttentionMode::Mha => 1,
    });
    push_u32(out, c.mha_heads);
    match c.mha_dq {
        None => {
            out.push(0);
            push_u32(out, 0);
        }
        Some(dq) => {
            out.push(1);
            push_u32(out, dq);
        }
    }
    push_u32(out, c.mha_kv_rows);
    push_u32(out, c.mha_kv_dim);
    out.push(match c.bottleneck_mode {
        BottleneckMode::Linear => 0,
        BottleneckMode::DeepGru => 1,
    });
    out.push(c.tie_weights as u8);
    push_u32(out, c.max_len);
    out.extend_from_slice(&c.dropout_p.to_le_bytes());
    push_u32(out, c.width_multiplier);
}

/// Sequential little-endian reader that reports truncation as corruption.
struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(corrupt(
                self.path,
                format!(
                    "unexpected end of file at byte {} (wanted {} more)",
                    self.pos, n
                ),
            ));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<usize> {
        let b: [u8; 4] = self.take(4)?.try_into().unwrap();
        Ok(u32::from_le_bytes(b) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn read_config(r: &mut Reader<'_>) -> Result<ModelConfig> {
    let d = r.u32()?;
    let h = r.u32()?;
    let v_dim = r.u32()?;
    let vocab_size = r.u32()?;
    let attention_mode = match r.u8()? {
        0 => AttentionMode::Pooled,
        1 => AttentionMode::Mha,
        other => return Err(corrupt(r.path, format!("bad attention mode tag {other}"))),
    };
    let mha_heads = r.u32()?;
    let dq_flag = r.u8()?;
    let dq_value = r.u32()?;
    let mha_dq = match dq_flag {
        0 => None,
        1 => Some(dq_value),
        other => return Err(corrupt(r.path, format!("bad query-width tag {other}"))),
    };
    let mha_kv_rows = r.u32()?;
    let mha_kv_dim = r.u32()?;
    let bottleneck_mode = match r.u8()? {
        0 => BottleneckMode::Linear,
        1 => BottleneckMode::DeepGru,
        other => return Err(corrupt(r.path, format!("bad bottleneck tag {other}"))),
    };
    let tie_weights = match r.u8()? {
        0 => false,
        1 => true,
        other => return Err(corrupt(r.path, format!("bad tie flag {other}"))),
    };
    let max_len = r.u32()?;
    let dropout_p = r.f64()?;
    let width_multiplier = r.u32()?;
    Ok(ModelConfig {
        d,
        h,
        v_dim,
        vocab_size,
        attention_mode,
        mha_heads,
        mha_dq,
        mha_kv_rows,
        mha_kv_dim,
        bottleneck_mode,
        tie_weights,
        max_len,
        dropout_p,
        width_multiplier,
    })
}

/// Serialize the model to `path`.
pub fn checkpoint_save(model: &Model<f32>, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    write_config(&mut out, &model.config);
    let tensors: Vec<_> = model.params.iter().collect();
    push_u32(&mut out, tensors.len());
    for p in tensors {
        push_u32(&mut out, p.name.len());
        out.extend_from_slice(p.name.as_bytes());
        push_u32(&mut out, p.value.rows());
        push_u32(&mut out, p.value.cols());
        for &v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Load a checkpoint saved for exactly `config`; every tensor name and
/// shape is validated against the freshly built parameter set.
pub fn checkpoint_load(path: &Path, config: &ModelConfig) -> Result<Model<f32>> {
    let bytes = fs::read(path)?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
        path,
    };
    if r.take(4)? != MAGIC {
        return Err(corrupt(path, "bad magic; not a checkpoint file"));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(corrupt(
            path,
            format!("format version {version}, expected {VERSION}"),
        ));
    }
    let stored = read_config(&mut r)?;
    if &stored != config {
        return Err(corrupt(
            path,
            format!("checkpoint config {stored:?} does not match requested {config:?}"),
        ));
    }

    let count = r.u32()?;
    let mut tensors: BTreeMap<String, Tensor2D<f32>> = BTreeMap::new();
    for _ in 0..count {
        let name_len = r.u32()?;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| corrupt(path, "tensor name is not UTF-8"))?
            .to_string();
        let rows = r.u32()?;
        let cols = r.u32()?;
        let remaining = (bytes.len() - r.pos) / 4;
        if rows.saturating_mul(cols) > remaining {
            return Err(corrupt(
                path,
                format!("tensor {name} claims {rows}x{cols} but the file is too short"),
            ));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            let b: [u8; 4] = r.take(4)?.try_into().unwrap();
            data.push(f32::from_le_bytes(b));
        }
        let tensor = Tensor2D::from_vec(rows, cols, data)?;
        if tensors.insert(name.clone(), tensor).is_some() {
            return Err(corrupt(path, format!("duplicate tensor {name}")));
        }
    }
    if r.pos != bytes.len() {
        return Err(corrupt(
            path,
            format!(
                "{} trailing bytes after the last tensor",
                bytes.len() - r.pos
            ),
        ));
    }

    let mut model: Model<f32> = Model::new(config.clone(), 0)?;
    let expected = model.params.iter().count();
    if tensors.len() != expected {
        return Err(corrupt(
            path,
            format!("{} tensors stored, model needs {expected}", tensors.len()),
        ));
    }
    for p in model.params.iter_mut() {
        let stored = tensors
            .get(&p.name)
            .ok_or_else(|| corrupt(path, format!("missing tensor {}", p.name)))?;
        if stored.shape() != p.value.shape() {
            return Err(corrupt(
                path,
                format!(
                    "tensor {} is {}x{}, model needs {}x{}",
                    p.name,
                    stored.rows(),
                    stored.cols(),
                    p.value.rows(),
                    p.value.cols()
                ),
            ));
        }
        p.value = stored.clone();
    }
    Ok(model)
}
