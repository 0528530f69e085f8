//! `AECK` checkpoint files.
//!
//! Little-endian layout:
//!
//! ```text
//! "AECK" | version u8 = 1 | mode u8 | dim count u32 | dims u32 × count
//! | mu f64 | sigma f64 | rng seed u64
//! | parameters f64 (canonical order W1, b1, …, V_L, c_L)
//! | adam flag u8 | [step u64 | m f64… | v f64…]
//! ```
//!
//! `dims` is the encoder chain `[input, hidden…, latent]` in total widths;
//! the decoder mirrors it.

use std::path::Path;

use super::adam::AdamState;
use super::arch::{ArchMode, Architecture};
use super::model::AutoencoderModel;
use crate::bytes::{put_f64s, LeReader};
use crate::error::{Error, Result};
use crate::tensorize::NormStats;

const MAGIC: &[u8; 4] = b"AECK";
const VERSION: u8 = 1;

pub fn checkpoint_to_bytes(model: &AutoencoderModel, adam: Option<&AdamState>) -> Vec<u8> {
    let chain = model.arch.chain();
    let n_params = model.arch.parameter_count();
    let adam_len = adam.map_or(0, |_| 8 + 16 * n_params);
    let mut out =
        Vec::with_capacity(4 + 2 + 4 + 4 * chain.len() + 24 + 8 * n_params + 1 + adam_len);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(model.arch.mode.as_byte());
    out.extend_from_slice(&(chain.len() as u32).to_le_bytes());
    for d in &chain {
        out.extend_from_slice(&(*d as u32).to_le_bytes());
    }
    out.extend_from_slice(&model.norm.mu.to_le_bytes());
    out.extend_from_slice(&model.norm.sigma.to_le_bytes());
    out.extend_from_slice(&model.rng_seed.to_le_bytes());
    for b in model.buffers() {
        put_f64s(&mut out, b);
    }
    match adam {
        None => out.push(0),
        Some(st) => {
            out.push(1);
            out.extend_from_slice(&st.step.to_le_bytes());
            for m in &st.m {
                put_f64s(&mut out, m);
            }
            for v in &st.v {
                put_f64s(&mut out, v);
            }
        }
    }
    out
}

pub fn checkpoint_from_bytes(buf: &[u8]) -> Result<(AutoencoderModel, Option<AdamState>)> {
    let mut r = LeReader::new(buf);
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::format(
            0,
            format!("bad magic {magic:?}, expected \"AECK\""),
        ));
    }
    let version = r.u8("version")?;
    if version != VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let mode_at = r.offset();
    let mode = ArchMode::from_byte(r.u8("mode")?)
        .ok_or_else(|| Error::format(mode_at, "unknown architecture mode"))?;
    let count_at = r.offset();
    let count = r.u32("dim count")? as usize;
    if !(2..=64).contains(&count) {
        return Err(Error::format(
            count_at,
            format!("implausible dim count {count}"),
        ));
    }
    let mut chain = Vec::with_capacity(count);
    for _ in 0..count {
        chain.push(r.u32("layer dim")? as usize);
    }
    let arch = Architecture::new(
        mode,
        chain[0],
        chain[1..count - 1].to_vec(),
        chain[count - 1],
    )
    .map_err(|e| Error::format(count_at, e.to_string()))?;

    let norm_at = r.offset();
    let mu = r.f64("mu")?;
    let sigma = r.f64("sigma")?;
    let norm = NormStats::new(mu, sigma).map_err(|e| Error::format(norm_at, e.to_string()))?;
    let seed = r.u64("rng seed")?;

    let n_params = arch.parameter_count();
    if r.remaining() < 8 * n_params + 1 {
        return Err(Error::format(
            r.offset(),
            format!(
                "size mismatch: {} parameters need {} bytes, {} left",
                n_params,
                8 * n_params + 1,
                r.remaining()
            ),
        ));
    }
    let mut model = AutoencoderModel::zeros(arch, norm)?;
    model.rng_seed = seed;
    for b in model.buffers_mut() {
        r.f64_into(b, "parameters")?;
    }

    let flag_at = r.offset();
    let adam = match r.u8("adam flag")? {
        0 => None,
        1 => {
            let mut st = AdamState::for_buffers(&model.buffers());
            st.step = r.u64("adam step")?;
            for m in &mut st.m {
                r.f64_into(m, "adam m")?;
            }
            for v in &mut st.v {
                r.f64_into(v, "adam v")?;
            }
            Some(st)
        }
        other => return Err(Error::format(flag_at, format!("bad adam flag {other}"))),
    };
    if r.remaining() != 0 {
        return Err(Error::format(
            r.offset(),
            format!("{} trailing bytes", r.remaining()),
        ));
    }
    Ok((model, adam))
}

pub fn save_checkpoint(
    model: &AutoencoderModel,
    adam: Option<&AdamState>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, checkpoint_to_bytes(model, adam)).map_err(Error::file(path))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(AutoencoderModel, Option<AdamState>)> {
    let path = path.as_ref();
    let buf = std::fs::read(path).map_err(Error::file(path))?;
    checkpoint_from_bytes(&buf)
}

/// File size of a checkpoint for `arch`.
pub fn checkpoint_size(arch: &Architecture, with_adam: bool) -> usize {
    let n = arch.parameter_count();
    4 + 1 + 1 + 4 + 4 * (arch.depth() + 1) + 24 + 8 * n + 1 + if with_adam { 8 + 16 * n } else { 0 }
}
