//! Versioned binary checkpoints: the architecture config followed by
//! per-tensor records (name, shape, raw little-endian `f64` values). Loading
//! validates every shape against the embedded config.

use super::{ModelConfig, ParamVector};
use crate::binfmt;
use crate::error::{Error, Result};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const CHECKPOINT_MAGIC: &[u8; 4] = b"PCCK";
const CHECKPOINT_VERSION: u16 = 1;

pub fn write_config(w: &mut impl Write, cfg: &ModelConfig) -> Result<()> {
    for v in [
        cfg.patch_cells,
        cfg.n_social,
        cfg.enc_vel,
        cfg.enc_occ,
        cfg.enc_soc,
        cfg.hidden,
        cfg.pred_steps,
    ] {
        binfmt::write_u32(w, v as u32)?;
    }
    Ok(())
}

pub fn read_config(r: &mut impl Read) -> Result<ModelConfig> {
    let mut vals = [0usize; 7];
    for v in &mut vals {
        *v = binfmt::read_u32(r)? as usize;
    }
    Ok(ModelConfig {
        patch_cells: vals[0],
        n_social: vals[1],
        enc_vel: vals[2],
        enc_occ: vals[3],
        enc_soc: vals[4],
        hidden: vals[5],
        pred_steps: vals[6],
    })
}

/// Write the parameter tensors (without the file header); shared by
/// checkpoints and anchor files.
pub fn write_params(w: &mut impl Write, theta: &ParamVector) -> Result<()> {
    write_config(w, theta.cfg())?;
    let tensors = theta.tensors();
    binfmt::write_u16(w, tensors.len() as u16)?;
    for t in &tensors {
        binfmt::write_string(w, t.name)?;
        binfmt::write_u32(w, t.rows as u32)?;
        binfmt::write_u32(w, t.cols as u32)?;
        binfmt::write_f64_slice(w, &theta.data()[t.offset..t.offset + t.rows * t.cols])?;
    }
    Ok(())
}

pub fn read_params(r: &mut impl Read) -> Result<ParamVector> {
    let cfg = read_config(r)?;
    let mut theta = ParamVector::zeros(cfg);
    let expected = theta.tensors();
    let count = binfmt::read_u16(r)? as usize;
    if count != expected.len() {
        return Err(Error::ShapeMismatch {
            context: "checkpoint tensor count",
            expected: expected.len(),
            actual: count,
        });
    }
    for t in &expected {
        let name = binfmt::read_string(r, "checkpoint")?;
        if name != t.name {
            return Err(Error::format(
                "checkpoint",
                format!("tensor `{name}` where `{}` was expected", t.name),
            ));
        }
        let rows = binfmt::read_u32(r)? as usize;
        let cols = binfmt::read_u32(r)? as usize;
        if rows != t.rows || cols != t.cols {
            return Err(Error::ShapeMismatch {
                context: "checkpoint tensor",
                expected: t.rows * t.cols,
                actual: rows * cols,
            });
        }
        let values = binfmt::read_f64_vec(r, rows * cols)?;
        theta.data_mut()[t.offset..t.offset + rows * cols].copy_from_slice(&values);
    }
    Ok(theta)
}

pub fn save_checkpoint(path: &Path, theta: &ParamVector) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    binfmt::write_magic(&mut w, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)?;
    write_params(&mut w, theta)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ParamVector> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let version = binfmt::read_magic(&mut r, CHECKPOINT_MAGIC, "checkpoint")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(
            "checkpoint",
            format!("unsupported version {version}"),
        ));
    }
    read_params(&mut r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("theta.ckpt");
        let mut rng = stream_rng(9, Stream::Init, 0);
        let theta = ParamVector::random(ModelConfig::tiny(), &mut rng);
        save_checkpoint(&path, &theta).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(theta, back);
    }

    #[test]
    fn shape_tampering_is_detected() {
        let mut rng = stream_rng(10, Stream::Init, 0);
        let theta = ParamVector::random(ModelConfig::tiny(), &mut rng);
        let mut buf = Vec::new();
        write_params(&mut buf, &theta).unwrap();
        // Corrupt the rows field of the first tensor (after the 7-field
        // config, the tensor count, and the name record).
        let name_len = 2 + "enc_vel.w".len();
        let rows_at = 7 * 4 + 2 + name_len;
        buf[rows_at] = buf[rows_at].wrapping_add(1);
        assert!(read_params(&mut buf.as_slice()).is_err());
    }
}
