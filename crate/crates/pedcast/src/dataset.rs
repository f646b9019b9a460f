//! Supervised examples extracted from agent streams, and their on-disk
//! formats: a length-prefixed binary record stream plus a JSON export for
//! debugging.

use crate::binfmt;
use crate::error::{Error, Result};
use crate::features::{ModelInput, OccupancyPatch, SocialEntry, SocialVector};
use crate::math::Vec2;
use serde::{Deserialize, Serialize};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const DATASET_MAGIC: &[u8; 4] = b"PCDS";
const DATASET_VERSION: u16 = 1;

/// One supervised pair: model inputs at a tick and the ground-truth velocity
/// sequence observed afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub input: ModelInput,
    /// Ground-truth velocities at ticks `tick+1 ..= tick+target.len()`.
    pub target: Vec<Vec2>,
    pub agent_id: u64,
    pub tick: u64,
}

/// Consecutive examples of one agent, the training unit for truncated
/// backpropagation through time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleSequence {
    pub examples: Vec<Example>,
}

impl ExampleSequence {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

/// A labeled collection of example sequences.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dataset {
    pub label: String,
    pub sequences: Vec<ExampleSequence>,
}

impl Dataset {
    pub fn new(label: impl Into<String>) -> Self {
        Dataset {
            label: label.into(),
            sequences: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// Concatenation preserving order: `self`'s sequences first.
    pub fn union(&self, other: &Dataset) -> Dataset {
        let mut sequences = self.sequences.clone();
        sequences.extend(other.sequences.iter().cloned());
        Dataset {
            label: self.label.clone(),
            sequences,
        }
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        binfmt::write_magic(w, DATASET_MAGIC, DATASET_VERSION)?;
        binfmt::write_string(w, &self.label)?;
        binfmt::write_u32(w, self.sequences.len() as u32)?;
        for seq in &self.sequences {
            let mut record = Vec::new();
            write_sequence(&mut record, seq)?;
            binfmt::write_u32(w, record.len() as u32)?;
            w.write_all(&record)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let version = binfmt::read_magic(r, DATASET_MAGIC, "dataset")?;
        if version != DATASET_VERSION {
            return Err(Error::format(
                "dataset",
                format!("unsupported version {version}"),
            ));
        }
        let label = binfmt::read_string(r, "dataset")?;
        let n = binfmt::read_u32(r)? as usize;
        let mut sequences = Vec::with_capacity(n);
        for _ in 0..n {
            let len = binfmt::read_u32(r)? as usize;
            let mut record = vec![0u8; len];
            r.read_exact(&mut record)?;
            sequences.push(read_sequence(&mut record.as_slice())?);
        }
        Ok(Dataset { label, sequences })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut r)
    }

    /// Human-readable JSON export for debugging, not a stable interchange
    /// format.
    pub fn save_json(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(BufWriter::new(file), self)
            .map_err(|e| Error::format("dataset json", e.to_string()))?;
        Ok(())
    }
}

fn write_sequence(w: &mut impl Write, seq: &ExampleSequence) -> Result<()> {
    binfmt::write_u16(w, seq.examples.len() as u16)?;
    for ex in &seq.examples {
        binfmt::write_u64(w, ex.agent_id)?;
        binfmt::write_u64(w, ex.tick)?;
        binfmt::write_f64(w, ex.input.ego_velocity.x)?;
        binfmt::write_f64(w, ex.input.ego_velocity.y)?;
        binfmt::write_u16(w, ex.input.occ_patch.side as u16)?;
        binfmt::write_bits(w, &ex.input.occ_patch.cells)?;
        binfmt::write_u16(w, ex.input.social.entries.len() as u16)?;
        for e in &ex.input.social.entries {
            binfmt::write_f64_slice(w, &[e.rel_p.x, e.rel_p.y, e.rel_v.x, e.rel_v.y])?;
        }
        binfmt::write_u16(w, ex.target.len() as u16)?;
        for v in &ex.target {
            binfmt::write_f64(w, v.x)?;
            binfmt::write_f64(w, v.y)?;
        }
    }
    Ok(())
}

fn read_sequence(r: &mut impl Read) -> Result<ExampleSequence> {
    let n = binfmt::read_u16(r)? as usize;
    let mut examples = Vec::with_capacity(n);
    for _ in 0..n {
        let agent_id = binfmt::read_u64(r)?;
        let tick = binfmt::read_u64(r)?;
        let vx = binfmt::read_f64(r)?;
        let vy = binfmt::read_f64(r)?;
        let side = binfmt::read_u16(r)? as usize;
        let cells = binfmt::read_bits(r, side * side)?;
        let n_social = binfmt::read_u16(r)? as usize;
        let mut entries = Vec::with_capacity(n_social);
        for _ in 0..n_social {
            let vals = binfmt::read_f64_vec(r, 4)?;
            entries.push(SocialEntry {
                rel_p: Vec2::new(vals[0], vals[1]),
                rel_v: Vec2::new(vals[2], vals[3]),
            });
        }
        let n_target = binfmt::read_u16(r)? as usize;
        let mut target = Vec::with_capacity(n_target);
        for _ in 0..n_target {
            let x = binfmt::read_f64(r)?;
            let y = binfmt::read_f64(r)?;
            target.push(Vec2::new(x, y));
        }
        examples.push(Example {
            input: ModelInput {
                ego_velocity: Vec2::new(vx, vy),
                occ_patch: OccupancyPatch { side, cells },
                social: SocialVector { entries },
            },
            target,
            agent_id,
            tick,
        });
    }
    Ok(ExampleSequence { examples })
}
