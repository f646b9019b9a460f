//! Model input construction: social vectors, occupancy patches and the
//! three-stream input bundle.

use crate::error::{Error, Result};
use crate::math::Vec2;
use crate::world::{AgentState, OccupancyMap};
use serde::{Deserialize, Serialize};

/// Feature construction parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Patch side length in cells (`G`).
    pub patch_cells: usize,
    /// Meters per patch cell.
    pub patch_resolution: f64,
    /// Number of neighbor records in a social vector.
    pub n_social: usize,
    /// When true, a scene with no neighbors yields an all-zero social vector
    /// instead of an error.
    pub allow_lone_agent: bool,
    /// Speed cap in m/s used by the simulators and state validation.
    pub v_max: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        // 3.2 m x 3.2 m window around the query agent; environments carry six
        // agents in the sparse setting, so five neighbor slots see them all.
        FeatureConfig {
            patch_cells: 32,
            patch_resolution: 0.1,
            n_social: 5,
            allow_lone_agent: true,
            v_max: 2.5,
        }
    }
}

/// A fixed `G x G` binary window of the static environment centered on the
/// query agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyPatch {
    pub side: usize,
    /// Row-major occupancy bits, `side * side` entries.
    pub cells: Vec<bool>,
}

impl OccupancyPatch {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }
}

/// One neighbor record relative to the query agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SocialEntry {
    pub rel_p: Vec2,
    pub rel_v: Vec2,
}

impl SocialEntry {
    pub const ZERO: SocialEntry = SocialEntry {
        rel_p: Vec2::ZERO,
        rel_v: Vec2::ZERO,
    };
}

/// Relative neighbor records sorted by distance, padded or truncated to a
/// fixed length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocialVector {
    pub entries: Vec<SocialEntry>,
}

/// The three input streams consumed by the prediction model at one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInput {
    pub ego_velocity: Vec2,
    pub occ_patch: OccupancyPatch,
    pub social: SocialVector,
}

/// Relative records of the `n_social` nearest neighbors, sorted ascending by
/// Euclidean distance. With fewer neighbors than slots the nearest record is
/// repeated; with none, behavior is governed by `allow_lone_agent`.
pub fn build_social_vector(
    query: &AgentState,
    others: &[AgentState],
    n_social: usize,
    allow_lone_agent: bool,
) -> Result<SocialVector> {
    let mut records: Vec<(f64, SocialEntry)> = others
        .iter()
        .filter(|o| o.id != query.id)
        .map(|o| {
            let rel_p = o.p - query.p;
            let rel_v = o.v - query.v;
            (rel_p.norm(), SocialEntry { rel_p, rel_v })
        })
        .collect();

    if records.is_empty() {
        if allow_lone_agent {
            log::warn!("agent {} has no neighbors; emitting zero social vector", query.id);
            return Ok(SocialVector {
                entries: vec![SocialEntry::ZERO; n_social],
            });
        }
        return Err(Error::LoneAgent);
    }

    // Distance sort with a deterministic tie-break so the result does not
    // depend on the order of `others`.
    records.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| {
                (a.1.rel_p.x, a.1.rel_p.y, a.1.rel_v.x, a.1.rel_v.y)
                    .partial_cmp(&(b.1.rel_p.x, b.1.rel_p.y, b.1.rel_v.x, b.1.rel_v.y))
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
    });

    // Pad with copies of the nearest record, keeping entries sorted by
    // distance: padding goes in front where the duplicates tie the minimum.
    let deficit = n_social.saturating_sub(records.len());
    let mut entries = Vec::with_capacity(n_social);
    entries.extend(std::iter::repeat(records[0].1).take(deficit));
    entries.extend(records.iter().take(n_social - deficit).map(|r| r.1));
    Ok(SocialVector { entries })
}

/// Sample a `G x G` window of the map centered on `center`. Each patch cell
/// samples the map at the cell's world center; coordinates outside the map
/// read as occupied.
pub fn extract_occupancy_patch(
    map: &OccupancyMap,
    center: Vec2,
    patch_cells: usize,
    patch_resolution: f64,
) -> OccupancyPatch {
    let g = patch_cells;
    let half = g as f64 / 2.0;
    let mut cells = Vec::with_capacity(g * g);
    for row in 0..g {
        for col in 0..g {
            let offset = Vec2::new(
                (col as f64 + 0.5 - half) * patch_resolution,
                (row as f64 + 0.5 - half) * patch_resolution,
            );
            cells.push(map.occupied_at(center + offset));
        }
    }
    OccupancyPatch { side: g, cells }
}

/// Compose the three input streams for `query` at one tick.
pub fn assemble_input(
    query: &AgentState,
    others: &[AgentState],
    map: &OccupancyMap,
    cfg: &FeatureConfig,
) -> Result<ModelInput> {
    Ok(ModelInput {
        ego_velocity: query.v,
        occ_patch: extract_occupancy_patch(map, query.p, cfg.patch_cells, cfg.patch_resolution),
        social: build_social_vector(query, others, cfg.n_social, cfg.allow_lone_agent)?,
    })
}
