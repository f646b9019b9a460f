//! World-frame state: tracked agents and the static occupancy map.

use crate::error::{Error, Result};
use crate::math::Vec2;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

/// Simulation tick length in seconds shared by every module.
pub const DEFAULT_TIME_STEP: f64 = 0.2;

/// One tracked pedestrian at one tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub id: u64,
    /// Position in meters, world frame.
    pub p: Vec2,
    /// Velocity in m/s, world frame.
    pub v: Vec2,
    /// Tick index (`DEFAULT_TIME_STEP` seconds apart).
    pub t: u64,
}

impl AgentState {
    pub fn new(id: u64, p: Vec2, v: Vec2, t: u64) -> Self {
        AgentState { id, p, v, t }
    }
}

/// Rectangular grid of occupied/free cells describing the static environment.
///
/// Cell `(row, col)` covers the world rectangle
/// `[origin + (col, row) * resolution, origin + (col+1, row+1) * resolution)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyMap {
    pub origin: Vec2,
    /// Meters per cell, > 0.
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
    cells: Vec<bool>,
}

impl OccupancyMap {
    /// All-free map of the given size.
    pub fn free(origin: Vec2, resolution: f64, width: usize, height: usize) -> Self {
        assert!(resolution > 0.0, "resolution must be positive");
        OccupancyMap {
            origin,
            resolution,
            width,
            height,
            cells: vec![false; width * height],
        }
    }

    pub fn cell(&self, row: usize, col: usize) -> bool {
        self.cells[row * self.width + col]
    }

    pub fn set_cell(&mut self, row: usize, col: usize, occupied: bool) {
        self.cells[row * self.width + col] = occupied;
    }

    /// Mark every cell whose center lies inside the axis-aligned rectangle.
    pub fn fill_rect(&mut self, min: Vec2, max: Vec2) {
        for row in 0..self.height {
            for col in 0..self.width {
                let c = self.cell_center(row, col);
                if c.x >= min.x && c.x < max.x && c.y >= min.y && c.y < max.y {
                    self.set_cell(row, col, true);
                }
            }
        }
    }

    pub fn cell_center(&self, row: usize, col: usize) -> Vec2 {
        self.origin + Vec2::new((col as f64 + 0.5) * self.resolution, (row as f64 + 0.5) * self.resolution)
    }

    /// Occupancy at a world point. Points outside the map are occupied by
    /// convention.
    pub fn occupied_at(&self, point: Vec2) -> bool {
        let rel = point - self.origin;
        if rel.x < 0.0 || rel.y < 0.0 {
            return true;
        }
        let col = (rel.x / self.resolution).floor() as usize;
        let row = (rel.y / self.resolution).floor() as usize;
        if col >= self.width || row >= self.height {
            return true;
        }
        self.cell(row, col)
    }

    /// Serialize as the plain-text map format: a header line
    /// `width height resolution origin_x origin_y` followed by `height` rows
    /// of `0`/`1` characters, row 0 first.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} {} {} {} {}",
            self.width, self.height, self.resolution, self.origin.x, self.origin.y
        );
        for row in 0..self.height {
            for col in 0..self.width {
                out.push(if self.cell(row, col) { '1' } else { '0' });
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::format("map file", "empty file"))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(Error::format(
                "map file",
                format!("header needs 5 fields, got {}", fields.len()),
            ));
        }
        let width: usize = fields[0]
            .parse()
            .map_err(|e| Error::format("map file", format!("width: {e}")))?;
        let height: usize = fields[1]
            .parse()
            .map_err(|e| Error::format("map file", format!("height: {e}")))?;
        let resolution: f64 = fields[2]
            .parse()
            .map_err(|e| Error::format("map file", format!("resolution: {e}")))?;
        let ox: f64 = fields[3]
            .parse()
            .map_err(|e| Error::format("map file", format!("origin_x: {e}")))?;
        let oy: f64 = fields[4]
            .parse()
            .map_err(|e| Error::format("map file", format!("origin_y: {e}")))?;
        if resolution <= 0.0 {
            return Err(Error::format("map file", "resolution must be > 0"));
        }
        let mut map = OccupancyMap::free(Vec2::new(ox, oy), resolution, width, height);
        for row in 0..height {
            let line = lines
                .next()
                .ok_or_else(|| Error::format("map file", format!("missing row {row}")))?;
            let chars: Vec<char> = line.trim_end().chars().collect();
            if chars.len() != width {
                return Err(Error::format(
                    "map file",
                    format!("row {row} has {} cells, expected {width}", chars.len()),
                ));
            }
            for (col, ch) in chars.iter().enumerate() {
                match ch {
                    '0' => {}
                    '1' => map.set_cell(row, col, true),
                    other => {
                        return Err(Error::format(
                            "map file",
                            format!("row {row} col {col}: unexpected character `{other}`"),
                        ))
                    }
                }
            }
        }
        Ok(map)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text)
    }

    /// Extract the boundary between occupied and free space as a set of
    /// maximal axis-aligned segments, in world coordinates. Edges on the map
    /// border are included only when the inside cell is occupied (the outside
    /// of the map counts as occupied, so free cells at the border produce no
    /// boundary there).
    pub fn boundary_segments(&self) -> Vec<Segment> {
        // Horizontal edges between (row-1, col) and (row, col), vertical edges
        // between (row, col-1) and (row, col). Only edges separating occupied
        // from free contribute.
        let mut segments = Vec::new();
        // Horizontal runs: for each horizontal grid line y = origin.y + row*res.
        for row in 0..=self.height {
            let mut run_start: Option<usize> = None;
            for col in 0..=self.width {
                let below = row > 0 && col < self.width && self.cell(row - 1, col);
                let above = row < self.height && col < self.width && self.cell(row, col);
                let is_edge = col < self.width && (below != above);
                match (is_edge, run_start) {
                    (true, None) => run_start = Some(col),
                    (false, Some(start)) => {
                        segments.push(self.h_segment(row, start, col));
                        run_start = None;
                    }
                    _ => {}
                }
            }
        }
        // Vertical runs.
        for col in 0..=self.width {
            let mut run_start: Option<usize> = None;
            for row in 0..=self.height {
                let left = col > 0 && row < self.height && self.cell(row, col - 1);
                let right = col < self.width && row < self.height && self.cell(row, col);
                let is_edge = row < self.height && (left != right);
                match (is_edge, run_start) {
                    (true, None) => run_start = Some(row),
                    (false, Some(start)) => {
                        segments.push(self.v_segment(col, start, row));
                        run_start = None;
                    }
                    _ => {}
                }
            }
        }
        segments
    }

    fn h_segment(&self, row: usize, col_start: usize, col_end: usize) -> Segment {
        let y = self.origin.y + row as f64 * self.resolution;
        Segment {
            a: Vec2::new(self.origin.x + col_start as f64 * self.resolution, y),
            b: Vec2::new(self.origin.x + col_end as f64 * self.resolution, y),
        }
    }

    fn v_segment(&self, col: usize, row_start: usize, row_end: usize) -> Segment {
        let x = self.origin.x + col as f64 * self.resolution;
        Segment {
            a: Vec2::new(x, self.origin.y + row_start as f64 * self.resolution),
            b: Vec2::new(x, self.origin.y + row_end as f64 * self.resolution),
        }
    }
}

/// A static obstacle boundary segment in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: Vec2,
    pub b: Vec2,
}

impl Segment {
    /// Closest point on the segment to `p`.
    pub fn closest_point(&self, p: Vec2) -> Vec2 {
        let ab = self.b - self.a;
        let len_sq = ab.norm_sq();
        if len_sq < 1e-18 {
            return self.a;
        }
        let t = ((p - self.a).dot(ab) / len_sq).clamp(0.0, 1.0);
        self.a + ab * t
    }

    pub fn distance_to(&self, p: Vec2) -> f64 {
        self.closest_point(p).dist(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut map = OccupancyMap::free(Vec2::new(-1.0, 2.0), 0.5, 4, 3);
        map.set_cell(1, 2, true);
        map.set_cell(0, 0, true);
        let text = map.to_text();
        let back = OccupancyMap::from_text(&text).unwrap();
        assert_eq!(map, back);
    }

    #[test]
    fn from_text_rejects_bad_rows() {
        let text = "3 2 0.5 0 0\n010\n01\n";
        assert!(OccupancyMap::from_text(text).is_err());
    }

    #[test]
    fn occupied_outside_map() {
        let map = OccupancyMap::free(Vec2::ZERO, 1.0, 2, 2);
        assert!(map.occupied_at(Vec2::new(-0.1, 0.5)));
        assert!(map.occupied_at(Vec2::new(2.1, 0.5)));
        assert!(!map.occupied_at(Vec2::new(0.5, 0.5)));
    }

    #[test]
    fn boundary_of_single_block() {
        // One occupied cell in the middle of a 3x3 free map: 4 segments of
        // length = resolution around it.
        let mut map = OccupancyMap::free(Vec2::ZERO, 1.0, 3, 3);
        map.set_cell(1, 1, true);
        let segs = map.boundary_segments();
        assert_eq!(segs.len(), 4);
        for s in &segs {
            assert!((s.a.dist(s.b) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn boundary_merges_collinear_edges() {
        // A 1x3 occupied strip: top and bottom edges merge into length-3 runs.
        let mut map = OccupancyMap::free(Vec2::ZERO, 1.0, 5, 3);
        for col in 1..4 {
            map.set_cell(1, col, true);
        }
        let segs = map.boundary_segments();
        let long: Vec<_> = segs.iter().filter(|s| s.a.dist(s.b) > 2.5).collect();
        assert_eq!(long.len(), 2);
        assert_eq!(segs.len(), 4);
    }

    #[test]
    fn segment_closest_point() {
        let s = Segment {
            a: Vec2::new(0.0, 0.0),
            b: Vec2::new(2.0, 0.0),
        };
        assert_eq!(s.closest_point(Vec2::new(1.0, 1.0)), Vec2::new(1.0, 0.0));
        assert_eq!(s.closest_point(Vec2::new(-1.0, 1.0)), Vec2::new(0.0, 0.0));
        assert!((s.distance_to(Vec2::new(3.0, 0.0)) - 1.0).abs() < 1e-12);
    }
}
