use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute slack (relative to the region extent) below which an overlap
/// between a box and a cell is treated as touching only. Keeping it
/// independent of the resolution preserves monotonicity under refinement.
const OVERLAP_SLACK: f64 = 1e-10;

/// A set of cells of the uniform grid with `resolution` cells per axis over
/// the box `[lo, hi]`. Cells are indexed linearly with axis 0 fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSet {
    lo: Vec<f64>,
    hi: Vec<f64>,
    resolution: usize,
    cells: Vec<u64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct GridMeta {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub resolution: usize,
    pub cells: usize,
    pub volume: f64,
}

impl GridSet {
    pub fn empty(lo: Vec<f64>, hi: Vec<f64>, resolution: usize) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::Dimension("region bounds must have equal nonzero length".into()));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l.is_finite() && h.is_finite() && l < h)) {
            return Err(Error::Precondition("region must satisfy lo < hi on every axis".into()));
        }
        if !resolution.is_power_of_two() {
            return Err(Error::Precondition(format!("resolution {resolution} is not a power of two")));
        }
        if (resolution as f64).powi(lo.len() as i32) > 2f64.powi(40) {
            return Err(Error::Precondition("grid too large".into()));
        }
        Ok(GridSet { lo, hi, resolution, cells: Vec::new() })
    }

    pub fn full(lo: Vec<f64>, hi: Vec<f64>, resolution: usize) -> Result<Self> {
        let mut g = Self::empty(lo, hi, resolution)?;
        g.cells = (0..g.total_cells()).collect();
        Ok(g)
    }

    pub fn from_cells(lo: Vec<f64>, hi: Vec<f64>, resolution: usize, mut cells: Vec<u64>) -> Result<Self> {
        let mut g = Self::empty(lo, hi, resolution)?;
        cells.sort_unstable();
        cells.dedup();
        if cells.last().is_some_and(|&c| c >= g.total_cells()) {
            return Err(Error::IndexOutOfRange("cell index beyond the grid".into()));
        }
        g.cells = cells;
        Ok(g)
    }

    /// Cells containing the given points (points outside the region are
    /// ignored).
    pub fn from_points<'a>(
        lo: Vec<f64>,
        hi: Vec<f64>,
        resolution: usize,
        points: impl IntoIterator<Item = &'a [f64]>,
    ) -> Result<Self> {
        let g = Self::empty(lo, hi, resolution)?;
        let cells = points.into_iter().filter_map(|p| g.locate(p)).collect();
        g.with_cells(cells)
    }

    pub fn from_bitmap(&self, bits: &[bool]) -> Self {
        let cells = bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i as u64).collect();
        GridSet { lo: self.lo.clone(), hi: self.hi.clone(), resolution: self.resolution, cells }
    }

    /// Same grid, different cells.
    pub fn with_cells(&self, cells: Vec<u64>) -> Result<Self> {
        Self::from_cells(self.lo.clone(), self.hi.clone(), self.resolution, cells)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn cells(&self) -> &[u64] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn total_cells(&self) -> u64 {
        (self.resolution as u64).pow(self.dim() as u32)
    }

    pub fn cell_width(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / self.resolution as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|k| self.cell_width(k)).product()
    }

    pub fn volume(&self) -> f64 {
        self.cells.len() as f64 * self.cell_volume()
    }

    pub fn half_diagonal(&self) -> f64 {
        0.5 * (0..self.dim()).map(|k| self.cell_width(k).powi(2)).sum::<f64>().sqrt()
    }

    pub fn coords(&self, idx: u64) -> Vec<usize> {
        let r = self.resolution as u64;
        let mut rest = idx;
        (0..self.dim())
            .map(|_| {
                let c = (rest % r) as usize;
                rest /= r;
                c
            })
            .collect()
    }

    pub fn index(&self, coords: &[usize]) -> u64 {
        let r = self.resolution as u64;
        coords.iter().rev().fold(0u64, |acc, &c| acc * r + c as u64)
    }

    pub fn center(&self, idx: u64) -> Vec<f64> {
        self.coords(idx)
            .iter()
            .enumerate()
            .map(|(k, &c)| self.lo[k] + (c as f64 + 0.5) * self.cell_width(k))
            .collect()
    }

    pub fn cell_bounds(&self, idx: u64) -> (Vec<f64>, Vec<f64>) {
        let c = self.coords(idx);
        let lo = (0..self.dim()).map(|k| self.lo[k] + c[k] as f64 * self.cell_width(k)).collect();
        let hi = (0..self.dim()).map(|k| self.lo[k] + (c[k] + 1) as f64 * self.cell_width(k)).collect();
        (lo, hi)
    }

    /// Cell containing `p`, if `p` lies in the region.
    pub fn locate(&self, p: &[f64]) -> Option<u64> {
        let mut coords = Vec::with_capacity(self.dim());
        for (k, &x) in p.iter().enumerate() {
            if !(x >= self.lo[k] && x <= self.hi[k]) {
                return None;
            }
            let c = ((x - self.lo[k]) / self.cell_width(k)).floor() as usize;
            coords.push(c.min(self.resolution - 1));
        }
        Some(self.index(&coords))
    }

    pub fn contains_cell(&self, idx: u64) -> bool {
        self.cells.binary_search(&idx).is_ok()
    }

    pub fn contains_point(&self, p: &[f64]) -> bool {
        self.locate(p).is_some_and(|c| self.contains_cell(c))
    }

    pub fn bitmap(&self) -> Vec<bool> {
        let mut bits = vec![false; self.total_cells() as usize];
        for &c in &self.cells {
            bits[c as usize] = true;
        }
        bits
    }

    pub fn same_region(&self, other: &GridSet) -> bool {
        self.lo == other.lo && self.hi == other.hi
    }

    fn slack(&self) -> f64 {
        let extent = (0..self.dim()).map(|k| self.hi[k] - self.lo[k]).fold(1.0, f64::max);
        OVERLAP_SLACK * extent
    }

    /// Range of cell coordinates along `axis` overlapping `[l, h]` by more
    /// than the touching slack.
    pub fn axis_range(&self, axis: usize, l: f64, h: f64) -> Option<(usize, usize)> {
        let w = self.cell_width(axis);
        let tol = self.slack();
        let first = ((l + tol - self.lo[axis]) / w).floor();
        let last = ((h - tol - self.lo[axis]) / w).ceil() - 1.0;
        let first = first.max(0.0);
        let last = last.min(self.resolution as f64 - 1.0);
        if !(first <= last) {
            return None;
        }
        Some((first as usize, last as usize))
    }

    /// Calls `visit` on every grid cell overlapping the box `[lo, hi]` until
    /// it returns `true`; reports whether it did.
    pub fn any_cell_in_box(&self, lo: &[f64], hi: &[f64], mut visit: impl FnMut(u64) -> bool) -> bool {
        let d = self.dim();
        let mut ranges = Vec::with_capacity(d);
        for k in 0..d {
            match self.axis_range(k, lo[k], hi[k]) {
                Some(r) => ranges.push(r),
                None => return false,
            }
        }
        let mut cur: Vec<usize> = ranges.iter().map(|r| r.0).collect();
        loop {
            if visit(self.index(&cur)) {
                return true;
            }
            let mut k = 0;
            loop {
                if k == d {
                    return false;
                }
                if cur[k] < ranges[k].1 {
                    cur[k] += 1;
                    break;
                }
                cur[k] = ranges[k].0;
                k += 1;
            }
        }
    }

    /// The same set on a grid refined `2^levels` times per axis.
    pub fn refined(&self, levels: u32) -> Self {
        let f = 1usize << levels;
        let fine = GridSet { lo: self.lo.clone(), hi: self.hi.clone(), resolution: self.resolution * f, cells: vec![] };
        let d = self.dim();
        let mut cells = Vec::with_capacity(self.cells.len() * f.pow(d as u32));
        for &c in &self.cells {
            let base: Vec<usize> = self.coords(c).iter().map(|x| x * f).collect();
            for sub in 0..f.pow(d as u32) {
                let mut rest = sub;
                let coords: Vec<usize> = base
                    .iter()
                    .map(|b| {
                        let o = rest % f;
                        rest /= f;
                        b + o
                    })
                    .collect();
                cells.push(fine.index(&coords));
            }
        }
        cells.sort_unstable();
        GridSet { cells, ..fine }
    }

    /// Set inclusion of the represented regions (same region box required).
    pub fn is_subset_of(&self, other: &GridSet) -> Result<bool> {
        if !self.same_region(other) {
            return Err(Error::Precondition("grid sets live on different regions".into()));
        }
        if other.resolution > self.resolution {
            let levels = (other.resolution / self.resolution).trailing_zeros();
            return self.refined(levels).is_subset_of(other);
        }
        let f = self.resolution / other.resolution;
        Ok(self.cells.iter().all(|&c| {
            let coarse: Vec<usize> = self.coords(c).iter().map(|x| x / f).collect();
            other.contains_cell(other.index(&coarse))
        }))
    }

    pub fn metadata(&self) -> GridMeta {
        GridMeta {
            lo: self.lo.clone(),
            hi: self.hi.clone(),
            resolution: self.resolution,
            cells: self.cells.len(),
            volume: self.volume(),
        }
    }

    fn check_raster(&self) -> Result<()> {
        if self.dim() != 2 {
            return Err(Error::Precondition("rasters need a planar grid".into()));
        }
        if self.is_empty() {
            return Err(Error::Precondition("cannot render an empty grid set".into()));
        }
        Ok(())
    }

    /// Binary PGM: occupied cells black (0), others white (255); the top
    /// row is the largest second coordinate.
    pub fn to_pgm(&self) -> Result<Vec<u8>> {
        self.check_raster()?;
        let r = self.resolution;
        let mut out = format!("P5\n{r} {r}\n255\n").into_bytes();
        let mut pixels = vec![255u8; r * r];
        for &c in &self.cells {
            let xy = self.coords(c);
            pixels[(r - 1 - xy[1]) * r + xy[0]] = 0;
        }
        out.extend_from_slice(&pixels);
        Ok(out)
    }

    /// SVG with one rectangle per occupied cell, the region mapped onto a
    /// `size × size` viewport.
    pub fn to_svg(&self, size: f64) -> Result<String> {
        self.check_raster()?;
        let (sx, sy) = (size / (self.hi[0] - self.lo[0]), size / (self.hi[1] - self.lo[1]));
        let mut s = String::new();
        let _ = writeln!(
            s,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\" viewBox=\"0 0 {size} {size}\">"
        );
        let _ = writeln!(s, "<rect width=\"{size}\" height=\"{size}\" fill=\"white\"/>");
        let (w, h) = (self.cell_width(0) * sx, self.cell_width(1) * sy);
        for &c in &self.cells {
            let (lo, hi) = self.cell_bounds(c);
            let x = (lo[0] - self.lo[0]) * sx;
            let y = (self.hi[1] - hi[1]) * sy;
            let _ = writeln!(s, "<rect x=\"{x:.6}\" y=\"{y:.6}\" width=\"{w:.6}\" height=\"{h:.6}\" fill=\"black\"/>");
        }
        s.push_str("</svg>\n");
        Ok(s)
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_pgm()?)?;
        Ok(())
    }

    pub fn write_svg(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_svg(800.0)?)?;
        Ok(())
    }
}

/// Proximity queries against the occupied cell centres of a grid set with
/// a fixed radius `r`, via buckets of side `r`.
pub struct DistanceIndex<'a> {
    grid: &'a GridSet,
    radius: f64,
    bucket: f64,
    buckets: HashMap<u64, Vec<(u64, Vec<f64>)>>,
}

fn bucket_key(coords: impl Iterator<Item = i64>) -> u64 {
    coords.fold(0xcbf2_9ce4_8422_2325u64, |h, c| (h ^ c as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

impl<'a> DistanceIndex<'a> {
    /// Index answering "is some occupied centre within `radius`".
    pub fn with_radius(grid: &'a GridSet, radius: f64) -> Self {
        let min_w = (0..grid.dim()).map(|k| grid.cell_width(k)).fold(f64::INFINITY, f64::min);
        let bucket = radius.max(min_w);
        let mut buckets: HashMap<u64, Vec<(u64, Vec<f64>)>> = HashMap::new();
        for &c in grid.cells() {
            let ctr = grid.center(c);
            let key = bucket_key(ctr.iter().enumerate().map(|(k, x)| ((x - grid.lo[k]) / bucket).floor() as i64));
            buckets.entry(key).or_default().push((c, ctr));
        }
        DistanceIndex { grid, radius, bucket, buckets }
    }

    /// Index for `dist(p, set) ≤ eps`, where the distance to a grid set is
    /// the distance to the nearest occupied cell centre minus half the cell
    /// diagonal, clamped at zero.
    pub fn new(grid: &'a GridSet, eps: f64) -> Self {
        Self::with_radius(grid, eps + grid.half_diagonal())
    }

    pub fn grid(&self) -> &GridSet {
        self.grid
    }

    fn visit(&self, p: &[f64], mut f: impl FnMut(u64, f64) -> bool) -> bool {
        if p.iter().any(|x| !x.is_finite()) {
            return false;
        }
        let d = p.len();
        let base: Vec<i64> = p.iter().enumerate().map(|(k, x)| ((x - self.grid.lo[k]) / self.bucket).floor() as i64).collect();
        let r2 = self.radius * self.radius;
        for code in 0..3usize.pow(d as u32) {
            let mut c = code;
            let key = bucket_key((0..d).map(|k| {
                let off = (c % 3) as i64 - 1;
                c /= 3;
                base[k] + off
            }));
            if let Some(list) = self.buckets.get(&key) {
                for (idx, ctr) in list {
                    let dist2: f64 = ctr.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum();
                    if dist2 <= r2 && f(*idx, dist2) {
                        return true;
                    }
                }
            }
        }
        false
    }

    /// Whether some occupied centre lies within the radius of `p`.
    pub fn within(&self, p: &[f64]) -> bool {
        self.visit(p, |_, _| true)
    }

    /// Occupied cells whose centres lie within the radius of `p`, sorted.
    pub fn centers_near(&self, p: &[f64]) -> Vec<u64> {
        let mut out = Vec::new();
        self.visit(p, |idx, _| {
            out.push(idx);
            false
        });
        out.sort_unstable();
        out.dedup();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_roundtrip() {
        let g = GridSet::full(vec![-1.0, 0.0], vec![1.0, 4.0], 8).unwrap();
        for idx in [0u64, 7, 8, 63, 37] {
            assert_eq!(g.index(&g.coords(idx)), idx);
            assert_eq!(g.locate(&g.center(idx)), Some(idx));
        }
        assert_eq!(g.coords(9), vec![1, 1]);
        assert!((g.volume() - 8.0).abs() < 1e-12);
        assert!(GridSet::empty(vec![0.0], vec![1.0], 6).is_err());
    }

    #[test]
    fn axis_range_ignores_touching() {
        let g = GridSet::empty(vec![0.0], vec![1.0], 4).unwrap();
        assert_eq!(g.axis_range(0, 0.25, 0.5), Some((1, 1)));
        assert_eq!(g.axis_range(0, 0.2, 0.3), Some((0, 1)));
        assert_eq!(g.axis_range(0, 1.0, 2.0), None);
        assert_eq!(g.axis_range(0, -1.0, 0.1), Some((0, 0)));
    }

    #[test]
    fn refinement_and_inclusion() {
        let g = GridSet::from_cells(vec![0.0, 0.0], vec![1.0, 1.0], 2, vec![3]).unwrap();
        let f = g.refined(1);
        assert_eq!(f.cells(), &[10, 11, 14, 15]);
        assert!(f.is_subset_of(&g).unwrap());
        assert!(g.is_subset_of(&f).unwrap());
        let part = f.with_cells(vec![10]).unwrap();
        assert!(part.is_subset_of(&g).unwrap());
        assert!(!g.is_subset_of(&part).unwrap());
    }

    #[test]
    fn pgm_of_single_cell() {
        let g = GridSet::from_cells(vec![0.0, 0.0], vec![1.0, 1.0], 2, vec![2]).unwrap();
        let pgm = g.to_pgm().unwrap();
        let header = b"P5\n2 2\n255\n";
        assert_eq!(&pgm[..header.len()], header);
        let px = &pgm[header.len()..];
        assert_eq!(px.len(), 4);
        assert_eq!(px.iter().filter(|&&v| v == 0).count(), 1);
        // cell 2 is (x=0, y=1): top-left pixel
        assert_eq!(px[0], 0);
        let empty = g.with_cells(vec![]).unwrap();
        assert!(empty.to_pgm().is_err());
        assert!(g.to_svg(100.0).unwrap().matches("fill=\"black\"").count() == 1);
    }

    #[test]
    fn distance_index() {
        let g = GridSet::from_cells(vec![0.0, 0.0], vec![1.0, 1.0], 4, vec![0]).unwrap();
        let hd = g.half_diagonal();
        assert!(DistanceIndex::new(&g, 0.0).within(&[0.125, 0.125]));
        assert!(DistanceIndex::new(&g, 0.1 + 1e-12).within(&[0.125 + hd + 0.1, 0.125]));
        assert!(!DistanceIndex::new(&g, 0.099).within(&[0.125 + hd + 0.1, 0.125]));
        assert_eq!(DistanceIndex::with_radius(&g, 0.2).centers_near(&[0.2, 0.2]), vec![0]);
        let full = GridSet::full(vec![0.0, 0.0], vec![1.0, 1.0], 4).unwrap();
        assert_eq!(DistanceIndex::with_radius(&full, 0.2).centers_near(&[0.25, 0.25]), vec![0, 1, 4, 5]);
    }
}
