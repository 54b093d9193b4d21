use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Control = DVector<f64>;

/// Admissible control values `U`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ControlRange {
    /// Axis-aligned box `lo ≤ u ≤ hi`.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Euclidean ball `‖u‖ ≤ radius` centred at the origin.
    Ball { dim: usize, radius: f64 },
}

impl ControlRange {
    pub fn symmetric_box(dim: usize, half_width: f64) -> Self {
        ControlRange::Box {
            lo: vec![-half_width; dim],
            hi: vec![half_width; dim],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ControlRange::Box { lo, .. } => lo.len(),
            ControlRange::Ball { dim, .. } => *dim,
        }
    }

    /// Membership with an absolute slack `tol`.
    pub fn contains(&self, u: &[f64], tol: f64) -> bool {
        if u.len() != self.dim() {
            return false;
        }
        match self {
            ControlRange::Box { lo, hi } => u
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(v, (l, h))| *v >= l - tol && *v <= h + tol),
            ControlRange::Ball { radius, .. } => {
                u.iter().map(|v| v * v).sum::<f64>().sqrt() <= radius + tol
            }
        }
    }

    pub fn check(&self, u: &[f64]) -> Result<()> {
        if self.contains(u, 1e-12) {
            Ok(())
        } else {
            Err(Error::ControlOutOfRange { control: u.to_vec() })
        }
    }

    pub fn center(&self) -> Control {
        match self {
            ControlRange::Box { lo, hi } => {
                DVector::from_iterator(lo.len(), lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)))
            }
            ControlRange::Ball { dim, .. } => DVector::zeros(*dim),
        }
    }

    /// Nearest admissible control (clamping for boxes, radial scaling for
    /// balls).
    pub fn project(&self, u: &Control) -> Control {
        match self {
            ControlRange::Box { lo, hi } => {
                DVector::from_iterator(u.len(), u.iter().zip(lo.iter().zip(hi)).map(|(v, (l, h))| v.clamp(*l, *h)))
            }
            ControlRange::Ball { radius, .. } => {
                let n = u.norm();
                if n <= *radius {
                    u.clone()
                } else if *radius == 0.0 {
                    u * 0.0
                } else {
                    u * (radius / n)
                }
            }
        }
    }

    /// Quantized control values used by the set-valued grid operations:
    /// the centre, the extremes along each axis, and the corners (diagonals
    /// for balls). In two dimensions this is the 9-point stencil; duplicates
    /// (degenerate ranges) are removed.
    pub fn stencil(&self) -> Vec<Control> {
        let m = self.dim();
        let c = self.center();
        let (half, diag): (Vec<f64>, Vec<f64>) = match self {
            ControlRange::Box { lo, hi } => {
                let h: Vec<f64> = lo.iter().zip(hi).map(|(l, h)| 0.5 * (h - l)).collect();
                (h.clone(), h)
            }
            ControlRange::Ball { radius, .. } => {
                (vec![*radius; m], vec![radius / (m as f64).sqrt(); m])
            }
        };
        let mut out = vec![c.clone()];
        for k in 0..m {
            for s in [-1.0, 1.0] {
                let mut u = c.clone();
                u[k] += s * half[k];
                out.push(u);
            }
        }
        if m > 1 {
            for mask in 0..(1usize << m) {
                let mut u = c.clone();
                for k in 0..m {
                    let s = if mask & (1 << k) != 0 { 1.0 } else { -1.0 };
                    u[k] += s * diag[k];
                }
                out.push(u);
            }
        }
        let mut uniq: Vec<Control> = Vec::with_capacity(out.len());
        for u in out {
            if !uniq.iter().any(|v| (v - &u).amax() == 0.0) {
                uniq.push(u);
            }
        }
        uniq
    }

    /// Bounding box of the range.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            ControlRange::Box { lo, hi } => (lo.clone(), hi.clone()),
            ControlRange::Ball { dim, radius } => (vec![-radius; *dim], vec![*radius; *dim]),
        }
    }

    /// Partition of the bounding box into `3^m` sub-boxes (one around each
    /// stencil direction), keeping those that meet the range. Used by the
    /// set-valued grid operations so that "some control value works" is
    /// over-approximated rather than sampled. Degenerate axes collapse.
    pub fn stencil_boxes(&self) -> Vec<(Vec<f64>, Vec<f64>)> {
        let (lo, hi) = self.bounds();
        let m = lo.len();
        let mut out: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
        for code in 0..3usize.pow(m as u32) {
            let mut c = code;
            let mut blo = vec![0.0; m];
            let mut bhi = vec![0.0; m];
            for k in 0..m {
                let part = (c % 3) as f64;
                c /= 3;
                let w = (hi[k] - lo[k]) / 3.0;
                blo[k] = lo[k] + part * w;
                bhi[k] = if part == 2.0 { hi[k] } else { lo[k] + (part + 1.0) * w };
            }
            let meets = match self {
                ControlRange::Box { .. } => true,
                ControlRange::Ball { radius, .. } => {
                    let near: f64 = (0..m).map(|k| (0.0f64).clamp(blo[k], bhi[k]).powi(2)).sum();
                    near.sqrt() <= *radius
                }
            };
            if meets && !out.iter().any(|(l, h)| *l == blo && *h == bhi) {
                out.push((blo, bhi));
            }
        }
        out
    }
}

/// How a finite control window is extended to indices outside it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Extension {
    /// Queries outside the window are errors.
    None,
    /// Hold the nearest end value.
    Hold,
    /// Repeat the window with period equal to its length.
    Periodic,
}

/// A control sequence `u_t`, `t ∈ [start; start + len)`, plus an extension
/// rule. The shift `θ^k` is an index offset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlSequence {
    start: i64,
    values: Vec<Control>,
    extension: Extension,
}

impl ControlSequence {
    pub fn new(start: i64, values: Vec<Control>, extension: Extension) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Precondition("control sequence needs at least one value".into()));
        }
        let m = values[0].len();
        if values.iter().any(|v| v.len() != m) {
            return Err(Error::Dimension("control values of differing dimension".into()));
        }
        Ok(ControlSequence { start, values, extension })
    }

    /// `u_t = u` for all `t`.
    pub fn constant(u: Control) -> Self {
        ControlSequence { start: 0, values: vec![u], extension: Extension::Hold }
    }

    /// Periodic sequence starting at time 0.
    pub fn periodic(values: Vec<Control>) -> Result<Self> {
        Self::new(0, values, Extension::Periodic)
    }

    pub fn start(&self) -> i64 {
        self.start
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn extension(&self) -> Extension {
        self.extension
    }

    pub fn values(&self) -> &[Control] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    /// Period of a periodic sequence.
    pub fn period(&self) -> Option<usize> {
        (self.extension == Extension::Periodic).then_some(self.values.len())
    }

    pub fn at(&self, t: i64) -> Result<&Control> {
        let n = self.values.len() as i64;
        let k = t - self.start;
        if (0..n).contains(&k) {
            return Ok(&self.values[k as usize]);
        }
        match self.extension {
            Extension::None => Err(Error::ControlIndex(t)),
            Extension::Hold => Ok(if k < 0 { &self.values[0] } else { &self.values[(n - 1) as usize] }),
            Extension::Periodic => Ok(&self.values[k.rem_euclid(n) as usize]),
        }
    }

    /// `θ^k u`, i.e. `(θ^k u)_t = u_{t+k}`.
    pub fn shifted(&self, k: i64) -> Self {
        ControlSequence { start: self.start - k, values: self.values.clone(), extension: self.extension }
    }

    pub fn validate(&self, range: &ControlRange) -> Result<()> {
        for v in &self.values {
            range.check(v.as_slice())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stencil_boxes_cover_range() {
        let disk = ControlRange::Ball { dim: 2, radius: 0.08 };
        assert_eq!(disk.stencil_boxes().len(), 9);
        let zero = ControlRange::Ball { dim: 2, radius: 0.0 };
        assert_eq!(zero.stencil_boxes(), vec![(vec![0.0, 0.0], vec![0.0, 0.0])]);
        let line = ControlRange::symmetric_box(1, 0.5);
        let b = line.stencil_boxes();
        assert_eq!(b.len(), 3);
        assert_eq!(b[0].0, vec![-0.5]);
        assert_eq!(b[2].1, vec![0.5]);
    }

    #[test]
    fn nine_point_stencil_for_disk_and_box() {
        let disk = ControlRange::Ball { dim: 2, radius: 0.08 };
        let s = disk.stencil();
        assert_eq!(s.len(), 9);
        for u in &s {
            assert!(disk.contains(u.as_slice(), 1e-15));
        }
        let b = ControlRange::symmetric_box(2, 1.0);
        assert_eq!(b.stencil().len(), 9);
        assert_eq!(ControlRange::symmetric_box(1, 0.5).stencil().len(), 3);
        assert_eq!(ControlRange::Ball { dim: 2, radius: 0.0 }.stencil().len(), 1);
    }

    #[test]
    fn extension_rules() {
        let v = |x: f64| DVector::from_vec(vec![x]);
        let hold = ControlSequence::new(2, vec![v(1.0), v(2.0)], Extension::Hold).unwrap();
        assert_eq!(hold.at(0).unwrap()[0], 1.0);
        assert_eq!(hold.at(10).unwrap()[0], 2.0);
        let per = ControlSequence::new(0, vec![v(1.0), v(2.0), v(3.0)], Extension::Periodic).unwrap();
        assert_eq!(per.at(-1).unwrap()[0], 3.0);
        assert_eq!(per.at(4).unwrap()[0], 2.0);
        assert_eq!(per.shifted(1).at(0).unwrap()[0], 2.0);
        let none = ControlSequence::new(0, vec![v(1.0)], Extension::None).unwrap();
        assert!(matches!(none.at(1), Err(Error::ControlIndex(1))));
    }

    #[test]
    fn projection_lands_in_range() {
        let disk = ControlRange::Ball { dim: 2, radius: 0.5 };
        let p = disk.project(&DVector::from_vec(vec![3.0, 4.0]));
        assert!((p.norm() - 0.5).abs() < 1e-15);
        let b = ControlRange::symmetric_box(2, 1.0);
        let q = b.project(&DVector::from_vec(vec![3.0, -0.2]));
        assert_eq!(q.as_slice(), &[1.0, -0.2]);
    }
}
