//! The Hénon family `f(x, y) = (a − b·y − x², x)` with additive control.

use nalgebra::{DMatrix, DVector};

use super::{ControlRange, ControlSequence, ControlSystem, OrbitSegment, State};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HenonControl {
    /// `(x, y) ↦ (a − b y − x² + u, x + v)` with `u² + v² ≤ ε²`.
    Planar,
    /// `(x, y) ↦ (a − b y − x² + u, x)` with `|u| ≤ ε`.
    Scalar,
}

#[derive(Clone, Debug)]
pub struct Henon {
    pub a: f64,
    pub b: f64,
    mode: HenonControl,
    range: ControlRange,
    name: String,
}

/// Outward rounding applied to interval enclosures.
fn widen(lo: f64, hi: f64) -> (f64, f64) {
    let pad = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
    (lo - pad, hi + pad)
}

fn square_interval(lo: f64, hi: f64) -> (f64, f64) {
    let (a, b) = (lo * lo, hi * hi);
    if lo <= 0.0 && hi >= 0.0 {
        (0.0, a.max(b))
    } else {
        (a.min(b), a.max(b))
    }
}

fn scale_interval(k: f64, lo: f64, hi: f64) -> (f64, f64) {
    if k >= 0.0 {
        (k * lo, k * hi)
    } else {
        (k * hi, k * lo)
    }
}

impl Henon {
    pub const A: f64 = 5.0;
    pub const B: f64 = 0.3;

    /// The two-input system with disk control `u² + v² ≤ ε²`.
    pub fn planar(eps: f64) -> Self {
        Henon {
            a: Self::A,
            b: Self::B,
            mode: HenonControl::Planar,
            range: ControlRange::Ball { dim: 2, radius: eps },
            name: "henon_planar".into(),
        }
    }

    /// The single-input system with `|u| ≤ ε`.
    pub fn scalar(eps: f64) -> Self {
        Henon {
            a: Self::A,
            b: Self::B,
            mode: HenonControl::Scalar,
            range: ControlRange::symmetric_box(1, eps),
            name: "henon_scalar".into(),
        }
    }

    pub fn with_params(mut self, a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || b == 0.0 {
            return Err(Error::Precondition("Hénon parameters must be finite with b != 0".into()));
        }
        self.a = a;
        self.b = b;
        Ok(self)
    }

    pub fn mode(&self) -> HenonControl {
        self.mode
    }

    /// Side length `R = (1 + |b|) + √((1 + |b|)² + 4a)` of the origin-centred
    /// square containing the non-wandering set (for `a = 5`, `b = 0.3` this
    /// is `1.3 + √21.69`).
    pub fn side_length(&self) -> f64 {
        let c = 1.0 + self.b.abs();
        c + (c * c + 4.0 * self.a).sqrt()
    }

    /// The square `[−R/2, R/2]²`.
    pub fn square(&self) -> (Vec<f64>, Vec<f64>) {
        let h = 0.5 * self.side_length();
        (vec![-h, -h], vec![h, h])
    }

    /// Fixed points of the uncontrolled map: `x² + (1 + b)x − a = 0`,
    /// ordered `[right, left]`.
    pub fn fixed_points(&self) -> Vec<State> {
        let c = 1.0 + self.b;
        let disc = c * c + 4.0 * self.a;
        if disc < 0.0 {
            return vec![];
        }
        let r = disc.sqrt();
        [(-c + r) / 2.0, (-c - r) / 2.0]
            .into_iter()
            .map(|x| DVector::from_vec(vec![x, x]))
            .collect()
    }

    /// Periodic orbit of the uncontrolled map with the given itinerary
    /// (`true` = right branch `x > 0`), obtained from the contracting
    /// recurrence `x_t = ±√(a − b x_{t−1} − x_{t+1})`. Valid in the horseshoe
    /// regime where the radicand stays positive.
    pub fn coded_orbit(&self, itinerary: &[bool]) -> Result<OrbitSegment> {
        let n = itinerary.len();
        if n == 0 {
            return Err(Error::Precondition("empty itinerary".into()));
        }
        let fp = self.fixed_points();
        if fp.len() < 2 {
            return Err(Error::NoPeriodicOrbit);
        }
        let mut x: Vec<f64> = itinerary.iter().map(|&s| if s { fp[0][0] } else { fp[1][0] }).collect();
        let mut converged = false;
        for _ in 0..500 {
            let mut change: f64 = 0.0;
            for t in 0..n {
                let prev = x[(t + n - 1) % n];
                let next = x[(t + 1) % n];
                let rad = self.a - self.b * prev - next;
                if rad < 0.0 {
                    return Err(Error::NoPeriodicOrbit);
                }
                let val = if itinerary[t] { rad.sqrt() } else { -rad.sqrt() };
                change = change.max((val - x[t]).abs());
                x[t] = val;
            }
            if change < 1e-15 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NoPeriodicOrbit);
        }
        let states = (0..n).map(|t| DVector::from_vec(vec![x[t], x[(t + n - 1) % n]])).collect();
        let zero = self.range.center();
        Ok(OrbitSegment {
            start_time: 0,
            states,
            controls: ControlSequence::periodic(vec![zero; n])?,
        })
    }

    /// All points of period dividing `n` of the uncontrolled map (one per
    /// itinerary of length `n`), in itinerary order with bit `k` of the
    /// word index giving the branch at time `k`.
    pub fn periodic_points(&self, n: usize) -> Result<Vec<State>> {
        if n == 0 || n > 24 {
            return Err(Error::Precondition("period must lie in 1..=24".into()));
        }
        (0..1u64 << n)
            .map(|w| {
                let word: Vec<bool> = (0..n).map(|k| w >> k & 1 == 1).collect();
                Ok(self.coded_orbit(&word)?.states.swap_remove(0))
            })
            .collect()
    }

    fn split(&self, u: &[f64]) -> (f64, f64) {
        match self.mode {
            HenonControl::Planar => (u[0], u[1]),
            HenonControl::Scalar => (u[0], 0.0),
        }
    }
}

impl ControlSystem for Henon {
    fn name(&self) -> &str {
        &self.name
    }

    fn state_dim(&self) -> usize {
        2
    }

    fn control_range(&self) -> &ControlRange {
        &self.range
    }

    fn map_into(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        let (u0, u1) = self.split(u);
        out[0] = self.a - self.b * x[1] - x[0] * x[0] + u0;
        out[1] = x[0] + u1;
    }

    fn inverse_into(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        let (u0, u1) = self.split(u);
        let prev_x = x[1] - u1;
        out[0] = prev_x;
        out[1] = (self.a - prev_x * prev_x - x[0] + u0) / self.b;
    }

    fn jac_state(&self, x: &[f64], _u: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[-2.0 * x[0], -self.b, 1.0, 0.0])
    }

    fn jac_control(&self, _x: &[f64], _u: &[f64]) -> DMatrix<f64> {
        match self.mode {
            HenonControl::Planar => DMatrix::identity(2, 2),
            HenonControl::Scalar => DMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
        }
    }

    fn image_enclosure(&self, lo: &[f64], hi: &[f64], ulo: &[f64], uhi: &[f64], out_lo: &mut [f64], out_hi: &mut [f64]) {
        let (ul0, ul1) = self.split(ulo);
        let (uh0, uh1) = self.split(uhi);
        let (sq_lo, sq_hi) = square_interval(lo[0], hi[0]);
        let (by_lo, by_hi) = scale_interval(-self.b, lo[1], hi[1]);
        let (l, h) = widen(self.a + by_lo - sq_hi + ul0, self.a + by_hi - sq_lo + uh0);
        out_lo[0] = l;
        out_hi[0] = h;
        let (l, h) = widen(lo[0] + ul1, hi[0] + uh1);
        out_lo[1] = l;
        out_hi[1] = h;
    }

    fn preimage_enclosure(
        &self,
        lo: &[f64],
        hi: &[f64],
        ulo: &[f64],
        uhi: &[f64],
        out_lo: &mut [f64],
        out_hi: &mut [f64],
    ) {
        let (ul0, ul1) = self.split(ulo);
        let (uh0, uh1) = self.split(uhi);
        let (px_lo, px_hi) = (lo[1] - uh1, hi[1] - ul1);
        let (sq_lo, sq_hi) = square_interval(px_lo, px_hi);
        // (a − px² + u0 − x) / b over the box
        let num_lo = self.a - sq_hi + ul0 - hi[0];
        let num_hi = self.a - sq_lo + uh0 - lo[0];
        let (l, h) = scale_interval(1.0 / self.b, num_lo, num_hi);
        let (l, h) = widen(l, h);
        out_lo[1] = l;
        out_hi[1] = h;
        let (l, h) = widen(px_lo, px_hi);
        out_lo[0] = l;
        out_hi[0] = h;
    }

    fn curvature_bound(&self, _x: &[f64], _u: &[f64]) -> f64 {
        2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{inverse_step, step, ControlSystem};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn side_length_matches_closed_form() {
        let h = Henon::planar(0.08);
        assert!((h.side_length() - (1.3 + 21.69f64.sqrt())).abs() < 1e-14);
    }

    #[test]
    fn fixed_points_match_quadratic_formula() {
        let h = Henon::planar(0.0);
        let fp = h.fixed_points();
        let xs = (-1.3 + 21.69f64.sqrt()) / 2.0;
        assert!((fp[0][0] - xs).abs() < 1e-15);
        assert!((fp[0][0] - 1.678626).abs() < 1e-6);
        assert!((fp[1][0] + 2.978626).abs() < 1e-6);
        for p in &fp {
            let img = step(&h, p, &DVector::zeros(2)).unwrap();
            assert!((img - p).amax() < 1e-14);
        }
    }

    #[test]
    fn random_roundtrip_and_jacobian() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for sys in [Henon::planar(0.08), Henon::scalar(0.08)] {
            for _ in 0..200 {
                let x = DVector::from_fn(2, |_, _| rng.random_range(-3.0..3.0));
                let u = loop {
                    let c = DVector::from_fn(sys.control_dim(), |_, _| rng.random_range(-0.08..0.08));
                    if sys.control_range().contains(c.as_slice(), 0.0) {
                        break c;
                    }
                };
                let y = step(&sys, &x, &u).unwrap();
                let back = inverse_step(&sys, &y, &u).unwrap();
                assert!((&back - &x).norm() <= 1e-10 * (1.0 + x.norm()));
                let jac = sys.jac_state(x.as_slice(), u.as_slice());
                let h = 1e-6;
                for k in 0..2 {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[k] += h;
                    xm[k] -= h;
                    let fd = (step(&sys, &xp, &u).unwrap() - step(&sys, &xm, &u).unwrap()) / (2.0 * h);
                    let col = jac.column(k).into_owned();
                    assert!((fd - &col).norm() <= 1e-5 * (1.0 + col.norm()));
                }
            }
        }
    }

    #[test]
    fn enclosures_contain_sampled_images() {
        let sys = Henon::planar(0.08);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (lo, hi) = ([-0.7, 1.1], [-0.4, 1.3]);
        let u = [0.03, -0.05];
        let (mut flo, mut fhi, mut blo, mut bhi) = ([0.0; 2], [0.0; 2], [0.0; 2], [0.0; 2]);
        sys.image_enclosure(&lo, &hi, &u, &u, &mut flo, &mut fhi);
        sys.preimage_enclosure(&lo, &hi, &u, &u, &mut blo, &mut bhi);
        for _ in 0..2000 {
            let p = [rng.random_range(lo[0]..hi[0]), rng.random_range(lo[1]..hi[1])];
            let mut q = [0.0; 2];
            sys.map_into(&p, &u, &mut q);
            assert!((0..2).all(|k| q[k] >= flo[k] && q[k] <= fhi[k]));
            sys.inverse_into(&p, &u, &mut q);
            assert!((0..2).all(|k| q[k] >= blo[k] && q[k] <= bhi[k]));
        }
    }

    #[test]
    fn coded_orbits_are_true_orbits() {
        let h = Henon::planar(0.08);
        let orb = h.coded_orbit(&[true, false, false, true, false]).unwrap();
        assert!(orb.periodic_defect(&h).unwrap() < 1e-13);
        let fixed = h.coded_orbit(&[true]).unwrap();
        assert!((fixed.states[0][0] - h.fixed_points()[0][0]).abs() < 1e-14);
    }
}
