//! Discrete-time invertible control systems `x_{t+1} = f(x_t, u_t)` on `ℝ^d`,
//! the transition cocycle `φ(t, x, u)` and trajectory metrics.

mod control;
pub mod henon;
pub mod linear;
mod orbit;

use std::fmt;

use nalgebra::{DMatrix, DVector};

pub use control::{Control, ControlRange, ControlSequence, Extension};
pub use henon::{Henon, HenonControl};
pub use linear::LinearSystem;
pub use orbit::OrbitSegment;

use crate::error::{Error, Result};

pub type State = DVector<f64>;

/// Relative tolerance used for exact identities (inversion, cocycle).
pub const DEFAULT_TOLERANCE: f64 = 1e-10;

/// A smooth family of diffeomorphisms `f_u = f(·, u)` of `ℝ^d` indexed by
/// control values in a compact range.
///
/// The slice-based methods are the primitives used in hot loops; they do not
/// check the control range. [`step`] and [`inverse_step`] are the checked
/// entry points.
pub trait ControlSystem: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    fn state_dim(&self) -> usize;

    fn control_range(&self) -> &ControlRange;

    fn control_dim(&self) -> usize {
        self.control_range().dim()
    }

    /// Reference control `u⁰` around which perturbations are taken.
    fn nominal_control(&self) -> Control {
        self.control_range().center()
    }

    /// `out = f(x, u)`.
    fn map_into(&self, x: &[f64], u: &[f64], out: &mut [f64]);

    /// `out = f_u^{-1}(x)`.
    fn inverse_into(&self, x: &[f64], u: &[f64], out: &mut [f64]);

    /// `∂f/∂x` at `(x, u)`, a `d × d` matrix.
    fn jac_state(&self, x: &[f64], u: &[f64]) -> DMatrix<f64>;

    /// `∂f/∂u` at `(x, u)`, a `d × m` matrix.
    fn jac_control(&self, x: &[f64], u: &[f64]) -> DMatrix<f64>;

    /// Axis-aligned box containing `f([lo, hi] × [ulo, uhi])`. A single
    /// control value is passed as `ulo = uhi`.
    fn image_enclosure(&self, lo: &[f64], hi: &[f64], ulo: &[f64], uhi: &[f64], out_lo: &mut [f64], out_hi: &mut [f64]);

    /// Axis-aligned box containing `{f_u^{-1}(x) : x ∈ [lo, hi], u ∈ [ulo, uhi]}`.
    fn preimage_enclosure(
        &self,
        lo: &[f64],
        hi: &[f64],
        ulo: &[f64],
        uhi: &[f64],
        out_lo: &mut [f64],
        out_hi: &mut [f64],
    );

    /// Upper bound for the norm of the second derivative of `(x, u) ↦ f(x, u)`
    /// near the given point.
    fn curvature_bound(&self, x: &[f64], u: &[f64]) -> f64;
}

pub fn step(sys: &dyn ControlSystem, x: &State, u: &Control) -> Result<State> {
    check_dims(sys, x, u)?;
    sys.control_range().check(u.as_slice())?;
    let mut out = State::zeros(sys.state_dim());
    sys.map_into(x.as_slice(), u.as_slice(), out.as_mut_slice());
    Ok(out)
}

pub fn inverse_step(sys: &dyn ControlSystem, x: &State, u: &Control) -> Result<State> {
    check_dims(sys, x, u)?;
    sys.control_range().check(u.as_slice())?;
    let mut out = State::zeros(sys.state_dim());
    sys.inverse_into(x.as_slice(), u.as_slice(), out.as_mut_slice());
    Ok(out)
}

fn check_dims(sys: &dyn ControlSystem, x: &State, u: &Control) -> Result<()> {
    if x.len() != sys.state_dim() {
        return Err(Error::Dimension(format!("state has length {}, expected {}", x.len(), sys.state_dim())));
    }
    if u.len() != sys.control_dim() {
        return Err(Error::Dimension(format!("control has length {}, expected {}", u.len(), sys.control_dim())));
    }
    Ok(())
}

/// The transition map `φ(t, x, u)` for either sign of `t`.
///
/// Forward: `φ(t+1) = f(φ(t), u_t)`; backward: `φ(t-1) = f^{-1}_{u_{t-1}}(φ(t))`.
pub fn transition(sys: &dyn ControlSystem, t: i64, x: &State, u: &ControlSequence) -> Result<State> {
    let mut cur = x.clone();
    if t >= 0 {
        for s in 0..t {
            cur = step(sys, &cur, u.at(s)?)?;
        }
    } else {
        for s in (t..0).rev() {
            cur = inverse_step(sys, &cur, u.at(s)?)?;
        }
    }
    Ok(cur)
}

/// `φ(t, x, u)` together with `Dφ_{t,u}(x)` for `t ≥ 0`.
pub fn transition_with_jacobian(
    sys: &dyn ControlSystem,
    t: usize,
    x: &State,
    u: &ControlSequence,
) -> Result<(State, DMatrix<f64>)> {
    let d = sys.state_dim();
    let mut cur = x.clone();
    let mut jac = DMatrix::identity(d, d);
    for s in 0..t as i64 {
        let us = u.at(s)?;
        jac = sys.jac_state(cur.as_slice(), us.as_slice()) * jac;
        cur = step(sys, &cur, us)?;
    }
    Ok((cur, jac))
}

/// Bowen distance `d^{u,τ}(x, y) = max_{t∈[0;τ)} |φ(t,x,u) − φ(t,y,u)|`.
pub fn bowen_distance(sys: &dyn ControlSystem, u: &ControlSequence, tau: usize, x: &State, y: &State) -> Result<f64> {
    if tau == 0 {
        return Err(Error::Precondition("bowen distance needs tau >= 1".into()));
    }
    let mut a = x.clone();
    let mut b = y.clone();
    let mut best = (&a - &b).norm();
    for s in 0..(tau as i64 - 1) {
        let us = u.at(s)?;
        a = step(sys, &a, us)?;
        b = step(sys, &b, us)?;
        let dist = (&a - &b).norm();
        best = if dist.is_nan() { f64::INFINITY } else { best.max(dist) };
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn henon_step_examples() {
        let h = Henon::planar(0.08);
        assert_eq!(step(&h, &v(&[0.0, 0.0]), &v(&[0.0, 0.0])).unwrap(), v(&[5.0, 0.0]));
        let y = step(&h, &v(&[1.0, 1.0]), &v(&[0.0, 0.0])).unwrap();
        assert_relative_eq!(y[0], 3.7, epsilon = 1e-14);
        assert_eq!(y[1], 1.0);
        let y = step(&h, &v(&[2.0, -1.0]), &v(&[0.05, 0.0])).unwrap();
        assert_relative_eq!(y[0], 1.35, epsilon = 1e-14);
        assert_eq!(y[1], 2.0);
    }

    #[test]
    fn henon_inverse_examples() {
        let h = Henon::planar(0.08);
        let x = inverse_step(&h, &v(&[5.0, 0.0]), &v(&[0.0, 0.0])).unwrap();
        assert_relative_eq!(x, v(&[0.0, 0.0]), epsilon = 1e-14);
        let x = inverse_step(&h, &v(&[3.7, 1.0]), &v(&[0.0, 0.0])).unwrap();
        assert_relative_eq!(x, v(&[1.0, 1.0]), epsilon = 1e-12);
    }

    #[test]
    fn control_outside_range_is_domain_error() {
        let h = Henon::planar(0.08);
        let r = step(&h, &v(&[0.0, 0.0]), &v(&[0.1, 0.0]));
        assert!(matches!(r, Err(Error::ControlOutOfRange { .. })));
        assert!(inverse_step(&h, &v(&[0.0, 0.0]), &v(&[0.0, 0.2])).is_err());
    }

    #[test]
    fn transition_examples() {
        let h = Henon::planar(0.08);
        let u = ControlSequence::constant(v(&[0.0, 0.0]));
        let x = v(&[0.3, -0.2]);
        assert_eq!(transition(&h, 0, &x, &u).unwrap(), x);
        assert_eq!(transition(&h, 2, &v(&[0.0, 0.0]), &u).unwrap(), v(&[-20.0, 5.0]));
        let none = ControlSequence::new(0, vec![v(&[0.0, 0.0])], Extension::None).unwrap();
        assert!(matches!(transition(&h, 3, &x, &none), Err(Error::ControlIndex(1))));
    }

    #[test]
    fn cocycle_split_five_is_two_plus_three() {
        let h = Henon::planar(0.08);
        let vals: Vec<Control> = (0..8).map(|k| v(&[0.01 * (k as f64).sin(), 0.02 * (k as f64).cos()])).collect();
        let u = ControlSequence::new(0, vals, Extension::Hold).unwrap();
        let x = v(&[0.4, -0.3]);
        let direct = transition(&h, 5, &x, &u).unwrap();
        let mid = transition(&h, 2, &x, &u).unwrap();
        let split = transition(&h, 3, &mid, &u.shifted(2)).unwrap();
        assert!((direct - split).amax() <= 1e-12);
    }

    #[test]
    fn bowen_distance_examples() {
        let toy = LinearSystem::linear_toy(1.0);
        let u = ControlSequence::constant(v(&[0.0, 0.0]));
        let x = v(&[0.0, 0.0]);
        let y = v(&[1e-3, 0.0]);
        assert_eq!(bowen_distance(&toy, &u, 3, &x, &x).unwrap(), 0.0);
        assert_eq!(bowen_distance(&toy, &u, 1, &x, &y).unwrap(), 1e-3);
        assert_relative_eq!(bowen_distance(&toy, &u, 4, &x, &y).unwrap(), 0.008, epsilon = 1e-15);
    }
}
