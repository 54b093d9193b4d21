use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::setops::ChainStep;
use crate::system::{ControlSystem, OrbitSegment};

/// Distance from the unit circle below which an eigenvalue counts as
/// neutral.
const NEUTRAL_TOL: f64 = 1e-8;
const PERIODIC_TOL: f64 = 1e-12;

/// Finite-time Morse exponent `(1/τ)·Σ_t log₂ J⁺φ_{1,u_t}(x_t)` of a chain,
/// where `frames[t]` is an orthonormal basis of `E⁺(x_t)` and `J⁺` is the
/// volume growth of `Df(x_t, u_t)` on it.
pub fn morse_exponent(sys: &dyn ControlSystem, chain: &[ChainStep], frames: &[DMatrix<f64>]) -> Result<f64> {
    if chain.is_empty() {
        return Err(Error::Precondition("chain must have at least one step".into()));
    }
    if frames.len() != chain.len() {
        return Err(Error::Precondition(format!(
            "missing splitting: {} frames for {} chain points",
            frames.len(),
            chain.len()
        )));
    }
    let mut total = 0.0;
    for (s, e) in chain.iter().zip(frames) {
        if e.nrows() != sys.state_dim() {
            return Err(Error::Dimension("frame rows differ from the state dimension".into()));
        }
        if e.ncols() == 0 {
            continue;
        }
        let img = sys.jac_state(s.point.as_slice(), s.control.as_slice()) * e;
        total += 0.5 * (img.transpose() * &img).determinant().abs().log2();
    }
    Ok(total / chain.len() as f64)
}

#[derive(Clone, Debug, Serialize)]
pub struct MonodromySpectrum {
    pub period: usize,
    /// `(re, im)` of the eigenvalues of `Dφ_τ` at the base point.
    pub eigenvalues: Vec<(f64, f64)>,
    pub moduli: Vec<f64>,
    /// `(1/τ)·Σ_{|λ|>1} log₂|λ|` (eigenvalues repeated by multiplicity).
    pub r0: f64,
    pub residual: f64,
}

/// Eigenvalues of the monodromy `Dφ_τ(x_0)` of a periodic orbit (one period
/// of states, periodic controls) and the resulting minimal data rate.
pub fn monodromy_spectrum(sys: &dyn ControlSystem, orbit: &OrbitSegment) -> Result<MonodromySpectrum> {
    let tau = orbit.len();
    if tau == 0 {
        return Err(Error::Precondition("empty periodic orbit".into()));
    }
    let residual = orbit.periodic_defect(sys)?;
    if !(residual < PERIODIC_TOL) {
        return Err(Error::Precondition(format!("orbit is not periodic to 1e-12 (defect {residual:.3e})")));
    }
    let d = sys.state_dim();
    let mut m = DMatrix::<f64>::identity(d, d);
    for i in 0..tau {
        m = orbit.jacobian(sys, i)? * m;
    }
    let eig = m.complex_eigenvalues();
    let eigenvalues: Vec<(f64, f64)> = eig.iter().map(|z| (z.re, z.im)).collect();
    let moduli: Vec<f64> = eig.iter().map(|z| z.norm()).collect();
    if moduli.iter().any(|r| !r.is_finite() || (r - 1.0).abs() < NEUTRAL_TOL) {
        return Err(Error::OrbitNotHyperbolic);
    }
    let r0 = moduli.iter().filter(|&&r| r > 1.0).map(|r| r.log2()).sum::<f64>() / tau as f64;
    Ok(MonodromySpectrum { period: tau, eigenvalues, moduli, r0, residual })
}

/// `R₀ = (1/τ)·Σ_{|λ|>1} log₂|λ|` over the monodromy eigenvalues.
pub fn data_rate_r0(sys: &dyn ControlSystem, orbit: &OrbitSegment) -> Result<f64> {
    Ok(monodromy_spectrum(sys, orbit)?.r0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{ControlSequence, Henon, LinearSystem, State};
    use nalgebra::DVector;

    fn henon_fixed_r0() -> f64 {
        let x = (-1.3 + 21.69f64.sqrt()) / 2.0;
        (-x - (x * x - 0.3).sqrt()).abs().log2()
    }

    #[test]
    fn r0_examples() {
        let h = Henon::planar(0.08);
        let fixed = h.coded_orbit(&[true]).unwrap();
        assert!((data_rate_r0(&h, &fixed).unwrap() - henon_fixed_r0()).abs() < 1e-10);
        let toy = LinearSystem::linear_toy(1.0);
        let origin = OrbitSegment {
            start_time: 0,
            states: vec![DVector::zeros(2)],
            controls: ControlSequence::periodic(vec![DVector::zeros(2)]).unwrap(),
        };
        assert_eq!(data_rate_r0(&toy, &origin).unwrap(), 1.0);
    }

    #[test]
    fn rotation_is_not_hyperbolic() {
        let rot = LinearSystem::autonomous("rot", DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0])).unwrap();
        let orbit = OrbitSegment {
            start_time: 0,
            states: vec![DVector::zeros(2)],
            controls: ControlSequence::periodic(vec![DVector::zeros(1)]).unwrap(),
        };
        assert!(matches!(data_rate_r0(&rot, &orbit), Err(Error::OrbitNotHyperbolic)));
    }

    #[test]
    fn constant_chain_at_fixed_point() {
        let h = Henon::planar(0.08);
        let x: State = h.fixed_points()[0].clone();
        let u = DVector::zeros(2);
        let chain: Vec<ChainStep> = (0..4).map(|_| ChainStep { point: x.clone(), control: u.clone(), jump: 0.0 }).collect();
        let frames = crate::hyperbolicity::periodic_frames(&h, &h.coded_orbit(&[true]).unwrap(), 20).unwrap();
        let e = vec![frames[0].0.clone(); 4];
        assert!((morse_exponent(&h, &chain, &e).unwrap() - henon_fixed_r0()).abs() < 1e-9);
        assert!(morse_exponent(&h, &chain, &e[..3]).is_err());
    }
}
