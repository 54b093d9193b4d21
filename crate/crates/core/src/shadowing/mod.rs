//! Constructive shadowing: Newton refinement of pseudo-orbits to true
//! orbits, periodic orbits, the conjugacies `h_u` and expansivity probes.

mod blocks;

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::Serialize;

use blocks::BlockTridiagonal;

use crate::error::{Error, Result};
use crate::system::{inverse_step, step, ControlSequence, ControlSystem, OrbitSegment, State};

/// Interior steps dropped at each end of a conjugacy window.
pub const CONJUGACY_BUFFER: usize = 5;

/// A finite window of states `x_t`, `t ∈ [start_time; start_time + n)`,
/// under `controls`, with the largest jump `α = max d(f(x_t, u_t), x_{t+1})`.
#[derive(Clone, Debug, Serialize)]
pub struct PseudoOrbit {
    pub start_time: i64,
    pub states: Vec<State>,
    pub controls: ControlSequence,
    pub alpha: f64,
    pub periodic: bool,
}

impl PseudoOrbit {
    /// Window pseudo-orbit; `alpha` covers the `n − 1` inner jumps.
    pub fn new(sys: &dyn ControlSystem, start_time: i64, states: Vec<State>, controls: ControlSequence) -> Result<Self> {
        Self::build(sys, start_time, states, controls, false)
    }

    /// Periodic pseudo-orbit `x_n ≡ x_0`; `alpha` includes the closing jump.
    pub fn periodic(sys: &dyn ControlSystem, states: Vec<State>, controls: ControlSequence) -> Result<Self> {
        Self::build(sys, 0, states, controls, true)
    }

    fn build(
        sys: &dyn ControlSystem,
        start_time: i64,
        states: Vec<State>,
        controls: ControlSequence,
        periodic: bool,
    ) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::Precondition("pseudo-orbit needs at least one state".into()));
        }
        let mut p = PseudoOrbit { start_time, states, controls, alpha: 0.0, periodic };
        p.alpha = p.jumps(sys)?.into_iter().fold(0.0, f64::max);
        Ok(p)
    }

    /// Jumps `|f(x_t, u_t) − x_{t+1}|` (with wrap-around when periodic).
    pub fn jumps(&self, sys: &dyn ControlSystem) -> Result<Vec<f64>> {
        Ok(defects(sys, &self.states, &self.controls, self.start_time, self.periodic)?
            .iter()
            .map(|g| g.norm())
            .collect())
    }
}

/// Boundary treatment for [`refine_to_orbit`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Boundary {
    /// `x_n ≡ x_0`; the window is one period.
    Periodic,
    /// Finite window whose ends stay attached to the pseudo-orbit through
    /// minimum-norm corrections. Clamping both end states exactly would
    /// overdetermine the problem (an orbit is fixed by a single state), so
    /// the ends move by the smallest amount compatible with a true orbit.
    Anchored,
}

#[derive(Clone, Debug)]
pub struct ShadowOptions {
    /// Target for the largest one-step defect.
    pub tol: f64,
    pub max_iter: usize,
    /// Give up once the refined orbit drifts farther than this from the
    /// pseudo-orbit.
    pub max_beta: Option<f64>,
}

impl Default for ShadowOptions {
    fn default() -> Self {
        ShadowOptions { tol: 1e-12, max_iter: 50, max_beta: None }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ShadowResult {
    pub orbit: OrbitSegment,
    /// `max_t d(orbit.x_t, pseudo.x_t)`.
    pub beta: f64,
    /// Largest one-step defect of `orbit`.
    pub residual: f64,
    pub iterations: usize,
    pub boundary: Boundary,
}

impl ShadowResult {
    /// CSV rows `t, x…, u…, defect`.
    pub fn to_csv(&self, sys: &dyn ControlSystem) -> Result<String> {
        let periodic = self.boundary == Boundary::Periodic;
        let g = defects(sys, &self.orbit.states, &self.orbit.controls, self.orbit.start_time, periodic)?;
        let d = sys.state_dim();
        let m = sys.control_dim();
        let mut s = String::from("t");
        for k in 0..d {
            let _ = write!(s, ",x{k}");
        }
        for k in 0..m {
            let _ = write!(s, ",u{k}");
        }
        s.push_str(",defect\n");
        for (i, x) in self.orbit.states.iter().enumerate() {
            let t = self.orbit.time_of(i);
            let _ = write!(s, "{t}");
            for v in x.iter() {
                let _ = write!(s, ",{v:.17e}");
            }
            for v in self.orbit.controls.at(t)?.iter() {
                let _ = write!(s, ",{v:.17e}");
            }
            let defect = g.get(i).map_or(0.0, |v| v.norm());
            let _ = writeln!(s, ",{defect:.6e}");
        }
        Ok(s)
    }
}

fn defects(
    sys: &dyn ControlSystem,
    states: &[State],
    controls: &ControlSequence,
    start: i64,
    periodic: bool,
) -> Result<Vec<State>> {
    let n = states.len();
    let rows = if periodic { n } else { n - 1 };
    (0..rows)
        .map(|t| {
            let img = step(sys, &states[t], controls.at(start + t as i64)?)?;
            Ok(img - &states[(t + 1) % n])
        })
        .collect()
}

fn max_norm(v: &[State]) -> f64 {
    v.iter().map(|g| g.norm()).fold(0.0, |a, b| if b.is_nan() { f64::INFINITY } else { a.max(b) })
}

/// Minimum-norm Newton step `δ = −Gᵀ(GGᵀ)⁻¹g` for the defect map
/// `g_t = f(x_t, u_t) − x_{t+1}`, whose Jacobian `G` has block rows
/// `[… A_t, −I …]`.
fn newton_step(jac: &[DMatrix<f64>], g: &[State], periodic: bool) -> Option<Vec<State>> {
    let rows = g.len();
    let n = if periodic { rows } else { rows + 1 };
    let d = g[0].len();
    let eye = DMatrix::<f64>::identity(d, d);
    let system = BlockTridiagonal {
        diag: (0..rows).map(|t| &eye + &jac[t] * jac[t].transpose()).collect(),
        upper: (0..rows.saturating_sub(1)).map(|t| -jac[t + 1].transpose()).collect(),
        lower: (0..rows.saturating_sub(1)).map(|t| -jac[t + 1].clone()).collect(),
        corners: (periodic && rows > 1).then(|| (-jac[0].clone(), -jac[0].transpose())),
    };
    let rhs: Vec<DMatrix<f64>> = g.iter().map(|v| DMatrix::from_column_slice(d, 1, v.as_slice())).collect();
    let y = if periodic && rows == 1 {
        // single block: (A − I)(A − I)ᵀ
        let a = &jac[0] - &eye;
        vec![(&a * a.transpose()).lu().solve(&rhs[0])?]
    } else {
        system.solve(&rhs)?
    };
    // δ = −Gᵀ y: δ_t = −(A_tᵀ y_t − y_{t−1})
    let mut delta = vec![State::zeros(d); n];
    for t in 0..rows {
        let yt = y[t].column(0);
        delta[t] -= jac[t].transpose() * yt;
        delta[(t + 1) % n] += yt;
    }
    Some(delta)
}

/// Refines a pseudo-orbit to a true orbit by damped minimum-norm Newton
/// steps on the defect map, starting from the pseudo-orbit itself.
pub fn refine_to_orbit(
    sys: &dyn ControlSystem,
    pseudo: &PseudoOrbit,
    boundary: Boundary,
    opts: &ShadowOptions,
) -> Result<ShadowResult> {
    refine_from(sys, pseudo, boundary, &pseudo.states, opts)
}

/// As [`refine_to_orbit`] with an explicit initial guess for the Newton
/// iteration; `beta` is still measured against the pseudo-orbit.
pub fn refine_from(
    sys: &dyn ControlSystem,
    pseudo: &PseudoOrbit,
    boundary: Boundary,
    guess: &[State],
    opts: &ShadowOptions,
) -> Result<ShadowResult> {
    let periodic = boundary == Boundary::Periodic;
    let n = pseudo.states.len();
    if guess.len() != n {
        return Err(Error::Dimension("initial guess length differs from the pseudo-orbit".into()));
    }
    if !periodic && n < 2 {
        return Err(Error::Precondition("anchored refinement needs at least two states".into()));
    }
    let start = pseudo.start_time;
    let controls = &pseudo.controls;
    let mut x: Vec<State> = guess.to_vec();
    let eval = |x: &[State]| -> Result<(Vec<State>, f64)> {
        let g = defects(sys, x, controls, start, periodic)?;
        let r = max_norm(&g);
        Ok((g, r))
    };
    let (mut g, mut res) = eval(&x)?;
    let mut iterations = 0;
    while res >= opts.tol {
        if iterations >= opts.max_iter || !res.is_finite() {
            return Err(Error::ShadowingFailed);
        }
        iterations += 1;
        let jac: Vec<DMatrix<f64>> = (0..g.len())
            .map(|t| Ok(sys.jac_state(x[t].as_slice(), controls.at(start + t as i64)?.as_slice())))
            .collect::<Result<_>>()?;
        let delta = newton_step(&jac, &g, periodic).ok_or(Error::ShadowingFailed)?;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<State> = x.iter().zip(&delta).map(|(a, b)| a + b * lambda).collect();
            let (tg, tr) = eval(&trial)?;
            if tr.is_finite() && tr < res {
                x = trial;
                g = tg;
                res = tr;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(Error::ShadowingFailed);
        }
        if let Some(limit) = opts.max_beta {
            if beta_of(&x, &pseudo.states) > limit {
                return Err(Error::ShadowingFailed);
            }
        }
    }
    let beta = beta_of(&x, &pseudo.states);
    if opts.max_beta.is_some_and(|limit| beta > limit) {
        return Err(Error::ShadowingFailed);
    }
    Ok(ShadowResult {
        orbit: OrbitSegment { start_time: start, states: x, controls: controls.clone() },
        beta,
        residual: res,
        iterations,
        boundary,
    })
}

fn beta_of(x: &[State], y: &[State]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
}

/// A `τ`-periodic orbit under a periodic control sequence, found by
/// periodic refinement of the forward iterates of `seed`.
pub fn find_periodic_orbit(sys: &dyn ControlSystem, u: &ControlSequence, seed: &State) -> Result<OrbitSegment> {
    let tau = u.period().ok_or_else(|| Error::Precondition("control sequence must be periodic".into()))?;
    let controls = ControlSequence::periodic(u.values().to_vec())?;
    let mut states = vec![seed.clone()];
    for t in 1..tau {
        let next = step(sys, &states[t - 1], controls.at(t as i64 - 1)?)?;
        if !next.iter().all(|v| v.is_finite()) || next.norm() > 1e6 * (1.0 + seed.norm()) {
            states = vec![seed.clone(); tau];
            break;
        }
        states.push(next);
    }
    let pseudo = PseudoOrbit::periodic(sys, states, controls)?;
    let opts = ShadowOptions { max_iter: 100, ..ShadowOptions::default() };
    refine_to_orbit(sys, &pseudo, Boundary::Periodic, &opts)
        .map(|r| r.orbit)
        .map_err(|e| match e {
            Error::ShadowingFailed => Error::NoPeriodicOrbit,
            other => other,
        })
}

/// `h_u(x)` for the point `x = reference.states[center]`: the window
/// `[center − T, center + T]` of the nominal orbit is taken as a pseudo-orbit
/// of the perturbed controls `u` (indexed by the reference's time frame) and
/// refined; the refined state at `center` is returned.
pub fn conjugacy_from_orbit(
    sys: &dyn ControlSystem,
    reference: &OrbitSegment,
    center: usize,
    u: &ControlSequence,
    window: usize,
) -> Result<State> {
    if center < window || center + window >= reference.len() {
        return Err(Error::Precondition(format!(
            "reference orbit does not cover ±{window} steps around index {center}"
        )));
    }
    let states = reference.states[center - window..=center + window].to_vec();
    let start = reference.time_of(center - window);
    let pseudo = PseudoOrbit::new(sys, start, states, u.clone())?;
    let refined = refine_to_orbit(sys, &pseudo, Boundary::Anchored, &ShadowOptions::default()).map_err(|e| match e {
        Error::ShadowingFailed => Error::ConjugacyUndefined,
        other => other,
    })?;
    Ok(refined.orbit.states[window].clone())
}

/// `h_u(x)` with the nominal orbit of `x` generated by forward and backward
/// iteration of the nominal control over `[−T, T]` (time 0 at `x`). The
/// backward iterates amplify round-off along stable directions; for long
/// windows pass an exact reference to [`conjugacy_from_orbit`].
pub fn conjugacy_point(sys: &dyn ControlSystem, x: &State, u: &ControlSequence, window: usize) -> Result<State> {
    let u0 = sys.nominal_control();
    let mut back = vec![x.clone()];
    for _ in 0..window {
        back.push(inverse_step(sys, back.last().unwrap(), &u0)?);
    }
    back.reverse();
    for _ in 0..window {
        let next = step(sys, back.last().unwrap(), &u0)?;
        back.push(next);
    }
    let reference = OrbitSegment {
        start_time: -(window as i64),
        states: back,
        controls: ControlSequence::constant(u0),
    };
    conjugacy_from_orbit(sys, &reference, window, u, window)
}

/// `max_{|t| ≤ horizon} d(φ(t,x,u), φ(t,y,u))`; diverging orbits count as
/// infinitely far apart.
pub fn expansivity_probe(sys: &dyn ControlSystem, u: &ControlSequence, x: &State, y: &State, horizon: usize) -> Result<f64> {
    let mut best = (x - y).norm();
    for dir in [1i64, -1] {
        let (mut a, mut b) = (x.clone(), y.clone());
        for k in 0..horizon as i64 {
            if dir > 0 {
                let us = u.at(k)?;
                a = step(sys, &a, us)?;
                b = step(sys, &b, us)?;
            } else {
                let us = u.at(-k - 1)?;
                a = inverse_step(sys, &a, us)?;
                b = inverse_step(sys, &b, us)?;
            }
            let dist = (&a - &b).norm();
            if !dist.is_finite() {
                return Ok(f64::INFINITY);
            }
            best = best.max(dist);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{Henon, LinearSystem};
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(x: &[f64]) -> State {
        DVector::from_column_slice(x)
    }

    #[test]
    fn true_orbit_is_a_fixed_point_of_refinement() {
        let h = Henon::planar(0.08);
        let orb = h.coded_orbit(&[true, false, true, true, false, false, true]).unwrap();
        let pseudo = PseudoOrbit::periodic(&h, orb.states.clone(), orb.controls.clone()).unwrap();
        let r = refine_to_orbit(&h, &pseudo, Boundary::Periodic, &ShadowOptions::default()).unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(r.beta, 0.0);
        assert!(r.residual < 1e-12);
    }

    #[test]
    fn fixed_points_from_seeds() {
        let h = Henon::planar(0.08);
        let zero = ControlSequence::periodic(vec![v(&[0.0, 0.0])]).unwrap();
        let xs = (-1.3 + 21.69f64.sqrt()) / 2.0;
        let p = find_periodic_orbit(&h, &zero, &v(&[1.5, 1.5])).unwrap();
        assert!((p.states[0][0] - xs).abs() < 1e-12 && (p.states[0][1] - xs).abs() < 1e-12);
        let q = find_periodic_orbit(&h, &zero, &v(&[-3.0, -3.0])).unwrap();
        assert!((q.states[0][0] - (-1.3 - 21.69f64.sqrt()) / 2.0).abs() < 1e-12);
        let toy = LinearSystem::linear_toy(1.0);
        let zero5 = ControlSequence::periodic(vec![v(&[0.0, 0.0]); 5]).unwrap();
        let o = find_periodic_orbit(&toy, &zero5, &v(&[0.3, 0.3])).unwrap();
        assert!(o.states.iter().all(|s| s.norm() < 1e-12));
    }

    #[test]
    fn noisy_fixed_point_is_shadowed() {
        let h = Henon::planar(0.08);
        let orb = h.coded_orbit(&[true]).unwrap().unrolled(40);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let alpha = 1e-3;
        let states: Vec<State> =
            orb.states.iter().map(|s| s + v(&[rng.random_range(-alpha..alpha), rng.random_range(-alpha..alpha)])).collect();
        let pseudo = PseudoOrbit::new(&h, 0, states, orb.controls.clone()).unwrap();
        let r = refine_to_orbit(&h, &pseudo, Boundary::Anchored, &ShadowOptions::default()).unwrap();
        assert!(r.residual < 1e-12);
        assert!(r.beta <= 10.0 * alpha, "beta {}", r.beta);
        assert!(r.orbit.max_defect(&h).unwrap() < 1e-12);
    }

    #[test]
    fn far_pseudo_orbit_fails() {
        let h = Henon::planar(0.08);
        let states: Vec<State> = (0..6).map(|t| v(&[40.0 + 7.0 * t as f64, -30.0])).collect();
        let zero = ControlSequence::periodic(vec![v(&[0.0, 0.0]); 6]).unwrap();
        let pseudo = PseudoOrbit::periodic(&h, states, zero).unwrap();
        let opts = ShadowOptions { max_beta: Some(1.0), ..ShadowOptions::default() };
        assert!(matches!(refine_to_orbit(&h, &pseudo, Boundary::Periodic, &opts), Err(Error::ShadowingFailed)));
    }

    #[test]
    fn conjugacy_of_fixed_point_is_perturbed_fixed_point() {
        let h = Henon::planar(0.08);
        let orb = h.coded_orbit(&[true]).unwrap().unrolled(60);
        let u = ControlSequence::constant(v(&[0.05, 0.0]));
        let xu = conjugacy_from_orbit(&h, &orb, 30, &u, 28).unwrap();
        // oracle: fixed point of f_(0.05,0): x² + 1.3x − 5.05 = 0
        let xs = (-1.3 + (1.69f64 + 4.0 * 5.05).sqrt()) / 2.0;
        assert!((&xu - v(&[xs, xs])).amax() < 1e-10, "{xu}");
        let same = conjugacy_from_orbit(&h, &orb, 30, &ControlSequence::constant(v(&[0.0, 0.0])), 28).unwrap();
        assert_eq!(same, orb.states[30]);
    }

    #[test]
    fn expansivity_examples() {
        let toy = LinearSystem::linear_toy(1.0);
        let zero = ControlSequence::constant(v(&[0.0, 0.0]));
        let x = v(&[0.0, 0.0]);
        assert_eq!(expansivity_probe(&toy, &zero, &x, &x, 30).unwrap(), 0.0);
        let p = expansivity_probe(&toy, &zero, &x, &v(&[1e-6, 0.0]), 30).unwrap();
        assert!((p - 2f64.powi(30) * 1e-6).abs() < 1e-6);
    }

    #[test]
    fn csv_export_has_header_and_rows() {
        let h = Henon::planar(0.08);
        let orb = h.coded_orbit(&[true, false]).unwrap();
        let pseudo = PseudoOrbit::periodic(&h, orb.states.clone(), orb.controls.clone()).unwrap();
        let r = refine_to_orbit(&h, &pseudo, Boundary::Periodic, &ShadowOptions::default()).unwrap();
        let csv = r.to_csv(&h).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,x0,x1,u0,u1,defect");
        assert_eq!(lines.len(), 3);
    }
}
