use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{log2_sum_exp2, Method, PressureEstimate, SeriesPoint};
use crate::error::{Error, Result};
use crate::setops::GridSet;
use crate::stats::{stream_rng, substream_seed, tail_slope};
use crate::system::{inverse_step, step, ControlSequence, ControlSystem, State};

/// A `(u, τ, ε)`-separated subset of a candidate list, maximal with
/// respect to the candidates.
#[derive(Clone, Debug, Serialize)]
pub struct SeparatedSet {
    pub tau: usize,
    pub eps: f64,
    pub points: Vec<State>,
    /// Positions of `points` in the candidate list.
    pub indices: Vec<usize>,
    pub candidates: usize,
    pub maximal: bool,
}

impl SeparatedSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// How `log₂ J⁺φ_{τ,u}(x)` is evaluated at a candidate point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnstableSource {
    /// Volume growth of a frame carried forward along the backward orbit of
    /// `x` for `backward_steps` steps (a finite-time approximation of
    /// `E⁺(x)`). Requires the control sequence at negative times.
    Pulled { unstable_dim: usize, backward_steps: usize },
    /// Product of the `unstable_dim` largest singular values of `Dφ_{τ,u}(x)`;
    /// differs from `J⁺` by a factor bounded along a hyperbolic set, so it
    /// yields the same growth rate.
    SingularValues { unstable_dim: usize },
}

impl UnstableSource {
    fn unstable_dim(&self) -> usize {
        match *self {
            UnstableSource::Pulled { unstable_dim, .. } | UnstableSource::SingularValues { unstable_dim } => unstable_dim,
        }
    }
}

/// Orthonormal `d × k` frame approximating `E⁺(x)`: a fixed generic frame at
/// `φ(−steps, x, u)` pushed forward to `x` with re-orthonormalization.
pub fn pulled_unstable_frame(
    sys: &dyn ControlSystem,
    x: &State,
    u: &ControlSequence,
    unstable_dim: usize,
    steps: usize,
) -> Result<DMatrix<f64>> {
    let d = sys.state_dim();
    if unstable_dim > d {
        return Err(Error::Dimension(format!("unstable dimension {unstable_dim} exceeds state dimension {d}")));
    }
    let mut back = vec![x.clone()];
    for k in 0..steps {
        let prev = inverse_step(sys, back.last().unwrap(), u.at(-(k as i64) - 1)?)?;
        back.push(prev);
    }
    let mut rng = stream_rng(substream_seed(0, "pulled-frame"), 0);
    let mut frame = DMatrix::from_fn(d, unstable_dim, |_, _| rng.random_range(-1.0..1.0)).qr().q();
    for k in (0..steps).rev() {
        let a = sys.jac_state(back[k + 1].as_slice(), u.at(-(k as i64) - 1)?.as_slice());
        frame = (a * frame).qr().q();
    }
    if frame.iter().any(|v| !v.is_finite()) {
        return Err(Error::Precondition("backward orbit left the domain while pulling the unstable frame".into()));
    }
    Ok(frame)
}

/// `log₂` of the `k`-volume growth of `Dφ_{τ,u}(x)` on the frame (orthonormal
/// columns), accumulated step by step.
fn frame_growth(sys: &dyn ControlSystem, x: &State, u: &ControlSequence, tau: usize, frame: DMatrix<f64>) -> Result<f64> {
    let mut cur = x.clone();
    let mut q = frame;
    let mut total = 0.0;
    for t in 0..tau as i64 {
        let us = u.at(t)?;
        let qr = (sys.jac_state(cur.as_slice(), us.as_slice()) * &q).qr();
        total += qr.r().diagonal().iter().map(|r| r.abs().log2()).sum::<f64>();
        q = qr.q();
        cur = step(sys, &cur, us)?;
    }
    Ok(total)
}

/// `log₂ J⁺φ_{τ,u}(x)` according to `source`.
pub fn unstable_log_volume(
    sys: &dyn ControlSystem,
    x: &State,
    u: &ControlSequence,
    tau: usize,
    source: UnstableSource,
) -> Result<f64> {
    match source {
        UnstableSource::Pulled { unstable_dim, backward_steps } => {
            let frame = pulled_unstable_frame(sys, x, u, unstable_dim, backward_steps)?;
            frame_growth(sys, x, u, tau, frame)
        }
        UnstableSource::SingularValues { unstable_dim } => {
            let (_, jac) = crate::system::transition_with_jacobian(sys, tau, x, u)?;
            let mut sv: Vec<f64> = jac.singular_values().iter().cloned().collect();
            sv.sort_by(|a, b| b.total_cmp(a));
            Ok(sv.iter().take(unstable_dim).map(|s| s.log2()).sum())
        }
    }
}

fn bucket_of(x: &[f64], size: f64) -> Vec<i64> {
    x.iter().map(|v| (v / size).floor() as i64).collect()
}

/// Greedy maximal `(u, τ, ε)`-separated subset of `candidates`, scanned in
/// order. Two points are separated when their Bowen distance exceeds `eps`
/// strictly; orbits that become non-finite count as separated from
/// everything.
pub fn max_separated_points(
    sys: &dyn ControlSystem,
    u: &ControlSequence,
    tau: usize,
    eps: f64,
    candidates: &[State],
) -> Result<SeparatedSet> {
    if tau == 0 {
        return Err(Error::Precondition("tau must be at least 1".into()));
    }
    if !(eps > 0.0) {
        return Err(Error::Precondition("eps must be positive".into()));
    }
    if candidates.is_empty() {
        return Err(Error::Precondition("no candidate points".into()));
    }
    let d = sys.state_dim();
    let controls: Vec<Vec<f64>> =
        (0..tau as i64 - 1).map(|t| u.at(t).map(|c| c.as_slice().to_vec())).collect::<Result<_>>()?;
    let orbits: Vec<Vec<f64>> = candidates
        .par_iter()
        .map(|x| {
            let mut out = Vec::with_capacity(tau * d);
            out.extend_from_slice(x.as_slice());
            let mut y = vec![0.0; d];
            for c in &controls {
                let cur = &out[out.len() - d..];
                sys.map_into(cur, c, &mut y);
                out.extend_from_slice(&y);
            }
            out
        })
        .collect();
    let close = |a: &[f64], b: &[f64]| -> bool {
        a.chunks(d).zip(b.chunks(d)).all(|(p, q)| {
            let dist2: f64 = p.iter().zip(q).map(|(s, t)| (s - t) * (s - t)).sum();
            dist2.sqrt() <= eps
        })
    };
    // bucket by initial position: Bowen-close points are eps-close at t = 0
    let mut buckets: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    let mut chosen: Vec<usize> = Vec::new();
    let mut key = vec![0i64; d];
    for (i, orb) in orbits.iter().enumerate() {
        let base = bucket_of(&orb[..d], eps);
        let mut clash = false;
        'scan: for code in 0..3usize.pow(d as u32) {
            let mut c = code;
            for k in 0..d {
                key[k] = base[k] + (c % 3) as i64 - 1;
                c /= 3;
            }
            if let Some(list) = buckets.get(&key) {
                for &j in list {
                    if close(orb, &orbits[j]) {
                        clash = true;
                        break 'scan;
                    }
                }
            }
        }
        if !clash {
            chosen.push(i);
            buckets.entry(base).or_default().push(i);
        }
    }
    Ok(SeparatedSet {
        tau,
        eps,
        points: chosen.iter().map(|&i| candidates[i].clone()).collect(),
        indices: chosen,
        candidates: candidates.len(),
        maximal: true,
    })
}

/// [`max_separated_points`] over the occupied cell centres of a grid set,
/// in cell-index order.
pub fn max_separated_set(
    sys: &dyn ControlSystem,
    u: &ControlSequence,
    tau: usize,
    eps: f64,
    candidates: &GridSet,
) -> Result<SeparatedSet> {
    let pts: Vec<State> = candidates.cells().iter().map(|&c| State::from_vec(candidates.center(c))).collect();
    max_separated_points(sys, u, tau, eps, &pts)
}

/// For each `τ` in `tau_list`, `log₂ Σ_{x∈F} 2^{−log₂ J⁺φ_{τ,u}(x)}` over a
/// maximal separated subset `F` of `candidates` (points of `Q(u)`); the
/// value is the least-squares slope of that series against `τ` over the
/// last half of the list (or `series/τ` for a single `τ`).
pub fn pressure_separated(
    sys: &dyn ControlSystem,
    u: &ControlSequence,
    candidates: &[State],
    source: UnstableSource,
    tau_list: &[usize],
    eps: f64,
) -> Result<PressureEstimate> {
    if tau_list.is_empty() {
        return Err(Error::Precondition("tau list is empty".into()));
    }
    if source.unstable_dim() > sys.state_dim() {
        return Err(Error::Dimension("unstable dimension exceeds the state dimension".into()));
    }
    let mut series = Vec::with_capacity(tau_list.len());
    for &tau in tau_list {
        let f = max_separated_points(sys, u, tau, eps, candidates)?;
        if f.is_empty() {
            return Err(Error::EmptySeparatedSet);
        }
        let logs: Vec<f64> = f
            .points
            .par_iter()
            .map(|x| unstable_log_volume(sys, x, u, tau, source).map(|l| -l))
            .collect::<Result<_>>()?;
        let value = log2_sum_exp2(logs);
        if !value.is_finite() {
            return Err(Error::Precondition(format!("non-finite separated-set sum at tau = {tau}")));
        }
        series.push(SeriesPoint { tau, log2_value: value, count: f.len() });
    }
    let value = if series.len() == 1 {
        series[0].log2_value / series[0].tau as f64
    } else {
        let xs: Vec<f64> = series.iter().map(|p| p.tau as f64).collect();
        let ys: Vec<f64> = series.iter().map(|p| p.log2_value).collect();
        tail_slope(&xs, &ys)
    };
    let mut est = PressureEstimate::new(Method::Separated, value);
    est.series = series;
    est.samples = Some(candidates.len());
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{Henon, LinearSystem};
    use nalgebra::DVector;

    fn zero2() -> ControlSequence {
        ControlSequence::constant(DVector::zeros(2))
    }

    /// Greedy count on a sorted line where the Bowen distance is
    /// `2^{τ−1}·|x − y|`.
    fn line_oracle(xs: &[f64], tau: usize, eps: f64) -> usize {
        let scale = 2f64.powi(tau as i32 - 1);
        let mut kept: Vec<f64> = vec![];
        for &x in xs {
            if kept.iter().all(|&y| scale * (x - y).abs() > eps) {
                kept.push(x);
            }
        }
        kept.len()
    }

    #[test]
    fn trivial_separated_sets() {
        let toy = LinearSystem::linear_toy(1.0);
        let pts: Vec<State> = (0..11).map(|i| DVector::from_vec(vec![-1.0 + 0.2 * i as f64, 0.0])).collect();
        assert_eq!(max_separated_points(&toy, &zero2(), 1, 10.0, &pts).unwrap().len(), 1);
        assert_eq!(max_separated_points(&toy, &zero2(), 1, 0.1, &pts).unwrap().len(), 11);
    }

    #[test]
    fn toy_unstable_line_matches_oracle() {
        let toy = LinearSystem::linear_toy(1.0);
        let xs: Vec<f64> = (0..=2000).map(|i| -1.0 + 1e-3 * i as f64).collect();
        let pts: Vec<State> = xs.iter().map(|&x| DVector::from_vec(vec![x, 0.0])).collect();
        let mut prev = 0;
        for tau in 4..=7 {
            let f = max_separated_points(&toy, &zero2(), tau, 0.1, &pts).unwrap();
            assert_eq!(f.len(), line_oracle(&xs, tau, 0.1), "tau {tau}");
            if prev > 0 {
                let ratio = f.len() as f64 / prev as f64;
                assert!((1.6..=2.4).contains(&ratio), "ratio {ratio}");
            }
            prev = f.len();
        }
    }

    #[test]
    fn single_point_pressures() {
        let toy = LinearSystem::linear_toy(1.0);
        let src = UnstableSource::Pulled { unstable_dim: 1, backward_steps: 12 };
        let p = pressure_separated(&toy, &zero2(), &[DVector::zeros(2)], src, &[2, 4, 6, 8], 0.1).unwrap();
        assert!((p.value + 1.0).abs() < 1e-12, "{}", p.value);

        let h = Henon::planar(0.08);
        let xs = (-1.3 + 21.69f64.sqrt()) / 2.0;
        let lu = -xs - (xs * xs - 0.3).sqrt();
        let fp = vec![DVector::from_vec(vec![xs, xs])];
        let p = pressure_separated(&h, &zero2(), &fp, src, &[2, 4, 6, 8], 0.1).unwrap();
        assert!((p.value + lu.abs().log2()).abs() < 1e-9, "{}", p.value);
        let sv = UnstableSource::SingularValues { unstable_dim: 1 };
        let q = pressure_separated(&h, &zero2(), &fp, sv, &[4, 8, 12, 16], 0.1).unwrap();
        assert!((q.value + lu.abs().log2()).abs() < 1e-6, "{}", q.value);
    }
}
