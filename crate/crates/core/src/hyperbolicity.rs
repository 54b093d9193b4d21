//! Stable/unstable splittings along orbits, the unstable determinant
//! `J⁺φ`, and fitted hyperbolicity constants `(c, λ)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::stats::{stream_rng, substream_seed};
use crate::system::{ControlSequence, ControlSystem, OrbitSegment, State};

pub const DEFAULT_SETTLE: usize = 30;

/// Minimal ratio between singular-value growth rates that counts as a
/// separation between expanding and contracting directions.
const SEPARATION_RATIO: f64 = 1.01;

/// Orthonormal unstable/stable frames for the orbit indices
/// `first ..= first + len − 1`.
#[derive(Clone, Debug, Serialize)]
pub struct Splitting {
    pub first: usize,
    pub unstable: Vec<DMatrix<f64>>,
    pub stable: Vec<DMatrix<f64>>,
    /// Finite-time Lyapunov exponents (bits/step), decreasing.
    pub exponents: Vec<f64>,
    /// Largest invariance defect `‖(I − P⁺) Df E⁺‖ / ‖Df E⁺‖` (and the same
    /// for `E⁻`) over the window.
    pub residual: f64,
}

impl Splitting {
    pub fn len(&self) -> usize {
        self.unstable.len()
    }

    pub fn is_empty(&self) -> bool {
        self.unstable.is_empty()
    }

    /// Last orbit index carrying a frame.
    pub fn last(&self) -> usize {
        self.first + self.len() - 1
    }

    pub fn contains(&self, i: usize) -> bool {
        i >= self.first && i <= self.last()
    }

    pub fn dim_unstable(&self) -> usize {
        self.unstable[0].ncols()
    }

    pub fn dim_stable(&self) -> usize {
        self.stable[0].ncols()
    }

    pub fn unstable_at(&self, i: usize) -> Result<&DMatrix<f64>> {
        self.check(i)?;
        Ok(&self.unstable[i - self.first])
    }

    pub fn stable_at(&self, i: usize) -> Result<&DMatrix<f64>> {
        self.check(i)?;
        Ok(&self.stable[i - self.first])
    }

    /// The same splitting with the roles of `E⁺` and `E⁻` exchanged.
    pub fn swapped(&self) -> Self {
        Splitting {
            first: self.first,
            unstable: self.stable.clone(),
            stable: self.unstable.clone(),
            exponents: self.exponents.iter().rev().map(|x| -x).collect(),
            residual: self.residual,
        }
    }

    fn check(&self, i: usize) -> Result<()> {
        if self.contains(i) {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange(format!(
                "orbit index {i} outside the splitting window [{}, {}]",
                self.first,
                self.last()
            )))
        }
    }
}

fn jacobians(sys: &dyn ControlSystem, orbit: &OrbitSegment) -> Result<Vec<DMatrix<f64>>> {
    (0..orbit.len() - 1).map(|i| orbit.jacobian(sys, i)).collect()
}

fn invert(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    a.clone()
        .try_inverse()
        .ok_or_else(|| Error::Precondition("singular state Jacobian along the orbit".into()))
}

fn random_frame(d: usize, stream: u64) -> DMatrix<f64> {
    let mut rng = stream_rng(substream_seed(0, "splitting"), stream);
    DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0))
}

/// Pushes a frame through `mats` with QR re-orthonormalization, returning
/// the orthonormal frames before each step (and after the last) together
/// with the accumulated `log₂|R_kk|` from step `count_from` on.
fn qr_sweep(mats: &[&DMatrix<f64>], start: DMatrix<f64>, count_from: usize) -> (Vec<DMatrix<f64>>, Vec<f64>) {
    let d = start.nrows();
    let mut q = start.qr().q();
    let mut frames = Vec::with_capacity(mats.len() + 1);
    let mut sums = vec![0.0; d];
    frames.push(q.clone());
    for (k, a) in mats.iter().enumerate() {
        let qr = (*a * &q).qr();
        let r = qr.r();
        if k >= count_from {
            for (j, s) in sums.iter_mut().enumerate() {
                *s += r[(j, j)].abs().log2();
            }
        }
        q = qr.q();
        frames.push(q.clone());
    }
    (frames, sums)
}

/// Estimates `E⁺`/`E⁻` along `orbit` by forward (resp. backward) power
/// iteration of a random frame. Frames are returned for the orbit indices
/// `settle ..= len − 1 − settle`.
pub fn estimate_splitting(sys: &dyn ControlSystem, orbit: &OrbitSegment, settle: usize) -> Result<Splitting> {
    let len = orbit.len();
    if settle == 0 || len < 2 * settle + 1 {
        return Err(Error::Precondition(format!(
            "orbit of length {len} does not extend {settle} settle steps beyond a reporting window"
        )));
    }
    let d = sys.state_dim();
    let jac = jacobians(sys, orbit)?;
    let inv: Vec<DMatrix<f64>> = jac.iter().map(invert).collect::<Result<_>>()?;

    let fwd: Vec<&DMatrix<f64>> = jac.iter().collect();
    let (fwd_frames, sums) = qr_sweep(&fwd, random_frame(d, 0), settle);
    let counted = (len - 1 - settle).max(1) as f64;
    let exponents: Vec<f64> = sums.iter().map(|s| s / counted).collect();

    let margin = 0.5 * SEPARATION_RATIO.log2();
    if exponents.iter().any(|x| !x.is_finite() || x.abs() < margin) {
        return Err(Error::NoHyperbolicSplitting);
    }
    let d_plus = exponents.iter().filter(|&&x| x > 0.0).count();
    let d_minus = d - d_plus;

    let bwd: Vec<&DMatrix<f64>> = inv.iter().rev().collect();
    let (mut bwd_frames, _) = qr_sweep(&bwd, random_frame(d, 1), 0);
    bwd_frames.reverse();

    let (first, last) = (settle, len - 1 - settle);
    let unstable: Vec<DMatrix<f64>> = (first..=last).map(|i| fwd_frames[i].columns(0, d_plus).into_owned()).collect();
    let stable: Vec<DMatrix<f64>> = (first..=last).map(|i| bwd_frames[i].columns(0, d_minus).into_owned()).collect();

    let mut residual: f64 = 0.0;
    for i in first..last {
        let k = i - first;
        for (frames, n) in [(&unstable, d_plus), (&stable, d_minus)] {
            if n == 0 {
                continue;
            }
            let img = &jac[i] * &frames[k];
            let next = &frames[k + 1];
            let off = &img - next * (next.transpose() * &img);
            residual = residual.max(off.norm() / img.norm());
        }
    }

    Ok(Splitting { first, unstable, stable, exponents, residual })
}

/// Frames `(E⁺, E⁻)` at each phase of a periodic orbit, obtained from a
/// splitting of the orbit unrolled over enough periods.
pub fn periodic_frames(
    sys: &dyn ControlSystem,
    orbit: &OrbitSegment,
    settle: usize,
) -> Result<Vec<(DMatrix<f64>, DMatrix<f64>)>> {
    let n = orbit.len();
    if n == 0 {
        return Err(Error::Precondition("empty periodic orbit".into()));
    }
    let cycles = (2 * settle + n).div_ceil(n) + 1;
    let long = orbit.unrolled(cycles);
    let split = estimate_splitting(sys, &long, settle)?;
    let base = split.first.div_ceil(n) * n;
    (0..n)
        .map(|p| Ok((split.unstable_at(base + p)?.clone(), split.stable_at(base + p)?.clone())))
        .collect()
}

/// `log₂ J⁺φ_{t,u}(x_{t0})`, accumulated one step at a time as
/// `Σ log₂|det((E⁺_{s+1})ᵀ Df E⁺_s)|`.
pub fn unstable_log_det(
    sys: &dyn ControlSystem,
    orbit: &OrbitSegment,
    splitting: &Splitting,
    t0: usize,
    t: usize,
) -> Result<f64> {
    splitting.unstable_at(t0)?;
    splitting.unstable_at(t0 + t)?;
    let mut total = 0.0;
    for s in t0..t0 + t {
        total += one_step_log_det(&orbit.jacobian(sys, s)?, splitting.unstable_at(s)?, splitting.unstable_at(s + 1)?);
    }
    Ok(total)
}

/// `log₂|det(E_nextᵀ A E)|` for orthonormal frames; zero on a trivial
/// unstable bundle.
pub fn one_step_log_det(a: &DMatrix<f64>, e: &DMatrix<f64>, e_next: &DMatrix<f64>) -> f64 {
    if e.ncols() == 0 {
        return 0.0;
    }
    (e_next.transpose() * a * e).determinant().abs().log2()
}

/// Largest principal angle (radians) between the column spans of two
/// orthonormal frames of equal dimension.
pub fn subspace_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    if a.ncols() == 0 {
        return 0.0;
    }
    let sv = (a.transpose() * b).singular_values();
    let smallest = sv.iter().cloned().fold(f64::INFINITY, f64::min).clamp(0.0, 1.0);
    smallest.acos()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HyperbolicityReport {
    pub c: f64,
    pub lambda: f64,
    /// Orbit index of the base point attaining `c`.
    pub worst_t: usize,
    pub dims: [usize; 2],
    pub residual: f64,
    pub horizon: usize,
}

/// Ratio series `|Dφ_k v|/|v|` (`k = 0..=horizon`) for one base point and
/// one basis vector, together with the base index.
struct RatioSeries {
    base: usize,
    ratios: Vec<f64>,
}

fn metric_norm(v: &DVector<f64>, metric: Option<&DMatrix<f64>>) -> f64 {
    match metric {
        None => v.norm(),
        Some(s) => (v.transpose() * s * v)[(0, 0)].sqrt(),
    }
}

/// Propagates each column of the frame at `base` for `horizon` steps,
/// forward (`dir = 1`) or backward (`dir = −1`), projecting back onto the
/// propagated frame after every step so that round-off never leaves the
/// bundle.
fn propagate(
    mats: &[DMatrix<f64>],
    inv: &[DMatrix<f64>],
    frames: &[DMatrix<f64>],
    first: usize,
    base: usize,
    horizon: usize,
    forward: bool,
    metric: Option<&DMatrix<f64>>,
) -> Vec<RatioSeries> {
    let e = &frames[base - first];
    (0..e.ncols())
        .map(|j| {
            let mut v: DVector<f64> = e.column(j).into_owned();
            let n0 = metric_norm(&v, metric);
            let mut ratios = Vec::with_capacity(horizon + 1);
            ratios.push(1.0);
            let mut i = base;
            for _ in 0..horizon {
                if forward {
                    v = &mats[i] * v;
                    i += 1;
                } else {
                    v = &inv[i - 1] * v;
                    i -= 1;
                }
                let f = &frames[i - first];
                v = f * (f.transpose() * v);
                ratios.push(metric_norm(&v, metric) / n0);
            }
            RatioSeries { base, ratios }
        })
        .collect()
}

/// Smallest grid `λ` (step 1e-3) whose constant `c`, fitted on the first
/// half of the horizon, bounds the whole series; returns `(c, λ, worst base)`.
fn fit_constants(series: &[RatioSeries], horizon: usize) -> Option<(f64, f64, usize)> {
    let half = (horizon / 2).max(1);
    for step in 1..1000 {
        let lambda = step as f64 * 1e-3;
        let logl = lambda.ln();
        let mut c_half = 1.0f64;
        let mut c_all = 1.0f64;
        let mut worst = (1.0f64, series.first().map_or(0, |s| s.base));
        for s in series {
            for (k, &r) in s.ratios.iter().enumerate() {
                let c = (r.ln() - k as f64 * logl).exp();
                if k <= half {
                    c_half = c_half.max(c);
                }
                c_all = c_all.max(c);
                if c > worst.0 {
                    worst = (c, s.base);
                }
            }
        }
        if c_all <= c_half * (1.0 + 1e-9) {
            return Some((c_all, lambda, worst.1));
        }
    }
    None
}

struct Prepared {
    mats: Vec<DMatrix<f64>>,
    inv: Vec<DMatrix<f64>>,
}

fn prepare(sys: &dyn ControlSystem, orbit: &OrbitSegment) -> Result<Prepared> {
    let mats = jacobians(sys, orbit)?;
    let inv = mats.iter().map(invert).collect::<Result<_>>()?;
    Ok(Prepared { mats, inv })
}

/// Fits `(c, λ)` such that `|Dφ_t v| ≤ cλᵗ|v|` on `E⁻` and
/// `|Dφ_{−t} v| ≤ cλᵗ|v|` on `E⁺` for all `t ≤ horizon` and all frame basis
/// vectors at base points whose `horizon`-step orbit stays in the window.
pub fn verify_hyperbolicity(
    sys: &dyn ControlSystem,
    orbit: &OrbitSegment,
    splitting: &Splitting,
    horizon: usize,
) -> Result<HyperbolicityReport> {
    verify_hyperbolicity_with_metric(sys, orbit, splitting, horizon, None)
}

/// As [`verify_hyperbolicity`], measuring lengths in the constant metric
/// `|v|² = vᵀ S v`.
pub fn verify_hyperbolicity_with_metric(
    sys: &dyn ControlSystem,
    orbit: &OrbitSegment,
    splitting: &Splitting,
    horizon: usize,
    metric: Option<&DMatrix<f64>>,
) -> Result<HyperbolicityReport> {
    if horizon == 0 || splitting.len() <= horizon {
        return Err(Error::Precondition(format!(
            "splitting window of {} points does not cover horizon {horizon}",
            splitting.len()
        )));
    }
    let p = prepare(sys, orbit)?;
    let (first, last) = (splitting.first, splitting.last());
    let stable_bases: Vec<usize> = (first..=last - horizon).collect();
    let unstable_bases: Vec<usize> = (first + horizon..=last).collect();
    let mut series: Vec<RatioSeries> = stable_bases
        .par_iter()
        .flat_map_iter(|&b| propagate(&p.mats, &p.inv, &splitting.stable, first, b, horizon, true, metric))
        .collect();
    series.extend(
        unstable_bases
            .par_iter()
            .flat_map_iter(|&b| propagate(&p.mats, &p.inv, &splitting.unstable, first, b, horizon, false, metric))
            .collect::<Vec<_>>(),
    );
    let (c, lambda, worst_t) = fit_constants(&series, horizon).ok_or(Error::NotUniformlyHyperbolic)?;
    Ok(HyperbolicityReport {
        c,
        lambda,
        worst_t,
        dims: [splitting.dim_unstable(), splitting.dim_stable()],
        residual: splitting.residual,
        horizon,
    })
}

/// Checks the forward-expansion form of the unstable estimate:
/// `|Dφ_t v| ≥ c⁻¹λ⁻ᵗ|v|` for `v ∈ E⁺` and `t ≤ horizon`, with the
/// constants of `report`. Base points are those whose forward orbit lands on
/// base points covered by the backward estimate.
pub fn check_expansion_equivalence(
    sys: &dyn ControlSystem,
    orbit: &OrbitSegment,
    splitting: &Splitting,
    report: &HyperbolicityReport,
    horizon: usize,
) -> Result<bool> {
    let (first, last) = (splitting.first, splitting.last());
    if last < first + 2 * horizon {
        return Err(Error::Precondition(format!(
            "splitting window of {} points does not cover twice the horizon {horizon}",
            splitting.len()
        )));
    }
    let p = prepare(sys, orbit)?;
    let bases: Vec<usize> = (first + horizon..=last - horizon).collect();
    let ok = bases.par_iter().all(|&b| {
        propagate(&p.mats, &p.inv, &splitting.unstable, first, b, horizon, true, None)
            .iter()
            .all(|s| {
                s.ratios.iter().enumerate().all(|(k, &r)| {
                    let bound = (-(report.c.ln()) - k as f64 * report.lambda.ln()).exp();
                    r >= bound * (1.0 - 1e-9)
                })
            })
    });
    Ok(ok)
}

#[derive(Clone, Debug, Serialize)]
pub struct VolumeLemmaReport {
    pub eps: f64,
    pub taus: Vec<usize>,
    /// Monte-Carlo `vol(B^{u,τ}_ε(x))`.
    pub volumes: Vec<f64>,
    /// `log₂ J⁺φ_{τ,u}(x)`.
    pub log_det: Vec<f64>,
    /// `vol · J⁺`, which the volume lemma keeps in a band `[1/C, C]`.
    pub products: Vec<f64>,
    /// Smallest `C ≥ 1` such that all products lie in `[m/C, m·C]`, `m` the
    /// geometric mean of the products.
    pub band: f64,
}

/// Monte-Carlo diagnostic for the volume lemma at orbit index `base`:
/// Bowen-ball volumes times unstable determinants for `τ = 1..=max_tau`.
/// Series stop at the first `τ` without hits.
#[allow(clippy::too_many_arguments)]
pub fn volume_lemma_diagnostic(
    sys: &dyn ControlSystem,
    orbit: &OrbitSegment,
    splitting: &Splitting,
    base: usize,
    eps: f64,
    max_tau: usize,
    samples: usize,
    seed: u64,
) -> Result<VolumeLemmaReport> {
    let d = sys.state_dim();
    let x: State = orbit.states[base].clone();
    let controls: ControlSequence = orbit.controls.shifted(orbit.time_of(base));
    let box_vol = (2.0 * eps).powi(d as i32);
    let dists: Vec<f64> = (0..samples)
        .into_par_iter()
        .chunks(crate::stats::CHUNK)
        .enumerate()
        .flat_map_iter(|(chunk, idx)| {
            let mut rng = stream_rng(substream_seed(seed, "volume-lemma"), chunk as u64);
            let x = &x;
            let controls = &controls;
            idx.into_iter()
                .map(move |_| {
                    let y = x + DVector::from_fn(d, |_, _| rng.random_range(-eps..eps));
                    bowen_profile(sys, controls, max_tau, x, &y)
                })
                .collect::<Vec<_>>()
        })
        .flatten()
        .collect();
    let per_sample = max_tau;
    let mut taus = Vec::new();
    let mut volumes = Vec::new();
    let mut log_det = Vec::new();
    let mut products = Vec::new();
    for tau in 1..=max_tau {
        let hits = dists.chunks(per_sample).filter(|p| p[tau - 1] <= eps).count();
        if hits == 0 {
            break;
        }
        let vol = box_vol * hits as f64 / samples as f64;
        let ld = unstable_log_det(sys, orbit, splitting, base, tau)?;
        taus.push(tau);
        volumes.push(vol);
        log_det.push(ld);
        products.push(vol * ld.exp2());
    }
    let band = if products.is_empty() {
        f64::NAN
    } else {
        let logs: Vec<f64> = products.iter().map(|p| p.ln()).collect();
        let m = logs.iter().sum::<f64>() / logs.len() as f64;
        logs.iter().map(|l| (l - m).abs()).fold(0.0, f64::max).exp()
    };
    Ok(VolumeLemmaReport { eps, taus, volumes, log_det, products, band })
}

/// Running Bowen distances `d^{u,τ}(x, y)` for `τ = 1..=max_tau`.
fn bowen_profile(sys: &dyn ControlSystem, u: &ControlSequence, max_tau: usize, x: &State, y: &State) -> Vec<f64> {
    let d = x.len();
    let mut a = x.as_slice().to_vec();
    let mut b = y.as_slice().to_vec();
    let mut na = vec![0.0; d];
    let mut nb = vec![0.0; d];
    let mut best: f64 = 0.0;
    let mut out = Vec::with_capacity(max_tau);
    for s in 0..max_tau {
        let dist = a.iter().zip(&b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
        best = if dist.is_nan() { f64::INFINITY } else { best.max(dist) };
        out.push(best);
        if s + 1 < max_tau {
            let us = u.at(s as i64).map(|c| c.as_slice().to_vec()).unwrap_or_default();
            if us.is_empty() {
                out.resize(max_tau, f64::INFINITY);
                break;
            }
            sys.map_into(&a, &us, &mut na);
            sys.map_into(&b, &us, &mut nb);
            std::mem::swap(&mut a, &mut na);
            std::mem::swap(&mut b, &mut nb);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{Henon, LinearSystem};

    fn fixed_orbit(h: &Henon, len: usize) -> OrbitSegment {
        h.coded_orbit(&[true]).unwrap().unrolled(len - 1)
    }

    /// Eigen-decomposition of `[[−2x, −b], [1, 0]]`: `λ² + 2xλ + b = 0`.
    fn henon_eigs(x: f64, b: f64) -> (f64, f64) {
        let r = (x * x - b).sqrt();
        (-x - r, -x + r)
    }

    #[test]
    fn toy_splitting_is_coordinate_axes() {
        let toy = LinearSystem::linear_toy(1.0);
        let orb = OrbitSegment::trajectory(
            &toy,
            &DVector::zeros(2),
            ControlSequence::constant(DVector::zeros(2)),
            0,
            80,
        )
        .unwrap();
        let s = estimate_splitting(&toy, &orb, DEFAULT_SETTLE).unwrap();
        assert_eq!((s.dim_unstable(), s.dim_stable()), (1, 1));
        for (eu, es) in s.unstable.iter().zip(&s.stable) {
            assert!(eu[(1, 0)].abs() < 1e-12 && (eu[(0, 0)].abs() - 1.0).abs() < 1e-12);
            assert!(es[(0, 0)].abs() < 1e-12 && (es[(1, 0)].abs() - 1.0).abs() < 1e-12);
        }
        assert!(s.residual < 1e-12);
        assert!((unstable_log_det(&toy, &orb, &s, 35, 3).unwrap() - 3.0).abs() < 1e-12);
        let rep = verify_hyperbolicity(&toy, &orb, &s, 10).unwrap();
        assert!((rep.c - 1.0).abs() < 1e-9);
        assert!((rep.lambda - 0.5).abs() < 1e-12);
        assert!(check_expansion_equivalence(&toy, &orb, &s, &rep, 5).unwrap());
        assert!(!check_expansion_equivalence(&toy, &orb, &s.swapped(), &rep, 5).unwrap());
    }

    #[test]
    fn henon_fixed_point_splitting_matches_eigenvectors() {
        let h = Henon::planar(0.08);
        let orb = fixed_orbit(&h, 100);
        let x = orb.states[0][0];
        let (lu, ls) = henon_eigs(x, 0.3);
        assert!((lu + 3.2654).abs() < 1e-3);
        let s = estimate_splitting(&h, &orb, DEFAULT_SETTLE).unwrap();
        // eigenvector of [[−2x, −0.3], [1, 0]] for λ is (λ, 1)
        let ev = DVector::from_vec(vec![lu, 1.0]).normalize();
        let ev_s = DVector::from_vec(vec![ls, 1.0]).normalize();
        for (eu, es) in s.unstable.iter().zip(&s.stable) {
            assert!((eu.column(0).dot(&ev).abs() - 1.0).abs() < 1e-12);
            assert!((es.column(0).dot(&ev_s).abs() - 1.0).abs() < 1e-12);
        }
        let one = unstable_log_det(&h, &orb, &s, 40, 1).unwrap();
        assert!((one - lu.abs().log2()).abs() < 1e-10);
        assert!((one - 1.707).abs() < 1e-3);
        let rep = verify_hyperbolicity(&h, &orb, &s, 12).unwrap();
        let expect = ls.abs().max(1.0 / lu.abs());
        assert!((expect - 0.3063).abs() < 1e-4);
        assert!(rep.lambda >= expect && rep.lambda < expect + 1e-3);
        assert!(rep.c >= 1.0);
        assert!(check_expansion_equivalence(&h, &orb, &s, &rep, 6).unwrap());
    }

    #[test]
    fn isometries_have_no_splitting() {
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let rot = LinearSystem::autonomous("rotation", DMatrix::from_row_slice(2, 2, &[c, -s, s, c])).unwrap();
        let id = LinearSystem::autonomous("identity", DMatrix::identity(2, 2)).unwrap();
        for sys in [rot, id] {
            let orb = OrbitSegment::trajectory(
                &sys,
                &DVector::from_vec(vec![0.2, 0.1]),
                ControlSequence::constant(DVector::zeros(1)),
                0,
                80,
            )
            .unwrap();
            assert!(matches!(estimate_splitting(&sys, &orb, 30), Err(Error::NoHyperbolicSplitting)));
        }
    }

    #[test]
    fn swapped_frames_are_not_uniformly_hyperbolic() {
        let toy = LinearSystem::linear_toy(1.0);
        let orb = OrbitSegment::trajectory(
            &toy,
            &DVector::zeros(2),
            ControlSequence::constant(DVector::zeros(2)),
            0,
            80,
        )
        .unwrap();
        let s = estimate_splitting(&toy, &orb, 30).unwrap().swapped();
        assert!(matches!(verify_hyperbolicity(&toy, &orb, &s, 10), Err(Error::NotUniformlyHyperbolic)));
    }

    #[test]
    fn window_errors() {
        let toy = LinearSystem::linear_toy(1.0);
        let orb = OrbitSegment::trajectory(
            &toy,
            &DVector::zeros(2),
            ControlSequence::constant(DVector::zeros(2)),
            0,
            70,
        )
        .unwrap();
        let s = estimate_splitting(&toy, &orb, 30).unwrap();
        assert!(matches!(unstable_log_det(&toy, &orb, &s, 29, 1), Err(Error::IndexOutOfRange(_))));
        assert!(matches!(unstable_log_det(&toy, &orb, &s, 35, 10), Err(Error::IndexOutOfRange(_))));
        assert!(estimate_splitting(&toy, &orb, 40).is_err());
    }
}
