//! Stabilization to a hyperbolic periodic orbit over a noiseless channel
//! with a periodic bit budget.
//!
//! The coder observes the state, quantizes the unstable coordinates of the
//! error `x_t − x*_t` inside a box shared with the controller, and sends
//! the cell index. The controller only sees symbols: it rebuilds the box
//! centre, applies a deadbeat correction on the unstable coordinates and
//! propagates the box through the linearization (plus a quadratic margin
//! for the nonlinearity). Stable coordinates are left to contract by
//! themselves.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hyperbolicity::{periodic_frames, DEFAULT_SETTLE};
use crate::pressure::data_rate_r0;
use crate::setops::regularity_rank;
use crate::stats::{stream_rng, substream_seed};
use crate::system::{Control, ControlSequence, ControlSystem, Extension, OrbitSegment, State};

/// Smallest quantizer half-width; keeps the box above round-off in `x − x*`.
const BOX_FLOOR: f64 = 1e-12;
/// Longest schedule period (in orbit periods) used to realise a fractional
/// rate exactly.
const MAX_SCHEDULE_CYCLES: usize = 1000;

/// Periodic per-step bit budget and the log of transmitted symbols.
#[derive(Clone, Debug, Serialize)]
pub struct Channel {
    /// Bits per step over one schedule period; `|𝒜_t| = 2^{bits[t mod P]}`.
    pub bits: Vec<u32>,
    pub log: Vec<u64>,
}

impl Channel {
    /// Schedule of period `P = k·τ` (smallest `k` making `P·rate` an integer,
    /// if any) carrying `⌊P·rate⌋` bits, spread as evenly as possible with the
    /// extra bits first: `b_t = ⌈(t+1)·B/P⌉ − ⌈t·B/P⌉`.
    pub fn from_rate(rate_bits: f64, tau: usize) -> Result<Self> {
        if !(rate_bits > 0.0 && rate_bits.is_finite()) {
            return Err(Error::Precondition(format!("rate must be positive, got {rate_bits}")));
        }
        if rate_bits > 32.0 {
            return Err(Error::Precondition("rate above 32 bits per step".into()));
        }
        let tau = tau.max(1);
        let k = (1..=MAX_SCHEDULE_CYCLES)
            .find(|&k| {
                let total = (k * tau) as f64 * rate_bits;
                (total - total.round()).abs() < 1e-9
            })
            .unwrap_or(MAX_SCHEDULE_CYCLES);
        let period = k * tau;
        let total = ((period as f64 * rate_bits) + 1e-9).floor() as u64;
        let p = period as u64;
        let bits = (0..p).map(|t| ((t + 1) * total).div_ceil(p) as u32 - (t * total).div_ceil(p) as u32).collect();
        Ok(Channel { bits, log: Vec::new() })
    }

    pub fn period(&self) -> usize {
        self.bits.len()
    }

    pub fn bits_at(&self, t: usize) -> u32 {
        self.bits[t % self.bits.len()]
    }

    pub fn alphabet_size(&self, t: usize) -> u64 {
        1u64 << self.bits_at(t)
    }

    /// Designed average rate over one schedule period.
    pub fn scheduled_rate(&self) -> f64 {
        self.bits.iter().map(|&b| b as f64).sum::<f64>() / self.period() as f64
    }

    /// `(1/n)·Σ_{t<n} log₂|𝒜_t|` over the whole periods covered by the log.
    pub fn achieved_rate(&self) -> Option<f64> {
        let n = self.log.len() / self.period() * self.period();
        if n == 0 {
            return None;
        }
        Some((0..n).map(|t| (self.alphabet_size(t) as f64).log2()).sum::<f64>() / n as f64)
    }

    /// The symbol log as one byte per symbol, when every alphabet has at most
    /// 256 letters.
    pub fn log_bytes(&self) -> Option<Vec<u8>> {
        if self.bits.iter().any(|&b| b > 8) {
            return None;
        }
        Some(self.log.iter().map(|&s| s as u8).collect())
    }
}

/// Per-phase linear data in splitting coordinates `e = E⁺z + E⁻w`.
#[derive(Clone, Debug, Serialize)]
pub struct Phase {
    pub point: State,
    pub control: Control,
    /// Rows of `[E⁺ E⁻]⁻¹` giving `z`.
    pub coord_unstable: DMatrix<f64>,
    /// Unstable block of the linearization between this phase and the next.
    pub lambda: DMatrix<f64>,
    /// Unstable rows of the input matrix at the next phase.
    pub input_unstable: DMatrix<f64>,
    /// Deadbeat gain `δu = gain·ẑ`.
    pub gain: DMatrix<f64>,
    // bounds used for box propagation
    lambda_abs: DMatrix<f64>,
    stable_norm: f64,
    cross_to_unstable: Vec<f64>,
    cross_to_stable: f64,
    input_stable_norm: f64,
    frame_unstable_norm: f64,
    frame_stable_norm: f64,
    coord_unstable_rows: Vec<f64>,
    coord_stable_norm: f64,
    coord_stable_norm_next: f64,
    coord_unstable_rows_next: Vec<f64>,
    curvature: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CoderController {
    pub target: OrbitSegment,
    pub eps: f64,
    pub unstable_dim: usize,
    pub schedule: Vec<u32>,
    pub rate_bits: f64,
    /// Data rate `R₀` of the orbit.
    pub r0: f64,
    /// Average per-step factor `2^{R₀ − rate}` by which the quantizer box
    /// changes.
    pub contraction: f64,
    pub contracting: bool,
    pub phases: Vec<Phase>,
}

fn op_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().iter().cloned().fold(0.0, f64::max)
}

fn row_norms(m: &DMatrix<f64>) -> Vec<f64> {
    (0..m.nrows()).map(|i| m.row(i).norm()).collect()
}

/// Builds the coder/controller pair for the periodic orbit `orbit` (one
/// period of states, periodic controls) and a channel of `rate_bits` bits
/// per step on average.
pub fn design_controller(sys: &dyn ControlSystem, orbit: &OrbitSegment, rate_bits: f64, eps: f64) -> Result<CoderController> {
    if !(rate_bits > 0.0) {
        return Err(Error::Precondition(format!("rate must be positive, got {rate_bits}")));
    }
    if !(eps > 0.0) {
        return Err(Error::Precondition("eps must be positive".into()));
    }
    let tau = orbit.len();
    let d = sys.state_dim();
    let r0 = data_rate_r0(sys, orbit)?;

    // controllability over one period, or over d steps when the period is shorter
    let window: Vec<Control> = (0..tau.max(d)).map(|i| orbit.control(i % tau).cloned()).collect::<Result<_>>()?;
    if regularity_rank(sys, &orbit.states[0], &window)? < d {
        return Err(Error::NotControllable);
    }

    let frames = periodic_frames(sys, orbit, DEFAULT_SETTLE).map_err(|e| match e {
        Error::NoHyperbolicSplitting | Error::NotUniformlyHyperbolic => Error::OrbitNotHyperbolic,
        other => other,
    })?;
    let dp = frames[0].0.ncols();
    let coords: Vec<DMatrix<f64>> = frames
        .iter()
        .map(|(eu, es)| {
            let mut basis = DMatrix::zeros(d, d);
            basis.columns_mut(0, dp).copy_from(eu);
            basis.columns_mut(dp, d - dp).copy_from(es);
            basis.try_inverse().ok_or(Error::OrbitNotHyperbolic)
        })
        .collect::<Result<_>>()?;

    let mut phases = Vec::with_capacity(tau);
    for p in 0..tau {
        let q = (p + 1) % tau;
        let x = &orbit.states[p];
        let u = orbit.control(p)?;
        let a = sys.jac_state(x.as_slice(), u.as_slice());
        let b = sys.jac_control(x.as_slice(), u.as_slice());
        let (eu, es) = &frames[p];
        let mut basis = DMatrix::zeros(d, d);
        basis.columns_mut(0, dp).copy_from(eu);
        basis.columns_mut(dp, d - dp).copy_from(es);
        let at = &coords[q] * a * basis;
        let bt = &coords[q] * b;
        let lambda = at.view((0, 0), (dp, dp)).into_owned();
        let input_unstable = bt.rows(0, dp).into_owned();
        let gain = -input_unstable
            .clone()
            .pseudo_inverse(1e-12)
            .map_err(|e| Error::Precondition(e.to_string()))?
            * &lambda;
        let cross_pm = at.view((0, dp), (dp, d - dp)).into_owned();
        let cross_mp = at.view((dp, 0), (d - dp, dp)).into_owned();
        phases.push(Phase {
            point: x.clone(),
            control: u.clone(),
            coord_unstable: coords[p].rows(0, dp).into_owned(),
            lambda_abs: lambda.abs(),
            stable_norm: op_norm(&at.view((dp, dp), (d - dp, d - dp)).into_owned()),
            cross_to_unstable: row_norms(&cross_pm),
            cross_to_stable: op_norm(&cross_mp),
            input_stable_norm: op_norm(&bt.rows(dp, d - dp).into_owned()),
            frame_unstable_norm: op_norm(eu),
            frame_stable_norm: op_norm(es),
            coord_unstable_rows: row_norms(&coords[p].rows(0, dp).into_owned()),
            coord_stable_norm: op_norm(&coords[p].rows(dp, d - dp).into_owned()),
            coord_stable_norm_next: op_norm(&coords[q].rows(dp, d - dp).into_owned()),
            coord_unstable_rows_next: row_norms(&coords[q].rows(0, dp).into_owned()),
            curvature: 0.5 * sys.curvature_bound(x.as_slice(), u.as_slice()),
            lambda,
            input_unstable,
            gain,
        });
    }
    let channel = Channel::from_rate(rate_bits, tau)?;
    let rate = channel.scheduled_rate();
    let contraction = (r0 - rate).exp2();
    Ok(CoderController {
        target: orbit.clone(),
        eps,
        unstable_dim: dp,
        schedule: channel.bits,
        rate_bits: rate,
        r0,
        contraction,
        contracting: contraction < 1.0,
        phases,
    })
}

impl CoderController {
    pub fn channel(&self) -> Channel {
        Channel { bits: self.schedule.clone(), log: Vec::new() }
    }

    fn period(&self) -> usize {
        self.phases.len()
    }
}

/// The controller's state: everything it knows is derived from the symbols
/// received so far. The coder runs an identical copy to know the current
/// quantizer box.
#[derive(Clone, Debug)]
pub struct Decoder<'a> {
    cc: &'a CoderController,
    sys: &'a dyn ControlSystem,
    t: usize,
    center: Vec<f64>,
    half: Vec<f64>,
    stable_bound: f64,
}

impl<'a> Decoder<'a> {
    /// Initial box: all states within `delta` of the orbit point at phase 0.
    pub fn new(sys: &'a dyn ControlSystem, cc: &'a CoderController, delta: f64) -> Self {
        let ph = &cc.phases[0];
        Decoder {
            cc,
            sys,
            t: 0,
            center: vec![0.0; cc.unstable_dim],
            half: ph.coord_unstable_rows.iter().map(|r| (r * delta).max(BOX_FLOOR)).collect(),
            stable_bound: ph.coord_stable_norm * delta,
        }
    }

    /// Cells per unstable coordinate for the current step: each bit halves
    /// the currently widest side.
    fn split(&self) -> Vec<u64> {
        let bits = self.cc.schedule[self.t % self.cc.schedule.len()];
        let mut cells = vec![1u64; self.half.len()];
        for _ in 0..bits {
            let k = (0..cells.len())
                .max_by(|&a, &b| (self.half[a] / cells[a] as f64).total_cmp(&(self.half[b] / cells[b] as f64)))
                .unwrap();
            cells[k] *= 2;
        }
        cells
    }

    /// Symbol for the unstable coordinates `z` (saturating at the box edge).
    pub fn encode(&self, z: &[f64]) -> u64 {
        let cells = self.split();
        let mut symbol = 0u64;
        for k in (0..z.len()).rev() {
            let n = cells[k];
            let lo = self.center[k] - self.half[k];
            let w = 2.0 * self.half[k] / n as f64;
            let i = ((z[k] - lo) / w).floor();
            let i = if i.is_nan() { 0 } else { i.clamp(0.0, (n - 1) as f64) as u64 };
            symbol = symbol * n + i;
        }
        symbol
    }

    /// Decodes a symbol, returns the control to apply and whether it was
    /// saturated, and advances the box to the next step.
    pub fn decode(&mut self, symbol: u64) -> (Control, bool) {
        let cc = self.cc;
        let ph = &cc.phases[self.t % cc.period()];
        let cells = self.split();
        let dp = self.half.len();
        let mut rest = symbol;
        let mut zq = vec![0.0; dp];
        let mut hq = vec![0.0; dp];
        for k in 0..dp {
            let n = cells[k];
            let i = rest % n;
            rest /= n;
            hq[k] = self.half[k] / n as f64;
            zq[k] = self.center[k] - self.half[k] + (2 * i + 1) as f64 * hq[k];
        }
        let zv = DVector::from_column_slice(&zq);
        let mut du = &ph.gain * &zv;
        let mut saturated = false;
        let norm = du.norm();
        if norm > cc.eps {
            du *= cc.eps / norm;
            saturated = true;
        }
        let wanted = &ph.control + &du;
        let u = self.sys.control_range().project(&wanted);
        if (&u - &wanted).norm() > 1e-15 {
            saturated = true;
        }
        let applied = &u - &ph.control;

        // next box: linear image plus margins for the stable part and the
        // second-order remainder
        let z_abs: f64 = zq.iter().zip(&hq).map(|(z, h)| (z.abs() + h).powi(2)).sum::<f64>().sqrt();
        let err = ph.frame_unstable_norm * z_abs + ph.frame_stable_norm * self.stable_bound;
        let remainder = ph.curvature * (err + applied.norm()).powi(2);
        let next_center = &ph.lambda * &zv + &ph.input_unstable * &applied;
        let spread = &ph.lambda_abs * DVector::from_column_slice(&hq);
        for k in 0..dp {
            self.center[k] = next_center[k];
            self.half[k] = (spread[k]
                + ph.cross_to_unstable[k] * self.stable_bound
                + ph.coord_unstable_rows_next[k] * remainder)
                .max(BOX_FLOOR);
        }
        self.stable_bound = ph.stable_norm * self.stable_bound
            + ph.cross_to_stable * z_abs
            + ph.input_stable_norm * applied.norm()
            + ph.coord_stable_norm_next * remainder;
        self.t += 1;
        (u, saturated)
    }
}

/// Outcome of one closed-loop run.
#[derive(Clone, Debug, Serialize)]
pub struct RateLimitedRun {
    pub trajectory: OrbitSegment,
    /// `max_t dist(x_t, Λ)` with `Λ` the orbit points.
    pub sup_dist: f64,
    /// `max_t |u_t − u⁰_t|`.
    pub sup_ctrl_dev: f64,
    pub success: bool,
    /// Step at which the state left the `10·eps` envelope.
    pub failed_at: Option<usize>,
    pub saturated_steps: usize,
    pub channel: Channel,
}

fn dist_to_orbit(orbit: &OrbitSegment, x: &[f64]) -> f64 {
    orbit
        .states
        .iter()
        .map(|p| p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        .fold(f64::INFINITY, f64::min)
}

impl RateLimitedRun {
    /// Recomputes `(sup_dist, sup_ctrl_dev, success)` from the stored
    /// trajectory.
    pub fn recompute(&self, orbit: &OrbitSegment, eps: f64) -> Result<(f64, f64, bool)> {
        let sup_dist = self.trajectory.states.iter().map(|x| dist_to_orbit(orbit, x.as_slice())).fold(0.0, f64::max);
        let mut sup_dev: f64 = 0.0;
        for i in 0..self.trajectory.len().saturating_sub(1) {
            let u = self.trajectory.control(i)?;
            sup_dev = sup_dev.max((u - orbit.control(i % orbit.len())?).norm());
        }
        let ok = self.failed_at.is_none() && sup_dist <= eps && sup_dev <= eps;
        Ok((sup_dist, sup_dev, ok))
    }

    /// `t,x…,u…,symbol` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let d = self.trajectory.states.first().map_or(0, |x| x.len());
        let m = self.trajectory.controls.dim();
        s.push('t');
        for k in 0..d {
            let _ = write!(s, ",x{k}");
        }
        for k in 0..m {
            let _ = write!(s, ",u{k}");
        }
        s.push_str(",symbol\n");
        for (i, x) in self.trajectory.states.iter().enumerate() {
            let _ = write!(s, "{i}");
            for v in x.iter() {
                let _ = write!(s, ",{v:.17e}");
            }
            match (self.trajectory.controls.at(i as i64), self.channel.log.get(i)) {
                (Ok(u), Some(sym)) => {
                    for v in u.iter() {
                        let _ = write!(s, ",{v:.17e}");
                    }
                    let _ = writeln!(s, ",{sym}");
                }
                _ => {
                    s.push_str(&",".repeat(m + 1));
                    s.push('\n');
                }
            }
        }
        s
    }
}

/// Closed-loop rollout from `x0` (which must lie within `delta` of the
/// orbit point at phase 0) for `horizon` steps. Leaving the `10·eps`
/// envelope ends the run as a failure.
pub fn simulate_run(
    sys: &dyn ControlSystem,
    cc: &CoderController,
    channel: Channel,
    x0: &State,
    delta: f64,
    horizon: usize,
    eps: f64,
) -> Result<RateLimitedRun> {
    if (x0 - &cc.phases[0].point).norm() > delta * (1.0 + 1e-12) {
        return Err(Error::Precondition("initial state lies outside the initial quantizer box".into()));
    }
    if channel.bits != cc.schedule {
        return Err(Error::Precondition("channel schedule differs from the controller design".into()));
    }
    let d = sys.state_dim();
    let tau = cc.period();
    let mut channel = channel;
    let mut dec = Decoder::new(sys, cc, delta);
    let mut x = x0.as_slice().to_vec();
    let mut y = vec![0.0; d];
    let mut e = vec![0.0; d];
    let mut z = vec![0.0; cc.unstable_dim];
    let mut states = vec![x0.clone()];
    let mut controls: Vec<Control> = Vec::with_capacity(horizon);
    let mut sup_dist = dist_to_orbit(&cc.target, &x);
    let mut sup_dev: f64 = 0.0;
    let mut saturated_steps = 0;
    let mut failed_at = None;
    for t in 0..horizon {
        let ph = &cc.phases[t % tau];
        // coder
        for k in 0..d {
            e[k] = x[k] - ph.point[k];
        }
        for (i, zi) in z.iter_mut().enumerate() {
            *zi = (0..d).map(|k| ph.coord_unstable[(i, k)] * e[k]).sum();
        }
        let symbol = dec.encode(&z);
        channel.log.push(symbol);
        // controller
        let (u, sat) = dec.decode(symbol);
        saturated_steps += sat as usize;
        sup_dev = sup_dev.max((&u - &ph.control).norm());
        sys.map_into(&x, u.as_slice(), &mut y);
        std::mem::swap(&mut x, &mut y);
        controls.push(u);
        states.push(State::from_column_slice(&x));
        let dist = dist_to_orbit(&cc.target, &x);
        if !(dist <= 10.0 * eps) {
            sup_dist = f64::INFINITY;
            failed_at = Some(t + 1);
            break;
        }
        sup_dist = sup_dist.max(dist);
    }
    let controls = ControlSequence::new(0, controls, Extension::None)?;
    let success = failed_at.is_none() && sup_dist <= eps && sup_dev <= eps;
    Ok(RateLimitedRun {
        trajectory: OrbitSegment { start_time: 0, states, controls },
        sup_dist,
        sup_ctrl_dev: sup_dev,
        success,
        failed_at,
        saturated_steps,
        channel,
    })
}

/// Controls produced by the controller from the symbol log alone.
pub fn replay_controls(sys: &dyn ControlSystem, cc: &CoderController, symbols: &[u64], delta: f64) -> Vec<Control> {
    let mut dec = Decoder::new(sys, cc, delta);
    symbols.iter().map(|&s| dec.decode(s).0).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub rate: f64,
    pub success_fraction: f64,
    /// Mean `sup_dist` over the successful trials (NaN if none).
    pub mean_sup_dist: f64,
    pub contraction: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RateSweep {
    pub r0: f64,
    pub rows: Vec<SweepRow>,
    /// Largest rate with success fraction below one half.
    pub threshold_low: Option<f64>,
    /// Smallest rate with success fraction above one half.
    pub threshold_high: Option<f64>,
}

impl RateSweep {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("rate,success_fraction,mean_sup_dist\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{:.6e}", r.rate, r.success_fraction, r.mean_sup_dist);
        }
        s
    }
}

/// Uniform sample of the closed `delta`-ball around `center`.
fn sample_ball(rng: &mut impl Rng, center: &State, delta: f64) -> State {
    let d = center.len();
    loop {
        let v = DVector::from_fn(d, |_, _| rng.random_range(-1.0..=1.0));
        if v.norm() <= 1.0 {
            return center + v * delta;
        }
    }
}

/// Success fraction over `trials` runs per rate with initial states uniform
/// in the `delta`-ball around the orbit point at phase 0.
#[allow(clippy::too_many_arguments)]
pub fn rate_sweep(
    sys: &dyn ControlSystem,
    orbit: &OrbitSegment,
    rates: &[f64],
    trials: usize,
    eps: f64,
    delta: f64,
    horizon: usize,
    seed: u64,
) -> Result<RateSweep> {
    if rates.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Precondition("rates must be sorted ascending".into()));
    }
    if trials == 0 {
        return Err(Error::Precondition("need at least one trial per rate".into()));
    }
    let stream = substream_seed(seed, "rate-sweep");
    let mut rows = Vec::with_capacity(rates.len());
    let mut r0 = f64::NAN;
    for (ri, &rate) in rates.iter().enumerate() {
        let cc = design_controller(sys, orbit, rate, eps)?;
        r0 = cc.r0;
        let runs: Vec<(bool, f64)> = (0..trials)
            .into_par_iter()
            .map(|k| {
                let mut rng = stream_rng(stream, (ri * trials + k) as u64);
                let x0 = sample_ball(&mut rng, &cc.phases[0].point, delta);
                let run = simulate_run(sys, &cc, cc.channel(), &x0, delta, horizon, eps)?;
                Ok((run.success, run.sup_dist))
            })
            .collect::<Result<_>>()?;
        let ok: Vec<f64> = runs.iter().filter(|r| r.0).map(|r| r.1).collect();
        rows.push(SweepRow {
            rate,
            success_fraction: ok.len() as f64 / trials as f64,
            mean_sup_dist: if ok.is_empty() { f64::NAN } else { ok.iter().sum::<f64>() / ok.len() as f64 },
            contraction: cc.contraction,
        });
    }
    let threshold_low = rows.iter().filter(|r| r.success_fraction < 0.5).map(|r| r.rate).last();
    let threshold_high = rows.iter().find(|r| r.success_fraction > 0.5).map(|r| r.rate);
    Ok(RateSweep { r0, rows, threshold_low, threshold_high })
}
