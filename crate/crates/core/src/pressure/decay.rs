use rand::Rng;
use rayon::prelude::*;

use super::{Method, PressureEstimate, SeriesPoint};
use crate::error::{Error, Result};
use crate::setops::{grid_image, DistanceIndex, FiberEvolution, GridSet};
use crate::stats::{mean_std, stream_rng, substream_seed, tail_half, tail_slope, CHUNK};
use crate::system::{ControlSequence, ControlSystem};

const MIN_SAMPLES: usize = 100_000;
const BOOTSTRAP: usize = 100;

/// The set whose survivors are counted.
#[derive(Clone, Debug)]
pub enum SurvivalDomain<'a> {
    /// Orbits staying in the box `[lo, hi]`.
    Region { lo: Vec<f64>, hi: Vec<f64> },
    /// Orbits staying within `eps` of the fibers (`Q(u, τ, ε)`).
    Fiber { fiber: &'a GridSet, eps: f64, evolution: FiberEvolution },
}

/// Escape rate from the decay of surviving volume: the least-squares slope
/// of `log₂ vol{x : φ(t,x,u) stays in the domain for t ∈ [0;τ)}` against
/// `τ` over the last half of `tau_list`, with a bootstrap standard error
/// over the samples. Values of `τ` without survivors are dropped and the
/// estimate is flagged as truncated.
pub fn volume_decay_escape_rate(
    sys: &dyn ControlSystem,
    u: &ControlSequence,
    domain: &SurvivalDomain,
    tau_list: &[usize],
    samples: usize,
    seed: u64,
) -> Result<PressureEstimate> {
    if samples < MIN_SAMPLES {
        return Err(Error::Precondition(format!("need at least {MIN_SAMPLES} samples, got {samples}")));
    }
    if tau_list.len() < 2 || tau_list.contains(&0) || tau_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Precondition("tau list must hold at least two increasing positive values".into()));
    }
    let d = sys.state_dim();
    let tau_max = *tau_list.last().unwrap();
    let controls: Vec<Vec<f64>> =
        (0..tau_max as i64).map(|t| u.at(t).map(|c| c.as_slice().to_vec())).collect::<Result<_>>()?;

    // membership test per time and the sampling box
    let fibers: Vec<GridSet> = match domain {
        SurvivalDomain::Region { lo, hi } => {
            if lo.len() != d || hi.len() != d || lo.iter().zip(hi).any(|(l, h)| !(l < h)) {
                return Err(Error::Precondition("region must be a nonempty box of the state dimension".into()));
            }
            vec![]
        }
        SurvivalDomain::Fiber { fiber, evolution, .. } => {
            if fiber.is_empty() {
                return Err(Error::Precondition("fiber grid set is empty".into()));
            }
            let mut fs = vec![(*fiber).clone()];
            if *evolution == FiberEvolution::Pushed {
                for t in 1..tau_max {
                    let next = grid_image(sys, &fs[t - 1], &controls[t - 1])?;
                    fs.push(next);
                }
            }
            fs
        }
    };
    let (indices, blo, bhi): (Vec<DistanceIndex>, Vec<f64>, Vec<f64>) = match domain {
        SurvivalDomain::Region { lo, hi } => (vec![], lo.clone(), hi.clone()),
        SurvivalDomain::Fiber { fiber, eps, .. } => {
            let r = eps + fiber.half_diagonal();
            let mut lo = vec![f64::INFINITY; d];
            let mut hi = vec![f64::NEG_INFINITY; d];
            for &c in fiber.cells() {
                for (k, x) in fiber.center(c).into_iter().enumerate() {
                    lo[k] = lo[k].min(x - r);
                    hi[k] = hi[k].max(x + r);
                }
            }
            (fibers.iter().map(|f| DistanceIndex::new(f, *eps)).collect(), lo, hi)
        }
    };
    let inside = |t: usize, x: &[f64]| -> bool {
        match domain {
            SurvivalDomain::Region { lo, hi } => x.iter().enumerate().all(|(k, v)| *v >= lo[k] && *v <= hi[k]),
            SurvivalDomain::Fiber { .. } => indices[if indices.len() == 1 { 0 } else { t }].within(x),
        }
    };
    let box_vol: f64 = (0..d).map(|k| bhi[k] - blo[k]).product();

    // survival time of each sample, capped at tau_max
    let stream = substream_seed(seed, "volume-decay");
    let chunks = samples.div_ceil(CHUNK);
    let survival: Vec<u32> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|ch| {
            let mut rng = stream_rng(stream, ch as u64);
            let n = CHUNK.min(samples - ch * CHUNK);
            let mut x = vec![0.0; d];
            let mut y = vec![0.0; d];
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                for k in 0..d {
                    x[k] = rng.random_range(blo[k]..bhi[k]);
                }
                let mut t = 0;
                while t < tau_max && inside(t, &x) {
                    sys.map_into(&x, &controls[t], &mut y);
                    std::mem::swap(&mut x, &mut y);
                    t += 1;
                }
                out.push(t as u32);
            }
            out
        })
        .collect();

    let mut hist = vec![0usize; tau_max + 1];
    for &t in &survival {
        hist[t as usize] += 1;
    }
    let counts = |hist: &[usize]| -> Vec<usize> {
        // survivors of τ steps: samples with survival time ≥ τ
        let mut tail = vec![0usize; tau_max + 2];
        for t in (0..=tau_max).rev() {
            tail[t] = tail[t + 1] + hist[t];
        }
        tau_list.iter().map(|&tau| tail[tau]).collect()
    };
    let base = counts(&hist);
    let kept: Vec<usize> = (0..tau_list.len()).filter(|&i| base[i] > 0).collect();
    let truncated = kept.len() < tau_list.len();
    if kept.len() < 2 {
        return Err(Error::TotalEscape);
    }
    let taus: Vec<f64> = kept.iter().map(|&i| tau_list[i] as f64).collect();
    let log_vol = |c: &[usize]| -> Vec<f64> {
        kept.iter().map(|&i| (box_vol * c[i] as f64 / samples as f64).log2()).collect()
    };
    let ys = log_vol(&base);
    let value = tail_slope(&taus, &ys);

    let mut rng = stream_rng(substream_seed(seed, "volume-decay-bootstrap"), 0);
    let mut slopes = Vec::with_capacity(BOOTSTRAP);
    let tail = tail_half(kept.len());
    for _ in 0..BOOTSTRAP {
        let mut h = vec![0usize; tau_max + 1];
        for _ in 0..samples {
            h[survival[rng.random_range(0..samples)] as usize] += 1;
        }
        let c = counts(&h);
        if kept[tail.clone()].iter().any(|&i| c[i] == 0) {
            continue;
        }
        slopes.push(tail_slope(&taus, &log_vol(&c)));
    }
    let stderr = if slopes.len() >= 2 { Some(mean_std(&slopes).1) } else { None };

    let mut est = PressureEstimate::new(Method::VolumeDecay, value);
    est.series = kept
        .iter()
        .zip(&ys)
        .map(|(&i, &y)| SeriesPoint { tau: tau_list[i], log2_value: y, count: base[i] })
        .collect();
    est.stderr = stderr;
    est.samples = Some(samples);
    est.truncated = truncated;
    if let SurvivalDomain::Fiber { fiber, .. } = domain {
        est.resolution = Some(fiber.resolution());
    }
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::LinearSystem;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn toy_region_slope() {
        let toy = LinearSystem::linear_toy(1.0);
        let u = ControlSequence::constant(DVector::zeros(2));
        let dom = SurvivalDomain::Region { lo: vec![-1.0, -1.0], hi: vec![1.0, 1.0] };
        let taus: Vec<usize> = (1..=10).collect();
        let est = volume_decay_escape_rate(&toy, &u, &dom, &taus, 200_000, 3).unwrap();
        assert!((est.value + 1.0).abs() < 0.05, "{}", est.value);
        assert!(est.stderr.unwrap() < 0.05);
        assert!(!est.truncated);
    }

    #[test]
    fn contraction_keeps_everything() {
        let sys = LinearSystem::autonomous("half", DMatrix::from_diagonal_element(2, 2, 0.5)).unwrap();
        let u = ControlSequence::constant(DVector::zeros(1));
        let dom = SurvivalDomain::Region { lo: vec![-1.0, -1.0], hi: vec![1.0, 1.0] };
        let est = volume_decay_escape_rate(&sys, &u, &dom, &[1, 2, 3, 4], 100_000, 1).unwrap();
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn truncates_dead_taus() {
        let toy = LinearSystem::linear_toy(1.0);
        let u = ControlSequence::constant(DVector::zeros(2));
        let dom = SurvivalDomain::Region { lo: vec![-1.0, -1.0], hi: vec![1.0, 1.0] };
        let est = volume_decay_escape_rate(&toy, &u, &dom, &[1, 2, 3, 40], 100_000, 1).unwrap();
        assert!(est.truncated);
        assert_eq!(est.series.len(), 3);
        assert!(volume_decay_escape_rate(&toy, &u, &dom, &[1, 2], 10, 1).is_err());
    }
}
