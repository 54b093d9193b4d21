use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{DistanceIndex, GridSet};
use crate::error::{Error, Result};
use crate::stats::{stream_rng, substream_seed, CHUNK};
use crate::system::{ControlSequence, ControlSystem};

/// How the fiber `Q(θᵗu)` is obtained at times `t ≥ 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum FiberEvolution {
    /// The same grid set at every time (invariant fibers of constant controls).
    Fixed,
    /// Grid image of the previous fiber under `u_{t−1}`.
    Pushed,
}

#[derive(Clone, Debug, Serialize)]
pub struct TubeVolume {
    pub tau: usize,
    pub eps: f64,
    pub volume: f64,
    pub stderr: f64,
    pub samples: usize,
    pub hits: usize,
    /// No sample stayed close to the fibers.
    pub zero: bool,
}

/// Grid image of `set` under `f_u`: every cell overlapped by the image
/// enclosure of an occupied cell.
pub fn grid_image(sys: &dyn ControlSystem, set: &GridSet, u: &[f64]) -> Result<GridSet> {
    let d = set.dim();
    let cells: Vec<u64> = set
        .cells()
        .par_iter()
        .flat_map_iter(|&c| {
            let (lo, hi) = set.cell_bounds(c);
            let mut olo = vec![0.0; d];
            let mut ohi = vec![0.0; d];
            sys.image_enclosure(&lo, &hi, u, u, &mut olo, &mut ohi);
            let mut out = Vec::new();
            set.any_cell_in_box(&olo, &ohi, |j| {
                out.push(j);
                false
            });
            out
        })
        .collect();
    set.with_cells(cells)
}

/// Monte-Carlo volume of `Q(u,τ,ε) = {x : dist(φ(t,x,u), fiber_t) ≤ ε, 0 ≤ t < τ}`.
#[allow(clippy::too_many_arguments)]
pub fn fiber_tube_volume(
    sys: &dyn ControlSystem,
    u: &ControlSequence,
    tau: usize,
    eps: f64,
    fiber: &GridSet,
    evolution: FiberEvolution,
    samples: usize,
    seed: u64,
) -> Result<TubeVolume> {
    if tau == 0 {
        return Err(Error::Precondition("tau must be at least 1".into()));
    }
    if fiber.is_empty() {
        return Err(Error::Precondition("fiber grid set is empty".into()));
    }
    if samples == 0 {
        return Err(Error::Precondition("need at least one sample".into()));
    }
    let d = sys.state_dim();
    let mut fibers = vec![fiber.clone()];
    if evolution == FiberEvolution::Pushed {
        for t in 1..tau {
            let next = grid_image(sys, &fibers[t - 1], u.at(t as i64 - 1)?.as_slice())?;
            fibers.push(next);
        }
    }
    let index: Vec<DistanceIndex> = fibers.iter().map(|f| DistanceIndex::new(f, eps)).collect();
    let controls: Vec<Vec<f64>> =
        (0..tau.saturating_sub(1)).map(|t| u.at(t as i64).map(|c| c.as_slice().to_vec())).collect::<Result<_>>()?;

    // sampling box: centres of the initial fiber dilated by ε + half diagonal
    let r = eps + fiber.half_diagonal();
    let mut blo = vec![f64::INFINITY; d];
    let mut bhi = vec![f64::NEG_INFINITY; d];
    for &c in fiber.cells() {
        for (k, x) in fiber.center(c).into_iter().enumerate() {
            blo[k] = blo[k].min(x - r);
            bhi[k] = bhi[k].max(x + r);
        }
    }
    let box_vol: f64 = (0..d).map(|k| bhi[k] - blo[k]).product();
    let stream = substream_seed(seed, "fiber-tube");
    let chunks = samples.div_ceil(CHUNK);
    let hits: usize = (0..chunks)
        .into_par_iter()
        .map(|ch| {
            let mut rng = stream_rng(stream, ch as u64);
            let n = CHUNK.min(samples - ch * CHUNK);
            let mut x = vec![0.0; d];
            let mut y = vec![0.0; d];
            let mut count = 0;
            for _ in 0..n {
                for k in 0..d {
                    x[k] = rng.random_range(blo[k]..bhi[k]);
                }
                let mut ok = true;
                for t in 0..tau {
                    let idx = &index[if evolution == FiberEvolution::Fixed { 0 } else { t }];
                    if !idx.within(&x) {
                        ok = false;
                        break;
                    }
                    if t + 1 < tau {
                        sys.map_into(&x, &controls[t], &mut y);
                        std::mem::swap(&mut x, &mut y);
                    }
                }
                count += ok as usize;
            }
            count
        })
        .sum();
    let p = hits as f64 / samples as f64;
    Ok(TubeVolume {
        tau,
        eps,
        volume: box_vol * p,
        stderr: box_vol * (p * (1.0 - p) / samples as f64).sqrt(),
        samples,
        hits,
        zero: hits == 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::LinearSystem;
    use nalgebra::DVector;

    #[test]
    fn toy_tube_halves_per_step() {
        let toy = LinearSystem::linear_toy(1.0);
        let fiber = GridSet::from_points(vec![-2.0, -2.0], vec![2.0, 2.0], 1024, [[0.0, 0.0].as_slice()]).unwrap();
        let u = ControlSequence::constant(DVector::zeros(2));
        let mut logs = vec![];
        for tau in 1..=5 {
            let v = fiber_tube_volume(&toy, &u, tau, 0.5, &fiber, FiberEvolution::Fixed, 200_000, 1).unwrap();
            logs.push(v.volume.log2());
        }
        let taus: Vec<f64> = (1..=5).map(|t| t as f64).collect();
        let (slope, _) = crate::stats::ols(&taus[1..], &logs[1..]);
        assert!((slope + 1.0).abs() < 0.05, "slope {slope}");
    }
}
