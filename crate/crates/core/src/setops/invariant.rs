use rayon::prelude::*;

use super::GridSet;
use crate::error::{Error, Result};
use crate::system::{Control, ControlSystem};

/// Control boxes `[ulo, uhi]` offered at each step.
type ControlBoxes = Vec<(Vec<f64>, Vec<f64>)>;

/// Outer approximation of the maximal invariant set of `f_u` inside the
/// region: starting from all cells, repeatedly drop cells whose forward or
/// backward image enclosure misses the current set, for at most `horizon`
/// rounds (or until nothing changes).
pub fn maximal_invariant(
    sys: &dyn ControlSystem,
    u: &Control,
    lo: &[f64],
    hi: &[f64],
    resolution: usize,
    horizon: usize,
) -> Result<GridSet> {
    sys.control_range().check(u.as_slice())?;
    let p = u.as_slice().to_vec();
    invariant_core(sys, vec![(p.clone(), p)], lo, hi, resolution, horizon)
}

/// Outer approximation of the controlled invariant set `Q^ε`: a cell stays
/// while some control box of the stencil maps it onto the current set, and
/// some (possibly other) control box pulls it back onto the current set.
pub fn controlled_invariant(
    sys: &dyn ControlSystem,
    lo: &[f64],
    hi: &[f64],
    resolution: usize,
    horizon: usize,
) -> Result<GridSet> {
    invariant_core(sys, sys.control_range().stencil_boxes(), lo, hi, resolution, horizon)
}

fn invariant_core(
    sys: &dyn ControlSystem,
    boxes: ControlBoxes,
    lo: &[f64],
    hi: &[f64],
    resolution: usize,
    horizon: usize,
) -> Result<GridSet> {
    if lo.len() != sys.state_dim() {
        return Err(Error::Dimension("region dimension differs from the state dimension".into()));
    }
    let grid = GridSet::full(lo.to_vec(), hi.to_vec(), resolution)?;
    let d = grid.dim();
    let mut bits = vec![true; grid.total_cells() as usize];
    let mut active: Vec<u64> = grid.cells().to_vec();
    for _ in 0..horizon {
        let keep: Vec<bool> = active
            .par_iter()
            .map(|&c| {
                let (clo, chi) = grid.cell_bounds(c);
                let mut olo = vec![0.0; d];
                let mut ohi = vec![0.0; d];
                let hits = |olo: &[f64], ohi: &[f64]| grid.any_cell_in_box(olo, ohi, |j| bits[j as usize]);
                let fwd = boxes.iter().any(|(ul, uh)| {
                    sys.image_enclosure(&clo, &chi, ul, uh, &mut olo, &mut ohi);
                    hits(&olo, &ohi)
                });
                fwd && boxes.iter().any(|(ul, uh)| {
                    sys.preimage_enclosure(&clo, &chi, ul, uh, &mut olo, &mut ohi);
                    hits(&olo, &ohi)
                })
            })
            .collect();
        let before = active.len();
        let mut next = Vec::with_capacity(before);
        for (&c, k) in active.iter().zip(&keep) {
            if *k {
                next.push(c);
            } else {
                bits[c as usize] = false;
            }
        }
        active = next;
        if active.len() == before || active.is_empty() {
            break;
        }
    }
    if active.is_empty() {
        return Err(Error::EmptyInvariantSet);
    }
    grid.with_cells(active)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{Henon, LinearSystem};
    use nalgebra::DVector;

    #[test]
    fn toy_collapses_to_origin_cells() {
        let toy = LinearSystem::linear_toy(1.0);
        let g = maximal_invariant(&toy, &DVector::zeros(2), &[-1.0, -1.0], &[1.0, 1.0], 64, 20).unwrap();
        assert_eq!(g.len(), 4);
        for &c in g.cells() {
            let (lo, hi) = g.cell_bounds(c);
            assert!(lo.iter().zip(&hi).all(|(l, h)| *l <= 0.0 && *h >= 0.0));
        }
    }

    #[test]
    fn far_region_is_empty() {
        let h = Henon::planar(0.08);
        let r = maximal_invariant(&h, &DVector::zeros(2), &[10.0, 10.0], &[11.0, 11.0], 32, 12);
        assert!(matches!(r, Err(Error::EmptyInvariantSet)));
    }

    #[test]
    fn zero_control_range_matches_uncontrolled() {
        let h = Henon::planar(0.0);
        let (lo, hi) = h.square();
        let a = maximal_invariant(&h, &DVector::zeros(2), &lo, &hi, 64, 12).unwrap();
        let b = controlled_invariant(&h, &lo, &hi, 64, 12).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn monotone_in_horizon() {
        let h = Henon::planar(0.08);
        let (lo, hi) = h.square();
        let mut prev: Option<GridSet> = None;
        for t in [2, 4, 8] {
            let g = maximal_invariant(&h, &DVector::zeros(2), &lo, &hi, 64, t).unwrap();
            if let Some(p) = &prev {
                assert!(g.is_subset_of(p).unwrap());
            }
            prev = Some(g);
        }
    }
}
