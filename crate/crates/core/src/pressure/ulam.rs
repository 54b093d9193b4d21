use std::collections::VecDeque;

use rayon::prelude::*;
use serde::Serialize;

use super::{Method, PressureEstimate};
use crate::error::{Error, Result};
use crate::setops::GridSet;
use crate::system::{Control, ControlSystem};

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITER: usize = 100_000;

/// Sparse sub-stochastic matrix `P[i][j]` = fraction of the sample points of
/// cell `i` whose image lies in cell `j`; mass leaving the region is dropped.
#[derive(Clone, Debug, Serialize)]
pub struct TransferMatrix {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub resolution: usize,
    pub samples_per_cell: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<u32>,
    pub vals: Vec<f64>,
}

impl TransferMatrix {
    pub fn rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }
}

/// Builds the transfer matrix of `f_u` on a uniform grid over `[lo, hi]`
/// with `samples_per_cell = k^d` points per cell on a regular `k^d` lattice.
pub fn ulam_transfer_matrix(
    sys: &dyn ControlSystem,
    u: &Control,
    lo: &[f64],
    hi: &[f64],
    resolution: usize,
    samples_per_cell: usize,
) -> Result<TransferMatrix> {
    sys.control_range().check(u.as_slice())?;
    let grid = GridSet::empty(lo.to_vec(), hi.to_vec(), resolution)?;
    let d = grid.dim();
    if d != sys.state_dim() {
        return Err(Error::Dimension("region dimension differs from the state dimension".into()));
    }
    if grid.total_cells() > u32::MAX as u64 {
        return Err(Error::Precondition("too many cells for a transfer matrix".into()));
    }
    let k = (samples_per_cell as f64).powf(1.0 / d as f64).round() as usize;
    if k == 0 || k.pow(d as u32) != samples_per_cell {
        return Err(Error::Precondition(format!(
            "samples per cell ({samples_per_cell}) must be a perfect {d}-th power"
        )));
    }
    let n = grid.total_cells() as usize;
    let weight = 1.0 / samples_per_cell as f64;
    let widths: Vec<f64> = (0..d).map(|a| grid.cell_width(a)).collect();
    let rows: Vec<Vec<(u32, f64)>> = (0..n)
        .into_par_iter()
        .map_init(
            || (vec![0.0; d], vec![0.0; d], Vec::with_capacity(samples_per_cell)),
            |(x, y, hits), cell| {
                let (clo, _) = grid.cell_bounds(cell as u64);
                hits.clear();
                for s in 0..samples_per_cell {
                    let mut rest = s;
                    for a in 0..d {
                        x[a] = clo[a] + ((rest % k) as f64 + 0.5) / k as f64 * widths[a];
                        rest /= k;
                    }
                    sys.map_into(x, u.as_slice(), y);
                    if let Some(j) = grid.locate(y) {
                        hits.push(j as u32);
                    }
                }
                hits.sort_unstable();
                let mut row: Vec<(u32, f64)> = Vec::new();
                for &j in hits.iter() {
                    match row.last_mut() {
                        Some((c, w)) if *c == j => *w += weight,
                        _ => row.push((j, weight)),
                    }
                }
                row
            },
        )
        .collect();
    let mut row_ptr = Vec::with_capacity(n + 1);
    row_ptr.push(0);
    let nnz: usize = rows.iter().map(|r| r.len()).sum();
    let mut cols = Vec::with_capacity(nnz);
    let mut vals = Vec::with_capacity(nnz);
    for r in rows {
        for (c, v) in r {
            cols.push(c);
            vals.push(v);
        }
        row_ptr.push(cols.len());
    }
    Ok(TransferMatrix {
        lo: lo.to_vec(),
        hi: hi.to_vec(),
        resolution,
        samples_per_cell,
        row_ptr,
        cols,
        vals,
    })
}

/// Cells lying on a path between cycles of the transition graph: repeatedly
/// drops cells without predecessors or successors among the survivors.
/// The dropped part is nilpotent, so the spectral radius is unchanged.
fn trimmed_cells(m: &TransferMatrix) -> Vec<usize> {
    let n = m.rows();
    let mut indeg = vec![0u32; n];
    let mut outdeg = vec![0u32; n];
    for i in 0..n {
        let (cols, _) = m.row(i);
        outdeg[i] = cols.len() as u32;
        for &j in cols {
            indeg[j as usize] += 1;
        }
    }
    // transpose for predecessor updates
    let mut t_ptr = vec![0usize; n + 1];
    for &j in &m.cols {
        t_ptr[j as usize + 1] += 1;
    }
    for i in 0..n {
        t_ptr[i + 1] += t_ptr[i];
    }
    let mut fill = t_ptr.clone();
    let mut t_cols = vec![0u32; m.nnz()];
    for i in 0..n {
        for &j in m.row(i).0 {
            t_cols[fill[j as usize]] = i as u32;
            fill[j as usize] += 1;
        }
    }
    let mut alive = vec![true; n];
    let mut queue: VecDeque<usize> = (0..n).filter(|&i| indeg[i] == 0 || outdeg[i] == 0).collect();
    for &i in &queue {
        alive[i] = false;
    }
    while let Some(i) = queue.pop_front() {
        for &j in m.row(i).0 {
            let j = j as usize;
            indeg[j] -= 1;
            if alive[j] && indeg[j] == 0 {
                alive[j] = false;
                queue.push_back(j);
            }
        }
        for &p in &t_cols[t_ptr[i]..t_ptr[i + 1]] {
            let p = p as usize;
            outdeg[p] -= 1;
            if alive[p] && outdeg[p] == 0 {
                alive[p] = false;
                queue.push_back(p);
            }
        }
    }
    (0..n).filter(|&i| alive[i]).collect()
}

/// Leading eigenvalue of the trimmed transfer matrix by power iteration on
/// densities, stopping when the normalized density changes by less than
/// `1e-10` in `ℓ¹`. Returns `(eigenvalue, iterations, converged, cells)`.
pub(crate) fn leading_eigenvalue(m: &TransferMatrix) -> Result<(f64, usize, bool, usize)> {
    let keep = trimmed_cells(m);
    if keep.is_empty() {
        return Err(Error::TotalEscape);
    }
    let mut index = vec![u32::MAX; m.rows()];
    for (k, &i) in keep.iter().enumerate() {
        index[i] = k as u32;
    }
    let mut ptr = vec![0usize];
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    for &i in &keep {
        let (c, v) = m.row(i);
        for (j, w) in c.iter().zip(v) {
            let jj = index[*j as usize];
            if jj != u32::MAX {
                cols.push(jj);
                vals.push(*w);
            }
        }
        ptr.push(cols.len());
    }
    let n = keep.len();
    let mut rho = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    let mut lambda = 0.0;
    for it in 1..=POWER_MAX_ITER {
        next.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            let r = rho[i];
            if r == 0.0 {
                continue;
            }
            for k in ptr[i]..ptr[i + 1] {
                next[cols[k] as usize] += r * vals[k];
            }
        }
        let mass: f64 = next.iter().sum();
        if !(mass > 1e-300) {
            return Err(Error::TotalEscape);
        }
        lambda = mass;
        let mut change = 0.0;
        for (a, b) in rho.iter_mut().zip(&next) {
            let v = b / mass;
            change += (v - *a).abs();
            *a = v;
        }
        if change < POWER_TOL {
            return Ok((lambda, it, true, n));
        }
    }
    Ok((lambda, POWER_MAX_ITER, false, n))
}

/// Escape-rate estimate `log₂ λ` from the leading eigenvalue `λ` of Ulam's
/// transfer matrix for `f_u` on the region `[lo, hi]`.
pub fn ulam_escape_rate(
    sys: &dyn ControlSystem,
    u: &Control,
    lo: &[f64],
    hi: &[f64],
    resolution: usize,
    samples_per_cell: usize,
) -> Result<PressureEstimate> {
    let m = ulam_transfer_matrix(sys, u, lo, hi, resolution, samples_per_cell)?;
    let (lambda, iterations, converged, cells) = leading_eigenvalue(&m)?;
    if lambda < 1e-12 {
        return Err(Error::TotalEscape);
    }
    let mut est = PressureEstimate::new(Method::Ulam, lambda.log2());
    est.resolution = Some(resolution);
    est.samples = Some(samples_per_cell);
    est.eigenvalue = Some(lambda);
    est.iterations = Some(iterations);
    est.converged = converged;
    est.cells = Some(cells);
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{LinearSystem, Henon};
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn rows_are_substochastic() {
        let h = Henon::planar(0.0);
        let (lo, hi) = h.square();
        let m = ulam_transfer_matrix(&h, &DVector::zeros(2), &lo, &hi, 32, 16).unwrap();
        for i in 0..m.rows() {
            let (c, v) = m.row(i);
            let s: f64 = v.iter().sum();
            assert!(s <= 1.0 + 1e-12);
            assert!(v.iter().all(|&w| w > 0.0 && w <= 1.0));
            assert!(c.windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn toy_escape_rate_is_minus_one() {
        let toy = LinearSystem::linear_toy(1.0);
        let est = ulam_escape_rate(&toy, &DVector::zeros(2), &[-1.0, -1.0], &[1.0, 1.0], 256, 100).unwrap();
        assert!((est.value + 1.0).abs() < 0.05, "{}", est.value);
        assert!(est.converged);
    }

    #[test]
    fn contraction_has_no_escape() {
        let sys = LinearSystem::autonomous("half", DMatrix::from_diagonal_element(2, 2, 0.5)).unwrap();
        let est = ulam_escape_rate(&sys, &DVector::zeros(1), &[-1.0, -1.0], &[1.0, 1.0], 64, 4).unwrap();
        assert!(est.value.abs() < 1e-9, "{}", est.value);
    }

    #[test]
    fn everything_escapes() {
        let sys = LinearSystem::autonomous("shift", DMatrix::from_diagonal_element(2, 2, 8.0)).unwrap();
        let err = ulam_escape_rate(&sys, &DVector::zeros(1), &[0.5, 0.5], &[1.0, 1.0], 16, 4).unwrap_err();
        assert!(matches!(err, Error::TotalEscape));
    }
}
