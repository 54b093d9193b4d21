//! Block-tridiagonal (optionally cyclic) linear solves.

use nalgebra::DMatrix;

/// Symmetric positive definite block-tridiagonal matrix with blocks of size
/// `d`, plus optional corner blocks `(0, N−1)` and `(N−1, 0)` for the cyclic
/// case.
pub(crate) struct BlockTridiagonal {
    pub diag: Vec<DMatrix<f64>>,
    /// `(i, i+1)` blocks.
    pub upper: Vec<DMatrix<f64>>,
    /// `(i+1, i)` blocks.
    pub lower: Vec<DMatrix<f64>>,
    /// `((0, N−1), (N−1, 0))`.
    pub corners: Option<(DMatrix<f64>, DMatrix<f64>)>,
}

impl BlockTridiagonal {
    fn n(&self) -> usize {
        self.diag.len()
    }

    fn d(&self) -> usize {
        self.diag[0].nrows()
    }

    fn dense(&self) -> DMatrix<f64> {
        let (n, d) = (self.n(), self.d());
        let mut m = DMatrix::zeros(n * d, n * d);
        let mut add = |i: usize, j: usize, b: &DMatrix<f64>| {
            let mut v = m.view_mut((i * d, j * d), (d, d));
            v += b;
        };
        for i in 0..n {
            add(i, i, &self.diag[i]);
        }
        for i in 0..n.saturating_sub(1) {
            add(i, i + 1, &self.upper[i]);
            add(i + 1, i, &self.lower[i]);
        }
        if let Some((cu, cl)) = &self.corners {
            add(0, n - 1, cu);
            add(n - 1, 0, cl);
        }
        m
    }

    /// Solves for a block right-hand side (each block `d × k`).
    pub fn solve(&self, rhs: &[DMatrix<f64>]) -> Option<Vec<DMatrix<f64>>> {
        let (n, d) = (self.n(), self.d());
        if n <= 3 {
            let k = rhs[0].ncols();
            let mut b = DMatrix::zeros(n * d, k);
            for (i, r) in rhs.iter().enumerate() {
                b.view_mut((i * d, 0), (d, k)).copy_from(r);
            }
            let x = self.dense().lu().solve(&b)?;
            return Some((0..n).map(|i| x.view((i * d, 0), (d, k)).into_owned()).collect());
        }
        match &self.corners {
            None => self.thomas(rhs),
            Some((cu, cl)) => {
                // Woodbury: A = T + U Vᵀ with U = [E₀·cu, E_{N−1}·cl], V = [E_{N−1}, E₀]
                let y = self.thomas(rhs)?;
                let mut u_rhs: Vec<DMatrix<f64>> = vec![DMatrix::zeros(d, 2 * d); n];
                u_rhs[0].columns_mut(0, d).copy_from(cu);
                u_rhs[n - 1].columns_mut(d, d).copy_from(cl);
                let z = self.thomas(&u_rhs)?;
                // Vᵀ w picks (w_{N−1}; w_0)
                let vt = |w: &[DMatrix<f64>]| -> DMatrix<f64> {
                    let k = w[0].ncols();
                    let mut out = DMatrix::zeros(2 * d, k);
                    out.view_mut((0, 0), (d, k)).copy_from(&w[n - 1]);
                    out.view_mut((d, 0), (d, k)).copy_from(&w[0]);
                    out
                };
                let cap = DMatrix::identity(2 * d, 2 * d) + vt(&z);
                let coef = cap.lu().solve(&vt(&y))?;
                Some(y.iter().zip(&z).map(|(yi, zi)| yi - zi * &coef).collect())
            }
        }
    }

    fn thomas(&self, rhs: &[DMatrix<f64>]) -> Option<Vec<DMatrix<f64>>> {
        let n = self.n();
        let mut dp: Vec<DMatrix<f64>> = Vec::with_capacity(n);
        let mut yp: Vec<DMatrix<f64>> = Vec::with_capacity(n);
        dp.push(self.diag[0].clone());
        yp.push(rhs[0].clone());
        for i in 1..n {
            let lu = dp[i - 1].clone().lu();
            // M = L_{i−1} D'_{i−1}^{-1}, computed as (D'^{-T} L^T)^T
            let m = lu.solve(&self.lower[i - 1].transpose())?.transpose();
            let dpi = &self.diag[i] - &m * &self.upper[i - 1];
            let ypi = &rhs[i] - &m * &yp[i - 1];
            dp.push(dpi);
            yp.push(ypi);
        }
        let mut x: Vec<DMatrix<f64>> = vec![DMatrix::zeros(0, 0); n];
        x[n - 1] = dp[n - 1].clone().lu().solve(&yp[n - 1])?;
        for i in (0..n - 1).rev() {
            let r = &yp[i] - &self.upper[i] * &x[i + 1];
            x[i] = dp[i].clone().lu().solve(&r)?;
        }
        Some(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_system(n: usize, d: usize, cyclic: bool, rng: &mut ChaCha8Rng) -> BlockTridiagonal {
        // build from a random G with the defect-Jacobian structure, A = G Gᵀ
        let a: Vec<DMatrix<f64>> = (0..n).map(|_| DMatrix::from_fn(d, d, |_, _| rng.random_range(-2.0..2.0))).collect();
        let diag = a.iter().map(|m| DMatrix::identity(d, d) + m * m.transpose()).collect();
        let upper = (0..n - 1).map(|i| -a[i + 1].transpose()).collect();
        let lower = (0..n - 1).map(|i| -a[i + 1].clone()).collect();
        let corners = cyclic.then(|| (-a[0].clone(), -a[0].transpose()));
        BlockTridiagonal { diag, upper, lower, corners }
    }

    #[test]
    fn matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for &(n, cyclic) in &[(2, false), (3, true), (7, false), (9, true), (40, true)] {
            let sys = random_system(n, 2, cyclic, &mut rng);
            let rhs: Vec<DMatrix<f64>> = (0..n).map(|_| DMatrix::from_fn(2, 1, |_, _| rng.random_range(-1.0..1.0))).collect();
            let x = sys.solve(&rhs).unwrap();
            let dense = sys.dense();
            let xs = DMatrix::from_fn(2 * n, 1, |i, _| x[i / 2][(i % 2, 0)]);
            let bs = DMatrix::from_fn(2 * n, 1, |i, _| rhs[i / 2][(i % 2, 0)]);
            assert!((dense * xs - bs).amax() < 1e-9, "n={n} cyclic={cyclic}");
        }
    }
}
