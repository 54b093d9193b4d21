//! Linear systems `x ↦ A x + B u`, including the `diag(2, 1/2)` toy.

use nalgebra::DMatrix;

use super::{ControlRange, ControlSystem};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct LinearSystem {
    name: String,
    a: DMatrix<f64>,
    a_inv: DMatrix<f64>,
    b: DMatrix<f64>,
    range: ControlRange,
}

impl LinearSystem {
    pub fn new(name: impl Into<String>, a: DMatrix<f64>, b: DMatrix<f64>, range: ControlRange) -> Result<Self> {
        if !a.is_square() || a.nrows() != b.nrows() || b.ncols() != range.dim() {
            return Err(Error::Dimension("A must be d×d, B d×m, range m-dimensional".into()));
        }
        let a_inv = a.clone().try_inverse().ok_or_else(|| Error::Precondition("A must be invertible".into()))?;
        Ok(LinearSystem { name: name.into(), a, a_inv, b, range })
    }

    /// `diag(2, 1/2)` with additive control in the box `[−ε, ε]²`.
    pub fn linear_toy(eps: f64) -> Self {
        Self::diagonal_toy(2.0, 0.5, eps)
    }

    pub fn diagonal_toy(expanding: f64, contracting: f64, eps: f64) -> Self {
        LinearSystem::new(
            "linear_toy",
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![expanding, contracting])),
            DMatrix::identity(2, 2),
            ControlRange::symmetric_box(2, eps),
        )
        .expect("diagonal toy is well formed")
    }

    /// Autonomous (single zero control) linear map.
    pub fn autonomous(name: impl Into<String>, a: DMatrix<f64>) -> Result<Self> {
        let d = a.nrows();
        Self::new(name, a, DMatrix::zeros(d, 1), ControlRange::symmetric_box(1, 0.0))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn input_matrix(&self) -> &DMatrix<f64> {
        &self.b
    }
}

/// Hull of `M [x; u] + offset` over the product box, in centre/radius form.
fn affine_enclosure(m: &DMatrix<f64>, lo: &[f64], hi: &[f64], out_lo: &mut [f64], out_hi: &mut [f64]) {
    for i in 0..m.nrows() {
        let mut c = 0.0;
        let mut r = 0.0;
        for j in 0..m.ncols() {
            let mid = 0.5 * (lo[j] + hi[j]);
            let rad = 0.5 * (hi[j] - lo[j]);
            c += m[(i, j)] * mid;
            r += m[(i, j)].abs() * rad;
        }
        let pad = 1e-12 * (1.0 + c.abs() + r);
        out_lo[i] = c - r - pad;
        out_hi[i] = c + r + pad;
    }
}

fn concat_columns(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    m.columns_mut(0, a.ncols()).copy_from(a);
    m.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    m
}

fn stack(x: &[f64], u: &[f64]) -> Vec<f64> {
    x.iter().chain(u).copied().collect()
}

impl ControlSystem for LinearSystem {
    fn name(&self) -> &str {
        &self.name
    }

    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn control_range(&self) -> &ControlRange {
        &self.range
    }

    fn map_into(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        let d = self.a.nrows();
        for i in 0..d {
            let mut s = 0.0;
            for j in 0..d {
                s += self.a[(i, j)] * x[j];
            }
            for j in 0..self.b.ncols() {
                s += self.b[(i, j)] * u[j];
            }
            out[i] = s;
        }
    }

    fn inverse_into(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        let d = self.a.nrows();
        let mut shifted = vec![0.0; d];
        for i in 0..d {
            let mut s = x[i];
            for j in 0..self.b.ncols() {
                s -= self.b[(i, j)] * u[j];
            }
            shifted[i] = s;
        }
        for i in 0..d {
            out[i] = (0..d).map(|j| self.a_inv[(i, j)] * shifted[j]).sum();
        }
    }

    fn jac_state(&self, _x: &[f64], _u: &[f64]) -> DMatrix<f64> {
        self.a.clone()
    }

    fn jac_control(&self, _x: &[f64], _u: &[f64]) -> DMatrix<f64> {
        self.b.clone()
    }

    fn image_enclosure(&self, lo: &[f64], hi: &[f64], ulo: &[f64], uhi: &[f64], out_lo: &mut [f64], out_hi: &mut [f64]) {
        let m = concat_columns(&self.a, &self.b);
        affine_enclosure(&m, &stack(lo, ulo), &stack(hi, uhi), out_lo, out_hi);
    }

    fn preimage_enclosure(
        &self,
        lo: &[f64],
        hi: &[f64],
        ulo: &[f64],
        uhi: &[f64],
        out_lo: &mut [f64],
        out_hi: &mut [f64],
    ) {
        let m = concat_columns(&self.a_inv, &(-(&self.a_inv * &self.b)));
        affine_enclosure(&m, &stack(lo, ulo), &stack(hi, uhi), out_lo, out_hi);
    }

    fn curvature_bound(&self, _x: &[f64], _u: &[f64]) -> f64 {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{inverse_step, step};
    use nalgebra::DVector;

    #[test]
    fn toy_roundtrip() {
        let toy = LinearSystem::linear_toy(1.0);
        let x = DVector::from_vec(vec![0.3, -0.7]);
        let u = DVector::from_vec(vec![0.2, 0.1]);
        let y = step(&toy, &x, &u).unwrap();
        assert!((y[0] - 0.8).abs() < 1e-15 && (y[1] + 0.25).abs() < 1e-15);
        assert!((inverse_step(&toy, &y, &u).unwrap() - x).amax() < 1e-15);
    }

    #[test]
    fn singular_matrix_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(LinearSystem::autonomous("bad", a).is_err());
    }
}
