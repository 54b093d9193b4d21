use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{step, Control, ControlSequence, ControlSystem, State};
use crate::error::Result;

/// Finite window `x_t`, `t ∈ [start_time; start_time + len)`, of a trajectory
/// under `controls`. For periodic orbits `states` holds one period and the
/// controls are periodic with the same period.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitSegment {
    pub start_time: i64,
    pub states: Vec<State>,
    pub controls: ControlSequence,
}

impl OrbitSegment {
    /// Forward trajectory of `len` states starting from `x0` at `start_time`.
    pub fn trajectory(
        sys: &dyn ControlSystem,
        x0: &State,
        controls: ControlSequence,
        start_time: i64,
        len: usize,
    ) -> Result<Self> {
        let mut states = Vec::with_capacity(len);
        let mut cur = x0.clone();
        for i in 0..len {
            if i > 0 {
                cur = step(sys, &cur, controls.at(start_time + i as i64 - 1)?)?;
            }
            states.push(cur.clone());
        }
        Ok(OrbitSegment { start_time, states, controls })
    }

    /// Repeats a periodic orbit `cycles` times (plus one closing state) into
    /// a plain window, handy for splitting estimation along periodic orbits.
    pub fn unrolled(&self, cycles: usize) -> Self {
        let n = self.states.len();
        let states = (0..=n * cycles).map(|i| self.states[i % n].clone()).collect();
        OrbitSegment { start_time: self.start_time, states, controls: self.controls.clone() }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn time_of(&self, i: usize) -> i64 {
        self.start_time + i as i64
    }

    /// Control applied at orbit index `i` (moving `x_i` to `x_{i+1}`).
    pub fn control(&self, i: usize) -> Result<&Control> {
        self.controls.at(self.time_of(i))
    }

    /// `∂f/∂x` at orbit index `i`.
    pub fn jacobian(&self, sys: &dyn ControlSystem, i: usize) -> Result<DMatrix<f64>> {
        let u = self.control(i)?;
        Ok(sys.jac_state(self.states[i].as_slice(), u.as_slice()))
    }

    /// Largest one-step defect `|x_{i+1} − f(x_i, u_i)|` inside the window.
    pub fn max_defect(&self, sys: &dyn ControlSystem) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for i in 0..self.states.len().saturating_sub(1) {
            let img = step(sys, &self.states[i], self.control(i)?)?;
            worst = worst.max((img - &self.states[i + 1]).norm());
        }
        Ok(worst)
    }

    /// Largest defect with periodic wrap-around `x_n ≡ x_0`.
    pub fn periodic_defect(&self, sys: &dyn ControlSystem) -> Result<f64> {
        let n = self.states.len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let img = step(sys, &self.states[i], self.control(i)?)?;
            worst = worst.max((img - &self.states[(i + 1) % n]).norm());
        }
        Ok(worst)
    }
}
