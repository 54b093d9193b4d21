//! Escape-rate and pressure estimators for `P_top(−log₂ J⁺)`, the
//! invariance-entropy lower bound, spanning-set counts, Morse exponents and
//! the stabilization data rate `R₀`.
//!
//! Values are in bits per step; every estimate also carries the value in
//! nats for comparison with tables that use natural logarithms.

mod combinatorics;
mod decay;
mod rates;
mod separated;
mod spanning;
mod ulam;

use std::fmt::Write as _;

use serde::Serialize;

pub use combinatorics::{partition_indices, subadditive_select};
pub use decay::{volume_decay_escape_rate, SurvivalDomain};
pub use rates::{data_rate_r0, monodromy_spectrum, morse_exponent, MonodromySpectrum};
pub use separated::{
    max_separated_points, max_separated_set, pressure_separated, pulled_unstable_frame, unstable_log_volume,
    SeparatedSet, UnstableSource,
};
pub use spanning::{spanning_count_oracle, SpanningCount};
pub use ulam::{ulam_escape_rate, ulam_transfer_matrix, TransferMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Separated,
    Ulam,
    VolumeDecay,
}

/// One point of a per-`τ` series: `log₂` of the separated-set sum or of
/// the surviving volume.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SeriesPoint {
    pub tau: usize,
    pub log2_value: f64,
    /// Separated-set size or surviving sample count.
    pub count: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct PressureEstimate {
    pub method: Method,
    /// Bits per step.
    pub value: f64,
    pub value_nats: f64,
    pub series: Vec<SeriesPoint>,
    pub stderr: Option<f64>,
    pub resolution: Option<usize>,
    /// Monte-Carlo samples, or samples per cell for Ulam's method.
    pub samples: Option<usize>,
    /// Leading eigenvalue of the transfer matrix.
    pub eigenvalue: Option<f64>,
    pub iterations: Option<usize>,
    pub converged: bool,
    /// Some requested `τ` were dropped because nothing survived.
    pub truncated: bool,
    /// Cells kept in the transfer matrix after trimming.
    pub cells: Option<usize>,
}

impl PressureEstimate {
    fn new(method: Method, value: f64) -> Self {
        PressureEstimate {
            method,
            value,
            value_nats: value * std::f64::consts::LN_2,
            series: Vec::new(),
            stderr: None,
            resolution: None,
            samples: None,
            eigenvalue: None,
            iterations: None,
            converged: true,
            truncated: false,
            cells: None,
        }
    }

    /// `tau,log2_value,count` rows.
    pub fn series_csv(&self) -> String {
        let mut s = String::from("tau,log2_value,count\n");
        for p in &self.series {
            let _ = writeln!(s, "{},{:.12},{}", p.tau, p.log2_value, p.count);
        }
        s
    }
}

/// `h_inv ≥ max(0, −P)`.
pub fn invariance_entropy_lower_bound(pressure: &PressureEstimate) -> crate::Result<f64> {
    if !pressure.value.is_finite() {
        return Err(crate::Error::Precondition("pressure value is not finite".into()));
    }
    Ok((-pressure.value).max(0.0))
}

/// `log₂ Σ 2^{a_i}` without overflow.
pub(crate) fn log2_sum_exp2(values: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.into_iter().collect();
    let top = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return top;
    }
    top + v.iter().map(|a| (a - top).exp2()).sum::<f64>().log2()
}
