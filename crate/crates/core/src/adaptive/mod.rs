//! Subband adaptive-filter engines.
//!
//! All engines consume one [`SubbandTick`] per decimated instant `k`: the
//! `N` subband regressors `u_i(k)` and desired samples `d_{i,D}(k)`. The
//! a-priori subband errors are `e_{i,D}(k) = d_{i,D}(k) - u_iᵀ(k) w(k-1)`.

mod grsaf;
mod nsaf;
mod vrnsaf;

pub use grsaf::{CovarianceForm, GrSafParams, GrSafState};
pub use nsaf::{MnsafParams, MnsafState};
pub use vrnsaf::VrNsaf;

use crate::error::{Error, Result};

/// Lower bound reported by [`msd`] when the estimate is exact.
pub const MSD_FLOOR_DB: f64 = -320.0;

/// The decimated subband data of one update instant.
#[derive(Debug, Clone, PartialEq)]
pub struct SubbandTick {
    pub regressors: Vec<Vec<f64>>,
    pub desired: Vec<f64>,
}

impl SubbandTick {
    pub fn zeros(n_subbands: usize, regressor_len: usize) -> Self {
        Self {
            regressors: vec![vec![0.0; regressor_len]; n_subbands],
            desired: vec![0.0; n_subbands],
        }
    }

    pub fn n_subbands(&self) -> usize {
        self.desired.len()
    }

    pub fn regressor_len(&self) -> usize {
        self.regressors.first().map_or(0, Vec::len)
    }

    /// Check shape against `(n, m)` and reject non-finite samples.
    pub fn validate(&self, n_subbands: usize, regressor_len: usize) -> Result<()> {
        if self.regressors.len() != n_subbands || self.desired.len() != n_subbands {
            return Err(Error::DimensionMismatch {
                expected: n_subbands,
                actual: self.regressors.len().min(self.desired.len()),
            });
        }
        for u in &self.regressors {
            if u.len() != regressor_len {
                return Err(Error::DimensionMismatch {
                    expected: regressor_len,
                    actual: u.len(),
                });
            }
            if u.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("subband regressor"));
            }
        }
        if self.desired.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("subband desired sample"));
        }
        Ok(())
    }
}

/// Running extrema of the convergence diagnostics over all steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    /// Largest per-step theoretical MSD change (must stay ≤ 0).
    pub max_msd_decrement: f64,
    /// Smallest covariance diagonal entry seen after any step.
    pub min_phi: f64,
    pub steps: usize,
}

impl Default for Diagnostics {
    fn default() -> Self {
        Self {
            max_msd_decrement: f64::NEG_INFINITY,
            min_phi: f64::INFINITY,
            steps: 0,
        }
    }
}

impl Diagnostics {
    pub fn merge(&self, other: &Diagnostics) -> Diagnostics {
        Diagnostics {
            max_msd_decrement: self.max_msd_decrement.max(other.max_msd_decrement),
            min_phi: self.min_phi.min(other.min_phi),
            steps: self.steps + other.steps,
        }
    }
}

/// Common interface of the engines, as driven by the echo-cancellation loop.
pub trait SubbandFilter: Send {
    /// Run one update with the tick's data.
    fn step(&mut self, tick: &SubbandTick) -> Result<()>;

    /// Skip adaptation for one tick (double talk), keeping robust state in step.
    fn freeze(&mut self);

    fn weights(&self) -> &[f64];

    /// A-priori subband errors of the last [`step`](Self::step).
    fn last_errors(&self) -> &[f64];

    /// Scaling factors `q_i` of the last step.
    fn last_scales(&self) -> &[f64];

    /// Covariance diagnostics, for engines that propagate one.
    fn diagnostics(&self) -> Option<Diagnostics> {
        None
    }
}

/// `10·log10(‖w_true - w‖²)`, floored at [`MSD_FLOOR_DB`].
pub fn msd(w: &[f64], w_true: &[f64]) -> Result<f64> {
    if w.len() != w_true.len() {
        return Err(Error::DimensionMismatch {
            expected: w_true.len(),
            actual: w.len(),
        });
    }
    Ok(msd_db(squared_deviation(w, w_true)))
}

pub fn squared_deviation(w: &[f64], w_true: &[f64]) -> f64 {
    w.iter().zip(w_true).map(|(a, b)| (b - a) * (b - a)).sum()
}

/// Convert a linear squared deviation to dB with the floor applied.
pub fn msd_db(linear: f64) -> f64 {
    if linear > 0.0 {
        (10.0 * linear.log10()).max(MSD_FLOOR_DB)
    } else {
        MSD_FLOOR_DB
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
