//! GR-SAF with `Φ = σ_Φ² I` and no coefficient uncertainty, written out as a
//! robust NSAF with a variable regularization `δ_i(k) = σ̂²_ν,i / σ_Φ²(k-1)`:
//!
//! ```text
//! w(k)    = w(k-1) + Σ_i q_i u_i e_i / (‖u_i‖² + δ_i(k))
//! σ_Φ²(k) = σ_Φ²(k-1) - Σ_i ρ_i σ²_u,i σ_Φ²(k-1) / (‖u_i‖² + δ_i(k))
//! ```
//!
//! with `σ²_u,i = ‖u_i‖²/M`. Kept separate from [`GrSafState`] so the two can
//! be checked against each other.
//!
//! [`GrSafState`]: crate::adaptive::GrSafState

use crate::adaptive::{SubbandFilter, SubbandTick};
use crate::error::{Error, Result};
use crate::robustness::{ScalingRule, SubbandScaler, ThresholdParams};

#[derive(Debug, Clone)]
pub struct VrNsaf {
    w: Vec<f64>,
    sigma_phi2: f64,
    smoothing: f64,
    eps2: f64,
    scaler: SubbandScaler,
    err_power: Vec<f64>,
    input_power: Vec<f64>,
    cross: Vec<Vec<f64>>,
    noise_var: Vec<f64>,
    regularization: Vec<f64>,
    errors: Vec<f64>,
    scales: Vec<f64>,
}

impl VrNsaf {
    /// `eps1`, `eps2`, `stat_memory` mean the same as in
    /// [`GrSafParams`](crate::adaptive::GrSafParams).
    pub fn new(
        n_subbands: usize,
        len: usize,
        eps1: f64,
        eps2: f64,
        stat_memory: f64,
        rule: ScalingRule,
        threshold: &ThresholdParams,
    ) -> Result<Self> {
        if n_subbands == 0 || len == 0 {
            return Err(Error::InvalidParameter(
                "need at least one subband and one tap".into(),
            ));
        }
        if !(eps1 > 0.0 && eps2 > 0.0 && stat_memory >= 1.0) {
            return Err(Error::InvalidParameter(
                "eps1, eps2 > 0 and stat_memory >= 1 required".into(),
            ));
        }
        Ok(Self {
            w: vec![0.0; len],
            sigma_phi2: eps1 / len as f64,
            smoothing: 1.0 / (stat_memory * len as f64),
            eps2,
            scaler: SubbandScaler::new(rule, threshold, n_subbands, len)?,
            err_power: vec![0.0; n_subbands],
            input_power: vec![0.0; n_subbands],
            cross: vec![vec![0.0; len]; n_subbands],
            noise_var: vec![0.0; n_subbands],
            regularization: vec![0.0; n_subbands],
            errors: vec![0.0; n_subbands],
            scales: vec![0.0; n_subbands],
        })
    }

    pub fn sigma_phi2(&self) -> f64 {
        self.sigma_phi2
    }

    pub fn set_sigma_phi2(&mut self, value: f64) {
        self.sigma_phi2 = value;
    }

    /// `δ_i` used by the last step.
    pub fn regularization(&self) -> &[f64] {
        &self.regularization
    }

    pub fn noise_variances(&self) -> &[f64] {
        &self.noise_var
    }
}

impl SubbandFilter for VrNsaf {
    fn step(&mut self, tick: &SubbandTick) -> Result<()> {
        tick.validate(self.err_power.len(), self.w.len())?;
        let len = self.w.len() as f64;
        let a = self.smoothing;
        let prev_phi = self.sigma_phi2;
        let mut increment = vec![0.0; self.w.len()];
        let mut phi = prev_phi;

        for (i, u) in tick.regressors.iter().enumerate() {
            let y: f64 = u.iter().zip(&self.w).map(|(x, w)| x * w).sum();
            let e = tick.desired[i] - y;
            let q = self.scaler.q(i, e);
            self.errors[i] = e;
            self.scales[i] = q;

            self.err_power[i] = (1.0 - a) * self.err_power[i] + a * (q * e).powi(2);
            self.input_power[i] = (1.0 - a) * self.input_power[i] + a * u[0].powi(2);
            let mut cross_norm = 0.0;
            for (c, x) in self.cross[i].iter_mut().zip(u) {
                *c = (1.0 - a) * *c + a * q * x * e;
                cross_norm += *c * *c;
            }
            let estimate = self.err_power[i] - cross_norm / (self.input_power[i] + self.eps2);
            if estimate > 0.0 {
                self.noise_var[i] = estimate;
            }

            let energy: f64 = u.iter().map(|x| x * x).sum();
            let delta = self.noise_var[i] / prev_phi;
            self.regularization[i] = delta;
            let den = energy + delta;
            if den > 0.0 {
                let s = q * e / den;
                for (inc, x) in increment.iter_mut().zip(u) {
                    *inc += s * x;
                }
                let rho = 2.0 * q - q * q;
                phi -= rho * (energy / len) * prev_phi / den;
            }
        }
        for (w, inc) in self.w.iter_mut().zip(&increment) {
            *w += inc;
        }
        self.sigma_phi2 = phi;
        Ok(())
    }

    fn freeze(&mut self) {
        self.scaler.freeze();
    }

    fn weights(&self) -> &[f64] {
        &self.w
    }

    fn last_errors(&self) -> &[f64] {
        &self.errors
    }

    fn last_scales(&self) -> &[f64] {
        &self.scales
    }
}
