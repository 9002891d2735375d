//! NSAF and the M-estimate NSAF.
//!
//! ```text
//! w(k) = w(k-1) + μ Σ_i q_i e_i u_i / (‖u_i‖² + δ_i)
//! ```
//!
//! With [`ScalingRule::Unity`] this is the plain NSAF. `δ_i` is a fixed
//! regularization plus, optionally, the silence guard `20 σ̂²_u,i / N`.

use crate::adaptive::{dot, SubbandFilter, SubbandTick};
use crate::error::{Error, Result};
use crate::robustness::{ScalingRule, SubbandScaler, ThresholdParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MnsafParams {
    pub mu: f64,
    pub reg: f64,
    /// Add `20 σ̂²_u,i / N` to each denominator.
    pub silence_guard: bool,
    /// `ϱ` of the subband input-power tracker used by the silence guard.
    pub stat_memory: f64,
}

impl Default for MnsafParams {
    fn default() -> Self {
        Self {
            mu: 1.0,
            reg: 0.0,
            silence_guard: false,
            stat_memory: 2.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MnsafState {
    params: MnsafParams,
    n_subbands: usize,
    w: Vec<f64>,
    scaler: SubbandScaler,
    sigma_u2: Vec<f64>,
    beta: f64,
    errors: Vec<f64>,
    scales: Vec<f64>,
    dw: Vec<f64>,
}

impl MnsafState {
    pub fn new(
        n_subbands: usize,
        len: usize,
        params: MnsafParams,
        rule: ScalingRule,
        threshold: &ThresholdParams,
    ) -> Result<Self> {
        if !(params.mu > 0.0 && params.mu < 2.0) {
            return Err(Error::InvalidParameter(format!(
                "step size {} outside (0, 2)",
                params.mu
            )));
        }
        if !(params.reg >= 0.0) {
            return Err(Error::InvalidParameter(
                "regularization must be >= 0".into(),
            ));
        }
        if !(params.stat_memory >= 1.0) {
            return Err(Error::InvalidParameter("stat_memory must be >= 1".into()));
        }
        if n_subbands == 0 || len == 0 {
            return Err(Error::InvalidParameter(
                "need at least one subband and one tap".into(),
            ));
        }
        Ok(Self {
            params,
            n_subbands,
            w: vec![0.0; len],
            scaler: SubbandScaler::new(rule, threshold, n_subbands, len)?,
            sigma_u2: vec![0.0; n_subbands],
            beta: 1.0 / (params.stat_memory * len as f64),
            errors: vec![0.0; n_subbands],
            scales: vec![0.0; n_subbands],
            dw: vec![0.0; len],
        })
    }

    /// Plain NSAF with step size `mu`.
    pub fn nsaf(n_subbands: usize, len: usize, mu: f64) -> Result<Self> {
        let params = MnsafParams {
            mu,
            ..MnsafParams::default()
        };
        Self::new(
            n_subbands,
            len,
            params,
            ScalingRule::Unity,
            &ThresholdParams::default(),
        )
    }

    pub fn params(&self) -> &MnsafParams {
        &self.params
    }

    pub fn scaler(&self) -> &SubbandScaler {
        &self.scaler
    }
}

impl SubbandFilter for MnsafState {
    fn step(&mut self, tick: &SubbandTick) -> Result<()> {
        tick.validate(self.n_subbands, self.w.len())?;
        let n = self.n_subbands as f64;
        self.dw.iter_mut().for_each(|d| *d = 0.0);
        for (i, u) in tick.regressors.iter().enumerate() {
            let e = tick.desired[i] - dot(u, &self.w);
            let q = self.scaler.q(i, e);
            self.errors[i] = e;
            self.scales[i] = q;
            self.sigma_u2[i] = (1.0 - self.beta) * self.sigma_u2[i] + self.beta * u[0] * u[0];
            let mut den = dot(u, u) + self.params.reg;
            if self.params.silence_guard {
                den += 20.0 * self.sigma_u2[i] / n;
            }
            let step = self.params.mu * q * e;
            if step == 0.0 || !(den > 0.0) {
                continue;
            }
            let scale = step / den;
            for (d, x) in self.dw.iter_mut().zip(u) {
                *d += scale * x;
            }
        }
        for (w, d) in self.w.iter_mut().zip(&self.dw) {
            *w += d;
        }
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
