//! GR-SAF: robust subband filter with MSD-optimal gain.
//!
//! Per tick, for each subband `i`:
//!
//! ```text
//! e_i   = d_i - u_iᵀ w(k-1),   q_i = q(e_i),   ρ_i = 2q_i - q_i²
//! σ̂²_e,i, σ̂²_u,i, r̂_i   exponentially weighted, q-gated statistics
//! σ̂²_ν,i = σ̂²_e,i - ‖r̂_i‖² / (σ̂²_u,i + ε₂)       (kept if ≤ 0)
//! g_i   = Φ u_i / (u_iᵀ Φ u_i + u_iᵀ Ĉ_w u_i + σ̂²_ν,i)
//! ```
//!
//! then `w(k) = w(k-1) + Σ q_i g_i e_i`, the per-coefficient uncertainty
//! `Ĉ_w` is refreshed from the weight increment, and
//! `Φ(k) = Φ(k-1) - Σ ρ_i g_i u_iᵀ Φ(k-1) + Ĉ_w(k)`.
//!
//! `Φ` is kept diagonal by default. A scalar form (all diagonal entries equal,
//! the variable-regularization NSAF) and a dense form are available for
//! cross-checks.

use crate::adaptive::{dot, Diagnostics, SubbandFilter, SubbandTick};
use crate::error::{Error, Result};
use crate::robustness::{rho, ScalingRule, SubbandScaler, ThresholdParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceForm {
    #[default]
    Diagonal,
    Scalar,
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrSafParams {
    /// `Φ(0) = (ε₁/M) I`.
    pub eps1: f64,
    /// Division guard of the noise-variance estimate.
    pub eps2: f64,
    /// Forgetting factor of the coefficient-uncertainty recursion.
    pub gamma: f64,
    /// `ϱ` in the statistics smoothing weight `1/(ϱM)`.
    pub stat_memory: f64,
    pub covariance: CovarianceForm,
    /// Estimate `Ĉ_w` at all (off pins it to zero).
    pub track_uncertainty: bool,
    /// Raise every `σ̂²_wm` to the average uncertainty `‖Δw‖²/M`.
    pub uncertainty_floor: bool,
    /// Positivity floor on the diagonal of `Φ`.
    pub phi_floor: f64,
}

impl Default for GrSafParams {
    fn default() -> Self {
        Self {
            eps1: 1.0,
            eps2: 1e-5,
            gamma: 0.95,
            stat_memory: 2.0,
            covariance: CovarianceForm::Diagonal,
            track_uncertainty: true,
            uncertainty_floor: true,
            phi_floor: 1e-12,
        }
    }
}

impl GrSafParams {
    /// Defaults used for speech and echo-cancellation runs.
    pub fn echo() -> Self {
        Self {
            gamma: 0.99,
            stat_memory: 3.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.eps1 >= 1.0) {
            return bad(format!("eps1 must be >= 1, got {}", self.eps1));
        }
        if !(self.eps2 > 0.0) {
            return bad(format!("eps2 must be > 0, got {}", self.eps2));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must be in (0, 1), got {}", self.gamma));
        }
        if !(self.stat_memory >= 1.0) {
            return bad(format!(
                "stat_memory must be >= 1, got {}",
                self.stat_memory
            ));
        }
        if !(self.phi_floor > 0.0) {
            return bad("phi_floor must be > 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Covariance {
    Diagonal(Vec<f64>),
    Scalar(f64),
    /// Row-major `M × M`.
    Dense(Vec<f64>),
}

#[derive(Debug, Clone, Default)]
struct BandStats {
    sigma_e2: f64,
    sigma_u2: f64,
    r: Vec<f64>,
    sigma_nu2: f64,
}

#[derive(Debug, Clone)]
pub struct GrSafState {
    params: GrSafParams,
    n_subbands: usize,
    len: usize,
    /// Smoothing weight `1/(ϱM)` of the subband statistics.
    beta: f64,
    w: Vec<f64>,
    cov: Covariance,
    cw: Vec<f64>,
    bands: Vec<BandStats>,
    scaler: SubbandScaler,
    diagnostics: Diagnostics,
    last_decrement: f64,
    errors: Vec<f64>,
    scales: Vec<f64>,
    gains: Vec<Vec<f64>>,
    phi_u: Vec<Vec<f64>>,
    dw: Vec<f64>,
}

impl GrSafState {
    pub fn new(
        n_subbands: usize,
        len: usize,
        params: GrSafParams,
        rule: ScalingRule,
        threshold: &ThresholdParams,
    ) -> Result<Self> {
        params.validate()?;
        if n_subbands == 0 || len == 0 {
            return Err(Error::InvalidParameter(
                "need at least one subband and one tap".into(),
            ));
        }
        let phi0 = params.eps1 / len as f64;
        let cov = match params.covariance {
            CovarianceForm::Diagonal => Covariance::Diagonal(vec![phi0; len]),
            CovarianceForm::Scalar => Covariance::Scalar(phi0),
            CovarianceForm::Dense => {
                let mut phi = vec![0.0; len * len];
                for m in 0..len {
                    phi[m * len + m] = phi0;
                }
                Covariance::Dense(phi)
            }
        };
        let bands = (0..n_subbands)
            .map(|_| BandStats {
                r: vec![0.0; len],
                ..BandStats::default()
            })
            .collect();
        let scratch = || vec![vec![0.0; len]; n_subbands];
        Ok(Self {
            params,
            n_subbands,
            len,
            beta: 1.0 / (params.stat_memory * len as f64),
            w: vec![0.0; len],
            cov,
            cw: vec![0.0; len],
            bands,
            scaler: SubbandScaler::new(rule, threshold, n_subbands, len)?,
            diagnostics: Diagnostics::default(),
            last_decrement: 0.0,
            errors: vec![0.0; n_subbands],
            scales: vec![0.0; n_subbands],
            gains: scratch(),
            phi_u: scratch(),
            dw: vec![0.0; len],
        })
    }

    pub fn params(&self) -> &GrSafParams {
        &self.params
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Diagonal of `Φ` (expanded for the scalar form).
    pub fn phi_diag(&self) -> Vec<f64> {
        match &self.cov {
            Covariance::Diagonal(d) => d.clone(),
            Covariance::Scalar(s) => vec![*s; self.len],
            Covariance::Dense(p) => (0..self.len).map(|m| p[m * self.len + m]).collect(),
        }
    }

    /// Diagonal of the coefficient-uncertainty estimate `Ĉ_w`.
    pub fn cw_diag(&self) -> &[f64] {
        &self.cw
    }

    pub fn sigma_nu2(&self) -> Vec<f64> {
        self.bands.iter().map(|b| b.sigma_nu2).collect()
    }

    pub fn scaler(&self) -> &SubbandScaler {
        &self.scaler
    }

    /// Theoretical MSD change of the last step.
    pub fn last_msd_decrement(&self) -> f64 {
        self.last_decrement
    }

    /// Overwrite `Φ` with `value·I` (in whatever form the state keeps).
    pub fn set_phi_scalar(&mut self, value: f64) {
        let len = self.len;
        match &mut self.cov {
            Covariance::Diagonal(d) => d.iter_mut().for_each(|x| *x = value),
            Covariance::Scalar(s) => *s = value,
            Covariance::Dense(p) => {
                p.iter_mut().for_each(|x| *x = 0.0);
                for m in 0..len {
                    p[m * len + m] = value;
                }
            }
        }
    }

    /// Theoretical MSD change for scaling factors `q` given the current `Φ`
    /// and noise estimates:
    /// `-Σ_i ρ_i (u_iᵀ Φ² u_i) / (u_iᵀ Φ u_i + σ̂²_ν,i)`.
    pub fn theoretical_msd_decrement(&self, tick: &SubbandTick, q: &[f64]) -> f64 {
        let sigma: Vec<f64> = self.sigma_nu2();
        self.decrement_with(tick, q, &sigma)
    }

    fn decrement_with(&self, tick: &SubbandTick, q: &[f64], sigma_nu2: &[f64]) -> f64 {
        let mut total = 0.0;
        for (i, u) in tick.regressors.iter().enumerate() {
            let r = rho(q[i]);
            if r == 0.0 {
                continue;
            }
            let (num, den) = match &self.cov {
                Covariance::Diagonal(phi) => {
                    let mut num = 0.0;
                    let mut den = 0.0;
                    for (x, p) in u.iter().zip(phi) {
                        num += x * x * p * p;
                        den += x * x * p;
                    }
                    (num, den)
                }
                Covariance::Scalar(s) => {
                    let uu = dot(u, u);
                    (uu * s * s, uu * s)
                }
                Covariance::Dense(p) => {
                    let pu: Vec<f64> = (0..self.len)
                        .map(|a| dot(&p[a * self.len..(a + 1) * self.len], u))
                        .collect();
                    (dot(&pu, &pu), dot(u, &pu))
                }
            };
            let den = den + sigma_nu2[i];
            if den > 0.0 {
                total -= r * num / den;
            }
        }
        total
    }

    fn update_statistics(&mut self, band: usize, u: &[f64], e: f64, q: f64) {
        let beta = self.beta;
        let keep = 1.0 - beta;
        let eps2 = self.params.eps2;
        let st = &mut self.bands[band];
        st.sigma_e2 = keep * st.sigma_e2 + beta * q * q * e * e;
        st.sigma_u2 = keep * st.sigma_u2 + beta * u[0] * u[0];
        let qe = beta * q * e;
        for (r, &x) in st.r.iter_mut().zip(u) {
            *r = keep * *r + qe * x;
        }
        let rr = dot(&st.r, &st.r);
        let candidate = st.sigma_e2 - rr / (st.sigma_u2 + eps2);
        if candidate > 0.0 {
            st.sigma_nu2 = candidate;
        }
    }

    fn compute_gain(&mut self, band: usize, u: &[f64]) {
        let sigma_nu2 = self.bands[band].sigma_nu2;
        let cw_term: f64 = u.iter().zip(&self.cw).map(|(x, c)| x * x * c).sum();
        let gain = &mut self.gains[band];
        let phi_u = &mut self.phi_u[band];
        match &self.cov {
            Covariance::Diagonal(phi) => {
                for ((pu, x), p) in phi_u.iter_mut().zip(u).zip(phi) {
                    *pu = p * x;
                }
            }
            Covariance::Scalar(s) => {
                for (pu, x) in phi_u.iter_mut().zip(u) {
                    *pu = s * x;
                }
            }
            Covariance::Dense(p) => {
                for (a, pu) in phi_u.iter_mut().enumerate() {
                    *pu = dot(&p[a * self.len..(a + 1) * self.len], u);
                }
            }
        }
        let den = dot(u, phi_u) + cw_term + sigma_nu2;
        if den > 0.0 && den.is_finite() {
            for (g, pu) in gain.iter_mut().zip(phi_u.iter()) {
                *g = pu / den;
            }
        } else {
            gain.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    fn update_uncertainty(&mut self) {
        if !self.params.track_uncertainty {
            return;
        }
        let gamma = self.params.gamma;
        for (c, d) in self.cw.iter_mut().zip(&self.dw) {
            *c = gamma * *c + (1.0 - gamma) * d * d;
        }
        if self.params.uncertainty_floor {
            let avg = dot(&self.dw, &self.dw) / self.len as f64;
            for c in &mut self.cw {
                *c = c.max(avg);
            }
        }
    }

    fn update_covariance(&mut self, tick: &SubbandTick) {
        let floor = self.params.phi_floor;
        let len = self.len;
        let rhos: Vec<f64> = self.scales.iter().map(|&q| rho(q)).collect();
        match &mut self.cov {
            Covariance::Diagonal(phi) => {
                for m in 0..len {
                    let mut shrink = 0.0;
                    for (i, u) in tick.regressors.iter().enumerate() {
                        shrink += rhos[i] * self.gains[i][m] * u[m];
                    }
                    phi[m] = (phi[m] * (1.0 - shrink) + self.cw[m]).max(floor);
                }
            }
            Covariance::Scalar(s) => {
                let mut shrink = 0.0;
                for (i, u) in tick.regressors.iter().enumerate() {
                    shrink += rhos[i] * dot(&self.gains[i], u);
                }
                let cw_mean = self.cw.iter().sum::<f64>() / len as f64;
                *s = (*s * (1.0 - shrink / len as f64) + cw_mean).max(floor);
            }
            Covariance::Dense(p) => {
                for (i, &r) in rhos.iter().enumerate() {
                    if r == 0.0 {
                        continue;
                    }
                    let g = &self.gains[i];
                    let pu = &self.phi_u[i];
                    for a in 0..len {
                        let ga = r * g[a];
                        let row = &mut p[a * len..(a + 1) * len];
                        for (x, b) in row.iter_mut().zip(pu) {
                            *x -= ga * b;
                        }
                    }
                }
                for a in 0..len {
                    for b in (a + 1)..len {
                        let avg = 0.5 * (p[a * len + b] + p[b * len + a]);
                        p[a * len + b] = avg;
                        p[b * len + a] = avg;
                    }
                    let d = &mut p[a * len + a];
                    *d = (*d + self.cw[a]).max(floor);
                }
            }
        }
    }

    fn min_phi(&self) -> f64 {
        match &self.cov {
            Covariance::Diagonal(d) => d.iter().copied().fold(f64::INFINITY, f64::min),
            Covariance::Scalar(s) => *s,
            Covariance::Dense(p) => (0..self.len)
                .map(|m| p[m * self.len + m])
                .fold(f64::INFINITY, f64::min),
        }
    }
}

impl SubbandFilter for GrSafState {
    fn step(&mut self, tick: &SubbandTick) -> Result<()> {
        tick.validate(self.n_subbands, self.len)?;

        for (i, u) in tick.regressors.iter().enumerate() {
            let e = tick.desired[i] - dot(u, &self.w);
            let q = self.scaler.q(i, e);
            self.errors[i] = e;
            self.scales[i] = q;
            self.update_statistics(i, u, e, q);
        }
        let sigma = self.sigma_nu2();
        self.last_decrement = self.decrement_with(tick, &self.scales.clone(), &sigma);

        self.dw.iter_mut().for_each(|d| *d = 0.0);
        for (i, u) in tick.regressors.iter().enumerate() {
            self.compute_gain(i, u);
            let step = self.scales[i] * self.errors[i];
            if step != 0.0 {
                for (d, g) in self.dw.iter_mut().zip(&self.gains[i]) {
                    *d += step * g;
                }
            }
        }
        for (w, d) in self.w.iter_mut().zip(&self.dw) {
            *w += d;
        }

        self.update_uncertainty();
        self.update_covariance(tick);

        let d = &mut self.diagnostics;
        d.max_msd_decrement = d.max_msd_decrement.max(self.last_decrement);
        d.steps += 1;
        let min_phi = self.min_phi();
        self.diagnostics.min_phi = self.diagnostics.min_phi.min(min_phi);
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

    fn diagnostics(&self) -> Option<Diagnostics> {
        Some(self.diagnostics)
    }
}
