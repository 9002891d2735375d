//! Robust scaling rules `q(e) ∈ [0, 1]` and the M-estimate threshold tracker.
//!
//! The modified-Huber rule keeps a subband update only while `|e| < ξ`, with
//! `ξ = κ·σ̂_e` and `σ̂_e²` tracked from the median of a sliding window of
//! squared errors:
//!
//! ```text
//! σ̂²(k) = θ σ̂²(k-1) + c_σ (1-θ) med(a(k)),   c_σ = 1.483 (1 + 5/(N_w-1))
//! ```
//!
//! The correntropy rule needs no state: `q = exp(-e² / (2 κ_σ²))`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Confidence multiplier giving 99% acceptance of Gaussian errors.
pub const DEFAULT_KAPPA: f64 = 2.576;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ScalingRule {
    /// Hard 0/1 gate of the modified Huber score.
    ModifiedHuber { kappa: f64 },
    /// Gaussian-kernel weight of the maximum correntropy criterion.
    Correntropy { kernel_width: f64 },
    /// `q ≡ 1`; turns the robust engines into their plain counterparts.
    Unity,
}

impl ScalingRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ScalingRule::ModifiedHuber { kappa } if !(kappa > 0.0) => Err(Error::InvalidParameter(
                format!("kappa must be > 0, got {kappa}"),
            )),
            ScalingRule::Correntropy { kernel_width } if !(kernel_width > 0.0) => Err(
                Error::InvalidParameter(format!("kernel width must be > 0, got {kernel_width}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn needs_threshold(&self) -> bool {
        matches!(self, ScalingRule::ModifiedHuber { .. })
    }
}

/// `q(e)` for threshold `xi` (only the modified-Huber rule reads `xi`).
pub fn scale(rule: &ScalingRule, e: f64, xi: f64) -> f64 {
    match *rule {
        ScalingRule::ModifiedHuber { .. } => {
            if e.abs() < xi {
                1.0
            } else {
                0.0
            }
        }
        ScalingRule::Correntropy { kernel_width } => {
            (-e * e / (2.0 * kernel_width * kernel_width)).exp()
        }
        ScalingRule::Unity => 1.0,
    }
}

/// `ρ = 2q - q²`, the covariance-update weight.
pub fn rho(q: f64) -> f64 {
    2.0 * q - q * q
}

/// Parameters of the median-window threshold tracker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdParams {
    pub kappa: f64,
    pub window: usize,
    pub tau: f64,
    /// Overrides `θ = 1 - N/(τM)` when set.
    pub theta: Option<f64>,
}

impl Default for ThresholdParams {
    fn default() -> Self {
        Self {
            kappa: DEFAULT_KAPPA,
            window: 20,
            tau: 2.0,
            theta: None,
        }
    }
}

impl ThresholdParams {
    pub fn theta_for(&self, n_subbands: usize, filter_len: usize) -> f64 {
        self.theta
            .unwrap_or_else(|| 1.0 - n_subbands as f64 / (self.tau * filter_len as f64))
            .clamp(0.0, 1.0 - f64::EPSILON)
    }
}

/// Impulse-free error-variance tracker of one subband.
#[derive(Debug, Clone)]
pub struct ThresholdState {
    sigma_e2_hat: f64,
    window: VecDeque<f64>,
    frozen_flags: VecDeque<bool>,
    capacity: usize,
    theta: f64,
    c_sigma: f64,
    kappa: f64,
    started: bool,
    scratch: Vec<f64>,
}

impl ThresholdState {
    pub fn new(params: &ThresholdParams, n_subbands: usize, filter_len: usize) -> Result<Self> {
        if params.window < 2 {
            return Err(Error::InvalidParameter(
                "median window needs at least 2 entries".into(),
            ));
        }
        if !(params.tau >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "tau must be >= 1, got {}",
                params.tau
            )));
        }
        if !(params.kappa > 0.0) {
            return Err(Error::InvalidParameter("kappa must be > 0".into()));
        }
        if let Some(theta) = params.theta {
            if !(0.0..1.0).contains(&theta) {
                return Err(Error::InvalidParameter(format!(
                    "theta {theta} outside [0, 1)"
                )));
            }
        }
        Ok(Self {
            sigma_e2_hat: 0.0,
            window: VecDeque::with_capacity(params.window),
            frozen_flags: VecDeque::with_capacity(params.window),
            capacity: params.window,
            theta: params.theta_for(n_subbands, filter_len),
            c_sigma: correction_factor(params.window),
            kappa: params.kappa,
            started: false,
            scratch: Vec::with_capacity(params.window),
        })
    }

    pub fn sigma_e2_hat(&self) -> f64 {
        self.sigma_e2_hat
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn c_sigma(&self) -> f64 {
        self.c_sigma
    }

    /// Current threshold `ξ = κ σ̂_e`.
    pub fn threshold(&self) -> f64 {
        self.kappa * self.sigma_e2_hat.sqrt()
    }

    /// Number of real (non-prefill) entries in the window.
    pub fn filled(&self) -> usize {
        self.window.len()
    }

    /// How many window entries were pushed while adaptation was frozen.
    pub fn frozen_entries(&self) -> usize {
        self.frozen_flags.iter().filter(|f| **f).count()
    }

    /// Push `e²` and return the updated threshold.
    pub fn update_threshold(&mut self, e: f64) -> f64 {
        self.push(e * e, false)
    }

    /// Push a zero entry (adaptation suspended) and return the threshold.
    pub fn push_frozen(&mut self) -> f64 {
        self.push(0.0, true)
    }

    fn push(&mut self, entry: f64, frozen: bool) -> f64 {
        if self.window.len() == self.capacity {
            self.window.pop_front();
            self.frozen_flags.pop_front();
        }
        self.window.push_back(entry);
        self.frozen_flags.push_back(frozen);
        let theta = if self.started { self.theta } else { 0.0 };
        self.started = true;
        let med = self.median();
        self.sigma_e2_hat = theta * self.sigma_e2_hat + self.c_sigma * (1.0 - theta) * med;
        self.threshold()
    }

    fn median(&mut self) -> f64 {
        self.scratch.clear();
        self.scratch.extend(self.window.iter().copied());
        self.scratch.sort_by(|a, b| a.total_cmp(b));
        let n = self.scratch.len();
        if n % 2 == 1 {
            self.scratch[n / 2]
        } else {
            0.5 * (self.scratch[n / 2 - 1] + self.scratch[n / 2])
        }
    }
}

/// `c_σ = 1.483 (1 + 5/(N_w - 1))`.
pub fn correction_factor(window: usize) -> f64 {
    1.483 * (1.0 + 5.0 / (window as f64 - 1.0))
}

/// A scaling rule with whatever per-subband state it needs.
#[derive(Debug, Clone)]
pub struct SubbandScaler {
    rule: ScalingRule,
    thresholds: Vec<ThresholdState>,
}

impl SubbandScaler {
    pub fn new(
        rule: ScalingRule,
        params: &ThresholdParams,
        n_subbands: usize,
        filter_len: usize,
    ) -> Result<Self> {
        rule.validate()?;
        let thresholds = if let ScalingRule::ModifiedHuber { kappa } = rule {
            let params = ThresholdParams { kappa, ..*params };
            (0..n_subbands)
                .map(|_| ThresholdState::new(&params, n_subbands, filter_len))
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        Ok(Self { rule, thresholds })
    }

    pub fn rule(&self) -> &ScalingRule {
        &self.rule
    }

    pub fn thresholds(&self) -> &[ThresholdState] {
        &self.thresholds
    }

    /// Scaling factor for subband `band`; the threshold is updated first.
    pub fn q(&mut self, band: usize, e: f64) -> f64 {
        let xi = match self.thresholds.get_mut(band) {
            Some(state) => state.update_threshold(e),
            None => f64::INFINITY,
        };
        scale(&self.rule, e, xi)
    }

    /// Record a suspended tick in every subband's median window.
    pub fn freeze(&mut self) {
        for state in &mut self.thresholds {
            state.push_frozen();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(window: usize) -> ThresholdState {
        let params = ThresholdParams {
            window,
            ..ThresholdParams::default()
        };
        ThresholdState::new(&params, 4, 128).unwrap()
    }

    #[test]
    fn first_tick_uses_zero_theta() {
        let mut st = state(20);
        let xi = st.update_threshold(2.0);
        let c = 1.483 * (1.0 + 5.0 / 19.0);
        assert!((st.c_sigma() - c).abs() < 1e-15);
        assert!((st.c_sigma() - 1.87326).abs() < 1e-5);
        assert!((st.sigma_e2_hat() - c * 4.0).abs() < 1e-12);
        assert!((xi - 2.576 * (c * 4.0f64).sqrt()).abs() < 1e-12);
        // Hand value quoted to four decimals; the exact figure is 7.05140.
        assert!((xi - 7.0517).abs() < 5e-4);
    }

    #[test]
    fn theta_follows_tau_rule() {
        let st = state(20);
        assert!((st.theta() - (1.0 - 4.0 / 256.0)).abs() < 1e-15);
    }

    #[test]
    fn constant_window_converges_to_fixed_point() {
        let mut st = state(20);
        for _ in 0..5000 {
            st.update_threshold(3.0);
        }
        let c = st.c_sigma();
        assert!((st.sigma_e2_hat() - c * 9.0).abs() < 1e-9);
    }

    #[test]
    fn single_outlier_does_not_move_estimate() {
        let mut st = state(20);
        for _ in 0..3000 {
            st.update_threshold(1.0);
        }
        let before = st.sigma_e2_hat();
        st.update_threshold(1000.0);
        assert!((st.sigma_e2_hat() - before).abs() < 1e-12);
    }

    #[test]
    fn frozen_entries_are_flagged() {
        let mut st = state(4);
        st.update_threshold(1.0);
        st.push_frozen();
        st.push_frozen();
        assert_eq!(st.frozen_entries(), 2);
        assert_eq!(st.filled(), 3);
        for _ in 0..4 {
            st.update_threshold(1.0);
        }
        assert_eq!(st.frozen_entries(), 0);
        assert_eq!(st.filled(), 4);
    }

    #[test]
    fn huber_gate_and_correntropy_values() {
        let mh = ScalingRule::ModifiedHuber { kappa: 2.576 };
        assert_eq!(scale(&mh, 0.5, 1.0), 1.0);
        assert_eq!(scale(&mh, 1.5, 1.0), 0.0);
        assert_eq!(scale(&mh, -1.0, 1.0), 0.0);
        let mcc = ScalingRule::Correntropy { kernel_width: 0.3 };
        assert_eq!(scale(&mcc, 0.0, 0.0), 1.0);
        assert!((scale(&mcc, 0.3, 0.0) - (-0.5f64).exp()).abs() < 1e-15);
        assert!((scale(&mcc, 0.3, 0.0) - 0.60653).abs() < 1e-5);
    }

    #[test]
    fn rho_endpoints() {
        assert_eq!(rho(1.0), 1.0);
        assert_eq!(rho(0.0), 0.0);
        assert_eq!(rho(0.5), 0.75);
    }

    #[test]
    fn invalid_rules_rejected() {
        assert!(ScalingRule::ModifiedHuber { kappa: 0.0 }
            .validate()
            .is_err());
        assert!(ScalingRule::Correntropy { kernel_width: -1.0 }
            .validate()
            .is_err());
        let bad = ThresholdParams {
            window: 1,
            ..ThresholdParams::default()
        };
        assert!(ThresholdState::new(&bad, 4, 128).is_err());
    }
}
