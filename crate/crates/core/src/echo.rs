//! Delayless echo-cancellation loop.
//!
//! The engine adapts in the decimated subband domain; every `N` input samples
//! its weights are copied into a fullband filter that produces the output
//! error `e(n) = d(n) - uᵀ(n) w(n)` without filter-bank delay.

use serde::{Deserialize, Serialize};

use crate::adaptive::{SubbandFilter, SubbandTick};
use crate::error::{Error, Result};
use crate::filterbank::{DelayLine, SubbandDecomposer};

/// Cap reported when the residual power is exactly zero.
pub const ERLE_CAP_DB: f64 = 320.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HoldUnit {
    /// Hangover counted in fullband samples, rounded up to whole blocks.
    #[default]
    Samples,
    /// Hangover counted in decimated ticks.
    Ticks,
}

/// Geigel double-talk detector, evaluated once per decimated tick:
/// double talk is declared when `|d(kN)| ≥ T_c · max |u(kN - m)|`,
/// `m = 0..M-1`, and adaptation then stays off for the hangover period.
#[derive(Debug, Clone)]
pub struct GeigelDtd {
    threshold: f64,
    hold_ticks: usize,
    hold_counter: usize,
    window: DelayLine,
    declared: usize,
}

impl GeigelDtd {
    pub fn new(
        threshold: f64,
        hold: usize,
        unit: HoldUnit,
        n_subbands: usize,
        window_len: usize,
    ) -> Result<Self> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "Geigel threshold {threshold} outside (0, 1)"
            )));
        }
        if n_subbands == 0 || window_len == 0 {
            return Err(Error::InvalidParameter("empty detector window".into()));
        }
        let hold_ticks = match unit {
            HoldUnit::Ticks => hold,
            HoldUnit::Samples => hold.div_ceil(n_subbands),
        };
        Ok(Self {
            threshold,
            hold_ticks,
            hold_counter: 0,
            window: DelayLine::new(window_len),
            declared: 0,
        })
    }

    /// Feed one fullband far-end sample.
    pub fn observe(&mut self, u: f64) {
        self.window.push(u.abs());
    }

    /// Whether `d` alone trips the detector against the current window.
    pub fn detects(&self, d: f64) -> bool {
        let peak = self.window.as_slice().iter().copied().fold(0.0, f64::max);
        d.abs() >= self.threshold * peak && peak > 0.0
    }

    /// Evaluate at a tick; true when adaptation must be suspended.
    pub fn evaluate(&mut self, d: f64) -> bool {
        if self.detects(d) {
            self.hold_counter = self.hold_ticks;
            self.declared += 1;
            true
        } else if self.hold_counter > 0 {
            self.hold_counter -= 1;
            true
        } else {
            false
        }
    }

    pub fn hold_ticks(&self) -> usize {
        self.hold_ticks
    }

    pub fn hold_counter(&self) -> usize {
        self.hold_counter
    }

    /// Number of ticks on which double talk was declared.
    pub fn declarations(&self) -> usize {
        self.declared
    }
}

/// Smoothed-power ERLE: `avg ← 0.999·avg + 0.001·x²` for both `d` and `e`.
#[derive(Debug, Clone, Default)]
pub struct ErleTracker {
    avg_d2: f64,
    avg_e2: f64,
}

impl ErleTracker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Update with one sample pair; `None` while both powers are still zero.
    pub fn update(&mut self, d: f64, e: f64) -> Option<f64> {
        self.avg_d2 = 0.999 * self.avg_d2 + 0.001 * d * d;
        self.avg_e2 = 0.999 * self.avg_e2 + 0.001 * e * e;
        if self.avg_e2 > 0.0 {
            Some((10.0 * (self.avg_d2 / self.avg_e2).log10()).min(ERLE_CAP_DB))
        } else if self.avg_d2 > 0.0 {
            Some(ERLE_CAP_DB)
        } else {
            None
        }
    }
}

/// Result of one block of `N` fullband samples.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockOutput {
    /// Fullband output errors, all computed with the same weight snapshot.
    pub errors: Vec<f64>,
    /// A-priori subband errors (empty when the tick was frozen).
    pub subband_errors: Vec<f64>,
    pub double_talk: bool,
}

pub struct EchoCanceler {
    engine: Box<dyn SubbandFilter>,
    decomposer: SubbandDecomposer,
    copied_w: Vec<f64>,
    input_line: DelayLine,
    tick: SubbandTick,
    copies: usize,
}

impl EchoCanceler {
    pub fn new(engine: Box<dyn SubbandFilter>, decomposer: SubbandDecomposer) -> Result<Self> {
        let m = engine.weights().len();
        if decomposer.regressor_len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                actual: decomposer.regressor_len(),
            });
        }
        let tick = decomposer.empty_tick();
        Ok(Self {
            copied_w: engine.weights().to_vec(),
            engine,
            decomposer,
            input_line: DelayLine::new(m),
            tick,
            copies: 0,
        })
    }

    pub fn n_subbands(&self) -> usize {
        self.decomposer.n_subbands()
    }

    /// The fullband weight snapshot `w(n)`.
    pub fn weights(&self) -> &[f64] {
        &self.copied_w
    }

    pub fn engine(&self) -> &dyn SubbandFilter {
        self.engine.as_ref()
    }

    /// How many times the engine weights were copied to the fullband filter.
    pub fn copies(&self) -> usize {
        self.copies
    }

    pub fn process_block(
        &mut self,
        u_block: &[f64],
        d_block: &[f64],
        dtd: Option<&mut GeigelDtd>,
    ) -> Result<BlockOutput> {
        let n = self.n_subbands();
        if u_block.len() != n || d_block.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: u_block.len().min(d_block.len()),
            });
        }
        if u_block.iter().chain(d_block).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("fullband block"));
        }

        let mut errors = Vec::with_capacity(n);
        let mut dtd = dtd;
        for (&u, &d) in u_block.iter().zip(d_block) {
            self.input_line.push(u);
            if let Some(det) = dtd.as_deref_mut() {
                det.observe(u);
            }
            errors.push(d - self.input_line.dot(&self.copied_w));
        }

        self.decomposer
            .decompose_step(u_block, d_block, &mut self.tick)?;
        let double_talk = match dtd {
            Some(det) => det.evaluate(d_block[n - 1]),
            None => false,
        };
        let subband_errors = if double_talk {
            self.engine.freeze();
            Vec::new()
        } else {
            self.engine.step(&self.tick)?;
            self.engine.last_errors().to_vec()
        };
        self.copied_w.copy_from_slice(self.engine.weights());
        self.copies += 1;

        Ok(BlockOutput {
            errors,
            subband_errors,
            double_talk,
        })
    }
}
