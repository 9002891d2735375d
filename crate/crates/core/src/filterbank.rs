//! Cosine-modulated analysis filter banks and critically sampled subband
//! decomposition.
//!
//! The prototype is a Kaiser-windowed lowpass with cutoff `π/(2N)`. Its
//! window shape parameter is chosen by a coarse scan followed by a
//! golden-section refinement that maximizes the measured stopband
//! attenuation. The stopband starts at `1.1·π/N`.
//!
//! Each analysis filter is
//!
//! ```text
//! h_i(l) = 2 p(l) cos[(2i+1)(2l-(J-1))π/(4N) + (-1)^i π/4],  l = 0..J-1
//! ```

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, PI};
use std::path::Path;

use crate::adaptive::SubbandTick;
use crate::error::{Error, Result};

/// Number of frequency points on `[0, π]` used to measure attenuation.
pub const SCAN_POINTS: usize = 8192;

/// Prototype lengths for the standard subband counts: `(N, J)`.
pub const PRESETS: [(usize, usize); 3] = [(2, 17), (4, 33), (8, 65)];

/// Prototype length used when none is given: `8N + 1` (matches every preset).
pub fn default_length(n_subbands: usize) -> usize {
    8 * n_subbands + 1
}

/// Lower edge of the prototype stopband in radians per sample.
pub fn stopband_edge(n_subbands: usize) -> f64 {
    PI / n_subbands as f64 + 0.1 * PI / n_subbands as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeFilter {
    coeffs: Vec<f64>,
    n_subbands: usize,
    stopband_atten_db: f64,
}

impl PrototypeFilter {
    /// Wrap externally supplied coefficients, measuring their attenuation.
    pub fn from_coeffs(coeffs: Vec<f64>, n_subbands: usize) -> Result<Self> {
        if n_subbands == 0 {
            return Err(Error::InvalidParameter("n_subbands must be >= 1".into()));
        }
        if coeffs.is_empty() {
            return Err(Error::InvalidParameter(
                "prototype has no coefficients".into(),
            ));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("prototype coefficients"));
        }
        let stopband_atten_db = stopband_attenuation_db(&coeffs, n_subbands);
        Ok(Self {
            coeffs,
            n_subbands,
            stopband_atten_db,
        })
    }

    /// Read a prototype from a float-per-line text file.
    pub fn from_file(path: &Path, n_subbands: usize) -> Result<Self> {
        let coeffs = crate::signals::read_float_text(path)?;
        Self::from_coeffs(coeffs, n_subbands)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn n_subbands(&self) -> usize {
        self.n_subbands
    }

    /// Measured stopband attenuation in dB (infinite when the stopband is empty).
    pub fn stopband_atten_db(&self) -> f64 {
        self.stopband_atten_db
    }
}

/// Measured stopband attenuation of `coeffs` for an `n_subbands` bank, in dB
/// relative to the DC gain. Returns `+∞` when the stopband lies beyond `π`.
pub fn stopband_attenuation_db(coeffs: &[f64], n_subbands: usize) -> f64 {
    let edge = stopband_edge(n_subbands);
    if edge > PI {
        return f64::INFINITY;
    }
    let dc = coeffs.iter().sum::<f64>().abs();
    if dc == 0.0 {
        return 0.0;
    }
    let mut worst = 0.0f64;
    for k in 0..=SCAN_POINTS {
        let w = PI * k as f64 / SCAN_POINTS as f64;
        if w < edge {
            continue;
        }
        worst = worst.max(magnitude_at(coeffs, w));
    }
    if worst == 0.0 {
        return f64::INFINITY;
    }
    -20.0 * (worst / dc).log10()
}

fn magnitude_at(coeffs: &[f64], w: f64) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    for (l, &c) in coeffs.iter().enumerate() {
        let (s, co) = (w * l as f64).sin_cos();
        re += c * co;
        im -= c * s;
    }
    re.hypot(im)
}

/// Zeroth-order modified Bessel function of the first kind.
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn kaiser_lowpass(length: usize, cutoff: f64, shape: f64) -> Vec<f64> {
    let center = (length as f64 - 1.0) / 2.0;
    let norm = bessel_i0(shape);
    let mut taps: Vec<f64> = (0..length)
        .map(|l| {
            let t = l as f64 - center;
            let ideal = if t == 0.0 {
                cutoff / PI
            } else {
                (cutoff * t).sin() / (PI * t)
            };
            let r = if center > 0.0 { t / center } else { 0.0 };
            let window = bessel_i0(shape * (1.0 - r * r).max(0.0).sqrt()) / norm;
            ideal * window
        })
        .collect();
    let dc: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= dc;
    }
    taps
}

/// Design a lowpass prototype for an `n_subbands` cosine-modulated bank.
///
/// Fails with [`Error::AttenuationUnreachable`] (carrying the best measured
/// attenuation) when `target_atten_db` cannot be met at this length.
pub fn design_prototype(
    n_subbands: usize,
    length: usize,
    target_atten_db: f64,
) -> Result<PrototypeFilter> {
    if n_subbands == 0 {
        return Err(Error::InvalidParameter("n_subbands must be >= 1".into()));
    }
    if !(target_atten_db > 0.0) || !target_atten_db.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "target attenuation must be positive, got {target_atten_db}"
        )));
    }
    if length < n_subbands {
        return Err(Error::InvalidParameter(format!(
            "prototype length {length} shorter than subband count {n_subbands}"
        )));
    }

    if stopband_edge(n_subbands) > PI {
        // No stopband: a centred scaled impulse makes h_0 a pure delay.
        let center = (length - 1) / 2;
        let phase = (2.0 * center as f64 - (length as f64 - 1.0)) * PI / 4.0 + FRAC_PI_4;
        let mut coeffs = vec![0.0; length];
        coeffs[center] = 1.0 / (2.0 * phase.cos());
        if length == 1 {
            coeffs[0] = FRAC_1_SQRT_2;
        }
        return PrototypeFilter::from_coeffs(coeffs, n_subbands);
    }

    let cutoff = PI / (2.0 * n_subbands as f64);
    let atten =
        |shape: f64| stopband_attenuation_db(&kaiser_lowpass(length, cutoff, shape), n_subbands);

    // Coarse scan, then golden-section refinement around the best grid point.
    const MAX_SHAPE: f64 = 16.0;
    const GRID: usize = 33;
    let step = MAX_SHAPE / (GRID - 1) as f64;
    let (mut best_shape, mut best_atten) = (0.0, f64::NEG_INFINITY);
    for k in 0..GRID {
        let shape = k as f64 * step;
        let a = atten(shape);
        if a > best_atten {
            best_shape = shape;
            best_atten = a;
        }
    }
    let golden = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (
        (best_shape - step).max(0.0),
        (best_shape + step).min(MAX_SHAPE),
    );
    let mut x1 = hi - golden * (hi - lo);
    let mut x2 = lo + golden * (hi - lo);
    let (mut f1, mut f2) = (atten(x1), atten(x2));
    for _ in 0..40 {
        if f1 > f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - golden * (hi - lo);
            f1 = atten(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + golden * (hi - lo);
            f2 = atten(x2);
        }
    }
    for (shape, a) in [(x1, f1), (x2, f2)] {
        if a > best_atten {
            best_shape = shape;
            best_atten = a;
        }
    }

    if best_atten < target_atten_db {
        return Err(Error::AttenuationUnreachable {
            required: target_atten_db,
            achieved: best_atten,
            length,
        });
    }
    PrototypeFilter::from_coeffs(kaiser_lowpass(length, cutoff, best_shape), n_subbands)
}

/// `N` cosine-modulated analysis filters sharing one prototype.
#[derive(Debug, Clone)]
pub struct AnalysisBank {
    filters: Vec<Vec<f64>>,
    prototype: PrototypeFilter,
}

impl AnalysisBank {
    pub fn modulate(prototype: PrototypeFilter) -> Self {
        let n = prototype.n_subbands();
        let j = prototype.len() as f64;
        let filters = (0..n)
            .map(|i| {
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                prototype
                    .coeffs()
                    .iter()
                    .enumerate()
                    .map(|(l, &p)| {
                        let arg = (2 * i + 1) as f64 * (2.0 * l as f64 - (j - 1.0)) * PI
                            / (4.0 * n as f64)
                            + sign * FRAC_PI_4;
                        2.0 * p * arg.cos()
                    })
                    .collect()
            })
            .collect();
        Self { filters, prototype }
    }

    /// Design a prototype and modulate it in one go.
    pub fn design(n_subbands: usize, length: usize, target_atten_db: f64) -> Result<Self> {
        Ok(Self::modulate(design_prototype(
            n_subbands,
            length,
            target_atten_db,
        )?))
    }

    pub fn filters(&self) -> &[Vec<f64>] {
        &self.filters
    }

    pub fn prototype(&self) -> &PrototypeFilter {
        &self.prototype
    }

    pub fn n_subbands(&self) -> usize {
        self.filters.len()
    }

    pub fn filter_len(&self) -> usize {
        self.prototype.len()
    }

    /// `‖h_i‖₂²` for every band.
    pub fn energies(&self) -> Vec<f64> {
        self.filters
            .iter()
            .map(|h| h.iter().map(|x| x * x).sum())
            .collect()
    }
}

/// Fixed-length history holding the newest sample first.
///
/// Samples are written twice into a buffer of twice the capacity so that the
/// window is always one contiguous slice.
#[derive(Debug, Clone)]
pub struct DelayLine {
    buf: Vec<f64>,
    pos: usize,
    len: usize,
}

impl DelayLine {
    pub fn new(len: usize) -> Self {
        assert!(len > 0, "delay line length must be positive");
        Self {
            buf: vec![0.0; 2 * len],
            pos: 0,
            len,
        }
    }

    pub fn push(&mut self, x: f64) {
        self.pos = if self.pos == 0 {
            self.len - 1
        } else {
            self.pos - 1
        };
        self.buf[self.pos] = x;
        self.buf[self.pos + self.len] = x;
    }

    /// `[x(n), x(n-1), ..., x(n-len+1)]`.
    pub fn as_slice(&self) -> &[f64] {
        &self.buf[self.pos..self.pos + self.len]
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dot(&self, taps: &[f64]) -> f64 {
        self.as_slice().iter().zip(taps).map(|(a, b)| a * b).sum()
    }

    pub fn clear(&mut self) {
        self.buf.iter_mut().for_each(|x| *x = 0.0);
    }
}

/// Streams fullband `u(n)`, `d(n)` through the bank and produces one
/// [`SubbandTick`] per `N` input samples.
#[derive(Debug, Clone)]
pub struct SubbandDecomposer {
    bank: AnalysisBank,
    input_line: DelayLine,
    desired_line: DelayLine,
    subband_inputs: Vec<DelayLine>,
}

impl SubbandDecomposer {
    pub fn new(bank: AnalysisBank, regressor_len: usize) -> Result<Self> {
        if regressor_len == 0 {
            return Err(Error::InvalidParameter(
                "regressor length must be >= 1".into(),
            ));
        }
        let j = bank.filter_len();
        let n = bank.n_subbands();
        Ok(Self {
            bank,
            input_line: DelayLine::new(j),
            desired_line: DelayLine::new(j),
            subband_inputs: (0..n).map(|_| DelayLine::new(regressor_len)).collect(),
        })
    }

    pub fn bank(&self) -> &AnalysisBank {
        &self.bank
    }

    pub fn n_subbands(&self) -> usize {
        self.bank.n_subbands()
    }

    pub fn regressor_len(&self) -> usize {
        self.subband_inputs[0].len()
    }

    /// A zeroed tick of the right shape for [`decompose_step`](Self::decompose_step).
    pub fn empty_tick(&self) -> SubbandTick {
        SubbandTick::zeros(self.n_subbands(), self.regressor_len())
    }

    /// Consume one block of `N` fullband samples and fill `tick` with the
    /// decimated subband regressors and desired samples taken at the last
    /// sample of the block.
    pub fn decompose_step(
        &mut self,
        u_block: &[f64],
        d_block: &[f64],
        tick: &mut SubbandTick,
    ) -> Result<()> {
        let n = self.n_subbands();
        for len in [u_block.len(), d_block.len()] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: len,
                });
            }
        }
        if tick.n_subbands() != n || tick.regressor_len() != self.regressor_len() {
            return Err(Error::DimensionMismatch {
                expected: n * self.regressor_len(),
                actual: tick.n_subbands() * tick.regressor_len(),
            });
        }
        for (&u, &d) in u_block.iter().zip(d_block) {
            self.input_line.push(u);
            self.desired_line.push(d);
            for (line, h) in self.subband_inputs.iter_mut().zip(self.bank.filters()) {
                line.push(self.input_line.dot(h));
            }
        }
        for (i, h) in self.bank.filters().iter().enumerate() {
            tick.desired[i] = self.desired_line.dot(h);
            tick.regressors[i].copy_from_slice(self.subband_inputs[i].as_slice());
        }
        Ok(())
    }

    pub fn reset(&mut self) {
        self.input_line.clear();
        self.desired_line.clear();
        self.subband_inputs.iter_mut().for_each(DelayLine::clear);
    }
}
