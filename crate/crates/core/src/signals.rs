//! Input signals, additive noise and sample-file readers.
//!
//! Every generator takes an explicit seed and draws from a ChaCha stream, so
//! `(parameters, seed, n)` always reproduces the same samples.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Independent random streams derived from one seed.
pub mod stream {
    pub const INPUT: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const NEAR_END: u64 = 3;
}

/// A ChaCha generator for `(seed, stream)`.
pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// First-order autoregressive process `x(t) = pole·x(t-1) + w(t)` driven by
/// unit-variance white Gaussian noise, zero initial state.
pub fn gen_ar1(pole: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    if !(pole.abs() < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "AR(1) pole {pole} must satisfy |pole| < 1"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidParameter(
            "sample count must be positive".into(),
        ));
    }
    let mut rng = rng(seed, stream::INPUT);
    Ok(ar1_with(&mut rng, pole, n))
}

fn ar1_with<R: Rng>(rng: &mut R, pole: f64, n: usize) -> Vec<f64> {
    let mut state = 0.0;
    (0..n)
        .map(|_| {
            let w: f64 = StandardNormal.sample(rng);
            state = pole * state + w;
            state
        })
        .collect()
}

/// Autocorrelation `r(τ) = pole^|τ| / (1 - pole²)` of [`gen_ar1`].
pub fn ar1_autocorrelation(pole: f64, lag: usize) -> f64 {
    pole.powi(lag as i32) / (1.0 - pole * pole)
}

/// The `m × m` Toeplitz autocorrelation matrix of an AR(1) input.
pub fn ar1_toeplitz(pole: f64, m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, m, |r, c| ar1_autocorrelation(pole, r.abs_diff(c)))
}

/// Ratio of largest to smallest eigenvalue of a symmetric matrix.
pub fn eigenvalue_spread(matrix: &DMatrix<f64>) -> f64 {
    let eig = matrix.clone().symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    max / min
}

/// `w°ᵀ R w°` for an AR(1) input, i.e. the power of the noise-free system output.
pub fn ar1_output_power(w: &[f64], pole: f64) -> f64 {
    let mut power = 0.0;
    for (a, &wa) in w.iter().enumerate() {
        for (b, &wb) in w.iter().enumerate() {
            power += wa * wb * ar1_autocorrelation(pole, a.abs_diff(b));
        }
    }
    power
}

/// `E{(uᵀw)²}` estimated from a realization of the input.
pub fn empirical_output_power(u: &[f64], w: &[f64]) -> f64 {
    let y = convolve(u, w);
    y.iter().map(|v| v * v).sum::<f64>() / y.len().max(1) as f64
}

/// Causal FIR filtering, output the same length as `x`.
pub fn convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|n| {
            h.iter()
                .take(n + 1)
                .enumerate()
                .map(|(m, &hm)| hm * x[n - m])
                .sum()
        })
        .collect()
}

/// Speech-like test signal: an AR(0.9) carrier under a syllabic envelope,
/// separated by silent gaps. Peak-normalized to 1.
pub fn gen_speech_like(n: usize, seed: u64) -> Vec<f64> {
    speech_like_with(&mut rng(seed, stream::INPUT), n)
}

fn speech_like_with<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let carrier = ar1_with(rng, 0.9, n);
    let mut out = vec![0.0; n];
    let mut t = 0;
    while t < n {
        // Talk spurts of 0.2-0.6 s and pauses of 0.05-0.25 s at 8 kHz.
        let talk = rng.random_range(1600..4800);
        let pause = rng.random_range(400..2000);
        let gain = rng.random_range(0.5..1.0);
        let syllable = rng.random_range(600.0..1200.0);
        for k in 0..talk.min(n - t) {
            let phase = PI * k as f64 / syllable;
            let env = gain * phase.sin().abs().powf(0.7);
            out[t + k] = env * carrier[t + k];
        }
        t += talk + pause;
    }
    normalize_peak(&mut out);
    out
}

fn normalize_peak(x: &mut [f64]) {
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        x.iter_mut().for_each(|v| *v /= peak);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Gaussian,
    ContaminatedGaussian,
    AlphaStable,
    /// No additive noise at all.
    None,
}

/// Additive noise description.
///
/// `snr_db` fixes the Gaussian floor relative to the system-output power;
/// impulses have variance `impulse_gain` times that power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub snr_db: f64,
    pub p_r: f64,
    pub impulse_gain: f64,
    pub alpha: f64,
    pub dispersion: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            kind: NoiseKind::ContaminatedGaussian,
            snr_db: 30.0,
            p_r: 0.001,
            impulse_gain: 1000.0,
            alpha: 1.6,
            dispersion: 1.0 / 30.0,
        }
    }
}

impl NoiseSpec {
    pub fn gaussian(snr_db: f64) -> Self {
        Self {
            kind: NoiseKind::Gaussian,
            snr_db,
            ..Self::default()
        }
    }

    pub fn contaminated(snr_db: f64, p_r: f64, impulse_gain: f64) -> Self {
        Self {
            kind: NoiseKind::ContaminatedGaussian,
            snr_db,
            p_r,
            impulse_gain,
            ..Self::default()
        }
    }

    pub fn alpha_stable(alpha: f64, dispersion: f64) -> Self {
        Self {
            kind: NoiseKind::AlphaStable,
            alpha,
            dispersion,
            ..Self::default()
        }
    }

    pub fn none() -> Self {
        Self {
            kind: NoiseKind::None,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.snr_db.is_finite() {
            return Err(Error::InvalidParameter("snr_db must be finite".into()));
        }
        if !(0.0..=1.0).contains(&self.p_r) {
            return Err(Error::InvalidParameter(format!(
                "p_r {} outside [0, 1]",
                self.p_r
            )));
        }
        if !(self.impulse_gain >= 0.0) {
            return Err(Error::InvalidParameter("impulse_gain must be >= 0".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 2.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha {} outside (0, 2]",
                self.alpha
            )));
        }
        if !(self.dispersion > 0.0) {
            return Err(Error::InvalidParameter("dispersion must be > 0".into()));
        }
        Ok(())
    }

    /// Gaussian floor variance `σ_d̄² · 10^(-SNR/10)`.
    pub fn gaussian_variance(&self, system_output_power: f64) -> f64 {
        system_output_power * 10f64.powf(-self.snr_db / 10.0)
    }
}

/// A noise realization together with the indices where impulses fired.
#[derive(Debug, Clone)]
pub struct NoiseRealization {
    pub samples: Vec<f64>,
    pub impulses: Vec<usize>,
}

pub fn gen_noise(
    spec: &NoiseSpec,
    system_output_power: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    Ok(gen_noise_detailed(spec, system_output_power, n, seed)?.samples)
}

pub fn gen_noise_detailed(
    spec: &NoiseSpec,
    system_output_power: f64,
    n: usize,
    seed: u64,
) -> Result<NoiseRealization> {
    spec.validate()?;
    if !(system_output_power > 0.0) || !system_output_power.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "system output power must be positive, got {system_output_power}"
        )));
    }
    let mut rng = rng(seed, stream::NOISE);
    let mut impulses = Vec::new();
    let samples = match spec.kind {
        NoiseKind::None => vec![0.0; n],
        NoiseKind::Gaussian => {
            let sd = spec.gaussian_variance(system_output_power).sqrt();
            (0..n)
                .map(|_| {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    sd * g
                })
                .collect()
        }
        NoiseKind::ContaminatedGaussian => {
            let sd = spec.gaussian_variance(system_output_power).sqrt();
            let impulse_sd = (spec.impulse_gain * system_output_power).sqrt();
            (0..n)
                .map(|t| {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    let fire = rng.random::<f64>() < spec.p_r;
                    let eta: f64 = StandardNormal.sample(&mut rng);
                    if fire {
                        impulses.push(t);
                        sd * g + impulse_sd * eta
                    } else {
                        sd * g
                    }
                })
                .collect()
        }
        NoiseKind::AlphaStable => (0..n)
            .map(|_| sample_symmetric_stable(&mut rng, spec.alpha, spec.dispersion))
            .collect(),
    };
    Ok(NoiseRealization { samples, impulses })
}

/// One draw from the symmetric α-stable law with characteristic function
/// `exp(-dispersion·|t|^α)`, via the angle/exponential transformation.
pub fn sample_symmetric_stable<R: Rng>(rng: &mut R, alpha: f64, dispersion: f64) -> f64 {
    let v = PI * (rng.random::<f64>() - 0.5);
    let w: f64 = Exp1.sample(rng);
    let scale = dispersion.powf(1.0 / alpha);
    let x = if (alpha - 1.0).abs() < 1e-12 {
        v.tan()
    } else {
        (alpha * v).sin() / v.cos().powf(1.0 / alpha)
            * (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha)
    };
    debug_assert!(v.abs() <= FRAC_PI_2);
    scale * x
}

/// Near-end talker: continuously voiced bursts over the given `(start, len)`
/// sample ranges, with peak amplitude `level`.
pub fn gen_bursts(n: usize, bursts: &[(usize, usize)], level: f64, seed: u64) -> Vec<f64> {
    let mut rng = rng(seed, stream::NEAR_END);
    let mut carrier = ar1_with(&mut rng, 0.9, n);
    normalize_peak(&mut carrier);
    let mut out = vec![0.0; n];
    for &(start, len) in bursts {
        let end = (start + len).min(n);
        for t in start..end {
            let phase = PI * (t - start) as f64 / 800.0;
            out[t] = level * (0.3 + 0.7 * phase.sin().abs()) * carrier[t];
        }
    }
    out
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Parse a float-per-line text file. Blank lines and `#` comments are skipped.
pub fn read_float_text(path: &Path) -> Result<Vec<f64>> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes).map_err(|_| Error::format(path, "not UTF-8 text"))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| {
            Error::format(
                path,
                format!("line {}: '{line}' is not a number", lineno + 1),
            )
        })?;
        if !v.is_finite() {
            return Err(Error::format(
                path,
                format!("line {}: non-finite value", lineno + 1),
            ));
        }
        out.push(v);
    }
    if out.is_empty() {
        return Err(Error::format(path, "file holds no samples"));
    }
    Ok(out)
}

pub fn write_float_text(path: &Path, values: &[f64]) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut text = String::with_capacity(values.len() * 24);
    for v in values {
        text.push_str(&format!("{v:e}\n"));
    }
    file.write_all(text.as_bytes())
        .map_err(|e| Error::io(path, e))
}

fn pcm16_to_float(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
        .collect()
}

fn wav_data(path: &Path, bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() < 12 || &bytes[8..12] != b"WAVE" {
        return Err(Error::format(path, "RIFF file is not WAVE"));
    }
    let mut pos = 12;
    let mut format_ok = false;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes([
            bytes[pos + 4],
            bytes[pos + 5],
            bytes[pos + 6],
            bytes[pos + 7],
        ]) as usize;
        let body = pos + 8;
        let end = (body + size).min(bytes.len());
        match id {
            b"fmt " if size >= 16 => {
                let fmt = u16::from_le_bytes([bytes[body], bytes[body + 1]]);
                let channels = u16::from_le_bytes([bytes[body + 2], bytes[body + 3]]);
                let bits = u16::from_le_bytes([bytes[body + 14], bytes[body + 15]]);
                if fmt != 1 || channels != 1 || bits != 16 {
                    return Err(Error::format(path, "only 16-bit mono PCM WAV is supported"));
                }
                format_ok = true;
            }
            b"data" => {
                if !format_ok {
                    return Err(Error::format(path, "data chunk before fmt chunk"));
                }
                return Ok(pcm16_to_float(&bytes[body..end]));
            }
            _ => {}
        }
        pos = body + size + (size & 1);
    }
    Err(Error::format(path, "no data chunk"))
}

/// Load a mono input signal.
///
/// `.wav` (16-bit mono PCM), `.pcm`/`.raw`/`.s16` (headerless 16-bit
/// little-endian) and anything else as float-per-line text. Samples with a
/// peak above 1 are scaled down to unit peak.
pub fn load_pcm(path: &Path) -> Result<Vec<f64>> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    let mut samples = match ext.as_str() {
        "wav" => {
            let bytes = read_file(path)?;
            if bytes.len() < 4 || &bytes[..4] != b"RIFF" {
                return Err(Error::format(path, "missing RIFF header"));
            }
            wav_data(path, &bytes)?
        }
        "pcm" | "raw" | "s16" => {
            let bytes = read_file(path)?;
            if bytes.len() % 2 != 0 {
                return Err(Error::format(path, "odd byte count for 16-bit PCM"));
            }
            pcm16_to_float(&bytes)
        }
        _ => read_float_text(path)?,
    };
    if samples.is_empty() {
        return Err(Error::format(path, "file holds no samples"));
    }
    let peak = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 1.0 {
        normalize_peak(&mut samples);
    }
    Ok(samples)
}
