//! Bundled synthetic echo paths.
//!
//! These stand in for measured network and acoustic echo responses. Each is
//! deterministic and scaled to unit energy; measured responses can be loaded
//! from float-per-line files instead.

use std::f64::consts::PI;

use rand::Rng;

use crate::error::{Error, Result};
use crate::signals;

pub const BUILTIN_CHANNELS: [(&str, &str); 4] = [
    (
        "sparse128",
        "network echo path, short dispersive burst after a bulk delay",
    ),
    (
        "dispersive128",
        "network echo path, energy spread over all taps",
    ),
    (
        "sparse512",
        "acoustic path, direct sound and a few discrete reflections",
    ),
    (
        "dispersive512",
        "acoustic path, exponentially decaying diffuse tail",
    ),
];

/// Impulse response of a bundled channel.
pub fn builtin_channel(name: &str) -> Result<Vec<f64>> {
    let mut h = match name {
        "sparse128" => sparse_network(128),
        "dispersive128" => diffuse(128, 64.0, 0x5eed_0128),
        "sparse512" => sparse_acoustic(512),
        "dispersive512" => diffuse(512, 200.0, 0x5eed_0512),
        _ => return Err(Error::UnknownChannel(name.to_string())),
    };
    normalize_energy(&mut h);
    Ok(h)
}

fn normalize_energy(h: &mut [f64]) {
    let e: f64 = h.iter().map(|x| x * x).sum();
    if e > 0.0 {
        let s = e.sqrt();
        h.iter_mut().for_each(|x| *x /= s);
    }
}

fn sparse_network(len: usize) -> Vec<f64> {
    let mut h = vec![0.0; len];
    let delay = len / 4;
    for k in 0..12 {
        let t = k as f64;
        h[delay + k] = (-t / 2.5).exp() * (1.1 * t + 0.6).cos();
    }
    // Faint residual tail.
    for (k, x) in h.iter_mut().enumerate().skip(delay + 12) {
        let t = (k - delay) as f64;
        *x = 2e-3 * (-t / 20.0).exp() * (0.9 * t).sin();
    }
    h
}

fn sparse_acoustic(len: usize) -> Vec<f64> {
    let mut h = vec![0.0; len];
    let taps = [
        (20, 1.0),
        (57, -0.55),
        (131, 0.4),
        (240, -0.25),
        (377, 0.15),
    ];
    for (pos, amp) in taps {
        for k in 0..6 {
            if pos + k < len {
                h[pos + k] += amp * (-(k as f64) / 1.5).exp() * (PI * k as f64 / 3.0).cos();
            }
        }
    }
    h
}

fn diffuse(len: usize, decay: f64, seed: u64) -> Vec<f64> {
    let mut rng = signals::rng(seed, 0);
    let mut h = vec![0.0; len];
    let onset = 4;
    let mut smooth = 0.0;
    for (k, x) in h.iter_mut().enumerate().skip(onset) {
        let r = 2.0 * rng.random::<f64>() - 1.0;
        smooth = 0.5 * smooth + r;
        *x = smooth * (-((k - onset) as f64) / decay).exp();
    }
    h
}
