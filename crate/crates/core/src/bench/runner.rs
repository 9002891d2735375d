//! Monte-Carlo experiment runner.

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use super::channels::builtin_channel;
use super::config::{ExperimentConfig, InputKind, NearEndKind};
use crate::adaptive::{msd_db, Diagnostics};
use crate::echo::{EchoCanceler, ErleTracker, GeigelDtd};
use crate::error::{Error, Result};
use crate::filterbank::{AnalysisBank, DelayLine, SubbandDecomposer};
use crate::signals::{self, NoiseKind};

/// Everything that is identical across runs: channel, bank, file inputs.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub channel: Vec<f64>,
    pub bank: AnalysisBank,
    /// Number of samples actually simulated (a file input may be shorter).
    pub total_samples: usize,
    input_file: Option<Vec<f64>>,
    near_end_file: Option<Vec<f64>>,
}

impl Prepared {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let mut channel = match (&cfg.channel.builtin, &cfg.channel.path) {
            (Some(name), _) => builtin_channel(name)?,
            (None, Some(path)) => signals::read_float_text(path)?,
            (None, None) => return Err(Error::Config("no channel given".into())),
        };
        if let Some(g) = cfg.channel.gain {
            channel.iter_mut().for_each(|x| *x *= g);
        }
        // The adaptive filter has M taps; the unknown system is truncated or
        // zero-padded to the same length so the MSD is well defined.
        channel.resize(cfg.filter_len, 0.0);
        if channel.iter().all(|&x| x == 0.0) {
            return Err(Error::Config(format!(
                "channel has no energy within the first {} taps",
                cfg.filter_len
            )));
        }

        let input_file = match cfg.input.kind {
            InputKind::File => {
                let path = cfg.input.path.as_ref().expect("validated");
                Some(signals::load_pcm(path)?)
            }
            _ => None,
        };
        let mut total_samples = cfg.total_samples;
        if let Some(x) = &input_file {
            total_samples = total_samples.min(x.len());
            if total_samples < cfg.filter_len {
                return Err(Error::Config(format!(
                    "input file holds {} samples, fewer than filter_len {}",
                    x.len(),
                    cfg.filter_len
                )));
            }
        }
        let near_end_file = match &cfg.near_end {
            Some(ne) if ne.kind == NearEndKind::File => {
                let path = ne.path.as_ref().expect("validated");
                let mut z = signals::load_pcm(path)?;
                z.iter_mut().for_each(|x| *x *= ne.level);
                Some(z)
            }
            _ => None,
        };
        Ok(Self {
            channel,
            bank: cfg.build_bank()?,
            total_samples,
            input_file,
            near_end_file,
        })
    }
}

/// Per-sample traces of one run.
#[derive(Debug, Clone)]
pub struct RunTrace {
    /// Linear `‖w° - w(n)‖²`.
    pub sq_dev: Vec<f64>,
    pub erle_db: Option<Vec<f64>>,
    pub diagnostics: Option<Diagnostics>,
    pub final_weights: Vec<f64>,
    /// Ticks on which adaptation was suspended by the detector.
    pub frozen_ticks: usize,
    /// Weight vector after every tick, only when requested.
    pub weight_history: Option<Vec<Vec<f64>>>,
}

fn input_for_run(cfg: &ExperimentConfig, prep: &Prepared, seed: u64) -> Result<Vec<f64>> {
    let n = prep.total_samples;
    Ok(match cfg.input.kind {
        InputKind::Ar1 => signals::gen_ar1(cfg.input.pole, n, seed)?,
        InputKind::White => signals::gen_ar1(0.0, n, seed)?,
        InputKind::Speech => signals::gen_speech_like(n, seed),
        InputKind::File => prep.input_file.as_ref().expect("loaded")[..n].to_vec(),
    })
}

/// `σ_d̄²`, analytic for AR/white inputs and empirical otherwise.
fn system_output_power(cfg: &ExperimentConfig, channel: &[f64], u: &[f64]) -> f64 {
    match cfg.input.kind {
        InputKind::Ar1 => signals::ar1_output_power(channel, cfg.input.pole),
        InputKind::White => signals::ar1_output_power(channel, 0.0),
        InputKind::Speech | InputKind::File => signals::empirical_output_power(u, channel),
    }
}

/// Simulate run `run` (seed `cfg.seed + run`).
pub fn run_single(cfg: &ExperimentConfig, prep: &Prepared, run: usize) -> Result<RunTrace> {
    run_single_inner(cfg, prep, run, false)
}

/// As [`run_single`], also keeping the weight vector after every tick.
pub fn run_single_with_history(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    run: usize,
) -> Result<RunTrace> {
    run_single_inner(cfg, prep, run, true)
}

fn run_single_inner(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    run: usize,
    keep_history: bool,
) -> Result<RunTrace> {
    let seed = cfg.seed.wrapping_add(run as u64);
    let (n_sub, m) = (cfg.subbands, cfg.filter_len);
    let total = prep.total_samples;
    let w_true = &prep.channel;

    let u = input_for_run(cfg, prep, seed)?;
    let power = system_output_power(cfg, w_true, &u);
    let noise = if cfg.noise.kind == NoiseKind::None {
        vec![0.0; total]
    } else {
        signals::gen_noise(&cfg.noise, power, total, seed)?
    };
    let near_end = match (&cfg.near_end, &prep.near_end_file) {
        (Some(_), Some(z)) => {
            let mut z = z.clone();
            z.resize(total, 0.0);
            z
        }
        (Some(ne), None) => {
            let bursts: Vec<(usize, usize)> = ne.bursts.iter().map(|b| (b[0], b[1])).collect();
            signals::gen_bursts(total, &bursts, ne.level, seed)
        }
        (None, _) => vec![0.0; total],
    };

    let flipped = |n: usize| cfg.flip_at.is_some_and(|f| n >= f);
    let mut line = DelayLine::new(m);
    let d: Vec<f64> = (0..total)
        .map(|n| {
            line.push(u[n]);
            let echo = line.dot(w_true);
            let echo = if flipped(n) { -echo } else { echo };
            echo + near_end[n] + noise[n]
        })
        .collect();

    let engine = cfg.build_engine()?;
    let decomposer = SubbandDecomposer::new(prep.bank.clone(), m)?;
    let mut canceler = EchoCanceler::new(engine, decomposer)?;
    let mut dtd = match cfg.dtd {
        Some(spec) => Some(GeigelDtd::new(
            spec.threshold,
            spec.hold,
            spec.hold_unit,
            n_sub,
            m,
        )?),
        None => None,
    };

    let blocks = total / n_sub;
    let used = blocks * n_sub;
    let mut sq_dev = Vec::with_capacity(used);
    let mut erle = cfg.records_erle().then(|| Vec::with_capacity(used));
    let mut tracker = ErleTracker::new();
    let mut frozen_ticks = 0;
    let mut history = keep_history.then(|| Vec::with_capacity(blocks));

    let deviation = |w: &[f64], n: usize| -> f64 {
        let s = if flipped(n) { -1.0 } else { 1.0 };
        w.iter()
            .zip(w_true)
            .map(|(a, b)| {
                let diff = s * b - a;
                diff * diff
            })
            .sum()
    };

    for b in 0..blocks {
        let range = b * n_sub..(b + 1) * n_sub;
        // Samples before the tick are produced with the weights of the
        // previous copy; the tick sample sees the freshly adapted ones.
        for n in range.start..range.end - 1 {
            sq_dev.push(deviation(canceler.weights(), n));
        }
        let out = canceler.process_block(&u[range.clone()], &d[range.clone()], dtd.as_mut())?;
        sq_dev.push(deviation(canceler.weights(), range.end - 1));
        if out.double_talk {
            frozen_ticks += 1;
        }
        if let Some(erle) = erle.as_mut() {
            for (k, e) in out.errors.iter().enumerate() {
                // Undefined while both powers are zero; reported as 0 dB.
                erle.push(tracker.update(d[range.start + k], *e).unwrap_or(0.0));
            }
        }
        if let Some(h) = history.as_mut() {
            h.push(canceler.weights().to_vec());
        }
        for (k, v) in sq_dev[range.clone()].iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteMetric {
                    run,
                    sample: range.start + k,
                });
            }
        }
    }

    Ok(RunTrace {
        sq_dev,
        erle_db: erle,
        diagnostics: canceler.engine().diagnostics(),
        final_weights: canceler.weights().to_vec(),
        frozen_ticks,
        weight_history: history,
    })
}

/// Run-averaged metric traces.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries {
    /// Mean linear squared deviation per sample.
    pub msd_linear: Vec<f64>,
    pub msd_db: Vec<f64>,
    /// Mean of the per-run ERLE values (dB).
    pub erle_db: Option<Vec<f64>>,
    pub runs: usize,
    pub diagnostics: Option<Diagnostics>,
    /// Final weights of the first run.
    pub weights: Vec<f64>,
    pub frozen_ticks: usize,
}

impl MetricSeries {
    /// Average run traces in run-index order.
    pub fn from_runs(traces: &[RunTrace]) -> Result<Self> {
        let first = traces
            .first()
            .ok_or_else(|| Error::InvalidParameter("no runs to average".into()))?;
        let len = first.sq_dev.len();
        let runs = traces.len();
        let mut sum = vec![0.0; len];
        let mut erle_sum = first.erle_db.as_ref().map(|_| vec![0.0; len]);
        let mut diagnostics: Option<Diagnostics> = None;
        let mut frozen_ticks = 0;
        for t in traces {
            for (s, v) in sum.iter_mut().zip(&t.sq_dev) {
                *s += v;
            }
            if let (Some(acc), Some(e)) = (erle_sum.as_mut(), t.erle_db.as_ref()) {
                for (s, v) in acc.iter_mut().zip(e) {
                    *s += v;
                }
            }
            if let Some(d) = t.diagnostics {
                diagnostics = Some(diagnostics.map_or(d, |acc| acc.merge(&d)));
            }
            frozen_ticks += t.frozen_ticks;
        }
        let scale = runs as f64;
        let msd_linear: Vec<f64> = sum.into_iter().map(|s| s / scale).collect();
        let msd_db = msd_linear.iter().map(|&v| msd_db(v)).collect();
        let erle_db = erle_sum.map(|acc| acc.into_iter().map(|s| s / scale).collect());
        Ok(Self {
            msd_linear,
            msd_db,
            erle_db,
            runs,
            diagnostics,
            weights: first.final_weights.clone(),
            frozen_ticks,
        })
    }

    pub fn len(&self) -> usize {
        self.msd_db.len()
    }

    pub fn is_empty(&self) -> bool {
        self.msd_db.is_empty()
    }

    /// MSD in dB of the mean linear deviation over `range`.
    pub fn mean_msd_db(&self, range: std::ops::Range<usize>) -> f64 {
        let slice = &self.msd_linear[range];
        msd_db(slice.iter().sum::<f64>() / slice.len() as f64)
    }

    /// Mean ERLE (dB) over `range`.
    pub fn mean_erle_db(&self, range: std::ops::Range<usize>) -> Option<f64> {
        self.erle_db.as_ref().map(|e| {
            let slice = &e[range];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
    }

    /// First sample index at or after `from` whose MSD is at or below `db`.
    pub fn first_reach(&self, db: f64, from: usize) -> Option<usize> {
        self.msd_db
            .iter()
            .skip(from)
            .position(|&v| v <= db)
            .map(|p| p + from)
    }

    /// CSV text with header `sample,msd_db[,erle_db]`.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.len() * 32);
        match &self.erle_db {
            Some(erle) => {
                out.push_str("sample,msd_db,erle_db\n");
                for (n, (m, e)) in self.msd_db.iter().zip(erle).enumerate() {
                    out.push_str(&format!("{n},{m},{e}\n"));
                }
            }
            None => {
                out.push_str("sample,msd_db\n");
                for (n, m) in self.msd_db.iter().enumerate() {
                    out.push_str(&format!("{n},{m}\n"));
                }
            }
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv().as_bytes())
            .map_err(|e| Error::io(path, e))
    }
}

/// Run all Monte-Carlo runs (in parallel) and average them.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MetricSeries> {
    cfg.validate()?;
    let prep = Prepared::new(cfg)?;
    let traces: Vec<RunTrace> = (0..cfg.runs)
        .into_par_iter()
        .map(|r| run_single(cfg, &prep, r))
        .collect::<Result<_>>()?;
    MetricSeries::from_runs(&traces)
}
