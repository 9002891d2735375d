//! Experiment configuration (TOML).
//!
//! ```toml
//! scenario = "sysid"          # sysid | nec | aec
//! algorithm = "grsaf_mh"      # nsaf | mnsaf | grsaf_mh | grsaf_mcc
//! subbands = 4
//! filter_len = 128
//! total_samples = 50000
//! runs = 20
//! seed = 1
//! flip_at = 25000             # optional: w° → -w° from this sample on
//!
//! [channel]
//! builtin = "sparse128"       # or: path = "echo_path.txt"
//!
//! [input]
//! kind = "ar1"                # ar1 | white | speech | file
//! pole = 0.95
//!
//! [noise]
//! kind = "contaminated_gaussian"
//! snr_db = 30.0
//! p_r = 0.001
//! impulse_gain = 1000.0
//!
//! [params]
//! kappa = 2.576
//! tau = 2.0
//! N_w = 20
//! ```
//!
//! Relative file paths are resolved against the directory of the config file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adaptive::{
    CovarianceForm, GrSafParams, GrSafState, MnsafParams, MnsafState, SubbandFilter,
};
use crate::echo::HoldUnit;
use crate::error::{Error, Result};
use crate::filterbank::{self, AnalysisBank, PrototypeFilter};
use crate::robustness::{ScalingRule, ThresholdParams, ThresholdState, DEFAULT_KAPPA};
use crate::signals::NoiseSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// System identification.
    Sysid,
    /// Network echo cancellation.
    Nec,
    /// Acoustic echo cancellation.
    Aec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Nsaf,
    Mnsaf,
    GrsafMh,
    GrsafMcc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleName {
    Mh,
    Mcc,
    None,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSpec {
    pub builtin: Option<String>,
    pub path: Option<PathBuf>,
    /// Scale applied to the impulse response (1 keeps unit energy).
    pub gain: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    Ar1,
    White,
    Speech,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputSpec {
    pub kind: InputKind,
    pub pole: f64,
    pub path: Option<PathBuf>,
}

impl Default for InputSpec {
    fn default() -> Self {
        Self {
            kind: InputKind::Ar1,
            pole: 0.95,
            path: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NearEndKind {
    Bursts,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NearEndSpec {
    pub kind: NearEndKind,
    /// `[start, length]` sample ranges of near-end talk.
    pub bursts: Vec<[usize; 2]>,
    /// Peak amplitude of the near-end talker.
    pub level: f64,
    pub path: Option<PathBuf>,
}

impl Default for NearEndSpec {
    fn default() -> Self {
        Self {
            kind: NearEndKind::Bursts,
            bursts: Vec::new(),
            level: 0.5,
            path: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DtdSpec {
    pub threshold: f64,
    pub hold: usize,
    pub hold_unit: HoldUnit,
}

impl Default for DtdSpec {
    fn default() -> Self {
        Self {
            threshold: 0.45,
            hold: 256,
            hold_unit: HoldUnit::Samples,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BankSpec {
    /// Prototype length; `8N + 1` when absent.
    pub length: Option<usize>,
    pub atten_db: f64,
    /// Float-per-line prototype coefficients overriding the design.
    pub prototype: Option<PathBuf>,
}

impl Default for BankSpec {
    fn default() -> Self {
        Self {
            length: None,
            atten_db: 60.0,
            prototype: None,
        }
    }
}

/// Algorithm parameters. Scenario-dependent defaults apply to the optional
/// fields (`gamma`, `rho`, `silence_guard`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgorithmParams {
    pub rule: Option<RuleName>,
    pub mu: f64,
    pub reg: f64,
    pub silence_guard: Option<bool>,
    pub kappa: f64,
    pub kernel_width: f64,
    pub tau: f64,
    #[serde(rename = "N_w", alias = "window")]
    pub window: usize,
    pub theta: Option<f64>,
    pub eps1: f64,
    pub eps2: f64,
    pub gamma: Option<f64>,
    /// `ϱ` of the statistics smoothing weight `1/(ϱM)`.
    pub rho: Option<f64>,
    pub covariance: CovarianceForm,
    pub track_uncertainty: bool,
    pub uncertainty_floor: bool,
}

impl Default for AlgorithmParams {
    fn default() -> Self {
        Self {
            rule: None,
            mu: 1.0,
            reg: 0.0,
            silence_guard: None,
            kappa: DEFAULT_KAPPA,
            kernel_width: 1.0,
            tau: 2.0,
            window: 20,
            theta: None,
            eps1: 1.0,
            eps2: 1e-5,
            gamma: None,
            rho: None,
            covariance: CovarianceForm::Diagonal,
            track_uncertainty: true,
            uncertainty_floor: true,
        }
    }
}

fn default_subbands() -> usize {
    4
}
fn default_filter_len() -> usize {
    128
}
fn default_total() -> usize {
    50_000
}
fn default_runs() -> usize {
    1
}
fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub algorithm: Algorithm,
    #[serde(default = "default_subbands")]
    pub subbands: usize,
    #[serde(default = "default_filter_len")]
    pub filter_len: usize,
    #[serde(default = "default_total")]
    pub total_samples: usize,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub flip_at: Option<usize>,
    /// Record ERLE (defaults to on for the echo scenarios).
    #[serde(default)]
    pub erle: Option<bool>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub channel: ChannelSpec,
    #[serde(default)]
    pub input: InputSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub near_end: Option<NearEndSpec>,
    #[serde(default)]
    pub dtd: Option<DtdSpec>,
    #[serde(default)]
    pub bank: BankSpec,
    #[serde(default)]
    pub params: AlgorithmParams,
}

impl ExperimentConfig {
    /// A system-identification config with every default in place.
    pub fn sysid(algorithm: Algorithm) -> Self {
        Self {
            scenario: Scenario::Sysid,
            algorithm,
            subbands: default_subbands(),
            filter_len: default_filter_len(),
            total_samples: default_total(),
            runs: default_runs(),
            seed: default_seed(),
            flip_at: None,
            erle: None,
            output: None,
            channel: ChannelSpec {
                builtin: Some("sparse128".into()),
                ..ChannelSpec::default()
            },
            input: InputSpec::default(),
            noise: NoiseSpec::default(),
            near_end: None,
            dtd: None,
            bank: BankSpec::default(),
            params: AlgorithmParams::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Read, resolve relative paths and validate.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        fix(&mut self.channel.path);
        fix(&mut self.input.path);
        fix(&mut self.bank.prototype);
        if let Some(ne) = &mut self.near_end {
            fix(&mut ne.path);
        }
        // `output` stays relative to the working directory.
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.runs == 0 {
            return fail("runs must be >= 1".into());
        }
        if self.subbands == 0 {
            return fail("subbands must be >= 1".into());
        }
        if self.filter_len == 0 {
            return fail("filter_len must be >= 1".into());
        }
        if self.total_samples < self.filter_len {
            return fail(format!(
                "total_samples {} must be at least filter_len {}",
                self.total_samples, self.filter_len
            ));
        }
        if self.total_samples < self.subbands {
            return fail("total_samples shorter than one block".into());
        }
        match (&self.channel.builtin, &self.channel.path) {
            (Some(_), Some(_)) => {
                return fail("channel: give either builtin or path, not both".into())
            }
            (None, None) => return fail("channel: builtin or path required".into()),
            (None, Some(p)) => require_file(p)?,
            (Some(_), None) => {}
        }
        if self.input.kind == InputKind::File {
            match &self.input.path {
                Some(p) => require_file(p)?,
                None => return fail("input kind 'file' needs a path".into()),
            }
        }
        if self.input.kind == InputKind::Ar1 && !(self.input.pole.abs() < 1.0) {
            return fail(format!(
                "AR(1) pole {} must satisfy |pole| < 1",
                self.input.pole
            ));
        }
        if let Some(p) = &self.bank.prototype {
            require_file(p)?;
        }
        if let Some(ne) = &self.near_end {
            if ne.kind == NearEndKind::File {
                match &ne.path {
                    Some(p) => require_file(p)?,
                    None => return fail("near_end kind 'file' needs a path".into()),
                }
            }
            if !(ne.level >= 0.0) {
                return fail("near_end level must be >= 0".into());
            }
        }
        if let Some(gain) = self.channel.gain {
            if !(gain.is_finite() && gain != 0.0) {
                return fail("channel gain must be finite and nonzero".into());
            }
        }
        self.noise
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        // Surface algorithm parameter errors at load time.
        ThresholdState::new(&self.threshold_params(), self.subbands, self.filter_len)
            .map_err(|e| Error::Config(e.to_string()))?;
        self.scaling_rule()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.grsaf_params()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn echo_scenario(&self) -> bool {
        matches!(self.scenario, Scenario::Nec | Scenario::Aec)
    }

    pub fn records_erle(&self) -> bool {
        self.erle.unwrap_or(self.echo_scenario())
    }

    pub fn scaling_rule(&self) -> ScalingRule {
        let default = match self.algorithm {
            Algorithm::Nsaf => RuleName::None,
            Algorithm::Mnsaf | Algorithm::GrsafMh => RuleName::Mh,
            Algorithm::GrsafMcc => RuleName::Mcc,
        };
        match self.params.rule.unwrap_or(default) {
            RuleName::Mh => ScalingRule::ModifiedHuber {
                kappa: self.params.kappa,
            },
            RuleName::Mcc => ScalingRule::Correntropy {
                kernel_width: self.params.kernel_width,
            },
            RuleName::None => ScalingRule::Unity,
        }
    }

    pub fn threshold_params(&self) -> ThresholdParams {
        ThresholdParams {
            kappa: self.params.kappa,
            window: self.params.window,
            tau: self.params.tau,
            theta: self.params.theta,
        }
    }

    pub fn grsaf_params(&self) -> GrSafParams {
        let base = if self.echo_scenario() {
            GrSafParams::echo()
        } else {
            GrSafParams::default()
        };
        GrSafParams {
            eps1: self.params.eps1,
            eps2: self.params.eps2,
            gamma: self.params.gamma.unwrap_or(base.gamma),
            stat_memory: self.params.rho.unwrap_or(base.stat_memory),
            covariance: self.params.covariance,
            track_uncertainty: self.params.track_uncertainty,
            uncertainty_floor: self.params.uncertainty_floor,
            ..base
        }
    }

    pub fn mnsaf_params(&self) -> MnsafParams {
        let speech = matches!(self.input.kind, InputKind::Speech | InputKind::File);
        MnsafParams {
            mu: self.params.mu,
            reg: self.params.reg,
            silence_guard: self.params.silence_guard.unwrap_or(speech),
            stat_memory: self.params.rho.unwrap_or(self.grsaf_params().stat_memory),
        }
    }

    pub fn build_engine(&self) -> Result<Box<dyn SubbandFilter>> {
        let (n, m) = (self.subbands, self.filter_len);
        let rule = self.scaling_rule();
        let thresholds = self.threshold_params();
        Ok(match self.algorithm {
            Algorithm::Nsaf | Algorithm::Mnsaf => Box::new(MnsafState::new(
                n,
                m,
                self.mnsaf_params(),
                rule,
                &thresholds,
            )?),
            Algorithm::GrsafMh | Algorithm::GrsafMcc => Box::new(GrSafState::new(
                n,
                m,
                self.grsaf_params(),
                rule,
                &thresholds,
            )?),
        })
    }

    pub fn build_bank(&self) -> Result<AnalysisBank> {
        let proto = match &self.bank.prototype {
            Some(path) => PrototypeFilter::from_file(path, self.subbands)?,
            None => {
                let len = self
                    .bank
                    .length
                    .unwrap_or_else(|| filterbank::default_length(self.subbands));
                filterbank::design_prototype(self.subbands, len, self.bank.atten_db)?
            }
        };
        Ok(AnalysisBank::modulate(proto))
    }
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!("file not found: {}", path.display())))
    }
}
