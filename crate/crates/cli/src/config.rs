//! Versioned TOML pipeline configuration.
//!
//! ```toml
//! version = 1
//! output_dir = "steer-out"
//!
//! [experiment]
//! visibility = 0.99
//! eta_alice = 0.543
//! eta_bob = 1.0
//! pair_rate = 100000.0
//! trials_certification = 1000000
//! duration_rng = 1.0
//! coincidence_window = 3e-9
//! rng_seed = 1
//! rng_setting = "X"
//! dark_rate = 0.0
//!
//! [measurement]
//! settings = ["X", "Z"]
//!
//! [certification]
//! x_star = "rng_setting"      # or "auto", or a setting label
//! bootstrap_resamples = 100   # 0 disables the bootstrap
//! bootstrap_seed = 2
//! p_guess_tolerance = 1e-6
//!
//! [extraction]
//! epsilon = 1e-6
//! block_bits = 20000
//! seed = 3                    # used when no seed_file is given
//! # seed_file = "seed.bin"    # relative to this file
//! ```
//!
//! Every table and field except `version` and `[experiment]` may be omitted.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use steer_core::assemblage::Basis;
use steer_core::extractor::DEFAULT_BLOCK_BITS;
use steer_core::simulator::ExperimentConfig;
use steer_core::MeasurementSet;

use crate::{Failure, FailureKind};

pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub version: u32,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub experiment: Experiment,
    #[serde(default)]
    pub measurement: Measurement,
    #[serde(default)]
    pub certification: Certification,
    #[serde(default)]
    pub extraction: Extraction,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("steer-out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Experiment {
    pub visibility: f64,
    pub eta_alice: f64,
    pub eta_bob: f64,
    pub pair_rate: f64,
    pub trials_certification: u64,
    pub duration_rng: f64,
    pub coincidence_window: f64,
    pub rng_seed: u64,
    pub rng_setting: String,
    pub dark_rate: f64,
}

impl Default for Experiment {
    fn default() -> Self {
        let d = ExperimentConfig::default();
        Experiment {
            visibility: d.visibility,
            eta_alice: d.eta_alice,
            eta_bob: d.eta_bob,
            pair_rate: d.pair_rate,
            trials_certification: d.trials_certification,
            duration_rng: d.duration_rng,
            coincidence_window: d.coincidence_window,
            rng_seed: d.rng_seed,
            rng_setting: d.rng_setting,
            dark_rate: d.dark_rate,
        }
    }
}

impl Experiment {
    pub fn to_core(&self) -> ExperimentConfig {
        ExperimentConfig {
            visibility: self.visibility,
            eta_alice: self.eta_alice,
            eta_bob: self.eta_bob,
            pair_rate: self.pair_rate,
            trials_certification: self.trials_certification,
            duration_rng: self.duration_rng,
            coincidence_window: self.coincidence_window,
            rng_seed: self.rng_seed,
            rng_setting: self.rng_setting.clone(),
            dark_rate: self.dark_rate,
        }
    }
}

/// Alice's settings, each a Pauli basis with outcome 0 on the `+1` eigenvector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Measurement {
    pub settings: Vec<String>,
}

impl Default for Measurement {
    fn default() -> Self {
        Measurement { settings: vec!["X".into(), "Z".into()] }
    }
}

impl Measurement {
    /// The measurement set at unit efficiency; stages apply `eta_alice`.
    pub fn to_core(&self) -> Result<MeasurementSet, String> {
        let effects = self
            .settings
            .iter()
            .map(|s| Basis::parse(s).map(|b| b.projector(0)).ok_or_else(|| format!("unknown setting {s:?}, expected X, Y or Z")))
            .collect::<Result<Vec<_>, _>>()?;
        MeasurementSet::new(self.settings.clone(), effects, 1.0).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Certification {
    pub x_star: String,
    pub bootstrap_resamples: usize,
    pub bootstrap_seed: u64,
    /// Certification passes only when `p_guess < 1 − p_guess_tolerance`.
    pub p_guess_tolerance: f64,
}

impl Default for Certification {
    fn default() -> Self {
        Certification { x_star: "rng_setting".into(), bootstrap_resamples: 100, bootstrap_seed: 2, p_guess_tolerance: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Extraction {
    pub epsilon: f64,
    pub block_bits: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed_file: Option<PathBuf>,
}

impl Default for Extraction {
    fn default() -> Self {
        Extraction { epsilon: 1e-6, block_bits: DEFAULT_BLOCK_BITS, seed: 3, seed_file: None }
    }
}

/// How the certified setting is chosen.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum XStar {
    RngSetting,
    Auto,
    Label(String),
}

impl PipelineConfig {
    /// Reads and validates a config; a relative `seed_file` is resolved
    /// against the config's directory.
    pub fn load(path: &Path) -> Result<PipelineConfig, Failure> {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::new(FailureKind::Usage, "config", format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = PipelineConfig::parse(&text)?;
        if let Some(f) = &cfg.extraction.seed_file {
            if f.is_relative() {
                let base = path.parent().unwrap_or(Path::new(""));
                cfg.extraction.seed_file = Some(base.join(f));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses without validating.
    pub fn parse(text: &str) -> Result<PipelineConfig, Failure> {
        toml::from_str(text).map_err(|e| Failure::new(FailureKind::Usage, "config", e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn x_star(&self) -> XStar {
        match self.certification.x_star.as_str() {
            "rng_setting" => XStar::RngSetting,
            "auto" => XStar::Auto,
            l => XStar::Label(l.to_string()),
        }
    }

    pub fn validate(&self) -> Result<(), Failure> {
        let bad = |m: String| Err(Failure::new(FailureKind::Usage, "config", m));
        if self.version != VERSION {
            return bad(format!("unsupported config version {}, expected {VERSION}", self.version));
        }
        if let Err(e) = self.experiment.to_core().validate() {
            return bad(e.to_string());
        }
        if let Err(e) = self.measurement.to_core() {
            return bad(e);
        }
        let settings = &self.measurement.settings;
        if !settings.contains(&self.experiment.rng_setting) {
            return bad(format!("rng_setting {:?} is not among the settings {settings:?}", self.experiment.rng_setting));
        }
        if let XStar::Label(l) = self.x_star() {
            if !settings.contains(&l) {
                return bad(format!("x_star {l:?} is neither a setting nor 'auto' or 'rng_setting'"));
            }
        }
        let c = &self.certification;
        if c.bootstrap_resamples != 0 && c.bootstrap_resamples < 100 {
            return bad(format!("bootstrap_resamples = {} must be 0 or at least 100", c.bootstrap_resamples));
        }
        if !(c.p_guess_tolerance > 0.0 && c.p_guess_tolerance < 1.0) {
            return bad(format!("p_guess_tolerance = {} outside (0, 1)", c.p_guess_tolerance));
        }
        let x = &self.extraction;
        if !(x.epsilon > 0.0 && x.epsilon < 1.0) {
            return bad(format!("epsilon = {} outside (0, 1)", x.epsilon));
        }
        if x.block_bits == 0 {
            return bad("block_bits must be positive".into());
        }
        if let Some(f) = &x.seed_file {
            if !f.is_file() {
                return bad(format!("seed_file {} does not exist", f.display()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = PipelineConfig::parse("version = 1\n[experiment]\neta_alice = 0.6\n").unwrap();
        c.validate().unwrap();
        assert_eq!(c.experiment.eta_alice, 0.6);
        assert_eq!(c.experiment.visibility, 0.99);
        assert_eq!(c.extraction.block_bits, 20_000);
        assert_eq!(c.x_star(), XStar::RngSetting);
    }

    #[test]
    fn echo_round_trips() {
        let c = PipelineConfig::parse("version = 1\n[experiment]\n[extraction]\nseed_file = \"/tmp/s.bin\"\n").unwrap();
        assert_eq!(PipelineConfig::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_configs() {
        let check = |t: &str| PipelineConfig::parse(t).and_then(|c| c.validate()).unwrap_err().kind;
        assert_eq!(check("version = 2\n[experiment]\n"), FailureKind::Usage);
        assert_eq!(check("version = 1\n[experiment]\nvisibility = 1.5\n"), FailureKind::Usage);
        assert_eq!(check("version = 1\n[experiment]\nrng_setting = \"Y\"\n"), FailureKind::Usage);
        assert_eq!(check("version = 1\n[experiment]\ncolour = 1\n"), FailureKind::Usage);
        assert_eq!(check("version = 1\n[experiment]\n[measurement]\nsettings = [\"X\", \"W\"]\n"), FailureKind::Usage);
        assert_eq!(check("version = 1\n[experiment]\n[certification]\nbootstrap_resamples = 10\n"), FailureKind::Usage);
        assert_eq!(check("version = 1\n[experiment]\n[certification]\nx_star = \"Y\"\n"), FailureKind::Usage);
        assert_eq!(check("version = 1\n[experiment]\n[extraction]\nepsilon = 0.0\n"), FailureKind::Usage);
        assert_eq!(check("version = 1\n[experiment]\n[extraction]\nseed_file = \"/nonexistent/seed\"\n"), FailureKind::Usage);
    }
}
