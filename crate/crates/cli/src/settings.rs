//! Parameter resolution: built-in defaults, then a flat `key = value` file,
//! then command-line flags.

use std::f64::consts::FRAC_PI_3;
use std::path::Path;

use anyhow::Context;
use clap::Args;
use serde::{Deserialize, Serialize};

use qpq_core::bases::Theta;
use qpq_core::{AttackKind, ConfigError, DeviceModel, ProtocolConfig};

/// Raised for anything the user can fix by editing parameters.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct SettingsError(pub String);

/// Flags shared by every subcommand. All are optional so that a config file
/// can supply them.
#[derive(Debug, Default, Clone, Args)]
pub struct Overrides {
    /// Flat key = value parameter file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<std::path::PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Key-basis angle in radians, in (0, π/2].
    #[arg(long, global = true, value_name = "RAD")]
    pub theta: Option<f64>,
    /// Total EPR pairs. Derived from k, N and gamma when omitted.
    #[arg(long = "K", global = true, value_name = "N")]
    pub pairs: Option<usize>,
    #[arg(long, global = true, value_name = "F")]
    pub gamma: Option<f64>,
    /// Raw bits per final key bit.
    #[arg(long = "k", global = true, value_name = "N")]
    pub block_len: Option<usize>,
    /// Database size in bits.
    #[arg(long = "N", global = true, value_name = "N")]
    pub db_size: Option<usize>,
    #[arg(long, global = true, value_name = "F")]
    pub eta: Option<f64>,
    /// Monte-Carlo rounds (chsh, attack, sweep) or protocol runs (run).
    #[arg(long, global = true, value_name = "N")]
    pub trials: Option<usize>,
    /// Report destination; stdout when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<std::path::PathBuf>,
    /// alice-helstrom, alice-usd or bob-middle.
    #[arg(long, global = true, value_name = "TAG", value_parser = parse_attack)]
    pub attack: Option<AttackKind>,
    /// Number of queried indices for the user-privacy figure.
    #[arg(long, global = true, value_name = "N")]
    pub queries: Option<usize>,
    /// CHSH output flip probability (0.5 = random device).
    #[arg(long, global = true, value_name = "P")]
    pub chsh_flip: Option<f64>,
    #[arg(long, global = true, value_name = "P")]
    pub povm_conflict: Option<f64>,
    #[arg(long, global = true, value_name = "P")]
    pub povm_loss: Option<f64>,
    #[arg(long, global = true, value_name = "N")]
    pub max_retries: Option<u32>,
    #[arg(long, global = true, value_name = "F")]
    pub error_threshold: Option<f64>,
}

fn parse_attack(s: &str) -> Result<AttackKind, String> {
    s.parse::<AttackKind>().map_err(|e| e.to_string())
}

/// Contents of a `--config` file. Keys mirror the long flag names.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileSettings {
    seed: Option<u64>,
    theta: Option<f64>,
    #[serde(rename = "K")]
    pairs: Option<usize>,
    gamma: Option<f64>,
    #[serde(rename = "k")]
    block_len: Option<usize>,
    #[serde(rename = "N")]
    db_size: Option<usize>,
    eta: Option<f64>,
    trials: Option<usize>,
    attack: Option<String>,
    queries: Option<usize>,
    chsh_flip: Option<f64>,
    povm_conflict: Option<f64>,
    povm_loss: Option<f64>,
    max_retries: Option<u32>,
    error_threshold: Option<f64>,
    grid: Option<String>,
}

/// Fully resolved parameters, embedded in every report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Settings {
    pub seed: u64,
    pub theta: f64,
    #[serde(rename = "K")]
    pub pairs: Option<usize>,
    pub gamma: f64,
    #[serde(rename = "k")]
    pub block_len: usize,
    #[serde(rename = "N")]
    pub db_size: usize,
    pub eta: f64,
    pub trials: Option<usize>,
    pub attack: Option<AttackKind>,
    pub queries: usize,
    pub devices: DeviceModel,
    pub max_retries: u32,
    pub error_threshold: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<String>,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            seed: 0,
            theta: FRAC_PI_3,
            pairs: None,
            gamma: 0.25,
            block_len: 2,
            db_size: 100,
            eta: 0.1,
            trials: None,
            attack: None,
            queries: 1,
            devices: DeviceModel::honest(),
            max_retries: 16,
            error_threshold: 0.0,
            grid: None,
        }
    }
}

impl Settings {
    pub fn resolve(flags: &Overrides, grid_flag: Option<&str>) -> anyhow::Result<Self> {
        let mut s = Settings::default();
        if let Some(path) = &flags.config {
            s.apply_file(path)?;
        }
        macro_rules! take {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = flags.$field { $target = v; })*
            };
        }
        take!(
            seed => s.seed,
            theta => s.theta,
            gamma => s.gamma,
            block_len => s.block_len,
            db_size => s.db_size,
            eta => s.eta,
            queries => s.queries,
            max_retries => s.max_retries,
            error_threshold => s.error_threshold,
            chsh_flip => s.devices.chsh_flip,
            povm_conflict => s.devices.povm_conflict,
            povm_loss => s.devices.povm_loss,
        );
        if flags.pairs.is_some() {
            s.pairs = flags.pairs;
        }
        if flags.trials.is_some() {
            s.trials = flags.trials;
        }
        if flags.attack.is_some() {
            s.attack = flags.attack;
        }
        if let Some(g) = grid_flag {
            s.grid = Some(g.to_string());
        }
        if s.trials == Some(0) {
            return Err(SettingsError("trials must be >= 1".into()).into());
        }
        for (name, p) in [
            ("chsh_flip", s.devices.chsh_flip),
            ("povm_conflict", s.devices.povm_conflict),
            ("povm_loss", s.devices.povm_loss),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SettingsError(format!("{name} must lie in [0, 1], got {p}")).into());
            }
        }
        Ok(s)
    }

    fn apply_file(&mut self, path: &Path) -> anyhow::Result<()> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        let f: FileSettings = toml::from_str(&text)
            .map_err(|e| SettingsError(format!("{}: {}", path.display(), e.message())))?;
        macro_rules! take {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = f.$field { $target = v; })*
            };
        }
        take!(
            seed => self.seed,
            theta => self.theta,
            gamma => self.gamma,
            block_len => self.block_len,
            db_size => self.db_size,
            eta => self.eta,
            queries => self.queries,
            max_retries => self.max_retries,
            error_threshold => self.error_threshold,
            chsh_flip => self.devices.chsh_flip,
            povm_conflict => self.devices.povm_conflict,
            povm_loss => self.devices.povm_loss,
        );
        if f.pairs.is_some() {
            self.pairs = f.pairs;
        }
        if f.trials.is_some() {
            self.trials = f.trials;
        }
        if f.grid.is_some() {
            self.grid = f.grid;
        }
        if let Some(tag) = f.attack {
            self.attack = Some(parse_attack(&tag).map_err(SettingsError)?);
        }
        Ok(())
    }

    pub fn theta(&self) -> Result<Theta, ConfigError> {
        Theta::new(self.theta)
    }

    pub fn trials_or(&self, default: usize) -> usize {
        self.trials.unwrap_or(default)
    }

    /// Builds and validates the protocol config. Without an explicit `K`
    /// the pair count is derived as `kN/(1 − 2γ)`.
    pub fn protocol_config(&self) -> Result<ProtocolConfig, ConfigError> {
        let theta = self.theta()?;
        let mut cfg = match self.pairs {
            Some(pairs) => ProtocolConfig {
                theta,
                pairs,
                gamma: self.gamma,
                block_len: self.block_len,
                db_size: self.db_size,
                eta: self.eta,
                seed: self.seed,
                max_retries: self.max_retries,
                error_threshold: self.error_threshold,
            },
            None => {
                if !(self.gamma > 0.0 && self.gamma < 0.5) {
                    return Err(ConfigError::Gamma(self.gamma));
                }
                ProtocolConfig::for_database(theta, self.block_len, self.db_size, self.gamma, self.eta, self.seed)?
            }
        };
        cfg.max_retries = self.max_retries;
        cfg.error_threshold = self.error_threshold;
        cfg.layout()?;
        Ok(cfg)
    }
}
