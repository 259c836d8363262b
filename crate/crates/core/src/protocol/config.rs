use serde::Serialize;

use crate::bases::Theta;
use crate::chsh::chsh_optimum;
use crate::error::ConfigError;

/// Public protocol parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProtocolConfig {
    pub theta: Theta,
    /// `K`, the number of distributed EPR pairs.
    pub pairs: usize,
    /// `γ`: each CHSH sub-test and each POVM sub-test uses `γK/2` pairs.
    pub gamma: f64,
    /// `k`, raw bits XOR-ed into one final key bit.
    pub block_len: usize,
    /// `N`, database size in bits.
    pub db_size: usize,
    /// `η`, noise tolerance for both CHSH and POVM-rate thresholds.
    pub eta: f64,
    pub seed: u64,
    /// Maximum full protocol attempts before giving up on a key with no known bit.
    pub max_retries: u32,
    /// `ε`, abort threshold on the estimated final-key error rate.
    pub error_threshold: f64,
}

/// Pair counts per phase, derived from a valid config.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Layout {
    /// `γK/2`: rounds in each CHSH sub-test and each POVM sub-test.
    pub test_half: usize,
    /// `(1 − γ)K`: pairs entering key establishment.
    pub key_establishment: usize,
    /// `kN`: raw key length.
    pub raw_key: usize,
}

impl ProtocolConfig {
    /// Config for a given `(θ, k, N, γ)` with `K = kN/(1 − 2γ)`; fails if that
    /// `K` does not satisfy the pair-count constraints.
    pub fn for_database(
        theta: Theta,
        block_len: usize,
        db_size: usize,
        gamma: f64,
        eta: f64,
        seed: u64,
    ) -> Result<Self, ConfigError> {
        let key_len = block_len * db_size;
        let pairs_f = key_len as f64 / (1.0 - 2.0 * gamma);
        let pairs = pairs_f.round() as usize;
        let cfg = Self {
            theta,
            pairs,
            gamma,
            block_len,
            db_size,
            eta,
            seed,
            max_retries: 16,
            error_threshold: 0.0,
        };
        cfg.layout()?;
        Ok(cfg)
    }

    pub fn layout(&self) -> Result<Layout, ConfigError> {
        if self.pairs == 0 {
            return Err(ConfigError::NonPositive("K"));
        }
        if self.block_len == 0 {
            return Err(ConfigError::NonPositive("k"));
        }
        if self.db_size == 0 {
            return Err(ConfigError::NonPositive("N"));
        }
        if self.max_retries == 0 {
            return Err(ConfigError::NonPositive("max_retries"));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0 && self.gamma < 0.5) {
            return Err(ConfigError::Gamma(self.gamma));
        }
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return Err(ConfigError::Eta(self.eta));
        }
        if self.eta >= chsh_optimum() {
            return Err(ConfigError::Invalid(format!(
                "eta must be below cos^2(pi/8), got {}",
                self.eta
            )));
        }
        if !(self.error_threshold.is_finite() && self.error_threshold >= 0.0) {
            return Err(ConfigError::Invalid(format!(
                "error threshold must be finite and >= 0, got {}",
                self.error_threshold
            )));
        }
        let gk = self.gamma * self.pairs as f64;
        let gk_int = gk.round();
        if (gk - gk_int).abs() > 1e-9 || gk_int < 2.0 || !(gk_int as usize).is_multiple_of(2) {
            return Err(ConfigError::VerificationSplit(gk));
        }
        let test_half = gk_int as usize / 2;
        let raw_key = self.block_len * self.db_size;
        let remaining = self.pairs as i64 - 4 * test_half as i64;
        if remaining != raw_key as i64 {
            return Err(ConfigError::KeyLength { remaining, key_len: raw_key });
        }
        Ok(Layout {
            test_half,
            key_establishment: self.pairs - 2 * test_half,
            raw_key,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_3;

    fn base() -> ProtocolConfig {
        ProtocolConfig {
            theta: Theta::new(FRAC_PI_3).unwrap(),
            pairs: 400,
            gamma: 0.25,
            block_len: 2,
            db_size: 100,
            eta: 0.05,
            seed: 1,
            max_retries: 4,
            error_threshold: 0.0,
        }
    }

    #[test]
    fn layout_conserves_pairs() {
        let l = base().layout().unwrap();
        assert_eq!(l.test_half, 50);
        assert_eq!(l.key_establishment, 300);
        assert_eq!(l.raw_key, 200);
        assert_eq!(4 * l.test_half + l.raw_key, 400);
    }

    #[test]
    fn violations_name_the_constraint() {
        let mut c = base();
        c.gamma = 0.6;
        assert_eq!(c.layout(), Err(ConfigError::Gamma(0.6)));

        let mut c = base();
        c.pairs = 402; // γK = 100.5
        assert!(matches!(c.layout(), Err(ConfigError::VerificationSplit(_))));

        let mut c = base();
        c.pairs = 404; // γK = 101, odd
        assert!(matches!(c.layout(), Err(ConfigError::VerificationSplit(_))));

        let mut c = base();
        c.db_size = 99;
        let err = c.layout().unwrap_err();
        assert!(err.to_string().contains("(1-2*gamma)*K != k*N"), "{err}");

        let mut c = base();
        c.block_len = 0;
        assert_eq!(c.layout(), Err(ConfigError::NonPositive("k")));

        let mut c = base();
        c.eta = -0.1;
        assert!(c.layout().is_err());
    }

    #[test]
    fn for_database_finds_consistent_k() {
        let c = ProtocolConfig::for_database(Theta::new(FRAC_PI_3).unwrap(), 2, 100, 0.45, 0.1, 0)
            .unwrap();
        assert_eq!(c.pairs, 2000);
        assert_eq!(c.layout().unwrap().test_half, 450);
    }
}
