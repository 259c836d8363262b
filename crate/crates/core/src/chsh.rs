//! CHSH self-test on shared EPR pairs.
//!
//! Bob measures `Z` (v = 0) or `X` (v = 1); Alice measures in the basis
//! rotated by `+π/8` (u = 0) or `−π/8` (u = 1). A round is won when
//! `b ⊕ c = u ∧ v`, which ideal devices achieve with probability
//! `cos²(π/8)` for every input pair.

use std::f64::consts::FRAC_PI_8;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bases::{sample_epr, AliceAction, MeasBasis};
use crate::error::{QpqError, Result};
use crate::qmath::PureState;

/// `cos²(π/8) ≈ 0.853553`, the optimal quantum CHSH win probability.
pub fn chsh_optimum() -> f64 {
    FRAC_PI_8.cos().powi(2)
}

/// Which party generates the inputs (and therefore announces last).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Referee {
    Alice,
    Bob,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Party {
    Alice,
    Bob,
}

impl Referee {
    /// The referee's counterpart declares its input/output pairs first.
    pub fn first_announcer(self) -> Party {
        match self {
            Referee::Alice => Party::Bob,
            Referee::Bob => Party::Alice,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ChshRound {
    /// Alice's input.
    pub u: u8,
    /// Bob's input.
    pub v: u8,
    /// Bob's output.
    pub b: u8,
    /// Alice's output.
    pub c: u8,
    pub win: u8,
}

impl ChshRound {
    pub fn new(u: u8, v: u8, b: u8, c: u8) -> Self {
        Self { u, v, b, c, win: chsh_win(u, v, b, c) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChshReport {
    pub n: usize,
    pub wins: usize,
    pub z_statistic: f64,
    pub threshold: f64,
    pub aborted: bool,
    pub referee: Referee,
    pub first_announcer: Party,
}

impl ChshReport {
    pub fn from_rounds(rounds: &[ChshRound], eta: f64, referee: Referee) -> Result<Self> {
        Self::from_counts(rounds.len(), rounds.iter().map(|r| r.win as usize).sum(), eta, referee)
    }

    pub fn from_counts(n: usize, wins: usize, eta: f64, referee: Referee) -> Result<Self> {
        check_eta(eta)?;
        if n == 0 {
            return Err(QpqError::ContractViolation("CHSH test needs n >= 1 rounds".into()));
        }
        let z_statistic = wins as f64 / n as f64;
        let threshold = chsh_optimum() - eta;
        Ok(Self {
            n,
            wins,
            z_statistic,
            threshold,
            aborted: should_abort(z_statistic, eta),
            referee,
            first_announcer: referee.first_announcer(),
        })
    }

    /// Count-weighted merge of two reports for the same referee and η.
    pub fn merge(&self, other: &ChshReport) -> Result<Self> {
        if self.referee != other.referee || self.threshold != other.threshold {
            return Err(QpqError::ContractViolation(
                "can only merge CHSH reports with the same referee and threshold".into(),
            ));
        }
        Self::from_counts(
            self.n + other.n,
            self.wins + other.wins,
            chsh_optimum() - self.threshold,
            self.referee,
        )
    }
}

/// Abort rule: `Z < cos²(π/8) − η`.
pub fn should_abort(z: f64, eta: f64) -> bool {
    z < chsh_optimum() - eta
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta.is_finite() && eta >= 0.0 && eta < chsh_optimum()) {
        return Err(QpqError::Domain(format!(
            "eta must lie in [0, cos^2(pi/8)), got {eta}"
        )));
    }
    Ok(())
}

/// Bob's CHSH basis: computational for `v = 0`, `{|+⟩, |−⟩}` for `v = 1`.
pub fn chsh_bob_basis(v: u8) -> MeasBasis {
    if v == 0 {
        MeasBasis::computational()
    } else {
        MeasBasis::hadamard()
    }
}

/// Alice's CHSH basis. `u = 0`: `{cos(π/8)|0⟩ + sin(π/8)|1⟩, −sin(π/8)|0⟩ + cos(π/8)|1⟩}`;
/// `u = 1`: `{cos(π/8)|0⟩ − sin(π/8)|1⟩, sin(π/8)|0⟩ + cos(π/8)|1⟩}`.
pub fn chsh_alice_basis(u: u8) -> MeasBasis {
    let (s, c) = FRAC_PI_8.sin_cos();
    let (v0, v1) = if u == 0 {
        (PureState::real(c, s), PureState::real(-s, c))
    } else {
        (PureState::real(c, -s), PureState::real(s, c))
    };
    MeasBasis::new(v0.expect("unit"), v1.expect("unit")).expect("orthonormal")
}

/// `1` iff `b ⊕ c = u ∧ v`.
pub fn chsh_win(u: u8, v: u8, b: u8, c: u8) -> u8 {
    u8::from((b ^ c) & 1 == (u & v) & 1)
}

/// Exact win probability for inputs `(u, v)` on ideal devices, summing the
/// four Born-rule terms `Pr(b, c | u, v) = ½ |⟨β_b|α_c⟩|²`.
pub fn exact_win_probability(u: u8, v: u8) -> f64 {
    let bob = chsh_bob_basis(v);
    let alice = chsh_alice_basis(u);
    let mut p = 0.0;
    for b in 0..2u8 {
        for c in 0..2u8 {
            if chsh_win(u, v, b, c) == 1 {
                p += 0.5 * bob.vector(b).inner(&alice.vector(c)).norm_sqr();
            }
        }
    }
    p
}

/// Plays one round on a fresh pair. Each output is independently flipped
/// with probability `flip` to model a noisy (or, at ½, random) device.
pub fn play_round<R: Rng + ?Sized>(u: u8, v: u8, flip: f64, rng: &mut R) -> Result<ChshRound> {
    let out = sample_epr(
        &chsh_bob_basis(v),
        AliceAction::Basis(&chsh_alice_basis(u)),
        rng,
    )?;
    let (mut b, mut c) = (out.bob, out.alice);
    if flip > 0.0 {
        b ^= u8::from(rng.random_bool(flip));
        c ^= u8::from(rng.random_bool(flip));
    }
    Ok(ChshRound::new(u, v, b, c))
}

/// Plays `n` rounds with uniform independent inputs drawn by the referee.
pub fn play_rounds<R: Rng + ?Sized>(n: usize, flip: f64, rng: &mut R) -> Result<Vec<ChshRound>> {
    if !(0.0..=1.0).contains(&flip) {
        return Err(QpqError::Domain(format!("flip probability must lie in [0, 1], got {flip}")));
    }
    (0..n)
        .map(|_| {
            let u = u8::from(rng.random_bool(0.5));
            let v = u8::from(rng.random_bool(0.5));
            play_round(u, v, flip, rng)
        })
        .collect()
}

/// Runs a full CHSH test and applies the abort rule.
pub fn run_chsh_test<R: Rng + ?Sized>(
    n: usize,
    eta: f64,
    referee: Referee,
    flip: f64,
    rng: &mut R,
) -> Result<ChshReport> {
    if n == 0 {
        return Err(QpqError::ContractViolation("CHSH test needs n >= 1 rounds".into()));
    }
    check_eta(eta)?;
    let rounds = play_rounds(n, flip, rng)?;
    ChshReport::from_rounds(&rounds, eta, referee)
}
