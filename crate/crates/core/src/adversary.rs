//! Dishonest-party strategies and their measured success against the
//! analytic bounds.
//!
//! Every attack runs i.i.d. rounds on fresh EPR pairs. Final-key figures are
//! obtained by grouping consecutive rounds into blocks of `k`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bases::{build_povm, key_basis, measure_bob_half, middle_basis, MeasBasis, Theta};
use crate::error::{QpqError, Result};
use crate::qmath::helstrom_measurement;

/// Statistical slack used for `respects_bound`, in standard errors.
pub const BOUND_SLACK_SIGMAS: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    /// Alice always guesses each raw bit with the minimum-error measurement.
    AliceHelstrom,
    /// Alice uses the optimal unambiguous discrimination POVM.
    AliceUsd,
    /// Bob measures in the middle basis and announces the opposite label.
    #[serde(rename = "bob-middle")]
    BobMiddleState,
}

impl AttackKind {
    pub const ALL: [AttackKind; 3] = [
        AttackKind::AliceHelstrom,
        AttackKind::AliceUsd,
        AttackKind::BobMiddleState,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            AttackKind::AliceHelstrom => "alice-helstrom",
            AttackKind::AliceUsd => "alice-usd",
            AttackKind::BobMiddleState => "bob-middle",
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for AttackKind {
    type Err = QpqError;
    fn from_str(s: &str) -> Result<Self> {
        AttackKind::ALL
            .into_iter()
            .find(|k| k.tag() == s)
            .ok_or_else(|| QpqError::Domain(format!("unknown attack tag {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackReport {
    pub kind: AttackKind,
    pub theta: f64,
    pub rounds: usize,
    /// Fraction of rounds whose raw bit was retrieved correctly (for the
    /// middle-state attack: agreement with an independent uniform key).
    pub per_bit_success: f64,
    /// Fraction of rounds with a definite (non-inconclusive) guess.
    pub conclusive_rate: f64,
    /// Conclusive guesses that were wrong.
    pub conclusive_errors: usize,
    pub theoretical_bound: f64,
    pub respects_bound: bool,
    pub correctness_preserved: bool,
    #[serde(skip)]
    per_round: Vec<RoundResult>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct RoundResult {
    conclusive: bool,
    correct: bool,
}

impl AttackReport {
    fn new(kind: AttackKind, theta: Theta, per_round: Vec<RoundResult>, bound: f64, correctness: bool) -> Self {
        let rounds = per_round.len();
        let n = rounds as f64;
        let successes = per_round.iter().filter(|r| r.conclusive && r.correct).count();
        let conclusive = per_round.iter().filter(|r| r.conclusive).count();
        let conclusive_errors = per_round.iter().filter(|r| r.conclusive && !r.correct).count();
        let per_bit_success = successes as f64 / n;
        Self {
            kind,
            theta: theta.radians(),
            rounds,
            per_bit_success,
            conclusive_rate: conclusive as f64 / n,
            conclusive_errors,
            theoretical_bound: bound,
            respects_bound: per_bit_success <= bound + BOUND_SLACK_SIGMAS * binomial_sigma(bound, rounds),
            correctness_preserved: correctness,
            per_round,
        }
    }

    /// Fraction of complete `k`-blocks in which every raw-bit guess was
    /// conclusive and correct, i.e. the attacker knows all bits feeding the
    /// final key bit.
    pub fn block_success_rate(&self, k: usize) -> f64 {
        self.block_rate(k, |block| block.iter().all(|r| r.conclusive && r.correct))
    }

    /// Fraction of complete `k`-blocks whose XOR of guesses equals the XOR of
    /// the true bits. An even number of wrong guesses cancels, so this can
    /// exceed [`AttackReport::block_success_rate`].
    pub fn parity_success_rate(&self, k: usize) -> f64 {
        self.block_rate(k, |block| {
            block.iter().all(|r| r.conclusive) && block.iter().filter(|r| !r.correct).count() % 2 == 0
        })
    }

    pub fn blocks(&self, k: usize) -> usize {
        self.per_round.len().checked_div(k).unwrap_or(0)
    }

    fn block_rate(&self, k: usize, pred: impl Fn(&[RoundResult]) -> bool) -> f64 {
        let blocks = self.blocks(k);
        if blocks == 0 {
            return 0.0;
        }
        let hits = self.per_round.chunks_exact(k).filter(|b| pred(b)).count();
        hits as f64 / blocks as f64
    }
}

/// Standard error of a binomial proportion with success probability `p`.
pub fn binomial_sigma(p: f64, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    (p * (1.0 - p)).max(0.0).sqrt() / (n as f64).sqrt()
}

fn check_rounds(rounds: usize) -> Result<()> {
    if rounds == 0 {
        Err(QpqError::ContractViolation("an attack needs at least one round".into()))
    } else {
        Ok(())
    }
}

/// Honest Bob; Alice measures her collapsed qubit in the Helstrom basis for
/// the announced ensemble (`{|0⟩, |0'⟩}` or `{|1⟩, |1'⟩}`) and always guesses.
pub fn attack_alice_helstrom<R: Rng + ?Sized>(theta: Theta, rounds: usize, rng: &mut R) -> Result<AttackReport> {
    check_rounds(rounds)?;
    let z = key_basis(0, theta);
    let tilted = key_basis(1, theta);
    // Guess basis per announcement: outcome 0 → "R = 0", outcome 1 → "R = 1".
    let mut guess = [MeasBasis::computational(); 2];
    for a in 0..2u8 {
        let (g0, g1) = helstrom_measurement(&z.vector(a).projector(), &tilted.vector(a).projector())?;
        guess[a as usize] = MeasBasis::new(g0, g1)?;
    }
    let per_round = (0..rounds)
        .map(|_| {
            let raw = u8::from(rng.random_bool(0.5));
            let (a, state) = measure_bob_half(&key_basis(raw, theta), rng)?;
            let g = guess[a as usize].measure(&state, rng);
            Ok(RoundResult { conclusive: true, correct: g == raw })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AttackReport::new(
        AttackKind::AliceHelstrom,
        theta,
        per_round,
        helstrom_bound(theta),
        true,
    ))
}

/// Honest Bob; Alice applies the protocol's own optimal unambiguous POVM.
pub fn attack_alice_usd<R: Rng + ?Sized>(theta: Theta, rounds: usize, rng: &mut R) -> Result<AttackReport> {
    check_rounds(rounds)?;
    let povms = [build_povm(0, theta)?, build_povm(1, theta)?];
    let per_round = (0..rounds)
        .map(|_| {
            let raw = u8::from(rng.random_bool(0.5));
            let (a, state) = measure_bob_half(&key_basis(raw, theta), rng)?;
            let out = povms[a as usize].measure(&state, rng);
            Ok(RoundResult { conclusive: out < 2, correct: out == raw })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AttackReport::new(
        AttackKind::AliceUsd,
        theta,
        per_round,
        theta.one_minus_cos(),
        true,
    ))
}

/// Dishonest Bob measures in the middle basis, announces 1 on `|0''⟩` and 0
/// on `|1''⟩`; honest Alice decodes with her POVM. Agreement is scored
/// against an independently drawn uniform key, since Bob never chose one.
pub fn attack_bob_middle_state<R: Rng + ?Sized>(theta: Theta, rounds: usize, rng: &mut R) -> Result<AttackReport> {
    check_rounds(rounds)?;
    let povms = [build_povm(0, theta)?, build_povm(1, theta)?];
    let middle = middle_basis(theta);
    let per_round = (0..rounds)
        .map(|_| {
            let reference = u8::from(rng.random_bool(0.5));
            let (outcome, state) = measure_bob_half(&middle, rng)?;
            let announced = 1 - outcome;
            let out = povms[announced as usize].measure(&state, rng);
            Ok(RoundResult { conclusive: out < 2, correct: out == reference })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AttackReport::new(AttackKind::BobMiddleState, theta, per_round, 0.5, false))
}

pub fn run_attack<R: Rng + ?Sized>(kind: AttackKind, theta: Theta, rounds: usize, rng: &mut R) -> Result<AttackReport> {
    match kind {
        AttackKind::AliceHelstrom => attack_alice_helstrom(theta, rounds, rng),
        AttackKind::AliceUsd => attack_alice_usd(theta, rounds, rng),
        AttackKind::BobMiddleState => attack_bob_middle_state(theta, rounds, rng),
    }
}

/// `½ + ½ sin θ`.
pub fn helstrom_bound(theta: Theta) -> f64 {
    0.5 + 0.5 * theta.sin()
}

/// Per-final-bit guessing bound: `(½ + ½ sin θ)^k` for the Helstrom attack,
/// `(1 − cos θ)^k` for conclusive retrieval and for Bob's index guess.
pub fn final_key_guess_bound(theta: Theta, k: usize, kind: AttackKind) -> Result<f64> {
    if k == 0 {
        return Err(QpqError::Domain("block length k must be >= 1".into()));
    }
    let per_bit = match kind {
        AttackKind::AliceHelstrom => helstrom_bound(theta),
        AttackKind::AliceUsd | AttackKind::BobMiddleState => theta.one_minus_cos(),
    };
    Ok(per_bit.powi(k as i32))
}
