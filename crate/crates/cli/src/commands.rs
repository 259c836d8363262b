//! Subcommand bodies. Each returns a [`Status`] that maps onto the process
//! exit code; user-fixable problems surface as errors instead.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::Context;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use qpq_core::adversary::{attack_alice_helstrom, attack_alice_usd, final_key_guess_bound, run_attack};
use qpq_core::bases::Theta;
use qpq_core::bounds::{sweep_theta, uniform_grid, write_sweep_csv};
use qpq_core::chsh::{chsh_optimum, run_chsh_test};
use qpq_core::protocol::{multi_query, AttemptReport, TranscriptRecord};
use qpq_core::{
    AbortReason, AttackKind, AttackReport, ChshReport, Database, ProtocolConfig, QpqError, Referee,
    SecuritySummary, StreamSeed,
};

use crate::settings::{Settings, SettingsError};

pub const DEFAULT_ROUNDS: usize = 100_000;
pub const DEFAULT_GRID: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Aborted,
    BoundViolated,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::Aborted => 3,
            Status::BoundViolated => 4,
        }
    }
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    command: &'static str,
    status: Status,
    seed: u64,
    settings: &'a Settings,
    #[serde(skip_serializing_if = "Option::is_none")]
    protocol: Option<&'a ProtocolConfig>,
    result: T,
}

fn emit<T: Serialize>(out: Option<&Path>, report: &Report<'_, T>) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

#[derive(Serialize)]
struct QueryRow {
    requested_index: usize,
    retrieved_bit: u8,
    correct: bool,
    used_key_index: usize,
    announced_shift: usize,
    attempts: u32,
    known_final_bits: usize,
    phases: Vec<AttemptReport>,
}

#[derive(Serialize)]
struct RunResult {
    queries: Vec<QueryRow>,
    all_correct: bool,
    mean_known_final_bits: f64,
    expected_known_final_bits: f64,
    security: SecuritySummary,
}

#[derive(Serialize)]
struct AbortResult {
    reason: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    detail: Option<AbortReason>,
}

#[derive(Serialize)]
struct TranscriptLine<'a> {
    query: usize,
    #[serde(flatten)]
    record: &'a TranscriptRecord,
}

/// Full protocol runs: one fresh key and one private query per trial.
///
/// Stream layout under the root seed: child 0 draws the database, child 1
/// the query indices, child 2 is split per query.
pub fn cmd_run(s: &Settings, out: Option<&Path>, transcript: Option<&Path>) -> anyhow::Result<Status> {
    let cfg = s.protocol_config()?;
    let trials = s.trials_or(1);
    let root = StreamSeed::new(s.seed);
    let database = Database::random(cfg.db_size, &mut root.child(0).rng());
    let mut pick = root.child(1).rng();
    let indices: Vec<usize> = (0..trials).map(|_| pick.random_range(0..cfg.db_size)).collect();

    let runs = match multi_query(&cfg, s.devices, &database, &indices, root.child(2), transcript.is_some()) {
        Ok(r) => r,
        Err(e @ (QpqError::Abort(_) | QpqError::RetriesExhausted { .. })) => {
            let detail = match &e {
                QpqError::Abort(reason) => Some(reason.clone()),
                _ => None,
            };
            let report = Report {
                command: "run",
                status: Status::Aborted,
                seed: s.seed,
                settings: s,
                protocol: Some(&cfg),
                result: AbortResult { reason: e.to_string(), detail },
            };
            emit(out, &report)?;
            return Ok(Status::Aborted);
        }
        Err(e) => return Err(e.into()),
    };

    if let Some(path) = transcript {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(file);
        for (query, run) in runs.iter().enumerate() {
            for record in &run.transcript.records {
                serde_json::to_writer(&mut w, &TranscriptLine { query, record })?;
                w.write_all(b"\n")?;
            }
        }
        w.flush()?;
    }

    let known: usize = runs.iter().map(|r| r.known_final_bits).sum();
    let all_correct = runs.iter().all(|r| r.outcome.correct);
    let result = RunResult {
        all_correct,
        mean_known_final_bits: known as f64 / runs.len() as f64,
        expected_known_final_bits: cfg.db_size as f64
            * final_key_guess_bound(cfg.theta, cfg.block_len, AttackKind::AliceUsd)?,
        security: SecuritySummary::evaluate(cfg.theta, cfg.block_len, cfg.db_size, trials)?,
        queries: runs
            .into_iter()
            .map(|r| QueryRow {
                requested_index: r.outcome.requested_index,
                retrieved_bit: r.outcome.retrieved_bit,
                correct: r.outcome.correct,
                used_key_index: r.outcome.used_key_index,
                announced_shift: r.outcome.announced_shift,
                attempts: r.attempts,
                known_final_bits: r.known_final_bits,
                phases: r.reports,
            })
            .collect(),
    };
    let status = if all_correct { Status::Ok } else { Status::BoundViolated };
    emit(out, &Report { command: "run", status, seed: s.seed, settings: s, protocol: Some(&cfg), result })?;
    Ok(status)
}

#[derive(Serialize)]
struct ChshResult {
    optimum: f64,
    flip: f64,
    alice_referee: ChshReport,
    bob_referee: ChshReport,
    combined_z: f64,
}

/// Both CHSH sub-tests with `trials` rounds each.
pub fn cmd_chsh(s: &Settings, out: Option<&Path>) -> anyhow::Result<Status> {
    let n = s.trials_or(DEFAULT_ROUNDS);
    let root = StreamSeed::new(s.seed);
    let flip = s.devices.chsh_flip;
    let alice = run_chsh_test(n, s.eta, Referee::Alice, flip, &mut root.child(0).rng())?;
    let bob = run_chsh_test(n, s.eta, Referee::Bob, flip, &mut root.child(1).rng())?;
    let status = if alice.aborted || bob.aborted { Status::Aborted } else { Status::Ok };
    let result = ChshResult {
        optimum: chsh_optimum(),
        flip,
        combined_z: (alice.wins + bob.wins) as f64 / (alice.n + bob.n) as f64,
        alice_referee: alice,
        bob_referee: bob,
    };
    emit(out, &Report { command: "chsh", status, seed: s.seed, settings: s, protocol: None, result })?;
    Ok(status)
}

#[derive(Serialize)]
struct AttackResult {
    #[serde(flatten)]
    report: AttackReport,
    k: usize,
    blocks: usize,
    final_key_bound: f64,
    block_success_rate: f64,
    parity_success_rate: f64,
}

pub fn cmd_attack(s: &Settings, out: Option<&Path>) -> anyhow::Result<Status> {
    let kind = s
        .attack
        .ok_or_else(|| SettingsError("attack needs --attack {alice-helstrom|alice-usd|bob-middle}".into()))?;
    let theta = s.theta()?;
    let rounds = s.trials_or(DEFAULT_ROUNDS);
    if s.block_len == 0 {
        return Err(SettingsError("k must be positive".into()).into());
    }
    let report = run_attack(kind, theta, rounds, &mut StreamSeed::new(s.seed).rng())?;
    let unambiguous = kind != AttackKind::AliceUsd || report.conclusive_errors == 0;
    let status = if report.respects_bound && unambiguous { Status::Ok } else { Status::BoundViolated };
    let result = AttackResult {
        k: s.block_len,
        blocks: report.blocks(s.block_len),
        final_key_bound: final_key_guess_bound(theta, s.block_len, kind)?,
        block_success_rate: report.block_success_rate(s.block_len),
        parity_success_rate: report.parity_success_rate(s.block_len),
        report,
    };
    emit(out, &Report { command: "attack", status, seed: s.seed, settings: s, protocol: None, result })?;
    Ok(status)
}

#[derive(Serialize)]
struct BoundsResult {
    #[serde(flatten)]
    summary: SecuritySummary,
    helstrom_final_bit: f64,
    conclusive_final_bit: f64,
}

pub fn cmd_bounds(s: &Settings, out: Option<&Path>) -> anyhow::Result<Status> {
    let theta = s.theta()?;
    if s.block_len == 0 || s.db_size == 0 {
        return Err(SettingsError("k and N must be positive".into()).into());
    }
    let result = BoundsResult {
        summary: SecuritySummary::evaluate(theta, s.block_len, s.db_size, s.queries)?,
        helstrom_final_bit: final_key_guess_bound(theta, s.block_len, AttackKind::AliceHelstrom)?,
        conclusive_final_bit: final_key_guess_bound(theta, s.block_len, AttackKind::AliceUsd)?,
    };
    emit(out, &Report { command: "bounds", status: Status::Ok, seed: s.seed, settings: s, protocol: None, result })?;
    Ok(Status::Ok)
}

/// `"50"` is a 50-point uniform grid; `"0.5,1.0,1.5707963267948966"` lists
/// angles explicitly.
pub fn parse_grid(spec: &str) -> Result<Vec<Theta>, SettingsError> {
    let spec = spec.trim();
    if !spec.contains(',') {
        if let Ok(n) = spec.parse::<usize>() {
            return uniform_grid(n).map_err(|e| SettingsError(format!("malformed grid {spec:?}: {e}")));
        }
    }
    spec.split(',')
        .map(|tok| {
            let x: f64 = tok
                .trim()
                .parse()
                .map_err(|_| SettingsError(format!("malformed grid entry {tok:?}")))?;
            Theta::new(x).map_err(|e| SettingsError(format!("malformed grid entry {tok:?}: {e}")))
        })
        .collect()
}

#[derive(Serialize)]
struct SweepMeta<'a> {
    command: &'static str,
    status: Status,
    seed: u64,
    settings: &'a Settings,
    rows: usize,
    empirical: bool,
}

/// Analytic curves on the grid, optionally with Monte-Carlo columns from
/// `trials` rounds per point. Point `i` uses streams `2i` and `2i + 1`.
pub fn cmd_sweep(s: &Settings, out: Option<&Path>, empirical: bool) -> anyhow::Result<Status> {
    let grid = match s.grid.as_deref() {
        Some(spec) => parse_grid(spec)?,
        None => uniform_grid(DEFAULT_GRID)?,
    };
    if s.block_len == 0 {
        return Err(SettingsError("k must be positive".into()).into());
    }
    let rows = sweep_theta(&grid, s.block_len);
    let mut status = Status::Ok;
    let mut extra = Vec::new();
    if empirical {
        let rounds = s.trials_or(DEFAULT_ROUNDS);
        let root = StreamSeed::new(s.seed);
        let points = grid
            .par_iter()
            .enumerate()
            .map(|(i, &t)| {
                let i = i as u64;
                let usd = attack_alice_usd(t, rounds, &mut root.child(2 * i).rng())?;
                let hel = attack_alice_helstrom(t, rounds, &mut root.child(2 * i + 1).rng())?;
                Ok((usd, hel))
            })
            .collect::<Vec<qpq_core::Result<_>>>()
            .into_iter()
            .collect::<qpq_core::Result<Vec<_>>>()?;
        if points
            .iter()
            .any(|(usd, hel)| !usd.respects_bound || usd.conclusive_errors > 0 || !hel.respects_bound)
        {
            status = Status::BoundViolated;
        }
        extra.push(("conclusive_mc", points.iter().map(|(u, _)| u.per_bit_success).collect()));
        extra.push(("helstrom_mc", points.iter().map(|(_, h)| h.per_bit_success).collect()));
    }

    match out {
        Some(path) => {
            let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_sweep_csv(&rows, &extra, BufWriter::new(file))?;
            let meta = SweepMeta { command: "sweep", status, seed: s.seed, settings: s, rows: rows.len(), empirical };
            let mut text = serde_json::to_string_pretty(&meta)?;
            text.push('\n');
            let meta_path = path.with_extension("meta.json");
            std::fs::write(&meta_path, text).with_context(|| format!("writing {}", meta_path.display()))?;
        }
        None => write_sweep_csv(&rows, &extra, io::stdout().lock())?,
    }
    Ok(status)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn grid_specs() {
        assert_eq!(parse_grid("50").unwrap().len(), 50);
        let g = parse_grid("0.5, 1.5707963267948966").unwrap();
        assert_eq!(g[1].radians(), FRAC_PI_2);
        assert_eq!(parse_grid("1.5707963267948966").unwrap()[0].radians(), FRAC_PI_2);
        for bad in ["", "0", "abc", "0.5,,1", "2.0", "-1"] {
            assert!(parse_grid(bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn exit_codes() {
        assert_eq!(Status::Ok.exit_code(), 0);
        assert_eq!(Status::Aborted.exit_code(), 3);
        assert_eq!(Status::BoundViolated.exit_code(), 4);
    }
}
