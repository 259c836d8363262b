//! Closed-form leakage quantities. All logarithms are base 2, so entropies
//! are in bits and `2^(−H)` is a guessing probability.

use std::f64::consts::FRAC_PI_2;
use std::io::Write;

use serde::Serialize;

use crate::adversary::helstrom_bound;
use crate::bases::Theta;
use crate::error::{QpqError, Result};

/// Min-entropy of the database given dishonest Alice:
/// `N·k·log₂(2/(1 + sin θ))`.
pub fn data_privacy_entropy(theta: Theta, k: usize, n: usize) -> f64 {
    lambda_bound(theta, k) * n as f64
}

/// Per-database-bit rate `k·log₂(2/(1 + sin θ))`.
pub fn lambda_bound(theta: Theta, k: usize) -> f64 {
    if theta.sin() == 1.0 {
        return 0.0;
    }
    k as f64 * (2.0 / (1.0 + theta.sin())).log2()
}

/// Per-query-index rate `k·log₂(1/(1 − cos θ))`.
///
/// Returns [`QpqError::EntropySaturated`] when the value is not a finite
/// `f64` (θ vanishingly small).
pub fn delta_bound(theta: Theta, k: usize) -> Result<f64> {
    if theta.cos() == 0.0 {
        return Ok(0.0);
    }
    let v = k as f64 * -theta.one_minus_cos().log2();
    if v.is_finite() {
        Ok(v)
    } else {
        Err(QpqError::EntropySaturated(format!(
            "user privacy diverges at theta = {}",
            theta.radians()
        )))
    }
}

/// Min-entropy of `l` query indices given dishonest Bob:
/// `l·k·log₂(1/(1 − cos θ))`.
pub fn user_privacy_entropy(theta: Theta, k: usize, l: usize) -> Result<f64> {
    let v = delta_bound(theta, k)? * l as f64;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(QpqError::EntropySaturated(format!("user privacy overflows for l = {l}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SecuritySummary {
    pub theta: f64,
    pub k: usize,
    pub n: usize,
    pub l: usize,
    pub data_privacy_entropy: f64,
    pub lambda_bound: f64,
    pub user_privacy_entropy: f64,
    pub delta_bound: f64,
    pub conclusive_fraction: f64,
    pub helstrom_bound: f64,
}

impl SecuritySummary {
    pub fn evaluate(theta: Theta, k: usize, n: usize, l: usize) -> Result<Self> {
        Ok(Self {
            theta: theta.radians(),
            k,
            n,
            l,
            data_privacy_entropy: data_privacy_entropy(theta, k, n),
            lambda_bound: lambda_bound(theta, k),
            user_privacy_entropy: user_privacy_entropy(theta, k, l)?,
            delta_bound: delta_bound(theta, k)?,
            conclusive_fraction: theta.one_minus_cos(),
            helstrom_bound: helstrom_bound(theta),
        })
    }
}

/// One row of the θ sweep. `delta` is `None` where it saturates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub theta: f64,
    pub conclusive: f64,
    pub helstrom: f64,
    pub lambda: f64,
    pub delta: Option<f64>,
}

/// `n` evenly spaced angles `i·π/(2n)`, `i = 1..=n`.
pub fn uniform_grid(n: usize) -> Result<Vec<Theta>> {
    if n == 0 {
        return Err(QpqError::Domain("grid needs at least one point".into()));
    }
    (1..=n)
        .map(|i| {
            let t = if i == n { FRAC_PI_2 } else { i as f64 * FRAC_PI_2 / n as f64 };
            Theta::new(t).map_err(QpqError::from)
        })
        .collect()
}

/// Evaluates conclusive (`1 − cos θ`) and inconclusive (`½ + ½ sin θ`)
/// retrieval curves with the per-bit rates for block length `k`.
pub fn sweep_theta(grid: &[Theta], k: usize) -> Vec<SweepRow> {
    grid.iter()
        .map(|&t| SweepRow {
            theta: t.radians(),
            conclusive: t.one_minus_cos(),
            helstrom: helstrom_bound(t),
            lambda: lambda_bound(t, k),
            delta: delta_bound(t, k).ok(),
        })
        .collect()
}

/// Writes `theta,conclusive,helstrom,lambda,delta` plus any extra columns.
/// Saturated `delta` cells are written as `inf`.
pub fn write_sweep_csv<W: Write>(
    rows: &[SweepRow],
    extra: &[(&str, Vec<f64>)],
    out: W,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["theta", "conclusive", "helstrom", "lambda", "delta"];
    header.extend(extra.iter().map(|(name, _)| *name));
    w.write_record(&header)?;
    for (i, r) in rows.iter().enumerate() {
        let mut rec = vec![
            r.theta.to_string(),
            r.conclusive.to_string(),
            r.helstrom.to_string(),
            r.lambda.to_string(),
            r.delta.map_or_else(|| "inf".to_string(), |d| d.to_string()),
        ];
        rec.extend(extra.iter().map(|(_, col)| col[i].to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
