//! Key material, post-processing (shift, permutation, k-block XOR) and the
//! one-time-pad query exchange.

use std::fmt;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Serialize, Serializer};

use crate::error::{QpqError, Result};

/// Alice's knowledge of one key bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Trit {
    Zero,
    One,
    Unknown,
}

impl Trit {
    pub fn from_bit(bit: u8) -> Self {
        if bit == 0 {
            Trit::Zero
        } else {
            Trit::One
        }
    }

    /// POVM outcome index to trit: 0 and 1 are conclusive, 2 is not.
    pub fn from_outcome(outcome: u8) -> Self {
        match outcome {
            0 => Trit::Zero,
            1 => Trit::One,
            _ => Trit::Unknown,
        }
    }

    pub fn bit(self) -> Option<u8> {
        match self {
            Trit::Zero => Some(0),
            Trit::One => Some(1),
            Trit::Unknown => None,
        }
    }

    pub fn is_known(self) -> bool {
        self != Trit::Unknown
    }

    pub fn as_char(self) -> char {
        match self {
            Trit::Zero => '0',
            Trit::One => '1',
            Trit::Unknown => '?',
        }
    }
}

impl fmt::Display for Trit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

impl Serialize for Trit {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_char(self.as_char())
    }
}

/// Parses a `0`/`1` string, ignoring whitespace.
pub fn parse_bits(s: &str) -> Result<Vec<u8>> {
    s.chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| match c {
            '0' => Ok(0),
            '1' => Ok(1),
            other => Err(QpqError::Domain(format!("invalid bit character {other:?}"))),
        })
        .collect()
}

/// Parses a `0`/`1`/`?` string, ignoring whitespace.
pub fn parse_trits(s: &str) -> Result<Vec<Trit>> {
    s.chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| match c {
            '0' => Ok(Trit::Zero),
            '1' => Ok(Trit::One),
            '?' => Ok(Trit::Unknown),
            other => Err(QpqError::Domain(format!("invalid trit character {other:?}"))),
        })
        .collect()
}

pub fn bits_to_string(bits: &[u8]) -> String {
    bits.iter().map(|b| if *b == 0 { '0' } else { '1' }).collect()
}

pub fn trits_to_string(trits: &[Trit]) -> String {
    trits.iter().map(|t| t.as_char()).collect()
}

fn serialize_bits<S: Serializer>(bits: &[u8], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&bits_to_string(bits))
}

fn serialize_trits<S: Serializer>(trits: &[Trit], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&trits_to_string(trits))
}

/// Raw key after the POVM device tests: the `kN` surviving positions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RawKey {
    #[serde(serialize_with = "serialize_bits")]
    pub bob: Vec<u8>,
    #[serde(serialize_with = "serialize_trits")]
    pub alice: Vec<Trit>,
    #[serde(serialize_with = "serialize_bits")]
    pub announcements: Vec<u8>,
}

impl RawKey {
    pub fn len(&self) -> usize {
        self.bob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bob.is_empty()
    }

    pub fn known(&self) -> usize {
        self.alice.iter().filter(|t| t.is_known()).count()
    }
}

/// Both parties' final keys of length `N`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FinalKeys {
    #[serde(serialize_with = "serialize_bits")]
    pub bob: Vec<u8>,
    #[serde(serialize_with = "serialize_trits")]
    pub alice: Vec<Trit>,
}

impl FinalKeys {
    pub fn known(&self) -> usize {
        self.alice.iter().filter(|t| t.is_known()).count()
    }

    pub fn known_indices(&self) -> Vec<usize> {
        self.alice
            .iter()
            .enumerate()
            .filter_map(|(i, t)| t.is_known().then_some(i))
            .collect()
    }
}

/// Everything a completed key phase leaves behind.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeyMaterial {
    pub raw: RawKey,
    pub shift: usize,
    pub permutation: Vec<usize>,
    #[serde(flatten)]
    pub finals: FinalKeys,
}

impl KeyMaterial {
    pub fn bob_final(&self) -> &[u8] {
        &self.finals.bob
    }

    pub fn alice_final(&self) -> &[Trit] {
        &self.finals.alice
    }
}

/// Cyclic left shift by `s0`, then reorder so that position `t` takes the
/// shifted bit at `perm[t]`, then XOR consecutive blocks of `k`.
///
/// Alice's block is known only if all `k` of its trits are.
pub fn postprocess_keys(
    bob_raw: &[u8],
    alice_raw: &[Trit],
    s0: usize,
    perm: &[usize],
    k: usize,
    n: usize,
) -> Result<FinalKeys> {
    let len = k * n;
    if k == 0 || n == 0 {
        return Err(QpqError::ContractViolation("k and N must be positive".into()));
    }
    if bob_raw.len() != len || alice_raw.len() != len || perm.len() != len {
        return Err(QpqError::ContractViolation(format!(
            "length mismatch: bob {}, alice {}, perm {}, expected k*N = {len}",
            bob_raw.len(),
            alice_raw.len(),
            perm.len()
        )));
    }
    let mut seen = vec![false; len];
    for &p in perm {
        if p >= len || std::mem::replace(&mut seen[p], true) {
            return Err(QpqError::ContractViolation("permutation is not a bijection".into()));
        }
    }
    let source = |t: usize| (perm[t] + s0) % len;

    let bob = (0..n)
        .map(|block| (0..k).fold(0u8, |acc, j| acc ^ bob_raw[source(block * k + j)]))
        .collect();
    let alice = (0..n)
        .map(|block| {
            (0..k)
                .try_fold(0u8, |acc, j| alice_raw[source(block * k + j)].bit().map(|b| acc ^ b))
                .map_or(Trit::Unknown, Trit::from_bit)
        })
        .collect();
    Ok(FinalKeys { bob, alice })
}

/// Fraction of Alice's known final bits that disagree with Bob's.
///
/// Stands in for a full error-correction step: it only estimates the rate.
pub fn estimate_error_rate(keys: &FinalKeys) -> f64 {
    let (known, wrong) = keys
        .alice
        .iter()
        .zip(&keys.bob)
        .filter_map(|(a, b)| a.bit().map(|a| a != *b))
        .fold((0usize, 0usize), |(k, w), bad| (k + 1, w + usize::from(bad)));
    if known == 0 {
        0.0
    } else {
        wrong as f64 / known as f64
    }
}

/// Bob's `N`-bit database.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Database {
    #[serde(serialize_with = "serialize_bits")]
    bits: Vec<u8>,
}

impl Database {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.is_empty() || bits.iter().any(|b| *b > 1) {
            return Err(QpqError::Domain("database must be a non-empty 0/1 string".into()));
        }
        Ok(Self { bits })
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        Self {
            bits: (0..n).map(|_| u8::from(rng.random_bool(0.5))).collect(),
        }
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

/// One-time pad with the key shifted by `s`: `c[t] = x[t] ⊕ F[(t + s) mod N]`.
/// Applying it twice with the same key and shift is the identity.
pub fn one_time_pad(data: &[u8], key: &[u8], shift: usize) -> Result<Vec<u8>> {
    if data.len() != key.len() || key.is_empty() {
        return Err(QpqError::ContractViolation(format!(
            "data length {} != key length {}",
            data.len(),
            key.len()
        )));
    }
    let n = key.len();
    Ok(data
        .iter()
        .enumerate()
        .map(|(t, x)| x ^ key[(t + shift) % n])
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QueryOutcome {
    pub requested_index: usize,
    pub used_key_index: usize,
    /// `s = i − j mod N`.
    pub announced_shift: usize,
    pub retrieved_bit: u8,
    pub correct: bool,
}

/// Alice picks a known final-key index `i` uniformly, announces
/// `s = i − j mod N`, Bob returns the database padded with the key shifted
/// by `s`, and Alice unpads position `j` with her bit `F_A[i]`.
pub fn answer_query<R: Rng + ?Sized>(
    keys: &FinalKeys,
    database: &Database,
    j: usize,
    rng: &mut R,
) -> Result<QueryOutcome> {
    let n = keys.bob.len();
    if database.len() != n || keys.alice.len() != n {
        return Err(QpqError::ContractViolation(format!(
            "database length {} does not match key length {n}",
            database.len()
        )));
    }
    if j >= n {
        return Err(QpqError::Domain(format!("query index {j} out of range 0..{n}")));
    }
    let known = keys.known_indices();
    let &i = known.choose(rng).ok_or_else(|| {
        QpqError::ContractViolation("Alice knows no final key bit".into())
    })?;
    let s = (i + n - j) % n;
    let ciphertext = one_time_pad(database.bits(), &keys.bob, s)?;
    let key_bit = keys.alice[i].bit().expect("chosen index is known");
    let retrieved_bit = ciphertext[j] ^ key_bit;
    Ok(QueryOutcome {
        requested_index: j,
        used_key_index: i,
        announced_shift: s,
        retrieved_bit,
        correct: retrieved_bit == database.bits()[j],
    })
}
