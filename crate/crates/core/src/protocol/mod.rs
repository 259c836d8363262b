//! The honest-party protocol: entanglement verification, key establishment,
//! POVM device tests, post-processing and the private query.
//!
//! A single attempt consumes exactly `K` pairs:
//! `γK` for the two CHSH sub-tests, `γK` for the two POVM sub-tests and
//! `kN` for the raw key.

mod config;
mod keys;
mod transcript;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bases::{build_povm, key_basis, measure_bob_half, Povm3};
use crate::chsh::{play_round, ChshReport, Referee};
use crate::error::{AbortReason, QpqError, Result};
use crate::rng::StreamSeed;

pub use config::{Layout, ProtocolConfig};
pub use keys::{
    answer_query, bits_to_string, estimate_error_rate, one_time_pad, parse_bits, parse_trits,
    postprocess_keys, trits_to_string, Database, FinalKeys, KeyMaterial, QueryOutcome, RawKey,
    Trit,
};
pub use transcript::{Phase, Transcript, TranscriptRecord};

/// Imperfections injected into otherwise honest devices.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct DeviceModel {
    /// Each CHSH output is flipped with this probability (½ = random device).
    pub chsh_flip: f64,
    /// Alice's POVM device reports the wrong conclusive label with this
    /// probability.
    pub povm_conflict: f64,
    /// A conclusive POVM outcome is reported as inconclusive with this
    /// probability.
    pub povm_loss: f64,
}

impl DeviceModel {
    pub fn honest() -> Self {
        Self::default()
    }

    fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("chsh_flip", self.chsh_flip),
            ("povm_conflict", self.povm_conflict),
            ("povm_loss", self.povm_loss),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(QpqError::Domain(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        Ok(())
    }
}

/// Bob's post-measurement state in the key phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BobState {
    Zero,
    One,
    ZeroPrime,
    OnePrime,
}

impl BobState {
    fn from_measurement(raw_bit: u8, outcome: u8) -> Self {
        match (raw_bit, outcome) {
            (0, 0) => BobState::Zero,
            (0, _) => BobState::One,
            (_, 0) => BobState::ZeroPrime,
            _ => BobState::OnePrime,
        }
    }

    pub fn code(self) -> u64 {
        match self {
            BobState::Zero => 0,
            BobState::One => 1,
            BobState::ZeroPrime => 2,
            BobState::OnePrime => 3,
        }
    }
}

/// One key-establishment pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeyRound {
    pub pair: usize,
    /// Bob's raw bit `R_i` (basis choice).
    pub raw_bit: u8,
    pub bob_state: BobState,
    /// `a_i`: 0 for `|0⟩`/`|0'⟩`, 1 for `|1⟩`/`|1'⟩`.
    pub announced: u8,
    /// Alice's POVM outcome, 2 = inconclusive.
    pub alice_outcome: u8,
}

impl KeyRound {
    pub fn trit(&self) -> Trit {
        Trit::from_outcome(self.alice_outcome)
    }

    pub fn conflicts(&self) -> bool {
        self.trit().bit().is_some_and(|b| b != self.raw_bit)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PovmTestReport {
    pub checked: usize,
    pub conflicts: usize,
    pub rate_checked: usize,
    pub conclusive: usize,
    pub threshold: f64,
}

/// Result of one successful attempt.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttemptReport {
    pub attempt: u32,
    pub chsh: (ChshReport, ChshReport),
    pub povm: PovmTestReport,
    pub error_rate: f64,
    pub known_raw_bits: usize,
    pub known_final_bits: usize,
}

/// A key established by [`Protocol::run_with_retries`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstablishedKey {
    pub material: KeyMaterial,
    pub attempts: u32,
    pub reports: Vec<AttemptReport>,
}

/// Honest Alice and Bob running the protocol for one config.
#[derive(Debug)]
pub struct Protocol<'a> {
    cfg: &'a ProtocolConfig,
    layout: Layout,
    devices: DeviceModel,
    povms: [Povm3; 2],
    record: bool,
    attempt: u32,
    transcript: Transcript,
}

impl<'a> Protocol<'a> {
    pub fn new(cfg: &'a ProtocolConfig, devices: DeviceModel) -> Result<Self> {
        let layout = cfg.layout()?;
        devices.validate()?;
        Ok(Self {
            cfg,
            layout,
            devices,
            povms: [build_povm(0, cfg.theta)?, build_povm(1, cfg.theta)?],
            record: false,
            attempt: 1,
            transcript: Transcript::default(),
        })
    }

    /// Enables transcript recording.
    pub fn recording(mut self, on: bool) -> Self {
        self.record = on;
        self
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn into_transcript(self) -> Transcript {
        self.transcript
    }

    fn log(&mut self, phase: Phase, index: usize, inputs: Vec<u64>, announced: Vec<u64>, outcomes: Vec<u64>) {
        if self.record {
            self.transcript.push(TranscriptRecord {
                attempt: self.attempt,
                phase,
                index,
                inputs,
                announced,
                outcomes,
            });
        }
    }

    /// Two CHSH sub-tests of `γK/2` pairs each, Alice then Bob as referee.
    /// Removes the tested pairs from `pool`.
    pub fn run_verification<R: Rng + ?Sized>(
        &mut self,
        pool: &mut Vec<usize>,
        rng: &mut R,
    ) -> Result<(ChshReport, ChshReport)> {
        let alice = self.chsh_subtest(Referee::Alice, pool, rng)?;
        let bob = self.chsh_subtest(Referee::Bob, pool, rng)?;
        Ok((alice, bob))
    }

    fn chsh_subtest<R: Rng + ?Sized>(
        &mut self,
        referee: Referee,
        pool: &mut Vec<usize>,
        rng: &mut R,
    ) -> Result<ChshReport> {
        let pairs = take_random(pool, self.layout.test_half, rng);
        let phase = match referee {
            Referee::Alice => Phase::ChshAliceReferee,
            Referee::Bob => Phase::ChshBobReferee,
        };
        let mut wins = 0usize;
        for &pair in &pairs {
            let u = u8::from(rng.random_bool(0.5));
            let v = u8::from(rng.random_bool(0.5));
            let r = play_round(u, v, self.devices.chsh_flip, rng)?;
            wins += r.win as usize;
            let (u, v, b, c) = (r.u as u64, r.v as u64, r.b as u64, r.c as u64);
            let announced = match referee {
                Referee::Alice => vec![v, b, u, c],
                Referee::Bob => vec![u, c, v, b],
            };
            self.log(phase, pair, vec![u, v], announced, vec![b, c]);
        }
        let report = ChshReport::from_counts(pairs.len(), wins, self.cfg.eta, referee)?;
        if report.aborted {
            return Err(QpqError::Abort(AbortReason::Chsh { report }));
        }
        Ok(report)
    }

    /// Key establishment on every pair left in `pool` (in index order).
    pub fn run_key_establishment<R: Rng + ?Sized>(
        &mut self,
        pool: &[usize],
        rng: &mut R,
    ) -> Result<Vec<KeyRound>> {
        let theta = self.cfg.theta;
        let mut rounds = Vec::with_capacity(pool.len());
        for &pair in pool {
            let raw_bit = u8::from(rng.random_bool(0.5));
            let (announced, collapsed) = measure_bob_half(&key_basis(raw_bit, theta), rng)?;
            let mut alice_outcome = self.povms[announced as usize].measure(&collapsed, rng);
            if self.devices.povm_conflict > 0.0 && rng.random_bool(self.devices.povm_conflict) {
                alice_outcome = 1 - raw_bit;
            } else if alice_outcome < 2
                && self.devices.povm_loss > 0.0
                && rng.random_bool(self.devices.povm_loss)
            {
                alice_outcome = 2;
            }
            let round = KeyRound {
                pair,
                raw_bit,
                bob_state: BobState::from_measurement(raw_bit, announced),
                announced,
                alice_outcome,
            };
            self.log(
                Phase::KeyEstablishment,
                pair,
                vec![raw_bit as u64],
                vec![announced as u64],
                vec![announced as u64, alice_outcome as u64],
            );
            rounds.push(round);
        }
        Ok(rounds)
    }

    /// POVM sub-test 1 (conflicts) and sub-test 2 (conclusive rate) on
    /// `γK/2` random positions each; the remaining `kN` rounds form the raw key.
    pub fn run_di_povm_tests<R: Rng + ?Sized>(
        &mut self,
        rounds: Vec<KeyRound>,
        rng: &mut R,
    ) -> Result<(PovmTestReport, RawKey)> {
        let half = self.layout.test_half;
        let mut positions: Vec<usize> = (0..rounds.len()).collect();

        let conflict_set = take_random(&mut positions, half, rng);
        let mut conflicts = 0usize;
        for &p in &conflict_set {
            let r = rounds[p];
            conflicts += usize::from(r.conflicts());
            self.log(
                Phase::PovmConflictTest,
                r.pair,
                vec![r.raw_bit as u64],
                vec![r.bob_state.code()],
                vec![r.alice_outcome as u64],
            );
        }
        if conflicts > 0 {
            return Err(QpqError::Abort(AbortReason::PovmConflict {
                conflicts,
                checked: half,
            }));
        }

        let rate_set = take_random(&mut positions, half, rng);
        let mut conclusive = 0usize;
        for &p in &rate_set {
            let r = rounds[p];
            conclusive += usize::from(r.alice_outcome < 2);
            self.log(
                Phase::PovmRateTest,
                r.pair,
                vec![r.raw_bit as u64],
                vec![r.bob_state.code()],
                vec![r.alice_outcome as u64],
            );
        }
        let threshold = (self.cfg.theta.one_minus_cos() - self.cfg.eta) * half as f64;
        if (conclusive as f64) < threshold {
            return Err(QpqError::Abort(AbortReason::PovmRate {
                conclusive,
                threshold,
                checked: half,
            }));
        }

        let raw = RawKey {
            bob: positions.iter().map(|&p| rounds[p].raw_bit).collect(),
            alice: positions.iter().map(|&p| rounds[p].trit()).collect(),
            announcements: positions.iter().map(|&p| rounds[p].announced).collect(),
        };
        debug_assert_eq!(raw.len(), self.layout.raw_key);
        let report = PovmTestReport {
            checked: half,
            conflicts,
            rate_checked: half,
            conclusive,
            threshold,
        };
        Ok((report, raw))
    }

    /// Bob announces a uniform permutation, Alice a uniform shift; both
    /// derive their final keys.
    pub fn run_postprocessing<R: Rng + ?Sized>(&mut self, raw: RawKey, rng: &mut R) -> Result<KeyMaterial> {
        let len = raw.len();
        let mut permutation: Vec<usize> = (0..len).collect();
        permutation.shuffle(rng);
        let shift = rng.random_range(0..len);
        let finals = postprocess_keys(
            &raw.bob,
            &raw.alice,
            shift,
            &permutation,
            self.cfg.block_len,
            self.cfg.db_size,
        )?;
        if self.record {
            let mut announced = Vec::with_capacity(len + 1);
            announced.push(shift as u64);
            announced.extend(permutation.iter().map(|&p| p as u64));
            self.log(Phase::PostProcessing, 0, vec![], announced, vec![]);
        }
        Ok(KeyMaterial {
            raw,
            shift,
            permutation,
            finals,
        })
    }

    /// One full attempt on a fresh batch of `K` pairs.
    pub fn run_attempt<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<(KeyMaterial, AttemptReport)> {
        let mut pool: Vec<usize> = (0..self.cfg.pairs).collect();
        let chsh = self.run_verification(&mut pool, rng)?;
        let rounds = self.run_key_establishment(&pool, rng)?;
        let (povm, raw) = self.run_di_povm_tests(rounds, rng)?;
        let known_raw_bits = raw.known();
        let material = self.run_postprocessing(raw, rng)?;
        let error_rate = estimate_error_rate(&material.finals);
        if error_rate > self.cfg.error_threshold {
            return Err(QpqError::Abort(AbortReason::ErrorRate {
                rate: error_rate,
                epsilon: self.cfg.error_threshold,
            }));
        }
        let report = AttemptReport {
            attempt: self.attempt,
            chsh,
            povm,
            error_rate,
            known_raw_bits,
            known_final_bits: material.finals.known(),
        };
        Ok((material, report))
    }

    /// Repeats full attempts until Alice knows at least one final bit.
    /// Aborts are not retried.
    pub fn run_with_retries<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<EstablishedKey> {
        let mut reports = Vec::new();
        for attempt in 1..=self.cfg.max_retries {
            self.attempt = attempt;
            let (material, report) = self.run_attempt(rng)?;
            reports.push(report);
            if material.finals.known() > 0 {
                return Ok(EstablishedKey {
                    material,
                    attempts: attempt,
                    reports,
                });
            }
        }
        Err(QpqError::RetriesExhausted {
            attempts: self.cfg.max_retries,
        })
    }
}

/// Removes `n` uniformly chosen entries from `pool` and returns them sorted.
fn take_random<R: Rng + ?Sized>(pool: &mut Vec<usize>, n: usize, rng: &mut R) -> Vec<usize> {
    let mut picks = index::sample(rng, pool.len(), n).into_vec();
    picks.sort_unstable();
    let chosen: Vec<usize> = picks.iter().map(|&i| pool[i]).collect();
    for &i in picks.iter().rev() {
        pool.remove(i);
    }
    chosen
}

/// One retrieval from [`multi_query`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryRun {
    pub outcome: QueryOutcome,
    pub attempts: u32,
    pub known_final_bits: usize,
    pub reports: Vec<AttemptReport>,
    #[serde(skip)]
    pub transcript: Transcript,
}

/// Runs the whole protocol with a fresh key for each requested index.
///
/// Query `q` draws from `seed.child(q)`, so results do not depend on how
/// the queries are scheduled across threads. On failure the error of the
/// lowest-numbered failing query is returned.
pub fn multi_query(
    cfg: &ProtocolConfig,
    devices: DeviceModel,
    database: &Database,
    indices: &[usize],
    seed: StreamSeed,
    record: bool,
) -> Result<Vec<QueryRun>> {
    if database.len() != cfg.db_size {
        return Err(QpqError::ContractViolation(format!(
            "database has {} bits, config N = {}",
            database.len(),
            cfg.db_size
        )));
    }
    if let Some(&bad) = indices.iter().find(|&&j| j >= cfg.db_size) {
        return Err(QpqError::Domain(format!("query index {bad} out of range 0..{}", cfg.db_size)));
    }
    indices
        .par_iter()
        .enumerate()
        .map(|(q, &j)| {
            let mut rng = seed.child(q as u64).rng();
            let mut protocol = Protocol::new(cfg, devices)?.recording(record);
            let key = protocol.run_with_retries(&mut rng)?;
            let outcome = answer_query(&key.material.finals, database, j, &mut rng)?;
            protocol.log(
                Phase::Query,
                j,
                vec![j as u64],
                vec![outcome.announced_shift as u64],
                vec![outcome.retrieved_bit as u64],
            );
            Ok(QueryRun {
                outcome,
                attempts: key.attempts,
                known_final_bits: key.material.finals.known(),
                reports: key.reports,
                transcript: protocol.into_transcript(),
            })
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bases::Theta;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3};

    fn cfg(theta: f64) -> ProtocolConfig {
        ProtocolConfig::for_database(Theta::new(theta).unwrap(), 2, 100, 0.45, 0.1, 5).unwrap()
    }

    #[test]
    fn take_random_partitions_pool() {
        let mut rng = StreamSeed::new(0).rng();
        let mut pool: Vec<usize> = (0..100).collect();
        let a = take_random(&mut pool, 30, &mut rng);
        let b = take_random(&mut pool, 30, &mut rng);
        assert_eq!((a.len(), b.len(), pool.len()), (30, 30, 40));
        let mut all: Vec<usize> = a.into_iter().chain(b).chain(pool).collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn attempt_consumes_exactly_k_pairs() {
        let c = cfg(FRAC_PI_3);
        let mut p = Protocol::new(&c, DeviceModel::honest()).unwrap().recording(true);
        let (m, r) = p.run_attempt(&mut StreamSeed::new(1).rng()).unwrap();
        let l = p.layout();
        let t = p.transcript();
        let count = |ph: Phase| t.records.iter().filter(|r| r.phase == ph).count();
        assert_eq!(count(Phase::ChshAliceReferee), l.test_half);
        assert_eq!(count(Phase::ChshBobReferee), l.test_half);
        assert_eq!(count(Phase::KeyEstablishment), l.key_establishment);
        assert_eq!(count(Phase::PovmConflictTest) + count(Phase::PovmRateTest), 2 * l.test_half);
        assert_eq!(m.raw.len(), l.raw_key);
        assert_eq!(4 * l.test_half + l.raw_key, c.pairs);
        // Each pair index appears in exactly one of CHSH / key establishment.
        let mut used: Vec<usize> = t
            .records
            .iter()
            .filter(|r| matches!(r.phase, Phase::ChshAliceReferee | Phase::ChshBobReferee | Phase::KeyEstablishment))
            .map(|r| r.index)
            .collect();
        used.sort_unstable();
        assert_eq!(used, (0..c.pairs).collect::<Vec<_>>());
        assert_eq!(r.error_rate, 0.0);
    }

    #[test]
    fn raw_key_is_consistent() {
        let c = cfg(FRAC_PI_3);
        let mut p = Protocol::new(&c, DeviceModel::honest()).unwrap();
        let (m, _) = p.run_attempt(&mut StreamSeed::new(2).rng()).unwrap();
        for (a, b) in m.raw.alice.iter().zip(&m.raw.bob) {
            if let Some(a) = a.bit() {
                assert_eq!(a, *b);
            }
        }
        for (i, t) in m.finals.alice.iter().enumerate() {
            let block = (0..2).all(|j| {
                let src = (m.permutation[2 * i + j] + m.shift) % m.raw.len();
                m.raw.alice[src].is_known()
            });
            assert_eq!(t.is_known(), block);
            if let Some(b) = t.bit() {
                assert_eq!(b, m.finals.bob[i]);
            }
        }
    }

    #[test]
    fn orthogonal_bases_give_full_knowledge() {
        let c = cfg(FRAC_PI_2);
        let mut p = Protocol::new(&c, DeviceModel::honest()).unwrap();
        let k = p.run_with_retries(&mut StreamSeed::new(3).rng()).unwrap();
        assert_eq!(k.attempts, 1);
        assert_eq!(k.material.raw.known(), k.material.raw.len());
        assert_eq!(k.material.finals.known(), c.db_size);
    }

    #[test]
    fn random_chsh_device_aborts_verification() {
        let c = cfg(FRAC_PI_3);
        let dev = DeviceModel { chsh_flip: 0.5, ..DeviceModel::default() };
        let mut p = Protocol::new(&c, dev).unwrap();
        let err = p.run_attempt(&mut StreamSeed::new(4).rng()).unwrap_err();
        assert!(matches!(err, QpqError::Abort(AbortReason::Chsh { .. })), "{err}");
    }

    #[test]
    fn conflicting_povm_device_aborts() {
        let c = cfg(FRAC_PI_3);
        let dev = DeviceModel { povm_conflict: 0.01, ..DeviceModel::default() };
        // 450 checked pairs: abort probability 1 − 0.99^450 ≈ 0.989.
        let aborted = (0..50)
            .filter(|s| {
                let mut p = Protocol::new(&c, dev).unwrap();
                matches!(
                    p.run_attempt(&mut StreamSeed::new(*s).rng()),
                    Err(QpqError::Abort(AbortReason::PovmConflict { .. }))
                )
            })
            .count();
        assert!(aborted >= 45, "aborted {aborted}/50");
    }

    #[test]
    fn lossy_povm_device_fails_rate_test() {
        let c = ProtocolConfig::for_database(Theta::new(FRAC_PI_3).unwrap(), 2, 100, 0.45, 0.02, 5).unwrap();
        // conclusive rate 0.5 × 0.8 = 0.4 < 0.5 − 0.02
        let dev = DeviceModel { povm_loss: 0.2, ..DeviceModel::default() };
        let mut p = Protocol::new(&c, dev).unwrap();
        let err = p.run_attempt(&mut StreamSeed::new(6).rng()).unwrap_err();
        assert!(matches!(err, QpqError::Abort(AbortReason::PovmRate { .. })), "{err}");
    }

    #[test]
    fn retries_exhausted_is_surfaced() {
        // θ small, k = 8: N(1 − cos θ)^k ≈ 1e-20.
        let mut c = ProtocolConfig::for_database(Theta::new(0.2).unwrap(), 8, 10, 0.25, 0.5, 0).unwrap();
        c.max_retries = 1;
        let mut p = Protocol::new(&c, DeviceModel::honest()).unwrap();
        let err = p.run_with_retries(&mut StreamSeed::new(0).rng()).unwrap_err();
        assert!(matches!(err, QpqError::RetriesExhausted { attempts: 1 }), "{err}");
    }

    #[test]
    fn bad_device_parameters_rejected() {
        let c = cfg(FRAC_PI_3);
        let dev = DeviceModel { povm_loss: 1.5, ..DeviceModel::default() };
        assert!(Protocol::new(&c, dev).is_err());
    }

    #[test]
    fn multi_query_edge_cases() {
        let c = cfg(FRAC_PI_3);
        let mut rng = StreamSeed::new(7).rng();
        let db = Database::random(c.db_size, &mut rng);
        let seed = StreamSeed::new(8);
        assert!(multi_query(&c, DeviceModel::honest(), &db, &[], seed, false).unwrap().is_empty());

        let runs = multi_query(&c, DeviceModel::honest(), &db, &[3, 50, 99], seed, true).unwrap();
        assert_eq!(runs.len(), 3);
        assert!(runs.iter().all(|r| r.outcome.correct));
        assert_ne!(runs[0].transcript, runs[1].transcript);

        let runs = multi_query(&c, DeviceModel::honest(), &db, &[4, 4], seed, false).unwrap();
        assert_eq!(runs[0].outcome.retrieved_bit, runs[1].outcome.retrieved_bit);
        assert_eq!(runs[0].outcome.retrieved_bit, db.bits()[4]);

        assert!(multi_query(&c, DeviceModel::honest(), &db, &[100], seed, false).is_err());
    }

    #[test]
    fn multi_query_is_deterministic() {
        let c = cfg(FRAC_PI_3);
        let db = Database::random(c.db_size, &mut StreamSeed::new(1).rng());
        let idx: Vec<usize> = (0..8).collect();
        let a = multi_query(&c, DeviceModel::honest(), &db, &idx, StreamSeed::new(2), true).unwrap();
        let b = multi_query(&c, DeviceModel::honest(), &db, &idx, StreamSeed::new(2), true).unwrap();
        assert_eq!(a, b);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.transcript.to_jsonl(), y.transcript.to_jsonl());
        }
    }
}
