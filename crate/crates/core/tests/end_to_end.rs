use std::f64::consts::FRAC_PI_3;

use qpq_core::protocol::{multi_query, Phase, Protocol};
use qpq_core::{Database, DeviceModel, ProtocolConfig, StreamSeed, Theta};

fn small_cfg(seed: u64) -> ProtocolConfig {
    ProtocolConfig::for_database(Theta::new(FRAC_PI_3).unwrap(), 2, 50, 0.25, 0.5, seed).unwrap()
}

#[test]
fn transcript_covers_every_pair_once_per_attempt() {
    let cfg = small_cfg(3);
    let mut protocol = Protocol::new(&cfg, DeviceModel::honest()).unwrap().recording(true);
    let key = protocol.run_with_retries(&mut StreamSeed::new(cfg.seed).rng()).unwrap();
    let layout = protocol.layout();
    let transcript = protocol.into_transcript();

    let last = key.attempts;
    let count = |phase: Phase| {
        transcript.records.iter().filter(|r| r.attempt == last && r.phase == phase).count()
    };
    assert_eq!(count(Phase::ChshAliceReferee), layout.test_half);
    assert_eq!(count(Phase::ChshBobReferee), layout.test_half);
    assert_eq!(count(Phase::KeyEstablishment), layout.key_establishment);
    assert_eq!(count(Phase::PovmConflictTest), layout.test_half);
    assert_eq!(count(Phase::PovmRateTest), layout.test_half);

    let mut pairs: Vec<usize> = transcript
        .records
        .iter()
        .filter(|r| {
            r.attempt == last
                && matches!(
                    r.phase,
                    Phase::ChshAliceReferee | Phase::ChshBobReferee | Phase::KeyEstablishment
                )
        })
        .map(|r| r.index)
        .collect();
    pairs.sort_unstable();
    assert_eq!(pairs, (0..cfg.pairs).collect::<Vec<_>>());
}

#[test]
fn transcript_jsonl_round_trips_through_serde() {
    let cfg = small_cfg(4);
    let mut protocol = Protocol::new(&cfg, DeviceModel::honest()).unwrap().recording(true);
    protocol.run_with_retries(&mut StreamSeed::new(cfg.seed).rng()).unwrap();
    let text = protocol.transcript().to_jsonl();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), protocol.transcript().len());
    for line in lines {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        for field in ["attempt", "phase", "index", "inputs", "announced", "outcomes"] {
            assert!(v.get(field).is_some(), "missing {field} in {line}");
        }
    }
}

#[test]
fn multi_query_is_independent_of_thread_count() {
    let cfg = small_cfg(5);
    let db = Database::random(cfg.db_size, &mut StreamSeed::new(1).rng());
    let indices: Vec<usize> = (0..cfg.db_size).collect();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| multi_query(&cfg, DeviceModel::honest(), &db, &indices, StreamSeed::new(9), true).unwrap())
    };
    let one = run(1);
    let four = run(4);
    assert_eq!(one, four);
    for (q, r) in one.iter().enumerate() {
        assert!(r.outcome.correct);
        assert_eq!(r.outcome.retrieved_bit, db.bits()[q]);
        assert_eq!(r.transcript.to_jsonl(), four[q].transcript.to_jsonl());
    }
}
