use std::io::{self, Write};

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    ChshAliceReferee,
    ChshBobReferee,
    KeyEstablishment,
    PovmConflictTest,
    PovmRateTest,
    PostProcessing,
    Query,
}

/// One transcript line. Field meaning per phase:
///
/// | phase | index | inputs | announced | outcomes |
/// |---|---|---|---|---|
/// | chsh_* | pair | `[u, v]` | input/output pairs in declaration order | `[b, c]` |
/// | key_establishment | pair | `[R]` | `[a]` | `[bob, alice]` (alice: 0/1, 2 = inconclusive) |
/// | povm_*_test | pair | `[R]` | `[bob state]` (0:`|0⟩` 1:`|1⟩` 2:`|0'⟩` 3:`|1'⟩`) | `[alice]` |
/// | post_processing | 0 | `[]` | `[s0, perm...]` | `[]` |
/// | query | requested index | `[j]` | `[s]` | `[retrieved bit]` |
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TranscriptRecord {
    pub attempt: u32,
    pub phase: Phase,
    pub index: usize,
    pub inputs: Vec<u64>,
    pub announced: Vec<u64>,
    pub outcomes: Vec<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Transcript {
    pub records: Vec<TranscriptRecord>,
}

impl Transcript {
    pub fn push(&mut self, record: TranscriptRecord) {
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn extend(&mut self, other: Transcript) {
        self.records.extend(other.records);
    }

    /// Writes one JSON object per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }
}
