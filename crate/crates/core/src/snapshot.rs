//! Versioned binary bundle of a scoring run.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"QNARSNAP" | u32 header_len | header JSON
//! | for each section named in the header: u64 len | JSON body
//! | SHA-256 of every preceding byte
//! ```

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::credrank::ReputationScore;
use crate::graph::{ContributionGraph, EpochGraphSequence};
use crate::ledger::Ledger;

pub const MAGIC: &[u8; 8] = b"QNARSNAP";
pub const FORMAT_VERSION: u32 = 1;
const SECTIONS: [&str; 4] = ["graph", "epochs", "scores", "ledger"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SnapshotError {
    #[error("not a snapshot (bad magic)")]
    BadMagic,
    #[error("snapshot truncated at byte {0}")]
    Truncated(usize),
    #[error("checksum mismatch: stored {stored}, computed {computed}")]
    ChecksumMismatch { stored: String, computed: String },
    #[error("unsupported snapshot version {0}")]
    UnsupportedVersion(u32),
    #[error("snapshot header: {0}")]
    Header(String),
    #[error("snapshot section {name}: {message}")]
    Section { name: String, message: String },
    #[error("{0} trailing bytes after the last section")]
    TrailingBytes(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub graph: ContributionGraph,
    pub epochs: EpochGraphSequence,
    pub scores: Vec<ReputationScore>,
    pub ledger: Ledger,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    version: u32,
    sections: Vec<String>,
}

fn section_err(name: &str) -> impl Fn(serde_json::Error) -> SnapshotError + '_ {
    move |e| SnapshotError::Section { name: name.to_string(), message: e.to_string() }
}

impl Snapshot {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header { version: FORMAT_VERSION, sections: SECTIONS.iter().map(|s| s.to_string()).collect() };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let bodies = [
            serde_json::to_vec(&self.graph),
            serde_json::to_vec(&self.epochs),
            serde_json::to_vec(&self.scores),
            serde_json::to_vec(&self.ledger),
        ];
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for body in bodies {
            let body = body.expect("snapshot section serializes");
            out.extend_from_slice(&(body.len() as u64).to_le_bytes());
            out.extend_from_slice(&body);
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    /// Verifies magic and checksum before decoding anything.
    pub fn from_bytes(bytes: &[u8]) -> Result<Snapshot, SnapshotError> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(SnapshotError::BadMagic);
        }
        if bytes.len() < MAGIC.len() + 4 + 32 {
            return Err(SnapshotError::Truncated(bytes.len()));
        }
        let (body, stored) = bytes.split_at(bytes.len() - 32);
        let computed = Sha256::digest(body);
        if computed.as_slice() != stored {
            return Err(SnapshotError::ChecksumMismatch { stored: hex::encode(stored), computed: hex::encode(computed) });
        }

        let mut cur = Cursor { bytes: body, pos: MAGIC.len() };
        let header_len = u32::from_le_bytes(cur.take(4)?.try_into().expect("4 bytes")) as usize;
        let header: Header =
            serde_json::from_slice(cur.take(header_len)?).map_err(|e| SnapshotError::Header(e.to_string()))?;
        if header.version != FORMAT_VERSION {
            return Err(SnapshotError::UnsupportedVersion(header.version));
        }
        if header.sections != SECTIONS {
            return Err(SnapshotError::Header(format!("unexpected sections {:?}", header.sections)));
        }
        let mut sections = Vec::with_capacity(SECTIONS.len());
        for _ in SECTIONS {
            let len = u64::from_le_bytes(cur.take(8)?.try_into().expect("8 bytes"));
            let len = usize::try_from(len).map_err(|_| SnapshotError::Truncated(cur.pos))?;
            sections.push(cur.take(len)?);
        }
        if cur.pos != body.len() {
            return Err(SnapshotError::TrailingBytes(body.len() - cur.pos));
        }
        Ok(Snapshot {
            graph: serde_json::from_slice(sections[0]).map_err(section_err("graph"))?,
            epochs: serde_json::from_slice(sections[1]).map_err(section_err("epochs"))?,
            scores: serde_json::from_slice(sections[2]).map_err(section_err("scores"))?,
            ledger: serde_json::from_slice(sections[3]).map_err(section_err("ledger"))?,
        })
    }

    pub fn is_snapshot(bytes: &[u8]) -> bool {
        bytes.starts_with(MAGIC)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SnapshotError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(SnapshotError::Truncated(self.pos))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }
}
