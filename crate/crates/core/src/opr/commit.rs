use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::token::TokenAmount;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Vote {
    Accept,
    Deny,
}

impl Vote {
    pub fn sign(self) -> i8 {
        match self {
            Vote::Accept => 1,
            Vote::Deny => -1,
        }
    }

    fn byte(self) -> u8 {
        match self {
            Vote::Accept => 0x01,
            Vote::Deny => 0xFF,
        }
    }
}

pub type Nonce = [u8; 32];

/// A sealed bid as disclosed at reveal time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bid {
    pub staker: String,
    pub amount: TokenAmount,
    pub vote: Vote,
    #[serde(with = "hex32")]
    pub nonce: Nonce,
}

impl Bid {
    pub fn new(staker: impl Into<String>, amount: TokenAmount, vote: Vote, nonce: Nonce) -> Self {
        Bid { staker: staker.into(), amount, vote, nonce }
    }

    /// `staker ‖ 0x00 ‖ amount (16 bytes BE) ‖ vote ‖ nonce`.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.staker.len() + 1 + 16 + 1 + 32);
        out.extend_from_slice(self.staker.as_bytes());
        out.push(0x00);
        out.extend_from_slice(&self.amount.to_be_bytes());
        out.push(self.vote.byte());
        out.extend_from_slice(&self.nonce);
        out
    }

    pub fn commitment(&self) -> Commitment {
        Commitment(Sha256::digest(self.encode()).into())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Commitment(#[serde(with = "hex32")] pub [u8; 32]);

impl Commitment {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, hex::FromHexError> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out)?;
        Ok(Commitment(out))
    }
}

impl fmt::Debug for Commitment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Commitment({})", self.to_hex())
    }
}

impl fmt::Display for Commitment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

mod hex32 {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let text = String::deserialize(d)?;
        let mut out = [0u8; 32];
        hex::decode_to_slice(&text, &mut out).map_err(D::Error::custom)?;
        Ok(out)
    }
}
