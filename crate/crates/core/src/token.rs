//! Fixed-point token amounts.
//!
//! One token is `10^9` subunits. Amounts are stored in a `u128` but the
//! representable range is capped at `u64::MAX` subunits so that the product of
//! any two amounts fits in a `u128` and pro-rata splits stay exact.

use std::fmt;
use std::iter::Sum;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Subunits per whole token.
pub const SUBUNITS: u128 = 1_000_000_000;

/// Largest representable amount, in subunits.
pub const MAX_SUBUNITS: u128 = u64::MAX as u128;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TokenError {
    #[error("token amount overflow: {0} subunits exceeds the fixed-point range")]
    Overflow(u128),
    #[error("token amount underflow: {have} - {take} subunits")]
    Underflow { have: u128, take: u128 },
    #[error("invalid token amount {0:?}")]
    Parse(String),
}

/// Non-negative fixed-point amount with 9 fractional decimal digits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "u128", into = "u128")]
pub struct TokenAmount(u128);

impl TokenAmount {
    pub const ZERO: TokenAmount = TokenAmount(0);
    pub const MAX: TokenAmount = TokenAmount(MAX_SUBUNITS);

    pub fn from_subunits(subunits: u128) -> Result<Self, TokenError> {
        if subunits > MAX_SUBUNITS {
            return Err(TokenError::Overflow(subunits));
        }
        Ok(TokenAmount(subunits))
    }

    pub fn from_tokens(tokens: u64) -> Result<Self, TokenError> {
        Self::from_subunits(u128::from(tokens) * SUBUNITS)
    }

    /// Rounds a real token quantity to the nearest subunit. Negative and
    /// non-finite inputs are rejected.
    pub fn from_real(tokens: f64) -> Result<Self, TokenError> {
        if !tokens.is_finite() || tokens < 0.0 {
            return Err(TokenError::Parse(tokens.to_string()));
        }
        let scaled = (tokens * SUBUNITS as f64).round();
        if scaled >= MAX_SUBUNITS as f64 {
            return Err(TokenError::Overflow(scaled as u128));
        }
        Ok(TokenAmount(scaled as u128))
    }

    pub const fn subunits(self) -> u128 {
        self.0
    }

    pub fn to_real(self) -> f64 {
        self.0 as f64 / SUBUNITS as f64
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn checked_add(self, rhs: TokenAmount) -> Result<TokenAmount, TokenError> {
        Self::from_subunits(self.0 + rhs.0)
    }

    pub fn checked_sub(self, rhs: TokenAmount) -> Result<TokenAmount, TokenError> {
        self.0
            .checked_sub(rhs.0)
            .map(TokenAmount)
            .ok_or(TokenError::Underflow { have: self.0, take: rhs.0 })
    }

    pub fn saturating_sub(self, rhs: TokenAmount) -> TokenAmount {
        TokenAmount(self.0.saturating_sub(rhs.0))
    }

    /// `self * numerator / denominator`, rounded down. Panics if `denominator` is zero.
    pub fn mul_div_floor(self, numerator: u128, denominator: u128) -> TokenAmount {
        TokenAmount(self.0 * numerator / denominator)
    }

    /// Big-endian 16-byte encoding of the subunit count.
    pub fn to_be_bytes(self) -> [u8; 16] {
        self.0.to_be_bytes()
    }
}

impl TryFrom<u128> for TokenAmount {
    type Error = TokenError;

    fn try_from(value: u128) -> Result<Self, Self::Error> {
        TokenAmount::from_subunits(value)
    }
}

impl From<TokenAmount> for u128 {
    fn from(value: TokenAmount) -> Self {
        value.0
    }
}

impl fmt::Display for TokenAmount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let whole = self.0 / SUBUNITS;
        let frac = self.0 % SUBUNITS;
        if frac == 0 {
            write!(f, "{whole}")
        } else {
            let digits = format!("{frac:09}");
            write!(f, "{whole}.{}", digits.trim_end_matches('0'))
        }
    }
}

/// Parses decimal token notation (`"2"`, `"0.125"`), at most 9 fractional digits.
impl FromStr for TokenAmount {
    type Err = TokenError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || TokenError::Parse(s.to_string());
        let s = s.trim();
        let (whole, frac) = match s.split_once('.') {
            Some((w, f)) => (w, f),
            None => (s, ""),
        };
        if whole.is_empty() && frac.is_empty() {
            return Err(bad());
        }
        if frac.len() > 9
            || !whole.bytes().all(|b| b.is_ascii_digit())
            || !frac.bytes().all(|b| b.is_ascii_digit())
        {
            return Err(bad());
        }
        let whole: u128 = if whole.is_empty() { 0 } else { whole.parse().map_err(|_| bad())? };
        let frac: u128 = if frac.is_empty() {
            0
        } else {
            format!("{frac:0<9}").parse().map_err(|_| bad())?
        };
        let total = whole.checked_mul(SUBUNITS).and_then(|w| w.checked_add(frac)).ok_or_else(bad)?;
        TokenAmount::from_subunits(total)
    }
}

impl Sum for TokenAmount {
    /// Panics on overflow of the fixed-point range; use [`checked_sum`] where
    /// the inputs are not already bounded.
    fn sum<I: Iterator<Item = TokenAmount>>(iter: I) -> Self {
        checked_sum(iter).expect("token sum overflow")
    }
}

pub fn checked_sum<I: IntoIterator<Item = TokenAmount>>(iter: I) -> Result<TokenAmount, TokenError> {
    iter.into_iter().try_fold(TokenAmount::ZERO, TokenAmount::checked_add)
}

/// Splits `total` across `weights` in proportion, exactly.
///
/// Each share is `floor(total * w_i / W)`; the leftover subunits (fewer than
/// the number of positive weights) go one each to the largest fractional
/// remainders, ties to the lower index. The shares always sum to `total`
/// when `W > 0`; when `W == 0` every share is zero.
pub fn split_pro_rata(total: TokenAmount, weights: &[TokenAmount]) -> Vec<TokenAmount> {
    let denom: u128 = weights.iter().map(|w| w.0).sum();
    if denom == 0 {
        return vec![TokenAmount::ZERO; weights.len()];
    }
    let mut shares = Vec::with_capacity(weights.len());
    let mut remainders = Vec::with_capacity(weights.len());
    let mut assigned = 0u128;
    for (i, w) in weights.iter().enumerate() {
        let prod = total.0 * w.0;
        let share = prod / denom;
        assigned += share;
        shares.push(share);
        let rem = prod - share * denom;
        if rem > 0 {
            remainders.push((rem, i));
        }
    }
    let leftover = (total.0 - assigned) as usize;
    if leftover > 0 {
        // Largest remainder first, lower index on ties.
        let by_rank = |a: &(u128, usize), b: &(u128, usize)| b.0.cmp(&a.0).then(a.1.cmp(&b.1));
        if leftover < remainders.len() {
            remainders.select_nth_unstable_by(leftover - 1, by_rank);
        }
        for &(_, i) in &remainders[..leftover] {
            shares[i] += 1;
        }
    }
    shares.into_iter().map(TokenAmount).collect()
}
