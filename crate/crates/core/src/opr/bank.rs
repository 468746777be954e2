use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::AuctionError;
use crate::token::{checked_sum, TokenAmount, TokenError};

/// Available and locked balances, with running mint and burn totals.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Bank {
    available: BTreeMap<String, TokenAmount>,
    locked: BTreeMap<String, TokenAmount>,
    funded: TokenAmount,
    minted: TokenAmount,
    burned: TokenAmount,
}

fn add(map: &mut BTreeMap<String, TokenAmount>, account: &str, amount: TokenAmount) -> Result<(), TokenError> {
    let slot = map.entry(account.to_string()).or_default();
    *slot = slot.checked_add(amount)?;
    Ok(())
}

fn sub(map: &mut BTreeMap<String, TokenAmount>, account: &str, amount: TokenAmount) -> Result<(), TokenError> {
    let slot = map.entry(account.to_string()).or_default();
    *slot = slot.checked_sub(amount)?;
    Ok(())
}

impl Bank {
    pub fn new() -> Self {
        Self::default()
    }

    /// Initial allocation, outside any round.
    pub fn fund(&mut self, account: &str, amount: TokenAmount) -> Result<(), AuctionError> {
        let funded = self.funded.checked_add(amount)?;
        add(&mut self.available, account, amount)?;
        self.funded = funded;
        Ok(())
    }

    pub fn available(&self, account: &str) -> TokenAmount {
        self.available.get(account).copied().unwrap_or_default()
    }

    pub fn locked(&self, account: &str) -> TokenAmount {
        self.locked.get(account).copied().unwrap_or_default()
    }

    pub fn balance(&self, account: &str) -> TokenAmount {
        self.available(account).checked_add(self.locked(account)).expect("balance within range")
    }

    pub fn accounts(&self) -> impl Iterator<Item = &str> {
        let mut names: Vec<&str> = self.available.keys().chain(self.locked.keys()).map(String::as_str).collect();
        names.sort_unstable();
        names.dedup();
        names.into_iter()
    }

    pub fn funded(&self) -> TokenAmount {
        self.funded
    }

    pub fn minted(&self) -> TokenAmount {
        self.minted
    }

    pub fn burned(&self) -> TokenAmount {
        self.burned
    }

    pub fn supply(&self) -> Result<TokenAmount, TokenError> {
        checked_sum(self.available.values().chain(self.locked.values()).copied())
    }

    pub fn lock(&mut self, account: &str, amount: TokenAmount) -> Result<(), AuctionError> {
        let available = self.available(account);
        if available < amount {
            return Err(AuctionError::InsufficientBalance { account: account.to_string(), available, needed: amount });
        }
        sub(&mut self.available, account, amount)?;
        add(&mut self.locked, account, amount)?;
        Ok(())
    }

    pub(crate) fn unlock(&mut self, account: &str, amount: TokenAmount) -> Result<(), TokenError> {
        sub(&mut self.locked, account, amount)?;
        add(&mut self.available, account, amount)
    }

    /// Moves locked funds out of the account into a settlement pot.
    pub(crate) fn take_locked(&mut self, account: &str, amount: TokenAmount) -> Result<(), TokenError> {
        sub(&mut self.locked, account, amount)
    }

    /// Pays out of a settlement pot.
    pub(crate) fn credit(&mut self, account: &str, amount: TokenAmount) -> Result<(), TokenError> {
        add(&mut self.available, account, amount)
    }

    pub(crate) fn burn_locked(&mut self, account: &str, amount: TokenAmount) -> Result<(), TokenError> {
        sub(&mut self.locked, account, amount)?;
        self.burned = self.burned.checked_add(amount)?;
        Ok(())
    }

    pub(crate) fn mint(&mut self, account: &str, amount: TokenAmount) -> Result<(), TokenError> {
        add(&mut self.available, account, amount)?;
        self.minted = self.minted.checked_add(amount)?;
        Ok(())
    }
}
