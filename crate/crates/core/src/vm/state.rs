use std::collections::BTreeMap;

use super::VmError;
use crate::word::{Address, U256};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct StateData {
    accounts: BTreeMap<Address, U256>,
    // contract alias -> slot -> word; zero words are never stored
    storage: BTreeMap<String, BTreeMap<U256, U256>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SnapshotId(u64);

/// Account balances plus slot-keyed contract storage.
#[derive(Clone, Debug, Default)]
pub struct WorldState {
    data: StateData,
    snapshots: BTreeMap<u64, StateData>,
    next_snapshot: u64,
}

/// Equality covers balances and storage; retained snapshots are ignored.
impl PartialEq for WorldState {
    fn eq(&self, other: &Self) -> bool {
        self.data == other.data
    }
}

impl Eq for WorldState {}

impl WorldState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn balance(&self, addr: &Address) -> U256 {
        self.data.accounts.get(addr).copied().unwrap_or(U256::ZERO)
    }

    pub fn has_account(&self, addr: &Address) -> bool {
        self.data.accounts.contains_key(addr)
    }

    pub fn set_balance(&mut self, addr: Address, balance: U256) {
        self.data.accounts.insert(addr, balance);
    }

    pub fn accounts(&self) -> impl Iterator<Item = (&Address, &U256)> {
        self.data.accounts.iter()
    }

    /// Sum of all balances, `None` if it does not fit 256 bits.
    pub fn total_wei(&self) -> Option<U256> {
        self.data
            .accounts
            .values()
            .try_fold(U256::ZERO, |acc, b| acc.checked_add(*b))
    }

    /// Moves wei between accounts; the caller checks sufficiency.
    pub(crate) fn transfer(&mut self, from: Address, to: Address, amount: U256) {
        if amount == U256::ZERO || from == to {
            self.data.accounts.entry(to).or_insert(U256::ZERO);
            return;
        }
        let src = self.data.accounts.entry(from).or_insert(U256::ZERO);
        *src -= amount;
        *self.data.accounts.entry(to).or_insert(U256::ZERO) += amount;
    }

    pub fn storage_word(&self, contract: &str, slot: U256) -> U256 {
        self.data
            .storage
            .get(contract)
            .and_then(|s| s.get(&slot))
            .copied()
            .unwrap_or(U256::ZERO)
    }

    pub fn set_storage_word(&mut self, contract: &str, slot: U256, word: U256) {
        let map = self.data.storage.entry(contract.to_string()).or_default();
        if word == U256::ZERO {
            map.remove(&slot);
        } else {
            map.insert(slot, word);
        }
    }

    /// Non-zero storage words of one contract.
    pub fn storage(&self, contract: &str) -> BTreeMap<U256, U256> {
        self.data.storage.get(contract).cloned().unwrap_or_default()
    }

    pub fn snapshot(&mut self) -> SnapshotId {
        let id = self.next_snapshot;
        self.next_snapshot += 1;
        self.snapshots.insert(id, self.data.clone());
        SnapshotId(id)
    }

    /// Restores the snapshot. The token stays valid, so rolling back twice is idempotent.
    pub fn rollback(&mut self, id: SnapshotId) -> Result<(), VmError> {
        let saved = self.snapshots.get(&id.0).ok_or(VmError::UnknownToken)?;
        self.data = saved.clone();
        Ok(())
    }

    /// Drops a snapshot token.
    pub fn discard(&mut self, id: SnapshotId) -> Result<(), VmError> {
        self.snapshots
            .remove(&id.0)
            .map(|_| ())
            .ok_or(VmError::UnknownToken)
    }

    pub(crate) fn balances_at(&self, id: SnapshotId) -> Option<&BTreeMap<Address, U256>> {
        self.snapshots.get(&id.0).map(|d| &d.accounts)
    }
}
