//! The pluggable contract VM. [`ScvmBackend`] is the contract any backend
//! satisfies; [`MiniVm`] is the reference interpreter for MiniSol.
//!
//! Semantics of the reference backend:
//! - call value moves sender → contract at entry; non-payable functions revert on value > 0
//! - arithmetic is checked 256-bit, stores into narrower locations revert when out of range
//! - `int256` is two's-complement; division truncates toward zero, remainder follows the dividend
//! - a revert or an exhausted step budget restores the call-entry state and drops its traces
//! - every storage write is traced with the full old/new slot words

mod interp;
mod state;

pub use state::{SnapshotId, WorldState};

use std::collections::BTreeMap;

use serde::ser::SerializeStruct;
use serde::Serialize;
use thiserror::Error;

use crate::dbdl::{BoundContract, ResolvedParam};
use crate::layout::{resolve_location, AddressRegistry, LayoutError, VariablePath};
use crate::word::{fits_width, insert, to_hex, Address, SignedWord, U256};

pub const DEFAULT_STEP_LIMIT: u64 = 1_000_000;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum VmError {
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("`{function}` takes {expected} arguments, {found} given")]
    ArityMismatch {
        function: String,
        expected: usize,
        found: usize,
    },
    #[error("argument `{param}`: {reason}")]
    BadArgument { param: String, reason: String },
    #[error("value does not fit the location of {0}")]
    ValueOverflow(VariablePath),
    #[error("unknown snapshot token")]
    UnknownToken,
    #[error("total balance exceeds 256 bits")]
    BalanceOverflow,
    #[error(transparent)]
    Layout(#[from] LayoutError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CallContext {
    pub sender: Address,
    pub value: U256,
    pub args: Vec<U256>,
}

/// One storage write. `step_index` is the ordinal of the write within its event.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceRecord {
    pub event_index: usize,
    pub step_index: usize,
    pub contract: String,
    pub slot: U256,
    pub offset: u8,
    pub width: u8,
    pub old_word: U256,
    pub new_word: U256,
}

impl Serialize for TraceRecord {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("TraceRecord", 8)?;
        st.serialize_field("event", &self.event_index)?;
        st.serialize_field("step", &self.step_index)?;
        st.serialize_field("contract", &self.contract)?;
        st.serialize_field("slot", &to_hex(self.slot))?;
        st.serialize_field("offset", &self.offset)?;
        st.serialize_field("width", &self.width)?;
        st.serialize_field("old", &to_hex(self.old_word))?;
        st.serialize_field("new", &to_hex(self.new_word))?;
        st.end()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CallStatus {
    Success(Option<U256>),
    Revert(String),
    StepLimitExceeded,
}

impl CallStatus {
    pub fn is_success(&self) -> bool {
        matches!(self, CallStatus::Success(_))
    }

    /// `success`, `revert` or `step_limit_exceeded`.
    pub fn label(&self) -> &'static str {
        match self {
            CallStatus::Success(_) => "success",
            CallStatus::Revert(_) => "revert",
            CallStatus::StepLimitExceeded => "step_limit_exceeded",
        }
    }
}

impl std::fmt::Display for CallStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CallStatus::Success(None) => write!(f, "success"),
            CallStatus::Success(Some(w)) => write!(f, "success -> {}", to_hex(*w)),
            CallStatus::Revert(reason) => write!(f, "revert: {reason}"),
            CallStatus::StepLimitExceeded => write!(f, "step limit exceeded"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExecutionOutcome {
    pub status: CallStatus,
    pub traces: Vec<TraceRecord>,
    pub balance_deltas: BTreeMap<Address, SignedWord>,
}

/// Anything that can host a test case: build a pre-state, run calls, and
/// restore state. Backends own no per-run state; the world state and the
/// address registry are passed in so each case can run in isolation.
pub trait ScvmBackend: Sync {
    fn deploy_prestate(
        &self,
        contracts: &[BoundContract],
        accounts: &[(Address, U256)],
        params: &[ResolvedParam],
        registry: &mut AddressRegistry,
    ) -> Result<WorldState, VmError>;

    #[allow(clippy::too_many_arguments)]
    fn execute_call(
        &self,
        state: &mut WorldState,
        contract: &BoundContract,
        function: &str,
        ctx: &CallContext,
        step_limit: u64,
        event_index: usize,
        registry: &mut AddressRegistry,
    ) -> Result<ExecutionOutcome, VmError>;

    fn snapshot(&self, state: &mut WorldState) -> SnapshotId {
        state.snapshot()
    }

    fn rollback(&self, state: &mut WorldState, token: SnapshotId) -> Result<(), VmError> {
        state.rollback(token)
    }
}

/// Reference interpreter for MiniSol.
#[derive(Clone, Copy, Debug, Default)]
pub struct MiniVm;

impl ScvmBackend for MiniVm {
    fn deploy_prestate(
        &self,
        contracts: &[BoundContract],
        accounts: &[(Address, U256)],
        params: &[ResolvedParam],
        registry: &mut AddressRegistry,
    ) -> Result<WorldState, VmError> {
        let mut state = WorldState::new();
        for c in contracts {
            state.set_balance(c.address, U256::ZERO);
        }
        for (addr, bal) in accounts {
            state.set_balance(*addr, *bal);
        }
        if state.total_wei().is_none() {
            return Err(VmError::BalanceOverflow);
        }
        for p in params {
            let contract = contracts
                .iter()
                .find(|c| c.alias == p.path.contract)
                .ok_or_else(|| LayoutError::UnknownVariable(p.path.to_string()))?;
            let loc = resolve_location(&contract.layout, &p.path, registry)?;
            if !fits_width(p.value, loc.addr.width) {
                return Err(VmError::ValueOverflow(p.path.clone()));
            }
            let old = state.storage_word(&contract.alias, loc.addr.slot);
            let new = insert(old, loc.addr.offset, loc.addr.width, p.value);
            state.set_storage_word(&contract.alias, loc.addr.slot, new);
        }
        Ok(state)
    }

    fn execute_call(
        &self,
        state: &mut WorldState,
        contract: &BoundContract,
        function: &str,
        ctx: &CallContext,
        step_limit: u64,
        event_index: usize,
        registry: &mut AddressRegistry,
    ) -> Result<ExecutionOutcome, VmError> {
        interp::execute(
            state,
            contract,
            function,
            ctx,
            step_limit,
            event_index,
            registry,
        )
    }
}
