//! Runs DBDL suites end to end: resolve, transform, deploy, execute, decode.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::dbdl::{
    resolve_case, validate, BoundContract, Diagnostic, ResolvedCase, ResolvedParam, TestSuite,
};
use crate::layout::{
    overlapping_locations, resolve_location, AddressRegistry, LayoutError, Leaf, SlotAddress,
    StorageLayout, VariablePath,
};
use crate::minisol::{ContractDecl, ElemType, SourceUnit};
use crate::vm::{CallContext, CallStatus, MiniVm, ScvmBackend, TraceRecord, VmError, WorldState};
use crate::word::{extract, fits_width, serialize_hex, to_hex, U256};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunOptions {
    pub step_limit: u64,
    /// Worker threads for cases; 1 runs sequentially.
    pub jobs: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            step_limit: crate::vm::DEFAULT_STEP_LIMIT,
            jobs: 1,
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("suite failed validation with {} diagnostic(s)", .0.len())]
    Invalid(Vec<Diagnostic>),
    #[error("contract `{0}` is defined in more than one source")]
    DuplicateContract(String),
    #[error("case {case:?}: cannot deploy pre-state: {source}")]
    Deploy { case: String, source: VmError },
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventResult {
    pub text: String,
    pub status: CallStatus,
}

impl Serialize for EventResult {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut m = s.serialize_map(None)?;
        m.serialize_entry("call", &self.text)?;
        m.serialize_entry("status", self.status.label())?;
        match &self.status {
            CallStatus::Revert(reason) => m.serialize_entry("reason", reason)?,
            CallStatus::Success(Some(w)) => m.serialize_entry("return", &to_hex(*w))?,
            _ => {}
        }
        m.end()
    }
}

/// One storage write, named.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DecodedTrace {
    #[serde(rename = "event")]
    pub event_index: usize,
    pub path: VariablePath,
    #[serde(serialize_with = "serialize_hex")]
    pub old: U256,
    #[serde(serialize_with = "serialize_hex")]
    pub new: U256,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct VariableValue {
    pub path: VariablePath,
    #[serde(rename = "type")]
    pub ty: ElemType,
    #[serde(serialize_with = "serialize_hex")]
    pub initial: U256,
    #[serde(rename = "final", serialize_with = "serialize_hex")]
    pub final_value: U256,
}

impl VariableValue {
    pub fn is_signed(&self) -> bool {
        self.ty.is_signed()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ExpectationResult {
    #[serde(rename = "expr")]
    pub text: String,
    pub pass: bool,
    #[serde(serialize_with = "serialize_hex")]
    pub actual: U256,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RunResult {
    #[serde(rename = "case")]
    pub case_name: String,
    pub events: Vec<EventResult>,
    /// Sorted by path text.
    pub variables: Vec<VariableValue>,
    pub traces: Vec<DecodedTrace>,
    pub expectations: Vec<ExpectationResult>,
    pub unknown_writes: Vec<TraceRecord>,
}

impl RunResult {
    pub fn all_passed(&self) -> bool {
        self.expectations.iter().all(|e| e.pass)
    }

    pub fn variable(&self, path_text: &str) -> Option<&VariableValue> {
        self.variables
            .iter()
            .find(|v| v.path.to_string() == path_text)
    }
}

/// Resolves every pre-state parameter to its slot and byte range.
pub fn transform_variables(
    layout: &StorageLayout,
    params: &[ResolvedParam],
    registry: &mut AddressRegistry,
) -> Result<Vec<(SlotAddress, U256)>, VmError> {
    params
        .iter()
        .filter(|p| p.path.contract == layout.contract)
        .map(|p| {
            let loc = resolve_location(layout, &p.path, registry)?;
            if !fits_width(p.value, loc.addr.width) {
                return Err(VmError::ValueOverflow(p.path.clone()));
            }
            Ok((loc.addr, p.value))
        })
        .collect()
}

/// Names each write; sub-word writes report only the decoded variable's bytes.
pub fn decode_traces(
    layout: &StorageLayout,
    registry: &AddressRegistry,
    traces: &[TraceRecord],
) -> (Vec<DecodedTrace>, Vec<TraceRecord>) {
    let mut rows = Vec::new();
    let mut unknown = Vec::new();
    for t in traces {
        let mut found = false;
        for loc in overlapping_locations(layout, registry, t.slot, (t.offset, t.width)) {
            let old = extract(t.old_word, loc.addr.offset, loc.addr.width);
            let new = extract(t.new_word, loc.addr.offset, loc.addr.width);
            let exact = loc.addr.offset == t.offset && loc.addr.width == t.width;
            if exact || old != new {
                found = true;
                rows.push(DecodedTrace {
                    event_index: t.event_index,
                    path: loc.path,
                    old,
                    new,
                });
            }
        }
        if !found {
            unknown.push(t.clone());
        }
    }
    (rows, unknown)
}

fn read_path(
    state: &WorldState,
    contract: &BoundContract,
    path: &VariablePath,
    registry: &mut AddressRegistry,
) -> Result<(U256, Leaf), LayoutError> {
    let loc = resolve_location(&contract.layout, path, registry)?;
    let word = state.storage_word(&contract.alias, loc.addr.slot);
    Ok((extract(word, loc.addr.offset, loc.addr.width), loc.leaf))
}

/// Runs one resolved case against a backend.
pub fn run_case(
    backend: &dyn ScvmBackend,
    case: &ResolvedCase,
    options: &RunOptions,
) -> Result<RunResult, RunError> {
    let deploy_err = |source| RunError::Deploy {
        case: case.name.clone(),
        source,
    };
    let mut registry = AddressRegistry::new();
    for c in &case.contracts {
        transform_variables(&c.layout, &case.prestate, &mut registry).map_err(deploy_err)?;
    }
    let accounts: Vec<_> = case.accounts.iter().map(|(_, a, b)| (*a, *b)).collect();
    let mut state = backend
        .deploy_prestate(&case.contracts, &accounts, &case.prestate, &mut registry)
        .map_err(deploy_err)?;

    // Paths watched from the start: everything named in prestate or expectations.
    let mut watched: BTreeSet<VariablePath> = case
        .prestate
        .iter()
        .map(|p| p.path.clone())
        .chain(case.expectations.iter().map(|e| e.path.clone()))
        .collect();
    let initial_state = state.clone();

    let mut events = Vec::with_capacity(case.events.len());
    let mut traces = Vec::new();
    for (i, e) in case.events.iter().enumerate() {
        let contract = case.contract(&e.contract).expect("validated alias");
        let ctx = CallContext {
            sender: e.sender,
            value: e.value,
            args: e.args.clone(),
        };
        let status = match backend.execute_call(
            &mut state,
            contract,
            &e.function,
            &ctx,
            options.step_limit,
            i,
            &mut registry,
        ) {
            Ok(out) => {
                traces.extend(out.traces);
                out.status
            }
            Err(err) => CallStatus::Revert(err.to_string()),
        };
        events.push(EventResult {
            text: e.text.clone(),
            status,
        });
    }

    let mut decoded = Vec::new();
    let mut unknown_writes = Vec::new();
    for c in &case.contracts {
        let own: Vec<TraceRecord> = traces
            .iter()
            .filter(|t| t.contract == c.alias)
            .cloned()
            .collect();
        let (rows, unknown) = decode_traces(&c.layout, &registry, &own);
        decoded.extend(rows);
        unknown_writes.extend(unknown);
    }
    // Restore global write order across contracts.
    decoded.sort_by_key(|d| d.event_index);
    unknown_writes.sort_by_key(|t| (t.event_index, t.step_index));
    watched.extend(decoded.iter().map(|d| d.path.clone()));

    let mut values: BTreeMap<String, VariableValue> = BTreeMap::new();
    for path in &watched {
        let contract = case.contract(&path.contract).expect("validated alias");
        let (Ok((initial, leaf)), Ok((final_value, _))) = (
            read_path(&initial_state, contract, path, &mut registry),
            read_path(&state, contract, path, &mut registry),
        ) else {
            continue;
        };
        values.insert(
            path.to_string(),
            VariableValue {
                path: path.clone(),
                ty: leaf.elem_type(),
                initial,
                final_value,
            },
        );
    }

    let expectations = case
        .expectations
        .iter()
        .map(|e| {
            let actual = values
                .get(&e.path.to_string())
                .map(|v| v.final_value)
                .unwrap_or(U256::ZERO);
            let pass = if e.leaf.elem_type().is_signed() {
                e.cmp.holds(actual.as_i256(), e.expected.as_i256())
            } else {
                e.cmp.holds(actual, e.expected)
            };
            ExpectationResult {
                text: e.text.clone(),
                pass,
                actual,
            }
        })
        .collect();

    Ok(RunResult {
        case_name: case.name.clone(),
        events,
        variables: values.into_values().collect(),
        traces: decoded,
        expectations,
        unknown_writes,
    })
}

fn collect_contracts(sources: &[SourceUnit]) -> Result<Vec<ContractDecl>, RunError> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for c in sources.iter().flat_map(|s| &s.contracts) {
        if !seen.insert(c.name.clone()) {
            return Err(RunError::DuplicateContract(c.name.clone()));
        }
        out.push(c.clone());
    }
    Ok(out)
}

/// Runs a suite on the reference VM. Results follow suite order.
pub fn run_suite(
    suite: &TestSuite,
    sources: &[SourceUnit],
    options: &RunOptions,
) -> Result<Vec<RunResult>, RunError> {
    run_suite_with(&MiniVm, suite, sources, options)
}

pub fn run_suite_with(
    backend: &dyn ScvmBackend,
    suite: &TestSuite,
    sources: &[SourceUnit],
    options: &RunOptions,
) -> Result<Vec<RunResult>, RunError> {
    let contracts = collect_contracts(sources)?;
    let diags = validate(suite, &contracts);
    if !diags.is_empty() {
        return Err(RunError::Invalid(diags));
    }
    let cases = suite
        .cases
        .iter()
        .map(|c| resolve_case(c, &contracts).map_err(RunError::Invalid))
        .collect::<Result<Vec<_>, _>>()?;
    execute_cases(backend, &cases, options)
}

#[cfg(feature = "parallel")]
fn execute_cases(
    backend: &dyn ScvmBackend,
    cases: &[ResolvedCase],
    options: &RunOptions,
) -> Result<Vec<RunResult>, RunError> {
    use rayon::prelude::*;
    if options.jobs <= 1 || cases.len() <= 1 {
        return cases
            .iter()
            .map(|c| run_case(backend, c, options))
            .collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.jobs)
        .build()
        .map_err(|e| RunError::Pool(e.to_string()))?;
    pool.install(|| {
        cases
            .par_iter()
            .map(|c| run_case(backend, c, options))
            .collect()
    })
}

#[cfg(not(feature = "parallel"))]
fn execute_cases(
    backend: &dyn ScvmBackend,
    cases: &[ResolvedCase],
    options: &RunOptions,
) -> Result<Vec<RunResult>, RunError> {
    cases
        .iter()
        .map(|c| run_case(backend, c, options))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dbdl::parse_dbdl;
    use crate::minisol::parse_source;

    const COUNTER: &str = "contract Counter { uint256 x; uint8 lo; uint8 hi; \
        function inc() { x += 1; } \
        function bad() { x += 10; require(false, \"no\"); } \
        function both() { lo = 1; hi = 2; } }";

    fn run(src: &str, dbdl: &str) -> Vec<RunResult> {
        let sources = vec![parse_source(src).unwrap()];
        run_suite(&parse_dbdl(dbdl).unwrap(), &sources, &RunOptions::default()).unwrap()
    }

    #[test]
    fn two_increments() {
        let r = &run(
            COUNTER,
            r#"testcase "t" { contract Counter from "c" account a { balance: 0 wei }
                prestate { Counter.x = 0 } events { call Counter.inc() from a call Counter.inc() from a }
                expect { Counter.x == 2 } }"#,
        )[0];
        assert_eq!(r.traces.len(), 2);
        assert_eq!(r.variable("Counter.x").unwrap().final_value, U256::new(2));
        assert!(r.all_passed());
    }

    #[test]
    fn revert_does_not_stop_later_events() {
        let r = &run(
            COUNTER,
            r#"testcase "t" { contract Counter from "c" account a { balance: 0 wei }
                events { call Counter.inc() from a call Counter.bad() from a call Counter.inc() from a }
                expect { Counter.x == 3 } }"#,
        )[0];
        let labels: Vec<_> = r.events.iter().map(|e| e.status.label()).collect();
        assert_eq!(labels, ["success", "revert", "success"]);
        assert_eq!(r.variable("Counter.x").unwrap().final_value, U256::new(2));
        assert!(!r.all_passed());
        assert_eq!(r.expectations[0].actual, U256::new(2));
    }

    #[test]
    fn packed_writes_decode_per_variable() {
        let r = &run(
            COUNTER,
            r#"testcase "t" { contract Counter from "c" account a { balance: 0 wei }
                events { call Counter.both() from a } }"#,
        )[0];
        let names: Vec<_> = r.traces.iter().map(|t| t.path.to_string()).collect();
        assert_eq!(names, ["Counter.lo", "Counter.hi"]);
        assert!(r.unknown_writes.is_empty());
    }

    #[test]
    fn transform_packs_into_one_slot() {
        let unit = parse_source("contract P { uint128 a; uint128 b; }").unwrap();
        let layout = crate::layout::compute_layout(&unit.contracts[0]).unwrap();
        let params = vec![
            ResolvedParam {
                path: VariablePath::new("P", "a"),
                leaf: Leaf::Value(ElemType::Uint(128)),
                value: U256::new(5),
            },
            ResolvedParam {
                path: VariablePath::new("P", "b"),
                leaf: Leaf::Value(ElemType::Uint(128)),
                value: U256::new(3),
            },
        ];
        let mut reg = AddressRegistry::new();
        let pairs = transform_variables(&layout, &params, &mut reg).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].0.slot, pairs[1].0.slot);
        assert!(!pairs[0].0.overlaps(pairs[1].0.offset, pairs[1].0.width));
        assert!(transform_variables(&layout, &[], &mut reg)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn unknown_slot_write_is_reported() {
        let unit = parse_source("contract P { uint256 a; }").unwrap();
        let layout = crate::layout::compute_layout(&unit.contracts[0]).unwrap();
        let t = TraceRecord {
            event_index: 0,
            step_index: 0,
            contract: "P".into(),
            slot: U256::new(99),
            offset: 0,
            width: 32,
            old_word: U256::ZERO,
            new_word: U256::ONE,
        };
        let (rows, unknown) = decode_traces(&layout, &AddressRegistry::new(), &[t]);
        assert!(rows.is_empty());
        assert_eq!(unknown.len(), 1);
    }

    #[test]
    fn invalid_suite_is_refused() {
        let sources = vec![parse_source(COUNTER).unwrap()];
        let suite = parse_dbdl(
            r#"testcase "t" { contract Counter from "c" account a { balance: 0 wei }
                events { call Counter.nope() from a } }"#,
        )
        .unwrap();
        let err = run_suite(&suite, &sources, &RunOptions::default()).unwrap_err();
        assert!(matches!(err, RunError::Invalid(d) if !d.is_empty()));
    }
}
