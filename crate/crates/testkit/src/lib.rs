//! Test support shared by the workspace: fixtures, seeded generators and the
//! path-keyed reference interpreter used as a differential oracle.

pub mod gen;
pub mod golden;
pub mod oracle;

pub use rand;

use std::path::PathBuf;

use kaya_core::dbdl::TestSuite;
use kaya_core::layout::{Accessor, VariablePath};
use kaya_core::minisol::ContractDecl;
use kaya_core::runner::RunResult;
use kaya_core::vm::CallStatus;
use num_bigint::BigUint;
use oracle::{big, OAcc, OPath, OStatus, OracleRun};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn fixture(name: &str) -> String {
    let path = fixtures_dir().join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

pub fn to_opath(p: &VariablePath) -> OPath {
    OPath {
        contract: p.contract.clone(),
        root: p.root.clone(),
        accs: p
            .accessors
            .iter()
            .map(|a| match a {
                Accessor::Key(k) => OAcc::Key(big(*k)),
                Accessor::Index(i) => OAcc::Index(big(*i)),
                Accessor::Length => OAcc::Length,
            })
            .collect(),
    }
}

/// Checks a pipeline result against the reference run of the same case.
pub fn compare(result: &RunResult, reference: &OracleRun) -> Result<(), String> {
    let case = &result.case_name;
    if result.events.len() != reference.statuses.len() {
        return Err(format!("{case}: event count differs"));
    }
    for (i, (got, want)) in result.events.iter().zip(&reference.statuses).enumerate() {
        let same = match (&got.status, want) {
            (CallStatus::Success(a), OStatus::Success(b)) => a.map(big) == *b,
            (g, w) => g.label() == w.label(),
        };
        if !same {
            return Err(format!(
                "{case}: event {i} `{}`: pipeline {:?}, reference {:?}",
                got.text, got.status, want
            ));
        }
    }
    let got: Vec<OPath> = result.variables.iter().map(|v| to_opath(&v.path)).collect();
    let got_set: std::collections::BTreeSet<_> = got.iter().cloned().collect();
    if got_set != reference.watched {
        let extra: Vec<_> = got_set.difference(&reference.watched).collect();
        let missing: Vec<_> = reference.watched.difference(&got_set).collect();
        return Err(format!(
            "{case}: path sets differ; extra {extra:?}, missing {missing:?}"
        ));
    }
    for (v, p) in result.variables.iter().zip(&got) {
        let (gi, gf): (BigUint, BigUint) = (big(v.initial), big(v.final_value));
        if gi != reference.initial_value(p) || gf != reference.final_value(p) {
            return Err(format!(
                "{case}: {}: pipeline {gi}->{gf}, reference {}->{}",
                v.path,
                reference.initial_value(p),
                reference.final_value(p)
            ));
        }
    }
    Ok(())
}

/// Runs every case of `suite` through the reference interpreter.
pub fn reference_runs(
    suite: &TestSuite,
    contracts: &[ContractDecl],
    step_limit: u64,
) -> Vec<OracleRun> {
    suite
        .cases
        .iter()
        .map(|c| oracle::run_case(c, contracts, step_limit))
        .collect()
}

/// Whether every expectation of every case holds in the reference runs.
/// Comparisons on `int256` leaves are two's-complement signed.
pub fn reference_expectations_pass(
    suite: &TestSuite,
    contracts: &[ContractDecl],
    runs: &[OracleRun],
) -> bool {
    use kaya_core::layout::Leaf;
    use kaya_core::minisol::ElemType;
    use num_bigint::BigInt;
    let signed = |v: BigUint| -> BigInt {
        let half = BigUint::from(1u8) << 255u32;
        if v >= half {
            BigInt::from(v) - (BigInt::from(1u8) << 256u32)
        } else {
            BigInt::from(v)
        }
    };
    suite.cases.iter().zip(runs).all(|(case, run)| {
        let resolved = kaya_core::dbdl::resolve_case(case, contracts).expect("case validates");
        resolved.expectations.iter().all(|e| {
            let actual = run.final_value(&to_opath(&e.path));
            let expected = big(e.expected);
            if e.leaf == Leaf::Value(ElemType::Int256) {
                e.cmp.holds(signed(actual), signed(expected))
            } else {
                e.cmp.holds(actual, expected)
            }
        })
    })
}
