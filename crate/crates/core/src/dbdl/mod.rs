//! DBDL, the DApp Behavior Description Language: test cases made of contract
//! references, funded accounts, pre-state assignments, front-end events
//! (abstracted to contract calls) and expectations.
//!
//! ```text
//! testcase "sell" {
//!     contract SnailThrone from "snailthrone.msol"
//!     account alice { balance: 1 ether }
//!     prestate {
//!         SnailThrone.hatcherySnail[alice] = 100
//!     }
//!     events {
//!         call SnailThrone.sellSnails(60) from alice
//!     }
//!     expect {
//!         SnailThrone.hatcherySnail[alice] == 40
//!     }
//! }
//! ```

mod ast;
mod parser;
mod printer;
mod resolve;

pub use ast::*;
pub use resolve::{
    resolve_case, validate, BoundContract, Diagnostic, DiagnosticKind, ResolvedCase, ResolvedEvent,
    ResolvedExpectation, ResolvedParam,
};

use thiserror::Error;

use crate::word::U256;

pub const WEI_PER_ETHER: U256 = U256::new(1_000_000_000_000_000_000);

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum DbdlError {
    #[error("{line}:{col}: syntax error: expected {expected}, found {found}")]
    Syntax {
        line: usize,
        col: usize,
        expected: String,
        found: String,
    },
    #[error("{line}:{col}: duplicate test case {name:?}")]
    DuplicateCase {
        name: String,
        line: usize,
        col: usize,
    },
    #[error("{line}:{col}: unknown alias `{alias}`")]
    UnknownAlias {
        alias: String,
        line: usize,
        col: usize,
    },
}

impl DbdlError {
    pub fn position(&self) -> (usize, usize) {
        match self {
            DbdlError::Syntax { line, col, .. }
            | DbdlError::DuplicateCase { line, col, .. }
            | DbdlError::UnknownAlias { line, col, .. } => (*line, *col),
        }
    }
}

pub fn parse_dbdl(text: &str) -> Result<TestSuite, Vec<DbdlError>> {
    parser::parse(text)
}

/// Canonical text; `parse_dbdl(&format_dbdl(s))` equals `s`.
pub fn format_dbdl(suite: &TestSuite) -> String {
    printer::format_suite(suite)
}

/// Largest exact unit: `n ether` when divisible by 10^18, else `n wei`.
pub fn format_amount(wei: U256) -> String {
    if wei != U256::ZERO && wei % WEI_PER_ETHER == U256::ZERO {
        format!("{} ether", wei / WEI_PER_ETHER)
    } else {
        format!("{wei} wei")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minisol::parse_source;
    use crate::word::Address;

    const MINIMAL: &str = r#"testcase "t" { contract C from "c.msol" account a { balance: 1 ether } events { call C.f() from a } }"#;

    #[test]
    fn minimal_case() {
        let suite = parse_dbdl(MINIMAL).unwrap();
        let case = &suite.cases[0];
        assert_eq!(case.name, "t");
        assert_eq!(case.contracts.len(), 1);
        assert_eq!(case.accounts[0].balance, WEI_PER_ETHER);
        assert_eq!(case.events.len(), 1);
    }

    #[test]
    fn event_with_value() {
        let text = r#"testcase "t" { contract C from "c" account a { balance: 2 ether }
            events { call C.buy(3) from a value 1 ether } }"#;
        let e = &parse_dbdl(text).unwrap().cases[0].events[0];
        assert_eq!(
            e,
            &FrontendEvent {
                contract: "C".into(),
                function: "buy".into(),
                args: vec![Literal::Number(U256::new(3))],
                sender: "a".into(),
                value: WEI_PER_ETHER,
            }
        );
    }

    #[test]
    fn prestate_mapping_keyed_by_alias() {
        let text = r#"testcase "t" { contract C from "c" account a { balance: 0 wei }
            prestate { C.hatcherySnail[a] = 100 } events { call C.f() from a } }"#;
        let p = &parse_dbdl(text).unwrap().cases[0].prestate[0];
        assert_eq!(
            p.path,
            PathExpr::new("C", "hatcherySnail").with_key(Literal::Alias("a".into()))
        );
        assert_eq!(p.value, Literal::Number(U256::new(100)));

        let unit = parse_source(
            "contract C { mapping(address => uint256) hatcherySnail; function f() { } }",
        )
        .unwrap();
        let suite = parse_dbdl(text).unwrap();
        let resolved = resolve_case(&suite.cases[0], &unit.contracts).unwrap();
        assert_eq!(
            resolved.prestate[0].path.accessors,
            vec![crate::layout::Accessor::Key(
                Address::for_alias("a").to_word()
            )]
        );
        assert_eq!(resolved.prestate[0].value, U256::new(100));
    }

    #[test]
    fn empty_suite_formats_empty() {
        assert_eq!(format_dbdl(&TestSuite::default()), "");
        assert_eq!(parse_dbdl("").unwrap(), TestSuite::default());
        assert_eq!(
            parse_dbdl("# only a comment\n").unwrap(),
            TestSuite::default()
        );
    }

    #[test]
    fn amounts_canonicalize() {
        assert_eq!(format_amount(WEI_PER_ETHER), "1 ether");
        assert_eq!(
            format_amount(U256::new(1_500_000_000_000_000_000)),
            "1500000000000000000 wei"
        );
        assert_eq!(format_amount(U256::ZERO), "0 wei");
        let text = r#"testcase "t" { contract C from "c" account a { balance: 1000000000000000000 wei } events { call C.f() from a value 0 wei } }"#;
        let printed = format_dbdl(&parse_dbdl(text).unwrap());
        assert!(printed.contains("balance: 1 ether"));
        assert!(!printed.contains("value"));
    }

    #[test]
    fn ether_conversion_is_exact() {
        let text = r#"testcase "t" { account a { balance: 123456789 ether } events { } }"#;
        let a = &parse_dbdl(text).unwrap().cases[0].accounts[0];
        assert_eq!(a.balance, U256::new(123_456_789) * WEI_PER_ETHER);
        let huge = format!(
            r#"testcase "t" {{ account a {{ balance: {} ether }} events {{ }} }}"#,
            U256::MAX
        );
        assert!(parse_dbdl(&huge).is_err());
    }

    #[test]
    fn round_trip_full_case() {
        let text = r#"
            # comment
            testcase "full \"quoted\"" {
                contract C from "dir/c.msol"
                account a { balance: 5 ether }
                account b { balance: 7 wei }
                prestate {
                    C.x = 7
                    C.m[a][3] = true
                    C.arr.length = 2
                    C.owner = 0x00000000000000000000000000000000000000ff
                }
                events {
                    call C.f(1, a, true) from b value 3 wei
                    call C.g() from a
                }
                expect {
                    C.x >= 0x10
                    C.owner != b
                }
            }
            testcase "second" { contract C from "c" account a { balance: 0 wei } events { call C.g() from a } }
        "#;
        let suite = parse_dbdl(text).unwrap();
        let printed = format_dbdl(&suite);
        assert_eq!(parse_dbdl(&printed).unwrap(), suite);
        assert_eq!(format_dbdl(&parse_dbdl(&printed).unwrap()), printed);
        assert_eq!(
            suite.cases[0].prestate[3].value,
            Literal::Address(Address::from_word(U256::new(255)).unwrap())
        );
    }

    #[test]
    fn parse_reports_unknown_aliases_with_position() {
        let text =
            "testcase \"t\" {\n  account a { balance: 1 wei }\n  events { call C.f() from b }\n}";
        let errs = parse_dbdl(text).unwrap_err();
        assert_eq!(
            errs,
            vec![
                DbdlError::UnknownAlias {
                    alias: "C".into(),
                    line: 3,
                    col: 17
                },
                DbdlError::UnknownAlias {
                    alias: "b".into(),
                    line: 3,
                    col: 28
                },
            ]
        );
    }

    #[test]
    fn parse_errors() {
        let errs = parse_dbdl(r#"testcase "t" { events { call C.f( from a } }"#).unwrap_err();
        assert!(matches!(errs[0], DbdlError::Syntax { .. }));
        let dup = format!("{MINIMAL}\n{MINIMAL}");
        let errs = parse_dbdl(&dup).unwrap_err();
        assert!(matches!(errs[0], DbdlError::DuplicateCase { line: 2, .. }));
    }

    fn contracts() -> Vec<crate::minisol::ContractDecl> {
        parse_source(
            "contract C {
                uint256 x; uint8 small; bool flag; address owner;
                mapping(address => uint256) bal; uint16[3] fixedArr; uint256[] dyn;
                function f() { x += 1; }
                function buy(uint8 n) payable { small = n; }
                function give(address to, bool b) { owner = to; flag = b; }
            }",
        )
        .unwrap()
        .contracts
    }

    fn diag_kinds(body: &str) -> Vec<DiagnosticKind> {
        let text = format!(
            r#"testcase "t" {{ contract C from "c" account a {{ balance: 1 ether }} {body} }}"#
        );
        let suite = parse_dbdl(&text).unwrap();
        validate(&suite, &contracts())
            .into_iter()
            .map(|d| d.kind)
            .collect()
    }

    #[test]
    fn validate_accepts_well_formed() {
        assert!(diag_kinds(
            "prestate { C.x = 1 C.bal[a] = 5 C.fixedArr[2] = 9 C.dyn.length = 4 C.flag = true C.owner = a }
             events { call C.buy(3) from a value 1 wei call C.give(C, false) from a }
             expect { C.small == 3 }"
        )
        .is_empty());
    }

    #[test]
    fn validate_diagnostics() {
        use DiagnosticKind::*;
        assert_eq!(
            diag_kinds("events { call C.nope() from a }"),
            vec![UnknownFunction]
        );
        assert_eq!(
            diag_kinds("events { call C.f() from a value 1 wei }"),
            vec![NonPayableValue]
        );
        assert_eq!(
            diag_kinds("events { call C.buy() from a }"),
            vec![ArityMismatch]
        );
        assert_eq!(
            diag_kinds("events { call C.buy(256) from a }"),
            vec![ValueOverflow]
        );
        assert_eq!(
            diag_kinds("events { call C.buy(true) from a }"),
            vec![ValueKindMismatch]
        );
        assert_eq!(diag_kinds("events { }"), vec![NoEvents]);
        assert_eq!(
            diag_kinds("prestate { C.missing = 1 } events { call C.f() from a }"),
            vec![UnknownVariable]
        );
        assert_eq!(
            diag_kinds("prestate { C.fixedArr[3] = 1 } events { call C.f() from a }"),
            vec![PathTypeMismatch]
        );
        assert_eq!(
            diag_kinds("prestate { C.x[1] = 1 } events { call C.f() from a }"),
            vec![PathTypeMismatch]
        );
        assert_eq!(
            diag_kinds("prestate { C.bal = 1 } events { call C.f() from a }"),
            vec![PathTypeMismatch]
        );
        assert_eq!(
            diag_kinds("prestate { C.flag = 2 } events { call C.f() from a }"),
            vec![ValueKindMismatch]
        );
        assert_eq!(
            diag_kinds("prestate { C.small = 300 } events { call C.f() from a }"),
            vec![ValueOverflow]
        );
    }

    #[test]
    fn validate_unknown_contract() {
        let suite = parse_dbdl(
            r#"testcase "t" { contract D from "d" account a { balance: 1 wei } events { call D.f() from a } }"#,
        )
        .unwrap();
        let kinds: Vec<_> = validate(&suite, &contracts())
            .into_iter()
            .map(|d| d.kind)
            .collect();
        assert_eq!(kinds[0], DiagnosticKind::UnknownContract);
    }
}
