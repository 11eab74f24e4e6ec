//! MiniSol: the Solidity subset whose state variables the framework analyzes.

mod ast;
mod parser;
mod printer;

pub use ast::*;
pub use printer::{format_expr, format_lvalue};

use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum SourceError {
    #[error("{line}:{col}: syntax error: expected {expected}, found {found}")]
    Syntax {
        line: usize,
        col: usize,
        expected: String,
        found: String,
    },
    #[error("{line}:{col}: duplicate name `{name}`")]
    DuplicateName {
        name: String,
        line: usize,
        col: usize,
    },
    #[error("{line}:{col}: unknown name `{name}`")]
    UnknownName {
        name: String,
        line: usize,
        col: usize,
    },
}

impl SourceError {
    pub fn position(&self) -> (usize, usize) {
        match self {
            SourceError::Syntax { line, col, .. }
            | SourceError::DuplicateName { line, col, .. }
            | SourceError::UnknownName { line, col, .. } => (*line, *col),
        }
    }
}

/// Parses MiniSol source. On failure every diagnostic carries a 1-based position.
pub fn parse_source(text: &str) -> Result<SourceUnit, Vec<SourceError>> {
    let contracts = parser::parse(text)?;
    Ok(SourceUnit {
        text: text.to_string(),
        contracts,
    })
}

/// State variables in declaration order.
pub fn extract_variables(contract: &ContractDecl) -> Vec<StateVarDecl> {
    contract.state_vars.clone()
}

/// Canonical pretty-print; reparsing yields a structurally equal unit.
pub fn format_source(unit: &SourceUnit) -> String {
    printer::format_contracts(&unit.contracts)
}

pub fn format_contract(contract: &ContractDecl) -> String {
    printer::format_contracts(std::slice::from_ref(contract))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::word::U256;

    fn parse_one(text: &str) -> ContractDecl {
        parse_source(text).unwrap().contracts.remove(0)
    }

    #[test]
    fn single_state_variable() {
        let c = parse_one("contract C { uint256 x; }");
        assert_eq!(c.name, "C");
        assert_eq!(
            c.state_vars,
            vec![StateVarDecl {
                name: "x".into(),
                ty: TypeExpr::Elementary(ElemType::Uint(256)),
                decl_index: 0
            }]
        );
    }

    #[test]
    fn duplicate_state_variable() {
        let err = parse_source("contract C { uint256 x; uint256 x; }").unwrap_err();
        assert_eq!(
            err,
            vec![SourceError::DuplicateName {
                name: "x".into(),
                line: 1,
                col: 33
            }]
        );
    }

    #[test]
    fn mapping_and_function() {
        let c = parse_one(
            "contract C { mapping(address=>uint256) m; function f(uint256 a) { m[msg.sender] = a; } }",
        );
        assert_eq!(c.state_vars.len(), 1);
        assert_eq!(
            c.state_vars[0].ty,
            TypeExpr::Mapping(
                ElemType::Address,
                Box::new(TypeExpr::Elementary(ElemType::Uint(256)))
            )
        );
        assert_eq!(c.functions.len(), 1);
        assert_eq!(
            c.functions[0].body,
            vec![Stmt::Assign {
                target: LValue {
                    root: "m".into(),
                    indices: vec![Expr::MsgSender]
                },
                op: AssignOp::Set,
                value: Expr::var("a"),
            }]
        );
    }

    #[test]
    fn array_types_nest_postfix() {
        let c = parse_one("contract C { uint8[3][2] g; uint256[][4] h; }");
        assert_eq!(
            c.state_vars[0].ty,
            TypeExpr::FixedArray(
                Box::new(TypeExpr::FixedArray(
                    Box::new(TypeExpr::Elementary(ElemType::Uint(8))),
                    U256::new(3)
                )),
                U256::new(2)
            )
        );
        assert_eq!(c.state_vars[1].ty.to_string(), "uint256[][4]");
    }

    #[test]
    fn extract_preserves_order() {
        let c = parse_one("contract C { bool a; uint8 b; address c; }");
        let names: Vec<_> = extract_variables(&c)
            .into_iter()
            .map(|v| (v.name, v.decl_index))
            .collect();
        assert_eq!(
            names,
            vec![("a".into(), 0), ("b".into(), 1), ("c".into(), 2)]
        );
        assert!(extract_variables(&parse_one("contract E { }")).is_empty());
    }

    #[test]
    fn precedence_is_c_like() {
        let c = parse_one("contract C { uint256 x; function f() { x = 1 + 2 * 3 - 4; } }");
        let Stmt::Assign { value, .. } = &c.functions[0].body[0] else {
            panic!()
        };
        assert_eq!(
            value,
            &Expr::bin(
                BinOp::Sub,
                Expr::bin(
                    BinOp::Add,
                    Expr::num(1),
                    Expr::bin(BinOp::Mul, Expr::num(2), Expr::num(3))
                ),
                Expr::num(4)
            )
        );
    }

    #[test]
    fn unknown_identifier_reported_with_position() {
        let err = parse_source("contract C {\n  function f() { y = 1; }\n}").unwrap_err();
        assert_eq!(
            err,
            vec![SourceError::UnknownName {
                name: "y".into(),
                line: 2,
                col: 18
            }]
        );
    }

    #[test]
    fn state_vars_may_follow_functions() {
        parse_one("contract C { function f() { x += 1; } uint256 x; }");
    }

    #[test]
    fn loop_variable_is_implicitly_declared() {
        let c = parse_one(
            "contract C { uint256 s; function f() { for (i = 0; i < 3; i += 1) { s += i; } } }",
        );
        assert!(matches!(c.functions[0].body[0], Stmt::For { .. }));
        assert!(parse_source(
            "contract C { function f() { for (i = 0; i < 3; i += 1) { } i = 1; } }"
        )
        .is_err());
    }

    #[test]
    fn syntax_errors_carry_positions() {
        for (src, line, col) in [
            ("contract C { uint256 }", 1, 22),
            ("contract C {\n uint7 x; }", 2, 2),
            ("contract C { uint256 x; ", 1, 25),
            ("contract C { uint8[0] x; }", 1, 20),
        ] {
            let err = parse_source(src).unwrap_err();
            assert_eq!(err[0].position(), (line, col), "{src}");
        }
    }

    #[test]
    fn duplicate_params_and_functions() {
        assert!(parse_source("contract C { function f(uint8 a, bool a) { } }").is_err());
        assert!(parse_source("contract C { function f() { } function f() { } }").is_err());
        assert!(parse_source("contract C { } contract C { }").is_err());
    }

    #[test]
    fn format_round_trips() {
        let src = r#"
            contract C {
                mapping(address => uint256) bal; uint8[4] small; int256 s;
                function f(uint256 a, address to) payable returns (uint256) {
                    require(a > 0 && !(a == 3), "bad \"a\"");
                    if (a - (1 - 1) > 2) { bal[to] += a * (2 + 3); } else { s -= 1; }
                    for (i = 0; i < small.length; i += 1) { small[i] = 1; }
                    uint256 t = a / 2 % 3;
                    pay(to, t);
                    return msg.value;
                }
            }"#;
        let unit = parse_source(src).unwrap();
        let printed = format_source(&unit);
        let again = parse_source(&printed).unwrap();
        assert_eq!(unit, again);
        assert_eq!(printed, format_source(&again));
    }
}
