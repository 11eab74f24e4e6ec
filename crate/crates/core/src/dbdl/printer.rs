use std::fmt::Write;

use super::ast::*;
use super::format_amount;
use crate::lex::quote;

const INDENT: &str = "    ";

pub(super) fn format_suite(suite: &TestSuite) -> String {
    let mut out = String::new();
    for (i, case) in suite.cases.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        format_case(&mut out, case);
    }
    out
}

fn format_case(out: &mut String, case: &TestCase) {
    let _ = writeln!(out, "testcase {} {{", quote(&case.name));
    for c in &case.contracts {
        let _ = writeln!(
            out,
            "{INDENT}contract {} from {}",
            c.alias,
            quote(&c.source)
        );
    }
    for a in &case.accounts {
        let _ = writeln!(
            out,
            "{INDENT}account {} {{ balance: {} }}",
            a.alias,
            format_amount(a.balance)
        );
    }
    if !case.prestate.is_empty() {
        let _ = writeln!(out, "{INDENT}prestate {{");
        for p in &case.prestate {
            let _ = writeln!(out, "{INDENT}{INDENT}{} = {}", p.path, p.value);
        }
        let _ = writeln!(out, "{INDENT}}}");
    }
    let _ = writeln!(out, "{INDENT}events {{");
    for e in &case.events {
        let _ = writeln!(out, "{INDENT}{INDENT}{e}");
    }
    let _ = writeln!(out, "{INDENT}}}");
    if !case.expectations.is_empty() {
        let _ = writeln!(out, "{INDENT}expect {{");
        for e in &case.expectations {
            let _ = writeln!(out, "{INDENT}{INDENT}{e}");
        }
        let _ = writeln!(out, "{INDENT}}}");
    }
    out.push_str("}\n");
}
