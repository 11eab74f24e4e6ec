use std::fmt::Write;

use super::ast::*;
use crate::lex::quote;

const INDENT: &str = "    ";

pub fn format_contracts(contracts: &[ContractDecl]) -> String {
    let mut out = String::new();
    for (i, c) in contracts.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        format_contract(&mut out, c);
    }
    out
}

fn format_contract(out: &mut String, c: &ContractDecl) {
    let _ = writeln!(out, "contract {} {{", c.name);
    for v in &c.state_vars {
        let _ = writeln!(out, "{INDENT}{} {};", v.ty, v.name);
    }
    for f in &c.functions {
        if !c.state_vars.is_empty() || !std::ptr::eq(f, &c.functions[0]) {
            out.push('\n');
        }
        let params: Vec<String> = f
            .params
            .iter()
            .map(|p| format!("{} {}", p.ty, p.name))
            .collect();
        let _ = write!(out, "{INDENT}function {}({})", f.name, params.join(", "));
        if f.payable {
            out.push_str(" payable");
        }
        if let Some(r) = f.returns {
            let _ = write!(out, " returns ({r})");
        }
        out.push(' ');
        format_block(out, &f.body, 1);
        out.push('\n');
    }
    out.push_str("}\n");
}

fn format_block(out: &mut String, stmts: &[Stmt], depth: usize) {
    out.push_str("{\n");
    for s in stmts {
        format_stmt(out, s, depth + 1);
    }
    out.push_str(&INDENT.repeat(depth));
    out.push('}');
}

fn format_stmt(out: &mut String, stmt: &Stmt, depth: usize) {
    let pad = INDENT.repeat(depth);
    out.push_str(&pad);
    match stmt {
        Stmt::Assign { target, op, value } => {
            let _ = writeln!(
                out,
                "{} {} {};",
                format_lvalue(target),
                op.symbol(),
                format_expr(value)
            );
        }
        Stmt::Require { cond, message } => match message {
            Some(m) => {
                let _ = writeln!(out, "require({}, {});", format_expr(cond), quote(m));
            }
            None => {
                let _ = writeln!(out, "require({});", format_expr(cond));
            }
        },
        Stmt::If {
            cond,
            then_block,
            else_block,
        } => {
            let _ = write!(out, "if ({}) ", format_expr(cond));
            format_block(out, then_block, depth);
            if let Some(e) = else_block {
                out.push_str(" else ");
                format_block(out, e, depth);
            }
            out.push('\n');
        }
        Stmt::For {
            var,
            init,
            cond,
            step_var,
            step,
            body,
        } => {
            let _ = write!(
                out,
                "for ({var} = {}; {}; {step_var} += {}) ",
                format_expr(init),
                format_expr(cond),
                format_expr(step)
            );
            format_block(out, body, depth);
            out.push('\n');
        }
        Stmt::Return(None) => out.push_str("return;\n"),
        Stmt::Return(Some(e)) => {
            let _ = writeln!(out, "return {};", format_expr(e));
        }
        Stmt::Pay { to, amount } => {
            let _ = writeln!(out, "pay({}, {});", format_expr(to), format_expr(amount));
        }
        Stmt::Local { ty, name, value } => {
            let _ = writeln!(out, "{ty} {name} = {};", format_expr(value));
        }
        Stmt::Push { target, value } => {
            let _ = writeln!(
                out,
                "{}.push({});",
                format_lvalue(target),
                format_expr(value)
            );
        }
    }
}

pub fn format_lvalue(lv: &LValue) -> String {
    let mut s = lv.root.clone();
    for i in &lv.indices {
        let _ = write!(s, "[{}]", format_expr(i));
    }
    s
}

pub fn format_expr(e: &Expr) -> String {
    match e {
        Expr::Number(n) => n.to_string(),
        Expr::Bool(b) => b.to_string(),
        Expr::MsgSender => "msg.sender".into(),
        Expr::MsgValue => "msg.value".into(),
        Expr::Load(lv) => format_lvalue(lv),
        Expr::Length(lv) => format!("{}.length", format_lvalue(lv)),
        Expr::Not(inner) => match **inner {
            Expr::Binary(..) => format!("!({})", format_expr(inner)),
            _ => format!("!{}", format_expr(inner)),
        },
        Expr::Binary(op, l, r) => {
            let left = match **l {
                Expr::Binary(lop, ..) if lop.precedence() < op.precedence() => {
                    format!("({})", format_expr(l))
                }
                _ => format_expr(l),
            };
            let right = match **r {
                Expr::Binary(rop, ..) if rop.precedence() <= op.precedence() => {
                    format!("({})", format_expr(r))
                }
                _ => format_expr(r),
            };
            format!("{left} {} {right}", op.symbol())
        }
    }
}
