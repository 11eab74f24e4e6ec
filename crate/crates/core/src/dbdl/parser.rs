use std::collections::HashSet;

use super::ast::*;
use super::{DbdlError, WEI_PER_ETHER};
use crate::lex::{tokenize, CommentStyle, Cursor, Expected, Pos, Tok};
use crate::word::{Address, U256};

pub(crate) const KEYWORDS: &[&str] = &[
    "testcase", "contract", "from", "account", "balance", "prestate", "events", "call", "value",
    "expect", "ether", "wei", "true", "false",
];

impl From<Expected> for DbdlError {
    fn from(e: Expected) -> Self {
        DbdlError::Syntax {
            line: e.pos.line,
            col: e.pos.col,
            expected: e.expected,
            found: e.found,
        }
    }
}

type PResult<T> = Result<T, DbdlError>;

#[derive(Clone, Copy, PartialEq, Eq)]
enum AliasUse {
    Contract,
    Account,
    Any,
}

struct Parser {
    cur: Cursor,
    uses: Vec<(String, Pos, AliasUse)>,
}

pub(super) fn parse(text: &str) -> Result<TestSuite, Vec<DbdlError>> {
    let toks = tokenize(text, CommentStyle::Hash).map_err(|e| {
        vec![DbdlError::Syntax {
            line: e.pos.line,
            col: e.pos.col,
            expected: "valid token".into(),
            found: e.message,
        }]
    })?;
    let mut p = Parser {
        cur: Cursor::new(toks),
        uses: Vec::new(),
    };
    let mut suite = TestSuite::default();
    let mut errors = Vec::new();
    let mut names = HashSet::new();
    while !p.cur.at_eof() {
        let pos = p.cur.pos();
        let case = p.testcase().map_err(|e| vec![e])?;
        if !names.insert(case.name.clone()) {
            errors.push(DbdlError::DuplicateCase {
                name: case.name.clone(),
                line: pos.line,
                col: pos.col,
            });
        }
        errors.extend(p.check_aliases(&case));
        suite.cases.push(case);
    }
    if errors.is_empty() {
        Ok(suite)
    } else {
        Err(errors)
    }
}

impl Parser {
    fn ident(&mut self, what: &str) -> PResult<(String, Pos)> {
        let pos = self.cur.pos();
        match self.cur.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.cur.advance();
                Ok((s, pos))
            }
            _ => Err(self.cur.error(what).into()),
        }
    }

    fn check_aliases(&mut self, case: &TestCase) -> Vec<DbdlError> {
        let contracts: HashSet<&str> = case.contracts.iter().map(|c| c.alias.as_str()).collect();
        let accounts: HashSet<&str> = case.accounts.iter().map(|a| a.alias.as_str()).collect();
        let mut out = Vec::new();
        for (alias, pos, kind) in self.uses.drain(..) {
            let known = match kind {
                AliasUse::Contract => contracts.contains(alias.as_str()),
                AliasUse::Account => accounts.contains(alias.as_str()),
                AliasUse::Any => {
                    contracts.contains(alias.as_str()) || accounts.contains(alias.as_str())
                }
            };
            if !known {
                out.push(DbdlError::UnknownAlias {
                    alias,
                    line: pos.line,
                    col: pos.col,
                });
            }
        }
        out
    }

    fn testcase(&mut self) -> PResult<TestCase> {
        self.cur.expect_kw("testcase")?;
        let name = self.cur.expect_string()?;
        self.cur.expect_punct("{")?;
        let mut case = TestCase::new(name);
        while self.cur.eat_kw("contract") {
            let (alias, _) = self.ident("contract alias")?;
            self.cur.expect_kw("from")?;
            let source = self.cur.expect_string()?;
            case.contracts.push(ContractRef { alias, source });
        }
        while self.cur.eat_kw("account") {
            let (alias, _) = self.ident("account alias")?;
            self.cur.expect_punct("{")?;
            self.cur.expect_kw("balance")?;
            self.cur.expect_punct(":")?;
            let balance = self.amount()?;
            self.cur.expect_punct("}")?;
            case.accounts.push(AccountDecl { alias, balance });
        }
        if self.cur.eat_kw("prestate") {
            self.cur.expect_punct("{")?;
            while !self.cur.eat_punct("}") {
                let path = self.path()?;
                self.cur.expect_punct("=")?;
                let value = self.literal()?;
                case.prestate.push(PreStateParam { path, value });
            }
        }
        self.cur.expect_kw("events")?;
        self.cur.expect_punct("{")?;
        while !self.cur.eat_punct("}") {
            self.cur.expect_kw("call")?;
            let (contract, cpos) = self.ident("contract alias")?;
            self.uses.push((contract.clone(), cpos, AliasUse::Contract));
            self.cur.expect_punct(".")?;
            let (function, _) = self.ident("function name")?;
            self.cur.expect_punct("(")?;
            let mut args = Vec::new();
            if !self.cur.is_punct(")") {
                loop {
                    args.push(self.literal()?);
                    if !self.cur.eat_punct(",") {
                        break;
                    }
                }
            }
            self.cur.expect_punct(")")?;
            self.cur.expect_kw("from")?;
            let (sender, spos) = self.ident("sender account alias")?;
            self.uses.push((sender.clone(), spos, AliasUse::Account));
            let value = if self.cur.eat_kw("value") {
                self.amount()?
            } else {
                U256::ZERO
            };
            case.events.push(FrontendEvent {
                contract,
                function,
                args,
                sender,
                value,
            });
        }
        if self.cur.eat_kw("expect") {
            self.cur.expect_punct("{")?;
            while !self.cur.eat_punct("}") {
                let path = self.path()?;
                let cmp = match self.cur.peek() {
                    Tok::Punct(p) => Cmp::from_symbol(p),
                    _ => None,
                }
                .ok_or_else(|| self.cur.error("comparison operator"))?;
                self.cur.advance();
                let expected = self.literal()?;
                case.expectations.push(Expectation {
                    path,
                    cmp,
                    expected,
                });
            }
        }
        self.cur.expect_punct("}")?;
        Ok(case)
    }

    fn amount(&mut self) -> PResult<U256> {
        let pos = self.cur.pos();
        let (n, _) = self.cur.expect_number()?;
        if self.cur.eat_kw("wei") {
            Ok(n)
        } else if self.cur.eat_kw("ether") {
            n.checked_mul(WEI_PER_ETHER).ok_or(DbdlError::Syntax {
                line: pos.line,
                col: pos.col,
                expected: "amount within 256 bits".into(),
                found: format!("{n} ether"),
            })
        } else {
            Err(self.cur.error("`ether` or `wei`").into())
        }
    }

    fn path(&mut self) -> PResult<PathExpr> {
        let (contract, pos) = self.ident("contract alias")?;
        self.uses.push((contract.clone(), pos, AliasUse::Contract));
        self.cur.expect_punct(".")?;
        let (root, _) = self.ident("variable name")?;
        let mut path = PathExpr::new(contract, root);
        while self.cur.eat_punct("[") {
            path.keys.push(self.literal()?);
            self.cur.expect_punct("]")?;
        }
        if self.cur.is_punct(".") && matches!(self.cur.peek_at(1), Tok::Ident(s) if s == "length") {
            self.cur.advance();
            self.cur.advance();
            path.length = true;
        }
        Ok(path)
    }

    fn literal(&mut self) -> PResult<Literal> {
        let pos = self.cur.pos();
        match self.cur.peek().clone() {
            Tok::Number {
                value,
                hex_digits: Some(40),
            } => {
                self.cur.advance();
                Ok(Literal::Address(
                    Address::from_word(value).expect("40 hex digits fit 160 bits"),
                ))
            }
            Tok::Number { value, .. } => {
                self.cur.advance();
                Ok(Literal::Number(value))
            }
            Tok::Ident(s) if s == "true" || s == "false" => {
                self.cur.advance();
                Ok(Literal::Bool(s == "true"))
            }
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.cur.advance();
                self.uses.push((s.clone(), pos, AliasUse::Any));
                Ok(Literal::Alias(s))
            }
            _ => Err(self.cur.error("literal").into()),
        }
    }
}
