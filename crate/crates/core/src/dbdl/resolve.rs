//! Binds a parsed test case to contract declarations: aliases become
//! addresses, surface paths become typed storage paths, literals become words.
//! The runner executes only what this module accepts.

use std::collections::{BTreeMap, HashSet};

use serde::Serialize;

use super::ast::*;
use crate::layout::{
    compute_layout, resolve_location, Accessor, AddressRegistry, Leaf, StorageLayout, VariablePath,
};
use crate::minisol::{ContractDecl, ElemType, TypeExpr};
use crate::word::{Address, U256};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum DiagnosticKind {
    DuplicateCase,
    DuplicateAlias,
    UnknownAlias,
    UnknownContract,
    UnknownVariable,
    PathTypeMismatch,
    ValueKindMismatch,
    ValueOverflow,
    UnknownFunction,
    ArityMismatch,
    NonPayableValue,
    NoEvents,
    UnsupportedLayout,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub case: String,
    pub kind: DiagnosticKind,
    /// The alias, path or function the diagnostic is about.
    pub subject: String,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "case {:?}: {:?}: {}", self.case, self.kind, self.message)
    }
}

#[derive(Clone, Debug)]
pub struct BoundContract {
    pub alias: String,
    pub address: Address,
    pub decl: ContractDecl,
    pub layout: StorageLayout,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResolvedParam {
    pub path: VariablePath,
    pub leaf: Leaf,
    pub value: U256,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResolvedEvent {
    pub contract: String,
    pub function: String,
    pub args: Vec<U256>,
    pub sender: Address,
    pub value: U256,
    /// Canonical DBDL text of the event.
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResolvedExpectation {
    pub text: String,
    pub path: VariablePath,
    pub leaf: Leaf,
    pub cmp: Cmp,
    pub expected: U256,
}

#[derive(Clone, Debug)]
pub struct ResolvedCase {
    pub name: String,
    pub contracts: Vec<BoundContract>,
    pub accounts: Vec<(String, Address, U256)>,
    pub prestate: Vec<ResolvedParam>,
    pub events: Vec<ResolvedEvent>,
    pub expectations: Vec<ResolvedExpectation>,
}

impl ResolvedCase {
    pub fn contract(&self, alias: &str) -> Option<&BoundContract> {
        self.contracts.iter().find(|c| c.alias == alias)
    }
}

struct Binder<'a> {
    case: &'a TestCase,
    contracts: BTreeMap<&'a str, BoundContract>,
    accounts: HashSet<&'a str>,
    diags: Vec<Diagnostic>,
}

impl<'a> Binder<'a> {
    fn diag(
        &mut self,
        kind: DiagnosticKind,
        subject: impl Into<String>,
        message: impl Into<String>,
    ) {
        self.diags.push(Diagnostic {
            case: self.case.name.clone(),
            kind,
            subject: subject.into(),
            message: message.into(),
        });
    }

    fn alias_address(&mut self, alias: &str) -> Option<Address> {
        if self.accounts.contains(alias) || self.contracts.contains_key(alias) {
            Some(Address::for_alias(alias))
        } else {
            self.diag(
                DiagnosticKind::UnknownAlias,
                alias,
                format!("`{alias}` is not a declared account or contract"),
            );
            None
        }
    }

    /// Coerces a literal to a word of the given type.
    fn coerce(&mut self, lit: &Literal, ty: ElemType, subject: &str) -> Option<U256> {
        let mismatch = |b: &mut Self| {
            b.diag(
                DiagnosticKind::ValueKindMismatch,
                subject,
                format!("{subject}: literal `{lit}` does not fit type {ty}"),
            );
            None
        };
        match (lit, ty) {
            (Literal::Bool(v), ElemType::Bool) => Some(U256::from(*v as u8)),
            (Literal::Number(n), ElemType::Uint(_) | ElemType::Int256 | ElemType::Address) => {
                if *n > ty.max_unsigned() {
                    self.diag(
                        DiagnosticKind::ValueOverflow,
                        subject,
                        format!("{subject}: value {n} exceeds the range of {ty}"),
                    );
                    None
                } else {
                    Some(*n)
                }
            }
            (Literal::Alias(a), ElemType::Address) => self.alias_address(a).map(Address::to_word),
            (Literal::Address(a), ElemType::Address) => Some(a.to_word()),
            _ => mismatch(self),
        }
    }

    fn bind_path(&mut self, path: &PathExpr) -> Option<(VariablePath, Leaf)> {
        let text = path.to_string();
        let Some(bound) = self.contracts.get(path.contract.as_str()) else {
            self.diag(
                DiagnosticKind::UnknownAlias,
                &path.contract,
                format!("{text}: `{}` is not a declared contract", path.contract),
            );
            return None;
        };
        let Some(var) = bound.decl.state_var(&path.root) else {
            self.diag(
                DiagnosticKind::UnknownVariable,
                &text,
                format!(
                    "{text}: contract {} has no variable `{}`",
                    bound.decl.name, path.root
                ),
            );
            return None;
        };
        let layout = bound.layout.clone();
        let mut ty = var.ty.clone();
        let mut vpath = VariablePath::new(&path.contract, &path.root);
        for key in &path.keys {
            match ty {
                TypeExpr::Mapping(key_ty, value) => {
                    let word = self.coerce(key, key_ty, &text)?;
                    vpath.accessors.push(Accessor::Key(word));
                    ty = *value;
                }
                TypeExpr::DynArray(elem) | TypeExpr::FixedArray(elem, _) => match key {
                    Literal::Number(n) => {
                        vpath.accessors.push(Accessor::Index(*n));
                        ty = *elem;
                    }
                    _ => {
                        self.diag(
                            DiagnosticKind::PathTypeMismatch,
                            &text,
                            format!("{text}: array index must be a number, found `{key}`"),
                        );
                        return None;
                    }
                },
                TypeExpr::Elementary(_) => {
                    self.diag(
                        DiagnosticKind::PathTypeMismatch,
                        &text,
                        format!("{text}: too many accessors for the variable's type"),
                    );
                    return None;
                }
            }
        }
        if path.length {
            vpath.accessors.push(Accessor::Length);
        }
        let mut scratch = AddressRegistry::new();
        match resolve_location(&layout, &vpath, &mut scratch) {
            Ok(loc) => Some((vpath, loc.leaf)),
            Err(e) => {
                self.diag(
                    DiagnosticKind::PathTypeMismatch,
                    &text,
                    format!("{text}: {e}"),
                );
                None
            }
        }
    }
}

/// Binds a case to the declared contracts, or returns every problem found.
pub fn resolve_case(
    case: &TestCase,
    contracts: &[ContractDecl],
) -> Result<ResolvedCase, Vec<Diagnostic>> {
    let mut b = Binder {
        case,
        contracts: BTreeMap::new(),
        accounts: HashSet::new(),
        diags: Vec::new(),
    };
    let mut order = Vec::new();
    for r in &case.contracts {
        if b.contracts.contains_key(r.alias.as_str()) {
            b.diag(
                DiagnosticKind::DuplicateAlias,
                &r.alias,
                format!("contract alias `{}` declared twice", r.alias),
            );
            continue;
        }
        let Some(decl) = contracts.iter().find(|c| c.name == r.alias) else {
            b.diag(
                DiagnosticKind::UnknownContract,
                &r.alias,
                format!("no contract named `{}` in the supplied sources", r.alias),
            );
            continue;
        };
        match compute_layout(decl) {
            Ok(layout) => {
                order.push(r.alias.as_str());
                b.contracts.insert(
                    &r.alias,
                    BoundContract {
                        alias: r.alias.clone(),
                        address: Address::for_alias(&r.alias),
                        decl: decl.clone(),
                        layout,
                    },
                );
            }
            Err(e) => b.diag(DiagnosticKind::UnsupportedLayout, &r.alias, e.to_string()),
        }
    }
    let mut accounts = Vec::new();
    for a in &case.accounts {
        if !b.accounts.insert(&a.alias) {
            b.diag(
                DiagnosticKind::DuplicateAlias,
                &a.alias,
                format!("account `{}` declared twice", a.alias),
            );
            continue;
        }
        accounts.push((a.alias.clone(), Address::for_alias(&a.alias), a.balance));
    }
    let total = accounts
        .iter()
        .try_fold(U256::ZERO, |acc, (_, _, bal)| acc.checked_add(*bal));
    if total.is_none() {
        b.diag(
            DiagnosticKind::ValueOverflow,
            "accounts",
            "total account balance exceeds 256 bits",
        );
    }

    let mut prestate = Vec::new();
    for p in &case.prestate {
        let Some((path, leaf)) = b.bind_path(&p.path) else {
            continue;
        };
        let subject = p.path.to_string();
        if let Some(value) = b.coerce(&p.value, leaf.elem_type(), &subject) {
            prestate.push(ResolvedParam { path, leaf, value });
        }
    }

    if case.events.is_empty() {
        b.diag(
            DiagnosticKind::NoEvents,
            &case.name,
            "a test case needs at least one event",
        );
    }
    let mut events = Vec::new();
    for e in &case.events {
        let text = e.to_string();
        let sender_known = b.accounts.contains(e.sender.as_str());
        if !sender_known {
            b.diag(
                DiagnosticKind::UnknownAlias,
                &e.sender,
                format!("{text}: sender `{}` is not a declared account", e.sender),
            );
        }
        let Some(func) = b
            .contracts
            .get(e.contract.as_str())
            .map(|c| c.decl.function(&e.function).cloned())
        else {
            b.diag(
                DiagnosticKind::UnknownAlias,
                &e.contract,
                format!("{text}: `{}` is not a declared contract", e.contract),
            );
            continue;
        };
        let Some(func) = func else {
            b.diag(
                DiagnosticKind::UnknownFunction,
                format!("{}.{}", e.contract, e.function),
                format!("{text}: contract has no function `{}`", e.function),
            );
            continue;
        };
        if func.params.len() != e.args.len() {
            b.diag(
                DiagnosticKind::ArityMismatch,
                format!("{}.{}", e.contract, e.function),
                format!(
                    "{text}: expected {} arguments, found {}",
                    func.params.len(),
                    e.args.len()
                ),
            );
            continue;
        }
        if e.value > U256::ZERO && !func.payable {
            b.diag(
                DiagnosticKind::NonPayableValue,
                format!("{}.{}", e.contract, e.function),
                format!("{text}: value sent to non-payable function"),
            );
        }
        let mut args = Vec::new();
        for (lit, param) in e.args.iter().zip(&func.params) {
            let subject = format!("{}.{}({})", e.contract, e.function, param.name);
            if let Some(w) = b.coerce(lit, param.ty, &subject) {
                args.push(w);
            }
        }
        if args.len() == func.params.len() && sender_known {
            events.push(ResolvedEvent {
                contract: e.contract.clone(),
                function: e.function.clone(),
                args,
                sender: Address::for_alias(&e.sender),
                value: e.value,
                text,
            });
        }
    }

    let mut expectations = Vec::new();
    for x in &case.expectations {
        let Some((path, leaf)) = b.bind_path(&x.path) else {
            continue;
        };
        let subject = x.path.to_string();
        if let Some(expected) = b.coerce(&x.expected, leaf.elem_type(), &subject) {
            expectations.push(ResolvedExpectation {
                text: x.to_string(),
                path,
                leaf,
                cmp: x.cmp,
                expected,
            });
        }
    }

    if !b.diags.is_empty() {
        return Err(b.diags);
    }
    let contracts = order
        .into_iter()
        .map(|a| b.contracts.remove(a).expect("bound above"))
        .collect();
    Ok(ResolvedCase {
        name: case.name.clone(),
        contracts,
        accounts,
        prestate,
        events,
        expectations,
    })
}

/// Checks a suite against contract declarations; empty means runnable.
pub fn validate(suite: &TestSuite, contracts: &[ContractDecl]) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut names = HashSet::new();
    for case in &suite.cases {
        if !names.insert(case.name.as_str()) {
            out.push(Diagnostic {
                case: case.name.clone(),
                kind: DiagnosticKind::DuplicateCase,
                subject: case.name.clone(),
                message: format!("test case name {:?} used twice", case.name),
            });
        }
        if let Err(d) = resolve_case(case, contracts) {
            out.extend(d);
        }
    }
    out
}
