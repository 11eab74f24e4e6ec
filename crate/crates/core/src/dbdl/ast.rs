use std::fmt;

use crate::word::{Address, U256};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TestSuite {
    pub cases: Vec<TestCase>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TestCase {
    pub name: String,
    pub contracts: Vec<ContractRef>,
    pub accounts: Vec<AccountDecl>,
    pub prestate: Vec<PreStateParam>,
    pub events: Vec<FrontendEvent>,
    pub expectations: Vec<Expectation>,
}

impl TestCase {
    pub fn new(name: impl Into<String>) -> Self {
        TestCase {
            name: name.into(),
            contracts: Vec::new(),
            accounts: Vec::new(),
            prestate: Vec::new(),
            events: Vec::new(),
            expectations: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContractRef {
    pub alias: String,
    pub source: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AccountDecl {
    pub alias: String,
    /// Wei.
    pub balance: U256,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Literal {
    Number(U256),
    Bool(bool),
    Alias(String),
    Address(Address),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Number(n) => write!(f, "{n}"),
            Literal::Bool(b) => write!(f, "{b}"),
            Literal::Alias(a) => write!(f, "{a}"),
            Literal::Address(a) => write!(f, "{a}"),
        }
    }
}

/// `Contract.var[key]…[.length]` as written in a test case.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PathExpr {
    pub contract: String,
    pub root: String,
    pub keys: Vec<Literal>,
    pub length: bool,
}

impl PathExpr {
    pub fn new(contract: impl Into<String>, root: impl Into<String>) -> Self {
        PathExpr {
            contract: contract.into(),
            root: root.into(),
            keys: Vec::new(),
            length: false,
        }
    }

    pub fn with_key(mut self, key: Literal) -> Self {
        self.keys.push(key);
        self
    }
}

impl fmt::Display for PathExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.contract, self.root)?;
        for k in &self.keys {
            write!(f, "[{k}]")?;
        }
        if self.length {
            write!(f, ".length")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PreStateParam {
    pub path: PathExpr,
    pub value: Literal,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrontendEvent {
    pub contract: String,
    pub function: String,
    pub args: Vec<Literal>,
    pub sender: String,
    /// Wei attached to the call.
    pub value: U256,
}

impl fmt::Display for FrontendEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let args: Vec<String> = self.args.iter().map(ToString::to_string).collect();
        write!(
            f,
            "call {}.{}({}) from {}",
            self.contract,
            self.function,
            args.join(", "),
            self.sender
        )?;
        if self.value != U256::ZERO {
            write!(f, " value {}", super::format_amount(self.value))?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Cmp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Cmp {
    pub fn symbol(self) -> &'static str {
        match self {
            Cmp::Eq => "==",
            Cmp::Ne => "!=",
            Cmp::Lt => "<",
            Cmp::Le => "<=",
            Cmp::Gt => ">",
            Cmp::Ge => ">=",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        Some(match s {
            "==" => Cmp::Eq,
            "!=" => Cmp::Ne,
            "<" => Cmp::Lt,
            "<=" => Cmp::Le,
            ">" => Cmp::Gt,
            ">=" => Cmp::Ge,
            _ => return None,
        })
    }

    pub fn holds<T: Ord>(self, actual: T, expected: T) -> bool {
        match self {
            Cmp::Eq => actual == expected,
            Cmp::Ne => actual != expected,
            Cmp::Lt => actual < expected,
            Cmp::Le => actual <= expected,
            Cmp::Gt => actual > expected,
            Cmp::Ge => actual >= expected,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Expectation {
    pub path: PathExpr,
    pub cmp: Cmp,
    pub expected: Literal,
}

impl fmt::Display for Expectation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.path, self.cmp.symbol(), self.expected)
    }
}
