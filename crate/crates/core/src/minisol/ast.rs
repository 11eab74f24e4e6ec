use std::fmt;

use serde::Serialize;

use crate::word::U256;

/// Elementary (value) types.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ElemType {
    /// Unsigned integer; bit width is a multiple of 8 in 8..=256.
    Uint(u16),
    Int256,
    Bool,
    Address,
}

impl ElemType {
    /// Storage width in bytes.
    pub fn width(self) -> u8 {
        match self {
            ElemType::Uint(bits) => (bits / 8) as u8,
            ElemType::Int256 => 32,
            ElemType::Bool => 1,
            ElemType::Address => 20,
        }
    }

    pub fn is_signed(self) -> bool {
        matches!(self, ElemType::Int256)
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "int256" => Some(ElemType::Int256),
            "bool" => Some(ElemType::Bool),
            "address" => Some(ElemType::Address),
            _ => {
                let bits: u16 = name.strip_prefix("uint")?.parse().ok()?;
                // reject forms like "uint08"
                if bits.to_string() != name[4..]
                    || bits == 0
                    || bits > 256
                    || !bits.is_multiple_of(8)
                {
                    return None;
                }
                Some(ElemType::Uint(bits))
            }
        }
    }

    /// Largest unsigned value storable, for unsigned kinds.
    pub fn max_unsigned(self) -> U256 {
        match self {
            ElemType::Uint(bits) => crate::word::byte_mask((bits / 8) as u8),
            ElemType::Int256 => U256::MAX >> 1u32,
            ElemType::Bool => U256::ONE,
            ElemType::Address => crate::word::byte_mask(20),
        }
    }
}

impl fmt::Display for ElemType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ElemType::Uint(bits) => write!(f, "uint{bits}"),
            ElemType::Int256 => write!(f, "int256"),
            ElemType::Bool => write!(f, "bool"),
            ElemType::Address => write!(f, "address"),
        }
    }
}

impl Serialize for ElemType {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum TypeExpr {
    Elementary(ElemType),
    Mapping(ElemType, Box<TypeExpr>),
    DynArray(Box<TypeExpr>),
    FixedArray(Box<TypeExpr>, U256),
}

impl TypeExpr {
    pub fn as_value(&self) -> Option<ElemType> {
        match self {
            TypeExpr::Elementary(e) => Some(*e),
            _ => None,
        }
    }
}

impl fmt::Display for TypeExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeExpr::Elementary(e) => write!(f, "{e}"),
            TypeExpr::Mapping(k, v) => write!(f, "mapping({k} => {v})"),
            TypeExpr::DynArray(e) => write!(f, "{e}[]"),
            TypeExpr::FixedArray(e, n) => write!(f, "{e}[{n}]"),
        }
    }
}

impl Serialize for TypeExpr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateVarDecl {
    pub name: String,
    pub ty: TypeExpr,
    pub decl_index: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub ty: ElemType,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FunctionDecl {
    pub name: String,
    pub params: Vec<Param>,
    pub payable: bool,
    pub returns: Option<ElemType>,
    pub body: Vec<Stmt>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContractDecl {
    pub name: String,
    pub state_vars: Vec<StateVarDecl>,
    pub functions: Vec<FunctionDecl>,
}

impl ContractDecl {
    pub fn state_var(&self, name: &str) -> Option<&StateVarDecl> {
        self.state_vars.iter().find(|v| v.name == name)
    }

    pub fn function(&self, name: &str) -> Option<&FunctionDecl> {
        self.functions.iter().find(|f| f.name == name)
    }
}

#[derive(Clone, Debug)]
pub struct SourceUnit {
    pub text: String,
    pub contracts: Vec<ContractDecl>,
}

impl SourceUnit {
    pub fn contract(&self, name: &str) -> Option<&ContractDecl> {
        self.contracts.iter().find(|c| c.name == name)
    }
}

/// Structural equality ignores the original text.
impl PartialEq for SourceUnit {
    fn eq(&self, other: &Self) -> bool {
        self.contracts == other.contracts
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AssignOp {
    Set,
    Add,
    Sub,
    Mul,
}

impl AssignOp {
    pub fn symbol(self) -> &'static str {
        match self {
            AssignOp::Set => "=",
            AssignOp::Add => "+=",
            AssignOp::Sub => "-=",
            AssignOp::Mul => "*=",
        }
    }

    /// The arithmetic operator a compound assignment applies.
    pub fn binary(self) -> Option<BinOp> {
        match self {
            AssignOp::Set => None,
            AssignOp::Add => Some(BinOp::Add),
            AssignOp::Sub => Some(BinOp::Sub),
            AssignOp::Mul => Some(BinOp::Mul),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LValue {
    pub root: String,
    pub indices: Vec<Expr>,
}

impl LValue {
    pub fn var(name: impl Into<String>) -> Self {
        LValue {
            root: name.into(),
            indices: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Stmt {
    Assign {
        target: LValue,
        op: AssignOp,
        value: Expr,
    },
    Require {
        cond: Expr,
        message: Option<String>,
    },
    If {
        cond: Expr,
        then_block: Vec<Stmt>,
        else_block: Option<Vec<Stmt>>,
    },
    /// `for (var = init; cond; step_var += step) body`. When `var` is not a
    /// visible local it is declared as a `uint256` local scoped to the loop.
    For {
        var: String,
        init: Expr,
        cond: Expr,
        step_var: String,
        step: Expr,
        body: Vec<Stmt>,
    },
    Return(Option<Expr>),
    Pay {
        to: Expr,
        amount: Expr,
    },
    Local {
        ty: ElemType,
        name: String,
        value: Expr,
    },
    Push {
        target: LValue,
        value: Expr,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Mod => "%",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    /// C-style binding strength; higher binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne => 3,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul | BinOp::Div | BinOp::Mod => 6,
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        Some(match s {
            "+" => BinOp::Add,
            "-" => BinOp::Sub,
            "*" => BinOp::Mul,
            "/" => BinOp::Div,
            "%" => BinOp::Mod,
            "<" => BinOp::Lt,
            "<=" => BinOp::Le,
            ">" => BinOp::Gt,
            ">=" => BinOp::Ge,
            "==" => BinOp::Eq,
            "!=" => BinOp::Ne,
            "&&" => BinOp::And,
            "||" => BinOp::Or,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    Number(U256),
    Bool(bool),
    MsgSender,
    MsgValue,
    Load(LValue),
    Length(LValue),
    Not(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn num(n: u128) -> Self {
        Expr::Number(U256::new(n))
    }

    pub fn var(name: impl Into<String>) -> Self {
        Expr::Load(LValue::var(name))
    }

    pub fn bin(op: BinOp, l: Expr, r: Expr) -> Self {
        Expr::Binary(op, Box::new(l), Box::new(r))
    }
}
