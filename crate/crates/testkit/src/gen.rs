//! Seeded generators for MiniSol contracts, DBDL cases and storage paths.

use kaya_core::dbdl::{
    AccountDecl, Cmp, ContractRef, Expectation, FrontendEvent, Literal, PathExpr, PreStateParam,
    TestCase, TestSuite, WEI_PER_ETHER,
};
use kaya_core::layout::{Accessor, VariablePath};
use kaya_core::minisol::{
    AssignOp, BinOp, ContractDecl, ElemType, Expr, FunctionDecl, LValue, Param, SourceUnit,
    StateVarDecl, Stmt, TypeExpr,
};
use kaya_core::word::{Address, U256};
use rand::seq::SliceRandom;
use rand::Rng;

pub const ACCOUNTS: [&str; 3] = ["alice", "bob", "carol"];

pub fn elem_type<R: Rng>(rng: &mut R) -> ElemType {
    match rng.gen_range(0..10) {
        0..=4 => ElemType::Uint(8 * *[1u16, 2, 3, 4, 8, 16, 20, 32].choose(rng).unwrap()),
        5 => ElemType::Uint(256),
        6 => ElemType::Int256,
        7 => ElemType::Bool,
        _ => ElemType::Address,
    }
}

fn array_len<R: Rng>(rng: &mut R) -> U256 {
    U256::from(rng.gen_range(1u32..=5))
}

/// A state variable type, at most two levels deep.
pub fn type_expr<R: Rng>(rng: &mut R, depth: u32) -> TypeExpr {
    let leaf = |rng: &mut R| TypeExpr::Elementary(elem_type(rng));
    if depth >= 2 {
        return leaf(rng);
    }
    match rng.gen_range(0..20) {
        0..=8 => leaf(rng),
        9..=12 => TypeExpr::Mapping(elem_type(rng), Box::new(type_expr(rng, depth + 1))),
        13..=15 => TypeExpr::DynArray(Box::new(type_expr(rng, depth + 1))),
        _ => TypeExpr::FixedArray(Box::new(type_expr(rng, depth + 1)), array_len(rng)),
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Class {
    Num,
    Bool,
    Addr,
}

fn class_of(t: ElemType) -> Class {
    match t {
        ElemType::Uint(_) | ElemType::Int256 => Class::Num,
        ElemType::Bool => Class::Bool,
        ElemType::Address => Class::Addr,
    }
}

fn leaf_of(ty: &TypeExpr) -> ElemType {
    match ty {
        TypeExpr::Elementary(e) => *e,
        TypeExpr::Mapping(_, v) | TypeExpr::DynArray(v) | TypeExpr::FixedArray(v, _) => leaf_of(v),
    }
}

fn has_dyn_array(ty: &TypeExpr) -> bool {
    match ty {
        TypeExpr::Elementary(_) => false,
        TypeExpr::DynArray(_) => true,
        TypeExpr::Mapping(_, v) | TypeExpr::FixedArray(v, _) => has_dyn_array(v),
    }
}

fn interesting_number<R: Rng>(rng: &mut R) -> U256 {
    match rng.gen_range(0..24) {
        0 => U256::ZERO,
        1 => U256::ONE,
        2 => U256::new(255),
        3 => U256::new(256),
        4 => U256::new(u64::MAX as u128),
        5 => U256::ONE << 128u32,
        6 => (U256::ONE << 255u32) - 1,
        7 => U256::MAX,
        _ => U256::from(rng.gen_range(0u32..20)),
    }
}

struct Scope {
    vars: Vec<StateVarDecl>,
    frames: Vec<Vec<(String, ElemType)>>,
    next_local: usize,
    returns: Option<ElemType>,
    loop_depth: u32,
}

impl Scope {
    fn locals(&self) -> impl Iterator<Item = &(String, ElemType)> {
        self.frames.iter().flatten()
    }

    fn locals_of(&self, class: Class) -> Vec<(String, ElemType)> {
        self.locals()
            .filter(|(_, t)| class_of(*t) == class)
            .cloned()
            .collect()
    }

    fn fresh(&mut self, prefix: &str) -> String {
        self.next_local += 1;
        format!("{prefix}{}", self.next_local)
    }
}

struct Gen<'r, R> {
    rng: &'r mut R,
    scope: Scope,
}

impl<'r, R: Rng> Gen<'r, R> {
    fn expr(&mut self, class: Class, depth: u32) -> Expr {
        let deep = depth >= 3;
        match class {
            Class::Num => match self.rng.gen_range(0..10) {
                0 | 1 => Expr::Number(interesting_number(self.rng)),
                2 | 3 => self.local_or_storage(Class::Num, depth),
                4 => Expr::MsgValue,
                5 if !deep => {
                    if let Some(lv) = self.storage_path(
                        depth,
                        |t| matches!(t, TypeExpr::DynArray(_) | TypeExpr::FixedArray(..)),
                        true,
                    ) {
                        Expr::Length(lv)
                    } else {
                        Expr::num(2)
                    }
                }
                _ if !deep => {
                    let op = *[BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Mod]
                        .choose(self.rng)
                        .unwrap();
                    let rhs = if matches!(op, BinOp::Div | BinOp::Mod) && self.rng.gen_bool(0.7) {
                        Expr::Number(U256::from(self.rng.gen_range(1u32..10)))
                    } else {
                        self.expr(Class::Num, depth + 1)
                    };
                    Expr::bin(op, self.expr(Class::Num, depth + 1), rhs)
                }
                _ => Expr::Number(U256::from(self.rng.gen_range(0u32..10))),
            },
            Class::Bool => match self.rng.gen_range(0..10) {
                0 => Expr::Bool(self.rng.gen()),
                1 | 2 => self.local_or_storage(Class::Bool, depth),
                3 if !deep => Expr::Not(Box::new(self.expr(Class::Bool, depth + 1))),
                4 if !deep => {
                    let op = if self.rng.gen() {
                        BinOp::And
                    } else {
                        BinOp::Or
                    };
                    Expr::bin(
                        op,
                        self.expr(Class::Bool, depth + 1),
                        self.expr(Class::Bool, depth + 1),
                    )
                }
                5 if !deep => {
                    let op = if self.rng.gen() { BinOp::Eq } else { BinOp::Ne };
                    Expr::bin(
                        op,
                        self.expr(Class::Addr, depth + 1),
                        self.expr(Class::Addr, depth + 1),
                    )
                }
                _ => {
                    let op = *[
                        BinOp::Lt,
                        BinOp::Le,
                        BinOp::Gt,
                        BinOp::Ge,
                        BinOp::Eq,
                        BinOp::Ne,
                    ]
                    .choose(self.rng)
                    .unwrap();
                    Expr::bin(
                        op,
                        self.expr(Class::Num, depth + 1),
                        self.expr(Class::Num, depth + 1),
                    )
                }
            },
            Class::Addr => match self.rng.gen_range(0..6) {
                0 | 1 => Expr::MsgSender,
                2 => Expr::Number(U256::from(self.rng.gen_range(0u32..4))),
                _ => self.local_or_storage(Class::Addr, depth),
            },
        }
    }

    fn local_or_storage(&mut self, class: Class, depth: u32) -> Expr {
        let locals = self.scope.locals_of(class);
        if !locals.is_empty() && self.rng.gen_bool(0.5) {
            return Expr::var(locals.choose(self.rng).unwrap().0.clone());
        }
        if depth < 3 {
            if let Some(lv) = self.storage_path(
                depth,
                |t| matches!(t, TypeExpr::Elementary(e) if class_of(*e) == class),
                false,
            ) {
                return Expr::Load(lv);
            }
        }
        match class {
            Class::Num => Expr::num(1),
            Class::Bool => Expr::Bool(true),
            Class::Addr => Expr::MsgSender,
        }
    }

    /// A storage lvalue ending at a node accepted by `want`.
    fn storage_path(
        &mut self,
        depth: u32,
        want: impl Fn(&TypeExpr) -> bool,
        shallow: bool,
    ) -> Option<LValue> {
        let mut routes = Vec::new();
        for v in &self.scope.vars {
            collect_routes(&v.ty, &want, &mut Vec::new(), &v.name, &mut routes, shallow);
        }
        // Unpushed dynamic arrays mostly revert on access, so favor static routes.
        let fixed: Vec<_> = routes
            .iter()
            .filter(|(_, steps)| !steps.iter().any(|s| matches!(s, Step::Index(None))))
            .cloned()
            .collect();
        let pool = if !fixed.is_empty() && self.rng.gen_bool(0.7) {
            &fixed
        } else {
            &routes
        };
        let (root, steps) = pool.choose(self.rng)?.clone();
        let mut indices = Vec::new();
        for step in steps {
            indices.push(match step {
                Step::Key(k) => self.key_expr(k, depth),
                Step::Index(len) => self.index_expr(len, depth),
            });
        }
        Some(LValue { root, indices })
    }

    fn key_expr(&mut self, key: ElemType, depth: u32) -> Expr {
        match class_of(key) {
            Class::Num if self.rng.gen_bool(0.7) => {
                Expr::Number(U256::from(self.rng.gen_range(0u32..4)))
            }
            c => self.expr(c, depth + 1),
        }
    }

    fn index_expr(&mut self, len: Option<U256>, depth: u32) -> Expr {
        let bound = match len {
            Some(l) if self.rng.gen_bool(0.9) => l.as_u32(),
            Some(l) => l.as_u32() + 1,
            None => 2,
        };
        if self.rng.gen_bool(0.85) {
            Expr::Number(U256::from(self.rng.gen_range(0..bound)))
        } else {
            self.expr(Class::Num, depth + 2)
        }
    }

    fn block(&mut self, n: usize, depth: u32) -> Vec<Stmt> {
        self.scope.frames.push(Vec::new());
        let out = (0..n).map(|_| self.stmt(depth)).collect();
        self.scope.frames.pop();
        out
    }

    fn stmt(&mut self, depth: u32) -> Stmt {
        let nested = depth < 2;
        match self.rng.gen_range(0..20) {
            0..=6 => {
                let lv = self.storage_path(0, |t| matches!(t, TypeExpr::Elementary(_)), false);
                match lv {
                    Some(lv) => self.assign_storage(lv),
                    None => self.local_decl(),
                }
            }
            7 | 8 => {
                // Loop counters stay untouched so loops terminate.
                let locals: Vec<_> = self
                    .scope
                    .locals()
                    .filter(|(n, _)| !n.starts_with('i'))
                    .cloned()
                    .collect();
                match locals.choose(self.rng) {
                    Some((name, ty)) => {
                        let class = class_of(*ty);
                        let op = if class == Class::Num && self.rng.gen() {
                            AssignOp::Add
                        } else {
                            AssignOp::Set
                        };
                        Stmt::Assign {
                            target: LValue::var(name.clone()),
                            op,
                            value: self.expr(class, 1),
                        }
                    }
                    None => self.local_decl(),
                }
            }
            9 | 10 => self.local_decl(),
            11 => Stmt::Require {
                cond: self.expr(Class::Bool, 1),
                message: self.rng.gen_bool(0.5).then(|| "check failed".to_string()),
            },
            12 | 13 if nested => {
                let cond = self.expr(Class::Bool, 1);
                let n = self.rng.gen_range(1..=3);
                let then_block = self.block(n, depth + 1);
                let else_block = self.rng.gen_bool(0.5).then(|| {
                    let n = self.rng.gen_range(1..=2);
                    self.block(n, depth + 1)
                });
                Stmt::If {
                    cond,
                    then_block,
                    else_block,
                }
            }
            14 if nested && self.scope.loop_depth < 2 => {
                let var = self.scope.fresh("i");
                let bound = self.rng.gen_range(0u32..5);
                self.scope
                    .frames
                    .push(vec![(var.clone(), ElemType::Uint(256))]);
                self.scope.loop_depth += 1;
                let n = self.rng.gen_range(1..=3);
                let body = self.block(n, depth + 1);
                self.scope.loop_depth -= 1;
                self.scope.frames.pop();
                Stmt::For {
                    var: var.clone(),
                    init: Expr::num(0),
                    cond: Expr::bin(
                        BinOp::Lt,
                        Expr::var(var.clone()),
                        Expr::Number(U256::from(bound)),
                    ),
                    step_var: var,
                    step: Expr::num(1),
                    body,
                }
            }
            15 | 16 => {
                let target = self.storage_path(
                    0,
                    |t| matches!(t, TypeExpr::DynArray(e) if matches!(**e, TypeExpr::Elementary(_))),
                    true,
                );
                match target {
                    Some(target) => {
                        let elem = leaf_of(&self.lvalue_type(&target));
                        Stmt::Push {
                            value: self.expr(class_of(elem), 1),
                            target,
                        }
                    }
                    None => self.local_decl(),
                }
            }
            17 => Stmt::Pay {
                to: if self.rng.gen_bool(0.8) {
                    Expr::MsgSender
                } else {
                    self.expr(Class::Addr, 1)
                },
                amount: Expr::Number(U256::from(self.rng.gen_range(0u32..200))),
            },
            18 if self.scope.returns.is_some() && self.rng.gen_bool(0.3) => {
                let class = class_of(self.scope.returns.unwrap());
                Stmt::Return(Some(self.expr(class, 1)))
            }
            _ => self.local_decl(),
        }
    }

    fn lvalue_type(&self, lv: &LValue) -> TypeExpr {
        let var = self.scope.vars.iter().find(|v| v.name == lv.root).unwrap();
        let mut ty = var.ty.clone();
        for _ in &lv.indices {
            ty = match ty {
                TypeExpr::Mapping(_, v) | TypeExpr::DynArray(v) | TypeExpr::FixedArray(v, _) => *v,
                e => e,
            };
        }
        ty
    }

    fn assign_storage(&mut self, target: LValue) -> Stmt {
        let ty = leaf_of(&self.lvalue_type(&target));
        let class = class_of(ty);
        let op = if class == Class::Num {
            *[
                AssignOp::Set,
                AssignOp::Set,
                AssignOp::Add,
                AssignOp::Add,
                AssignOp::Sub,
                AssignOp::Mul,
            ]
            .choose(self.rng)
            .unwrap()
        } else {
            AssignOp::Set
        };
        let value = if class == Class::Num && op != AssignOp::Set && self.rng.gen_bool(0.6) {
            Expr::Number(U256::from(self.rng.gen_range(0u32..5)))
        } else {
            self.expr(class, 1)
        };
        Stmt::Assign { target, op, value }
    }

    fn local_decl(&mut self) -> Stmt {
        let ty = elem_type(self.rng);
        let value = self.expr(class_of(ty), 1);
        let name = self.scope.fresh("l");
        self.scope
            .frames
            .last_mut()
            .unwrap()
            .push((name.clone(), ty));
        Stmt::Local { ty, name, value }
    }
}

#[derive(Clone)]
enum Step {
    Key(ElemType),
    Index(Option<U256>),
}

fn collect_routes(
    ty: &TypeExpr,
    want: &impl Fn(&TypeExpr) -> bool,
    steps: &mut Vec<Step>,
    root: &str,
    out: &mut Vec<(String, Vec<Step>)>,
    shallow: bool,
) {
    if want(ty) {
        out.push((root.to_string(), steps.clone()));
        if shallow {
            return;
        }
    }
    let (step, inner) = match ty {
        TypeExpr::Elementary(_) => return,
        TypeExpr::Mapping(k, v) => (Step::Key(*k), v),
        TypeExpr::DynArray(v) => (Step::Index(None), v),
        TypeExpr::FixedArray(v, n) => (Step::Index(Some(*n)), v),
    };
    steps.push(step);
    collect_routes(inner, want, steps, root, out, shallow);
    steps.pop();
}

/// A random contract with `s*` state variables and `f*` functions.
pub fn contract<R: Rng>(rng: &mut R, name: &str) -> ContractDecl {
    let nvars = rng.gen_range(1..=6);
    let state_vars: Vec<StateVarDecl> = (0..nvars)
        .map(|i| StateVarDecl {
            name: format!("s{i}"),
            ty: type_expr(rng, 0),
            decl_index: i,
        })
        .collect();
    let nfuncs = rng.gen_range(1..=4);
    let mut functions = Vec::new();
    for f in 0..nfuncs {
        let params: Vec<Param> = (0..rng.gen_range(0..=3))
            .map(|i| Param {
                name: format!("p{i}"),
                ty: elem_type(rng),
            })
            .collect();
        let returns = rng.gen_bool(0.3).then(|| elem_type(rng));
        let payable = rng.gen_bool(0.3);
        let mut g = Gen {
            rng: &mut *rng,
            scope: Scope {
                vars: state_vars.clone(),
                frames: vec![params.iter().map(|p| (p.name.clone(), p.ty)).collect()],
                next_local: 0,
                returns,
                loop_depth: 0,
            },
        };
        let n = g.rng.gen_range(1..=6);
        let mut body = g.block(n, 0);
        if let Some(rt) = returns {
            if g.rng.gen_bool(0.7) {
                body.push(Stmt::Return(Some(g.expr(class_of(rt), 1))));
            }
        }
        functions.push(FunctionDecl {
            name: format!("f{f}"),
            params,
            payable,
            returns,
            body,
        });
    }
    ContractDecl {
        name: name.to_string(),
        state_vars,
        functions,
    }
}

pub fn source<R: Rng>(rng: &mut R) -> SourceUnit {
    let n = rng.gen_range(1..=2);
    let contracts = (0..n).map(|i| contract(rng, &format!("G{i}"))).collect();
    SourceUnit {
        text: String::new(),
        contracts,
    }
}

fn literal_for<R: Rng>(rng: &mut R, ty: ElemType, accounts: &[&str]) -> Literal {
    match ty {
        ElemType::Bool => Literal::Bool(rng.gen()),
        ElemType::Address => match rng.gen_range(0..4) {
            0 => Literal::Number(U256::from(rng.gen_range(0u32..4))),
            1 => Literal::Address(Address::for_alias("outsider")),
            _ => Literal::Alias(accounts.choose(rng).unwrap().to_string()),
        },
        _ => {
            let max = ty.max_unsigned();
            let n = match rng.gen_range(0..5) {
                0 => max,
                1 => max - U256::ONE,
                2 => U256::from(rng.gen_range(0u32..1000)),
                _ => U256::from(rng.gen_range(0u32..10)),
            };
            Literal::Number(n.min(max))
        }
    }
}

/// A DBDL path down to a value leaf, or to a dynamic array's length.
fn path_expr<R: Rng>(
    rng: &mut R,
    alias: &str,
    var: &StateVarDecl,
    accounts: &[&str],
) -> (PathExpr, ElemType) {
    let mut p = PathExpr::new(alias, &var.name);
    let mut ty = &var.ty;
    loop {
        match ty {
            TypeExpr::Elementary(e) => return (p, *e),
            TypeExpr::Mapping(k, v) => {
                p.keys.push(literal_for(rng, *k, accounts));
                ty = v;
            }
            TypeExpr::DynArray(v) => {
                if rng.gen_bool(0.3) {
                    p.length = true;
                    return (p, ElemType::Uint(256));
                }
                p.keys
                    .push(Literal::Number(U256::from(rng.gen_range(0u32..4))));
                ty = v;
            }
            TypeExpr::FixedArray(v, n) => {
                p.keys
                    .push(Literal::Number(U256::from(rng.gen_range(0..n.as_u32()))));
                ty = v;
            }
        }
    }
}

/// A case that validates against `contract`, funding the contract itself.
pub fn case<R: Rng>(rng: &mut R, decl: &ContractDecl, name: &str) -> TestCase {
    let mut case = TestCase::new(name);
    case.contracts.push(ContractRef {
        alias: decl.name.clone(),
        source: format!("{}.msol", decl.name.to_lowercase()),
    });
    let naccounts = rng.gen_range(1..=ACCOUNTS.len());
    let accounts: Vec<&str> = ACCOUNTS[..naccounts].to_vec();
    for a in &accounts {
        let balance = match rng.gen_range(0..6) {
            0 => U256::ZERO,
            1 => U256::from(rng.gen_range(1u32..5000)),
            _ => WEI_PER_ETHER,
        };
        case.accounts.push(AccountDecl {
            alias: a.to_string(),
            balance,
        });
    }
    if rng.gen_bool(0.8) {
        case.accounts.push(AccountDecl {
            alias: decl.name.clone(),
            balance: U256::from(rng.gen_range(0u32..5000)),
        });
    }
    for var in &decl.state_vars {
        if matches!(var.ty, TypeExpr::DynArray(_)) && rng.gen_bool(0.7) {
            let mut path = PathExpr::new(&decl.name, &var.name);
            path.length = true;
            let value = Literal::Number(U256::from(rng.gen_range(1u32..5)));
            case.prestate.push(PreStateParam { path, value });
        }
    }
    for _ in 0..rng.gen_range(0..=5) {
        let var = decl.state_vars.choose(rng).unwrap();
        let (path, leaf) = path_expr(rng, &decl.name, var, &accounts);
        let value = if path.length {
            Literal::Number(U256::from(rng.gen_range(0u32..4)))
        } else {
            literal_for(rng, leaf, &accounts)
        };
        case.prestate.push(PreStateParam { path, value });
    }
    for _ in 0..rng.gen_range(1..=5) {
        let f = decl.functions.choose(rng).unwrap();
        let args = f
            .params
            .iter()
            .map(|p| literal_for(rng, p.ty, &accounts))
            .collect();
        let value = if f.payable && rng.gen_bool(0.6) {
            *[U256::ONE, U256::new(1000), WEI_PER_ETHER]
                .choose(rng)
                .unwrap()
        } else {
            U256::ZERO
        };
        case.events.push(FrontendEvent {
            contract: decl.name.clone(),
            function: f.name.clone(),
            args,
            sender: accounts.choose(rng).unwrap().to_string(),
            value,
        });
    }
    for _ in 0..rng.gen_range(0..=3) {
        let var = decl.state_vars.choose(rng).unwrap();
        let (path, leaf) = path_expr(rng, &decl.name, var, &accounts);
        let cmp = *[Cmp::Eq, Cmp::Ne, Cmp::Lt, Cmp::Le, Cmp::Gt, Cmp::Ge]
            .choose(rng)
            .unwrap();
        let expected = if leaf == ElemType::Bool {
            Literal::Bool(rng.gen())
        } else {
            literal_for(rng, leaf, &accounts)
        };
        case.expectations.push(Expectation {
            path,
            cmp,
            expected,
        });
    }
    case
}

pub fn suite<R: Rng>(rng: &mut R, decls: &[ContractDecl]) -> TestSuite {
    let cases = (0..rng.gen_range(1..=3))
        .map(|i| {
            let decl = decls.choose(rng).unwrap();
            case(rng, decl, &format!("case {i}"))
        })
        .collect();
    TestSuite { cases }
}

/// A random resolved path to a value leaf or dynamic-array length.
pub fn variable_path<R: Rng>(rng: &mut R, contract: &str, var: &StateVarDecl) -> VariablePath {
    let mut p = VariablePath::new(contract, &var.name);
    let mut ty = &var.ty;
    loop {
        match ty {
            TypeExpr::Elementary(_) => return p,
            TypeExpr::Mapping(k, v) => {
                let word = random_word(rng) & k.max_unsigned();
                p.accessors.push(Accessor::Key(word));
                ty = v;
            }
            TypeExpr::DynArray(v) => {
                if rng.gen_bool(0.25) {
                    p.accessors.push(Accessor::Length);
                    return p;
                }
                let idx = if rng.gen() {
                    U256::from(rng.gen_range(0u32..64))
                } else {
                    U256::from(rng.gen::<u64>())
                };
                p.accessors.push(Accessor::Index(idx));
                ty = v;
            }
            TypeExpr::FixedArray(v, n) => {
                p.accessors
                    .push(Accessor::Index(U256::from(rng.gen_range(0..n.as_u32()))));
                ty = v;
            }
        }
    }
}

pub fn random_word<R: Rng>(rng: &mut R) -> U256 {
    U256::from_words(rng.gen(), rng.gen())
}

/// True when the contract declares a dynamic array anywhere.
pub fn uses_dyn_arrays(decl: &ContractDecl) -> bool {
    decl.state_vars.iter().any(|v| has_dyn_array(&v.ty))
}
