//! Reference interpreter for the differential test. Storage is a table keyed
//! by variable path, so no slot arithmetic or hashing is involved; numbers are
//! arbitrary precision with explicit range checks.

use std::collections::{BTreeMap, BTreeSet};

use kaya_core::dbdl::{Literal, PathExpr, TestCase};
use kaya_core::minisol::{
    AssignOp, BinOp, ContractDecl, ElemType, Expr, FunctionDecl, LValue, Stmt, TypeExpr,
};
use kaya_core::word::{Address, U256};
use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{One, Signed, Zero};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum OAcc {
    Key(BigUint),
    Index(BigUint),
    Length,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct OPath {
    pub contract: String,
    pub root: String,
    pub accs: Vec<OAcc>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OStatus {
    Success(Option<BigUint>),
    Revert,
    StepLimit,
}

impl OStatus {
    pub fn label(&self) -> &'static str {
        match self {
            OStatus::Success(_) => "success",
            OStatus::Revert => "revert",
            OStatus::StepLimit => "step_limit_exceeded",
        }
    }
}

#[derive(Clone, Debug)]
pub struct OracleRun {
    pub statuses: Vec<OStatus>,
    /// Every path named in the case or written by a successful call.
    pub watched: BTreeSet<OPath>,
    pub initial: BTreeMap<OPath, BigUint>,
    pub storage: BTreeMap<OPath, BigUint>,
    pub balances: BTreeMap<Address, BigUint>,
}

impl OracleRun {
    pub fn initial_value(&self, p: &OPath) -> BigUint {
        self.initial.get(p).cloned().unwrap_or_default()
    }

    pub fn final_value(&self, p: &OPath) -> BigUint {
        self.storage.get(p).cloned().unwrap_or_default()
    }
}

pub fn big(w: U256) -> BigUint {
    BigUint::from_bytes_be(&w.to_be_bytes())
}

fn pow2(n: u32) -> BigInt {
    BigInt::one() << n
}

fn word_mod() -> BigInt {
    pow2(256)
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum V {
    U(BigInt),
    I(BigInt),
    B(bool),
    A(BigInt),
}

struct Halt(OStatus);

type R<T> = Result<T, Halt>;

fn revert<T>() -> R<T> {
    Err(Halt(OStatus::Revert))
}

fn umax(bits: u32) -> BigInt {
    pow2(bits) - 1
}

fn imax() -> BigInt {
    pow2(255) - 1
}

fn imin() -> BigInt {
    -pow2(255)
}

fn coerce(v: V, ty: ElemType) -> R<V> {
    match (ty, v) {
        (ElemType::Uint(b), V::U(n)) | (ElemType::Uint(b), V::I(n)) => {
            if !n.is_negative() && n <= umax(u32::from(b)) {
                Ok(V::U(n))
            } else {
                revert()
            }
        }
        (ElemType::Int256, V::I(n)) => Ok(V::I(n)),
        (ElemType::Int256, V::U(n)) if n <= imax() => Ok(V::I(n)),
        (ElemType::Bool, V::B(b)) => Ok(V::B(b)),
        (ElemType::Address, V::A(a)) => Ok(V::A(a)),
        (ElemType::Address, V::U(n)) if n < pow2(160) => Ok(V::A(n)),
        _ => revert(),
    }
}

fn to_word(v: &V) -> BigUint {
    let n = match v {
        V::U(n) | V::A(n) => n.clone(),
        V::I(n) => ((n % word_mod()) + word_mod()) % word_mod(),
        V::B(b) => BigInt::from(u8::from(*b)),
    };
    n.to_biguint().expect("normalized")
}

fn from_word(w: &BigUint, ty: ElemType) -> R<V> {
    let n = BigInt::from_biguint(Sign::Plus, w.clone());
    match ty {
        ElemType::Uint(_) => Ok(V::U(n)),
        ElemType::Int256 => Ok(V::I(if n > imax() { n - word_mod() } else { n })),
        ElemType::Bool if n.is_zero() => Ok(V::B(false)),
        ElemType::Bool if n.is_one() => Ok(V::B(true)),
        ElemType::Address if n < pow2(160) => Ok(V::A(n)),
        _ => revert(),
    }
}

enum Pair {
    U(BigInt, BigInt),
    I(BigInt, BigInt),
}

fn pair(a: V, b: V) -> R<Pair> {
    let signed = |n: BigInt| if n <= imax() { Ok(n) } else { revert() };
    match (a, b) {
        (V::U(x), V::U(y)) => Ok(Pair::U(x, y)),
        (V::I(x), V::I(y)) => Ok(Pair::I(x, y)),
        (V::U(x), V::I(y)) => Ok(Pair::I(signed(x)?, y)),
        (V::I(x), V::U(y)) => Ok(Pair::I(x, signed(y)?)),
        _ => revert(),
    }
}

fn arith(op: BinOp, a: V, b: V) -> R<V> {
    let (x, y, signed) = match pair(a, b)? {
        Pair::U(x, y) => (x, y, false),
        Pair::I(x, y) => (x, y, true),
    };
    let r = match op {
        BinOp::Add => &x + &y,
        BinOp::Sub => &x - &y,
        BinOp::Mul => &x * &y,
        BinOp::Div | BinOp::Mod if y.is_zero() => return revert(),
        // BigInt division truncates toward zero; the remainder takes the dividend's sign.
        BinOp::Div => &x / &y,
        BinOp::Mod => &x % &y,
        _ => unreachable!(),
    };
    let (lo, hi) = if signed {
        (imin(), imax())
    } else {
        (BigInt::zero(), umax(256))
    };
    if r < lo || r > hi {
        return revert();
    }
    Ok(if signed { V::I(r) } else { V::U(r) })
}

fn compare(op: BinOp, a: V, b: V) -> R<bool> {
    let (x, y) = match (op, a, b) {
        (BinOp::Eq | BinOp::Ne, V::B(x), V::B(y)) => {
            (BigInt::from(u8::from(x)), BigInt::from(u8::from(y)))
        }
        (BinOp::Eq | BinOp::Ne, V::A(x), V::A(y) | V::U(y)) => (x, y),
        (BinOp::Eq | BinOp::Ne, V::U(x), V::A(y)) => (x, y),
        (_, a, b) => match pair(a, b)? {
            Pair::U(x, y) | Pair::I(x, y) => (x, y),
        },
    };
    Ok(match op {
        BinOp::Eq => x == y,
        BinOp::Ne => x != y,
        BinOp::Lt => x < y,
        BinOp::Le => x <= y,
        BinOp::Gt => x > y,
        BinOp::Ge => x >= y,
        _ => unreachable!(),
    })
}

fn truth(v: V) -> R<bool> {
    match v {
        V::B(b) => Ok(b),
        _ => revert(),
    }
}

#[derive(Clone, Default)]
struct World {
    storage: BTreeMap<OPath, BigUint>,
    balances: BTreeMap<Address, BigUint>,
}

impl World {
    fn balance(&self, a: &Address) -> BigUint {
        self.balances.get(a).cloned().unwrap_or_default()
    }

    fn transfer(&mut self, from: Address, to: Address, amount: &BigUint) {
        let f = self.balance(&from) - amount;
        self.balances.insert(from, f);
        let t = self.balance(&to) + amount;
        self.balances.insert(to, t);
    }
}

enum Place {
    Local(usize, usize),
    Store(OPath, TypeExpr),
}

struct Call<'a> {
    world: &'a mut World,
    decl: &'a ContractDecl,
    func: &'a FunctionDecl,
    alias: &'a str,
    sender: Address,
    value: BigUint,
    steps: u64,
    limit: u64,
    frames: Vec<Vec<(String, ElemType, V)>>,
    written: Vec<OPath>,
}

impl Call<'_> {
    fn tick(&mut self) -> R<()> {
        self.steps += 1;
        if self.steps > self.limit {
            Err(Halt(OStatus::StepLimit))
        } else {
            Ok(())
        }
    }

    fn local(&self, name: &str) -> Option<(usize, usize)> {
        (0..self.frames.len()).rev().find_map(|f| {
            self.frames[f]
                .iter()
                .rposition(|(n, _, _)| n == name)
                .map(|i| (f, i))
        })
    }

    fn read(&self, p: &OPath) -> BigUint {
        self.world.storage.get(p).cloned().unwrap_or_default()
    }

    fn write(&mut self, p: OPath, w: BigUint) {
        self.written.push(p.clone());
        self.world.storage.insert(p, w);
    }

    fn index(&mut self, e: &Expr) -> R<BigUint> {
        let v = self.eval(e)?;
        Ok(to_word(&coerce(v, ElemType::Uint(256))?))
    }

    fn place(&mut self, lv: &LValue) -> R<Place> {
        if let Some((f, i)) = self.local(&lv.root) {
            return if lv.indices.is_empty() {
                Ok(Place::Local(f, i))
            } else {
                revert()
            };
        }
        let Some(var) = self.decl.state_var(&lv.root) else {
            return revert();
        };
        let mut ty = var.ty.clone();
        let mut path = OPath {
            contract: self.alias.to_string(),
            root: lv.root.clone(),
            accs: Vec::new(),
        };
        for e in &lv.indices {
            match ty {
                TypeExpr::Mapping(k, v) => {
                    let key = self.eval(e)?;
                    path.accs.push(OAcc::Key(to_word(&coerce(key, k)?)));
                    ty = *v;
                }
                TypeExpr::FixedArray(v, n) => {
                    let i = self.index(e)?;
                    if i >= big(n) {
                        return revert();
                    }
                    path.accs.push(OAcc::Index(i));
                    ty = *v;
                }
                TypeExpr::DynArray(v) => {
                    let i = self.index(e)?;
                    if i >= self.read(&length_of(&path)) {
                        return revert();
                    }
                    path.accs.push(OAcc::Index(i));
                    ty = *v;
                }
                TypeExpr::Elementary(_) => return revert(),
            }
        }
        Ok(Place::Store(path, ty))
    }

    fn get(&mut self, place: &Place) -> R<V> {
        match place {
            Place::Local(f, i) => Ok(self.frames[*f][*i].2.clone()),
            Place::Store(p, TypeExpr::Elementary(t)) => from_word(&self.read(p), *t),
            Place::Store(..) => revert(),
        }
    }

    fn put(&mut self, place: Place, v: V) -> R<()> {
        match place {
            Place::Local(f, i) => {
                let t = self.frames[f][i].1;
                self.frames[f][i].2 = coerce(v, t)?;
                Ok(())
            }
            Place::Store(p, TypeExpr::Elementary(t)) => {
                let w = to_word(&coerce(v, t)?);
                self.write(p, w);
                Ok(())
            }
            Place::Store(..) => revert(),
        }
    }

    fn eval(&mut self, e: &Expr) -> R<V> {
        match e {
            Expr::Number(n) => Ok(V::U(BigInt::from_biguint(Sign::Plus, big(*n)))),
            Expr::Bool(b) => Ok(V::B(*b)),
            Expr::MsgSender => Ok(V::A(BigInt::from_bytes_be(Sign::Plus, &self.sender.0))),
            Expr::MsgValue => Ok(V::U(BigInt::from_biguint(Sign::Plus, self.value.clone()))),
            Expr::Load(lv) => {
                let p = self.place(lv)?;
                self.get(&p)
            }
            Expr::Length(lv) => match self.place(lv)? {
                Place::Store(_, TypeExpr::FixedArray(_, n)) => {
                    Ok(V::U(BigInt::from_biguint(Sign::Plus, big(n))))
                }
                Place::Store(p, TypeExpr::DynArray(_)) => Ok(V::U(BigInt::from_biguint(
                    Sign::Plus,
                    self.read(&length_of(&p)),
                ))),
                _ => revert(),
            },
            Expr::Not(x) => Ok(V::B(!truth(self.eval(x)?)?)),
            Expr::Binary(BinOp::And, l, r) => {
                Ok(V::B(truth(self.eval(l)?)? && truth(self.eval(r)?)?))
            }
            Expr::Binary(BinOp::Or, l, r) => {
                Ok(V::B(truth(self.eval(l)?)? || truth(self.eval(r)?)?))
            }
            Expr::Binary(op, l, r) => {
                let a = self.eval(l)?;
                let b = self.eval(r)?;
                match op {
                    BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div | BinOp::Mod => {
                        arith(*op, a, b)
                    }
                    _ => compare(*op, a, b).map(V::B),
                }
            }
        }
    }

    fn block(&mut self, body: &[Stmt]) -> R<()> {
        self.frames.push(Vec::new());
        let r = body.iter().try_for_each(|s| self.exec(s));
        self.frames.pop();
        r
    }

    fn update(&mut self, lv: &LValue, op: AssignOp, rhs: &Expr) -> R<()> {
        let place = self.place(lv)?;
        let v = self.eval(rhs)?;
        let v = match op {
            AssignOp::Set => v,
            AssignOp::Add => arith(BinOp::Add, self.get(&place)?, v)?,
            AssignOp::Sub => arith(BinOp::Sub, self.get(&place)?, v)?,
            AssignOp::Mul => arith(BinOp::Mul, self.get(&place)?, v)?,
        };
        self.put(place, v)
    }

    fn exec(&mut self, s: &Stmt) -> R<()> {
        self.tick()?;
        match s {
            Stmt::Assign { target, op, value } => self.update(target, *op, value),
            Stmt::Require { cond, .. } => {
                if truth(self.eval(cond)?)? {
                    Ok(())
                } else {
                    revert()
                }
            }
            Stmt::If {
                cond,
                then_block,
                else_block,
            } => {
                if truth(self.eval(cond)?)? {
                    self.block(then_block)
                } else {
                    else_block.as_ref().map_or(Ok(()), |b| self.block(b))
                }
            }
            Stmt::For {
                var,
                init,
                cond,
                step_var,
                step,
                body,
            } => {
                let start = self.eval(init)?;
                self.frames.push(Vec::new());
                let r = (|| {
                    match self.local(var) {
                        Some((f, i)) => self.put(Place::Local(f, i), start)?,
                        None => {
                            let v = coerce(start, ElemType::Uint(256))?;
                            self.frames.last_mut().unwrap().push((
                                var.clone(),
                                ElemType::Uint(256),
                                v,
                            ));
                        }
                    }
                    let counter = LValue {
                        root: step_var.clone(),
                        indices: vec![],
                    };
                    while truth(self.eval(cond)?)? {
                        self.tick()?;
                        self.block(body)?;
                        self.update(&counter, AssignOp::Add, step)?;
                    }
                    Ok(())
                })();
                self.frames.pop();
                r
            }
            Stmt::Return(e) => {
                let w = match (e, self.func.returns) {
                    (None, _) => None,
                    (Some(e), Some(t)) => {
                        let v = self.eval(e)?;
                        Some(to_word(&coerce(v, t)?))
                    }
                    (Some(_), None) => return revert(),
                };
                Err(Halt(OStatus::Success(w)))
            }
            Stmt::Pay { to, amount } => {
                let to = to_word(&coerce(self.eval(to)?, ElemType::Address)?);
                let amount = to_word(&coerce(self.eval(amount)?, ElemType::Uint(256))?);
                let me = Address::for_alias(self.alias);
                if self.world.balance(&me) < amount {
                    return revert();
                }
                self.world.transfer(me, address(&to), &amount);
                Ok(())
            }
            Stmt::Local { ty, name, value } => {
                let v = coerce(self.eval(value)?, *ty)?;
                self.frames.last_mut().unwrap().push((name.clone(), *ty, v));
                Ok(())
            }
            Stmt::Push { target, value } => {
                let Place::Store(p, TypeExpr::DynArray(elem)) = self.place(target)? else {
                    return revert();
                };
                let TypeExpr::Elementary(t) = *elem else {
                    return revert();
                };
                let w = to_word(&coerce(self.eval(value)?, t)?);
                let len_path = length_of(&p);
                let len = self.read(&len_path);
                let new_len = &len + 1u32;
                if BigInt::from_biguint(Sign::Plus, new_len.clone()) > umax(256) {
                    return revert();
                }
                self.write(len_path, new_len);
                let mut elem_path = p;
                elem_path.accs.push(OAcc::Index(len));
                self.write(elem_path, w);
                Ok(())
            }
        }
    }
}

fn length_of(p: &OPath) -> OPath {
    let mut l = p.clone();
    l.accs.push(OAcc::Length);
    l
}

fn address(w: &BigUint) -> Address {
    let bytes = w.to_bytes_be();
    let mut a = [0u8; 20];
    a[20 - bytes.len()..].copy_from_slice(&bytes);
    Address(a)
}

fn literal(l: &Literal) -> BigUint {
    match l {
        Literal::Number(n) => big(*n),
        Literal::Bool(b) => BigUint::from(u8::from(*b)),
        Literal::Alias(a) => BigUint::from_bytes_be(&Address::for_alias(a).0),
        Literal::Address(a) => BigUint::from_bytes_be(&a.0),
    }
}

fn path_of(p: &PathExpr, decls: &BTreeMap<String, &ContractDecl>) -> OPath {
    let decl = decls[&p.contract];
    let mut ty = decl.state_var(&p.root).expect("validated path").ty.clone();
    let mut accs = Vec::new();
    for k in &p.keys {
        let (acc, next) = match ty {
            TypeExpr::Mapping(_, v) => (OAcc::Key(literal(k)), *v),
            TypeExpr::DynArray(v) | TypeExpr::FixedArray(v, _) => (OAcc::Index(literal(k)), *v),
            TypeExpr::Elementary(_) => panic!("validated path is too deep"),
        };
        accs.push(acc);
        ty = next;
    }
    if p.length {
        accs.push(OAcc::Length);
    }
    OPath {
        contract: p.contract.clone(),
        root: p.root.clone(),
        accs,
    }
}

fn arg(w: BigUint, t: ElemType) -> V {
    let n = BigInt::from_biguint(Sign::Plus, w);
    match t {
        ElemType::Uint(_) => V::U(n),
        ElemType::Int256 => V::I(n),
        ElemType::Bool => V::B(!n.is_zero()),
        ElemType::Address => V::A(n),
    }
}

/// Runs a case that already passed validation.
pub fn run_case(case: &TestCase, contracts: &[ContractDecl], step_limit: u64) -> OracleRun {
    let decls: BTreeMap<String, &ContractDecl> = case
        .contracts
        .iter()
        .map(|r| {
            let d = contracts
                .iter()
                .find(|c| c.name == r.alias)
                .expect("validated contract");
            (r.alias.clone(), d)
        })
        .collect();
    let mut world = World::default();
    for alias in decls.keys() {
        world
            .balances
            .insert(Address::for_alias(alias), BigUint::zero());
    }
    for a in &case.accounts {
        world
            .balances
            .insert(Address::for_alias(&a.alias), big(a.balance));
    }
    let mut watched = BTreeSet::new();
    for p in &case.prestate {
        let path = path_of(&p.path, &decls);
        watched.insert(path.clone());
        world.storage.insert(path, literal(&p.value));
    }
    for x in &case.expectations {
        watched.insert(path_of(&x.path, &decls));
    }
    let initial = world.storage.clone();

    let mut statuses = Vec::new();
    for e in &case.events {
        let decl = decls[&e.contract];
        let func = decl.function(&e.function).expect("validated function");
        let sender = Address::for_alias(&e.sender);
        let value = big(e.value);
        let saved = world.clone();
        let params = func
            .params
            .iter()
            .zip(&e.args)
            .map(|(p, a)| (p.name.clone(), p.ty, arg(literal(a), p.ty)))
            .collect();
        let mut call = Call {
            world: &mut world,
            decl,
            func,
            alias: &e.contract,
            sender,
            value: value.clone(),
            steps: 0,
            limit: step_limit,
            frames: vec![params],
            written: Vec::new(),
        };
        let result = (|| {
            if !value.is_zero() {
                if !func.payable || call.world.balance(&sender) < value {
                    return revert();
                }
                call.world
                    .transfer(sender, Address::for_alias(&e.contract), &value);
            }
            call.block(&func.body)
        })();
        let status = match result {
            Ok(()) => OStatus::Success(None),
            Err(Halt(s)) => s,
        };
        let written = std::mem::take(&mut call.written);
        if matches!(status, OStatus::Success(_)) {
            watched.extend(written);
        } else {
            world = saved;
        }
        statuses.push(status);
    }
    OracleRun {
        statuses,
        watched,
        initial,
        storage: world.storage,
        balances: world.balances,
    }
}
