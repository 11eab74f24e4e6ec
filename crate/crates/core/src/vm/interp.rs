use std::collections::BTreeMap;

use super::{CallContext, CallStatus, ExecutionOutcome, TraceRecord, VmError, WorldState};
use crate::dbdl::BoundContract;
use crate::layout::{resolve_location, Accessor, AddressRegistry, Location, VariablePath};
use crate::minisol::{AssignOp, BinOp, ElemType, Expr, FunctionDecl, LValue, Stmt, TypeExpr};
use crate::word::{extract, insert, Address, SignedWord, I256, U256};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Value {
    Uint(U256),
    Int(I256),
    Bool(bool),
    Addr(Address),
}

enum Halt {
    Revert(String),
    StepLimit,
    Return(Option<U256>),
}

type Flow<T> = Result<T, Halt>;

fn revert<T>(msg: impl Into<String>) -> Flow<T> {
    Err(Halt::Revert(msg.into()))
}

fn confusion<T>(what: &str) -> Flow<T> {
    revert(format!("TypeConfusion: {what}"))
}

/// Converts a value to the representation of `ty`, reverting when it does not fit.
fn coerce(v: Value, ty: ElemType) -> Flow<Value> {
    match (ty, v) {
        (ElemType::Uint(_), Value::Uint(n)) => {
            if n <= ty.max_unsigned() {
                Ok(Value::Uint(n))
            } else {
                revert(format!("arithmetic overflow: value does not fit {ty}"))
            }
        }
        (ElemType::Uint(_), Value::Int(i)) => {
            if i >= 0 && i.as_u256() <= ty.max_unsigned() {
                Ok(Value::Uint(i.as_u256()))
            } else {
                revert(format!("arithmetic overflow: value does not fit {ty}"))
            }
        }
        (ElemType::Int256, Value::Int(i)) => Ok(Value::Int(i)),
        (ElemType::Int256, Value::Uint(n)) => {
            if n <= ty.max_unsigned() {
                Ok(Value::Int(n.as_i256()))
            } else {
                revert("arithmetic overflow: value does not fit int256")
            }
        }
        (ElemType::Bool, Value::Bool(b)) => Ok(Value::Bool(b)),
        (ElemType::Address, Value::Addr(a)) => Ok(Value::Addr(a)),
        (ElemType::Address, Value::Uint(n)) => match Address::from_word(n) {
            Some(a) => Ok(Value::Addr(a)),
            None => revert("arithmetic overflow: value does not fit address"),
        },
        _ => confusion(&format!("cannot use {v:?} as {ty}")),
    }
}

fn to_word(v: Value) -> U256 {
    match v {
        Value::Uint(n) => n,
        Value::Int(i) => i.as_u256(),
        Value::Bool(b) => U256::from(b as u8),
        Value::Addr(a) => a.to_word(),
    }
}

/// Interprets a stored word as a value of `ty`.
fn from_word(word: U256, ty: ElemType) -> Flow<Value> {
    match ty {
        ElemType::Uint(_) => Ok(Value::Uint(word)),
        ElemType::Int256 => Ok(Value::Int(word.as_i256())),
        ElemType::Bool => match word.as_u64() {
            0 if word == U256::ZERO => Ok(Value::Bool(false)),
            1 if word == U256::ONE => Ok(Value::Bool(true)),
            _ => confusion("stored bool is neither 0 nor 1"),
        },
        ElemType::Address => Address::from_word(word)
            .map(Value::Addr)
            .map_or_else(|| confusion("stored address exceeds 160 bits"), Ok),
    }
}

enum Numeric {
    U(U256, U256),
    I(I256, I256),
}

fn numeric_pair(a: Value, b: Value) -> Flow<Numeric> {
    let to_int = |n: U256| -> Flow<I256> {
        if n <= U256::MAX >> 1u32 {
            Ok(n.as_i256())
        } else {
            revert("arithmetic overflow: unsigned operand does not fit int256")
        }
    };
    match (a, b) {
        (Value::Uint(x), Value::Uint(y)) => Ok(Numeric::U(x, y)),
        (Value::Int(x), Value::Int(y)) => Ok(Numeric::I(x, y)),
        (Value::Uint(x), Value::Int(y)) => Ok(Numeric::I(to_int(x)?, y)),
        (Value::Int(x), Value::Uint(y)) => Ok(Numeric::I(x, to_int(y)?)),
        _ => confusion("arithmetic on non-numeric operands"),
    }
}

fn overflow<T>() -> Flow<T> {
    revert("arithmetic overflow")
}

fn arith(op: BinOp, a: Value, b: Value) -> Flow<Value> {
    match numeric_pair(a, b)? {
        Numeric::U(x, y) => {
            let r = match op {
                BinOp::Add => x.checked_add(y),
                BinOp::Sub => x.checked_sub(y),
                BinOp::Mul => x.checked_mul(y),
                BinOp::Div | BinOp::Mod if y == U256::ZERO => return revert("division by zero"),
                BinOp::Div => Some(x / y),
                BinOp::Mod => Some(x % y),
                _ => unreachable!("not arithmetic"),
            };
            r.map(Value::Uint).map_or_else(overflow, Ok)
        }
        Numeric::I(x, y) => {
            let r = match op {
                BinOp::Add => x.checked_add(y),
                BinOp::Sub => x.checked_sub(y),
                BinOp::Mul => x.checked_mul(y),
                BinOp::Div | BinOp::Mod if y == I256::ZERO => return revert("division by zero"),
                BinOp::Div => x.checked_div(y),
                // MIN % -1 is 0; only division can overflow
                BinOp::Mod => Some(x.wrapping_rem(y)),
                _ => unreachable!("not arithmetic"),
            };
            r.map(Value::Int).map_or_else(overflow, Ok)
        }
    }
}

fn compare(op: BinOp, a: Value, b: Value) -> Flow<bool> {
    use std::cmp::Ordering;
    let ord: Ordering = match (op, a, b) {
        (BinOp::Eq | BinOp::Ne, Value::Bool(x), Value::Bool(y)) => x.cmp(&y),
        (BinOp::Eq | BinOp::Ne, Value::Addr(x), Value::Addr(y)) => x.cmp(&y),
        (BinOp::Eq | BinOp::Ne, Value::Addr(x), Value::Uint(y)) => x.to_word().cmp(&y),
        (BinOp::Eq | BinOp::Ne, Value::Uint(x), Value::Addr(y)) => x.cmp(&y.to_word()),
        _ => match numeric_pair(a, b)? {
            Numeric::U(x, y) => x.cmp(&y),
            Numeric::I(x, y) => x.cmp(&y),
        },
    };
    Ok(match op {
        BinOp::Eq => ord == Ordering::Equal,
        BinOp::Ne => ord != Ordering::Equal,
        BinOp::Lt => ord == Ordering::Less,
        BinOp::Le => ord != Ordering::Greater,
        BinOp::Gt => ord == Ordering::Greater,
        BinOp::Ge => ord != Ordering::Less,
        _ => unreachable!("not a comparison"),
    })
}

fn expect_bool(v: Value) -> Flow<bool> {
    match v {
        Value::Bool(b) => Ok(b),
        _ => confusion("condition is not a bool"),
    }
}

struct Local {
    name: String,
    ty: ElemType,
    value: Value,
}

enum Target {
    Local(usize, usize),
    Storage { path: VariablePath, ty: TypeExpr },
}

struct Machine<'a> {
    state: &'a mut WorldState,
    contract: &'a BoundContract,
    registry: &'a mut AddressRegistry,
    ctx: &'a CallContext,
    function: &'a FunctionDecl,
    steps: u64,
    step_limit: u64,
    event_index: usize,
    traces: Vec<TraceRecord>,
    scopes: Vec<Vec<Local>>,
}

impl<'a> Machine<'a> {
    fn step(&mut self) -> Flow<()> {
        self.steps += 1;
        if self.steps > self.step_limit {
            Err(Halt::StepLimit)
        } else {
            Ok(())
        }
    }

    fn find_local(&self, name: &str) -> Option<(usize, usize)> {
        self.scopes
            .iter()
            .enumerate()
            .rev()
            .find_map(|(si, scope)| {
                scope
                    .iter()
                    .rposition(|l| l.name == name)
                    .map(|li| (si, li))
            })
    }

    fn declare(&mut self, name: &str, ty: ElemType, value: Value) -> Flow<()> {
        let value = coerce(value, ty)?;
        self.scopes
            .last_mut()
            .expect("a scope is always open")
            .push(Local {
                name: name.to_string(),
                ty,
                value,
            });
        Ok(())
    }

    fn locate(&mut self, path: &VariablePath) -> Flow<Location> {
        match resolve_location(&self.contract.layout, path, self.registry) {
            Ok(loc) => Ok(loc),
            Err(e) => revert(e.to_string()),
        }
    }

    fn read_location(&self, loc: &Location) -> U256 {
        let word = self.state.storage_word(&self.contract.alias, loc.addr.slot);
        extract(word, loc.addr.offset, loc.addr.width)
    }

    fn write_location(&mut self, loc: &Location, value: U256) {
        let old_word = self.state.storage_word(&self.contract.alias, loc.addr.slot);
        let new_word = insert(old_word, loc.addr.offset, loc.addr.width, value);
        self.state
            .set_storage_word(&self.contract.alias, loc.addr.slot, new_word);
        self.traces.push(TraceRecord {
            event_index: self.event_index,
            step_index: self.traces.len(),
            contract: self.contract.alias.clone(),
            slot: loc.addr.slot,
            offset: loc.addr.offset,
            width: loc.addr.width,
            old_word,
            new_word,
        });
    }

    fn array_length(&mut self, path: &VariablePath) -> Flow<U256> {
        let loc = self.locate(&path.clone().length())?;
        Ok(self.read_location(&loc))
    }

    fn resolve_target(&mut self, lv: &LValue) -> Flow<Target> {
        if let Some((si, li)) = self.find_local(&lv.root) {
            if !lv.indices.is_empty() {
                return confusion("indexing a local variable");
            }
            return Ok(Target::Local(si, li));
        }
        let var = match self.contract.decl.state_var(&lv.root) {
            Some(v) => v,
            None => return revert(format!("unknown name `{}`", lv.root)),
        };
        let mut ty = var.ty.clone();
        let mut path = VariablePath::new(&self.contract.alias, &lv.root);
        for idx_expr in &lv.indices {
            let idx = self.eval(idx_expr)?;
            match ty {
                TypeExpr::Mapping(key_ty, value) => {
                    let key = to_word(coerce(idx, key_ty)?);
                    path.accessors.push(Accessor::Key(key));
                    ty = *value;
                }
                TypeExpr::FixedArray(elem, len) => {
                    let i = to_word(coerce(idx, ElemType::Uint(256))?);
                    if i >= len {
                        return revert("index out of bounds");
                    }
                    path.accessors.push(Accessor::Index(i));
                    ty = *elem;
                }
                TypeExpr::DynArray(elem) => {
                    let i = to_word(coerce(idx, ElemType::Uint(256))?);
                    if i >= self.array_length(&path)? {
                        return revert("index out of bounds");
                    }
                    path.accessors.push(Accessor::Index(i));
                    ty = *elem;
                }
                TypeExpr::Elementary(_) => return confusion("indexing a value type"),
            }
        }
        Ok(Target::Storage { path, ty })
    }

    fn load(&mut self, lv: &LValue) -> Flow<Value> {
        match self.resolve_target(lv)? {
            Target::Local(si, li) => Ok(self.scopes[si][li].value),
            Target::Storage { path, ty } => {
                let Some(elem) = ty.as_value() else {
                    return confusion("reading a mapping or array as a value");
                };
                let loc = self.locate(&path)?;
                from_word(self.read_location(&loc), elem)
            }
        }
    }

    fn store(&mut self, target: Target, value: Value) -> Flow<()> {
        match target {
            Target::Local(si, li) => {
                let ty = self.scopes[si][li].ty;
                self.scopes[si][li].value = coerce(value, ty)?;
                Ok(())
            }
            Target::Storage { path, ty } => {
                let Some(elem) = ty.as_value() else {
                    return confusion("assigning to a mapping or array");
                };
                let word = to_word(coerce(value, elem)?);
                let loc = self.locate(&path)?;
                self.write_location(&loc, word);
                Ok(())
            }
        }
    }

    fn current(&mut self, target: &Target) -> Flow<Value> {
        match target {
            Target::Local(si, li) => Ok(self.scopes[*si][*li].value),
            Target::Storage { path, ty } => {
                let Some(elem) = ty.as_value() else {
                    return confusion("reading a mapping or array as a value");
                };
                let loc = self.locate(path)?;
                from_word(self.read_location(&loc), elem)
            }
        }
    }

    fn assign(&mut self, lv: &LValue, op: AssignOp, rhs: &Expr) -> Flow<()> {
        let target = self.resolve_target(lv)?;
        let value = self.eval(rhs)?;
        let value = match op.binary() {
            None => value,
            Some(bin) => {
                let cur = self.current(&target)?;
                arith(bin, cur, value)?
            }
        };
        self.store(target, value)
    }

    fn eval(&mut self, e: &Expr) -> Flow<Value> {
        match e {
            Expr::Number(n) => Ok(Value::Uint(*n)),
            Expr::Bool(b) => Ok(Value::Bool(*b)),
            Expr::MsgSender => Ok(Value::Addr(self.ctx.sender)),
            Expr::MsgValue => Ok(Value::Uint(self.ctx.value)),
            Expr::Load(lv) => self.load(lv),
            Expr::Length(lv) => match self.resolve_target(lv)? {
                Target::Storage {
                    ty: TypeExpr::FixedArray(_, len),
                    ..
                } => Ok(Value::Uint(len)),
                Target::Storage {
                    ty: TypeExpr::DynArray(_),
                    path,
                } => Ok(Value::Uint(self.array_length(&path)?)),
                _ => confusion("`.length` of a non-array"),
            },
            Expr::Not(inner) => Ok(Value::Bool(!expect_bool(self.eval(inner)?)?)),
            Expr::Binary(op, l, r) => match op {
                BinOp::And => {
                    if !expect_bool(self.eval(l)?)? {
                        return Ok(Value::Bool(false));
                    }
                    Ok(Value::Bool(expect_bool(self.eval(r)?)?))
                }
                BinOp::Or => {
                    if expect_bool(self.eval(l)?)? {
                        return Ok(Value::Bool(true));
                    }
                    Ok(Value::Bool(expect_bool(self.eval(r)?)?))
                }
                BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div | BinOp::Mod => {
                    let a = self.eval(l)?;
                    let b = self.eval(r)?;
                    arith(*op, a, b)
                }
                _ => {
                    let a = self.eval(l)?;
                    let b = self.eval(r)?;
                    Ok(Value::Bool(compare(*op, a, b)?))
                }
            },
        }
    }

    fn block(&mut self, stmts: &[Stmt]) -> Flow<()> {
        self.scopes.push(Vec::new());
        let result = stmts.iter().try_for_each(|s| self.stmt(s));
        self.scopes.pop();
        result
    }

    fn stmt(&mut self, s: &Stmt) -> Flow<()> {
        self.step()?;
        match s {
            Stmt::Assign { target, op, value } => self.assign(target, *op, value),
            Stmt::Require { cond, message } => {
                if expect_bool(self.eval(cond)?)? {
                    Ok(())
                } else {
                    revert(message.clone().unwrap_or_else(|| "require failed".into()))
                }
            }
            Stmt::If {
                cond,
                then_block,
                else_block,
            } => {
                if expect_bool(self.eval(cond)?)? {
                    self.block(then_block)
                } else if let Some(e) = else_block {
                    self.block(e)
                } else {
                    Ok(())
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
                self.scopes.push(Vec::new());
                let result = (|| {
                    match self.find_local(var) {
                        Some((si, li)) => self.store(Target::Local(si, li), start)?,
                        None => self.declare(var, ElemType::Uint(256), start)?,
                    }
                    let step_lv = LValue::var(step_var.clone());
                    while expect_bool(self.eval(cond)?)? {
                        self.step()?;
                        self.block(body)?;
                        self.assign(&step_lv, AssignOp::Add, step)?;
                    }
                    Ok(())
                })();
                self.scopes.pop();
                result
            }
            Stmt::Return(value) => {
                let word = match (value, self.function.returns) {
                    (None, _) => None,
                    (Some(e), Some(ty)) => {
                        let v = self.eval(e)?;
                        Some(to_word(coerce(v, ty)?))
                    }
                    (Some(_), None) => {
                        return confusion("returning a value from a function without `returns`")
                    }
                };
                Err(Halt::Return(word))
            }
            Stmt::Pay { to, amount } => {
                let to = self.eval(to)?;
                let Value::Addr(to) = coerce(to, ElemType::Address)? else {
                    unreachable!()
                };
                let amount = to_word(coerce(self.eval(amount)?, ElemType::Uint(256))?);
                let from = self.contract.address;
                if self.state.balance(&from) < amount {
                    return revert("insufficient contract balance");
                }
                self.state.transfer(from, to, amount);
                Ok(())
            }
            Stmt::Local { ty, name, value } => {
                let v = self.eval(value)?;
                self.declare(name, *ty, v)
            }
            Stmt::Push { target, value } => {
                let Target::Storage {
                    path,
                    ty: TypeExpr::DynArray(elem),
                } = self.resolve_target(target)?
                else {
                    return confusion("`.push` on a non-array");
                };
                let Some(elem_ty) = elem.as_value() else {
                    return confusion("`.push` of a non-value element");
                };
                let v = to_word(coerce(self.eval(value)?, elem_ty)?);
                let len_loc = self.locate(&path.clone().length())?;
                let len = self.read_location(&len_loc);
                let Some(new_len) = len.checked_add(U256::ONE) else {
                    return overflow();
                };
                self.write_location(&len_loc, new_len);
                let elem_loc = self.locate(&path.index(len))?;
                self.write_location(&elem_loc, v);
                Ok(())
            }
        }
    }
}

fn arg_value(word: U256, ty: ElemType) -> Result<Value, String> {
    match ty {
        ElemType::Uint(_) if word <= ty.max_unsigned() => Ok(Value::Uint(word)),
        ElemType::Int256 => Ok(Value::Int(word.as_i256())),
        ElemType::Bool if word <= U256::ONE => Ok(Value::Bool(word == U256::ONE)),
        ElemType::Address => Address::from_word(word)
            .map(Value::Addr)
            .ok_or_else(|| "does not fit address".to_string()),
        _ => Err(format!("does not fit {ty}")),
    }
}

fn balance_deltas(
    before: &BTreeMap<Address, U256>,
    state: &WorldState,
) -> BTreeMap<Address, SignedWord> {
    let mut out = BTreeMap::new();
    for (addr, now) in state.accounts() {
        let then = before.get(addr).copied().unwrap_or(U256::ZERO);
        if then != *now {
            out.insert(*addr, SignedWord::diff_unsigned(then, *now));
        }
    }
    out
}

pub(super) fn execute(
    state: &mut WorldState,
    contract: &BoundContract,
    function: &str,
    ctx: &CallContext,
    step_limit: u64,
    event_index: usize,
    registry: &mut AddressRegistry,
) -> Result<ExecutionOutcome, VmError> {
    let func = contract
        .decl
        .function(function)
        .ok_or_else(|| VmError::UnknownFunction(function.to_string()))?;
    if func.params.len() != ctx.args.len() {
        return Err(VmError::ArityMismatch {
            function: function.to_string(),
            expected: func.params.len(),
            found: ctx.args.len(),
        });
    }
    let mut params = Vec::with_capacity(func.params.len());
    for (p, w) in func.params.iter().zip(&ctx.args) {
        let value = arg_value(*w, p.ty).map_err(|reason| VmError::BadArgument {
            param: p.name.clone(),
            reason,
        })?;
        params.push(Local {
            name: p.name.clone(),
            ty: p.ty,
            value,
        });
    }

    let token = state.snapshot();
    let mut machine = Machine {
        state,
        contract,
        registry,
        ctx,
        function: func,
        steps: 0,
        step_limit,
        event_index,
        traces: Vec::new(),
        scopes: vec![params],
    };
    let run = (|| {
        if ctx.value > U256::ZERO {
            if !func.payable {
                return revert("function is not payable");
            }
            if machine.state.balance(&ctx.sender) < ctx.value {
                return revert("insufficient balance for call value");
            }
            machine
                .state
                .transfer(ctx.sender, contract.address, ctx.value);
        }
        machine.block(&func.body)
    })();
    let traces = std::mem::take(&mut machine.traces);
    let status = match run {
        Ok(()) => CallStatus::Success(None),
        Err(Halt::Return(w)) => CallStatus::Success(w),
        Err(Halt::Revert(msg)) => CallStatus::Revert(msg),
        Err(Halt::StepLimit) => CallStatus::StepLimitExceeded,
    };
    let outcome = if status.is_success() {
        let before = state.balances_at(token).cloned().unwrap_or_default();
        ExecutionOutcome {
            status,
            traces,
            balance_deltas: balance_deltas(&before, state),
        }
    } else {
        state.rollback(token)?;
        ExecutionOutcome {
            status,
            traces: Vec::new(),
            balance_deltas: BTreeMap::new(),
        }
    };
    state.discard(token)?;
    Ok(outcome)
}
