use std::collections::{HashMap, HashSet};

use super::ast::*;
use super::SourceError;
use crate::lex::{tokenize, CommentStyle, Cursor, Expected, Pos, Tok};

const KEYWORDS: &[&str] = &[
    "contract", "mapping", "function", "payable", "returns", "require", "if", "else", "for",
    "return", "pay", "true", "false", "msg",
];

fn is_reserved(name: &str) -> bool {
    KEYWORDS.contains(&name) || ElemType::from_name(name).is_some()
}

impl From<Expected> for SourceError {
    fn from(e: Expected) -> Self {
        SourceError::Syntax {
            line: e.pos.line,
            col: e.pos.col,
            expected: e.expected,
            found: e.found,
        }
    }
}

type PResult<T> = Result<T, SourceError>;

struct Parser {
    cur: Cursor,
    // Lexical scopes of the function currently being parsed.
    scopes: Vec<HashSet<String>>,
    // Identifiers not bound to a local; checked against state vars afterwards.
    free_names: Vec<(String, Pos)>,
    name_errors: Vec<SourceError>,
}

pub(super) fn parse(text: &str) -> Result<Vec<ContractDecl>, Vec<SourceError>> {
    let toks = tokenize(text, CommentStyle::DoubleSlash).map_err(|e| {
        vec![SourceError::Syntax {
            line: e.pos.line,
            col: e.pos.col,
            expected: "valid token".into(),
            found: e.message,
        }]
    })?;
    let mut p = Parser {
        cur: Cursor::new(toks),
        scopes: Vec::new(),
        free_names: Vec::new(),
        name_errors: Vec::new(),
    };
    let mut contracts = Vec::new();
    let mut seen: HashMap<String, Pos> = HashMap::new();
    while !p.cur.at_eof() {
        let pos = p.cur.pos();
        let c = p.contract().map_err(|e| vec![e])?;
        if seen.insert(c.name.clone(), pos).is_some() {
            p.name_errors.push(SourceError::DuplicateName {
                name: c.name.clone(),
                line: pos.line,
                col: pos.col,
            });
        }
        contracts.push(c);
    }
    if p.name_errors.is_empty() {
        Ok(contracts)
    } else {
        Err(p.name_errors)
    }
}

impl Parser {
    fn ident(&mut self, what: &str) -> PResult<(String, Pos)> {
        let pos = self.cur.pos();
        match self.cur.peek().clone() {
            Tok::Ident(s) if !is_reserved(&s) => {
                self.cur.advance();
                Ok((s, pos))
            }
            _ => Err(self.cur.error(what).into()),
        }
    }

    fn duplicate(&mut self, name: &str, pos: Pos) {
        self.name_errors.push(SourceError::DuplicateName {
            name: name.to_string(),
            line: pos.line,
            col: pos.col,
        });
    }

    fn contract(&mut self) -> PResult<ContractDecl> {
        self.cur.expect_kw("contract")?;
        let (name, _) = self.ident("contract name")?;
        self.cur.expect_punct("{")?;
        let mut state_vars = Vec::new();
        let mut functions = Vec::new();
        let mut member_names: HashSet<String> = HashSet::new();
        self.free_names.clear();
        while !self.cur.eat_punct("}") {
            if self.cur.is_kw("function") {
                let pos = self.cur.pos_at(1);
                let f = self.function()?;
                if !member_names.insert(f.name.clone()) {
                    self.duplicate(&f.name, pos);
                }
                functions.push(f);
            } else {
                let ty = self.type_expr()?;
                let (vname, pos) = self.ident("state variable name")?;
                self.cur.expect_punct(";")?;
                if !member_names.insert(vname.clone()) {
                    self.duplicate(&vname, pos);
                }
                state_vars.push(StateVarDecl {
                    decl_index: state_vars.len(),
                    name: vname,
                    ty,
                });
            }
        }
        let known: HashSet<&str> = state_vars.iter().map(|v| v.name.as_str()).collect();
        let unknown: Vec<_> = self
            .free_names
            .drain(..)
            .filter(|(n, _)| !known.contains(n.as_str()))
            .collect();
        for (n, pos) in unknown {
            self.name_errors.push(SourceError::UnknownName {
                name: n,
                line: pos.line,
                col: pos.col,
            });
        }
        Ok(ContractDecl {
            name,
            state_vars,
            functions,
        })
    }

    fn elem(&mut self) -> PResult<ElemType> {
        if let Tok::Ident(s) = self.cur.peek() {
            if let Some(e) = ElemType::from_name(s) {
                self.cur.advance();
                return Ok(e);
            }
        }
        Err(self.cur.error("elementary type").into())
    }

    fn at_elem(&self) -> bool {
        matches!(self.cur.peek(), Tok::Ident(s) if ElemType::from_name(s).is_some())
    }

    fn type_expr(&mut self) -> PResult<TypeExpr> {
        let mut ty = if self.cur.eat_kw("mapping") {
            self.cur.expect_punct("(")?;
            let key = self.elem()?;
            self.cur.expect_punct("=>")?;
            let value = self.type_expr()?;
            self.cur.expect_punct(")")?;
            TypeExpr::Mapping(key, Box::new(value))
        } else {
            TypeExpr::Elementary(self.elem()?)
        };
        while self.cur.is_punct("[") {
            self.cur.advance();
            if self.cur.eat_punct("]") {
                ty = TypeExpr::DynArray(Box::new(ty));
            } else {
                let pos = self.cur.pos();
                let (n, _) = self.cur.expect_number()?;
                if n == 0 {
                    return Err(SourceError::Syntax {
                        line: pos.line,
                        col: pos.col,
                        expected: "positive array length".into(),
                        found: "0".into(),
                    });
                }
                self.cur.expect_punct("]")?;
                ty = TypeExpr::FixedArray(Box::new(ty), n);
            }
        }
        Ok(ty)
    }

    fn function(&mut self) -> PResult<FunctionDecl> {
        self.cur.expect_kw("function")?;
        let (name, _) = self.ident("function name")?;
        self.cur.expect_punct("(")?;
        let mut params = Vec::new();
        let mut names = HashSet::new();
        if !self.cur.is_punct(")") {
            loop {
                let ty = self.elem()?;
                let (pname, pos) = self.ident("parameter name")?;
                if !names.insert(pname.clone()) {
                    self.duplicate(&pname, pos);
                }
                params.push(Param { name: pname, ty });
                if !self.cur.eat_punct(",") {
                    break;
                }
            }
        }
        self.cur.expect_punct(")")?;
        let payable = self.cur.eat_kw("payable");
        let returns = if self.cur.eat_kw("returns") {
            self.cur.expect_punct("(")?;
            let e = self.elem()?;
            self.cur.expect_punct(")")?;
            Some(e)
        } else {
            None
        };
        self.scopes = vec![names];
        let body = self.block()?;
        self.scopes.clear();
        Ok(FunctionDecl {
            name,
            params,
            payable,
            returns,
            body,
        })
    }

    fn block(&mut self) -> PResult<Vec<Stmt>> {
        self.cur.expect_punct("{")?;
        self.scopes.push(HashSet::new());
        let mut stmts = Vec::new();
        while !self.cur.eat_punct("}") {
            stmts.push(self.stmt()?);
        }
        self.scopes.pop();
        Ok(stmts)
    }

    fn is_local(&self, name: &str) -> bool {
        self.scopes.iter().any(|s| s.contains(name))
    }

    fn use_name(&mut self, name: &str, pos: Pos) {
        if !self.is_local(name) {
            self.free_names.push((name.to_string(), pos));
        }
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        if self.cur.eat_kw("require") {
            self.cur.expect_punct("(")?;
            let cond = self.expr()?;
            let message = if self.cur.eat_punct(",") {
                Some(self.cur.expect_string()?)
            } else {
                None
            };
            self.cur.expect_punct(")")?;
            self.cur.expect_punct(";")?;
            return Ok(Stmt::Require { cond, message });
        }
        if self.cur.eat_kw("if") {
            self.cur.expect_punct("(")?;
            let cond = self.expr()?;
            self.cur.expect_punct(")")?;
            let then_block = self.block()?;
            let else_block = if self.cur.eat_kw("else") {
                Some(self.block()?)
            } else {
                None
            };
            return Ok(Stmt::If {
                cond,
                then_block,
                else_block,
            });
        }
        if self.cur.eat_kw("for") {
            self.cur.expect_punct("(")?;
            let (var, _) = self.ident("loop variable")?;
            let declares = !self.is_local(&var);
            self.cur.expect_punct("=")?;
            let init = self.expr()?;
            self.scopes.push(HashSet::new());
            if declares {
                self.scopes.last_mut().unwrap().insert(var.clone());
            }
            self.cur.expect_punct(";")?;
            let cond = self.expr()?;
            self.cur.expect_punct(";")?;
            let (step_var, step_pos) = self.ident("loop variable")?;
            self.use_name(&step_var, step_pos);
            self.cur.expect_punct("+=")?;
            let step = self.expr()?;
            self.cur.expect_punct(")")?;
            let body = self.block()?;
            self.scopes.pop();
            return Ok(Stmt::For {
                var,
                init,
                cond,
                step_var,
                step,
                body,
            });
        }
        if self.cur.eat_kw("return") {
            let value = if self.cur.is_punct(";") {
                None
            } else {
                Some(self.expr()?)
            };
            self.cur.expect_punct(";")?;
            return Ok(Stmt::Return(value));
        }
        if self.cur.eat_kw("pay") {
            self.cur.expect_punct("(")?;
            let to = self.expr()?;
            self.cur.expect_punct(",")?;
            let amount = self.expr()?;
            self.cur.expect_punct(")")?;
            self.cur.expect_punct(";")?;
            return Ok(Stmt::Pay { to, amount });
        }
        if self.at_elem() {
            let ty = self.elem()?;
            let (name, pos) = self.ident("local variable name")?;
            self.cur.expect_punct("=")?;
            let value = self.expr()?;
            self.cur.expect_punct(";")?;
            let scope = self.scopes.last_mut().expect("inside a block");
            if !scope.insert(name.clone()) {
                self.duplicate(&name, pos);
            }
            return Ok(Stmt::Local { ty, name, value });
        }
        let target = self.lvalue()?;
        if self.cur.is_punct(".") {
            self.cur.advance();
            self.cur.expect_kw("push")?;
            self.cur.expect_punct("(")?;
            let value = self.expr()?;
            self.cur.expect_punct(")")?;
            self.cur.expect_punct(";")?;
            return Ok(Stmt::Push { target, value });
        }
        let op = match self.cur.peek() {
            Tok::Punct("=") => AssignOp::Set,
            Tok::Punct("+=") => AssignOp::Add,
            Tok::Punct("-=") => AssignOp::Sub,
            Tok::Punct("*=") => AssignOp::Mul,
            _ => return Err(self.cur.error("assignment operator or `.push`").into()),
        };
        self.cur.advance();
        let value = self.expr()?;
        self.cur.expect_punct(";")?;
        Ok(Stmt::Assign { target, op, value })
    }

    fn lvalue(&mut self) -> PResult<LValue> {
        let (root, pos) = self.ident("identifier")?;
        self.use_name(&root, pos);
        let mut indices = Vec::new();
        while self.cur.eat_punct("[") {
            indices.push(self.expr()?);
            self.cur.expect_punct("]")?;
        }
        Ok(LValue { root, indices })
    }

    fn expr(&mut self) -> PResult<Expr> {
        self.binary(1)
    }

    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op) = match self.cur.peek() {
            Tok::Punct(p) => BinOp::from_symbol(p).filter(|op| op.precedence() >= min_prec),
            _ => None,
        } {
            self.cur.advance();
            let rhs = self.binary(op.precedence() + 1)?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.cur.eat_punct("!") {
            return Ok(Expr::Not(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<Expr> {
        match self.cur.peek().clone() {
            Tok::Number { value, .. } => {
                self.cur.advance();
                Ok(Expr::Number(value))
            }
            Tok::Punct("(") => {
                self.cur.advance();
                let e = self.expr()?;
                self.cur.expect_punct(")")?;
                Ok(e)
            }
            Tok::Ident(s) if s == "true" || s == "false" => {
                self.cur.advance();
                Ok(Expr::Bool(s == "true"))
            }
            Tok::Ident(s) if s == "msg" => {
                self.cur.advance();
                self.cur.expect_punct(".")?;
                if self.cur.eat_kw("sender") {
                    Ok(Expr::MsgSender)
                } else if self.cur.eat_kw("value") {
                    Ok(Expr::MsgValue)
                } else {
                    Err(self.cur.error("`sender` or `value`").into())
                }
            }
            Tok::Ident(s) if !is_reserved(&s) => {
                let lv = self.lvalue()?;
                if self.cur.is_punct(".")
                    && matches!(self.cur.peek_at(1), Tok::Ident(s) if s == "length")
                {
                    self.cur.advance();
                    self.cur.advance();
                    Ok(Expr::Length(lv))
                } else {
                    Ok(Expr::Load(lv))
                }
            }
            _ => Err(self.cur.error("expression").into()),
        }
    }
}
