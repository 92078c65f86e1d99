use alloc::borrow::ToOwned;
use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use super::lexer::{lex, Kw, Tok};
use super::{
    Branch, ConDecl, DataDecl, DataEnv, Expr, FunDecl, LocExpr, LocReg, LocType, Op, Param,
    PatBind, Program, Ty,
};
use crate::name::Name;
use crate::store::{ConcreteLoc, ExtIndex};

/// 1-based line and column.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{span}: {message}")]
pub struct SyntaxError {
    pub span: Span,
    pub message: String,
}

impl SyntaxError {
    pub(crate) fn new(span: Span, message: &str) -> Self {
        SyntaxError {
            span,
            message: message.to_owned(),
        }
    }
}

/// Where each top-level definition starts in the source text.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SourceMap {
    pub functions: BTreeMap<Name, Span>,
    pub main: Option<Span>,
}

pub fn parse_program(text: &str) -> Result<Program, SyntaxError> {
    parse_program_with_spans(text).map(|(p, _)| p)
}

pub fn parse_program_with_spans(text: &str) -> Result<(Program, SourceMap), SyntaxError> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
        cons: Vec::new(),
        types: Vec::new(),
    };
    let mut datadecls = Vec::new();
    let mut fundecls: Vec<FunDecl> = Vec::new();
    let mut main = None;
    let mut map = SourceMap::default();
    loop {
        let span = p.span();
        match p.peek().clone() {
            Tok::Eof => break,
            Tok::Kw(Kw::Data) => datadecls.push(p.data_decl()?),
            Tok::Kw(Kw::Fun) => {
                let f = p.fun_decl()?;
                if fundecls.iter().any(|g| g.name == f.name) {
                    return Err(SyntaxError::new(
                        span,
                        &alloc::format!("function `{}` defined twice", f.name),
                    ));
                }
                map.functions.insert(f.name.clone(), span);
                fundecls.push(f);
            }
            Tok::Kw(Kw::Main) => {
                if main.is_some() {
                    return Err(SyntaxError::new(span, "`main` defined twice"));
                }
                p.bump();
                p.expect_sym("=")?;
                main = Some(p.expr()?);
                map.main = Some(span);
            }
            _ => return Err(p.unexpected("`data`, `fun` or `main`")),
        }
    }
    let main = main.ok_or_else(|| SyntaxError::new(p.span(), "missing `main`"))?;
    let env = DataEnv::new(&datadecls)
        .map_err(|e| SyntaxError::new(Span::default(), &alloc::format!("{e}")))?;
    for (t, span) in &p.types {
        if !env.has_tycon(t) {
            return Err(SyntaxError::new(
                *span,
                &alloc::format!("unknown type `{t}`"),
            ));
        }
    }
    for (c, span) in &p.cons {
        if env.con(c).is_none() {
            return Err(SyntaxError::new(
                *span,
                &alloc::format!("unknown constructor `{c}`"),
            ));
        }
    }
    Ok((
        Program {
            datadecls,
            fundecls,
            main,
        },
        map,
    ))
}

/// Parses a single expression (no declarations, no name resolution).
pub fn parse_expr(text: &str) -> Result<Expr, SyntaxError> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
        cons: Vec::new(),
        types: Vec::new(),
    };
    let e = p.expr()?;
    if *p.peek() != Tok::Eof {
        return Err(p.unexpected("end of input"));
    }
    Ok(e)
}

struct Parser {
    toks: Vec<(Tok, Span)>,
    pos: usize,
    /// Constructor and type references, checked once all declarations are known.
    cons: Vec<(Name, Span)>,
    types: Vec<(Name, Span)>,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].0
    }

    fn span(&self) -> Span {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, wanted: &str) -> SyntaxError {
        let found = match self.peek() {
            Tok::Ident(s) | Tok::Con(s) => alloc::format!("`{s}`"),
            Tok::Int(n) => alloc::format!("`{n}`"),
            Tok::Kw(k) => alloc::format!("keyword {k:?}"),
            Tok::Sym(s) => alloc::format!("`{s}`"),
            Tok::Eof => String::from("end of input"),
        };
        SyntaxError::new(
            self.span(),
            &alloc::format!("expected {wanted}, found {found}"),
        )
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(t) if *t == s)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), SyntaxError> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            Err(self.unexpected(&alloc::format!("`{s}`")))
        }
    }

    fn expect_kw(&mut self, kw: Kw) -> Result<(), SyntaxError> {
        if *self.peek() == Tok::Kw(kw) {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected(&alloc::format!("keyword {kw:?}")))
        }
    }

    fn ident(&mut self) -> Result<Name, SyntaxError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(Name::new(&s))
            }
            _ => Err(self.unexpected("an identifier")),
        }
    }

    fn con(&mut self) -> Result<Name, SyntaxError> {
        match self.peek().clone() {
            Tok::Con(s) => {
                self.bump();
                Ok(Name::new(&s))
            }
            _ => Err(self.unexpected("a capitalised name")),
        }
    }

    fn con_ref(&mut self) -> Result<Name, SyntaxError> {
        let span = self.span();
        let c = self.con()?;
        self.cons.push((c.clone(), span));
        Ok(c)
    }

    fn magnitude(&mut self) -> Result<u64, SyntaxError> {
        match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                Ok(n)
            }
            _ => Err(self.unexpected("an integer")),
        }
    }

    fn int(&mut self) -> Result<i64, SyntaxError> {
        let span = self.span();
        let n = self.magnitude()?;
        i64::try_from(n).map_err(|_| SyntaxError::new(span, "integer literal out of range"))
    }

    /// The literal after a minus sign; `2^63` is allowed here.
    fn negated(&mut self) -> Result<i64, SyntaxError> {
        let span = self.span();
        let n = self.magnitude()?;
        if n > 1u64 << 63 {
            return Err(SyntaxError::new(span, "integer literal out of range"));
        }
        Ok((n as i64).wrapping_neg())
    }

    fn index(&mut self) -> Result<u64, SyntaxError> {
        self.magnitude()
    }

    fn data_decl(&mut self) -> Result<DataDecl, SyntaxError> {
        self.expect_kw(Kw::Data)?;
        let tycon = self.con()?;
        self.expect_sym("=")?;
        let mut constructors = Vec::new();
        loop {
            let tag = self.con()?;
            let mut fields = Vec::new();
            loop {
                match self.peek() {
                    Tok::Kw(Kw::Int) => {
                        self.bump();
                        fields.push(Ty::Int);
                    }
                    Tok::Con(_) => {
                        let span = self.span();
                        let t = self.con()?;
                        self.types.push((t.clone(), span));
                        fields.push(Ty::Con(t));
                    }
                    _ => break,
                }
            }
            constructors.push(ConDecl { tag, fields });
            if !self.eat_sym("|") {
                break;
            }
        }
        Ok(DataDecl {
            tycon,
            constructors,
        })
    }

    fn locreg(&mut self) -> Result<LocReg, SyntaxError> {
        let loc = self.ident()?;
        self.expect_sym("@")?;
        let region = self.ident()?;
        Ok(LocReg { loc, region })
    }

    fn locregs_in_brackets(&mut self) -> Result<Vec<LocReg>, SyntaxError> {
        self.expect_sym("[")?;
        let mut v = Vec::new();
        while !self.eat_sym("]") {
            v.push(self.locreg()?);
        }
        Ok(v)
    }

    fn ty(&mut self) -> Result<Ty, SyntaxError> {
        match self.peek() {
            Tok::Kw(Kw::Int) => {
                self.bump();
                Ok(Ty::Int)
            }
            Tok::Con(_) => {
                let span = self.span();
                let t = self.con()?;
                self.types.push((t.clone(), span));
                Ok(Ty::Con(t))
            }
            _ => Err(self.unexpected("a type")),
        }
    }

    fn loctype(&mut self) -> Result<LocType, SyntaxError> {
        let t = self.ty()?;
        if t == Ty::Int && !self.is_sym("@") {
            return Ok(LocType::Int);
        }
        self.expect_sym("@")?;
        let lr = self.locreg()?;
        Ok(LocType::At(t, lr))
    }

    fn fun_decl(&mut self) -> Result<FunDecl, SyntaxError> {
        self.expect_kw(Kw::Fun)?;
        let name = self.ident()?;
        self.expect_sym(":")?;
        self.expect_kw(Kw::Forall)?;
        let mut quantified = Vec::new();
        while !self.eat_sym(".") {
            quantified.push(self.locreg()?);
        }
        let mut tys = alloc::vec![self.loctype()?];
        while self.eat_sym("->") {
            tys.push(self.loctype()?);
        }
        let ret = tys.pop().expect("at least one type");
        let span = self.span();
        let again = self.ident()?;
        if again != name {
            return Err(SyntaxError::new(
                span,
                &alloc::format!("expected a definition of `{name}`, found `{again}`"),
            ));
        }
        let span = self.span();
        let loc_params = self.locregs_in_brackets()?;
        if loc_params != quantified {
            return Err(SyntaxError::new(
                span,
                "location parameters differ from the quantified ones",
            ));
        }
        let mut vars = Vec::new();
        while let Tok::Ident(_) = self.peek() {
            vars.push(self.ident()?);
        }
        if vars.len() != tys.len() {
            return Err(SyntaxError::new(
                span,
                &alloc::format!(
                    "`{name}` takes {} arguments but names {}",
                    tys.len(),
                    vars.len()
                ),
            ));
        }
        self.expect_sym("=")?;
        let body = self.expr()?;
        let params = vars
            .into_iter()
            .zip(tys)
            .map(|(var, ty)| Param { var, ty })
            .collect();
        Ok(FunDecl {
            name,
            loc_params,
            params,
            ret,
            body,
        })
    }

    fn expr(&mut self) -> Result<Expr, SyntaxError> {
        match self.peek() {
            Tok::Kw(Kw::Letregion) => {
                self.bump();
                let r = self.ident()?;
                self.expect_kw(Kw::In)?;
                Ok(Expr::LetRegion(r, Box::new(self.expr()?)))
            }
            Tok::Kw(Kw::Letloc) => {
                self.bump();
                let lr = self.locreg()?;
                self.expect_sym("=")?;
                let le = self.locexp()?;
                self.expect_kw(Kw::In)?;
                Ok(Expr::LetLoc(lr, le, Box::new(self.expr()?)))
            }
            Tok::Kw(Kw::Let) => {
                self.bump();
                let var = self.ident()?;
                self.expect_sym(":")?;
                let ty = self.loctype()?;
                self.expect_sym("=")?;
                let spawn = *self.peek() == Tok::Kw(Kw::Spawn);
                if spawn {
                    self.bump();
                }
                let bound = self.expr()?;
                self.expect_kw(Kw::In)?;
                let body = self.expr()?;
                Ok(Expr::Let {
                    var,
                    ty,
                    bound: Box::new(bound),
                    spawn,
                    body: Box::new(body),
                })
            }
            Tok::Kw(Kw::Case) => {
                self.bump();
                let scrut = self.value()?;
                self.expect_kw(Kw::Of)?;
                self.expect_sym("{")?;
                let mut branches = Vec::new();
                while !self.eat_sym("}") {
                    branches.push(self.branch()?);
                    self.eat_sym(";");
                }
                Ok(Expr::Case(Box::new(scrut), branches))
            }
            Tok::Kw(Kw::If) => {
                self.bump();
                let c = self.expr()?;
                self.expect_kw(Kw::Then)?;
                let t = self.expr()?;
                self.expect_kw(Kw::Else)?;
                let f = self.expr()?;
                Ok(Expr::If(Box::new(c), Box::new(t), Box::new(f)))
            }
            _ => self.arith(),
        }
    }

    fn locexp(&mut self) -> Result<LocExpr, SyntaxError> {
        match self.peek() {
            Tok::Kw(Kw::Start) => {
                self.bump();
                Ok(LocExpr::Start(self.ident()?))
            }
            Tok::Kw(Kw::After) => {
                self.bump();
                self.expect_sym("(")?;
                let span = self.span();
                let lt = self.loctype()?;
                self.expect_sym(")")?;
                match lt {
                    LocType::At(t, lr) => Ok(LocExpr::After(t, lr)),
                    LocType::Int => Err(SyntaxError::new(span, "`after` needs a located type")),
                }
            }
            Tok::Ident(_) => {
                let lr = self.locreg()?;
                self.expect_sym("+")?;
                let span = self.span();
                let n = self.magnitude()?;
                let n = u32::try_from(n)
                    .ok()
                    .filter(|n| *n >= 1)
                    .ok_or_else(|| SyntaxError::new(span, "offset must be a positive integer"))?;
                Ok(LocExpr::Tag(lr, n))
            }
            _ => Err(self.unexpected("`start`, `after` or `l@r + n`")),
        }
    }

    fn branch(&mut self) -> Result<Branch, SyntaxError> {
        let tag = self.con_ref()?;
        let mut binds = Vec::new();
        while self.eat_sym("(") {
            let var = self.ident()?;
            self.expect_sym(":")?;
            let ty = self.loctype()?;
            self.expect_sym(")")?;
            binds.push(PatBind { var, ty });
        }
        self.expect_sym("->")?;
        let body = self.expr()?;
        Ok(Branch { tag, binds, body })
    }

    fn arith(&mut self) -> Result<Expr, SyntaxError> {
        let lhs = self.sum()?;
        let op = if self.is_sym("<=") {
            Op::Le
        } else if self.is_sym("==") {
            Op::Eq
        } else {
            return Ok(lhs);
        };
        self.bump();
        let rhs = self.sum()?;
        Ok(Expr::PrimOp(op, Box::new(lhs), Box::new(rhs)))
    }

    fn sum(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.prod()?;
        loop {
            let op = if self.is_sym("+") {
                Op::Add
            } else if self.is_sym("-") {
                Op::Sub
            } else {
                return Ok(lhs);
            };
            self.bump();
            let rhs = self.prod()?;
            lhs = Expr::PrimOp(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn prod(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.atom()?;
        while self.eat_sym("*") {
            let rhs = self.atom()?;
            lhs = Expr::PrimOp(Op::Mul, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn atom(&mut self) -> Result<Expr, SyntaxError> {
        match self.peek().clone() {
            Tok::Ident(_) if *self.peek_at(1) == Tok::Sym("[") => {
                let f = self.ident()?;
                let locs = self.locregs_in_brackets()?;
                let args = self.values()?;
                Ok(Expr::App(f, locs, args))
            }
            Tok::Con(_) => {
                let k = self.con_ref()?;
                let lr = self.locreg()?;
                let args = self.values()?;
                Ok(Expr::DataCon(k, lr, args))
            }
            Tok::Sym("(") if !self.starts_negative_literal() => {
                self.bump();
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Sym("-") => {
                self.bump();
                Ok(Expr::Int(self.negated()?))
            }
            _ => self.value(),
        }
    }

    fn starts_negative_literal(&self) -> bool {
        *self.peek_at(1) == Tok::Sym("-")
            && matches!(self.peek_at(2), Tok::Int(_))
            && *self.peek_at(3) == Tok::Sym(")")
    }

    fn at_value(&self) -> bool {
        match self.peek() {
            Tok::Ident(_) | Tok::Int(_) => true,
            Tok::Sym("?") | Tok::Sym("<") => true,
            Tok::Sym("(") => self.starts_negative_literal(),
            _ => false,
        }
    }

    fn values(&mut self) -> Result<Vec<Expr>, SyntaxError> {
        let mut v = Vec::new();
        while self.at_value() {
            v.push(self.value()?);
        }
        Ok(v)
    }

    fn value(&mut self) -> Result<Expr, SyntaxError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(Expr::Var(Name::new(&s)))
            }
            Tok::Int(_) => Ok(Expr::Int(self.int()?)),
            Tok::Sym("(") if self.starts_negative_literal() => {
                self.bump();
                self.bump();
                let n = self.negated()?;
                self.expect_sym(")")?;
                Ok(Expr::Int(n))
            }
            Tok::Sym("?") => {
                self.bump();
                Ok(Expr::IvarInt(self.ident()?))
            }
            Tok::Sym("<") => {
                self.bump();
                let region = self.ident()?;
                self.expect_sym(",")?;
                let ext = match self.peek().clone() {
                    Tok::Int(_) => ExtIndex::Concrete(self.index()?),
                    Tok::Sym("?") => {
                        self.bump();
                        ExtIndex::Ivar(self.ident()?)
                    }
                    Tok::Kw(Kw::Ind) => {
                        self.bump();
                        self.expect_sym("(")?;
                        let r = self.ident()?;
                        self.expect_sym(",")?;
                        let i = self.index()?;
                        self.expect_sym(")")?;
                        ExtIndex::Indirection(r, i)
                    }
                    _ => return Err(self.unexpected("an index, `?x` or `ind(r,i)`")),
                };
                self.expect_sym(">")?;
                let origin = if self.eat_sym("^") {
                    Some(self.ident()?)
                } else {
                    None
                };
                Ok(Expr::Loc(ConcreteLoc {
                    region,
                    ext,
                    origin,
                }))
            }
            _ => Err(self.unexpected("a value")),
        }
    }
}
