//! Abstract syntax, the `.lcp` text format, and renaming/substitution.
//!
//! Grammar (whitespace-insensitive, `--` starts a line comment):
//!
//! ```text
//! program  ::= item*
//! item     ::= 'data' Con '=' condecl ('|' condecl)*
//!            | 'fun' f ':' 'forall' lr* '.' lty ('->' lty)*
//!              f '[' lr* ']' x* '=' expr
//!            | 'main' '=' expr
//! condecl  ::= Con ('Int' | Con)*
//! lr       ::= l '@' r
//! lty      ::= 'Int' | 'Int' '@' l '@' r | Con '@' l '@' r
//! expr     ::= 'letregion' r 'in' expr
//!            | 'letloc' lr '=' locexp 'in' expr
//!            | 'let' x ':' lty '=' ['spawn'] expr 'in' expr
//!            | 'case' value 'of' '{' branch (';'? branch)* '}'
//!            | 'if' expr 'then' expr 'else' expr
//!            | arith
//! locexp   ::= 'start' r | lr '+' n | 'after' '(' lty ')'
//! branch   ::= Con ('(' x ':' lty ')')* '->' expr
//! arith    ::= sum (('<=' | '==') sum)?
//! sum      ::= prod (('+' | '-') prod)*
//! prod     ::= atom ('*' atom)*
//! atom     ::= value | f '[' lr* ']' value* | Con lr value* | '(' expr ')'
//! value    ::= x | n | '(' '-' n ')' | '?' x | '<' r ',' ext '>' ['^' l]
//! ext      ::= n | '?' x | 'ind' '(' r ',' n ')'
//! ```
//!
//! Scalar fields of a constructor must precede its packed fields, so the
//! first packed field of `K l ...` with `s` leading scalars sits at `l + (1+s)`.

mod lexer;
mod parser;
mod printer;
mod subst;

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use crate::name::Name;
use crate::store::ConcreteLoc;

pub use parser::{
    parse_expr, parse_program, parse_program_with_spans, SourceMap, Span, SyntaxError,
};
pub use printer::{print_expr, print_program};
pub use subst::{
    free_names, freshen, freshen_expr, implicit_par, substitute, uniquify_binders, FreeNames,
    IvarFill, Subst,
};

/// A field or value type: machine integer or a declared type constructor.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Ty {
    Int,
    Con(Name),
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ty::Int => f.write_str("Int"),
            Ty::Con(c) => write!(f, "{c}"),
        }
    }
}

/// A symbolic location together with its region, written `l@r`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LocReg {
    pub loc: Name,
    pub region: Name,
}

impl LocReg {
    pub fn new(loc: &str, region: &str) -> Self {
        LocReg {
            loc: Name::new(loc),
            region: Name::new(region),
        }
    }
}

impl fmt::Display for LocReg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.loc, self.region)
    }
}

/// Located type: a bare scalar `Int`, or `T@l@r`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LocType {
    Int,
    At(Ty, LocReg),
}

impl LocType {
    pub fn at(&self) -> Option<&LocReg> {
        match self {
            LocType::Int => None,
            LocType::At(_, lr) => Some(lr),
        }
    }

    pub fn is_packed(&self) -> bool {
        matches!(self, LocType::At(Ty::Con(_), _))
    }
}

impl fmt::Display for LocType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LocType::Int => f.write_str("Int"),
            LocType::At(t, lr) => write!(f, "{t}@{lr}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Le,
    Eq,
}

impl Op {
    pub fn apply(self, a: i64, b: i64) -> i64 {
        match self {
            Op::Add => a.wrapping_add(b),
            Op::Sub => a.wrapping_sub(b),
            Op::Mul => a.wrapping_mul(b),
            Op::Le => i64::from(a <= b),
            Op::Eq => i64::from(a == b),
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Op::Add => "+",
            Op::Sub => "-",
            Op::Mul => "*",
            Op::Le => "<=",
            Op::Eq => "==",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LocExpr {
    /// `start r`
    Start(Name),
    /// `l@r + n`, one past a tag (n = 1) or past leading scalar fields.
    Tag(LocReg, u32),
    /// `after(T@l@r)`
    After(Ty, LocReg),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PatBind {
    pub var: Name,
    pub ty: LocType,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Branch {
    pub tag: Name,
    pub binds: Vec<PatBind>,
    pub body: Expr,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Expr {
    Var(Name),
    Loc(ConcreteLoc),
    Int(i64),
    /// Placeholder for a scalar still being computed by another task.
    IvarInt(Name),
    PrimOp(Op, Box<Expr>, Box<Expr>),
    If(Box<Expr>, Box<Expr>, Box<Expr>),
    App(Name, Vec<LocReg>, Vec<Expr>),
    DataCon(Name, LocReg, Vec<Expr>),
    Let {
        var: Name,
        ty: LocType,
        bound: Box<Expr>,
        spawn: bool,
        body: Box<Expr>,
    },
    LetLoc(LocReg, LocExpr, Box<Expr>),
    LetRegion(Name, Box<Expr>),
    Case(Box<Expr>, Vec<Branch>),
}

impl Expr {
    pub fn is_value(&self) -> bool {
        matches!(
            self,
            Expr::Var(_) | Expr::Loc(_) | Expr::Int(_) | Expr::IvarInt(_)
        )
    }

    pub fn let_(var: &str, ty: LocType, bound: Expr, spawn: bool, body: Expr) -> Expr {
        Expr::Let {
            var: Name::new(var),
            ty,
            bound: Box::new(bound),
            spawn,
            body: Box::new(body),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ConDecl {
    pub tag: Name,
    pub fields: Vec<Ty>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DataDecl {
    pub tycon: Name,
    pub constructors: Vec<ConDecl>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Param {
    pub var: Name,
    pub ty: LocType,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FunDecl {
    pub name: Name,
    pub loc_params: Vec<LocReg>,
    pub params: Vec<Param>,
    pub ret: LocType,
    pub body: Expr,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Program {
    pub datadecls: Vec<DataDecl>,
    pub fundecls: Vec<FunDecl>,
    pub main: Expr,
}

impl Program {
    pub fn fundecl(&self, name: &Name) -> Option<&FunDecl> {
        self.fundecls.iter().find(|f| &f.name == name)
    }
}

/// What a constructor looks like, resolved from the data declarations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConInfo {
    pub tycon: Name,
    pub tag: Name,
    /// Global constructor index, in declaration order.
    pub code: u8,
    pub fields: Vec<Ty>,
}

impl ConInfo {
    pub fn scalar_prefix(&self) -> usize {
        self.fields.iter().take_while(|t| **t == Ty::Int).count()
    }

    pub fn packed_fields(&self) -> impl Iterator<Item = (usize, &Name)> {
        self.fields.iter().enumerate().filter_map(|(k, t)| match t {
            Ty::Con(n) => Some((k, n)),
            Ty::Int => None,
        })
    }
}

/// Constructor and type-constructor tables for a program.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DataEnv {
    cons: BTreeMap<Name, ConInfo>,
    tycons: BTreeMap<Name, Vec<Name>>,
    by_code: Vec<Name>,
}

/// Largest number of constructors the byte encoding can number.
pub const MAX_CONSTRUCTORS: usize = 255;

impl DataEnv {
    pub fn new(decls: &[DataDecl]) -> Result<Self, DataError> {
        let mut env = DataEnv::default();
        for d in decls {
            if env.tycons.contains_key(&d.tycon) {
                return Err(DataError::DuplicateType(d.tycon.clone()));
            }
            env.tycons.insert(
                d.tycon.clone(),
                d.constructors.iter().map(|c| c.tag.clone()).collect(),
            );
        }
        for d in decls {
            for c in &d.constructors {
                if env.cons.contains_key(&c.tag) {
                    return Err(DataError::DuplicateConstructor(c.tag.clone()));
                }
                if env.by_code.len() == MAX_CONSTRUCTORS {
                    return Err(DataError::TooManyConstructors);
                }
                let mut seen_packed = false;
                for f in &c.fields {
                    match f {
                        Ty::Int if seen_packed => {
                            return Err(DataError::ScalarAfterPacked(c.tag.clone()))
                        }
                        Ty::Int => {}
                        Ty::Con(t) => {
                            if !env.tycons.contains_key(t) {
                                return Err(DataError::UnknownType(t.clone()));
                            }
                            seen_packed = true;
                        }
                    }
                }
                let code = env.by_code.len() as u8;
                env.by_code.push(c.tag.clone());
                env.cons.insert(
                    c.tag.clone(),
                    ConInfo {
                        tycon: d.tycon.clone(),
                        tag: c.tag.clone(),
                        code,
                        fields: c.fields.clone(),
                    },
                );
            }
        }
        Ok(env)
    }

    pub fn con(&self, tag: &Name) -> Option<&ConInfo> {
        self.cons.get(tag)
    }

    pub fn con_by_code(&self, code: u8) -> Option<&ConInfo> {
        self.by_code
            .get(usize::from(code))
            .and_then(|t| self.cons.get(t))
    }

    pub fn has_tycon(&self, tycon: &Name) -> bool {
        self.tycons.contains_key(tycon)
    }

    pub fn constructors(&self, tycon: &Name) -> Option<&[Name]> {
        self.tycons.get(tycon).map(Vec::as_slice)
    }

    pub fn all_constructors(&self) -> impl Iterator<Item = &ConInfo> {
        self.by_code.iter().filter_map(|t| self.cons.get(t))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum DataError {
    #[error("type `{0}` declared twice")]
    DuplicateType(Name),
    #[error("constructor `{0}` declared twice")]
    DuplicateConstructor(Name),
    #[error("unknown type `{0}`")]
    UnknownType(Name),
    #[error("constructor `{0}` has a scalar field after a packed field")]
    ScalarAfterPacked(Name),
    #[error("more than {MAX_CONSTRUCTORS} constructors")]
    TooManyConstructors,
}
