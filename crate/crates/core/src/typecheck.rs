//! Static semantics: located types, allocation order and write-once cells.
//!
//! An expression is checked against five environments: variables (Γ),
//! materialized locations (Σ), location constraints (C), the last
//! location allocated in each region (A) and the nursery of allocated but
//! unwritten locations (N). Checking threads A and N through the
//! expression and returns them with the expression's located type.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::name::Name;
use crate::syntax::{
    DataEnv, DataError, Expr, FunDecl, LocExpr, LocReg, LocType, PatBind, Program, Subst, Ty,
};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum TypeError {
    #[error("location `{0}` is written twice or was never allocated for writing")]
    DoubleWrite(Name),
    #[error("`{function}` reads and writes region `{region}`")]
    RegionAliasing { function: Name, region: Name },
    #[error("unbound location `{0}`")]
    UnboundLocation(Name),
    #[error("unbound region `{0}`")]
    UnboundRegion(Name),
    #[error("unbound variable `{0}`")]
    UnboundVariable(Name),
    #[error("field {field} of `{con}` at `{loc}` is not where the constructor needs it")]
    FieldConstraintMismatch { con: Name, field: usize, loc: Name },
    #[error("`{what}` expects {expected} arguments, got {found}")]
    ArityMismatch {
        what: Name,
        expected: usize,
        found: usize,
    },
    #[error("expected {expected}, found {found}")]
    TypeMismatch { expected: String, found: String },
    #[error("unknown constructor `{0}`")]
    UnknownConstructor(Name),
    #[error("unknown function `{0}`")]
    UnknownFunction(Name),
    #[error("unknown type `{0}`")]
    UnknownType(Name),
    #[error("case branches disagree: {0}")]
    BranchMismatch(String),
    #[error("location `{loc}` is allocated out of order in region `{region}`")]
    AllocOrder { region: Name, loc: Name },
    #[error("output location `{0}` is never written")]
    UnwrittenOutput(Name),
    #[error(transparent)]
    Data(#[from] DataError),
}

impl TypeError {
    /// Stable machine-readable error class.
    pub fn code(&self) -> &'static str {
        match self {
            TypeError::DoubleWrite(_) => "DoubleWrite",
            TypeError::RegionAliasing { .. } => "RegionAliasing",
            TypeError::UnboundLocation(_) => "UnboundLocation",
            TypeError::UnboundRegion(_) => "UnboundRegion",
            TypeError::UnboundVariable(_) => "UnboundVariable",
            TypeError::FieldConstraintMismatch { .. } => "FieldConstraintMismatch",
            TypeError::ArityMismatch { .. } => "ArityMismatch",
            TypeError::TypeMismatch { .. } => "TypeMismatch",
            TypeError::UnknownConstructor(_) => "UnknownConstructor",
            TypeError::UnknownFunction(_) => "UnknownFunction",
            TypeError::UnknownType(_) => "UnknownType",
            TypeError::BranchMismatch(_) => "BranchMismatch",
            TypeError::AllocOrder { .. } => "AllocOrder",
            TypeError::UnwrittenOutput(_) => "UnwrittenOutput",
            TypeError::Data(_) => "DataDecl",
        }
    }
}

fn mismatch(expected: impl ToString, found: impl ToString) -> TypeError {
    TypeError::TypeMismatch {
        expected: expected.to_string(),
        found: found.to_string(),
    }
}

pub type Allocs = BTreeMap<Name, Option<Name>>;
pub type Nursery = BTreeSet<Name>;

/// The typing environments. `locs` and `regions` record what is in scope.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct TypeState {
    pub gamma: BTreeMap<Name, LocType>,
    pub sigma: BTreeMap<Name, Ty>,
    pub constraints: BTreeMap<Name, LocExpr>,
    pub allocs: Allocs,
    pub nursery: Nursery,
    pub locs: BTreeMap<Name, Name>,
    pub regions: BTreeSet<Name>,
}

impl TypeState {
    /// Write-once: no location is both materialized and still unwritten.
    pub fn write_once_holds(&self) -> bool {
        self.sigma.keys().all(|l| !self.nursery.contains(l))
    }
}

/// A program whose declarations and functions have been checked.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TypedProgram {
    pub program: Program,
    pub env: DataEnv,
    pub main_ty: LocType,
}

/// A type error together with the definition it was found in
/// (`None` for `main`).
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{}: {error}", .function.as_ref().map_or("main", Name::as_str))]
pub struct ProgramError {
    pub function: Option<Name>,
    pub error: TypeError,
}

pub fn typecheck_program(p: &Program) -> Result<TypedProgram, ProgramError> {
    let env = DataEnv::new(&p.datadecls).map_err(|e| ProgramError {
        function: None,
        error: e.into(),
    })?;
    let cx = Checker {
        env: &env,
        program: p,
    };
    for fd in &p.fundecls {
        cx.function(fd).map_err(|error| ProgramError {
            function: Some(fd.name.clone()),
            error,
        })?;
    }
    let (_, _, main_ty) = cx
        .expr(&Scope::default(), Allocs::new(), Nursery::new(), &p.main)
        .map_err(|error| ProgramError {
            function: None,
            error,
        })?;
    Ok(TypedProgram {
        program: p.clone(),
        env,
        main_ty,
    })
}

/// Checks `e` under `ts`, returning the threaded allocation map, nursery
/// and located type.
pub fn typecheck_expr(
    env: &DataEnv,
    p: &Program,
    ts: &TypeState,
    e: &Expr,
) -> Result<(Allocs, Nursery, LocType), TypeError> {
    let cx = Checker { env, program: p };
    let scope = Scope {
        gamma: ts.gamma.clone(),
        sigma: ts.sigma.clone(),
        constraints: ts.constraints.clone(),
        locs: ts.locs.clone(),
        regions: ts.regions.clone(),
    };
    cx.expr(&scope, ts.allocs.clone(), ts.nursery.clone(), e)
}

/// One entry of a task set as seen by the checker.
pub struct TaskView<'a, K> {
    pub id: K,
    pub ty: &'a LocType,
    pub expr: &'a Expr,
}

/// Checks every task at its declared type under its own environments.
pub fn typecheck_taskset<'a, K: Ord + Clone + 'a>(
    env: &DataEnv,
    p: &Program,
    states: &BTreeMap<K, TypeState>,
    tasks: impl IntoIterator<Item = TaskView<'a, K>>,
) -> Result<BTreeMap<K, (Allocs, Nursery)>, (K, TypeError)> {
    let mut out = BTreeMap::new();
    for t in tasks {
        let ts = states.get(&t.id).cloned().unwrap_or_default();
        let (a, n, ty) = typecheck_expr(env, p, &ts, t.expr).map_err(|e| (t.id.clone(), e))?;
        if &ty != t.ty {
            return Err((t.id, mismatch(t.ty, ty)));
        }
        out.insert(t.id, (a, n));
    }
    Ok(out)
}

#[derive(Clone, Default)]
struct Scope {
    gamma: BTreeMap<Name, LocType>,
    sigma: BTreeMap<Name, Ty>,
    constraints: BTreeMap<Name, LocExpr>,
    locs: BTreeMap<Name, Name>,
    regions: BTreeSet<Name>,
}

struct Checker<'a> {
    env: &'a DataEnv,
    program: &'a Program,
}

type Out = Result<(Allocs, Nursery, LocType), TypeError>;

impl Checker<'_> {
    fn function(&self, fd: &FunDecl) -> Result<(), TypeError> {
        let mut sc = Scope::default();
        for lr in &fd.loc_params {
            sc.locs.insert(lr.loc.clone(), lr.region.clone());
            sc.regions.insert(lr.region.clone());
        }
        let mut allocs = Allocs::new();
        let mut nursery = Nursery::new();
        for p in &fd.params {
            self.check_loctype(&sc, &p.ty)?;
            if let LocType::At(t, lr) = &p.ty {
                sc.sigma.insert(lr.loc.clone(), t.clone());
                allocs.insert(lr.region.clone(), Some(lr.loc.clone()));
            }
            sc.gamma.insert(p.var.clone(), p.ty.clone());
        }
        self.check_loctype(&sc, &fd.ret)?;
        if let LocType::At(_, lr) = &fd.ret {
            allocs.insert(lr.region.clone(), Some(lr.loc.clone()));
            nursery.insert(lr.loc.clone());
        }
        let (_, n, ty) = self.expr(&sc, allocs, nursery, &fd.body)?;
        if ty != fd.ret {
            return Err(mismatch(&fd.ret, ty));
        }
        if let LocType::At(_, lr) = &fd.ret {
            if n.contains(&lr.loc) {
                return Err(TypeError::UnwrittenOutput(lr.loc.clone()));
            }
        }
        Ok(())
    }

    fn check_ty(&self, t: &Ty) -> Result<(), TypeError> {
        match t {
            Ty::Con(c) if !self.env.has_tycon(c) => Err(TypeError::UnknownType(c.clone())),
            _ => Ok(()),
        }
    }

    fn check_locreg(&self, sc: &Scope, lr: &LocReg) -> Result<(), TypeError> {
        match sc.locs.get(&lr.loc) {
            None => Err(TypeError::UnboundLocation(lr.loc.clone())),
            Some(r) if *r != lr.region => Err(mismatch(format!("{}@{r}", lr.loc), lr)),
            Some(_) => Ok(()),
        }
    }

    fn check_loctype(&self, sc: &Scope, t: &LocType) -> Result<(), TypeError> {
        match t {
            LocType::Int => Ok(()),
            LocType::At(ty, lr) => {
                self.check_ty(ty)?;
                self.check_locreg(sc, lr)
            }
        }
    }

    fn expr(&self, sc: &Scope, a: Allocs, n: Nursery, e: &Expr) -> Out {
        match e {
            Expr::Var(x) => {
                let t = sc
                    .gamma
                    .get(x)
                    .ok_or_else(|| TypeError::UnboundVariable(x.clone()))?;
                Ok((a, n, t.clone()))
            }
            Expr::Int(_) | Expr::IvarInt(_) => Ok((a, n, LocType::Int)),
            Expr::Loc(cl) => {
                let l = cl
                    .origin
                    .as_ref()
                    .ok_or_else(|| TypeError::UnboundLocation(Name::new("?")))?;
                let t = sc
                    .sigma
                    .get(l)
                    .ok_or_else(|| TypeError::UnboundLocation(l.clone()))?;
                let r = sc
                    .locs
                    .get(l)
                    .ok_or_else(|| TypeError::UnboundLocation(l.clone()))?;
                Ok((
                    a,
                    n,
                    LocType::At(
                        t.clone(),
                        LocReg {
                            loc: l.clone(),
                            region: r.clone(),
                        },
                    ),
                ))
            }
            Expr::PrimOp(_, x, y) => {
                let (a, n, tx) = self.expr(sc, a, n, x)?;
                expect_int(&tx)?;
                let (a, n, ty) = self.expr(sc, a, n, y)?;
                expect_int(&ty)?;
                Ok((a, n, LocType::Int))
            }
            Expr::If(c, t, f) => {
                let (a, n, tc) = self.expr(sc, a, n, c)?;
                expect_int(&tc)?;
                let outs = alloc::vec![
                    self.expr(sc, a.clone(), n.clone(), t)?,
                    self.expr(sc, a.clone(), n.clone(), f)?
                ];
                agree(&a, &n, outs)
            }
            Expr::App(f, locs, args) => self.app(sc, a, n, f, locs, args),
            Expr::DataCon(k, lr, args) => self.datacon(sc, a, n, k, lr, args),
            Expr::Let {
                var,
                ty,
                bound,
                body,
                ..
            } => {
                self.check_loctype(sc, ty)?;
                let (a, n, tb) = self.expr(sc, a, n, bound)?;
                if tb != *ty {
                    return Err(mismatch(ty, tb));
                }
                let mut inner = sc.clone();
                if let LocType::At(t, lr) = ty {
                    inner.sigma.insert(lr.loc.clone(), t.clone());
                }
                inner.gamma.insert(var.clone(), ty.clone());
                self.expr(&inner, a, n, body)
            }
            Expr::LetLoc(lr, le, body) => {
                let (mut a, mut n) = (a, n);
                let r = &lr.region;
                if !sc.regions.contains(r) {
                    return Err(TypeError::UnboundRegion(r.clone()));
                }
                let order = || TypeError::AllocOrder {
                    region: r.clone(),
                    loc: lr.loc.clone(),
                };
                match le {
                    LocExpr::Start(r2) => {
                        if r2 != r {
                            return Err(mismatch(format!("start {r}"), format!("start {r2}")));
                        }
                        if a.get(r).cloned().flatten().is_some() {
                            return Err(order());
                        }
                    }
                    LocExpr::Tag(prev, _) => {
                        self.same_region(sc, prev, r)?;
                        if a.get(r).cloned().flatten().as_ref() != Some(&prev.loc)
                            || !n.contains(&prev.loc)
                        {
                            return Err(order());
                        }
                    }
                    LocExpr::After(t, prev) => {
                        self.check_ty(t)?;
                        self.same_region(sc, prev, r)?;
                        if a.get(r).cloned().flatten().as_ref() != Some(&prev.loc)
                            || n.contains(&prev.loc)
                        {
                            return Err(order());
                        }
                        match sc.sigma.get(&prev.loc) {
                            Some(t2) if t2 == t => {}
                            Some(t2) => return Err(mismatch(t, t2)),
                            None => return Err(order()),
                        }
                    }
                }
                let mut inner = sc.clone();
                inner.locs.insert(lr.loc.clone(), r.clone());
                inner.constraints.insert(lr.loc.clone(), le.clone());
                a.insert(r.clone(), Some(lr.loc.clone()));
                n.insert(lr.loc.clone());
                self.expr(&inner, a, n, body)
            }
            Expr::LetRegion(r, body) => {
                let mut inner = sc.clone();
                inner.regions.insert(r.clone());
                let mut a = a;
                a.insert(r.clone(), None);
                self.expr(&inner, a, n, body)
            }
            Expr::Case(scrut, branches) => {
                let (a, n, ts) = self.expr(sc, a, n, scrut)?;
                let LocType::At(Ty::Con(tycon), lr) = &ts else {
                    return Err(mismatch("a packed value", ts));
                };
                let mut outs = Vec::with_capacity(branches.len());
                for b in branches {
                    let info = self
                        .env
                        .con(&b.tag)
                        .ok_or_else(|| TypeError::UnknownConstructor(b.tag.clone()))?;
                    if &info.tycon != tycon {
                        return Err(mismatch(format!("a constructor of `{tycon}`"), &b.tag));
                    }
                    if b.binds.len() != info.fields.len() {
                        return Err(TypeError::ArityMismatch {
                            what: b.tag.clone(),
                            expected: info.fields.len(),
                            found: b.binds.len(),
                        });
                    }
                    let inner = self.pattern(sc, lr, &b.tag, &info.fields, &b.binds)?;
                    outs.push(self.expr(&inner, a.clone(), n.clone(), &b.body)?);
                }
                if outs.is_empty() {
                    return Err(TypeError::BranchMismatch(String::from("no branches")));
                }
                agree(&a, &n, outs)
            }
        }
    }

    fn same_region(&self, sc: &Scope, lr: &LocReg, r: &Name) -> Result<(), TypeError> {
        self.check_locreg(sc, lr)?;
        if lr.region != *r {
            return Err(mismatch(format!("a location in `{r}`"), lr));
        }
        Ok(())
    }

    fn pattern(
        &self,
        sc: &Scope,
        at: &LocReg,
        con: &Name,
        fields: &[Ty],
        binds: &[PatBind],
    ) -> Result<Scope, TypeError> {
        let mut inner = sc.clone();
        let mut prev: Option<(Ty, LocReg)> = None;
        for (j, (field, pb)) in fields.iter().zip(binds).enumerate() {
            let bad = || TypeError::FieldConstraintMismatch {
                con: con.clone(),
                field: j,
                loc: at.loc.clone(),
            };
            match (field, &pb.ty) {
                (Ty::Int, LocType::Int) => {
                    inner.gamma.insert(pb.var.clone(), LocType::Int);
                }
                (Ty::Int, LocType::At(Ty::Int, lj)) => {
                    if lj.region != at.region {
                        return Err(bad());
                    }
                    inner.locs.insert(lj.loc.clone(), lj.region.clone());
                    inner.sigma.insert(lj.loc.clone(), Ty::Int);
                    inner
                        .constraints
                        .insert(lj.loc.clone(), LocExpr::Tag(at.clone(), 1 + j as u32));
                    inner.gamma.insert(pb.var.clone(), LocType::Int);
                }
                (Ty::Con(t), LocType::At(Ty::Con(t2), lj)) if t == t2 => {
                    if lj.region != at.region {
                        return Err(bad());
                    }
                    let c = match &prev {
                        None => LocExpr::Tag(at.clone(), 1 + j as u32),
                        Some((pt, pl)) => LocExpr::After(pt.clone(), pl.clone()),
                    };
                    inner.locs.insert(lj.loc.clone(), lj.region.clone());
                    inner.sigma.insert(lj.loc.clone(), field.clone());
                    inner.constraints.insert(lj.loc.clone(), c);
                    inner.gamma.insert(pb.var.clone(), pb.ty.clone());
                    prev = Some((field.clone(), lj.clone()));
                }
                (_, t) => return Err(mismatch(field, t)),
            }
        }
        Ok(inner)
    }

    fn app(
        &self,
        sc: &Scope,
        a: Allocs,
        n: Nursery,
        f: &Name,
        locs: &[LocReg],
        args: &[Expr],
    ) -> Out {
        let fd = self
            .program
            .fundecl(f)
            .ok_or_else(|| TypeError::UnknownFunction(f.clone()))?;
        if locs.len() != fd.loc_params.len() {
            return Err(TypeError::ArityMismatch {
                what: f.clone(),
                expected: fd.loc_params.len(),
                found: locs.len(),
            });
        }
        if args.len() != fd.params.len() {
            return Err(TypeError::ArityMismatch {
                what: f.clone(),
                expected: fd.params.len(),
                found: args.len(),
            });
        }
        let mut s = Subst::default();
        for (formal, actual) in fd.loc_params.iter().zip(locs) {
            self.check_locreg(sc, actual)?;
            s.locs.insert(formal.loc.clone(), actual.loc.clone());
            s.regions
                .insert(formal.region.clone(), actual.region.clone());
        }
        let inst = |t: &LocType| match t {
            LocType::Int => LocType::Int,
            LocType::At(ty, lr) => LocType::At(
                ty.clone(),
                LocReg {
                    loc: s
                        .locs
                        .get(&lr.loc)
                        .cloned()
                        .unwrap_or_else(|| lr.loc.clone()),
                    region: s
                        .regions
                        .get(&lr.region)
                        .cloned()
                        .unwrap_or_else(|| lr.region.clone()),
                },
            ),
        };
        let ret = inst(&fd.ret);
        let (mut a, mut n) = (a, n);
        let mut in_regions = Vec::new();
        for (p, arg) in fd.params.iter().zip(args) {
            let want = inst(&p.ty);
            let (a2, n2, got) = self.expr(sc, a, n, arg)?;
            (a, n) = (a2, n2);
            if got != want {
                return Err(mismatch(want, got));
            }
            if let LocType::At(_, lr) = &want {
                in_regions.push(lr.region.clone());
            }
        }
        if let LocType::At(_, out) = &ret {
            if in_regions.contains(&out.region) {
                return Err(TypeError::RegionAliasing {
                    function: f.clone(),
                    region: out.region.clone(),
                });
            }
            if !n.contains(&out.loc) {
                return Err(TypeError::DoubleWrite(out.loc.clone()));
            }
            if a.get(&out.region).cloned().flatten().as_ref() != Some(&out.loc) {
                return Err(TypeError::AllocOrder {
                    region: out.region.clone(),
                    loc: out.loc.clone(),
                });
            }
            n.remove(&out.loc);
        }
        Ok((a, n, ret))
    }

    fn datacon(
        &self,
        sc: &Scope,
        a: Allocs,
        n: Nursery,
        k: &Name,
        lr: &LocReg,
        args: &[Expr],
    ) -> Out {
        let info = self
            .env
            .con(k)
            .ok_or_else(|| TypeError::UnknownConstructor(k.clone()))?;
        if args.len() != info.fields.len() {
            return Err(TypeError::ArityMismatch {
                what: k.clone(),
                expected: info.fields.len(),
                found: args.len(),
            });
        }
        self.check_locreg(sc, lr)?;
        let (mut a, mut n) = (a, n);
        let mut prev: Option<(Ty, LocReg)> = None;
        for (j, (field, arg)) in info.fields.iter().zip(args).enumerate() {
            let (a2, n2, got) = self.expr(sc, a, n, arg)?;
            (a, n) = (a2, n2);
            match (field, &got) {
                (Ty::Int, LocType::Int) => {}
                (Ty::Con(t), LocType::At(Ty::Con(t2), lj)) if t == t2 => {
                    let bad = || TypeError::FieldConstraintMismatch {
                        con: k.clone(),
                        field: j,
                        loc: lj.loc.clone(),
                    };
                    if lj.region != lr.region {
                        return Err(bad());
                    }
                    let want = match &prev {
                        None => LocExpr::Tag(lr.clone(), 1 + j as u32),
                        Some((pt, pl)) => LocExpr::After(pt.clone(), pl.clone()),
                    };
                    if sc.constraints.get(&lj.loc) != Some(&want) {
                        return Err(bad());
                    }
                    prev = Some((field.clone(), lj.clone()));
                }
                _ => return Err(mismatch(field, got)),
            }
        }
        if !n.contains(&lr.loc) {
            return Err(TypeError::DoubleWrite(lr.loc.clone()));
        }
        a.insert(lr.region.clone(), Some(lr.loc.clone()));
        n.remove(&lr.loc);
        Ok((a, n, LocType::At(Ty::Con(info.tycon.clone()), lr.clone())))
    }
}

fn expect_int(t: &LocType) -> Result<(), TypeError> {
    match t {
        LocType::Int => Ok(()),
        _ => Err(mismatch("Int", t)),
    }
}

/// Branches must leave the same type and the same view of pre-existing
/// regions and locations.
fn agree(a_in: &Allocs, n_in: &Nursery, outs: Vec<(Allocs, Nursery, LocType)>) -> Out {
    let project = |(a, n, t): &(Allocs, Nursery, LocType)| {
        let a: Allocs = a
            .iter()
            .filter(|(r, _)| a_in.contains_key(*r))
            .map(|(r, l)| (r.clone(), l.clone()))
            .collect();
        let n: Nursery = n.intersection(n_in).cloned().collect();
        (a, n, t.clone())
    };
    let mut it = outs.iter().map(project);
    let first = it.next().expect("at least one branch");
    for other in it {
        if other.2 != first.2 {
            return Err(TypeError::BranchMismatch(format!(
                "{} vs {}",
                first.2, other.2
            )));
        }
        if other.1 != first.1 {
            return Err(TypeError::BranchMismatch(String::from(
                "different locations written",
            )));
        }
        if other.0 != first.0 {
            return Err(TypeError::BranchMismatch(String::from(
                "different allocation state",
            )));
        }
    }
    Ok(first)
}
