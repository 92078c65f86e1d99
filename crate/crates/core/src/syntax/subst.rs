use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use super::{Branch, Expr, FunDecl, LocExpr, LocReg, LocType, Param, PatBind};
use crate::name::{Fresh, Name};
use crate::store::{ConcreteLoc, ExtIndex};

/// What a filled ivar stands for: a cell index (for a location ivar) or an
/// integer (for a scalar ivar).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum IvarFill {
    Index(u64),
    Scalar(i64),
}

/// Simultaneous substitution of variables, locations, regions and ivars.
///
/// Binders shadow: a name rebound inside `e` is not replaced below its
/// binder. Replacements are not renamed on the way in, so callers freshen
/// the target first when a replacement could be captured.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Subst {
    pub vars: BTreeMap<Name, Expr>,
    pub locs: BTreeMap<Name, Name>,
    pub regions: BTreeMap<Name, Name>,
    pub ivars: BTreeMap<Name, IvarFill>,
}

impl Subst {
    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
            && self.locs.is_empty()
            && self.regions.is_empty()
            && self.ivars.is_empty()
    }

    fn loc(&self, l: &Name) -> Name {
        self.locs.get(l).cloned().unwrap_or_else(|| l.clone())
    }

    fn region(&self, r: &Name) -> Name {
        self.regions.get(r).cloned().unwrap_or_else(|| r.clone())
    }

    fn locreg(&self, lr: &LocReg) -> LocReg {
        LocReg {
            loc: self.loc(&lr.loc),
            region: self.region(&lr.region),
        }
    }

    fn loctype(&self, t: &LocType) -> LocType {
        match t {
            LocType::Int => LocType::Int,
            LocType::At(ty, lr) => LocType::At(ty.clone(), self.locreg(lr)),
        }
    }

    fn concrete(&self, cl: &ConcreteLoc) -> ConcreteLoc {
        let ext = match &cl.ext {
            ExtIndex::Ivar(x) => match self.ivars.get(x) {
                Some(IvarFill::Index(i)) => ExtIndex::Concrete(*i),
                _ => cl.ext.clone(),
            },
            ExtIndex::Indirection(r, i) => ExtIndex::Indirection(self.region(r), *i),
            ExtIndex::Concrete(_) => cl.ext.clone(),
        };
        ConcreteLoc {
            region: self.region(&cl.region),
            ext,
            origin: cl.origin.as_ref().map(|l| self.loc(l)),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    Var,
    Loc,
    Region,
}

/// Decides what happens at each binder: `Some(new)` renames it, `None`
/// keeps the name (and shadows any outer replacement for it).
trait Binder {
    fn bind(&mut self, kind: Kind, name: &Name) -> Option<Name>;
}

struct Keep;

impl Binder for Keep {
    fn bind(&mut self, _: Kind, _: &Name) -> Option<Name> {
        None
    }
}

struct Freshen<'a>(&'a mut Fresh);

impl Binder for Freshen<'_> {
    fn bind(&mut self, _: Kind, name: &Name) -> Option<Name> {
        Some(self.0.name(name.base()))
    }
}

struct Uniquify<'a> {
    fresh: &'a mut Fresh,
    seen: BTreeSet<Name>,
}

impl Binder for Uniquify<'_> {
    fn bind(&mut self, _: Kind, name: &Name) -> Option<Name> {
        if self.seen.insert(name.clone()) {
            None
        } else {
            let n = self.fresh.name(name.base());
            self.seen.insert(n.clone());
            Some(n)
        }
    }
}

fn enter(s: &Subst, kind: Kind, name: &Name, b: &mut impl Binder) -> (Name, Subst) {
    let new = b.bind(kind, name);
    let mut inner = s.clone();
    let renamed = new.clone().unwrap_or_else(|| name.clone());
    match (kind, new) {
        (Kind::Var, Some(n)) => {
            inner.vars.insert(name.clone(), Expr::Var(n));
        }
        (Kind::Var, None) => {
            inner.vars.remove(name);
        }
        (Kind::Loc, Some(n)) => {
            inner.locs.insert(name.clone(), n);
        }
        (Kind::Loc, None) => {
            inner.locs.remove(name);
        }
        (Kind::Region, Some(n)) => {
            inner.regions.insert(name.clone(), n);
        }
        (Kind::Region, None) => {
            inner.regions.remove(name);
        }
    }
    (renamed, inner)
}

fn walk(e: &Expr, s: &Subst, b: &mut impl Binder) -> Expr {
    match e {
        Expr::Var(x) => s.vars.get(x).cloned().unwrap_or_else(|| e.clone()),
        Expr::Int(_) => e.clone(),
        Expr::IvarInt(x) => match s.ivars.get(x) {
            Some(IvarFill::Scalar(n)) => Expr::Int(*n),
            _ => e.clone(),
        },
        Expr::Loc(cl) => Expr::Loc(s.concrete(cl)),
        Expr::PrimOp(op, a, c) => {
            Expr::PrimOp(*op, Box::new(walk(a, s, b)), Box::new(walk(c, s, b)))
        }
        Expr::If(c, t, f) => Expr::If(
            Box::new(walk(c, s, b)),
            Box::new(walk(t, s, b)),
            Box::new(walk(f, s, b)),
        ),
        Expr::App(f, locs, args) => Expr::App(
            f.clone(),
            locs.iter().map(|lr| s.locreg(lr)).collect(),
            args.iter().map(|a| walk(a, s, b)).collect(),
        ),
        Expr::DataCon(k, lr, args) => Expr::DataCon(
            k.clone(),
            s.locreg(lr),
            args.iter().map(|a| walk(a, s, b)).collect(),
        ),
        Expr::Let {
            var,
            ty,
            bound,
            spawn,
            body,
        } => {
            let ty = s.loctype(ty);
            let bound = walk(bound, s, b);
            let (var, inner) = enter(s, Kind::Var, var, b);
            Expr::Let {
                var,
                ty,
                bound: Box::new(bound),
                spawn: *spawn,
                body: Box::new(walk(body, &inner, b)),
            }
        }
        Expr::LetLoc(lr, le, body) => {
            let le = match le {
                LocExpr::Start(r) => LocExpr::Start(s.region(r)),
                LocExpr::Tag(lr, n) => LocExpr::Tag(s.locreg(lr), *n),
                LocExpr::After(t, lr) => LocExpr::After(t.clone(), s.locreg(lr)),
            };
            let region = s.region(&lr.region);
            let (loc, inner) = enter(s, Kind::Loc, &lr.loc, b);
            Expr::LetLoc(LocReg { loc, region }, le, Box::new(walk(body, &inner, b)))
        }
        Expr::LetRegion(r, body) => {
            let (r, inner) = enter(s, Kind::Region, r, b);
            Expr::LetRegion(r, Box::new(walk(body, &inner, b)))
        }
        Expr::Case(scrut, branches) => {
            let scrut = walk(scrut, s, b);
            let branches = branches
                .iter()
                .map(|br| {
                    let mut inner = s.clone();
                    let mut binds = Vec::with_capacity(br.binds.len());
                    for pb in &br.binds {
                        // A pattern's location is bound by the pattern; its
                        // region refers to the scrutinee's region.
                        let ty = match &pb.ty {
                            LocType::Int => LocType::Int,
                            LocType::At(t, lr) => {
                                let region = inner.region(&lr.region);
                                let (loc, next) = enter(&inner, Kind::Loc, &lr.loc, b);
                                inner = next;
                                LocType::At(t.clone(), LocReg { loc, region })
                            }
                        };
                        let (var, next) = enter(&inner, Kind::Var, &pb.var, b);
                        inner = next;
                        binds.push(PatBind { var, ty });
                    }
                    Branch {
                        tag: br.tag.clone(),
                        binds,
                        body: walk(&br.body, &inner, b),
                    }
                })
                .collect();
            Expr::Case(Box::new(scrut), branches)
        }
    }
}

pub fn substitute(e: &Expr, s: &Subst) -> Expr {
    if s.is_empty() {
        return e.clone();
    }
    walk(e, s, &mut Keep)
}

/// Renames every binder in `e` to a fresh name.
pub fn freshen_expr(e: &Expr, fresh: &mut Fresh) -> Expr {
    walk(e, &Subst::default(), &mut Freshen(fresh))
}

/// A copy of `fd` whose location parameters, region parameters, value
/// parameters and internal binders are all fresh.
pub fn freshen(fd: &FunDecl, fresh: &mut Fresh) -> FunDecl {
    let mut s = Subst::default();
    let mut loc_params = Vec::with_capacity(fd.loc_params.len());
    for lr in &fd.loc_params {
        let loc = s
            .locs
            .entry(lr.loc.clone())
            .or_insert_with(|| fresh.name(lr.loc.base()))
            .clone();
        let region = s
            .regions
            .entry(lr.region.clone())
            .or_insert_with(|| fresh.name(lr.region.base()))
            .clone();
        loc_params.push(LocReg { loc, region });
    }
    let mut params = Vec::with_capacity(fd.params.len());
    for p in &fd.params {
        let var = fresh.name(p.var.base());
        s.vars.insert(p.var.clone(), Expr::Var(var.clone()));
        params.push(Param {
            var,
            ty: s.loctype(&p.ty),
        });
    }
    let ret = s.loctype(&fd.ret);
    let body = walk(&fd.body, &s, &mut Freshen(fresh));
    FunDecl {
        name: fd.name.clone(),
        loc_params,
        params,
        ret,
        body,
    }
}

/// Renames binders that reuse a name already bound earlier in `e`, keeping
/// the first binding of each name as written.
pub fn uniquify_binders(e: &Expr, fresh: &mut Fresh) -> Expr {
    walk(
        e,
        &Subst::default(),
        &mut Uniquify {
            fresh,
            seen: BTreeSet::new(),
        },
    )
}

/// Marks every `let` as a spawn point.
pub fn implicit_par(e: &Expr) -> Expr {
    match e {
        Expr::Let {
            var,
            ty,
            bound,
            body,
            ..
        } => Expr::Let {
            var: var.clone(),
            ty: ty.clone(),
            bound: Box::new(implicit_par(bound)),
            spawn: true,
            body: Box::new(implicit_par(body)),
        },
        Expr::LetLoc(lr, le, body) => {
            Expr::LetLoc(lr.clone(), le.clone(), Box::new(implicit_par(body)))
        }
        Expr::LetRegion(r, body) => Expr::LetRegion(r.clone(), Box::new(implicit_par(body))),
        Expr::If(c, t, f) => Expr::If(
            Box::new(implicit_par(c)),
            Box::new(implicit_par(t)),
            Box::new(implicit_par(f)),
        ),
        Expr::PrimOp(op, a, b) => {
            Expr::PrimOp(*op, Box::new(implicit_par(a)), Box::new(implicit_par(b)))
        }
        Expr::Case(scrut, branches) => Expr::Case(
            scrut.clone(),
            branches
                .iter()
                .map(|b| Branch {
                    tag: b.tag.clone(),
                    binds: b.binds.clone(),
                    body: implicit_par(&b.body),
                })
                .collect(),
        ),
        _ => e.clone(),
    }
}

/// Names occurring free in an expression, by namespace.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FreeNames {
    pub vars: BTreeSet<Name>,
    pub locs: BTreeSet<Name>,
    pub regions: BTreeSet<Name>,
    pub ivars: BTreeSet<Name>,
}

pub fn free_names(e: &Expr) -> FreeNames {
    let mut out = FreeNames::default();
    let mut bound = Bound::default();
    collect(e, &mut bound, &mut out);
    out
}

#[derive(Default)]
struct Bound {
    vars: Vec<Name>,
    locs: Vec<Name>,
    regions: Vec<Name>,
}

impl Bound {
    fn locreg(&self, lr: &LocReg, out: &mut FreeNames) {
        if !self.locs.contains(&lr.loc) {
            out.locs.insert(lr.loc.clone());
        }
        self.region(&lr.region, out);
    }

    fn region(&self, r: &Name, out: &mut FreeNames) {
        if !self.regions.contains(r) {
            out.regions.insert(r.clone());
        }
    }

    fn loctype(&self, t: &LocType, out: &mut FreeNames) {
        if let LocType::At(_, lr) = t {
            self.locreg(lr, out);
        }
    }
}

fn collect(e: &Expr, bound: &mut Bound, out: &mut FreeNames) {
    match e {
        Expr::Var(x) => {
            if !bound.vars.contains(x) {
                out.vars.insert(x.clone());
            }
        }
        Expr::Int(_) => {}
        Expr::IvarInt(x) => {
            out.ivars.insert(x.clone());
        }
        Expr::Loc(cl) => {
            bound.region(&cl.region, out);
            match &cl.ext {
                ExtIndex::Ivar(x) => {
                    out.ivars.insert(x.clone());
                }
                ExtIndex::Indirection(r, _) => bound.region(r, out),
                ExtIndex::Concrete(_) => {}
            }
        }
        Expr::PrimOp(_, a, b) => {
            collect(a, bound, out);
            collect(b, bound, out);
        }
        Expr::If(c, t, f) => {
            collect(c, bound, out);
            collect(t, bound, out);
            collect(f, bound, out);
        }
        Expr::App(_, locs, args) => {
            for lr in locs {
                bound.locreg(lr, out);
            }
            for a in args {
                collect(a, bound, out);
            }
        }
        Expr::DataCon(_, lr, args) => {
            bound.locreg(lr, out);
            for a in args {
                collect(a, bound, out);
            }
        }
        Expr::Let {
            var,
            ty,
            bound: rhs,
            body,
            ..
        } => {
            bound.loctype(ty, out);
            collect(rhs, bound, out);
            bound.vars.push(var.clone());
            collect(body, bound, out);
            bound.vars.pop();
        }
        Expr::LetLoc(lr, le, body) => {
            match le {
                LocExpr::Start(r) => bound.region(r, out),
                LocExpr::Tag(lr2, _) | LocExpr::After(_, lr2) => bound.locreg(lr2, out),
            }
            bound.region(&lr.region, out);
            bound.locs.push(lr.loc.clone());
            collect(body, bound, out);
            bound.locs.pop();
        }
        Expr::LetRegion(r, body) => {
            bound.regions.push(r.clone());
            collect(body, bound, out);
            bound.regions.pop();
        }
        Expr::Case(scrut, branches) => {
            collect(scrut, bound, out);
            for br in branches {
                let (nv, nl) = (bound.vars.len(), bound.locs.len());
                for pb in &br.binds {
                    if let LocType::At(_, lr) = &pb.ty {
                        bound.region(&lr.region, out);
                        bound.locs.push(lr.loc.clone());
                    }
                    bound.vars.push(pb.var.clone());
                }
                collect(&br.body, bound, out);
                bound.vars.truncate(nv);
                bound.locs.truncate(nl);
            }
        }
    }
}
