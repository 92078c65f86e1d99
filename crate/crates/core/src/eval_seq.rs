//! Small-step sequential evaluation over a region store.
//!
//! A [`SeqState`] is one task's private machine: store, location map,
//! expression, an end-witness cache, and a shadow of the typing
//! environments that the parallel evaluator uses for checking.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::name::{Fresh, Name};
use crate::store::{
    deref_location, end_of, ConcreteLoc, ExtIndex, HeapValue, LocationMap, RegionKind, Store,
    StoreError,
};
use crate::syntax::{
    freshen, substitute, uniquify_binders, Branch, DataEnv, Expr, LocExpr, LocReg, LocType,
    Program, Subst, Ty,
};
use crate::typecheck::TypeState;

/// Which transition fired.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rule {
    App,
    LetRegion,
    LetLocStart,
    LetLocTag,
    LetLocAfter,
    LetLocAfterNewReg,
    DataConstructor,
    LetVal,
    PrimOp,
    If,
    Case,
}

impl Rule {
    pub fn name(self) -> &'static str {
        match self {
            Rule::App => "D-App",
            Rule::LetRegion => "D-LetRegion",
            Rule::LetLocStart => "D-LetLoc-Start",
            Rule::LetLocTag => "D-LetLoc-Tag",
            Rule::LetLocAfter => "D-LetLoc-After",
            Rule::LetLocAfterNewReg => "D-LetLoc-After-NewReg",
            Rule::DataConstructor => "D-DataConstructor",
            Rule::LetVal => "D-Let-Val",
            Rule::PrimOp => "D-PrimOp",
            Rule::If => "D-If",
            Rule::Case => "D-Case",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// What one step did, for traces and invariant checks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepInfo {
    pub rule: Rule,
    pub writes: Vec<(Name, u64, HeapValue)>,
    pub binds: Vec<(Name, ConcreteLoc)>,
    pub regions: Vec<Name>,
}

impl StepInfo {
    fn new(rule: Rule) -> Self {
        StepInfo {
            rule,
            writes: Vec::new(),
            binds: Vec::new(),
            regions: Vec::new(),
        }
    }
}

impl fmt::Display for StepInfo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "rule={}", self.rule)?;
        for r in &self.regions {
            write!(f, " +region {r}")?;
        }
        for (l, cl) in &self.binds {
            write!(f, " M[{l}]={cl}")?;
        }
        for (r, i, v) in &self.writes {
            match v {
                HeapValue::Tag(k) => write!(f, " {r}[{i}]={k}")?,
                HeapValue::Scalar(n) => write!(f, " {r}[{i}]={n}")?,
                HeapValue::Indirection(t, j) => write!(f, " {r}[{i}]=→({t},{j})")?,
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("stuck in {rule}: {reason}")]
pub struct Stuck {
    pub rule: &'static str,
    pub reason: String,
}

fn stuck(rule: Rule, reason: impl Into<String>) -> Stuck {
    Stuck {
        rule: rule.name(),
        reason: reason.into(),
    }
}

fn store_stuck(rule: Rule, e: StoreError) -> Stuck {
    stuck(rule, format!("{e}"))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Step {
    Stepped(StepInfo),
    /// The expression is a value.
    Value,
    /// Waiting on these ivars.
    Blocked(Vec<Name>),
}

/// Per-task event counts.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Counters {
    pub steps: u64,
    pub cells_written: u64,
    pub regions_created: u64,
    pub newreg_firings: u64,
    /// Ivars whose pending value forced a fresh region.
    pub newreg_ivars: BTreeSet<Name>,
    pub ew_checks: u64,
    pub ew_mismatches: u64,
}

impl Counters {
    pub fn absorb(&mut self, other: &Counters) {
        self.steps += other.steps;
        self.cells_written += other.cells_written;
        self.regions_created += other.regions_created;
        self.newreg_firings += other.newreg_firings;
        self.newreg_ivars.extend(other.newreg_ivars.iter().cloned());
        self.ew_checks += other.ew_checks;
        self.ew_mismatches += other.ew_mismatches;
    }
}

/// A field whose successor was placed in a fresh region; once `prev` is
/// complete an indirection to `next` goes at its end.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PendingLink {
    pub ty: Ty,
    pub prev: Name,
    pub next: Name,
}

/// Read-only evaluation context.
#[derive(Clone, Copy)]
pub struct Ctx<'a> {
    pub program: &'a Program,
    pub env: &'a DataEnv,
    /// Compare every cached end-witness against a fresh scan.
    pub audit: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SeqState {
    pub store: Store,
    pub locmap: LocationMap,
    pub expr: Expr,
    /// Start of a completed value to one past its end.
    pub notes: BTreeMap<(Name, u64), (Name, u64)>,
    pub shadow: TypeState,
    pub pending: Vec<PendingLink>,
    pub fresh: Fresh,
    pub counters: Counters,
}

impl SeqState {
    /// Initial state for `main`: empty store and map. Repeated binder names
    /// in `main` are renamed so each `letregion` creates a distinct region.
    pub fn for_main(p: &Program) -> Self {
        let mut fresh = Fresh::root();
        let expr = uniquify_binders(&p.main, &mut fresh);
        SeqState::new(expr, fresh)
    }

    pub fn new(expr: Expr, fresh: Fresh) -> Self {
        SeqState {
            store: Store::new(),
            locmap: LocationMap::new(),
            expr,
            notes: BTreeMap::new(),
            shadow: TypeState::default(),
            pending: Vec::new(),
            fresh,
            counters: Counters::default(),
        }
    }

    /// A non-ivar value: nothing left to do.
    pub fn is_complete(&self) -> bool {
        match &self.expr {
            Expr::Int(_) => true,
            Expr::Loc(cl) => !matches!(cl.ext, ExtIndex::Ivar(_)),
            _ => false,
        }
    }

    pub fn step(&mut self, cx: Ctx<'_>) -> Result<Step, Stuck> {
        match &self.expr {
            Expr::Var(x) => return Err(stuck(Rule::LetVal, format!("free variable `{x}`"))),
            Expr::IvarInt(x) => return Ok(Step::Blocked(alloc::vec![x.clone()])),
            Expr::Loc(cl) => {
                return Ok(match &cl.ext {
                    ExtIndex::Ivar(x) => Step::Blocked(alloc::vec![x.clone()]),
                    _ => Step::Value,
                })
            }
            Expr::Int(_) => return Ok(Step::Value),
            _ => {}
        }
        let mut e = core::mem::replace(&mut self.expr, Expr::Int(0));
        let out = self.step_in(cx, &mut e);
        self.expr = e;
        let out = out?;
        if let Step::Stepped(info) = &out {
            self.counters.steps += 1;
            self.counters.cells_written += info.writes.len() as u64;
            self.counters.regions_created += info.regions.len() as u64;
        }
        Ok(out)
    }

    fn step_in(&mut self, cx: Ctx<'_>, e: &mut Expr) -> Result<Step, Stuck> {
        match e {
            Expr::Let { bound, spawn, .. } if !bound.is_value() => {
                *spawn = false;
                return self.step_in(cx, bound);
            }
            Expr::PrimOp(_, a, _) if !a.is_value() => return self.step_in(cx, a),
            Expr::PrimOp(_, _, b) if !b.is_value() => return self.step_in(cx, b),
            Expr::If(c, _, _) if !c.is_value() => return self.step_in(cx, c),
            _ => {}
        }
        let taken = core::mem::replace(e, Expr::Int(0));
        let (next, out) = match self.redex(cx, taken) {
            Ok(pair) => pair,
            Err(Redex::Blocked(orig, xs)) => {
                *e = orig;
                return Ok(Step::Blocked(xs));
            }
            Err(Redex::Stuck(orig, s)) => {
                *e = orig;
                return Err(s);
            }
        };
        *e = next;
        Ok(Step::Stepped(out))
    }

    #[allow(clippy::result_large_err)]
    fn redex(&mut self, cx: Ctx<'_>, e: Expr) -> Result<(Expr, StepInfo), Redex> {
        match e {
            Expr::Let {
                var,
                ty,
                bound,
                body,
                ..
            } => {
                let v = *bound;
                let mut s = Subst::default();
                s.vars.insert(var.clone(), v.clone());
                if let LocType::At(t, lr) = &ty {
                    self.shadow.sigma.insert(lr.loc.clone(), t.clone());
                }
                Ok((substitute(&body, &s), StepInfo::new(Rule::LetVal)))
            }
            Expr::PrimOp(op, a, b) => match (&*a, &*b) {
                (Expr::Int(x), Expr::Int(y)) => {
                    Ok((Expr::Int(op.apply(*x, *y)), StepInfo::new(Rule::PrimOp)))
                }
                _ => {
                    let xs = ivars_of([&*a, &*b]);
                    let orig = Expr::PrimOp(op, a, b);
                    if xs.is_empty() {
                        Err(Redex::Stuck(
                            orig,
                            stuck(Rule::PrimOp, "operand is not an integer"),
                        ))
                    } else {
                        Err(Redex::Blocked(orig, xs))
                    }
                }
            },
            Expr::If(c, t, f) => match &*c {
                Expr::Int(n) => Ok((if *n != 0 { *t } else { *f }, StepInfo::new(Rule::If))),
                Expr::IvarInt(x) => {
                    let xs = alloc::vec![x.clone()];
                    Err(Redex::Blocked(Expr::If(c, t, f), xs))
                }
                _ => Err(Redex::Stuck(
                    Expr::If(c, t, f),
                    stuck(Rule::If, "condition is not an integer"),
                )),
            },
            Expr::App(f, locs, args) => {
                let Some(fd) = cx.program.fundecl(&f) else {
                    let s = stuck(Rule::App, format!("unknown function `{f}`"));
                    return Err(Redex::Stuck(Expr::App(f, locs, args), s));
                };
                if fd.loc_params.len() != locs.len() || fd.params.len() != args.len() {
                    let s = stuck(Rule::App, format!("arity of `{f}`"));
                    return Err(Redex::Stuck(Expr::App(f, locs, args), s));
                }
                let fd = freshen(fd, &mut self.fresh);
                let mut s = Subst::default();
                for (formal, actual) in fd.loc_params.iter().zip(&locs) {
                    s.locs.insert(formal.loc.clone(), actual.loc.clone());
                    s.regions
                        .insert(formal.region.clone(), actual.region.clone());
                }
                for (p, a) in fd.params.iter().zip(args) {
                    s.vars.insert(p.var.clone(), a);
                }
                Ok((substitute(&fd.body, &s), StepInfo::new(Rule::App)))
            }
            Expr::LetRegion(r, body) => {
                let stamp = self.fresh.stamp();
                if let Err(err) = self
                    .store
                    .create_region(r.clone(), RegionKind::Lexical, 1, stamp)
                {
                    return Err(Redex::Stuck(
                        Expr::LetRegion(r, body),
                        store_stuck(Rule::LetRegion, err),
                    ));
                }
                self.shadow.allocs.insert(r.clone(), None);
                self.shadow.regions.insert(r.clone());
                let mut info = StepInfo::new(Rule::LetRegion);
                info.regions.push(r);
                Ok((*body, info))
            }
            Expr::LetLoc(lr, le, body) => match self.letloc(cx, &lr, &le) {
                Ok(info) => {
                    self.shadow.locs.insert(lr.loc.clone(), lr.region.clone());
                    self.shadow.constraints.insert(lr.loc.clone(), le);
                    self.shadow.nursery.insert(lr.loc.clone());
                    self.shadow.allocs.insert(lr.region, Some(lr.loc));
                    Ok((*body, info))
                }
                Err(s) => Err(Redex::Stuck(Expr::LetLoc(lr, le, body), s)),
            },
            Expr::DataCon(k, lr, args) => {
                let xs = ivars_of(args.iter());
                if !xs.is_empty() {
                    return Err(Redex::Blocked(Expr::DataCon(k, lr, args), xs));
                }
                match self.datacon(cx, &k, &lr, &args) {
                    Ok(pair) => Ok(pair),
                    Err(s) => Err(Redex::Stuck(Expr::DataCon(k, lr, args), s)),
                }
            }
            Expr::Case(scrut, branches) => {
                if let Expr::Loc(ConcreteLoc {
                    ext: ExtIndex::Ivar(x),
                    ..
                }) = &*scrut
                {
                    let xs = alloc::vec![x.clone()];
                    return Err(Redex::Blocked(Expr::Case(scrut, branches), xs));
                }
                match self.case(cx, &scrut, &branches) {
                    Ok(pair) => Ok(pair),
                    Err(s) => Err(Redex::Stuck(Expr::Case(scrut, branches), s)),
                }
            }
            other => {
                let s = stuck(Rule::LetVal, "no rule applies");
                Err(Redex::Stuck(other, s))
            }
        }
    }

    fn letloc(&mut self, cx: Ctx<'_>, lr: &LocReg, le: &LocExpr) -> Result<StepInfo, Stuck> {
        let (rule, cl) = match le {
            LocExpr::Start(r) => {
                if !self.store.contains(r) {
                    return Err(stuck(Rule::LetLocStart, format!("unknown region `{r}`")));
                }
                (Rule::LetLocStart, ConcreteLoc::at(r.clone(), 0))
            }
            LocExpr::Tag(prev, n) => {
                let base = deref_location(&self.locmap, &prev.loc)
                    .map_err(|e| store_stuck(Rule::LetLocTag, e))?;
                let Some(i) = base.index() else {
                    return Err(stuck(
                        Rule::LetLocTag,
                        format!("`{}` has no index yet", prev.loc),
                    ));
                };
                (
                    Rule::LetLocTag,
                    ConcreteLoc::at(base.region, i + u64::from(*n)),
                )
            }
            LocExpr::After(t, prev) => {
                let base = deref_location(&self.locmap, &prev.loc)
                    .map_err(|e| store_stuck(Rule::LetLocAfter, e))?;
                match &base.ext {
                    ExtIndex::Concrete(i) => {
                        let (r, e) = self
                            .end_at(cx, t, &base.region, *i)
                            .map_err(|e| store_stuck(Rule::LetLocAfter, e))?;
                        (Rule::LetLocAfter, ConcreteLoc::at(r, e))
                    }
                    ExtIndex::Ivar(x) => {
                        let fresh_r = self.fresh.name(lr.region.base());
                        let stamp = self.fresh.stamp();
                        self.store
                            .create_region(fresh_r.clone(), RegionKind::Extra, 0, stamp)
                            .map_err(|e| store_stuck(Rule::LetLocAfterNewReg, e))?;
                        self.counters.newreg_firings += 1;
                        self.counters.newreg_ivars.insert(x.clone());
                        self.pending.push(PendingLink {
                            ty: t.clone(),
                            prev: prev.loc.clone(),
                            next: lr.loc.clone(),
                        });
                        let cl = ConcreteLoc {
                            region: base.region.clone(),
                            ext: ExtIndex::Indirection(fresh_r.clone(), 0),
                            origin: None,
                        };
                        let mut info = StepInfo::new(Rule::LetLocAfterNewReg);
                        info.regions.push(fresh_r);
                        let cl = cl.with_origin(lr.loc.clone());
                        self.locmap.insert(lr.loc.clone(), cl.clone());
                        info.binds.push((lr.loc.clone(), cl));
                        return Ok(info);
                    }
                    ExtIndex::Indirection(..) => {
                        unreachable!("deref_location removes indirections")
                    }
                }
            }
        };
        let cl = cl.with_origin(lr.loc.clone());
        self.locmap.insert(lr.loc.clone(), cl.clone());
        let mut info = StepInfo::new(rule);
        info.binds.push((lr.loc.clone(), cl));
        Ok(info)
    }

    fn datacon(
        &mut self,
        cx: Ctx<'_>,
        k: &Name,
        lr: &LocReg,
        args: &[Expr],
    ) -> Result<(Expr, StepInfo), Stuck> {
        let rule = Rule::DataConstructor;
        let info = cx
            .env
            .con(k)
            .ok_or_else(|| stuck(rule, format!("unknown constructor `{k}`")))?;
        let mut out = StepInfo::new(rule);
        self.flush_links(cx, &mut out.writes)
            .map_err(|e| store_stuck(rule, e))?;
        let at = deref_location(&self.locmap, &lr.loc).map_err(|e| store_stuck(rule, e))?;
        let Some(i) = at.index() else {
            return Err(stuck(rule, format!("`{}` has no index", lr.loc)));
        };
        let r = at.region.clone();
        self.write(&r, i, HeapValue::Tag(k.clone()), &mut out.writes)
            .map_err(|e| store_stuck(rule, e))?;
        let s = info.scalar_prefix();
        for (j, a) in args.iter().take(s).enumerate() {
            let Expr::Int(n) = a else {
                return Err(stuck(
                    rule,
                    format!("scalar field {j} of `{k}` is not an integer"),
                ));
            };
            self.write(&r, i + 1 + j as u64, HeapValue::Scalar(*n), &mut out.writes)
                .map_err(|e| store_stuck(rule, e))?;
        }
        let end = match info.packed_fields().last() {
            None => (r.clone(), i + 1 + s as u64),
            Some((j, t)) => {
                let Expr::Loc(cl) = &args[j] else {
                    return Err(stuck(rule, format!("field {j} of `{k}` is not a location")));
                };
                let start = self.resolve_loc(cl).map_err(|e| store_stuck(rule, e))?;
                self.end_at(cx, &Ty::Con(t.clone()), &start.0, start.1)
                    .map_err(|e| store_stuck(rule, e))?
            }
        };
        self.notes.insert((r.clone(), i), end);
        if cx.audit {
            self.audit_note(cx, &Ty::Con(info.tycon.clone()), &r, i);
        }
        self.shadow
            .allocs
            .insert(lr.region.clone(), Some(lr.loc.clone()));
        self.shadow.nursery.remove(&lr.loc);
        self.shadow
            .sigma
            .insert(lr.loc.clone(), Ty::Con(info.tycon.clone()));
        let value = self
            .locmap
            .get(&lr.loc)
            .cloned()
            .expect("dereferenced above");
        Ok((Expr::Loc(value), out))
    }

    fn case(
        &mut self,
        cx: Ctx<'_>,
        scrut: &Expr,
        branches: &[Branch],
    ) -> Result<(Expr, StepInfo), Stuck> {
        let rule = Rule::Case;
        let Expr::Loc(cl) = scrut else {
            return Err(stuck(rule, "scrutinee is not a location"));
        };
        let (r, i) = self.resolve_loc(cl).map_err(|e| store_stuck(rule, e))?;
        let Some(HeapValue::Tag(k)) = self.store.cell(&r, i).cloned() else {
            return Err(stuck(rule, format!("no tag at {r}[{i}]")));
        };
        let info = cx
            .env
            .con(&k)
            .ok_or_else(|| stuck(rule, format!("unknown constructor `{k}`")))?;
        let br = branches
            .iter()
            .find(|b| b.tag == k)
            .ok_or_else(|| stuck(rule, format!("no branch for `{k}`")))?;
        if br.binds.len() != info.fields.len() {
            return Err(stuck(rule, format!("pattern arity for `{k}`")));
        }
        let mut out = StepInfo::new(rule);
        let mut s = Subst::default();
        let mut pos = (r.clone(), i + 1);
        let at = scrut_locreg(cl, br);
        let mut prev: Option<(Ty, LocReg)> = None;
        let last = info.fields.len().saturating_sub(1);
        for (j, (field, pb)) in info.fields.iter().zip(&br.binds).enumerate() {
            match field {
                Ty::Int => {
                    let Some(HeapValue::Scalar(n)) = self.store.cell(&pos.0, pos.1) else {
                        return Err(stuck(rule, format!("no scalar at {}[{}]", pos.0, pos.1)));
                    };
                    s.vars.insert(pb.var.clone(), Expr::Int(*n));
                    if let LocType::At(_, lj) = &pb.ty {
                        let c = ConcreteLoc::at(pos.0.clone(), pos.1).with_origin(lj.loc.clone());
                        self.locmap.insert(lj.loc.clone(), c.clone());
                        out.binds.push((lj.loc.clone(), c));
                        self.shadow.sigma.insert(lj.loc.clone(), Ty::Int);
                        self.shadow.locs.insert(lj.loc.clone(), lj.region.clone());
                        if let Some(at) = &at {
                            self.shadow
                                .constraints
                                .insert(lj.loc.clone(), LocExpr::Tag(at.clone(), 1 + j as u32));
                        }
                    }
                    pos.1 += 1;
                }
                Ty::Con(_) => {
                    let LocType::At(_, lj) = &pb.ty else {
                        return Err(stuck(rule, format!("field {j} of `{k}` bound as a scalar")));
                    };
                    let c = ConcreteLoc::at(pos.0.clone(), pos.1).with_origin(lj.loc.clone());
                    self.locmap.insert(lj.loc.clone(), c.clone());
                    out.binds.push((lj.loc.clone(), c.clone()));
                    s.vars.insert(pb.var.clone(), Expr::Loc(c));
                    self.shadow.sigma.insert(lj.loc.clone(), field.clone());
                    self.shadow.locs.insert(lj.loc.clone(), lj.region.clone());
                    let constraint = match (&prev, &at) {
                        (None, Some(at)) => Some(LocExpr::Tag(at.clone(), 1 + j as u32)),
                        (Some((pt, pl)), _) => Some(LocExpr::After(pt.clone(), pl.clone())),
                        (None, None) => None,
                    };
                    if let Some(c) = constraint {
                        self.shadow.constraints.insert(lj.loc.clone(), c);
                    }
                    prev = Some((field.clone(), lj.clone()));
                    if j < last {
                        pos = self
                            .end_at(cx, field, &pos.0, pos.1)
                            .map_err(|e| store_stuck(rule, e))?;
                    }
                }
            }
        }
        Ok((substitute(&br.body, &s), out))
    }

    fn write(
        &mut self,
        r: &Name,
        i: u64,
        hv: HeapValue,
        log: &mut Vec<(Name, u64, HeapValue)>,
    ) -> Result<(), StoreError> {
        if self.store.write_cell(r, i, hv.clone())? {
            log.push((r.clone(), i, hv));
        }
        Ok(())
    }

    /// Where a location value's data actually begins.
    fn resolve_loc(&self, cl: &ConcreteLoc) -> Result<(Name, u64), StoreError> {
        let (r, i) = match &cl.ext {
            ExtIndex::Concrete(i) => (cl.region.clone(), *i),
            ExtIndex::Indirection(r, i) => (r.clone(), *i),
            ExtIndex::Ivar(_) => return Err(StoreError::NotConcrete(cl.clone())),
        };
        self.store.resolve(&r, i)
    }

    /// End-witness of the value of type `t` at `(r, i)`, from the cache
    /// when possible.
    pub fn end_at(
        &mut self,
        cx: Ctx<'_>,
        t: &Ty,
        r: &Name,
        i: u64,
    ) -> Result<(Name, u64), StoreError> {
        if *t == Ty::Int {
            return Ok((r.clone(), i + 1));
        }
        let start = self.store.resolve(r, i)?;
        match self.notes.get(&start).cloned() {
            Some(end) => {
                if cx.audit {
                    self.audit_note(cx, t, &start.0, start.1);
                }
                Ok(end)
            }
            None => end_of(cx.env, t, r, i, &self.store),
        }
    }

    fn audit_note(&mut self, cx: Ctx<'_>, t: &Ty, r: &Name, i: u64) {
        let Some(noted) = self.notes.get(&(r.clone(), i)) else {
            return;
        };
        self.counters.ew_checks += 1;
        match end_of(cx.env, t, r, i, &self.store) {
            Ok(scanned) if scanned == *noted => {}
            _ => self.counters.ew_mismatches += 1,
        }
    }

    /// Writes the indirection for every pending link whose earlier field
    /// is now complete.
    pub fn flush_links(
        &mut self,
        cx: Ctx<'_>,
        log: &mut Vec<(Name, u64, HeapValue)>,
    ) -> Result<(), StoreError> {
        let pending = core::mem::take(&mut self.pending);
        for link in pending {
            let prev = deref_location(&self.locmap, &link.prev)?;
            let Some(i) = prev.index() else {
                self.pending.push(link);
                continue;
            };
            let next = self
                .locmap
                .get(&link.next)
                .ok_or_else(|| StoreError::UnboundLocation(link.next.clone()))?;
            let (r2, i2) = match &next.ext {
                ExtIndex::Indirection(r2, i2) => (r2.clone(), *i2),
                ExtIndex::Concrete(i2) => (next.region.clone(), *i2),
                ExtIndex::Ivar(_) => {
                    self.pending.push(link);
                    continue;
                }
            };
            let (er, ei) = self.end_at(cx, &link.ty, &prev.region, i)?;
            self.write(&er, ei, HeapValue::Indirection(r2, i2), log)?;
        }
        Ok(())
    }
}

enum Redex {
    Blocked(Expr, Vec<Name>),
    Stuck(Expr, Stuck),
}

/// The scrutinee's symbolic location, recovered from its origin and the
/// region the branch patterns name.
fn scrut_locreg(cl: &ConcreteLoc, br: &Branch) -> Option<LocReg> {
    let l = cl.origin.clone()?;
    let region = br
        .binds
        .iter()
        .find_map(|b| b.ty.at().map(|lr| lr.region.clone()))?;
    Some(LocReg { loc: l, region })
}

fn ivars_of<'a>(es: impl IntoIterator<Item = &'a Expr>) -> Vec<Name> {
    es.into_iter()
        .filter_map(|e| match e {
            Expr::IvarInt(x) => Some(x.clone()),
            Expr::Loc(ConcreteLoc {
                ext: ExtIndex::Ivar(x),
                ..
            }) => Some(x.clone()),
            _ => None,
        })
        .collect()
}

/// Outcome of a sequential run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeqRun {
    pub value: Expr,
    pub state: SeqState,
    pub trace: Vec<StepInfo>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Stuck(#[from] Stuck),
    #[error("blocked on ivars {0:?} with no other task to supply them")]
    Blocked(Vec<Name>),
    #[error("gave up after {0} steps")]
    OutOfFuel(u64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeqOptions {
    pub audit: bool,
    pub keep_trace: bool,
    pub max_steps: u64,
}

impl Default for SeqOptions {
    fn default() -> Self {
        SeqOptions {
            audit: false,
            keep_trace: false,
            max_steps: u64::MAX,
        }
    }
}

/// Runs `main` to a value, never forking.
pub fn run_seq(p: &Program, env: &DataEnv, opts: SeqOptions) -> Result<SeqRun, RunError> {
    let cx = Ctx {
        program: p,
        env,
        audit: opts.audit,
    };
    let mut st = SeqState::for_main(p);
    let mut trace = Vec::new();
    loop {
        if st.counters.steps >= opts.max_steps {
            return Err(RunError::OutOfFuel(st.counters.steps));
        }
        match st.step(cx)? {
            Step::Stepped(info) => {
                if opts.keep_trace {
                    trace.push(info);
                }
            }
            Step::Value => break,
            Step::Blocked(xs) => return Err(RunError::Blocked(xs)),
        }
    }
    Ok(SeqRun {
        value: st.expr.clone(),
        state: st,
        trace,
    })
}
