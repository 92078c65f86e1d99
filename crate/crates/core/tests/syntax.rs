mod common;

use common::*;
use locpar_core::store::{ConcreteLoc, ExtIndex};
use locpar_core::syntax::*;
use locpar_core::typecheck::typecheck_program;
use locpar_core::{Fresh, Name};
use proptest::prelude::*;

const VARS: &[&str] = &["x", "y", "z", "w"];
const LOCS: &[&str] = &["l", "la", "lb"];
const REGIONS: &[&str] = &["r", "r2"];
const FUNS: &[&str] = &["f", "go"];
const CONS: &[&str] = &["A", "Bin", "K"];

fn pick(pool: &'static [&'static str]) -> impl Strategy<Value = Name> {
    proptest::sample::select(pool).prop_map(Name::new)
}

fn locreg() -> impl Strategy<Value = LocReg> {
    (pick(LOCS), pick(REGIONS)).prop_map(|(loc, region)| LocReg { loc, region })
}

fn ty() -> impl Strategy<Value = Ty> {
    prop_oneof![Just(Ty::Int), pick(CONS).prop_map(Ty::Con)]
}

fn loctype() -> impl Strategy<Value = LocType> {
    prop_oneof![
        Just(LocType::Int),
        (ty(), locreg()).prop_map(|(t, lr)| LocType::At(t, lr))
    ]
}

fn concrete() -> impl Strategy<Value = ConcreteLoc> {
    let ext = prop_oneof![
        any::<u64>().prop_map(ExtIndex::Concrete),
        pick(VARS).prop_map(ExtIndex::Ivar),
        (pick(REGIONS), 0u64..100).prop_map(|(r, i)| ExtIndex::Indirection(r, i)),
    ];
    (pick(REGIONS), ext, proptest::option::of(pick(LOCS))).prop_map(|(region, ext, origin)| {
        ConcreteLoc {
            region,
            ext,
            origin,
        }
    })
}

fn value() -> impl Strategy<Value = Expr> {
    prop_oneof![
        pick(VARS).prop_map(Expr::Var),
        any::<i64>().prop_map(Expr::Int),
        (-5i64..5).prop_map(Expr::Int),
        pick(VARS).prop_map(Expr::IvarInt),
        concrete().prop_map(Expr::Loc),
    ]
}

fn op() -> impl Strategy<Value = Op> {
    proptest::sample::select(&[Op::Add, Op::Sub, Op::Mul, Op::Le, Op::Eq][..])
}

fn locexp() -> impl Strategy<Value = LocExpr> {
    prop_oneof![
        pick(REGIONS).prop_map(LocExpr::Start),
        (locreg(), 1u32..4).prop_map(|(lr, n)| LocExpr::Tag(lr, n)),
        (ty(), locreg()).prop_map(|(t, lr)| LocExpr::After(t, lr)),
    ]
}

fn expr() -> impl Strategy<Value = Expr> {
    value().prop_recursive(5, 48, 4, |inner| {
        let values = || proptest::collection::vec(value(), 0..3);
        let bind = (pick(VARS), loctype()).prop_map(|(var, ty)| PatBind { var, ty });
        let branch = (
            pick(CONS),
            proptest::collection::vec(bind, 0..3),
            inner.clone(),
        )
            .prop_map(|(tag, binds, body)| Branch { tag, binds, body });
        prop_oneof![
            (op(), inner.clone(), inner.clone()).prop_map(|(o, a, b)| Expr::PrimOp(
                o,
                Box::new(a),
                Box::new(b)
            )),
            (inner.clone(), inner.clone(), inner.clone()).prop_map(|(c, t, f)| Expr::If(
                Box::new(c),
                Box::new(t),
                Box::new(f)
            )),
            (
                pick(FUNS),
                proptest::collection::vec(locreg(), 0..3),
                values()
            )
                .prop_map(|(f, ls, args)| Expr::App(f, ls, args)),
            (pick(CONS), locreg(), values()).prop_map(|(k, lr, args)| Expr::DataCon(k, lr, args)),
            (
                pick(VARS),
                loctype(),
                inner.clone(),
                any::<bool>(),
                inner.clone()
            )
                .prop_map(|(var, ty, bound, spawn, body)| Expr::Let {
                    var,
                    ty,
                    bound: Box::new(bound),
                    spawn,
                    body: Box::new(body),
                }),
            (locreg(), locexp(), inner.clone()).prop_map(|(lr, le, body)| Expr::LetLoc(
                lr,
                le,
                Box::new(body)
            )),
            (pick(REGIONS), inner.clone()).prop_map(|(r, body)| Expr::LetRegion(r, Box::new(body))),
            (value(), proptest::collection::vec(branch, 1..3))
                .prop_map(|(s, bs)| Expr::Case(Box::new(s), bs)),
        ]
    })
}

/// Nameless form: every bound name becomes `#k`, numbered in binding order.
struct Nameless {
    vars: Vec<(Name, Name)>,
    locs: Vec<(Name, Name)>,
    regions: Vec<(Name, Name)>,
    next: usize,
}

impl Nameless {
    fn new() -> Self {
        Nameless {
            vars: Vec::new(),
            locs: Vec::new(),
            regions: Vec::new(),
            next: 0,
        }
    }

    fn label(&mut self) -> Name {
        self.next += 1;
        Name::new(&format!("#{}", self.next))
    }

    fn look(scope: &[(Name, Name)], n: &Name) -> Name {
        scope
            .iter()
            .rev()
            .find(|(k, _)| k == n)
            .map_or_else(|| n.clone(), |(_, v)| v.clone())
    }

    fn locreg(&self, lr: &LocReg) -> LocReg {
        LocReg {
            loc: Self::look(&self.locs, &lr.loc),
            region: Self::look(&self.regions, &lr.region),
        }
    }

    fn loctype(&self, t: &LocType) -> LocType {
        match t {
            LocType::Int => LocType::Int,
            LocType::At(t, lr) => LocType::At(t.clone(), self.locreg(lr)),
        }
    }

    fn expr(&mut self, e: &Expr) -> Expr {
        match e {
            Expr::Var(x) => Expr::Var(Self::look(&self.vars, x)),
            Expr::Int(_) | Expr::IvarInt(_) => e.clone(),
            Expr::Loc(cl) => Expr::Loc(ConcreteLoc {
                region: Self::look(&self.regions, &cl.region),
                ext: match &cl.ext {
                    ExtIndex::Indirection(r, i) => {
                        ExtIndex::Indirection(Self::look(&self.regions, r), *i)
                    }
                    other => other.clone(),
                },
                origin: cl.origin.as_ref().map(|l| Self::look(&self.locs, l)),
            }),
            Expr::PrimOp(o, a, b) => {
                Expr::PrimOp(*o, Box::new(self.expr(a)), Box::new(self.expr(b)))
            }
            Expr::If(c, t, f) => Expr::If(
                Box::new(self.expr(c)),
                Box::new(self.expr(t)),
                Box::new(self.expr(f)),
            ),
            Expr::App(f, ls, args) => Expr::App(
                f.clone(),
                ls.iter().map(|lr| self.locreg(lr)).collect(),
                args.iter().map(|a| self.expr(a)).collect(),
            ),
            Expr::DataCon(k, lr, args) => Expr::DataCon(
                k.clone(),
                self.locreg(lr),
                args.iter().map(|a| self.expr(a)).collect(),
            ),
            Expr::Let {
                var,
                ty,
                bound,
                spawn,
                body,
            } => {
                let ty = self.loctype(ty);
                let bound = self.expr(bound);
                let v = self.label();
                self.vars.push((var.clone(), v.clone()));
                let body = self.expr(body);
                self.vars.pop();
                Expr::Let {
                    var: v,
                    ty,
                    bound: Box::new(bound),
                    spawn: *spawn,
                    body: Box::new(body),
                }
            }
            Expr::LetLoc(lr, le, body) => {
                let le = match le {
                    LocExpr::Start(r) => LocExpr::Start(Self::look(&self.regions, r)),
                    LocExpr::Tag(p, n) => LocExpr::Tag(self.locreg(p), *n),
                    LocExpr::After(t, p) => LocExpr::After(t.clone(), self.locreg(p)),
                };
                let region = Self::look(&self.regions, &lr.region);
                let l = self.label();
                self.locs.push((lr.loc.clone(), l.clone()));
                let body = self.expr(body);
                self.locs.pop();
                Expr::LetLoc(LocReg { loc: l, region }, le, Box::new(body))
            }
            Expr::LetRegion(r, body) => {
                let l = self.label();
                self.regions.push((r.clone(), l.clone()));
                let body = self.expr(body);
                self.regions.pop();
                Expr::LetRegion(l, Box::new(body))
            }
            Expr::Case(s, branches) => {
                let s = self.expr(s);
                let bs = branches
                    .iter()
                    .map(|b| {
                        let (nv, nl) = (self.vars.len(), self.locs.len());
                        let mut binds = Vec::new();
                        for pb in &b.binds {
                            let ty = match &pb.ty {
                                LocType::Int => LocType::Int,
                                LocType::At(t, lr) => {
                                    let region = Self::look(&self.regions, &lr.region);
                                    let l = self.label();
                                    self.locs.push((lr.loc.clone(), l.clone()));
                                    LocType::At(t.clone(), LocReg { loc: l, region })
                                }
                            };
                            let v = self.label();
                            self.vars.push((pb.var.clone(), v.clone()));
                            binds.push(PatBind { var: v, ty });
                        }
                        let body = self.expr(&b.body);
                        self.vars.truncate(nv);
                        self.locs.truncate(nl);
                        Branch {
                            tag: b.tag.clone(),
                            binds,
                            body,
                        }
                    })
                    .collect();
                Expr::Case(Box::new(s), bs)
            }
        }
    }

    fn fundecl(mut self, fd: &FunDecl) -> (Vec<LocReg>, Vec<LocType>, LocType, Expr) {
        let mut locs = Vec::new();
        for lr in &fd.loc_params {
            let l = self.label();
            let r = self.label();
            self.locs.push((lr.loc.clone(), l.clone()));
            self.regions.push((lr.region.clone(), r.clone()));
            locs.push(LocReg { loc: l, region: r });
        }
        let tys = fd.params.iter().map(|p| self.loctype(&p.ty)).collect();
        for p in &fd.params {
            let v = self.label();
            self.vars.push((p.var.clone(), v));
        }
        let ret = self.loctype(&fd.ret);
        let body = self.expr(&fd.body);
        (locs, tys, ret, body)
    }
}

fn alpha_eq(a: &Expr, b: &Expr) -> bool {
    Nameless::new().expr(a) == Nameless::new().expr(b)
}

fn binders(e: &Expr, out: &mut Vec<Name>) {
    match e {
        Expr::PrimOp(_, a, b) => {
            binders(a, out);
            binders(b, out);
        }
        Expr::If(c, t, f) => {
            binders(c, out);
            binders(t, out);
            binders(f, out);
        }
        Expr::Let {
            var, bound, body, ..
        } => {
            out.push(var.clone());
            binders(bound, out);
            binders(body, out);
        }
        Expr::LetLoc(lr, _, body) => {
            out.push(lr.loc.clone());
            binders(body, out);
        }
        Expr::LetRegion(r, body) => {
            out.push(r.clone());
            binders(body, out);
        }
        Expr::Case(_, bs) => {
            for b in bs {
                for pb in &b.binds {
                    out.push(pb.var.clone());
                    if let Some(lr) = pb.ty.at() {
                        out.push(lr.loc.clone());
                    }
                }
                binders(&b.body, out);
            }
        }
        _ => {}
    }
}

fn distinct(names: &[Name]) -> bool {
    let mut v = names.to_vec();
    v.sort();
    v.dedup();
    v.len() == names.len()
}

/// Renames every variable occurrence; only sound when none is bound.
fn rename_vars(e: &Expr, f: &impl Fn(&Name) -> Name) -> Expr {
    let go = |x: &Expr| Box::new(rename_vars(x, f));
    match e {
        Expr::Var(x) => Expr::Var(f(x)),
        Expr::PrimOp(o, a, b) => Expr::PrimOp(*o, go(a), go(b)),
        Expr::If(c, t, e2) => Expr::If(go(c), go(t), go(e2)),
        Expr::App(g, ls, args) => Expr::App(
            g.clone(),
            ls.clone(),
            args.iter().map(|a| rename_vars(a, f)).collect(),
        ),
        Expr::DataCon(k, lr, args) => Expr::DataCon(
            k.clone(),
            lr.clone(),
            args.iter().map(|a| rename_vars(a, f)).collect(),
        ),
        Expr::Let {
            var,
            ty,
            bound,
            spawn,
            body,
        } => Expr::Let {
            var: var.clone(),
            ty: ty.clone(),
            bound: go(bound),
            spawn: *spawn,
            body: go(body),
        },
        Expr::LetLoc(lr, le, body) => Expr::LetLoc(lr.clone(), le.clone(), go(body)),
        Expr::LetRegion(r, body) => Expr::LetRegion(r.clone(), go(body)),
        Expr::Case(s, bs) => Expr::Case(
            go(s),
            bs.iter()
                .map(|b| Branch {
                    tag: b.tag.clone(),
                    binds: b.binds.clone(),
                    body: rename_vars(&b.body, f),
                })
                .collect(),
        ),
        _ => e.clone(),
    }
}

fn corpus_names() -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(corpus_dir())
        .unwrap()
        .filter_map(|e| {
            let p = e.ok()?.path();
            Some(p.file_stem()?.to_str()?.to_owned())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn corpus_round_trips_through_the_printer() {
    for name in corpus_names() {
        let Ok(p) = parse_program(&source(&name)) else {
            assert_eq!(name, "bad_unknown_con");
            continue;
        };
        let text = print_program(&p);
        let again = parse_program(&text).unwrap_or_else(|e| panic!("{name}: {e}\n{text}"));
        assert_eq!(again, p, "{name}");
        assert_eq!(print_program(&again), text, "{name}");
    }
}

#[test]
fn unknown_constructor_is_reported_where_it_is_used() {
    let err = parse_program(&source("bad_unknown_con")).unwrap_err();
    assert_eq!((err.span.line, err.span.col), (8, 3));
    assert!(err.message.contains("unknown constructor"), "{err}");
}

#[test]
fn parse_errors_carry_positions() {
    let err = parse_program("main =\n  let x : Int = in x").unwrap_err();
    assert_eq!(err.span.line, 2);
    let err = parse_program("data T = A\n").unwrap_err();
    assert!(err.message.contains("main"), "{err}");
    let err = parse_expr("letloc l@r = l@r + 0 in 1").unwrap_err();
    assert!(err.message.contains("positive"), "{err}");
}

#[test]
fn negative_literals_need_parentheses_in_argument_position() {
    assert_eq!(
        parse_expr("K l@r (-3) 4").unwrap(),
        Expr::DataCon(
            Name::new("K"),
            LocReg::new("l", "r"),
            vec![Expr::Int(-3), Expr::Int(4)]
        )
    );
    assert_eq!(
        parse_expr("(-9223372036854775808)").unwrap(),
        Expr::Int(i64::MIN)
    );
    assert!(parse_expr("9223372036854775808").is_err());
}

#[test]
fn arithmetic_is_left_associative_with_usual_precedence() {
    let e = parse_expr("a - b - c * d <= e").unwrap();
    let v = |s: &str| Box::new(Expr::Var(Name::new(s)));
    let lhs = Expr::PrimOp(
        Op::Sub,
        Box::new(Expr::PrimOp(Op::Sub, v("a"), v("b"))),
        Box::new(Expr::PrimOp(Op::Mul, v("c"), v("d"))),
    );
    assert_eq!(e, Expr::PrimOp(Op::Le, Box::new(lhs), v("e")));
}

#[test]
fn freshened_functions_are_alpha_equivalent_with_new_binders() {
    for name in positives() {
        let p = load(&name).program;
        let mut fresh = Fresh::root();
        for fd in &p.fundecls {
            let g = freshen(fd, &mut fresh);
            assert_eq!(
                Nameless::new().fundecl(fd),
                Nameless::new().fundecl(&g),
                "{name}"
            );
            let mut old = Vec::new();
            binders(&fd.body, &mut old);
            let mut new = Vec::new();
            binders(&g.body, &mut new);
            assert!(distinct(&new), "{name}: {new:?}");
            assert!(new.iter().all(|n| !old.contains(n)), "{name}");
            assert!(g
                .params
                .iter()
                .all(|q| !fd.params.iter().any(|p| p.var == q.var)));
        }
    }
}

#[test]
fn freshening_keeps_the_typing_verdict() {
    for name in corpus_names() {
        let Ok(p) = parse_program(&source(&name)) else {
            continue;
        };
        let before = typecheck_program(&p)
            .map(|_| ())
            .map_err(|e| e.error.code());
        let mut q = p.clone();
        let mut fresh = Fresh::root();
        for fd in &mut q.fundecls {
            *fd = freshen(fd, &mut fresh);
        }
        q.main = freshen_expr(&q.main, &mut fresh);
        let after = typecheck_program(&q)
            .map(|_| ())
            .map_err(|e| e.error.code());
        assert_eq!(before, after, "{name}");
        assert_eq!(before.is_ok(), !name.starts_with("bad_"), "{name}");
    }
}

#[test]
fn swap_substitution_is_simultaneous() {
    let e = parse_expr("let z : Int = x + y in K l@r x y z").unwrap();
    let mut s = Subst::default();
    s.vars.insert(Name::new("x"), Expr::Var(Name::new("y")));
    s.vars.insert(Name::new("y"), Expr::Var(Name::new("x")));
    assert_eq!(
        substitute(&e, &s),
        parse_expr("let z : Int = y + x in K l@r y x z").unwrap()
    );
}

#[test]
fn substitution_stops_at_a_shadowing_binder() {
    let e = parse_expr("let x : Int = x + 1 in x").unwrap();
    let mut s = Subst::default();
    s.vars.insert(Name::new("x"), Expr::Int(5));
    assert_eq!(
        substitute(&e, &s),
        parse_expr("let x : Int = 5 + 1 in x").unwrap()
    );
    let e = parse_expr("letregion r in letloc l@r = start r in A l@r").unwrap();
    let mut s = Subst::default();
    s.regions.insert(Name::new("r"), Name::new("q"));
    assert_eq!(substitute(&e, &s), e);
}

#[test]
fn ivar_fills_replace_placeholders() {
    let e = parse_expr("K l@r ?x <r,?p>^l").unwrap();
    let mut s = Subst::default();
    s.ivars.insert(Name::new("x"), IvarFill::Scalar(-4));
    s.ivars.insert(Name::new("p"), IvarFill::Index(9));
    assert_eq!(
        substitute(&e, &s),
        parse_expr("K l@r (-4) <r,9>^l").unwrap()
    );
}

#[test]
fn free_names_by_namespace() {
    let e = parse_expr("letloc l@r = start r in let y : Int = x + ?v in K l@r y k").unwrap();
    let f = free_names(&e);
    let names = |s: &std::collections::BTreeSet<Name>| {
        s.iter().map(|n| n.as_str().to_owned()).collect::<Vec<_>>()
    };
    assert_eq!(names(&f.vars), ["k", "x"]);
    assert!(f.locs.is_empty());
    assert_eq!(names(&f.regions), ["r"]);
    assert_eq!(names(&f.ivars), ["v"]);
}

fn count_lets(e: &Expr, spawned: &mut usize, plain: &mut usize) {
    fn walk(e: &Expr, s: &mut usize, p: &mut usize) {
        match e {
            Expr::Let {
                spawn, bound, body, ..
            } => {
                if *spawn {
                    *s += 1
                } else {
                    *p += 1
                }
                walk(bound, s, p);
                walk(body, s, p);
            }
            Expr::LetLoc(_, _, b) | Expr::LetRegion(_, b) => walk(b, s, p),
            Expr::If(c, t, f) => {
                walk(c, s, p);
                walk(t, s, p);
                walk(f, s, p);
            }
            Expr::PrimOp(_, a, b) => {
                walk(a, s, p);
                walk(b, s, p);
            }
            Expr::Case(_, bs) => bs.iter().for_each(|b| walk(&b.body, s, p)),
            _ => {}
        }
    }
    walk(e, spawned, plain);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn printing_then_parsing_is_the_identity(e in expr()) {
        let text = print_expr(&e);
        let back = parse_expr(&text);
        prop_assert_eq!(back.as_ref().ok(), Some(&e), "{}", text);
    }

    #[test]
    fn freshen_expr_is_alpha_equivalent_and_renames_every_binder(e in expr()) {
        let g = freshen_expr(&e, &mut Fresh::scoped(&[3, 1]));
        prop_assert!(alpha_eq(&e, &g));
        prop_assert_eq!(free_names(&e), free_names(&g));
        let mut bs = Vec::new();
        binders(&g, &mut bs);
        prop_assert!(distinct(&bs));
        prop_assert!(bs.iter().all(|b| b.as_str().contains("'3_1'")));
    }

    #[test]
    fn uniquify_keeps_meaning_and_first_names(e in expr()) {
        let g = uniquify_binders(&e, &mut Fresh::root());
        prop_assert!(alpha_eq(&e, &g));
        let mut bs = Vec::new();
        binders(&g, &mut bs);
        prop_assert!(distinct(&bs));
        let mut orig = Vec::new();
        binders(&e, &mut orig);
        if distinct(&orig) {
            prop_assert_eq!(g, e);
        }
    }

    #[test]
    fn alpha_equivalence_sees_through_consistent_renaming(e in expr()) {
        let a = freshen_expr(&e, &mut Fresh::root());
        let b = freshen_expr(&a, &mut Fresh::scoped(&[7]));
        prop_assert!(alpha_eq(&a, &b));
    }

    #[test]
    fn swapping_two_free_variables_matches_a_plain_rename(e in expr()) {
        let mut bs = Vec::new();
        binders(&e, &mut bs);
        let (x, y) = (Name::new("x"), Name::new("y"));
        prop_assume!(!bs.contains(&x) && !bs.contains(&y));
        let mut s = Subst::default();
        s.vars.insert(x.clone(), Expr::Var(y.clone()));
        s.vars.insert(y.clone(), Expr::Var(x.clone()));
        let swapped = substitute(&e, &s);
        let expected = rename_vars(&e, &|n: &Name| {
            if *n == x { y.clone() } else if *n == y { x.clone() } else { n.clone() }
        });
        prop_assert_eq!(&swapped, &expected);
        prop_assert_eq!(substitute(&swapped, &s), e);
    }

    #[test]
    fn implicit_par_spawns_every_let_and_nothing_else(e in expr()) {
        let g = implicit_par(&e);
        let (mut s0, mut p0, mut s1, mut p1) = (0, 0, 0, 0);
        count_lets(&e, &mut s0, &mut p0);
        count_lets(&g, &mut s1, &mut p1);
        prop_assert_eq!(p1, 0);
        prop_assert_eq!(s1, s0 + p0);
        prop_assert_eq!(implicit_par(&g), g.clone());
        prop_assert!(alpha_eq(&without_spawns(&e), &without_spawns(&g)));
    }
}

/// `e` with every spawn flag cleared.
fn without_spawns(e: &Expr) -> Expr {
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
            bound: Box::new(without_spawns(bound)),
            spawn: false,
            body: Box::new(without_spawns(body)),
        },
        Expr::LetLoc(lr, le, b) => {
            Expr::LetLoc(lr.clone(), le.clone(), Box::new(without_spawns(b)))
        }
        Expr::LetRegion(r, b) => Expr::LetRegion(r.clone(), Box::new(without_spawns(b))),
        Expr::If(c, t, f) => Expr::If(
            Box::new(without_spawns(c)),
            Box::new(without_spawns(t)),
            Box::new(without_spawns(f)),
        ),
        Expr::PrimOp(o, a, b) => {
            Expr::PrimOp(*o, Box::new(without_spawns(a)), Box::new(without_spawns(b)))
        }
        Expr::Case(s, bs) => Expr::Case(
            s.clone(),
            bs.iter()
                .map(|b| Branch {
                    tag: b.tag.clone(),
                    binds: b.binds.clone(),
                    body: without_spawns(&b.body),
                })
                .collect(),
        ),
        _ => e.clone(),
    }
}
