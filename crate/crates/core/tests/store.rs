mod common;

use std::collections::BTreeMap;

use common::*;
use locpar_core::eval_par::{run_par, ParOptions, Policy};
use locpar_core::name::Stamp;
use locpar_core::store::*;
use locpar_core::syntax::{DataEnv, Expr, LocType, Ty};
use locpar_core::Name;
use proptest::prelude::*;

fn n(s: &str) -> Name {
    Name::new(s)
}

/// Recursive end computation, following indirections wherever they appear.
fn oracle_end(env: &DataEnv, s: &Store, ty: &Ty, r: &Name, i: u64) -> Option<(Name, u64)> {
    match s.cell(r, i)? {
        HeapValue::Indirection(r2, i2) => oracle_end(env, s, ty, r2, *i2),
        HeapValue::Scalar(_) => (*ty == Ty::Int).then(|| (r.clone(), i + 1)),
        HeapValue::Tag(k) => {
            let info = env.con(k)?;
            if *ty != Ty::Con(info.tycon.clone()) {
                return None;
            }
            let mut cur = (r.clone(), i + 1);
            for f in &info.fields {
                cur = oracle_end(env, s, f, &cur.0, cur.1)?;
            }
            Some(cur)
        }
    }
}

fn check_witnesses(
    name: &str,
    env: &DataEnv,
    s: &Store,
    m: &LocationMap,
    tys: &BTreeMap<Name, Ty>,
) -> usize {
    let mut checked = 0;
    for (l, ty) in tys {
        let Ok(cl) = deref_location(m, l) else {
            continue;
        };
        let Some(i) = cl.index() else { continue };
        let got = end_witness(env, ty, &cl, s)
            .ok()
            .map(|e| (e.region.clone(), e.index().unwrap()));
        assert_eq!(got, oracle_end(env, s, ty, &cl.region, i), "{name}: `{l}`");
        checked += 1;
    }
    checked
}

#[test]
fn end_witness_matches_a_recursive_oracle_on_sequential_stores() {
    for name in positives() {
        let tp = load(&name);
        let run = seq(&tp);
        let st = &run.state;
        let checked = check_witnesses(&name, &tp.env, &st.store, &st.locmap, &st.shadow.sigma);
        if let (LocType::At(ty, _), Expr::Loc(cl)) = (&tp.main_ty, &run.value) {
            let e = end_witness(&tp.env, ty, cl, &st.store).unwrap();
            assert_eq!(
                Some((e.region.clone(), e.index().unwrap())),
                oracle_end(&tp.env, &st.store, ty, &cl.region, cl.index().unwrap()),
                "{name}"
            );
            assert!(checked > 0, "{name}");
        }
    }
}

#[test]
fn end_witness_matches_the_oracle_across_indirections() {
    for name in ["buildtree", "copytree", "tri", "mirror"] {
        let tp = load(name);
        for pol in [Policy::AlwaysFork, Policy::Random(3), Policy::Random(11)] {
            let run = run_par(&tp, pol, ParOptions::default()).unwrap();
            let (LocType::At(ty, _), Expr::Loc(cl)) = (&tp.main_ty, &run.value) else {
                panic!("{name} returns a packed value")
            };
            let e = end_witness(&tp.env, ty, cl, &run.store).unwrap();
            assert_eq!(
                Some((e.region.clone(), e.index().unwrap())),
                oracle_end(&tp.env, &run.store, ty, &cl.region, cl.index().unwrap()),
                "{name}"
            );
        }
    }
}

fn exp_env() -> DataEnv {
    let p =
        locpar_core::syntax::parse_program("data Exp = Lit Int | Plus Exp Exp\nmain = 0").unwrap();
    DataEnv::new(&p.datadecls).unwrap()
}

fn lexical(rs: &[&str]) -> Store {
    let mut s = Store::new();
    for r in rs {
        s.create_region(n(r), RegionKind::Lexical, 1, Stamp::default())
            .unwrap();
    }
    s
}

#[test]
fn end_of_reports_what_is_wrong() {
    let env = exp_env();
    let exp = Ty::Con(n("Exp"));
    let mut s = lexical(&["r"]);
    s.write_cell(&n("r"), 0, HeapValue::Tag(n("Plus"))).unwrap();
    s.write_cell(&n("r"), 1, HeapValue::Tag(n("Lit"))).unwrap();
    s.write_cell(&n("r"), 2, HeapValue::Scalar(1)).unwrap();
    assert_eq!(
        end_of(&env, &exp, &n("r"), 0, &s),
        Err(StoreError::IncompleteValue {
            region: n("r"),
            index: 3
        })
    );
    assert_eq!(end_of(&env, &exp, &n("r"), 1, &s), Ok((n("r"), 3)));
    assert!(matches!(
        end_of(&env, &Ty::Int, &n("r"), 1, &s),
        Err(StoreError::NotScalar { .. })
    ));
    assert!(matches!(
        end_of(&env, &exp, &n("r"), 2, &s),
        Err(StoreError::TagMismatch { .. })
    ));
}

#[test]
fn cells_are_written_once() {
    let mut s = lexical(&["r"]);
    assert_eq!(s.write_cell(&n("r"), 0, HeapValue::Scalar(3)), Ok(true));
    assert_eq!(s.write_cell(&n("r"), 0, HeapValue::Scalar(3)), Ok(false));
    assert!(matches!(
        s.write_cell(&n("r"), 0, HeapValue::Scalar(4)),
        Err(StoreError::DoubleWrite { index: 0, .. })
    ));
    assert_eq!(
        s.write_cell(&n("q"), 0, HeapValue::Scalar(4)),
        Err(StoreError::UnknownRegion(n("q")))
    );
    assert_eq!(
        s.create_region(n("r"), RegionKind::Extra, 0, Stamp::default()),
        Err(StoreError::RegionExists(n("r")))
    );
}

#[test]
fn indirection_cycles_are_detected() {
    let mut s = lexical(&["a", "b"]);
    s.write_cell(&n("a"), 0, HeapValue::Indirection(n("b"), 0))
        .unwrap();
    s.write_cell(&n("b"), 0, HeapValue::Indirection(n("a"), 0))
        .unwrap();
    assert!(matches!(
        s.resolve(&n("a"), 0),
        Err(StoreError::IndirectionCycle { .. })
    ));
    assert!(matches!(
        end_of(&exp_env(), &Ty::Int, &n("a"), 0, &s),
        Err(StoreError::IndirectionCycle { .. })
    ));
}

#[test]
fn release_follows_indirections_and_refcounts() {
    let mut s = Store::new();
    s.create_region(n("r"), RegionKind::Lexical, 1, Stamp::default())
        .unwrap();
    s.create_region(n("q"), RegionKind::Lexical, 1, Stamp::default())
        .unwrap();
    s.create_region(n("e"), RegionKind::Extra, 0, Stamp::default())
        .unwrap();
    s.write_cell(&n("r"), 0, HeapValue::Indirection(n("e"), 0))
        .unwrap();
    s.write_cell(&n("q"), 0, HeapValue::Indirection(n("e"), 0))
        .unwrap();
    assert_eq!(s.refcount(&n("e")), Some(2));
    assert_eq!(release_region(&mut s, &n("r")), Ok(vec![n("r")]));
    assert_eq!(s.refcount(&n("e")), Some(1));
    assert_eq!(audit_refcounts(&s), Ok(()));
    assert_eq!(release_region(&mut s, &n("q")), Ok(vec![n("q"), n("e")]));
    assert_eq!(s.regions().count(), 0);
    assert_eq!(
        release_region(&mut s, &n("q")),
        Err(StoreError::UnknownRegion(n("q")))
    );
}

#[test]
fn audit_finds_dangling_indirections() {
    let mut s = lexical(&["r"]);
    s.create_region(n("e"), RegionKind::Extra, 0, Stamp::default())
        .unwrap();
    s.write_cell(&n("r"), 0, HeapValue::Indirection(n("e"), 0))
        .unwrap();
    release_region(&mut s, &n("e")).unwrap();
    assert_eq!(
        audit_refcounts(&s),
        Err(StoreError::DanglingIndirection {
            from: n("r"),
            to: n("e")
        })
    );
}

#[test]
fn heap_dump_format() {
    let tp = load("constfold");
    let run = seq(&tp);
    let short = dump_heap(&run.state.store, &tp.env, TagStyle::Short);
    assert_eq!(
        short,
        "r1: [P, L, 20, P, L, 10, L, 12]\nr2: [P, L, 20, L, 22]\n"
    );
    let full = dump_heap(&run.state.store, &tp.env, TagStyle::Full);
    assert!(full.starts_with("r1: [Plus, Lit, 20, Plus,"), "{full}");

    let mut s = lexical(&["r"]);
    s.create_region(n("e"), RegionKind::Extra, 0, Stamp::default())
        .unwrap();
    s.write_cell(&n("r"), 2, HeapValue::Indirection(n("e"), 0))
        .unwrap();
    assert_eq!(
        dump_heap(&s, &tp.env, TagStyle::Full),
        "e: []\nr: [_, _, →(e,0)]\n"
    );
}

#[test]
fn merge_conflicts() {
    let mut a = lexical(&["r"]);
    let mut b = lexical(&["r"]);
    a.write_cell(&n("r"), 0, HeapValue::Scalar(1)).unwrap();
    b.write_cell(&n("r"), 0, HeapValue::Scalar(2)).unwrap();
    assert!(matches!(
        merge_store(&a, &b),
        Err(StoreError::MergeConflict(_))
    ));

    let mut c = Store::new();
    c.create_region(n("r"), RegionKind::Extra, 1, Stamp::default())
        .unwrap();
    assert!(matches!(
        merge_store(&lexical(&["r"]), &c),
        Err(StoreError::MergeConflict(_))
    ));

    let m1: LocationMap = [(n("l"), ConcreteLoc::at(n("r"), 0))].into_iter().collect();
    let m2: LocationMap = [(n("l"), ConcreteLoc::at(n("r"), 1))].into_iter().collect();
    assert!(matches!(
        merge_locmap(&m1, &m2),
        Err(StoreError::MergeConflict(_))
    ));
}

#[test]
fn resolved_locations_win_over_ivars_in_either_order() {
    let pending = ConcreteLoc {
        region: n("r"),
        ext: ExtIndex::Ivar(n("x")),
        origin: None,
    };
    let m1: LocationMap = [(n("l"), pending)].into_iter().collect();
    let m2: LocationMap = [
        (n("l"), ConcreteLoc::at(n("r"), 4)),
        (n("k"), ConcreteLoc::at(n("r"), 0)),
    ]
    .into_iter()
    .collect();
    let ab = merge_locmap(&m1, &m2).unwrap();
    let ba = merge_locmap(&m2, &m1).unwrap();
    assert_eq!(ab, ba);
    assert_eq!(ab.get(&n("l")).and_then(ConcreteLoc::index), Some(4));
    assert_eq!(ab.len(), 2);
}

const REGIONS: [&str; 3] = ["r0", "r1", "r2"];

/// One consistent "truth" and stores that each know part of it.
fn stores() -> impl Strategy<Value = (Store, Store, Store)> {
    let cell = prop_oneof![
        any::<i64>().prop_map(HeapValue::Scalar),
        proptest::sample::select(&["A", "B"][..]).prop_map(|t| HeapValue::Tag(n(t))),
    ];
    let truth = proptest::collection::btree_map((0usize..3, 0u64..12), cell, 0..20);
    truth.prop_flat_map(|truth| {
        let cells: Vec<_> = truth.into_iter().collect();
        let k = cells.len();
        let pick = move || {
            (
                proptest::collection::vec(any::<bool>(), k),
                proptest::collection::vec(any::<bool>(), 3),
                proptest::collection::vec(1u32..4, 3),
            )
        };
        let cells2 = cells.clone();
        (pick(), pick(), pick()).prop_map(move |(a, b, c)| {
            let build = |(mask, present, rc): (Vec<bool>, Vec<bool>, Vec<u32>)| {
                let mut s = Store::new();
                for (k, r) in REGIONS.iter().enumerate() {
                    if present[k] {
                        s.create_region(n(r), RegionKind::Lexical, rc[k], Stamp::default())
                            .unwrap();
                    }
                }
                for (((r, i), v), keep) in cells2.iter().zip(mask) {
                    if keep && present[*r] {
                        s.write_cell(&n(REGIONS[*r]), *i, v.clone()).unwrap();
                    }
                }
                s
            };
            (build(a), build(b), build(c))
        })
    })
}

proptest! {
    #[test]
    fn merge_is_commutative_associative_and_idempotent((a, b, c) in stores()) {
        let ab = merge_store(&a, &b).unwrap();
        prop_assert_eq!(&ab, &merge_store(&b, &a).unwrap());
        let left = merge_store(&ab, &c).unwrap();
        let right = merge_store(&a, &merge_store(&b, &c).unwrap()).unwrap();
        prop_assert_eq!(&left, &right);
        prop_assert_eq!(&merge_store(&a, &a).unwrap(), &a);
        // Every cell of either side survives.
        for s in [&a, &b] {
            for (r, g) in s.regions() {
                for (i, v) in g.heap().iter() {
                    prop_assert_eq!(ab.cell(r, i), Some(v));
                }
            }
        }
    }

    #[test]
    fn dump_lists_every_cell(( a, _, _) in stores()) {
        let env = DataEnv::default();
        let text = dump_heap(&a, &env, TagStyle::Full);
        let listed = text.matches(", ").count() + text.lines().filter(|l| !l.ends_with("[]")).count();
        let slots: u64 = a.regions().map(|(_, g)| g.heap().max_index().map_or(0, |m| m + 1)).sum();
        prop_assert_eq!(listed as u64, slots);
        prop_assert_eq!(text.lines().count(), a.regions().count());
    }
}
