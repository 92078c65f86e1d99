mod common;

use common::*;
use locpar_core::eval_par::{
    apply, blocked_on, ctx, enabled_actions, enumerate_schedules, run_par, Action, ExploreOptions,
    ParOptions, Policy, Scheduler, TaskSet,
};
use locpar_core::eval_seq::{run_seq, Rule, RunError, SeqOptions};
use locpar_core::layout::{flatten_result, flatten_value, CanonicalValue};
use locpar_core::store::{ConcreteLoc, ExtIndex, HeapValue, RegionKind, Store};
use locpar_core::syntax::{implicit_par, parse_program, Ty};
use locpar_core::typecheck::{typecheck_program, TypedProgram};
use locpar_core::Name;

fn tag(v: &CanonicalValue) -> &str {
    match v {
        CanonicalValue::Node(k, _) => k.as_str(),
        CanonicalValue::Leaf(_) => "",
    }
}

fn kids(v: &CanonicalValue) -> &[CanonicalValue] {
    match v {
        CanonicalValue::Node(_, cs) => cs,
        CanonicalValue::Leaf(_) => &[],
    }
}

fn int(v: &CanonicalValue) -> i64 {
    match v {
        CanonicalValue::Leaf(n) => *n,
        CanonicalValue::Node(..) => panic!("not a scalar: {v}"),
    }
}

/// The value the program builds first, read back from the first region.
fn input(tp: &TypedProgram, ty: &str) -> CanonicalValue {
    let r = seq(tp);
    let (first, _) = r.state.store.regions_in_order()[0];
    flatten_value(
        &tp.env,
        &ConcreteLoc::at(first.clone(), 0),
        &Ty::Con(Name::new(ty)),
        &r.state.store,
    )
    .expect("input value")
}

fn fold(e: &CanonicalValue) -> CanonicalValue {
    match (tag(e), kids(e)) {
        ("Plus", [a, b]) => match (tag(a), tag(b)) {
            ("Lit", "Lit") => node("Lit", vec![leaf(int(&kids(a)[0]) + int(&kids(b)[0]))]),
            _ => node("Plus", vec![fold(a), fold(b)]),
        },
        _ => e.clone(),
    }
}

fn eval(e: &CanonicalValue) -> i64 {
    match (tag(e), kids(e)) {
        ("Lit", [n]) => int(n),
        ("Add", [a, b]) => eval(a) + eval(b),
        ("Mul", [a, b]) => eval(a) * eval(b),
        ("Neg", [a]) => -eval(a),
        _ => panic!("not an Exp: {e}"),
    }
}

fn tree_sum(t: &CanonicalValue) -> i64 {
    match kids(t) {
        [v] => int(v),
        [k, a, b] => int(k) + tree_sum(a) + tree_sum(b),
        _ => panic!("not a Tree: {t}"),
    }
}

fn depth(t: &CanonicalValue) -> i64 {
    match kids(t) {
        [a, b] => 1 + depth(a).max(depth(b)),
        _ => 0,
    }
}

fn mirror(t: &CanonicalValue) -> CanonicalValue {
    match kids(t) {
        [a, b] => node("Node", vec![mirror(b), mirror(a)]),
        _ => t.clone(),
    }
}

fn fib(n: i64) -> i64 {
    (0..n).fold((0, 1), |(a, b), _| (b, a + b)).0
}

/// What each corpus program should compute, from first principles.
fn oracle(name: &str, tp: &TypedProgram) -> CanonicalValue {
    match name {
        "arith" => leaf(eval(&input(tp, "Exp"))),
        "bool" => node("False", vec![]),
        "buildtree" => full_tree(4, 1),
        "buildtree_hvyleaf" => full_tree(3, fib(4)),
        "constfold" => fold(&input(tp, "Exp")),
        "copytree" => input(tp, "Tree"),
        "countnodes" => leaf(input(tp, "Ast").nodes() as i64),
        "depth" => leaf(depth(&input(tp, "Tree"))),
        "fib" => leaf(fib(7)),
        "interp" => leaf(eval(&input(tp, "Exp"))),
        "listsum" => leaf((1..=6).sum()),
        "mirror" => mirror(&input(tp, "Tree")),
        "sumtree" => leaf(tree_sum(&input(tp, "Tree"))),
        "tri" => node("Tri", vec![node("Tip", vec![leaf(7)]); 3]),
        other => panic!("no oracle for {other}"),
    }
}

#[test]
fn sequential_results_match_oracles() {
    let names = positives();
    assert!(names.len() >= 10, "corpus too small: {names:?}");
    for name in names {
        let tp = load(&name);
        assert_eq!(seq_value(&tp), oracle(&name, &tp), "{name}");
    }
}

#[test]
fn interp_example_is_42() {
    let tp = load("interp");
    assert_eq!(seq_value(&tp), leaf(42));
}

#[test]
fn constfold_on_a_leaf_writes_two_cells() {
    let src = "data Exp = Lit Int | Plus Exp Exp\n\
        fun copyLit : forall li@ri lo@ro . Exp@li@ri -> Exp@lo@ro\n\
        copyLit [li@ri lo@ro] e = case e of { Lit (i : Int@lx@ri) -> Lit lo@ro i\n\
        Plus (a : Exp@la@ri) (b : Exp@lb@ri) -> Lit lo@ro 0 }\n\
        main = letregion r1 in letregion r2 in letloc l1@r1 = start r1 in\n\
        let e : Exp@l1@r1 = Lit l1@r1 5 in letloc l2@r2 = start r2 in copyLit [l1@r1 l2@r2] e";
    let tp = typed(src);
    let r = seq(&tp);
    let out = r.state.store.heap(&Name::new("r2")).expect("r2");
    let cells: Vec<_> = out.iter().map(|(_, v)| v.clone()).collect();
    assert_eq!(
        cells,
        vec![HeapValue::Tag(Name::new("Lit")), HeapValue::Scalar(5)]
    );
    let extra = r
        .state
        .store
        .regions()
        .filter(|(_, g)| g.kind() == RegionKind::Extra)
        .count();
    assert_eq!(extra, 0);
}

#[test]
fn tag_offset_step_moves_one_cell() {
    let tp = load("constfold");
    let r = run_seq(
        &tp.program,
        &tp.env,
        SeqOptions {
            keep_trace: true,
            ..SeqOptions::default()
        },
    )
    .unwrap();
    let r2 = Name::new("r2");
    let step = r
        .trace
        .iter()
        .find(|s| s.rule == Rule::LetLocTag && s.binds.iter().any(|(_, cl)| cl.region == r2))
        .expect("a tag offset in r2");
    assert_eq!(step.binds[0].1.ext, ExtIndex::Concrete(1));
}

#[test]
fn sequential_allocation_is_linear_per_region() {
    for name in positives() {
        let tp = load(&name);
        let r = run_seq(
            &tp.program,
            &tp.env,
            SeqOptions {
                keep_trace: true,
                ..SeqOptions::default()
            },
        )
        .unwrap();
        let mut last: std::collections::BTreeMap<Name, u64> = Default::default();
        for s in &r.trace {
            if !matches!(
                s.rule,
                Rule::LetLocStart | Rule::LetLocTag | Rule::LetLocAfter
            ) {
                continue;
            }
            for (l, cl) in &s.binds {
                let Some(i) = cl.index() else { continue };
                if let Some(prev) = last.insert(cl.region.clone(), i) {
                    assert!(
                        i > prev || s.rule == Rule::LetLocStart,
                        "{name}: `{l}` at {cl} after index {prev}"
                    );
                }
            }
        }
    }
}

#[test]
fn newreg_binds_a_link_to_a_fresh_empty_region() {
    let tp = load("constfold");
    let run = run_par(
        &tp,
        Policy::AlwaysFork,
        ParOptions {
            keep_steps: true,
            ..ParOptions::default()
        },
    )
    .unwrap();
    let (_, step) = run
        .steps
        .iter()
        .find(|(_, s)| s.rule == Rule::LetLocAfterNewReg)
        .expect("a fresh region");
    assert_eq!(step.regions.len(), 1);
    let fresh = &step.regions[0];
    let (_, cl) = &step.binds[0];
    assert_eq!(cl.region, Name::new("r2"));
    assert_eq!(cl.ext, ExtIndex::Indirection(fresh.clone(), 0));
    assert_eq!(
        run.store.region(fresh).map(|g| g.kind()),
        Some(RegionKind::Extra)
    );
}

#[test]
fn every_policy_agrees_with_sequential_and_stays_well_typed() {
    for name in positives() {
        let tp = load(&name);
        let expected = seq_value(&tp);
        let opts = ParOptions {
            audit: true,
            check_wf: true,
            check_types: true,
            ..ParOptions::default()
        };
        let mut policies = vec![Policy::NeverFork, Policy::AlwaysFork];
        policies.extend((0..8).map(Policy::Random));
        for pol in policies {
            let run =
                run_par(&tp, pol.clone(), opts).unwrap_or_else(|e| panic!("{name} {pol:?}: {e}"));
            let v = flatten_result(&tp.env, &run.value, &tp.main_ty, &run.store).unwrap();
            assert_eq!(v, expected, "{name} {pol:?}");
            assert_eq!(run.metrics.ew_mismatches, 0, "{name} {pol:?}");
            let m = &run.metrics;
            assert_eq!(m.extra_regions, m.newreg_firings, "{name} {pol:?}");
            assert_eq!(m.extra_regions, m.forks_with_newreg, "{name} {pol:?}");
            assert!(m.forks_with_newreg <= m.forks, "{name} {pol:?}");
            if pol == Policy::NeverFork {
                assert_eq!((m.forks, m.extra_regions), (0, 0), "{name}");
            }
        }
    }
}

#[test]
fn trace_replay_reproduces_the_run() {
    let tp = load("sumtree");
    let first = run_par(&tp, Policy::Random(5), ParOptions::default()).unwrap();
    let again = run_par(
        &tp,
        Policy::Trace(first.decisions.clone()),
        ParOptions::default(),
    )
    .unwrap();
    assert_eq!(first.store, again.store);
    assert_eq!(first.metrics, again.metrics);
    assert_eq!(first.decisions, again.decisions);
}

#[test]
fn replaying_a_foreign_trace_is_rejected() {
    let a = load("sumtree");
    let b = load("constfold");
    let t = run_par(&a, Policy::AlwaysFork, ParOptions::default()).unwrap();
    assert!(run_par(&b, Policy::Trace(t.decisions), ParOptions::default()).is_err());
}

fn store_grows(before: &Store, after: &Store) -> bool {
    before
        .regions()
        .all(|(r, g)| g.heap().iter().all(|(i, v)| after.cell(r, i) == Some(v)))
}

#[test]
fn joins_only_add_information() {
    for name in ["constfold", "copytree", "tri", "sumtree"] {
        let tp = load(name);
        let cx = ctx(&tp, false);
        for seed in 0..10 {
            let mut ts = TaskSet::for_main(&tp);
            let mut sched = Scheduler::new(Policy::Random(seed));
            let mut n = 0;
            while !ts.all_complete() {
                let enabled = enabled_actions(&ts, true);
                let a = sched.choose(n, &enabled).unwrap();
                let before = match &a {
                    Action::Join { consumer, .. } => Some(ts.tasks[consumer].state.clone()),
                    _ => None,
                };
                apply(&mut ts, cx, &a).unwrap();
                if let (Some(b), Action::Join { consumer, ivar }) = (before, &a) {
                    let joined = Some(ivar);
                    let after = &ts.tasks[consumer].state;
                    assert!(store_grows(&b.store, &after.store), "{name} seed {seed}");
                    for (l, cl) in b.locmap.iter() {
                        let now = after.locmap.get(l).expect("binding kept");
                        match &cl.ext {
                            ExtIndex::Ivar(x) if Some(x) == joined => {
                                assert!(now.ivar().is_none(), "{name}: `{l}` still waits on `{x}`")
                            }
                            ExtIndex::Ivar(_) => {}
                            _ => assert_eq!(now, cl, "{name}: `{l}` changed"),
                        }
                    }
                    assert!(blocked_on(&after.expr).is_none() || after.expr != b.expr);
                }
                n += 1;
            }
        }
    }
}

#[test]
fn bounded_exploration_of_constfold_is_deterministic() {
    let tp = load("constfold");
    let expected = seq_value(&tp);
    let ex = enumerate_schedules(
        &tp,
        ExploreOptions {
            max_forks: 2,
            ..ExploreOptions::default()
        },
    )
    .unwrap();
    assert!(ex.violations.is_empty(), "{:?}", ex.violations);
    assert!(
        ex.terminals.len() >= 2,
        "forked and unforked endings differ in layout"
    );
    for t in &ex.terminals {
        assert_eq!(
            flatten_result(&tp.env, &t.value, &tp.main_ty, &t.store).unwrap(),
            expected
        );
    }
}

#[test]
fn a_program_without_spawns_has_one_schedule() {
    let tp = load("bool");
    let ex = enumerate_schedules(&tp, ExploreOptions::default()).unwrap();
    assert_eq!(ex.terminals.len(), 1);
    assert_eq!(ex.max_forks_seen, 0);
    let r = seq(&tp);
    assert_eq!(ex.states as u64, r.state.counters.steps + 1);
}

#[test]
fn small_buildtree_is_well_formed_in_every_state() {
    let src = with_main_arg(&source("buildtree"), "buildtree [l@r]", 2);
    let tp = typed(&src);
    let expected = seq_value(&tp);
    let ex = enumerate_schedules(
        &tp,
        ExploreOptions {
            max_forks: 3,
            max_states: 2_000_000,
            ..ExploreOptions::default()
        },
    )
    .unwrap();
    assert!(ex.violations.is_empty(), "{:?}", ex.violations.first());
    assert_eq!(ex.max_forks_seen, 3);
    for t in &ex.terminals {
        assert_eq!(
            flatten_result(&tp.env, &t.value, &tp.main_ty, &t.store).unwrap(),
            expected
        );
    }
}

#[test]
fn implicit_parallelism_keeps_results() {
    for name in positives() {
        let name = name.as_str();
        let mut p = parse_program(&source(name)).unwrap();
        for fd in &mut p.fundecls {
            fd.body = implicit_par(&fd.body);
        }
        p.main = implicit_par(&p.main);
        let tp = typecheck_program(&p).unwrap();
        let expected = seq_value(&load(name));
        for pol in [Policy::AlwaysFork, Policy::Random(1), Policy::Random(2)] {
            let run = run_par(
                &tp,
                pol,
                ParOptions {
                    check_wf: true,
                    check_types: true,
                    audit: true,
                    ..ParOptions::default()
                },
            )
            .unwrap();
            assert_eq!(run.metrics.ew_mismatches, 0, "{name}");
            let v = flatten_result(&tp.env, &run.value, &tp.main_ty, &run.store).unwrap();
            assert_eq!(v, expected, "{name}");
        }
    }
}

#[test]
fn unchecked_nonsense_gets_stuck_not_panics() {
    let p = parse_program("data T = A | B\nmain = case 3 of { A -> 1 B -> 2 }").unwrap();
    let env = locpar_core::syntax::DataEnv::new(&p.datadecls).unwrap();
    assert!(matches!(
        run_seq(&p, &env, SeqOptions::default()),
        Err(RunError::Stuck(_))
    ));
}

#[test]
fn fuel_runs_out() {
    let tp = load("fib");
    let r = run_seq(
        &tp.program,
        &tp.env,
        SeqOptions {
            max_steps: 10,
            ..SeqOptions::default()
        },
    );
    assert_eq!(r.unwrap_err(), RunError::OutOfFuel(10));
}
