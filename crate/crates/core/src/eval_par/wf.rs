//! Executable well-formedness of task sets.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{Task, TaskId, TaskSet};
use crate::eval_seq::Ctx;
use crate::name::Name;
use crate::store::{
    alloc_frontier, deref_location, end_witness, ConcreteLoc, ExtIndex, HeapValue, RegionKind,
    Store,
};
use crate::syntax::{free_names, LocExpr};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub task: Option<TaskId>,
    pub rule: &'static str,
    pub detail: String,
}

fn v(task: &TaskId, rule: &'static str, detail: String) -> Violation {
    Violation {
        task: Some(task.clone()),
        rule,
        detail,
    }
}

/// Every violated clause, empty when the task set is well formed.
pub fn check_wellformed(ts: &TaskSet, cx: Ctx<'_>) -> Vec<Violation> {
    let mut out = Vec::new();
    single_writer(ts, &mut out);
    for (id, t) in &ts.tasks {
        materialized(ts, cx, id, t, &mut out);
        constraints(ts, cx, id, t, &mut out);
        allocation(id, t, &mut out);
        for l in t.state.shadow.sigma.keys() {
            if t.state.shadow.nursery.contains(l) {
                out.push(v(
                    id,
                    "write-once",
                    format!("`{l}` is both written and in the nursery"),
                ));
            }
        }
    }
    exclusive_regions(ts, &mut out);
    out
}

/// Each ivar has exactly one producer, and every ivar mentioned is registered.
fn single_writer(ts: &TaskSet, out: &mut Vec<Violation>) {
    let mut producers: BTreeMap<&Name, Vec<&TaskId>> = BTreeMap::new();
    for (id, t) in &ts.tasks {
        if let Some(x) = t.target.ivar() {
            producers.entry(x).or_default().push(id);
        }
    }
    for (x, ps) in &producers {
        if ps.len() > 1 {
            out.push(Violation {
                task: None,
                rule: "single-writer",
                detail: format!("`{x}` has producers {ps:?}"),
            });
        }
        match ts.registry.get(*x) {
            Some(p) if p == ps[0] => {}
            _ => out.push(Violation {
                task: None,
                rule: "single-writer",
                detail: format!("`{x}` is not registered to its producer"),
            }),
        }
    }
    for (id, t) in &ts.tasks {
        let mut seen = free_names(&t.state.expr).ivars;
        seen.extend(
            t.state
                .locmap
                .iter()
                .filter_map(|(_, cl)| cl.ivar().cloned()),
        );
        for x in seen {
            if !producers.contains_key(&x) {
                out.push(v(id, "single-writer", format!("`{x}` has no producer")));
            }
        }
    }
}

fn has_producer(ts: &TaskSet, x: &Name) -> bool {
    ts.registry
        .get(x)
        .is_some_and(|p| ts.tasks.get(p).is_some_and(|t| t.target.ivar() == Some(x)))
}

/// A written location either holds a complete value or waits on exactly one
/// producer, never both or neither.
fn materialized(ts: &TaskSet, cx: Ctx<'_>, id: &TaskId, t: &Task, out: &mut Vec<Violation>) {
    let st = &t.state;
    for (l, ty) in &st.shadow.sigma {
        let Some(cl) = st.locmap.get(l) else { continue };
        let pending = matches!(&cl.ext, ExtIndex::Ivar(x) if has_producer(ts, x));
        let complete = deref_location(&st.locmap, l)
            .ok()
            .filter(|c| c.index().is_some())
            .is_some_and(|c| end_witness(cx.env, ty, &c, &st.store).is_ok());
        if pending == complete {
            out.push(v(
                id,
                "materialization",
                format!("`{l}` at {cl}: complete={complete} pending={pending}"),
            ));
        }
    }
}

fn physical(cl: &ConcreteLoc) -> Option<(Name, u64)> {
    match &cl.ext {
        ExtIndex::Concrete(i) => Some((cl.region.clone(), *i)),
        ExtIndex::Indirection(r, i) => Some((r.clone(), *i)),
        ExtIndex::Ivar(_) => None,
    }
}

/// Location constraints agree with the location map.
fn constraints(ts: &TaskSet, cx: Ctx<'_>, id: &TaskId, t: &Task, out: &mut Vec<Violation>) {
    let st = &t.state;
    for (l, c) in &st.shadow.constraints {
        let Some(cl) = st.locmap.get(l) else { continue };
        match c {
            LocExpr::Start(r) => {
                let at_start = match &cl.ext {
                    ExtIndex::Ivar(_) => true,
                    ext => *ext == ExtIndex::Concrete(0),
                };
                if !(cl.region == *r && at_start) {
                    out.push(v(
                        id,
                        "constraint-start",
                        format!("`{l}` at {cl}, expected start of {r}"),
                    ));
                }
            }
            LocExpr::Tag(prev, n) => {
                let Some(pc) = st.locmap.get(&prev.loc) else {
                    continue;
                };
                let Some((pr, pi)) = physical(pc) else {
                    continue;
                };
                let (rr, ri) = st.store.resolve(&pr, pi).unwrap_or((pr.clone(), pi));
                let ok = match physical(cl) {
                    Some(p) => [(pr, pi + u64::from(*n)), (rr, ri + u64::from(*n))].contains(&p),
                    // The producer holds the index; only the region is known here.
                    None => cl.region == pr || cl.region == rr,
                };
                if !ok {
                    out.push(v(
                        id,
                        "constraint-tag",
                        format!("`{l}` at {cl}, expected {} + {n}", prev.loc),
                    ));
                }
            }
            LocExpr::After(ty, prev) => {
                let Some(pc) = st.locmap.get(&prev.loc) else {
                    continue;
                };
                let ended = physical(pc).and_then(|(r, i)| {
                    end_witness(cx.env, ty, &ConcreteLoc::at(r, i), &st.store).ok()
                });
                // Exactly one of: the end is known and matches; the earlier
                // value is pending and `l` starts a fresh region; the earlier
                // value has landed and `l` is reached through a link.
                let extra = |r: &Name| {
                    st.store
                        .region(r)
                        .is_some_and(|g| g.kind() == RegionKind::Extra)
                };
                let prev_pending = matches!(&pc.ext, ExtIndex::Ivar(x) if has_producer(ts, x));
                let (direct, fresh_pending, linked) = match &cl.ext {
                    // Forked: only the region of `l` is known here.
                    ExtIndex::Ivar(_) => (
                        ended.as_ref().is_some_and(|e| e.region == cl.region),
                        prev_pending && extra(&cl.region),
                        ended.as_ref().is_some_and(|e| {
                            e.region != cl.region
                                && extra(&cl.region)
                                && match st.store.cell(&e.region, e.index().unwrap_or(0)) {
                                    None => true,
                                    Some(HeapValue::Indirection(r, 0)) => *r == cl.region,
                                    Some(_) => false,
                                }
                        }),
                    ),
                    _ => (
                        ended
                            .as_ref()
                            .is_some_and(|e| physical(cl) == physical(e) && !is_link(cl)),
                        prev_pending && fresh_region(&st.store, cl),
                        ended.as_ref().is_some_and(|e| {
                            fresh_region(&st.store, cl)
                                && match (st.store.cell(&e.region, e.index().unwrap_or(0)), &cl.ext)
                                {
                                    (None, _) => true,
                                    (
                                        Some(HeapValue::Indirection(r, i)),
                                        ExtIndex::Indirection(r2, i2),
                                    ) => r == r2 && i == i2,
                                    _ => false,
                                }
                        }),
                    ),
                };
                if u8::from(direct) + u8::from(fresh_pending) + u8::from(linked) != 1 {
                    out.push(v(
                        id,
                        "constraint-after",
                        format!(
                            "`{l}` at {cl}: direct={direct} fresh={fresh_pending} linked={linked}"
                        ),
                    ));
                }
            }
        }
    }
}

fn is_link(cl: &ConcreteLoc) -> bool {
    matches!(cl.ext, ExtIndex::Indirection(..))
}

fn fresh_region(s: &Store, cl: &ConcreteLoc) -> bool {
    match &cl.ext {
        ExtIndex::Indirection(r, 0) => s.region(r).is_some_and(|g| g.kind() == RegionKind::Extra),
        _ => false,
    }
}

/// Allocation discipline: nursery cells are unwritten, the allocation
/// pointer sits past the region's high-water mark, and unallocated regions
/// are empty.
fn allocation(id: &TaskId, t: &Task, out: &mut Vec<Violation>) {
    let st = &t.state;
    for l in &st.shadow.nursery {
        let Some((r, i)) = st.locmap.get(l).and_then(physical) else {
            continue;
        };
        if st.store.cell(&r, i).is_some() {
            out.push(v(
                id,
                "alloc-nursery-unwritten",
                format!("`{l}` in the nursery but {r}[{i}] is written"),
            ));
        }
    }
    for (r, a) in &st.shadow.allocs {
        match a {
            Some(l) if st.shadow.nursery.contains(l) => {
                let Some((pr, i)) = st.locmap.get(l).and_then(physical) else {
                    continue;
                };
                if i64::try_from(i).map_or(true, |i| i <= alloc_frontier(&pr, &st.store)) {
                    out.push(v(
                        id,
                        "alloc-frontier",
                        format!("`{l}` at {pr}[{i}] is not past the written cells"),
                    ));
                }
            }
            Some(l) if st.shadow.sigma.contains_key(l) => {
                if let Some((pr, i)) = st.locmap.get(l).and_then(physical) {
                    if st.store.cell(&pr, i).is_none() {
                        out.push(v(
                            id,
                            "alloc-written",
                            format!("`{l}` is written but {pr}[{i}] is empty"),
                        ));
                    }
                }
            }
            Some(_) => {}
            None => {
                if st.store.heap(r).is_some_and(|h| !h.is_empty()) {
                    out.push(v(
                        id,
                        "alloc-empty",
                        format!("nothing allocated in {r} yet it holds cells"),
                    ));
                }
            }
        }
    }
}

/// Regions a running task is about to write: where its allocation pointers
/// point while still unwritten.
fn in_flight(t: &Task) -> Vec<Name> {
    let st = &t.state;
    let mut rs: Vec<Name> = st
        .shadow
        .allocs
        .values()
        .flatten()
        .filter(|l| st.shadow.nursery.contains(*l))
        .filter_map(|l| st.locmap.get(l).and_then(physical))
        .map(|(r, _)| r)
        .collect();
    rs.sort();
    rs.dedup();
    rs
}

fn exclusive_regions(ts: &TaskSet, out: &mut Vec<Violation>) {
    let mut owner: BTreeMap<Name, &TaskId> = BTreeMap::new();
    for (id, t) in &ts.tasks {
        if t.state.is_complete() {
            continue;
        }
        for r in in_flight(t) {
            if let Some(other) = owner.insert(r.clone(), id) {
                out.push(v(
                    id,
                    "region-exclusive",
                    format!("{r} is also being filled by task {other}"),
                ));
            }
        }
    }
}
