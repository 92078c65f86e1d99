//! Exhaustive enumeration of schedules with state deduplication.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::hash::{BuildHasher, Hash};

use rustc_hash::FxBuildHasher;

use super::{apply, check_wellformed, ctx, enabled_actions, Action, ParError, TaskSet, Violation};
use crate::store::Store;
use crate::syntax::Expr;
use crate::typecheck::TypedProgram;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExploreOptions {
    /// Forks allowed along any one schedule.
    pub max_forks: u32,
    /// Distinct states visited before giving up.
    pub max_states: usize,
    pub check_wf: bool,
    pub check_types: bool,
}

impl Default for ExploreOptions {
    fn default() -> Self {
        ExploreOptions {
            max_forks: 4,
            max_states: 200_000,
            check_wf: true,
            check_types: false,
        }
    }
}

/// A final state and one schedule reaching it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Terminal {
    pub value: Expr,
    pub store: Store,
    pub schedule: Vec<Action>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Exploration {
    pub states: usize,
    /// Distinct final states.
    pub terminals: Vec<Terminal>,
    /// Violations found in any visited state, with the schedule reaching it.
    pub violations: Vec<(Vec<Action>, Violation)>,
    pub max_forks_seen: u32,
    /// Cached end-witnesses audited against a fresh scan, over every
    /// terminal state reached.
    pub ew_checks: u64,
    pub ew_mismatches: u64,
}

fn key(ts: &TaskSet, forks: u32) -> u64 {
    let mut h = FxBuildHasher.build_hasher();
    ts.hash(&mut h);
    forks.hash(&mut h);
    core::hash::Hasher::finish(&h)
}

/// Depth-first search over every interleaving of steps, forks and joins,
/// with at most `max_forks` forks per schedule.
pub fn enumerate_schedules(
    tp: &TypedProgram,
    opts: ExploreOptions,
) -> Result<Exploration, ParError> {
    let cx = ctx(tp, true);
    let mut out = Exploration::default();
    let mut seen: BTreeSet<u64> = BTreeSet::new();
    let mut finals: BTreeSet<u64> = BTreeSet::new();
    let start = TaskSet::for_main(tp);
    seen.insert(key(&start, 0));
    let mut stack = alloc::vec![(start, 0u32, Vec::<Action>::new())];
    while let Some((ts, forks, sched)) = stack.pop() {
        out.states += 1;
        if out.states > opts.max_states {
            return Err(ParError::OutOfFuel(out.states as u64));
        }
        out.max_forks_seen = out.max_forks_seen.max(forks);
        if opts.check_wf {
            for v in check_wellformed(&ts, cx) {
                out.violations.push((sched.clone(), v));
            }
        }
        if opts.check_types {
            ts.typecheck(tp)
                .map_err(|(task, error)| ParError::Preservation {
                    step: sched.len() as u64,
                    task,
                    error,
                })?;
        }
        if ts.all_complete() {
            let mut counters = ts.retired.clone();
            for t in ts.tasks.values() {
                counters.absorb(&t.state.counters);
            }
            out.ew_checks += counters.ew_checks;
            out.ew_mismatches += counters.ew_mismatches;
            let store = ts.merged_store()?;
            let mut h = FxBuildHasher.build_hasher();
            (&ts.root().state.expr, &store).hash(&mut h);
            if finals.insert(core::hash::Hasher::finish(&h)) {
                out.terminals.push(Terminal {
                    value: ts.root().state.expr.clone(),
                    store,
                    schedule: sched,
                });
            }
            continue;
        }
        let enabled = enabled_actions(&ts, forks < opts.max_forks);
        if enabled.is_empty() {
            let stuck = ts
                .tasks
                .iter()
                .filter(|(_, t)| !t.state.is_complete())
                .map(|(id, _)| id.clone())
                .collect();
            return Err(ParError::NoEnabledTransition(stuck));
        }
        for a in enabled.into_iter().rev() {
            let mut next = ts.clone();
            apply(&mut next, cx, &a)?;
            let f = forks + u32::from(matches!(a, Action::Fork(_)));
            if seen.insert(key(&next, f)) {
                let mut s = sched.clone();
                s.push(a);
                stack.push((next, f, s));
            }
        }
    }
    Ok(out)
}
