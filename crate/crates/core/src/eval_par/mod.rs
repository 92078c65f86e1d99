//! Task-set evaluation: forks at spawn points, joins on ivars, and
//! interleaved sequential steps chosen by a schedule.

mod explore;
mod wf;

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::eval_seq::{Counters, Ctx, SeqState, Step, StepInfo, Stuck};
use crate::name::{Fresh, Name};
use crate::store::{
    deref_location, merge_locmap, merge_store, ConcreteLoc, ExtIndex, HeapValue, LocationMap,
    Store, StoreError,
};
use crate::syntax::{free_names, substitute, Expr, IvarFill, LocType, Subst, Ty};
use crate::typecheck::{typecheck_expr, typecheck_taskset, TaskView, TypeError, TypedProgram};

pub use explore::{enumerate_schedules, Exploration, ExploreOptions, Terminal};
pub use wf::{check_wellformed, Violation};

/// Position in the fork tree: the root is `0`, its children `0.1`, `0.2`, ...
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TaskId(pub Vec<u32>);

impl TaskId {
    pub fn root() -> Self {
        TaskId(Vec::new())
    }

    pub fn child(&self, k: u32) -> Self {
        let mut v = self.0.clone();
        v.push(k);
        TaskId(v)
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("0")?;
        for k in &self.0 {
            write!(f, ".{k}")?;
        }
        Ok(())
    }
}

impl FromStr for TaskId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let mut parts = s.split('.');
        if parts.next() != Some("0") {
            return Err(format!("task id `{s}` must start with 0"));
        }
        parts
            .map(|p| p.parse::<u32>().map_err(|_| format!("bad task id `{s}`")))
            .collect::<Result<Vec<_>, _>>()
            .map(TaskId)
    }
}

/// Where a task's result goes.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Target {
    Root,
    /// A located value; the ext index is the ivar the parent holds.
    Loc(ConcreteLoc),
    Scalar(Name),
}

impl Target {
    pub fn ivar(&self) -> Option<&Name> {
        match self {
            Target::Root => None,
            Target::Loc(cl) => cl.ivar(),
            Target::Scalar(x) => Some(x),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Task {
    pub ty: LocType,
    pub target: Target,
    pub state: SeqState,
    /// Children forked so far, for numbering.
    pub children: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TaskSet {
    pub tasks: BTreeMap<TaskId, Task>,
    /// Ivar to the task producing it.
    pub registry: BTreeMap<Name, TaskId>,
    /// Counters of producers already joined and dropped.
    pub retired: Counters,
}

// Retired counters are bookkeeping, not machine state.
impl core::hash::Hash for TaskSet {
    fn hash<H: core::hash::Hasher>(&self, h: &mut H) {
        self.tasks.hash(h);
        self.registry.hash(h);
    }
}

impl TaskSet {
    pub fn for_main(tp: &TypedProgram) -> Self {
        let mut tasks = BTreeMap::new();
        let state = SeqState::for_main(&tp.program);
        tasks.insert(
            TaskId::root(),
            Task {
                ty: tp.main_ty.clone(),
                target: Target::Root,
                state,
                children: 0,
            },
        );
        TaskSet {
            tasks,
            registry: BTreeMap::new(),
            retired: Counters::default(),
        }
    }

    pub fn all_complete(&self) -> bool {
        self.tasks.values().all(|t| t.state.is_complete())
    }

    pub fn root(&self) -> &Task {
        self.tasks
            .get(&TaskId::root())
            .expect("root task is never removed")
    }

    /// Union of every task's view of the store.
    pub fn merged_store(&self) -> Result<Store, StoreError> {
        let mut out = self.root().state.store.clone();
        for (id, t) in &self.tasks {
            if *id != TaskId::root() {
                out = merge_store(&out, &t.state.store)?;
            }
        }
        Ok(out)
    }

    /// Type-checks every task under its own environments.
    pub fn typecheck(&self, tp: &TypedProgram) -> Result<(), (TaskId, TypeError)> {
        let states = self
            .tasks
            .iter()
            .map(|(id, t)| (id.clone(), t.state.shadow.clone()))
            .collect();
        let views = self.tasks.iter().map(|(id, t)| TaskView {
            id: id.clone(),
            ty: &t.ty,
            expr: &t.state.expr,
        });
        typecheck_taskset(&tp.env, &tp.program, &states, views).map(|_| ())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Action {
    Step(TaskId),
    Fork(TaskId),
    Join { consumer: TaskId, ivar: Name },
}

impl Action {
    pub fn task(&self) -> &TaskId {
        match self {
            Action::Step(t) | Action::Fork(t) => t,
            Action::Join { consumer, .. } => consumer,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Action::Step(_) => "step",
            Action::Fork(_) => "fork",
            Action::Join { .. } => "join",
        }
    }
}

/// One recorded scheduling decision.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Decision {
    pub step: u64,
    pub action: Action,
    /// Sequential steps the acting task had taken before this decision.
    pub local: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Policy {
    NeverFork,
    AlwaysFork,
    Random(u64),
    Trace(Vec<Decision>),
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ParError {
    #[error("task {task}: {stuck}")]
    Stuck { task: TaskId, stuck: Stuck },
    #[error("no enabled transition with tasks incomplete: {0:?}")]
    NoEnabledTransition(Vec<TaskId>),
    #[error("join of task {consumer} on `{ivar}`: {error}")]
    Join {
        consumer: TaskId,
        ivar: Name,
        error: Box<StoreError>,
    },
    #[error("fork in task {task}: {reason}")]
    Fork { task: TaskId, reason: String },
    #[error("trace decision {step} ({action:?}) is not enabled")]
    TraceMismatch { step: u64, action: Action },
    #[error("trace ended after {0} decisions with tasks incomplete")]
    TraceExhausted(u64),
    #[error("run finished with {0} trace decisions unused")]
    TraceUnused(usize),
    #[error("well-formedness violated after decision {step}: {violations:?}")]
    IllFormed {
        step: u64,
        violations: Vec<Violation>,
    },
    #[error("task {task} no longer type-checks after decision {step}: {error}")]
    Preservation {
        step: u64,
        task: TaskId,
        error: TypeError,
    },
    #[error("gave up after {0} decisions")]
    OutOfFuel(u64),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Whole-run accounting.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Metrics {
    pub forks: u64,
    pub joins: u64,
    pub steps: u64,
    pub extra_regions: u64,
    pub newreg_firings: u64,
    pub forks_with_newreg: u64,
    pub indirections: u64,
    pub cells_written: u64,
    pub regions_created: u64,
    pub peak_live_tasks: u64,
    pub ew_checks: u64,
    pub ew_mismatches: u64,
}

impl Metrics {
    /// Store-derived counts: extra regions and indirection cells.
    pub fn from_store(counters: &Counters, s: &Store) -> Self {
        let mut m = Metrics {
            steps: counters.steps,
            newreg_firings: counters.newreg_firings,
            forks_with_newreg: counters.newreg_ivars.len() as u64,
            cells_written: counters.cells_written,
            regions_created: counters.regions_created,
            ew_checks: counters.ew_checks,
            ew_mismatches: counters.ew_mismatches,
            ..Metrics::default()
        };
        for (_, g) in s.regions() {
            if g.kind() == crate::store::RegionKind::Extra {
                m.extra_regions += 1;
            }
            m.indirections += g
                .heap()
                .iter()
                .filter(|(_, v)| matches!(v, HeapValue::Indirection(..)))
                .count() as u64;
        }
        m
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParOptions {
    pub audit: bool,
    pub check_wf: bool,
    pub check_types: bool,
    pub keep_steps: bool,
    pub max_decisions: u64,
}

impl Default for ParOptions {
    fn default() -> Self {
        ParOptions {
            audit: false,
            check_wf: false,
            check_types: false,
            keep_steps: false,
            max_decisions: u64::MAX,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParRun {
    pub value: Expr,
    pub store: Store,
    pub tasks: TaskSet,
    pub metrics: Metrics,
    pub decisions: Vec<Decision>,
    /// Sequential steps with the task that took them, if requested.
    pub steps: Vec<(TaskId, StepInfo)>,
}

pub fn ctx(tp: &TypedProgram, audit: bool) -> Ctx<'_> {
    Ctx {
        program: &tp.program,
        env: &tp.env,
        audit,
    }
}

/// Path from an expression to its outermost spawn-flagged `let` whose
/// bound has not started. Entries index the evaluation-context position
/// taken: 0 let bound, 1 left operand, 2 right operand, 3 condition.
fn fork_path(e: &Expr) -> Option<Vec<u8>> {
    let mut path = Vec::new();
    let mut cur = e;
    loop {
        cur = match cur {
            Expr::Let { bound, spawn, .. } if !bound.is_value() => {
                if *spawn {
                    return Some(path);
                }
                path.push(0);
                bound
            }
            Expr::PrimOp(_, a, _) if !a.is_value() => {
                path.push(1);
                a
            }
            Expr::PrimOp(_, _, b) if !b.is_value() => {
                path.push(2);
                b
            }
            Expr::If(c, _, _) if !c.is_value() => {
                path.push(3);
                c
            }
            _ => return None,
        };
    }
}

fn follow<'e>(e: &'e mut Expr, path: &[u8]) -> &'e mut Expr {
    let mut cur = e;
    for p in path {
        cur = match (p, cur) {
            (0, Expr::Let { bound, .. }) => bound,
            (1, Expr::PrimOp(_, a, _)) => a,
            (2, Expr::PrimOp(_, _, b)) => b,
            (3, Expr::If(c, _, _)) => c,
            _ => unreachable!("path computed on the same expression"),
        };
    }
    cur
}

fn follow_ref<'e>(e: &'e Expr, path: &[u8]) -> &'e Expr {
    let mut cur = e;
    for p in path {
        cur = match (p, cur) {
            (0, Expr::Let { bound, .. }) => bound,
            (1, Expr::PrimOp(_, a, _)) => a,
            (2, Expr::PrimOp(_, _, b)) => b,
            (3, Expr::If(c, _, _)) => c,
            _ => unreachable!("path computed on the same expression"),
        };
    }
    cur
}

/// Whether the task can fork right now.
pub fn can_fork(t: &Task) -> bool {
    let Some(path) = fork_path(&t.state.expr) else {
        return false;
    };
    match follow_ref(&t.state.expr, &path) {
        Expr::Let {
            ty: LocType::Int, ..
        } => true,
        Expr::Let {
            ty: LocType::At(Ty::Con(_), lr),
            ..
        } => {
            matches!(deref_location(&t.state.locmap, &lr.loc), Ok(cl) if cl.index().is_some())
        }
        _ => false,
    }
}

/// The ivars the next sequential step would wait on, if any.
pub fn blocked_on(e: &Expr) -> Option<Vec<Name>> {
    fn ivars<'a>(es: impl IntoIterator<Item = &'a Expr>) -> Vec<Name> {
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
    let mut cur = e;
    loop {
        cur = match cur {
            Expr::Let { bound, .. } if !bound.is_value() => bound,
            Expr::PrimOp(_, a, _) if !a.is_value() => a,
            Expr::PrimOp(_, _, b) if !b.is_value() => b,
            Expr::If(c, _, _) if !c.is_value() => c,
            _ => break,
        };
    }
    let xs = match cur {
        Expr::IvarInt(_) | Expr::Loc(_) => ivars([cur]),
        Expr::PrimOp(_, a, b) => ivars([&**a, &**b]),
        Expr::If(c, _, _) => ivars([&**c]),
        Expr::DataCon(_, _, args) => ivars(args.iter()),
        Expr::Case(s, _) => ivars([&**s]),
        _ => Vec::new(),
    };
    (!xs.is_empty()).then_some(xs)
}

/// Every transition the task set can take, in a fixed order: tasks by id,
/// and for each task fork, then joins, then step.
pub fn enabled_actions(ts: &TaskSet, allow_fork: bool) -> Vec<Action> {
    let mut out = Vec::new();
    for (id, t) in &ts.tasks {
        if t.state.is_complete() {
            continue;
        }
        if allow_fork && can_fork(t) {
            out.push(Action::Fork(id.clone()));
        }
        match blocked_on(&t.state.expr) {
            Some(xs) => {
                for x in xs {
                    let ready = ts
                        .registry
                        .get(&x)
                        .and_then(|p| ts.tasks.get(p))
                        .is_some_and(|p| p.state.is_complete());
                    if ready && !out.iter().any(|a| matches!(a, Action::Join { consumer, ivar } if consumer == id && *ivar == x)) {
                        out.push(Action::Join { consumer: id.clone(), ivar: x });
                    }
                }
            }
            None => out.push(Action::Step(id.clone())),
        }
    }
    out
}

/// Applies one transition. Returns the sequential step taken, if any.
pub fn apply(ts: &mut TaskSet, cx: Ctx<'_>, action: &Action) -> Result<Option<StepInfo>, ParError> {
    match action {
        Action::Step(id) => {
            let t = ts
                .tasks
                .get_mut(id)
                .ok_or_else(|| ParError::NoEnabledTransition(alloc::vec![id.clone()]))?;
            match t.state.step(cx) {
                Ok(Step::Stepped(info)) => Ok(Some(info)),
                Ok(_) => Ok(None),
                Err(stuck) => Err(ParError::Stuck {
                    task: id.clone(),
                    stuck,
                }),
            }
        }
        Action::Fork(id) => fork(ts, cx, id).map(|_| None),
        Action::Join { consumer, ivar } => join(ts, cx, consumer, ivar).map(|_| None),
    }
}

fn fork(ts: &mut TaskSet, cx: Ctx<'_>, id: &TaskId) -> Result<(), ParError> {
    let parent = ts.tasks.get_mut(id).ok_or_else(|| ParError::Fork {
        task: id.clone(),
        reason: String::from("no such task"),
    })?;
    let (child_id, x, child) = fork_task(parent, id, cx)?;
    ts.registry.insert(x, child_id.clone());
    ts.tasks.insert(child_id, child);
    Ok(())
}

/// Splits the task's outermost ready spawn point into a child computing the
/// bound and a parent continuing with an ivar in its place. Returns the
/// child's id, the ivar and the child.
pub fn fork_task(
    parent: &mut Task,
    id: &TaskId,
    cx: Ctx<'_>,
) -> Result<(TaskId, Name, Task), ParError> {
    let err = |reason: &str| ParError::Fork {
        task: id.clone(),
        reason: String::from(reason),
    };
    if !can_fork(parent) {
        return Err(err("no spawn point is ready"));
    }
    let path = fork_path(&parent.state.expr).expect("checked by can_fork");
    parent.children += 1;
    let child_id = id.child(parent.children);
    let x = parent.state.fresh.name("x");
    let site = follow(&mut parent.state.expr, &path);
    let taken = core::mem::replace(site, Expr::Int(0));
    let Expr::Let {
        var,
        ty,
        bound,
        body,
        ..
    } = taken
    else {
        unreachable!("fork path ends at a let")
    };

    // The parent continues as if the bound had been evaluated: its
    // allocation state is the bound's typing outcome.
    let (allocs, nursery, _) = typecheck_expr(cx.env, cx.program, &parent.state.shadow, &bound)
        .map_err(|e| err(&format!("bound does not type-check: {e}")))?;

    let mut child_state = parent.state.clone();
    child_state.expr = (*bound).clone();
    child_state.fresh = Fresh::scoped(&child_id.0);
    child_state.counters = Counters::default();
    // The child owns only the unwritten locations its bound fills.
    child_state.shadow.nursery = parent
        .state
        .shadow
        .nursery
        .iter()
        .filter(|l| !nursery.contains(*l))
        .cloned()
        .collect();

    let mut s = Subst::default();
    let target = match &ty {
        LocType::At(t, lr) => {
            let cl =
                deref_location(&parent.state.locmap, &lr.loc).map_err(|e| err(&format!("{e}")))?;
            let held = ConcreteLoc {
                region: cl.region,
                ext: ExtIndex::Ivar(x.clone()),
                origin: Some(lr.loc.clone()),
            };
            parent.state.locmap.insert(lr.loc.clone(), held.clone());
            parent.state.shadow.sigma.insert(lr.loc.clone(), t.clone());
            s.vars.insert(var.clone(), Expr::Loc(held.clone()));
            Target::Loc(held)
        }
        LocType::Int => {
            s.vars.insert(var.clone(), Expr::IvarInt(x.clone()));
            Target::Scalar(x.clone())
        }
    };
    parent.state.shadow.allocs = allocs;
    parent.state.shadow.nursery = nursery;
    *follow(&mut parent.state.expr, &path) = substitute(&body, &s);
    Ok((
        child_id,
        x,
        Task {
            ty,
            target,
            state: child_state,
            children: 0,
        },
    ))
}

fn join(ts: &mut TaskSet, cx: Ctx<'_>, consumer: &TaskId, x: &Name) -> Result<(), ParError> {
    let jerr = |error: StoreError| ParError::Join {
        consumer: consumer.clone(),
        ivar: x.clone(),
        error: Box::new(error),
    };
    let pid = ts
        .registry
        .get(x)
        .cloned()
        .ok_or_else(|| jerr(StoreError::UnboundLocation(x.clone())))?;
    let producer = ts
        .tasks
        .get(&pid)
        .ok_or_else(|| jerr(StoreError::UnboundLocation(x.clone())))?
        .state
        .clone();
    let c = ts
        .tasks
        .get_mut(consumer)
        .ok_or_else(|| jerr(StoreError::UnboundLocation(x.clone())))?;
    join_state(&mut c.state, &producer, x, cx).map_err(jerr)?;
    collect_garbage(ts);
    Ok(())
}

/// Folds a completed producer's state into a consumer waiting on `x`:
/// stores, location maps, end notes, written locations and pending links
/// are merged, `x` is filled in, and links that became writable are
/// written. Counters are left alone.
pub fn join_state(
    st: &mut SeqState,
    producer: &SeqState,
    x: &Name,
    cx: Ctx<'_>,
) -> Result<(), StoreError> {
    let fill = match &producer.expr {
        Expr::Int(n) => IvarFill::Scalar(*n),
        Expr::Loc(cl) => match &cl.ext {
            ExtIndex::Concrete(i) | ExtIndex::Indirection(_, i) => IvarFill::Index(*i),
            ExtIndex::Ivar(_) => return Err(StoreError::NotConcrete(cl.clone())),
        },
        _ => return Err(StoreError::UnboundLocation(x.clone())),
    };
    st.store = merge_store(&st.store, &producer.store)?;
    // A producer forked before a sibling took over a location still maps it
    // to where it would have gone; only bindings it actually filled count.
    let mut theirs = LocationMap::new();
    for (l, cl) in producer.locmap.iter() {
        let stale = st.locmap.get(l).is_some_and(|mine| mine.ivar().is_some())
            && match &cl.ext {
                ExtIndex::Concrete(i) => producer.store.cell(&cl.region, *i).is_none(),
                ExtIndex::Indirection(r, i) => producer.store.cell(r, *i).is_none(),
                ExtIndex::Ivar(_) => false,
            };
        if !stale {
            theirs.insert(l.clone(), cl.clone());
        }
    }
    st.locmap = merge_locmap(&st.locmap, &theirs)?;
    if let IvarFill::Index(i) = fill {
        for (_, cl) in st.locmap.iter_mut() {
            if cl.ivar() == Some(x) {
                cl.ext = ExtIndex::Concrete(i);
            }
        }
    }
    for (k, v) in &producer.notes {
        st.notes.entry(k.clone()).or_insert_with(|| v.clone());
    }
    let p = &producer.shadow;
    st.shadow
        .sigma
        .extend(p.sigma.iter().map(|(k, v)| (k.clone(), v.clone())));
    st.shadow
        .constraints
        .extend(p.constraints.iter().map(|(k, v)| (k.clone(), v.clone())));
    st.shadow
        .locs
        .extend(p.locs.iter().map(|(k, v)| (k.clone(), v.clone())));
    st.shadow.regions.extend(p.regions.iter().cloned());
    for link in &producer.pending {
        if !st.pending.contains(link) {
            st.pending.push(link.clone());
        }
    }
    let mut s = Subst::default();
    s.ivars.insert(x.clone(), fill);
    st.expr = substitute(&st.expr, &s);
    let mut log = Vec::new();
    st.flush_links(cx, &mut log)?;
    st.counters.cells_written += log.len() as u64;
    Ok(())
}

/// Drops completed producers whose ivar nobody refers to any more.
fn collect_garbage(ts: &mut TaskSet) {
    let mut referenced: BTreeSet<Name> = BTreeSet::new();
    for t in ts.tasks.values() {
        referenced.extend(free_names(&t.state.expr).ivars);
        for (_, cl) in t.state.locmap.iter() {
            if let Some(x) = cl.ivar() {
                referenced.insert(x.clone());
            }
        }
    }
    let dead: Vec<(Name, TaskId)> = ts
        .registry
        .iter()
        .filter(|(x, p)| {
            !referenced.contains(*x) && ts.tasks.get(*p).is_some_and(|t| t.state.is_complete())
        })
        .filter(|(_, p)| {
            ts.tasks
                .get(*p)
                .is_some_and(|t| t.children == 0 || no_live_children(ts, p))
        })
        .map(|(x, p)| (x.clone(), p.clone()))
        .collect();
    for (x, p) in dead {
        ts.registry.remove(&x);
        if let Some(t) = ts.tasks.remove(&p) {
            ts.retired.absorb(&t.state.counters);
        }
    }
}

fn no_live_children(ts: &TaskSet, p: &TaskId) -> bool {
    !ts.tasks
        .keys()
        .any(|k| k.0.len() > p.0.len() && k.0.starts_with(&p.0))
}

/// Picks the next action for a policy.
pub struct Scheduler {
    policy: Policy,
    rng: Option<ChaCha8Rng>,
    cursor: usize,
}

impl Scheduler {
    pub fn new(policy: Policy) -> Self {
        let rng = match policy {
            Policy::Random(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
            _ => None,
        };
        Scheduler {
            policy,
            rng,
            cursor: 0,
        }
    }

    /// Trace decisions not yet replayed.
    pub fn unused(&self) -> usize {
        match &self.policy {
            Policy::Trace(ds) => ds.len().saturating_sub(self.cursor),
            _ => 0,
        }
    }

    pub fn allows_fork(&self) -> bool {
        !matches!(self.policy, Policy::NeverFork)
    }

    fn below(rng: &mut ChaCha8Rng, n: usize) -> usize {
        ((u128::from(rng.next_u64()) * n as u128) >> 64) as usize
    }

    pub fn choose(&mut self, step: u64, enabled: &[Action]) -> Result<Action, ParError> {
        let first_task = || enabled.first().map(|a| a.task().clone());
        let pick = |t: &TaskId, fork: bool| -> Action {
            let mut acts: Vec<&Action> = enabled.iter().filter(|a| a.task() == t).collect();
            acts.sort_by_key(|a| match a {
                Action::Fork(_) if fork => 0,
                Action::Join { .. } => 1,
                Action::Step(_) => 2,
                Action::Fork(_) => 3,
            });
            acts[0].clone()
        };
        match &mut self.policy {
            Policy::NeverFork => {
                let t = first_task().ok_or(ParError::NoEnabledTransition(Vec::new()))?;
                Ok(pick(&t, false))
            }
            Policy::AlwaysFork => {
                let t = first_task().ok_or(ParError::NoEnabledTransition(Vec::new()))?;
                Ok(pick(&t, true))
            }
            Policy::Random(_) => {
                let rng = self.rng.as_mut().expect("seeded");
                let mut ids: Vec<&TaskId> = enabled.iter().map(Action::task).collect();
                ids.dedup();
                let t = ids[Self::below(rng, ids.len())].clone();
                let forkable = enabled
                    .iter()
                    .any(|a| a.task() == &t && matches!(a, Action::Fork(_)));
                Ok(pick(&t, forkable && rng.next_u64() & 1 == 1))
            }
            Policy::Trace(ds) => {
                let d = ds.get(self.cursor).ok_or(ParError::TraceExhausted(step))?;
                self.cursor += 1;
                if !enabled.contains(&d.action) {
                    return Err(ParError::TraceMismatch {
                        step,
                        action: d.action.clone(),
                    });
                }
                Ok(d.action.clone())
            }
        }
    }
}

/// Runs `main` under a schedule until every task is complete.
pub fn run_par(tp: &TypedProgram, policy: Policy, opts: ParOptions) -> Result<ParRun, ParError> {
    let cx = ctx(tp, opts.audit);
    let mut sched = Scheduler::new(policy);
    let mut ts = TaskSet::for_main(tp);
    let mut decisions = Vec::new();
    let mut steps = Vec::new();
    let mut metrics = Metrics {
        peak_live_tasks: 1,
        ..Metrics::default()
    };
    let mut n = 0u64;
    while !ts.all_complete() {
        if n >= opts.max_decisions {
            return Err(ParError::OutOfFuel(n));
        }
        let enabled = enabled_actions(&ts, sched.allows_fork());
        if enabled.is_empty() {
            let stuck = ts
                .tasks
                .iter()
                .filter(|(_, t)| !t.state.is_complete())
                .map(|(id, _)| id.clone())
                .collect();
            return Err(ParError::NoEnabledTransition(stuck));
        }
        let action = sched.choose(n, &enabled)?;
        let local = ts
            .tasks
            .get(action.task())
            .map_or(0, |t| t.state.counters.steps);
        let info = apply(&mut ts, cx, &action)?;
        match &action {
            Action::Fork(_) => metrics.forks += 1,
            Action::Join { .. } => metrics.joins += 1,
            Action::Step(id) => {
                if let (true, Some(info)) = (opts.keep_steps, info) {
                    steps.push((id.clone(), info));
                }
            }
        }
        decisions.push(Decision {
            step: n,
            action,
            local,
        });
        metrics.peak_live_tasks = metrics.peak_live_tasks.max(ts.tasks.len() as u64);
        if opts.check_wf {
            let v = check_wellformed(&ts, cx);
            if !v.is_empty() {
                return Err(ParError::IllFormed {
                    step: n,
                    violations: v,
                });
            }
        }
        if opts.check_types {
            ts.typecheck(tp)
                .map_err(|(task, error)| ParError::Preservation {
                    step: n,
                    task,
                    error,
                })?;
        }
        n += 1;
    }
    if sched.unused() > 0 {
        return Err(ParError::TraceUnused(sched.unused()));
    }
    finish(ts, metrics, decisions, steps)
}

fn finish(
    ts: TaskSet,
    mut metrics: Metrics,
    decisions: Vec<Decision>,
    steps: Vec<(TaskId, StepInfo)>,
) -> Result<ParRun, ParError> {
    let store = ts.merged_store()?;
    let mut counters = ts.retired.clone();
    for t in ts.tasks.values() {
        counters.absorb(&t.state.counters);
    }
    let (forks, joins, peak) = (metrics.forks, metrics.joins, metrics.peak_live_tasks);
    metrics = Metrics::from_store(&counters, &store);
    metrics.forks = forks;
    metrics.joins = joins;
    metrics.peak_live_tasks = peak;
    let value = ts.root().state.expr.clone();
    Ok(ParRun {
        value,
        store,
        tasks: ts,
        metrics,
        decisions,
        steps,
    })
}
