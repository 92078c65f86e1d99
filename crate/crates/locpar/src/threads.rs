//! Replays the forks and joins of a recorded schedule with one OS thread
//! per task. Each task steps on its own thread, forks exactly where the
//! schedule forked it, and blocks on a condition variable until the
//! producer it joins has finished. At most `threads` tasks step at once.

use std::collections::{BTreeMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::Scope;

use locpar_core::eval_par::{
    blocked_on, ctx, fork_task, join_state, Action, Decision, Metrics, ParError, Task, TaskId,
    TaskSet,
};
use locpar_core::eval_seq::{Counters, Ctx, SeqState, Step};
use locpar_core::store::{merge_store, Store};
use locpar_core::syntax::Expr;
use locpar_core::typecheck::TypedProgram;
use locpar_core::Name;

#[derive(Debug, thiserror::Error)]
pub enum ThreadError {
    #[error(transparent)]
    Par(#[from] ParError),
    #[error("task {task}: {reason}")]
    Replay { task: TaskId, reason: String },
    #[error("at least one thread is required")]
    NoThreads,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ThreadRun {
    pub value: Expr,
    pub store: Store,
    pub metrics: Metrics,
}

#[derive(Clone, Debug)]
enum Event {
    Fork,
    Join(Name),
}

type Plan = VecDeque<(u64, Event)>;

/// Per-task forks and joins, keyed by the task's step count.
fn plans(decisions: &[Decision]) -> BTreeMap<TaskId, Plan> {
    let mut out: BTreeMap<TaskId, Plan> = BTreeMap::new();
    for d in decisions {
        let ev = match &d.action {
            Action::Step(_) => continue,
            Action::Fork(_) => Event::Fork,
            Action::Join { ivar, .. } => Event::Join(ivar.clone()),
        };
        out.entry(d.action.task().clone())
            .or_default()
            .push_back((d.local, ev));
    }
    out
}

struct Shared<'a> {
    cx: Ctx<'a>,
    plans: Mutex<BTreeMap<TaskId, Plan>>,
    filled: Mutex<BTreeMap<Name, Arc<SeqState>>>,
    filled_cv: Condvar,
    permits: Mutex<usize>,
    permits_cv: Condvar,
    failure: Mutex<Option<ThreadError>>,
    done: Mutex<Vec<(TaskId, Task)>>,
    forks: AtomicU64,
    joins: AtomicU64,
    live: AtomicU64,
    peak: AtomicU64,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl Shared<'_> {
    fn failed(&self) -> bool {
        lock(&self.failure).is_some()
    }

    fn fail(&self, e: ThreadError) {
        lock(&self.failure).get_or_insert(e);
        drop(lock(&self.filled));
        self.filled_cv.notify_all();
        drop(lock(&self.permits));
        self.permits_cv.notify_all();
    }

    fn acquire(&self) -> bool {
        let mut p = lock(&self.permits);
        while *p == 0 {
            if self.failed() {
                return false;
            }
            p = self.permits_cv.wait(p).unwrap_or_else(|e| e.into_inner());
        }
        *p -= 1;
        true
    }

    fn release(&self) {
        *lock(&self.permits) += 1;
        self.permits_cv.notify_one();
    }

    fn wait_for(&self, x: &Name) -> Option<Arc<SeqState>> {
        let mut f = lock(&self.filled);
        loop {
            if let Some(st) = f.get(x) {
                return Some(st.clone());
            }
            if self.failed() {
                return None;
            }
            f = self.filled_cv.wait(f).unwrap_or_else(|e| e.into_inner());
        }
    }
}

/// Runs `tp` on up to `threads` OS threads, forking and joining as in
/// `decisions`. The value and store agree with the simulated run that
/// recorded the decisions.
pub fn run_threads(
    tp: &TypedProgram,
    decisions: &[Decision],
    threads: usize,
    audit: bool,
) -> Result<ThreadRun, ThreadError> {
    if threads == 0 {
        return Err(ThreadError::NoThreads);
    }
    let sh = Shared {
        cx: ctx(tp, audit),
        plans: Mutex::new(plans(decisions)),
        filled: Mutex::new(BTreeMap::new()),
        filled_cv: Condvar::new(),
        permits: Mutex::new(threads),
        permits_cv: Condvar::new(),
        failure: Mutex::new(None),
        done: Mutex::new(Vec::new()),
        forks: AtomicU64::new(0),
        joins: AtomicU64::new(0),
        live: AtomicU64::new(1),
        peak: AtomicU64::new(1),
    };
    let root = TaskSet::for_main(tp)
        .tasks
        .into_iter()
        .next()
        .expect("main task");
    std::thread::scope(|s| run_task(s, &sh, root.0, root.1));
    if let Some(e) = lock(&sh.failure).take() {
        return Err(e);
    }
    let done = std::mem::take(&mut *lock(&sh.done));
    let mut store = Store::new();
    let mut counters = Counters::default();
    let mut value = None;
    for (id, t) in &done {
        store = merge_store(&store, &t.state.store).map_err(ParError::from)?;
        counters.absorb(&t.state.counters);
        if *id == TaskId::root() {
            value = Some(t.state.expr.clone());
        }
    }
    let mut metrics = Metrics::from_store(&counters, &store);
    metrics.forks = sh.forks.load(Ordering::SeqCst);
    metrics.joins = sh.joins.load(Ordering::SeqCst);
    metrics.peak_live_tasks = sh.peak.load(Ordering::SeqCst);
    let value = value.ok_or(ThreadError::Replay {
        task: TaskId::root(),
        reason: "main task did not finish".into(),
    })?;
    Ok(ThreadRun {
        value,
        store,
        metrics,
    })
}

fn run_task<'scope, 'env: 'scope>(
    s: &'scope Scope<'scope, 'env>,
    sh: &'scope Shared<'env>,
    id: TaskId,
    mut task: Task,
) {
    let mut plan = lock(&sh.plans).remove(&id).unwrap_or_default();
    if !sh.acquire() {
        return;
    }
    let replay = |reason: String| ThreadError::Replay {
        task: id.clone(),
        reason,
    };
    let outcome: Result<(), ThreadError> = loop {
        if sh.failed() {
            break Ok(());
        }
        let here = task.state.counters.steps;
        match plan.front() {
            Some((local, _)) if *local < here => {
                break Err(replay(format!("missed an event at step {local}")))
            }
            Some((local, _)) if *local == here => {
                let (_, ev) = plan.pop_front().expect("front exists");
                match ev {
                    Event::Fork => match fork_task(&mut task, &id, sh.cx) {
                        Ok((cid, _, child)) => {
                            sh.forks.fetch_add(1, Ordering::SeqCst);
                            let live = sh.live.fetch_add(1, Ordering::SeqCst) + 1;
                            sh.peak.fetch_max(live, Ordering::SeqCst);
                            s.spawn(move || run_task(s, sh, cid, child));
                        }
                        Err(e) => break Err(e.into()),
                    },
                    Event::Join(x) => {
                        sh.release();
                        let producer = sh.wait_for(&x);
                        if !sh.acquire() {
                            return;
                        }
                        let Some(producer) = producer else {
                            break Ok(());
                        };
                        if let Err(error) = join_state(&mut task.state, &producer, &x, sh.cx) {
                            break Err(ParError::Join {
                                consumer: id.clone(),
                                ivar: x,
                                error: Box::new(error),
                            }
                            .into());
                        }
                        sh.joins.fetch_add(1, Ordering::SeqCst);
                    }
                }
                continue;
            }
            _ => {}
        }
        if task.state.is_complete() {
            if !plan.is_empty() {
                break Err(replay(format!(
                    "finished with {} scheduled events left",
                    plan.len()
                )));
            }
            break Ok(());
        }
        if let Some(xs) = blocked_on(&task.state.expr) {
            break Err(replay(format!("blocked on {xs:?} with no join scheduled")));
        }
        match task.state.step(sh.cx) {
            Ok(Step::Stepped(_)) => {}
            Ok(Step::Value) => break Ok(()),
            Ok(Step::Blocked(xs)) => break Err(replay(format!("blocked on {xs:?}"))),
            Err(stuck) => {
                break Err(ParError::Stuck {
                    task: id.clone(),
                    stuck,
                }
                .into())
            }
        }
    };
    if let Err(e) = outcome {
        sh.release();
        sh.fail(e);
        return;
    }
    if let (false, Some(x)) = (sh.failed(), task.target.ivar()) {
        lock(&sh.filled).insert(x.clone(), Arc::new(task.state.clone()));
        sh.filled_cv.notify_all();
    }
    sh.live.fetch_sub(1, Ordering::SeqCst);
    lock(&sh.done).push((id, task));
    sh.release();
}
