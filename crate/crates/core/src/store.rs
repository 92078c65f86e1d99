//! Region stores, location maps and the store metafunctions.
//!
//! Heaps are copy-on-write (`Arc`), so cloning a store for a forked task is
//! cheap and a task's writes are never visible to another task until a join
//! merges the two views.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;
use core::fmt::Write as _;

use crate::name::{Name, Stamp};
use crate::syntax::{DataEnv, Ty};

/// Cell index, ivar, or an indirection to the start of another region.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ExtIndex {
    Concrete(u64),
    Ivar(Name),
    Indirection(Name, u64),
}

/// A region paired with an extended index, remembering which symbolic
/// location it was produced for.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConcreteLoc {
    pub region: Name,
    pub ext: ExtIndex,
    pub origin: Option<Name>,
}

impl ConcreteLoc {
    pub fn at(region: Name, index: u64) -> Self {
        ConcreteLoc {
            region,
            ext: ExtIndex::Concrete(index),
            origin: None,
        }
    }

    pub fn with_origin(mut self, origin: Name) -> Self {
        self.origin = Some(origin);
        self
    }

    pub fn index(&self) -> Option<u64> {
        match self.ext {
            ExtIndex::Concrete(i) => Some(i),
            _ => None,
        }
    }

    pub fn ivar(&self) -> Option<&Name> {
        match &self.ext {
            ExtIndex::Ivar(x) => Some(x),
            _ => None,
        }
    }

    /// Same place in the store, ignoring the symbolic origin.
    pub fn same_place(&self, other: &ConcreteLoc) -> bool {
        self.region == other.region && self.ext == other.ext
    }
}

impl fmt::Display for ConcreteLoc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{},", self.region)?;
        match &self.ext {
            ExtIndex::Concrete(i) => write!(f, "{i}")?,
            ExtIndex::Ivar(x) => write!(f, "?{x}")?,
            ExtIndex::Indirection(r, i) => write!(f, "ind({r},{i})")?,
        }
        f.write_str(">")?;
        if let Some(l) = &self.origin {
            write!(f, "^{l}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum HeapValue {
    Tag(Name),
    Scalar(i64),
    Indirection(Name, u64),
}

/// Partial map from cell index to heap value.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Heap {
    cells: Vec<Option<HeapValue>>,
}

impl Heap {
    pub fn get(&self, i: u64) -> Option<&HeapValue> {
        usize::try_from(i)
            .ok()
            .and_then(|i| self.cells.get(i))
            .and_then(Option::as_ref)
    }

    pub fn is_empty(&self) -> bool {
        self.cells.iter().all(Option::is_none)
    }

    /// Number of present cells.
    pub fn count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    pub fn max_index(&self) -> Option<u64> {
        self.cells
            .iter()
            .rposition(Option::is_some)
            .map(|i| i as u64)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &HeapValue)> {
        self.cells
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.as_ref().map(|v| (i as u64, v)))
    }

    fn set(&mut self, i: usize, hv: HeapValue) {
        if self.cells.len() <= i {
            self.cells.resize(i + 1, None);
        }
        self.cells[i] = Some(hv);
    }
}

/// Why a region exists: lexical `letregion`, or created to let an
/// allocation proceed while an earlier field is still being produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RegionKind {
    Lexical,
    Extra,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Region {
    heap: Arc<Heap>,
    refcount: u32,
    kind: RegionKind,
    stamp: Stamp,
}

impl Region {
    pub fn heap(&self) -> &Heap {
        &self.heap
    }

    pub fn refcount(&self) -> u32 {
        self.refcount
    }

    pub fn kind(&self) -> RegionKind {
        self.kind
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Store {
    regions: BTreeMap<Name, Region>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum StoreError {
    #[error("unbound location `{0}`")]
    UnboundLocation(Name),
    #[error("unknown region `{0}`")]
    UnknownRegion(Name),
    #[error("region `{0}` already exists")]
    RegionExists(Name),
    #[error("cell {region}[{index}] already holds {old:?}, refusing {new:?}")]
    DoubleWrite {
        region: Name,
        index: u64,
        old: HeapValue,
        new: HeapValue,
    },
    #[error("value at {region}[{index}] is incomplete")]
    IncompleteValue { region: Name, index: u64 },
    #[error("cell {region}[{index}] does not hold a constructor of `{ty}`")]
    TagMismatch { region: Name, index: u64, ty: Name },
    #[error("cell {region}[{index}] does not hold a scalar")]
    NotScalar { region: Name, index: u64 },
    #[error("indirection chain starting at {region}[{index}] does not terminate")]
    IndirectionCycle { region: Name, index: u64 },
    #[error("location {0} has no concrete index")]
    NotConcrete(ConcreteLoc),
    #[error("region `{from}` points into reclaimed region `{to}`")]
    DanglingIndirection { from: Name, to: Name },
    #[error("merge conflict: {0}")]
    MergeConflict(String),
}

impl Store {
    pub fn new() -> Self {
        Store::default()
    }

    pub fn create_region(
        &mut self,
        r: Name,
        kind: RegionKind,
        refcount: u32,
        stamp: Stamp,
    ) -> Result<(), StoreError> {
        if self.regions.contains_key(&r) {
            return Err(StoreError::RegionExists(r));
        }
        self.regions.insert(
            r,
            Region {
                heap: Arc::new(Heap::default()),
                refcount,
                kind,
                stamp,
            },
        );
        Ok(())
    }

    pub fn contains(&self, r: &Name) -> bool {
        self.regions.contains_key(r)
    }

    pub fn region(&self, r: &Name) -> Option<&Region> {
        self.regions.get(r)
    }

    pub fn heap(&self, r: &Name) -> Option<&Heap> {
        self.regions.get(r).map(|g| &*g.heap)
    }

    pub fn cell(&self, r: &Name, i: u64) -> Option<&HeapValue> {
        self.heap(r).and_then(|h| h.get(i))
    }

    pub fn refcount(&self, r: &Name) -> Option<u32> {
        self.regions.get(r).map(|g| g.refcount)
    }

    pub fn regions(&self) -> impl Iterator<Item = (&Name, &Region)> {
        self.regions.iter()
    }

    /// Regions sorted by creation stamp.
    pub fn regions_in_order(&self) -> Vec<(&Name, &Region)> {
        let mut v: Vec<_> = self.regions.iter().collect();
        v.sort_by(|a, b| a.1.stamp.cmp(&b.1.stamp).then_with(|| a.0.cmp(b.0)));
        v
    }

    pub fn total_cells(&self) -> usize {
        self.regions.values().map(|g| g.heap.count()).sum()
    }

    /// Writes a cell once. Returns `true` if the cell was newly written and
    /// `false` if it already held the identical value.
    ///
    /// A new indirection cell holds a reference to its target region.
    pub fn write_cell(&mut self, r: &Name, i: u64, hv: HeapValue) -> Result<bool, StoreError> {
        let region = self
            .regions
            .get_mut(r)
            .ok_or_else(|| StoreError::UnknownRegion(r.clone()))?;
        if let Some(old) = region.heap.get(i) {
            if *old == hv {
                return Ok(false);
            }
            return Err(StoreError::DoubleWrite {
                region: r.clone(),
                index: i,
                old: old.clone(),
                new: hv,
            });
        }
        let idx = usize::try_from(i).map_err(|_| StoreError::IncompleteValue {
            region: r.clone(),
            index: i,
        })?;
        let target = match &hv {
            HeapValue::Indirection(t, _) => Some(t.clone()),
            _ => None,
        };
        Arc::make_mut(&mut region.heap).set(idx, hv);
        if let Some(t) = target {
            let tg = self
                .regions
                .get_mut(&t)
                .ok_or(StoreError::UnknownRegion(t))?;
            tg.refcount += 1;
        }
        Ok(true)
    }

    /// Follows indirection cells from `(r, i)` until a non-indirection cell
    /// (or an empty one) is reached.
    pub fn resolve(&self, r: &Name, i: u64) -> Result<(Name, u64), StoreError> {
        let mut cur = (r.clone(), i);
        let limit = self.regions.len() + 1;
        for _ in 0..=limit {
            match self.cell(&cur.0, cur.1) {
                Some(HeapValue::Indirection(r2, i2)) => cur = (r2.clone(), *i2),
                _ => return Ok(cur),
            }
        }
        Err(StoreError::IndirectionCycle {
            region: r.clone(),
            index: i,
        })
    }
}

/// Symbolic location to concrete location.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct LocationMap {
    map: BTreeMap<Name, ConcreteLoc>,
}

impl LocationMap {
    pub fn new() -> Self {
        LocationMap::default()
    }

    pub fn get(&self, l: &Name) -> Option<&ConcreteLoc> {
        self.map.get(l)
    }

    pub fn insert(&mut self, l: Name, cl: ConcreteLoc) -> Option<ConcreteLoc> {
        self.map.insert(l, cl)
    }

    pub fn contains(&self, l: &Name) -> bool {
        self.map.contains_key(l)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Name, &ConcreteLoc)> {
        self.map.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&Name, &mut ConcreteLoc)> {
        self.map.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

impl FromIterator<(Name, ConcreteLoc)> for LocationMap {
    fn from_iter<I: IntoIterator<Item = (Name, ConcreteLoc)>>(iter: I) -> Self {
        LocationMap {
            map: iter.into_iter().collect(),
        }
    }
}

/// Looks up `l`, turning an indirection into the concrete start it names.
pub fn deref_location(m: &LocationMap, l: &Name) -> Result<ConcreteLoc, StoreError> {
    let cl = m
        .get(l)
        .ok_or_else(|| StoreError::UnboundLocation(l.clone()))?;
    Ok(match &cl.ext {
        ExtIndex::Indirection(r2, i) => ConcreteLoc {
            region: r2.clone(),
            ext: ExtIndex::Concrete(*i),
            origin: cl.origin.clone(),
        },
        _ => cl.clone(),
    })
}

/// One past the last cell of the value of type `ty` starting at `(r, i)`.
pub fn end_of(
    env: &DataEnv,
    ty: &Ty,
    r: &Name,
    i: u64,
    s: &Store,
) -> Result<(Name, u64), StoreError> {
    let mut pending: Vec<&Ty> = alloc::vec![ty];
    let mut cur = (r.clone(), i);
    let mut hops = 0usize;
    let hop_limit = s.total_cells() + s.regions.len() + 1;
    while let Some(t) = pending.pop() {
        let cell = s
            .cell(&cur.0, cur.1)
            .ok_or_else(|| StoreError::IncompleteValue {
                region: cur.0.clone(),
                index: cur.1,
            })?;
        if let HeapValue::Indirection(r2, i2) = cell {
            hops += 1;
            if hops > hop_limit {
                return Err(StoreError::IndirectionCycle {
                    region: r.clone(),
                    index: i,
                });
            }
            cur = (r2.clone(), *i2);
            pending.push(t);
            continue;
        }
        match t {
            Ty::Int => match cell {
                HeapValue::Scalar(_) => cur.1 += 1,
                _ => {
                    return Err(StoreError::NotScalar {
                        region: cur.0.clone(),
                        index: cur.1,
                    })
                }
            },
            Ty::Con(tycon) => {
                let info = match cell {
                    HeapValue::Tag(k) => env.con(k).filter(|c| &c.tycon == tycon),
                    _ => None,
                };
                let info = info.ok_or_else(|| StoreError::TagMismatch {
                    region: cur.0.clone(),
                    index: cur.1,
                    ty: tycon.clone(),
                })?;
                cur.1 += 1;
                pending.extend(info.fields.iter().rev());
            }
        }
    }
    Ok(cur)
}

/// End-witness of the value at `cl`, which must carry a concrete index.
pub fn end_witness(
    env: &DataEnv,
    ty: &Ty,
    cl: &ConcreteLoc,
    s: &Store,
) -> Result<ConcreteLoc, StoreError> {
    let i = cl
        .index()
        .ok_or_else(|| StoreError::NotConcrete(cl.clone()))?;
    let (r, e) = end_of(env, ty, &cl.region, i, s)?;
    Ok(ConcreteLoc::at(r, e))
}

/// Union of two stores; shared regions get the union of their heaps.
pub fn merge_store(a: &Store, b: &Store) -> Result<Store, StoreError> {
    let mut out = a.clone();
    for (r, rb) in &b.regions {
        match out.regions.get_mut(r) {
            None => {
                out.regions.insert(r.clone(), rb.clone());
            }
            Some(ra) => {
                if ra.kind != rb.kind || ra.stamp != rb.stamp {
                    return Err(StoreError::MergeConflict(alloc::format!(
                        "region `{r}` has two origins"
                    )));
                }
                ra.refcount = ra.refcount.max(rb.refcount);
                if Arc::ptr_eq(&ra.heap, &rb.heap) {
                    continue;
                }
                for (i, v) in rb.heap.iter() {
                    match ra.heap.get(i) {
                        Some(old) if old == v => {}
                        Some(old) => {
                            return Err(StoreError::MergeConflict(alloc::format!(
                                "cell {r}[{i}] holds {old:?} and {v:?}"
                            )))
                        }
                        None => Arc::make_mut(&mut ra.heap).set(i as usize, v.clone()),
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Union of two location maps. Equal entries and one-sided entries are
/// kept; an ivar entry yields to a resolved one; anything else conflicts.
pub fn merge_locmap(a: &LocationMap, b: &LocationMap) -> Result<LocationMap, StoreError> {
    let mut out = a.clone();
    for (l, cb) in &b.map {
        match out.map.get_mut(l) {
            None => {
                out.map.insert(l.clone(), cb.clone());
            }
            Some(ca) => {
                if ca.same_place(cb) {
                    continue;
                }
                match (&ca.ext, &cb.ext) {
                    (ExtIndex::Ivar(_), ExtIndex::Ivar(_)) => {}
                    (ExtIndex::Ivar(_), _) => {
                        *ca = cb.clone();
                        continue;
                    }
                    (_, ExtIndex::Ivar(_)) => continue,
                    _ => {}
                }
                return Err(StoreError::MergeConflict(alloc::format!(
                    "location `{l}` maps to {ca} and {cb}"
                )));
            }
        }
    }
    Ok(out)
}

/// Stitches field `k` (complete, at `cl_prev`) to field `k+1` when the
/// latter was placed in a fresh region: writes an indirection cell at the
/// end of field `k`. Returns whether a new cell was written.
pub fn link_fields(
    s: &mut Store,
    m: &LocationMap,
    env: &DataEnv,
    tau_prev: &Ty,
    cl_prev: &ConcreteLoc,
    l_next: &Name,
) -> Result<bool, StoreError> {
    let next = m
        .get(l_next)
        .ok_or_else(|| StoreError::UnboundLocation(l_next.clone()))?;
    let ExtIndex::Indirection(r2, i2) = &next.ext else {
        return Ok(false);
    };
    let e = end_witness(env, tau_prev, cl_prev, s)?;
    let i = e.index().unwrap_or_default();
    s.write_cell(&e.region, i, HeapValue::Indirection(r2.clone(), *i2))
}

/// Highest allocated index in `r`, or -1.
pub fn alloc_frontier(r: &Name, s: &Store) -> i64 {
    s.heap(r).and_then(Heap::max_index).map_or(-1, |i| i as i64)
}

/// Drops one reference to `r`. A region whose count reaches zero is
/// removed and releases the regions its indirection cells point to.
/// Returns the reclaimed regions in order.
pub fn release_region(s: &mut Store, r: &Name) -> Result<Vec<Name>, StoreError> {
    if !s.contains(r) {
        return Err(StoreError::UnknownRegion(r.clone()));
    }
    let mut reclaimed = Vec::new();
    let mut work = alloc::vec![r.clone()];
    while let Some(x) = work.pop() {
        let Some(region) = s.regions.get_mut(&x) else {
            continue;
        };
        region.refcount = region.refcount.saturating_sub(1);
        if region.refcount > 0 {
            continue;
        }
        let region = s.regions.remove(&x).expect("present");
        for (_, v) in region.heap.iter() {
            if let HeapValue::Indirection(t, _) = v {
                work.push(t.clone());
            }
        }
        reclaimed.push(x);
    }
    Ok(reclaimed)
}

/// Every indirection cell in a live region must target a live region.
pub fn audit_refcounts(s: &Store) -> Result<(), StoreError> {
    for (r, g) in &s.regions {
        for (_, v) in g.heap.iter() {
            if let HeapValue::Indirection(t, _) = v {
                if !s.contains(t) {
                    return Err(StoreError::DanglingIndirection {
                        from: r.clone(),
                        to: t.clone(),
                    });
                }
            }
        }
    }
    Ok(())
}

/// How tags are printed in a heap dump.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum TagStyle {
    #[default]
    Full,
    /// Shortest prefix that tells the program's constructors apart.
    Short,
}

/// One line per region, `r: [cell0, cell1, ...]`, in creation order.
/// Missing cells print as `_`.
pub fn dump_heap(s: &Store, env: &DataEnv, style: TagStyle) -> String {
    let short = short_tags(env);
    let mut out = String::new();
    for (r, g) in s.regions_in_order() {
        let _ = write!(out, "{r}: [");
        let len = g.heap.max_index().map_or(0, |m| m + 1);
        for i in 0..len {
            if i > 0 {
                out.push_str(", ");
            }
            match g.heap.get(i) {
                None => out.push('_'),
                Some(HeapValue::Tag(k)) => match style {
                    TagStyle::Full => out.push_str(k.as_str()),
                    TagStyle::Short => {
                        out.push_str(short.get(k).map_or(k.as_str(), String::as_str))
                    }
                },
                Some(HeapValue::Scalar(n)) => {
                    let _ = write!(out, "{n}");
                }
                Some(HeapValue::Indirection(t, j)) => {
                    let _ = write!(out, "→({t},{j})");
                }
            }
        }
        out.push_str("]\n");
    }
    out
}

fn short_tags(env: &DataEnv) -> BTreeMap<Name, String> {
    let tags: Vec<&str> = env.all_constructors().map(|c| c.tag.as_str()).collect();
    let mut out = BTreeMap::new();
    for t in &tags {
        let mut n = 1;
        while n < t.len()
            && tags
                .iter()
                .any(|o| o != t && o.len() >= n && o.get(..n) == t.get(..n))
        {
            n += 1;
        }
        out.insert(Name::new(t), String::from(t.get(..n).unwrap_or(t)));
    }
    out
}
