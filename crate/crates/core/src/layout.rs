//! Canonical values, fragmentation accounting and a byte-level chunked
//! serializer.
//!
//! Byte encoding: a constructor tag is one byte (its code), a scalar is
//! eight bytes little-endian, and a link is `0xFF` followed by the eight-byte
//! absolute offset of where reading continues. Tags and the scalars that
//! follow them are never split by a link.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::eval_par::Metrics;
use crate::name::Name;
use crate::store::{ConcreteLoc, ExtIndex, HeapValue, RegionKind, Store};
use crate::syntax::{ConInfo, DataEnv, Expr, LocType, Ty};

pub const TAG_BYTES: usize = 1;
pub const SCALAR_BYTES: usize = 8;
pub const LINK_BYTES: usize = 9;
pub const LINK_MARK: u8 = 0xFF;
/// Fixes where fragmented layouts put their chunks.
const PLACEMENT_SEED: u64 = 0x5eed;

/// An indirection-free tree.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CanonicalValue {
    Node(Name, Vec<CanonicalValue>),
    Leaf(i64),
}

impl fmt::Display for CanonicalValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CanonicalValue::Leaf(n) => write!(f, "{n}"),
            CanonicalValue::Node(k, cs) => {
                f.write_str(k.as_str())?;
                for c in cs {
                    match c {
                        CanonicalValue::Node(_, gs) if !gs.is_empty() => write!(f, " ({c})")?,
                        CanonicalValue::Leaf(n) if *n < 0 => write!(f, " ({n})")?,
                        _ => write!(f, " {c}")?,
                    }
                }
                Ok(())
            }
        }
    }
}

impl CanonicalValue {
    /// Constructor nodes in the tree.
    pub fn nodes(&self) -> usize {
        match self {
            CanonicalValue::Leaf(_) => 0,
            CanonicalValue::Node(_, cs) => 1 + cs.iter().map(CanonicalValue::nodes).sum::<usize>(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum LayoutError {
    #[error("value incomplete at {region}[{index}]")]
    IncompleteValue { region: Name, index: u64 },
    #[error("node needs {bytes} bytes but chunks are capped at {cap}")]
    ValueTooLarge { bytes: usize, cap: usize },
    #[error("malformed buffer at offset {offset}: {reason}")]
    MalformedBuffer { offset: usize, reason: String },
    #[error("unknown constructor `{0}`")]
    UnknownConstructor(Name),
    #[error("bad chunk policy: {0}")]
    BadPolicy(&'static str),
}

fn malformed(offset: usize, reason: &str) -> LayoutError {
    LayoutError::MalformedBuffer {
        offset,
        reason: String::from(reason),
    }
}

/// Reads the value of type `ty` at `root`, following indirections.
pub fn flatten_value(
    env: &DataEnv,
    root: &ConcreteLoc,
    ty: &Ty,
    s: &Store,
) -> Result<CanonicalValue, LayoutError> {
    let (r, i) = match &root.ext {
        ExtIndex::Concrete(i) => (root.region.clone(), *i),
        ExtIndex::Indirection(r, i) => (r.clone(), *i),
        ExtIndex::Ivar(_) => {
            return Err(LayoutError::IncompleteValue {
                region: root.region.clone(),
                index: 0,
            })
        }
    };
    Flattener { env, s }.value(ty, (r, i)).map(|(v, _)| v)
}

/// Canonical form of an evaluation result.
pub fn flatten_result(
    env: &DataEnv,
    value: &Expr,
    ty: &LocType,
    s: &Store,
) -> Result<CanonicalValue, LayoutError> {
    match (value, ty) {
        (Expr::Int(n), _) => Ok(CanonicalValue::Leaf(*n)),
        (Expr::Loc(cl), LocType::At(t, _)) => flatten_value(env, cl, t, s),
        (Expr::Loc(cl), LocType::Int) => Err(LayoutError::IncompleteValue {
            region: cl.region.clone(),
            index: 0,
        }),
        _ => Err(LayoutError::IncompleteValue {
            region: Name::new("?"),
            index: 0,
        }),
    }
}

struct Flattener<'a> {
    env: &'a DataEnv,
    s: &'a Store,
}

impl Flattener<'_> {
    fn cell(&self, mut at: (Name, u64)) -> Result<(&HeapValue, (Name, u64)), LayoutError> {
        let limit = self.s.total_cells() + 1;
        for _ in 0..=limit {
            let hv = self
                .s
                .cell(&at.0, at.1)
                .ok_or_else(|| LayoutError::IncompleteValue {
                    region: at.0.clone(),
                    index: at.1,
                })?;
            match hv {
                HeapValue::Indirection(r, i) => at = (r.clone(), *i),
                _ => return Ok((hv, at)),
            }
        }
        Err(LayoutError::IncompleteValue {
            region: at.0,
            index: at.1,
        })
    }

    /// The value and the position just past it.
    fn value(
        &self,
        ty: &Ty,
        at: (Name, u64),
    ) -> Result<(CanonicalValue, (Name, u64)), LayoutError> {
        let (hv, (r, i)) = self.cell(at)?;
        match (ty, hv) {
            (Ty::Int, HeapValue::Scalar(n)) => Ok((CanonicalValue::Leaf(*n), (r, i + 1))),
            (Ty::Con(_), HeapValue::Tag(k)) => {
                let info = self
                    .env
                    .con(k)
                    .ok_or_else(|| LayoutError::UnknownConstructor(k.clone()))?;
                let mut pos = (r, i + 1);
                let mut children = Vec::with_capacity(info.fields.len());
                for f in &info.fields {
                    let (v, next) = self.value(f, pos)?;
                    children.push(v);
                    pos = next;
                }
                Ok((CanonicalValue::Node(k.clone(), children), pos))
            }
            _ => Err(LayoutError::IncompleteValue {
                region: r,
                index: i,
            }),
        }
    }
}

/// How fragmented a store is.
#[derive(Clone, Debug, PartialEq)]
pub struct FragReport {
    pub total_regions: u64,
    pub extra_regions: u64,
    pub indirections: u64,
    pub total_cells: u64,
    /// `1 - indirections / total_cells`.
    pub serialized_fraction: f64,
    pub total_bytes: u64,
    pub link_bytes: u64,
    /// `1 - link_bytes / total_bytes` under the byte encoding.
    pub serialized_byte_fraction: f64,
}

pub fn fragmentation_report(s: &Store, metrics: &Metrics) -> FragReport {
    let mut rep = FragReport {
        total_regions: 0,
        extra_regions: metrics.extra_regions,
        indirections: 0,
        total_cells: 0,
        serialized_fraction: 1.0,
        total_bytes: 0,
        link_bytes: 0,
        serialized_byte_fraction: 1.0,
    };
    let mut extra_seen = 0;
    for (_, g) in s.regions() {
        rep.total_regions += 1;
        if g.kind() == RegionKind::Extra {
            extra_seen += 1;
        }
        for (_, hv) in g.heap().iter() {
            rep.total_cells += 1;
            rep.total_bytes += match hv {
                HeapValue::Tag(_) => TAG_BYTES,
                HeapValue::Scalar(_) => SCALAR_BYTES,
                HeapValue::Indirection(..) => {
                    rep.indirections += 1;
                    LINK_BYTES
                }
            } as u64;
        }
    }
    // Extra regions come from the run; a store on its own still knows its
    // own fresh regions.
    rep.extra_regions = rep.extra_regions.max(extra_seen);
    rep.link_bytes = rep.indirections * LINK_BYTES as u64;
    if rep.total_cells > 0 {
        rep.serialized_fraction = 1.0 - rep.indirections as f64 / rep.total_cells as f64;
        rep.serialized_byte_fraction = 1.0 - rep.link_bytes as f64 / rep.total_bytes as f64;
    }
    rep
}

/// Chunk sizing: start at `initial` bytes and multiply by `factor` for each
/// new chunk, never beyond `cap`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChunkPolicy {
    pub initial: usize,
    pub factor: usize,
    pub cap: usize,
}

impl Default for ChunkPolicy {
    fn default() -> Self {
        ChunkPolicy {
            initial: 64,
            factor: 2,
            cap: 1 << 30,
        }
    }
}

impl ChunkPolicy {
    pub fn validate(&self) -> Result<(), LayoutError> {
        if self.initial < LINK_BYTES {
            return Err(LayoutError::BadPolicy("initial chunk smaller than a link"));
        }
        if self.factor < 2 {
            return Err(LayoutError::BadPolicy("growth factor must exceed 1"));
        }
        if self.cap < self.initial {
            return Err(LayoutError::BadPolicy("cap below initial chunk"));
        }
        Ok(())
    }

    fn next(&self, size: usize) -> usize {
        size.saturating_mul(self.factor).min(self.cap)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Preorder bytes in chunks grown by the policy.
    Packed,
    /// Every constructor node in its own chunk.
    PerNode,
    /// Subtrees of height at most `k` packed together in one chunk; every
    /// node above them in its own chunk.
    Bottom(u32),
}

/// A chain of chunks laid out back to back. Offsets are absolute positions
/// in `bytes`; the value starts at offset 0.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Chunks {
    pub bytes: Vec<u8>,
    /// `(start, capacity)` of each chunk.
    pub chunks: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ByteMetrics {
    pub tag_bytes: usize,
    pub scalar_bytes: usize,
    pub link_bytes: usize,
    pub links: usize,
    pub chunk_sizes: Vec<usize>,
}

impl ByteMetrics {
    pub fn used_bytes(&self) -> usize {
        self.tag_bytes + self.scalar_bytes + self.link_bytes
    }

    pub fn link_share(&self) -> f64 {
        let used = self.used_bytes();
        if used == 0 {
            0.0
        } else {
            self.link_bytes as f64 / used as f64
        }
    }
}

struct Writer<'a> {
    policy: ChunkPolicy,
    out: Chunks,
    metrics: ByteMetrics,
    /// Write position inside the current chunk, and its end.
    pos: usize,
    end: usize,
    env: &'a DataEnv,
}

impl Writer<'_> {
    fn open(&mut self, size: usize) -> usize {
        let start = self.out.bytes.len();
        self.out.bytes.resize(start + size, 0);
        self.out.chunks.push((start, size));
        self.metrics.chunk_sizes.push(size);
        start
    }

    /// Ends the current chunk with a link to a fresh one of at least
    /// `need` usable bytes.
    fn link_to_new(&mut self, need: usize) -> Result<(), LayoutError> {
        let mut size = match self.metrics.chunk_sizes.last() {
            Some(&s) => self.policy.next(s),
            None => self.policy.initial,
        };
        while size < need + LINK_BYTES {
            if size >= self.policy.cap {
                return Err(LayoutError::ValueTooLarge {
                    bytes: need,
                    cap: self.policy.cap,
                });
            }
            size = self.policy.next(size);
        }
        let start = self.open(size);
        self.link(start);
        self.pos = start;
        self.end = start + size;
        Ok(())
    }

    fn link(&mut self, target: usize) {
        let at = self.pos;
        self.out.bytes[at] = LINK_MARK;
        self.out.bytes[at + 1..at + LINK_BYTES].copy_from_slice(&(target as u64).to_le_bytes());
        self.metrics.link_bytes += LINK_BYTES;
        self.metrics.links += 1;
    }

    /// Appends a node's tag and scalars to `out`, counting them.
    fn encode(&mut self, out: &mut Vec<u8>, info: &ConInfo, scalars: &[i64]) {
        out.push(info.code);
        self.metrics.tag_bytes += TAG_BYTES;
        for n in scalars {
            out.extend_from_slice(&n.to_le_bytes());
            self.metrics.scalar_bytes += SCALAR_BYTES;
        }
    }

    fn node(&mut self, info: &ConInfo, scalars: &[i64]) {
        self.out.bytes[self.pos] = info.code;
        self.pos += TAG_BYTES;
        self.metrics.tag_bytes += TAG_BYTES;
        for n in scalars {
            self.out.bytes[self.pos..self.pos + SCALAR_BYTES].copy_from_slice(&n.to_le_bytes());
            self.pos += SCALAR_BYTES;
            self.metrics.scalar_bytes += SCALAR_BYTES;
        }
    }
}

fn node_parts<'v, 'e>(
    env: &'e DataEnv,
    v: &'v CanonicalValue,
) -> Result<(&'e ConInfo, Vec<i64>, Vec<&'v CanonicalValue>), LayoutError> {
    let CanonicalValue::Node(k, cs) = v else {
        return Err(malformed(0, "a scalar has no constructor to serialize"));
    };
    let info = env
        .con(k)
        .ok_or_else(|| LayoutError::UnknownConstructor(k.clone()))?;
    let s = info.scalar_prefix();
    if cs.len() != info.fields.len() {
        return Err(malformed(0, "constructor arity"));
    }
    let mut scalars = Vec::with_capacity(s);
    for c in &cs[..s] {
        match c {
            CanonicalValue::Leaf(n) => scalars.push(*n),
            CanonicalValue::Node(..) => return Err(malformed(0, "expected a scalar field")),
        }
    }
    Ok((info, scalars, cs[s..].iter().collect()))
}

fn height(v: &CanonicalValue) -> u32 {
    match v {
        CanonicalValue::Leaf(_) => 0,
        CanonicalValue::Node(_, cs) => cs
            .iter()
            .filter(|c| matches!(c, CanonicalValue::Node(..)))
            .map(|c| 1 + height(c))
            .max()
            .unwrap_or(0),
    }
}

/// Serializes `v` into a chunk chain. Chunk capacity beyond what the data
/// needs stays zeroed.
pub fn byte_serialize(
    env: &DataEnv,
    v: &CanonicalValue,
    policy: ChunkPolicy,
    mode: Mode,
) -> Result<(Chunks, ByteMetrics), LayoutError> {
    policy.validate()?;
    let mut w = Writer {
        policy,
        out: Chunks::default(),
        metrics: ByteMetrics::default(),
        pos: 0,
        end: 0,
        env,
    };
    match mode {
        Mode::Packed => {
            let start = w.open(policy.initial);
            w.pos = start;
            w.end = start + policy.initial;
            packed(&mut w, v)?;
        }
        Mode::PerNode => per_node(&mut w, v, 0)?,
        Mode::Bottom(k) => per_node(&mut w, v, k + 1)?,
    }
    Ok((w.out, w.metrics))
}

fn packed(w: &mut Writer<'_>, root: &CanonicalValue) -> Result<(), LayoutError> {
    let mut stack = alloc::vec![root];
    while let Some(v) = stack.pop() {
        let (info, scalars, kids) = node_parts(w.env, v)?;
        let need = TAG_BYTES + SCALAR_BYTES * scalars.len();
        // Always leave room for a link after this node.
        if w.pos + need + LINK_BYTES > w.end {
            w.link_to_new(need)?;
        }
        w.node(info, &scalars);
        stack.extend(kids.into_iter().rev());
    }
    Ok(())
}

/// Per-node layout, except that subtrees of height below `packed_below`
/// share one chunk. Chunks other than the root's are placed in a fixed
/// pseudo-random order, as independently allocated nodes end up, and each
/// one links to the chunk holding the next node in preorder.
fn per_node(
    w: &mut Writer<'_>,
    root: &CanonicalValue,
    packed_below: u32,
) -> Result<(), LayoutError> {
    // Chunk contents in preorder: (content start, length).
    let mut content = Vec::new();
    let mut units: Vec<(usize, usize)> = Vec::new();
    let mut stack = alloc::vec![root];
    while let Some(v) = stack.pop() {
        let start = content.len();
        if packed_below > 0 && height(v) < packed_below {
            let mut inner = alloc::vec![v];
            while let Some(u) = inner.pop() {
                let (info, scalars, kids) = node_parts(w.env, u)?;
                w.encode(&mut content, info, &scalars);
                inner.extend(kids.into_iter().rev());
            }
        } else {
            let (info, scalars, kids) = node_parts(w.env, v)?;
            w.encode(&mut content, info, &scalars);
            stack.extend(kids.into_iter().rev());
        }
        let need = content.len() - start;
        if need + LINK_BYTES > w.policy.cap {
            return Err(LayoutError::ValueTooLarge {
                bytes: need,
                cap: w.policy.cap,
            });
        }
        units.push((start, need));
    }
    let mut placement: Vec<usize> = (0..units.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(PLACEMENT_SEED);
    for i in (2..placement.len()).rev() {
        let j = 1 + ((u128::from(rng.next_u64()) * i as u128) >> 64) as usize;
        placement.swap(i, j);
    }
    let mut offset = alloc::vec![0; units.len()];
    for &u in &placement {
        offset[u] = w.open(units[u].1 + LINK_BYTES);
    }
    for (u, &(start, len)) in units.iter().enumerate() {
        let at = offset[u];
        w.out.bytes[at..at + len].copy_from_slice(&content[start..start + len]);
        if let Some(&next) = offset.get(u + 1) {
            w.pos = at + len;
            w.link(next);
        }
    }
    Ok(())
}

/// Reading cursor over a chunk chain.
struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    hops: usize,
}

impl Cursor<'_> {
    /// Follows links, then reads a tag byte.
    fn tag(&mut self) -> Result<u8, LayoutError> {
        loop {
            let b = *self
                .bytes
                .get(self.pos)
                .ok_or_else(|| malformed(self.pos, "truncated before a tag"))?;
            if b != LINK_MARK {
                self.pos += 1;
                return Ok(b);
            }
            let raw = self
                .bytes
                .get(self.pos + 1..self.pos + LINK_BYTES)
                .ok_or_else(|| malformed(self.pos, "truncated link"))?;
            let target = u64::from_le_bytes(raw.try_into().expect("eight bytes"));
            self.hops += 1;
            if self.hops > self.bytes.len() {
                return Err(malformed(self.pos, "link cycle"));
            }
            self.pos =
                usize::try_from(target).map_err(|_| malformed(self.pos, "link out of range"))?;
        }
    }

    fn scalar(&mut self) -> Result<i64, LayoutError> {
        let raw = self
            .bytes
            .get(self.pos..self.pos + SCALAR_BYTES)
            .ok_or_else(|| malformed(self.pos, "truncated scalar"))?;
        self.pos += SCALAR_BYTES;
        Ok(i64::from_le_bytes(raw.try_into().expect("eight bytes")))
    }
}

fn con_at(env: &DataEnv, code: u8, offset: usize) -> Result<&ConInfo, LayoutError> {
    env.con_by_code(code)
        .ok_or_else(|| malformed(offset, "unknown constructor code"))
}

/// Rebuilds the canonical value from its bytes.
pub fn byte_parse(env: &DataEnv, bytes: &[u8]) -> Result<CanonicalValue, LayoutError> {
    struct Frame {
        tag: Name,
        children: Vec<CanonicalValue>,
        remaining: usize,
    }
    let mut cur = Cursor {
        bytes,
        pos: 0,
        hops: 0,
    };
    let mut stack: Vec<Frame> = Vec::new();
    loop {
        let at = cur.pos;
        let info = con_at(env, cur.tag()?, at)?;
        let s = info.scalar_prefix();
        let mut children = Vec::with_capacity(info.fields.len());
        for _ in 0..s {
            children.push(CanonicalValue::Leaf(cur.scalar()?));
        }
        let mut done = Frame {
            tag: info.tag.clone(),
            children,
            remaining: info.fields.len() - s,
        };
        // Close every frame that is now full.
        while done.remaining == 0 {
            let v = CanonicalValue::Node(done.tag, done.children);
            match stack.pop() {
                None => return Ok(v),
                Some(mut parent) => {
                    parent.children.push(v);
                    parent.remaining -= 1;
                    done = parent;
                }
            }
        }
        stack.push(done);
    }
}

/// What a traversal computes: constructor nodes without packed fields, and
/// the wrapping sum of every scalar.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Aggregate {
    pub leaves: u64,
    pub sum: i64,
}

/// Single pass over the bytes; no tree is built.
pub fn traverse_bytes(env: &DataEnv, bytes: &[u8]) -> Result<Aggregate, LayoutError> {
    let table: Vec<Option<(usize, usize)>> = (0..=u8::MAX)
        .map(|c| {
            env.con_by_code(c)
                .map(|i| (i.scalar_prefix(), i.fields.len() - i.scalar_prefix()))
        })
        .collect();
    let mut cur = Cursor {
        bytes,
        pos: 0,
        hops: 0,
    };
    let mut agg = Aggregate::default();
    let mut pending = 1usize;
    while pending > 0 {
        let at = cur.pos;
        let code = cur.tag()?;
        let (s, p) =
            table[usize::from(code)].ok_or_else(|| malformed(at, "unknown constructor code"))?;
        for _ in 0..s {
            agg.sum = agg.sum.wrapping_add(cur.scalar()?);
        }
        if p == 0 {
            agg.leaves += 1;
        }
        pending = pending - 1 + p;
    }
    Ok(agg)
}

/// `LCP1`, chunk count, then each chunk as a length and its bytes; all
/// integers are u64 little-endian.
pub fn encode_chunk_file(c: &Chunks) -> Vec<u8> {
    let mut out = Vec::with_capacity(c.bytes.len() + 12 + 8 * c.chunks.len());
    out.extend_from_slice(b"LCP1");
    out.extend_from_slice(&(c.chunks.len() as u64).to_le_bytes());
    for &(start, len) in &c.chunks {
        out.extend_from_slice(&(len as u64).to_le_bytes());
        out.extend_from_slice(&c.bytes[start..start + len]);
    }
    out
}

pub fn decode_chunk_file(data: &[u8]) -> Result<Chunks, LayoutError> {
    let word = |at: usize| -> Result<usize, LayoutError> {
        let raw = data
            .get(at..at + 8)
            .ok_or_else(|| malformed(at, "truncated header"))?;
        usize::try_from(u64::from_le_bytes(raw.try_into().expect("eight bytes")))
            .map_err(|_| malformed(at, "length overflow"))
    };
    if data.get(..4) != Some(b"LCP1".as_slice()) {
        return Err(malformed(0, "missing LCP1 magic"));
    }
    let count = word(4)?;
    let mut at = 12;
    let mut out = Chunks::default();
    for _ in 0..count {
        let len = word(at)?;
        at += 8;
        let body = data
            .get(at..at + len)
            .ok_or_else(|| malformed(at, "truncated chunk"))?;
        out.chunks.push((out.bytes.len(), len));
        out.bytes.extend_from_slice(body);
        at += len;
    }
    if at != data.len() {
        return Err(malformed(at, "trailing bytes"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse_program;

    fn env() -> DataEnv {
        let p = parse_program("data Exp = Lit Int | Plus Exp Exp\nmain = 0").unwrap();
        DataEnv::new(&p.datadecls).unwrap()
    }

    fn lit(n: i64) -> CanonicalValue {
        CanonicalValue::Node(Name::new("Lit"), alloc::vec![CanonicalValue::Leaf(n)])
    }

    fn plus(a: CanonicalValue, b: CanonicalValue) -> CanonicalValue {
        CanonicalValue::Node(Name::new("Plus"), alloc::vec![a, b])
    }

    #[test]
    fn packed_small_value_is_one_chunk() {
        let v = plus(lit(20), lit(22));
        let (c, m) = byte_serialize(&env(), &v, ChunkPolicy::default(), Mode::Packed).unwrap();
        assert_eq!(c.chunks.len(), 1);
        assert_eq!(m.used_bytes(), 19);
        assert_eq!(byte_parse(&env(), &c.bytes).unwrap(), v);
    }

    #[test]
    fn per_node_chains_links() {
        let v = plus(lit(20), lit(22));
        let (c, m) = byte_serialize(&env(), &v, ChunkPolicy::default(), Mode::PerNode).unwrap();
        assert_eq!((c.chunks.len(), m.links), (3, 2));
        assert_eq!(
            traverse_bytes(&env(), &c.bytes).unwrap(),
            Aggregate { leaves: 2, sum: 42 }
        );
    }

    #[test]
    fn display_reads_like_source() {
        assert_eq!(
            alloc::format!("{}", plus(lit(20), lit(-1))),
            "Plus (Lit 20) (Lit (-1))"
        );
    }
}
