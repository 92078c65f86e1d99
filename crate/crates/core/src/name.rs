//! Interned-by-refcount identifiers and the fresh-name supply.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;
use core::fmt::Write as _;

/// An identifier: variable, location, region, constructor or ivar name.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Name(Arc<str>);

impl Name {
    pub fn new(s: &str) -> Self {
        Name(Arc::from(s))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// The user-visible part of a generated name (`r'1_2'7` has base `r`).
    pub fn base(&self) -> &str {
        match self.0.find('\'') {
            Some(i) if i > 0 => &self.0[..i],
            _ => &self.0,
        }
    }
}

impl From<&str> for Name {
    fn from(s: &str) -> Self {
        Name::new(s)
    }
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Deterministic supply of fresh names, scoped by task path.
///
/// Each task owns its own supply, so the names a task generates depend only
/// on its own trajectory and never on how tasks were interleaved.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Fresh {
    path: Vec<u32>,
    next: u64,
}

impl Fresh {
    pub fn root() -> Self {
        Fresh {
            path: Vec::new(),
            next: 0,
        }
    }

    pub fn scoped(path: &[u32]) -> Self {
        Fresh {
            path: path.to_vec(),
            next: 0,
        }
    }

    pub fn name(&mut self, base: &str) -> Name {
        let n = self.bump();
        let mut s = String::from(base);
        s.push('\'');
        for (k, p) in self.path.iter().enumerate() {
            if k > 0 {
                s.push('_');
            }
            let _ = write!(s, "{p}");
        }
        if !self.path.is_empty() {
            s.push('\'');
        }
        let _ = write!(s, "{n}");
        Name(Arc::from(s.as_str()))
    }

    /// Ordering key for things created by this supply (regions, mostly).
    pub fn stamp(&mut self) -> Stamp {
        let n = self.bump();
        let mut key = self.path.clone();
        key.push(u32::MAX);
        Stamp { key, seq: n }
    }

    fn bump(&mut self) -> u64 {
        let n = self.next;
        self.next += 1;
        n
    }
}

/// Creation-order key: task path first, then the task-local counter.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Stamp {
    key: Vec<u32>,
    seq: u64,
}
