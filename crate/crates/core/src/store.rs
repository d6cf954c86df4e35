//! The knowledge graph as a sparse binary 3-way tensor in coordinate form.
//!
//! A [`TripleStore`] holds the deduplicated list of observed (subject,
//! relation, object) coordinates in first-occurrence order, an exact
//! membership set keyed on a packed 64-bit coordinate, and the two
//! per-pair indexes used to build filter sets at evaluation time.

use std::collections::{HashMap, HashSet};
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct EntityId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct RelationId(pub u32);

impl EntityId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// One coordinate of the triple tensor. Subject and object index the same
/// entity axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub subject: EntityId,
    pub relation: RelationId,
    pub object: EntityId,
}

impl Triple {
    pub fn new(subject: u32, relation: u32, object: u32) -> Self {
        Self {
            subject: EntityId(subject),
            relation: RelationId(relation),
            object: EntityId(object),
        }
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.subject.0, self.relation.0, self.object.0)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StoreError {
    #[error("line {line}: triple ({subject}, {relation}, {object}) out of range for n_e={n_e}, n_r={n_r}")]
    OutOfRange {
        line: usize,
        subject: u32,
        relation: u32,
        object: u32,
        n_e: usize,
        n_r: usize,
    },
    #[error("coordinate space n_e^2 * n_r = {n_e}^2 * {n_r} does not fit in 64 bits")]
    KeySpaceOverflow { n_e: usize, n_r: usize },
}

/// Mixed-radix packing of a coordinate: `(s * n_r + r) * n_e + o`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct KeyPacker {
    n_e: u64,
    n_r: u64,
}

impl KeyPacker {
    fn new(n_e: usize, n_r: usize) -> Result<Self, StoreError> {
        let fits = (n_e as u128)
            .checked_mul(n_e as u128)
            .and_then(|v| v.checked_mul(n_r as u128))
            .is_some_and(|v| v <= u64::MAX as u128);
        if !fits {
            return Err(StoreError::KeySpaceOverflow { n_e, n_r });
        }
        Ok(Self {
            n_e: n_e as u64,
            n_r: n_r as u64,
        })
    }

    #[inline]
    fn pack(&self, t: &Triple) -> u64 {
        (t.subject.0 as u64 * self.n_r + t.relation.0 as u64) * self.n_e + t.object.0 as u64
    }
}

/// Immutable after construction; `Sync`, so evaluation workers can share it.
#[derive(Debug, Clone)]
pub struct TripleStore {
    n_e: usize,
    n_r: usize,
    triples: Vec<Triple>,
    packer: KeyPacker,
    membership: HashSet<u64>,
    objects: HashMap<(EntityId, RelationId), Vec<EntityId>>,
    subjects: HashMap<(RelationId, EntityId), Vec<EntityId>>,
    duplicates: usize,
}

impl TripleStore {
    /// Builds a store from raw `(subject, relation, object)` ids.
    ///
    /// Duplicates are dropped (the tensor is binary) and counted; the first
    /// occurrence fixes the position in [`TripleStore::triples`]. The error
    /// for an out-of-range id reports its 1-based position in `raw`.
    pub fn build(raw: &[(u32, u32, u32)], n_e: usize, n_r: usize) -> Result<Self, StoreError> {
        let mut store = Self::empty(n_e, n_r)?;
        for (i, &(s, r, o)) in raw.iter().enumerate() {
            if s as usize >= n_e || o as usize >= n_e || r as usize >= n_r {
                return Err(StoreError::OutOfRange {
                    line: i + 1,
                    subject: s,
                    relation: r,
                    object: o,
                    n_e,
                    n_r,
                });
            }
            store.insert(Triple::new(s, r, o));
        }
        if store.duplicates > 0 {
            log::warn!("dropped {} duplicate triples", store.duplicates);
        }
        Ok(store)
    }

    /// Same as [`TripleStore::build`] for already-typed triples.
    pub fn from_triples(triples: &[Triple], n_e: usize, n_r: usize) -> Result<Self, StoreError> {
        let raw: Vec<_> = triples
            .iter()
            .map(|t| (t.subject.0, t.relation.0, t.object.0))
            .collect();
        Self::build(&raw, n_e, n_r)
    }

    pub fn empty(n_e: usize, n_r: usize) -> Result<Self, StoreError> {
        Ok(Self {
            n_e,
            n_r,
            triples: Vec::new(),
            packer: KeyPacker::new(n_e, n_r)?,
            membership: HashSet::new(),
            objects: HashMap::new(),
            subjects: HashMap::new(),
            duplicates: 0,
        })
    }

    /// Union of several stores over the same id space, in argument order.
    pub fn union(stores: &[&TripleStore]) -> Result<Self, StoreError> {
        let n_e = stores.iter().map(|s| s.n_e).max().unwrap_or(0);
        let n_r = stores.iter().map(|s| s.n_r).max().unwrap_or(0);
        let mut out = Self::empty(n_e, n_r)?;
        for store in stores {
            for t in &store.triples {
                out.insert(*t);
            }
        }
        Ok(out)
    }

    fn insert(&mut self, t: Triple) -> bool {
        if !self.membership.insert(self.packer.pack(&t)) {
            self.duplicates += 1;
            return false;
        }
        self.triples.push(t);
        self.objects
            .entry((t.subject, t.relation))
            .or_default()
            .push(t.object);
        self.subjects
            .entry((t.relation, t.object))
            .or_default()
            .push(t.subject);
        true
    }

    #[inline]
    pub fn n_entities(&self) -> usize {
        self.n_e
    }

    #[inline]
    pub fn n_relations(&self) -> usize {
        self.n_r
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    /// Number of duplicate rows dropped while building.
    pub fn duplicates_dropped(&self) -> usize {
        self.duplicates
    }

    /// Exact membership. Ids must be in range.
    #[inline]
    pub fn contains(&self, s: EntityId, r: RelationId, o: EntityId) -> bool {
        debug_assert!(s.index() < self.n_e && o.index() < self.n_e && r.index() < self.n_r);
        self.membership.contains(&self.packer.pack(&Triple {
            subject: s,
            relation: r,
            object: o,
        }))
    }

    #[inline]
    pub fn contains_triple(&self, t: &Triple) -> bool {
        self.contains(t.subject, t.relation, t.object)
    }

    /// Known objects completing `(s, r, ?)`, in insertion order.
    pub fn objects_of(&self, s: EntityId, r: RelationId) -> &[EntityId] {
        self.objects.get(&(s, r)).map_or(&[], Vec::as_slice)
    }

    /// Known subjects completing `(?, r, o)`, in insertion order.
    pub fn subjects_of(&self, r: RelationId, o: EntityId) -> &[EntityId] {
        self.subjects.get(&(r, o)).map_or(&[], Vec::as_slice)
    }
}

impl PartialEq for TripleStore {
    /// Two stores are equal when they hold the same triples in the same
    /// order over the same id space; the indexes are derived data.
    fn eq(&self, other: &Self) -> bool {
        self.n_e == other.n_e && self.n_r == other.n_r && self.triples == other.triples
    }
}
