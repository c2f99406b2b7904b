//! Set records, databases and partitions.

use std::fmt;

use crate::error::{Error, Result};

/// Dense token identifier in `[0, universe_size)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TokenId(pub u32);

impl TokenId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Dense group identifier in `[0, n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroupId(pub u32);

impl GroupId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// A database entry: an identifier and a token multiset stored as
/// `(token, count)` pairs with strictly increasing tokens.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SetRecord {
    id: u32,
    tokens: Vec<(TokenId, u32)>,
}

impl SetRecord {
    /// Builds a record from already sorted, deduplicated `(token, count)` pairs.
    pub fn new(id: u32, tokens: Vec<(TokenId, u32)>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::InvalidRecord(format!("set {id} is empty")));
        }
        for pair in tokens.windows(2) {
            if pair[0].0 >= pair[1].0 {
                return Err(Error::InvalidRecord(format!(
                    "set {id}: tokens not strictly increasing ({} then {})",
                    pair[0].0, pair[1].0
                )));
            }
        }
        if let Some((t, _)) = tokens.iter().find(|(_, c)| *c == 0) {
            return Err(Error::InvalidRecord(format!("set {id}: token {t} has count 0")));
        }
        Ok(Self { id, tokens })
    }

    /// Builds a record from an arbitrary token sequence; repeated tokens
    /// become multiplicities.
    pub fn from_tokens<I>(id: u32, tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = u32>,
    {
        let mut raw: Vec<u32> = tokens.into_iter().collect();
        raw.sort_unstable();
        let mut pairs: Vec<(TokenId, u32)> = Vec::with_capacity(raw.len());
        for t in raw {
            match pairs.last_mut() {
                Some((last, c)) if last.0 == t => *c += 1,
                _ => pairs.push((TokenId(t), 1)),
            }
        }
        Self::new(id, pairs)
    }

    #[inline]
    pub fn id(&self) -> u32 {
        self.id
    }

    pub(crate) fn with_id(mut self, id: u32) -> Self {
        self.id = id;
        self
    }

    #[inline]
    pub fn tokens(&self) -> &[(TokenId, u32)] {
        &self.tokens
    }

    pub fn token_ids(&self) -> impl Iterator<Item = TokenId> + '_ {
        self.tokens.iter().map(|(t, _)| *t)
    }

    /// Number of distinct tokens.
    #[inline]
    pub fn distinct_len(&self) -> u64 {
        self.tokens.len() as u64
    }

    /// Total token count including multiplicities.
    pub fn total_len(&self) -> u64 {
        self.tokens.iter().map(|(_, c)| *c as u64).sum()
    }

    pub fn min_token(&self) -> TokenId {
        self.tokens[0].0
    }

    pub fn max_token(&self) -> TokenId {
        self.tokens[self.tokens.len() - 1].0
    }

    pub fn contains(&self, t: TokenId) -> bool {
        self.tokens.binary_search_by_key(&t, |(x, _)| *x).is_ok()
    }
}

/// An ordered collection of set records with dense ids over a token universe.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Database {
    records: Vec<SetRecord>,
    universe_size: usize,
}

impl Database {
    pub fn new(records: Vec<SetRecord>, universe_size: usize) -> Result<Self> {
        for (i, r) in records.iter().enumerate() {
            if r.id() as usize != i {
                return Err(Error::InvalidRecord(format!(
                    "record at position {i} has id {}; ids must be dense",
                    r.id()
                )));
            }
            if r.max_token().index() >= universe_size {
                return Err(Error::InvalidRecord(format!(
                    "set {i} holds token {} outside universe of {universe_size}",
                    r.max_token()
                )));
            }
        }
        Ok(Self { records, universe_size })
    }

    /// Builds a database from token lists, assigning ids by position and
    /// sizing the universe to fit.
    pub fn from_token_lists<I, S>(lists: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: IntoIterator<Item = u32>,
    {
        let mut records = Vec::new();
        let mut universe = 0usize;
        for (i, list) in lists.into_iter().enumerate() {
            let r = SetRecord::from_tokens(i as u32, list)?;
            universe = universe.max(r.max_token().index() + 1);
            records.push(r);
        }
        Self::new(records, universe)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.records.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    #[inline]
    pub fn universe_size(&self) -> usize {
        self.universe_size
    }

    #[inline]
    pub fn records(&self) -> &[SetRecord] {
        &self.records
    }

    #[inline]
    pub fn get(&self, id: u32) -> &SetRecord {
        &self.records[id as usize]
    }

    /// Appends a record, renumbering it to the next dense id and widening
    /// the universe when the record introduces new tokens.
    pub fn push(&mut self, record: SetRecord) -> u32 {
        let id = self.records.len() as u32;
        self.universe_size = self.universe_size.max(record.max_token().index() + 1);
        self.records.push(record.with_id(id));
        id
    }

    /// Largest total token count over all records.
    pub fn max_total_len(&self) -> u64 {
        self.records.iter().map(SetRecord::total_len).max().unwrap_or(0)
    }
}

/// Assignment of every set to exactly one of `n` groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    group_of: Vec<GroupId>,
    n: usize,
}

impl Partition {
    pub fn new(group_of: Vec<GroupId>, n: usize) -> Result<Self> {
        if let Some(g) = group_of.iter().find(|g| g.index() >= n) {
            return Err(Error::InvalidArgument(format!(
                "group id {} out of range for {n} groups",
                g.0
            )));
        }
        Ok(Self { group_of, n })
    }

    /// Builds a partition from raw group ids, compacting them to a dense
    /// range in order of first appearance.
    pub fn from_labels(labels: &[u32]) -> Self {
        let mut remap = std::collections::HashMap::new();
        let group_of = labels
            .iter()
            .map(|l| {
                let next = remap.len() as u32;
                GroupId(*remap.entry(*l).or_insert(next))
            })
            .collect();
        Self { group_of, n: remap.len() }
    }

    /// Builds a partition from explicit member lists.
    pub fn from_groups(groups: &[Vec<u32>], num_sets: usize) -> Result<Self> {
        let mut group_of = vec![None; num_sets];
        for (g, members) in groups.iter().enumerate() {
            for &s in members {
                let slot = group_of.get_mut(s as usize).ok_or_else(|| {
                    Error::InvalidArgument(format!("set {s} out of range"))
                })?;
                if slot.is_some() {
                    return Err(Error::InvalidArgument(format!("set {s} assigned twice")));
                }
                *slot = Some(GroupId(g as u32));
            }
        }
        let group_of = group_of
            .into_iter()
            .enumerate()
            .map(|(s, g)| g.ok_or_else(|| Error::InvalidArgument(format!("set {s} unassigned"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(group_of, groups.len())
    }

    #[inline]
    pub fn num_groups(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn num_sets(&self) -> usize {
        self.group_of.len()
    }

    #[inline]
    pub fn group_of(&self, set: u32) -> GroupId {
        self.group_of[set as usize]
    }

    pub fn assignments(&self) -> &[GroupId] {
        &self.group_of
    }

    /// Member lists per group, each in ascending set id order.
    pub fn groups(&self) -> Vec<Vec<u32>> {
        let mut groups = vec![Vec::new(); self.n];
        for (s, g) in self.group_of.iter().enumerate() {
            groups[g.index()].push(s as u32);
        }
        groups
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n];
        for g in &self.group_of {
            sizes[g.index()] += 1;
        }
        sizes
    }

    /// Drops empty groups and renumbers the rest densely, preserving order.
    pub fn compact(&self) -> Self {
        let sizes = self.group_sizes();
        let mut remap = vec![u32::MAX; self.n];
        let mut next = 0;
        for (g, &sz) in sizes.iter().enumerate() {
            if sz > 0 {
                remap[g] = next;
                next += 1;
            }
        }
        Self {
            group_of: self.group_of.iter().map(|g| GroupId(remap[g.index()])).collect(),
            n: next as usize,
        }
    }
}
