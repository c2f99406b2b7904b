//! Token-group matrix: one bit per (token, group), set when some set in the
//! group contains the token. Rows are token-major so a query touches one
//! contiguous bit-vector per token.

use crate::error::{Error, Result};
use crate::l2p::PartitionHierarchy;
use crate::measure::{bound_from_sizes, Semantics, SimilarityMeasure};
use crate::score::Score;
use crate::set::{Database, GroupId, Partition, SetRecord, TokenId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tgm {
    n: usize,
    universe_size: usize,
    words: usize,
    rows: Vec<u64>,
    members: Vec<Vec<u32>>,
}

impl Tgm {
    /// Builds the matrix for partition `p` of `db`.
    pub fn build(db: &Database, p: &Partition) -> Self {
        let members = p.groups();
        let mut tgm = Self::empty(p.num_groups(), db.universe_size());
        for (g, list) in members.iter().enumerate() {
            for &s in list {
                for t in db.get(s).token_ids() {
                    tgm.set(t, g);
                }
            }
        }
        tgm.members = members;
        tgm
    }

    pub(crate) fn empty(n: usize, universe_size: usize) -> Self {
        let words = n.div_ceil(64);
        Self {
            n,
            universe_size,
            words,
            rows: vec![0; universe_size * words],
            members: vec![Vec::new(); n],
        }
    }

    pub(crate) fn set_members(&mut self, members: Vec<Vec<u32>>) {
        debug_assert_eq!(members.len(), self.n);
        self.members = members;
    }

    #[inline]
    pub fn num_groups(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn universe_size(&self) -> usize {
        self.universe_size
    }

    pub fn num_sets(&self) -> usize {
        self.members.iter().map(Vec::len).sum()
    }

    #[inline]
    pub fn members(&self, g: usize) -> &[u32] {
        &self.members[g]
    }

    pub fn all_members(&self) -> &[Vec<u32>] {
        &self.members
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    /// Partition of `0..num_sets` described by the member lists.
    pub fn partition(&self) -> Partition {
        Partition::from_groups(&self.members, self.num_sets()).expect("members form a partition")
    }

    /// Row of token `t` as little-endian 64-bit words over groups.
    #[inline]
    pub fn row(&self, t: TokenId) -> &[u64] {
        let start = t.index() * self.words;
        &self.rows[start..start + self.words]
    }

    #[inline]
    pub fn get(&self, t: TokenId, g: usize) -> bool {
        t.index() < self.universe_size && self.row(t)[g / 64] >> (g % 64) & 1 == 1
    }

    #[inline]
    pub(crate) fn set(&mut self, t: TokenId, g: usize) {
        self.rows[t.index() * self.words + g / 64] |= 1 << (g % 64);
    }

    /// Ids of the groups whose bit is set in the row of `t`, ascending.
    pub fn row_groups(&self, t: TokenId) -> Vec<u32> {
        let mut out = Vec::new();
        for (w, &word) in self.row(t).iter().enumerate() {
            let mut bits = word;
            while bits != 0 {
                out.push((w * 64 + bits.trailing_zeros() as usize) as u32);
                bits &= bits - 1;
            }
        }
        out
    }

    pub(crate) fn grow_universe(&mut self, universe_size: usize) {
        if universe_size > self.universe_size {
            self.rows.resize(universe_size * self.words, 0);
            self.universe_size = universe_size;
        }
    }

    /// Records `s` (already numbered `id`) as a member of group `g`.
    pub(crate) fn add_member(&mut self, g: usize, id: u32, s: &SetRecord) {
        self.grow_universe(s.max_token().index() + 1);
        for t in s.token_ids() {
            self.set(t, g);
        }
        let list = &mut self.members[g];
        let pos = list.partition_point(|&x| x < id);
        list.insert(pos, id);
    }

    /// Per-group overlap `r` between `q` and each group's token union,
    /// weighted by query multiplicity under bag semantics.
    pub fn overlaps(&self, q: &SetRecord, semantics: Semantics) -> Vec<u64> {
        let mut counts = vec![0u64; self.n];
        for &(t, c) in q.tokens() {
            if t.index() >= self.universe_size {
                continue;
            }
            let w = weight(c, semantics);
            for (i, &word) in self.row(t).iter().enumerate() {
                let mut bits = word;
                while bits != 0 {
                    counts[i * 64 + bits.trailing_zeros() as usize] += w;
                    bits &= bits - 1;
                }
            }
        }
        counts
    }

    /// Overlap between `q` and a single group's token union.
    pub fn overlap_with(&self, q: &SetRecord, g: usize, semantics: Semantics) -> u64 {
        q.tokens()
            .iter()
            .filter(|(t, _)| self.get(*t, g))
            .map(|&(_, c)| weight(c, semantics))
            .sum()
    }

    /// Similarity upper bound between `q` and every group.
    pub fn upper_bounds(&self, q: &SetRecord, m: SimilarityMeasure) -> Vec<Score> {
        let q_size = m.size_of(q);
        self.overlaps(q, m.semantics)
            .into_iter()
            .map(|r| bound_from_sizes(q_size, r, m))
            .collect()
    }

    /// Whether every bit agrees with the member lists in both directions.
    pub fn is_consistent_with(&self, db: &Database) -> bool {
        let mut expected = Self::empty(self.n, self.universe_size.max(db.universe_size()));
        for (g, list) in self.members.iter().enumerate() {
            for &s in list {
                if s as usize >= db.len() {
                    return false;
                }
                for t in db.get(s).token_ids() {
                    expected.set(t, g);
                }
            }
        }
        expected.members = self.members.clone();
        expected.universe_size == self.universe_size && expected == *self
    }
}

#[inline]
fn weight(count: u32, semantics: Semantics) -> u64 {
    match semantics {
        Semantics::Set => 1,
        Semantics::Bag => count as u64,
    }
}

/// Matrices for several hierarchy levels, coarsest first, with the child
/// lists linking each tier to the next.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Htgm {
    levels: Vec<usize>,
    tiers: Vec<Tgm>,
    /// `children[i][g]`: groups of tier `i + 1` under group `g` of tier `i`.
    children: Vec<Vec<Vec<u32>>>,
    /// `parents[i][g]`: group of tier `i` above group `g` of tier `i + 1`.
    parents: Vec<Vec<u32>>,
}

impl Htgm {
    /// Builds one matrix per selected hierarchy level.
    pub fn build(db: &Database, h: &PartitionHierarchy, levels: &[usize]) -> Result<Self> {
        validate_levels(levels, h.num_levels())?;
        let fine = Tgm::build(db, h.level(*levels.last().expect("non-empty")));
        let children = levels.windows(2).map(|w| h.descendants(w[0], w[1])).collect();
        Self::from_finest(fine, levels.to_vec(), children)
    }

    /// Rebuilds coarse tiers by OR-ing child rows and merging member lists.
    pub fn from_finest(fine: Tgm, levels: Vec<usize>, children: Vec<Vec<Vec<u32>>>) -> Result<Self> {
        if levels.is_empty() || children.len() + 1 != levels.len() {
            return Err(Error::InvalidArgument("tier count does not match child lists".into()));
        }
        let mut tiers = vec![fine];
        let mut parents = Vec::new();
        for kids in children.iter().rev() {
            let below = tiers.last().expect("non-empty");
            let mut parent = vec![u32::MAX; below.n];
            for (g, list) in kids.iter().enumerate() {
                for &c in list {
                    let slot = parent.get_mut(c as usize).ok_or_else(|| {
                        Error::InvalidArgument(format!("child {c} out of range"))
                    })?;
                    if *slot != u32::MAX {
                        return Err(Error::InvalidArgument(format!("group {c} has two parents")));
                    }
                    *slot = g as u32;
                }
            }
            if parent.contains(&u32::MAX) {
                return Err(Error::InvalidArgument("orphan group in hierarchy".into()));
            }
            let mut coarse = Tgm::empty(kids.len(), below.universe_size);
            for (g, list) in kids.iter().enumerate() {
                let (lo, hi) = (g / 64, 1u64 << (g % 64));
                for t in 0..below.universe_size {
                    let t = TokenId(t as u32);
                    if list.iter().any(|&c| below.get(t, c as usize)) {
                        coarse.rows[t.index() * coarse.words + lo] |= hi;
                    }
                }
                let mut merged: Vec<u32> =
                    list.iter().flat_map(|&c| below.members[c as usize].iter().copied()).collect();
                merged.sort_unstable();
                coarse.members[g] = merged;
            }
            parents.push(parent);
            tiers.push(coarse);
        }
        tiers.reverse();
        parents.reverse();
        Ok(Self { levels, tiers, children, parents })
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    pub fn num_tiers(&self) -> usize {
        self.tiers.len()
    }

    pub fn tier(&self, i: usize) -> &Tgm {
        &self.tiers[i]
    }

    pub fn finest(&self) -> &Tgm {
        self.tiers.last().expect("non-empty")
    }

    pub fn children(&self, tier: usize, g: usize) -> &[u32] {
        &self.children[tier][g]
    }

    pub fn child_lists(&self, tier: usize) -> &[Vec<u32>] {
        &self.children[tier]
    }

    fn grow_universe(&mut self, universe_size: usize) {
        self.tiers.iter_mut().for_each(|t| t.grow_universe(universe_size));
    }

    fn add_member(&mut self, g: usize, id: u32, s: &SetRecord) {
        let mut g = g;
        for tier in (0..self.tiers.len()).rev() {
            self.tiers[tier].add_member(g, id, s);
            if tier > 0 {
                g = self.parents[tier - 1][g] as usize;
            }
        }
    }
}

fn validate_levels(levels: &[usize], available: usize) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::InvalidArgument("no levels selected".into()));
    }
    if levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("levels must be strictly increasing".into()));
    }
    if let Some(&l) = levels.iter().find(|&&l| l >= available) {
        return Err(Error::InvalidArgument(format!(
            "level {l} not in hierarchy of {available} levels"
        )));
    }
    Ok(())
}

/// Whether an insert may add tokens outside the current universe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UniverseMode {
    Closed,
    Open,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Layout {
    Flat(Tgm),
    Hierarchical(Htgm),
}

/// A searchable index: a flat or hierarchical matrix plus the measure it
/// was built for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Index {
    pub measure: SimilarityMeasure,
    pub layout: Layout,
}

impl Index {
    pub fn flat(db: &Database, p: &Partition, measure: SimilarityMeasure) -> Self {
        Self { measure, layout: Layout::Flat(Tgm::build(db, p)) }
    }

    pub fn hierarchical(
        db: &Database,
        h: &PartitionHierarchy,
        levels: &[usize],
        measure: SimilarityMeasure,
    ) -> Result<Self> {
        Ok(Self { measure, layout: Layout::Hierarchical(Htgm::build(db, h, levels)?) })
    }

    /// The matrix over the groups that hold sets directly.
    pub fn finest(&self) -> &Tgm {
        match &self.layout {
            Layout::Flat(t) => t,
            Layout::Hierarchical(h) => h.finest(),
        }
    }

    pub fn is_hierarchical(&self) -> bool {
        matches!(self.layout, Layout::Hierarchical(_))
    }

    pub fn num_sets(&self) -> usize {
        self.finest().num_sets()
    }

    pub fn universe_size(&self) -> usize {
        self.finest().universe_size()
    }

    /// Picks the group for `s`, appends `s` to `db` and updates every tier.
    ///
    /// The group maximising the upper bound wins, ties going to the smaller
    /// group and then the lower id. In open mode a set sharing no token with
    /// the indexed universe goes to the smallest group.
    pub fn update_insert(&mut self, db: &mut Database, s: SetRecord, mode: UniverseMode) -> Result<GroupId> {
        if db.len() != self.num_sets() {
            return Err(Error::InvalidArgument(format!(
                "index holds {} sets but database has {}",
                self.num_sets(),
                db.len()
            )));
        }
        let fine = self.finest();
        let universe = fine.universe_size();
        let unknown = s.token_ids().find(|t| t.index() >= universe);
        if let (UniverseMode::Closed, Some(t)) = (mode, unknown) {
            return Err(Error::UnknownToken { token: t.0.to_string(), universe });
        }
        let sizes = fine.group_sizes();
        let known = s.token_ids().any(|t| t.index() < universe);
        let g = if !known {
            (0..sizes.len()).min_by_key(|&g| (sizes[g], g))
        } else {
            let ubs = fine.upper_bounds(&s, self.measure);
            (0..sizes.len()).min_by(|&a, &b| {
                ubs[b].cmp(&ubs[a]).then(sizes[a].cmp(&sizes[b])).then(a.cmp(&b))
            })
        }
        .ok_or_else(|| Error::InvalidArgument("index has no groups".into()))?;

        let id = db.push(s);
        let s = db.get(id).clone();
        let new_universe = db.universe_size();
        match &mut self.layout {
            Layout::Flat(t) => t.add_member(g, id, &s),
            Layout::Hierarchical(h) => {
                h.grow_universe(new_universe);
                h.add_member(g, id, &s);
            }
        }
        Ok(GroupId(g as u32))
    }
}
