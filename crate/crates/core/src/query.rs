//! Exact range and kNN search over an [`Index`], plus the full-scan oracle.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::measure::{bound_from_sizes, similarity, SimilarityMeasure};
use crate::objective::{pruning_efficiency, QueryMode};
use crate::score::Score;
use crate::set::{Database, Partition, SetRecord};
use crate::tgm::{Htgm, Index, Layout, Tgm};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QueryMetrics {
    /// Sets whose similarity was computed.
    pub candidates: usize,
    pub groups_verified: usize,
    /// Finest-level groups never verified.
    pub groups_pruned: usize,
    /// Group bound entries evaluated, over all tiers.
    pub columns_touched: usize,
    /// Entries evaluated in tiers above the finest one.
    pub coarse_columns: usize,
    pub fine_columns: usize,
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryResult {
    /// Sorted by similarity descending, then set id ascending.
    pub hits: Vec<(u32, Score)>,
    pub metrics: QueryMetrics,
}

impl QueryResult {
    /// Pruning efficiency of this result against a database of `db_size`.
    pub fn pruning_efficiency(&self, db_size: usize, mode: QueryMode) -> f64 {
        pruning_efficiency(db_size, self.metrics.candidates, self.hits.len(), mode)
            .expect("every hit is a candidate")
    }

    /// Lowest returned similarity: the k-th for kNN, the weakest hit for range.
    pub fn frontier(&self) -> Option<Score> {
        self.hits.last().map(|&(_, s)| s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QueryKind {
    Knn(usize),
    Range(f64),
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("range threshold {delta} outside (0, 1]")))
    }
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    Ok(())
}

fn sort_hits(hits: &mut [(u32, Score)]) {
    hits.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
}

/// Heap entry ordered so the worst hit (lowest score, then highest id) is on top.
#[derive(PartialEq, Eq)]
struct Worst(Score, u32);

impl Ord for Worst {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.cmp(&self.0).then(self.1.cmp(&other.1))
    }
}

impl PartialOrd for Worst {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct TopK {
    k: usize,
    heap: BinaryHeap<Worst>,
}

impl TopK {
    fn new(k: usize) -> Self {
        Self { k, heap: BinaryHeap::with_capacity(k + 1) }
    }

    fn offer(&mut self, id: u32, s: Score) {
        if self.heap.len() < self.k {
            self.heap.push(Worst(s, id));
        } else if let Some(top) = self.heap.peek() {
            if Worst(s, id) < *top {
                self.heap.pop();
                self.heap.push(Worst(s, id));
            }
        }
    }

    /// Current k-th similarity, once the heap is full.
    fn theta(&self) -> Option<Score> {
        (self.heap.len() == self.k).then(|| self.heap.peek().expect("full").0)
    }

    /// Whether a group bounded by `ub` can still contribute.
    fn worth_visiting(&self, ub: Score) -> bool {
        match self.theta() {
            None => true,
            Some(theta) if theta.is_zero() => ub >= theta,
            Some(theta) => ub > theta,
        }
    }

    fn into_hits(self) -> Vec<(u32, Score)> {
        let mut hits: Vec<_> = self.heap.into_iter().map(|Worst(s, id)| (id, s)).collect();
        sort_hits(&mut hits);
        hits
    }
}

fn has_known_token(q: &SetRecord, universe: usize) -> bool {
    q.token_ids().any(|t| t.index() < universe)
}

/// The first `k` set ids, each at similarity zero: the answer for a query
/// sharing no token with the indexed universe.
fn zero_knn(db: &Database, k: usize, start: Instant) -> QueryResult {
    let n = k.min(db.len());
    QueryResult {
        hits: (0..n as u32).map(|id| (id, Score::ZERO)).collect(),
        metrics: QueryMetrics { candidates: n, elapsed: start.elapsed(), ..Default::default() },
    }
}

pub fn range_search(
    index: &Index,
    db: &Database,
    q: &SetRecord,
    delta: f64,
    m: SimilarityMeasure,
) -> Result<QueryResult> {
    check_delta(delta)?;
    let start = Instant::now();
    let fine = index.finest();
    let mut metrics = QueryMetrics::default();
    if !has_known_token(q, fine.universe_size()) {
        metrics.groups_pruned = fine.num_groups();
        metrics.elapsed = start.elapsed();
        return Ok(QueryResult { hits: Vec::new(), metrics });
    }
    let q_size = m.size_of(q);
    let passes = |r: u64| bound_from_sizes(q_size, r, m).meets(delta);
    let survivors: Vec<usize> = match &index.layout {
        Layout::Flat(t) => {
            metrics.fine_columns = t.num_groups();
            let r = t.overlaps(q, m.semantics);
            (0..t.num_groups()).filter(|&g| passes(r[g])).collect()
        }
        Layout::Hierarchical(h) => {
            let r = h.tier(0).overlaps(q, m.semantics);
            let mut alive: Vec<usize> = (0..r.len()).filter(|&g| passes(r[g])).collect();
            let mut touched = vec![r.len()];
            for tier in 1..h.num_tiers() {
                let t = h.tier(tier);
                let kids: Vec<usize> = alive
                    .iter()
                    .flat_map(|&g| h.children(tier - 1, g).iter().map(|&c| c as usize))
                    .collect();
                touched.push(kids.len());
                alive = kids.into_iter().filter(|&c| passes(t.overlap_with(q, c, m.semantics))).collect();
            }
            metrics.fine_columns = touched.pop().expect("non-empty");
            metrics.coarse_columns = touched.iter().sum();
            alive
        }
    };
    let mut hits = Vec::new();
    for &g in &survivors {
        for &s in fine.members(g) {
            let sim = similarity(q, db.get(s), m);
            if sim.meets(delta) {
                hits.push((s, sim));
            }
        }
        metrics.candidates += fine.members(g).len();
    }
    sort_hits(&mut hits);
    metrics.groups_verified = survivors.len();
    metrics.groups_pruned = fine.num_groups() - survivors.len();
    metrics.columns_touched = metrics.coarse_columns + metrics.fine_columns;
    metrics.elapsed = start.elapsed();
    Ok(QueryResult { hits, metrics })
}

/// Frontier entry: a group at some tier with its bound. Pops in bound
/// descending order, finer tiers first, then lower group id.
#[derive(PartialEq, Eq)]
struct Pending {
    ub: Score,
    tier: usize,
    group: usize,
}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        self.ub
            .cmp(&other.ub)
            .then(self.tier.cmp(&other.tier))
            .then(other.group.cmp(&self.group))
    }
}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn verify_group(fine: &Tgm, db: &Database, q: &SetRecord, g: usize, m: SimilarityMeasure, top: &mut TopK) -> usize {
    let members = fine.members(g);
    for &s in members {
        top.offer(s, similarity(q, db.get(s), m));
    }
    members.len()
}

pub fn knn_search(
    index: &Index,
    db: &Database,
    q: &SetRecord,
    k: usize,
    m: SimilarityMeasure,
) -> Result<QueryResult> {
    check_k(k)?;
    match &index.layout {
        Layout::Flat(t) => Ok(knn_flat(t, db, q, k, m)),
        Layout::Hierarchical(h) => Ok(knn_tiers(h, db, q, k, m)),
    }
}

/// kNN over a hierarchical index; coarse bounds prune whole subtrees before
/// their children's bounds are computed.
pub fn knn_search_htgm(
    htgm: &Htgm,
    db: &Database,
    q: &SetRecord,
    k: usize,
    m: SimilarityMeasure,
) -> Result<QueryResult> {
    check_k(k)?;
    Ok(knn_tiers(htgm, db, q, k, m))
}

fn knn_flat(t: &Tgm, db: &Database, q: &SetRecord, k: usize, m: SimilarityMeasure) -> QueryResult {
    let start = Instant::now();
    if !has_known_token(q, t.universe_size()) {
        return zero_knn(db, k, start);
    }
    let ubs = t.upper_bounds(q, m);
    let mut order: Vec<usize> = (0..ubs.len()).collect();
    order.sort_by(|&a, &b| ubs[b].cmp(&ubs[a]).then(a.cmp(&b)));
    let mut top = TopK::new(k);
    let mut metrics = QueryMetrics { fine_columns: ubs.len(), columns_touched: ubs.len(), ..Default::default() };
    for g in order {
        if !top.worth_visiting(ubs[g]) {
            break;
        }
        metrics.candidates += verify_group(t, db, q, g, m, &mut top);
        metrics.groups_verified += 1;
    }
    metrics.groups_pruned = t.num_groups() - metrics.groups_verified;
    metrics.elapsed = start.elapsed();
    QueryResult { hits: top.into_hits(), metrics }
}

fn knn_tiers(h: &Htgm, db: &Database, q: &SetRecord, k: usize, m: SimilarityMeasure) -> QueryResult {
    let start = Instant::now();
    let fine = h.finest();
    if !has_known_token(q, fine.universe_size()) {
        return zero_knn(db, k, start);
    }
    let last = h.num_tiers() - 1;
    let q_size = m.size_of(q);
    let mut metrics = QueryMetrics::default();
    let mut frontier: BinaryHeap<Pending> = h
        .tier(0)
        .upper_bounds(q, m)
        .into_iter()
        .enumerate()
        .map(|(group, ub)| Pending { ub, tier: 0, group })
        .collect();
    let mut touched = vec![0usize; h.num_tiers()];
    touched[0] = frontier.len();
    let mut top = TopK::new(k);
    while let Some(p) = frontier.pop() {
        if !top.worth_visiting(p.ub) {
            break;
        }
        if p.tier == last {
            metrics.candidates += verify_group(fine, db, q, p.group, m, &mut top);
            metrics.groups_verified += 1;
            continue;
        }
        let below = h.tier(p.tier + 1);
        for &c in h.children(p.tier, p.group) {
            let r = below.overlap_with(q, c as usize, m.semantics);
            frontier.push(Pending { ub: bound_from_sizes(q_size, r, m), tier: p.tier + 1, group: c as usize });
        }
        touched[p.tier + 1] += h.children(p.tier, p.group).len();
    }
    metrics.fine_columns = touched[last];
    metrics.coarse_columns = touched[..last].iter().sum();
    metrics.columns_touched = metrics.coarse_columns + metrics.fine_columns;
    metrics.groups_pruned = fine.num_groups() - metrics.groups_verified;
    metrics.elapsed = start.elapsed();
    QueryResult { hits: top.into_hits(), metrics }
}

/// Full scan: the ground truth every indexed answer is checked against.
pub fn brute_force(db: &Database, q: &SetRecord, kind: QueryKind, m: SimilarityMeasure) -> Result<QueryResult> {
    let start = Instant::now();
    let hits = match kind {
        QueryKind::Knn(k) => {
            check_k(k)?;
            let mut top = TopK::new(k);
            for r in db.records() {
                top.offer(r.id(), similarity(q, r, m));
            }
            top.into_hits()
        }
        QueryKind::Range(delta) => {
            check_delta(delta)?;
            let mut hits: Vec<_> = db
                .records()
                .iter()
                .map(|r| (r.id(), similarity(q, r, m)))
                .filter(|(_, s)| s.meets(delta))
                .collect();
            sort_hits(&mut hits);
            hits
        }
    };
    let metrics = QueryMetrics { candidates: db.len(), elapsed: start.elapsed(), ..Default::default() };
    Ok(QueryResult { hits, metrics })
}

/// Runs either query kind against an index.
pub fn search(index: &Index, db: &Database, q: &SetRecord, kind: QueryKind, m: SimilarityMeasure) -> Result<QueryResult> {
    match kind {
        QueryKind::Knn(k) => knn_search(index, db, q, k, m),
        QueryKind::Range(delta) => range_search(index, db, q, delta, m),
    }
}

/// Whether two answers agree exactly: same similarity sequence, and for a
/// range query the same ids. kNN answers may differ in which of several
/// equally similar sets fill the last places.
pub fn same_answer(a: &QueryResult, b: &QueryResult, kind: QueryKind) -> bool {
    let sims = |r: &QueryResult| r.hits.iter().map(|h| h.1).collect::<Vec<_>>();
    if sims(a) != sims(b) {
        return false;
    }
    match kind {
        QueryKind::Range(_) => a.hits == b.hits,
        QueryKind::Knn(_) => {
            // ids strictly above the frontier must coincide
            let above = |r: &QueryResult| {
                let f = r.frontier();
                r.hits.iter().filter(|h| Some(h.1) != f).map(|h| h.0).collect::<Vec<_>>()
            };
            above(a) == above(b)
        }
    }
}

/// All-pairs verification cost of a partition: the sum of squared group sizes.
pub fn verification_count(p: &Partition) -> u64 {
    p.group_sizes().iter().map(|&s| (s * s) as u64).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::l2p::PartitionHierarchy;

    fn fig1() -> (Database, Partition) {
        let db = Database::from_token_lists([
            vec![0, 1],
            vec![0, 2],
            vec![0, 1, 3],
            vec![1, 2],
            vec![2, 3],
            vec![1, 3],
        ])
        .unwrap();
        (db, Partition::from_labels(&[0, 0, 0, 1, 1, 1]))
    }

    fn q(tokens: &[u32]) -> SetRecord {
        SetRecord::from_tokens(0, tokens.iter().copied()).unwrap()
    }

    #[test]
    fn range_prunes_group_without_token() {
        let (db, p) = fig1();
        let idx = Index::flat(&db, &p, SimilarityMeasure::JACCARD);
        let r = range_search(&idx, &db, &q(&[0]), 0.5, SimilarityMeasure::JACCARD).unwrap();
        assert_eq!(r.metrics.candidates, 3);
        assert_eq!(r.metrics.groups_pruned, 1);
        assert_eq!(r.hits, vec![(0, Score::ratio(1, 2)), (1, Score::ratio(1, 2))]);
        assert!(range_search(&idx, &db, &q(&[0]), 0.0, SimilarityMeasure::JACCARD).is_err());
        assert!(range_search(&idx, &db, &q(&[0]), 1.5, SimilarityMeasure::JACCARD).is_err());
    }

    #[test]
    fn range_at_one_returns_equal_sets() {
        let (db, p) = fig1();
        let idx = Index::flat(&db, &p, SimilarityMeasure::DICE);
        let r = range_search(&idx, &db, &q(&[2, 3]), 1.0, SimilarityMeasure::DICE).unwrap();
        assert_eq!(r.hits, vec![(4, Score::ONE)]);
    }

    #[test]
    fn knn_all_sets_has_full_pe() {
        let (db, p) = fig1();
        let idx = Index::flat(&db, &p, SimilarityMeasure::JACCARD);
        let r = knn_search(&idx, &db, &q(&[0, 1]), 6, SimilarityMeasure::JACCARD).unwrap();
        assert_eq!(r.hits.len(), 6);
        assert_eq!(r.hits[0], (0, Score::ONE));
        assert_eq!(r.pruning_efficiency(6, QueryMode::Knn), 1.0);
        let more = knn_search(&idx, &db, &q(&[0, 1]), 60, SimilarityMeasure::JACCARD).unwrap();
        assert_eq!(more.hits.len(), 6);
        assert!(knn_search(&idx, &db, &q(&[0]), 0, SimilarityMeasure::JACCARD).is_err());
    }

    #[test]
    fn knn_skips_groups_at_theta() {
        // k=1 query equal to set 0: theta = 1 after the first group, so the
        // other group (bound 1/2) is never verified.
        let (db, p) = fig1();
        let idx = Index::flat(&db, &p, SimilarityMeasure::JACCARD);
        let r = knn_search(&idx, &db, &q(&[0, 1]), 1, SimilarityMeasure::JACCARD).unwrap();
        assert_eq!(r.hits, vec![(0, Score::ONE)]);
        assert_eq!(r.metrics.groups_verified, 1);
        assert_eq!(r.metrics.candidates, 3);
    }

    #[test]
    fn unknown_token_queries_short_circuit() {
        let (db, p) = fig1();
        let idx = Index::flat(&db, &p, SimilarityMeasure::JACCARD);
        let r = knn_search(&idx, &db, &q(&[9]), 2, SimilarityMeasure::JACCARD).unwrap();
        assert_eq!(r.hits, vec![(0, Score::ZERO), (1, Score::ZERO)]);
        assert_eq!(r, QueryResult { metrics: r.metrics.clone(), ..brute_force(&db, &q(&[9]), QueryKind::Knn(2), SimilarityMeasure::JACCARD).unwrap() });
        let r = range_search(&idx, &db, &q(&[9]), 0.1, SimilarityMeasure::JACCARD).unwrap();
        assert!(r.hits.is_empty());
        assert_eq!(r.metrics.candidates, 0);
    }

    #[test]
    fn brute_force_basics() {
        let (db, _) = fig1();
        let r = brute_force(&db, &q(&[7]), QueryKind::Range(0.1), SimilarityMeasure::JACCARD).unwrap();
        assert!(r.hits.is_empty());
        let r = brute_force(&db, &q(&[0, 2]), QueryKind::Knn(1), SimilarityMeasure::JACCARD).unwrap();
        assert_eq!(r.hits, vec![(1, Score::ONE)]);
    }

    #[test]
    fn hierarchy_matches_flat() {
        let (db, _) = fig1();
        let fine = Partition::from_labels(&[0, 0, 1, 2, 2, 3]);
        let h = PartitionHierarchy::two_level(&fine, 2).unwrap();
        let flat = Index::flat(&db, &fine, SimilarityMeasure::JACCARD);
        let two = Index::hierarchical(&db, &h, &[0, 1], SimilarityMeasure::JACCARD).unwrap();
        let one = Index::hierarchical(&db, &h, &[1], SimilarityMeasure::JACCARD).unwrap();
        for query in [q(&[0]), q(&[1, 3]), q(&[2, 3, 9])] {
            for k in 1..=6 {
                let a = knn_search(&flat, &db, &query, k, SimilarityMeasure::JACCARD).unwrap();
                let b = knn_search(&two, &db, &query, k, SimilarityMeasure::JACCARD).unwrap();
                let c = knn_search(&one, &db, &query, k, SimilarityMeasure::JACCARD).unwrap();
                assert_eq!(a.hits, b.hits);
                assert_eq!(a.hits, c.hits);
                assert_eq!(
                    (a.metrics.candidates, a.metrics.columns_touched),
                    (c.metrics.candidates, c.metrics.columns_touched)
                );
            }
            let a = range_search(&flat, &db, &query, 0.3, SimilarityMeasure::JACCARD).unwrap();
            let b = range_search(&two, &db, &query, 0.3, SimilarityMeasure::JACCARD).unwrap();
            assert_eq!(a.hits, b.hits);
        }
    }

    #[test]
    fn verification_counts() {
        let sizes = |a: usize, b: usize| {
            Partition::from_labels(&(0..a + b).map(|i| u32::from(i >= a)).collect::<Vec<_>>())
        };
        assert_eq!(verification_count(&sizes(20, 1)), 401);
        assert_eq!(verification_count(&sizes(13, 8)), 233);
        assert_eq!(verification_count(&Partition::from_labels(&[0, 1, 2, 3])), 4);
    }
}
