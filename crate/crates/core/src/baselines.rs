//! Algorithmic partitioners used as comparison points for the learned one:
//! relocation (PAR-C), divisive (PAR-D), agglomerative (PAR-A), graph cut
//! (PAR-G) and balanced random assignment.
//!
//! Distances between a set and a group are sums of `1 - Sim` over the
//! group. By default they are exact, accumulated through an inverted index
//! so that only pairs sharing a token cost anything; with
//! [`BaselineConfig::phi_sample`] set, each group is instead represented by
//! a random sample and the sum is scaled up by `|group| / sample`.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::measure::{similarity, Semantics, SimilarityMeasure};
use crate::set::{Database, GroupId, Partition};

/// Edges of the similarity graph PAR-G cuts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GraphWorkload {
    /// Each set links to its `k` most similar others.
    Knn(usize),
    /// Sets link when their similarity reaches the threshold.
    Range(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineConfig {
    /// Target group count.
    pub n: usize,
    /// Sample size standing in for each group in distance sums; `None`
    /// computes them exactly.
    pub phi_sample: Option<usize>,
    pub seed: u64,
    pub workload: GraphWorkload,
    /// Relocation passes PAR-C may run.
    pub max_passes: usize,
    /// Allowed imbalance of a PAR-G bisection during refinement, as a
    /// fraction of the average part size. Parts are rebalanced to exact
    /// sizes afterwards.
    pub imbalance: f64,
}

impl BaselineConfig {
    pub fn new(n: usize, seed: u64) -> Self {
        Self {
            n,
            phi_sample: None,
            seed,
            workload: GraphWorkload::Knn(10),
            max_passes: 20,
            imbalance: 0.05,
        }
    }

    fn validate(&self, db: &Database) -> Result<()> {
        check_n(db.len(), self.n)?;
        if self.phi_sample == Some(0) {
            return Err(Error::InvalidArgument("phi sample must be at least 1".into()));
        }
        match self.workload {
            GraphWorkload::Knn(0) => Err(Error::InvalidArgument("graph k must be at least 1".into())),
            GraphWorkload::Range(d) if !(d > 0.0 && d <= 1.0) => {
                Err(Error::InvalidArgument(format!("graph threshold {d} outside (0, 1]")))
            }
            _ => Ok(()),
        }
    }
}

fn check_n(sets: usize, n: usize) -> Result<()> {
    if n == 0 || n > sets.max(1) {
        return Err(Error::InvalidArgument(format!("cannot form {n} groups from {sets} sets")));
    }
    Ok(())
}

/// Balanced random assignment: a seeded shuffle cut into `n` runs.
pub fn par_random(db: &Database, n: usize, seed: u64) -> Result<Partition> {
    check_n(db.len(), n)?;
    let len = db.len();
    let mut order: Vec<u32> = (0..len as u32).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut group_of = vec![GroupId(0); len];
    for (pos, &s) in order.iter().enumerate() {
        group_of[s as usize] = GroupId((pos * n / len) as u32);
    }
    Partition::new(group_of, n)
}

/// Token-to-set postings used to enumerate every set sharing a token with
/// a given one.
struct Neighbors {
    postings: Vec<Vec<(u32, u32)>>,
    overlap: Vec<u64>,
    touched: Vec<u32>,
}

impl Neighbors {
    fn new(db: &Database) -> Self {
        let mut postings = vec![Vec::new(); db.universe_size()];
        for r in db.records() {
            for &(t, c) in r.tokens() {
                postings[t.index()].push((r.id(), c));
            }
        }
        Self { postings, overlap: vec![0; db.len()], touched: Vec::new() }
    }

    /// Calls `f(y, sim)` for every set `y` sharing a token with `x`,
    /// including `x` itself.
    fn for_each(&mut self, db: &Database, x: u32, m: SimilarityMeasure, mut f: impl FnMut(u32, f64)) {
        let rx = db.get(x);
        for &(t, cx) in rx.tokens() {
            for &(y, cy) in &self.postings[t.index()] {
                if self.overlap[y as usize] == 0 {
                    self.touched.push(y);
                }
                self.overlap[y as usize] += match m.semantics {
                    Semantics::Set => 1,
                    Semantics::Bag => cx.min(cy) as u64,
                };
            }
        }
        let size_x = m.size_of(rx);
        for y in self.touched.drain(..) {
            let ov = std::mem::take(&mut self.overlap[y as usize]);
            let sim = m.from_overlap(ov, size_x, m.size_of(db.get(y))).to_f64();
            f(y, sim);
        }
    }
}

/// Set-to-group distance sums, exact or sampled.
struct Distances<'a> {
    db: &'a Database,
    m: SimilarityMeasure,
    neighbors: Neighbors,
    sample: Option<usize>,
    rng: ChaCha8Rng,
}

impl<'a> Distances<'a> {
    fn new(db: &'a Database, m: SimilarityMeasure, sample: Option<usize>, seed: u64) -> Self {
        Self {
            db,
            m,
            neighbors: Neighbors::new(db),
            sample,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_d157),
        }
    }

    /// `d(x, G \ {x})` for every group. `group_of` maps sets to slots of
    /// `groups`; empty slots get 0.
    fn sums_to_groups(&mut self, x: u32, group_of: &[u32], groups: &[Vec<u32>]) -> Vec<f64> {
        match self.sample {
            None => {
                let mut sim_sum = vec![0.0; groups.len()];
                self.neighbors.for_each(self.db, x, self.m, |y, s| {
                    if y != x {
                        sim_sum[group_of[y as usize] as usize] += s;
                    }
                });
                let own = group_of[x as usize] as usize;
                groups
                    .iter()
                    .enumerate()
                    .map(|(g, members)| {
                        let size = members.len() - usize::from(g == own);
                        size as f64 - sim_sum[g]
                    })
                    .collect()
            }
            Some(_) => (0..groups.len()).map(|g| self.sampled(x, &groups[g])).collect(),
        }
    }

    /// `d(x, members \ {x})` estimated from a sample of `members`.
    fn sampled(&mut self, x: u32, members: &[u32]) -> f64 {
        let others: Vec<u32> = members.iter().copied().filter(|&y| y != x).collect();
        if others.is_empty() {
            return 0.0;
        }
        let s = self.sample.unwrap_or(others.len()).min(others.len());
        let rx = self.db.get(x);
        let picks = index::sample(&mut self.rng, others.len(), s);
        let total: f64 = picks
            .iter()
            .map(|i| 1.0 - similarity(rx, self.db.get(others[i]), self.m).to_f64())
            .sum();
        total * others.len() as f64 / s as f64
    }

    /// Ordered-pair distance sum within `members`.
    fn phi(&mut self, members: &[u32], g: u32, group_of: &[u32]) -> f64 {
        match self.sample {
            None => {
                let mut sim_sum = 0.0;
                for &x in members {
                    self.neighbors.for_each(self.db, x, self.m, |y, s| {
                        if y != x && group_of[y as usize] == g {
                            sim_sum += s;
                        }
                    });
                }
                let n = members.len() as f64;
                n * (n - 1.0) - sim_sum
            }
            Some(_) => members.iter().map(|&x| self.sampled(x, members)).sum(),
        }
    }
}

fn slack(a: f64) -> f64 {
    1e-9 * a.abs().max(1.0)
}

fn labels_to_partition(group_of: &[u32]) -> Result<Partition> {
    let n = group_of.iter().max().map_or(0, |&g| g as usize + 1);
    Ok(Partition::new(group_of.iter().map(|&g| GroupId(g)).collect(), n)?.compact())
}

/// Relocation: starting from a random partition, each set in id order moves
/// to the first group it is strictly closer to than its own (excluding
/// itself), which lowers the pairwise objective. Stops after a pass with no
/// moves or `max_passes` passes.
pub fn par_c(db: &Database, cfg: &BaselineConfig, m: SimilarityMeasure) -> Result<Partition> {
    Ok(par_c_counted(db, cfg, m)?.0)
}

/// [`par_c`] that also reports the relocations made in each pass.
pub fn par_c_counted(db: &Database, cfg: &BaselineConfig, m: SimilarityMeasure) -> Result<(Partition, Vec<usize>)> {
    cfg.validate(db)?;
    let init = par_random(db, cfg.n, cfg.seed)?;
    let mut group_of: Vec<u32> = init.assignments().iter().map(|g| g.0).collect();
    let mut groups = init.groups();
    let mut dist = Distances::new(db, m, cfg.phi_sample, cfg.seed);
    let mut moves_per_pass = Vec::new();
    for _ in 0..cfg.max_passes {
        let mut moved = 0;
        for x in 0..db.len() as u32 {
            let own = group_of[x as usize] as usize;
            let d = dist.sums_to_groups(x, &group_of, &groups);
            let target = (0..groups.len()).find(|&j| j != own && d[own] > d[j] + slack(d[own]));
            if let Some(j) = target {
                groups[own].retain(|&y| y != x);
                let pos = groups[j].partition_point(|&y| y < x);
                groups[j].insert(pos, x);
                group_of[x as usize] = j as u32;
                moved += 1;
            }
        }
        moves_per_pass.push(moved);
        if moved == 0 {
            break;
        }
    }
    Ok((labels_to_partition(&group_of)?, moves_per_pass))
}

/// Divisive: repeatedly split the group with the largest pairwise distance
/// sum. A random member seeds the new group; every other member, in id
/// order, follows it if that lowers the objective, and further passes move
/// sets between the two halves under the same rule.
pub fn par_d(db: &Database, cfg: &BaselineConfig, m: SimilarityMeasure) -> Result<Partition> {
    cfg.validate(db)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut group_of = vec![0u32; db.len()];
    let mut groups = vec![(0..db.len() as u32).collect::<Vec<_>>()];
    let mut dist = Distances::new(db, m, cfg.phi_sample, cfg.seed);
    let mut phis = vec![dist.phi(&groups[0], 0, &group_of)];
    while groups.len() < cfg.n {
        let split = (0..groups.len())
            .filter(|&g| groups[g].len() >= 2)
            .max_by(|&a, &b| {
                phis[a]
                    .total_cmp(&phis[b])
                    .then(groups[a].len().cmp(&groups[b].len()))
                    .then(b.cmp(&a))
            })
            .expect("n <= |D| leaves a splittable group");
        let fresh = groups.len() as u32;
        let seed_set = groups[split][rng.random_range(0..groups[split].len())];
        group_of[seed_set as usize] = fresh;
        groups.push(vec![seed_set]);
        groups[split].retain(|&y| y != seed_set);
        for x in groups[split].clone() {
            let d = dist.sums_to_groups(x, &group_of, &groups);
            if d[split] > d[fresh as usize] + slack(d[split]) {
                group_of[x as usize] = fresh;
                groups[split].retain(|&y| y != x);
                let pos = groups[fresh as usize].partition_point(|&y| y < x);
                groups[fresh as usize].insert(pos, x);
            }
        }
        // Settle the two halves against each other: a single pass in id
        // order splits by position rather than by content.
        let pair = [split, fresh as usize];
        for _ in 0..cfg.max_passes {
            let mut moved = false;
            let mut both: Vec<u32> = groups[split].iter().chain(&groups[fresh as usize]).copied().collect();
            both.sort_unstable();
            for x in both {
                let own = group_of[x as usize] as usize;
                let other = if own == pair[0] { pair[1] } else { pair[0] };
                let d = dist.sums_to_groups(x, &group_of, &groups);
                if d[own] > d[other] + slack(d[own]) {
                    groups[own].retain(|&y| y != x);
                    let pos = groups[other].partition_point(|&y| y < x);
                    groups[other].insert(pos, x);
                    group_of[x as usize] = other as u32;
                    moved = true;
                }
            }
            if !moved {
                break;
            }
        }
        phis[split] = dist.phi(&groups[split], split as u32, &group_of);
        phis.push(dist.phi(&groups[fresh as usize], fresh, &group_of));
    }
    labels_to_partition(&group_of)
}

/// Agglomerative: from singletons, repeatedly merge the smallest group with
/// the partner that minimises the distance sum of their union.
pub fn par_a(db: &Database, cfg: &BaselineConfig, m: SimilarityMeasure) -> Result<Partition> {
    cfg.validate(db)?;
    let len = db.len();
    let mut group_of: Vec<u32> = (0..len as u32).collect();
    let mut groups: Vec<Vec<u32>> = (0..len as u32).map(|s| vec![s]).collect();
    let mut phis = vec![0.0; len];
    let mut alive = len;
    let mut dist = Distances::new(db, m, cfg.phi_sample, cfg.seed);
    while alive > cfg.n {
        let small = (0..len)
            .filter(|&g| !groups[g].is_empty())
            .min_by_key(|&g| (groups[g].len(), g))
            .expect("groups remain");
        let mut cross = vec![0.0; len];
        for &x in &groups[small] {
            for (g, d) in dist.sums_to_groups(x, &group_of, &groups).into_iter().enumerate() {
                cross[g] += d;
            }
        }
        let partner = (0..len)
            .filter(|&g| g != small && !groups[g].is_empty())
            .min_by(|&a, &b| (phis[a] + 2.0 * cross[a]).total_cmp(&(phis[b] + 2.0 * cross[b])).then(a.cmp(&b)))
            .expect("at least two groups");
        let (keep, gone) = (small.min(partner), small.max(partner));
        phis[keep] = phis[small] + phis[partner] + 2.0 * cross[partner];
        let moved = std::mem::take(&mut groups[gone]);
        for &x in &moved {
            group_of[x as usize] = keep as u32;
        }
        groups[keep].extend(moved);
        groups[keep].sort_unstable();
        phis[gone] = 0.0;
        alive -= 1;
    }
    labels_to_partition(&group_of)
}

/// Undirected similarity graph as sorted adjacency lists.
pub fn similarity_graph(db: &Database, workload: GraphWorkload, m: SimilarityMeasure) -> Vec<Vec<u32>> {
    let mut neighbors = Neighbors::new(db);
    let mut adj = vec![Vec::new(); db.len()];
    for x in 0..db.len() as u32 {
        let mut cands = Vec::new();
        neighbors.for_each(db, x, m, |y, s| {
            if y != x {
                cands.push((y, s));
            }
        });
        let keep: Vec<u32> = match workload {
            GraphWorkload::Knn(k) => {
                cands.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                cands.iter().take(k).map(|c| c.0).collect()
            }
            GraphWorkload::Range(delta) => cands
                .iter()
                .filter(|&&(y, _)| similarity(db.get(x), db.get(y), m).meets(delta))
                .map(|c| c.0)
                .collect(),
        };
        for y in keep {
            adj[x as usize].push(y);
            adj[y as usize].push(x);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    adj
}

/// Graph cut: build the similarity graph, then recursively bisect it into
/// `n` parts of near-equal size with few cut edges. Part sizes follow the
/// split of `n` at each step, so any `n` works, not only powers of two.
/// Sibling parts get consecutive ids.
pub fn par_g(db: &Database, cfg: &BaselineConfig, m: SimilarityMeasure) -> Result<Partition> {
    cfg.validate(db)?;
    let adj = similarity_graph(db, cfg.workload, m);
    Ok(partition_graph(&adj, cfg.n, cfg.imbalance, cfg.seed))
}

/// Recursive bisection of a graph into `n` labelled parts.
pub fn partition_graph(adj: &[Vec<u32>], n: usize, imbalance: f64, seed: u64) -> Partition {
    let mut labels = vec![0u32; adj.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut work = Bisector::new(adj);
    let all: Vec<u32> = (0..adj.len() as u32).collect();
    let mut next_label = 0;
    split_recursive(&mut work, all, n, imbalance, &mut rng, &mut labels, &mut next_label);
    Partition::new(labels.into_iter().map(GroupId).collect(), n).expect("labels below n")
}

fn split_recursive(
    work: &mut Bisector,
    vertices: Vec<u32>,
    parts: usize,
    imbalance: f64,
    rng: &mut ChaCha8Rng,
    labels: &mut [u32],
    next_label: &mut u32,
) {
    if parts <= 1 {
        for &v in &vertices {
            labels[v as usize] = *next_label;
        }
        *next_label += 1;
        return;
    }
    let left_parts = parts / 2;
    let target = vertices.len() * left_parts / parts;
    let tol = ((imbalance * vertices.len() as f64 / parts as f64) as usize).max(1);
    let (left, right) = work.bisect(&vertices, target, tol, rng);
    split_recursive(work, left, left_parts, imbalance, rng, labels, next_label);
    split_recursive(work, right, parts - left_parts, imbalance, rng, labels, next_label);
}

/// Scratch state for bisecting vertex subsets of one graph.
struct Bisector<'a> {
    adj: &'a [Vec<u32>],
    /// Side of each vertex in the current subproblem: 0, 1, or absent.
    side: Vec<u8>,
    gain: Vec<i64>,
    locked: Vec<bool>,
}

const ABSENT: u8 = u8::MAX;

impl<'a> Bisector<'a> {
    fn new(adj: &'a [Vec<u32>]) -> Self {
        let n = adj.len();
        Self { adj, side: vec![ABSENT; n], gain: vec![0; n], locked: vec![false; n] }
    }

    fn compute_gain(&self, v: u32) -> i64 {
        let s = self.side[v as usize];
        self.adj[v as usize]
            .iter()
            .map(|&u| match self.side[u as usize] {
                ABSENT => 0,
                su if su == s => -1,
                _ => 1,
            })
            .sum()
    }

    /// Splits `vertices` so that exactly `target` land on the left.
    fn bisect(&mut self, vertices: &[u32], target: usize, tol: usize, rng: &mut ChaCha8Rng) -> (Vec<u32>, Vec<u32>) {
        for &v in vertices {
            self.side[v as usize] = 1;
        }
        self.grow(vertices, target, rng);
        for _ in 0..8 {
            if !self.refine_pass(vertices, target, tol) {
                break;
            }
        }
        self.rebalance(vertices, target);
        let (mut left, mut right) = (Vec::new(), Vec::new());
        for &v in vertices {
            if self.side[v as usize] == 0 { left.push(v) } else { right.push(v) }
            self.side[v as usize] = ABSENT;
        }
        (left, right)
    }

    /// Breadth-first growth of the left side from random seeds.
    fn grow(&mut self, vertices: &[u32], target: usize, rng: &mut ChaCha8Rng) {
        let mut order = vertices.to_vec();
        order.shuffle(rng);
        let mut size = 0;
        let mut queue = VecDeque::new();
        let mut seeds = order.into_iter();
        while size < target {
            let v = match queue.pop_front() {
                Some(v) => v,
                None => match seeds.find(|&s| self.side[s as usize] == 1) {
                    Some(s) => s,
                    None => break,
                },
            };
            if self.side[v as usize] != 1 {
                continue;
            }
            self.side[v as usize] = 0;
            size += 1;
            for &u in &self.adj[v as usize] {
                if self.side[u as usize] == 1 {
                    queue.push_back(u);
                }
            }
        }
    }

    fn left_size(&self, vertices: &[u32]) -> usize {
        vertices.iter().filter(|&&v| self.side[v as usize] == 0).count()
    }

    /// One Fiduccia-Mattheyses pass; returns whether the cut shrank.
    fn refine_pass(&mut self, vertices: &[u32], target: usize, tol: usize) -> bool {
        let mut heaps = [BinaryHeap::new(), BinaryHeap::new()];
        for &v in vertices {
            self.gain[v as usize] = self.compute_gain(v);
            self.locked[v as usize] = false;
            heaps[self.side[v as usize] as usize].push((self.gain[v as usize], Reverse(v)));
        }
        let mut left = self.left_size(vertices);
        let (lo, hi) = (target.saturating_sub(tol), target + tol);
        let mut moves: Vec<u32> = Vec::new();
        let (mut total, mut best, mut best_len) = (0i64, 0i64, 0usize);
        let mut since_best = 0;
        let limit = 64.max(vertices.len() / 20);
        loop {
            let mut top = [None, None];
            for s in 0..2 {
                while let Some(&(g, Reverse(v))) = heaps[s].peek() {
                    let vi = v as usize;
                    if self.locked[vi] || self.side[vi] as usize != s || self.gain[vi] != g {
                        heaps[s].pop();
                    } else {
                        top[s] = Some((g, v));
                        break;
                    }
                }
            }
            let can_leave_left = left > lo;
            let can_join_left = left < hi;
            let pick = match (top[0].filter(|_| can_leave_left), top[1].filter(|_| can_join_left)) {
                (Some(a), Some(b)) => {
                    if a.0 > b.0 || (a.0 == b.0 && left >= target) { a } else { b }
                }
                (Some(a), None) => a,
                (None, Some(b)) => b,
                (None, None) => break,
            };
            let v = pick.1 as usize;
            let from = self.side[v];
            heaps[from as usize].pop();
            self.side[v] = 1 - from;
            self.locked[v] = true;
            if from == 0 { left -= 1 } else { left += 1 }
            total += pick.0;
            moves.push(v as u32);
            for &u in &self.adj[v] {
                let ui = u as usize;
                if self.side[ui] == ABSENT || self.locked[ui] {
                    continue;
                }
                self.gain[ui] += if self.side[ui] == from { 2 } else { -2 };
                heaps[self.side[ui] as usize].push((self.gain[ui], Reverse(u)));
            }
            if total > best {
                best = total;
                best_len = moves.len();
                since_best = 0;
            } else {
                since_best += 1;
                if since_best > limit {
                    break;
                }
            }
        }
        for &v in &moves[best_len..] {
            self.side[v as usize] = 1 - self.side[v as usize];
        }
        best > 0
    }

    /// Moves the highest-gain vertices off the larger side until the left
    /// side holds exactly `target`.
    fn rebalance(&mut self, vertices: &[u32], target: usize) {
        let mut left = self.left_size(vertices);
        if left == target {
            return;
        }
        let from: u8 = if left > target { 0 } else { 1 };
        let mut heap = BinaryHeap::new();
        for &v in vertices {
            if self.side[v as usize] == from {
                self.gain[v as usize] = self.compute_gain(v);
                heap.push((self.gain[v as usize], Reverse(v)));
            }
        }
        while left != target {
            let Some((g, Reverse(v))) = heap.pop() else { break };
            let vi = v as usize;
            if self.side[vi] != from || self.gain[vi] != g {
                continue;
            }
            self.side[vi] = 1 - from;
            if from == 0 { left -= 1 } else { left += 1 }
            for &u in &self.adj[vi] {
                let ui = u as usize;
                if self.side[ui] == from {
                    self.gain[ui] += 2;
                    heap.push((self.gain[ui], Reverse(u)));
                }
            }
        }
    }
}
