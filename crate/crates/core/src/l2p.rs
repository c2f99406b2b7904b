//! Learned partitioning: a cascade of Siamese bisection models.
//!
//! The database is first cut into `init_groups` runs of sets ordered by their
//! smallest token. Every group with at least `min_group` sets is then split
//! in two by a network trained on pairs sampled from that group, level after
//! level, until nothing splits or `max_levels` is reached.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measure::{similarity, SimilarityMeasure};
use crate::nn::{adam_step, backward_into, second_group, AdamState, SiameseMlp};
use crate::ptr::{PathTable, Variant};
use crate::set::{Database, GroupId, Partition};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Pairs sampled (with replacement) from each group before training it.
    pub pairs_per_group: usize,
    pub batch: usize,
    pub epochs: usize,
    /// Groups smaller than this are not split further.
    pub min_group: usize,
    /// Splitting rounds after the initial partition.
    pub max_levels: usize,
    pub init_groups: usize,
    pub seed: u64,
    pub variant: Variant,
    pub learning_rate: f64,
    /// Keep each node's trained network in the hierarchy.
    pub retain_models: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            pairs_per_group: 40_000,
            batch: 256,
            epochs: 3,
            min_group: 50,
            max_levels: 16,
            init_groups: 128,
            seed: 0,
            variant: Variant::Full,
            learning_rate: 1e-3,
            retain_models: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pairs_per_group == 0
            || self.batch == 0
            || self.epochs == 0
            || self.min_group == 0
            || self.init_groups == 0
        {
            return Err(Error::InvalidArgument("training counts must be positive".into()));
        }
        Ok(())
    }
}

/// Sorts sets by `(min token, id)` and cuts the order into `init_groups`
/// consecutive runs whose sizes differ by at most one.
pub fn init_partition(db: &Database, init_groups: usize) -> Partition {
    let n_sets = db.len();
    let n = init_groups.max(1).min(n_sets);
    let mut order: Vec<u32> = (0..n_sets as u32).collect();
    order.sort_by_key(|&s| (db.get(s).min_token(), s));
    let mut group_of = vec![GroupId(0); n_sets];
    let (base, extra) = (n_sets.checked_div(n).unwrap_or(0), n_sets.checked_rem(n).unwrap_or(0));
    let mut pos = 0;
    for g in 0..n {
        let len = base + usize::from(g < extra);
        for &s in &order[pos..pos + len] {
            group_of[s as usize] = GroupId(g as u32);
        }
        pos += len;
    }
    Partition::new(group_of, n).expect("ids in range")
}

/// Result of bisecting one group.
#[derive(Debug, Clone)]
pub struct Split {
    pub left: Vec<u32>,
    pub right: Vec<u32>,
    pub model: SiameseMlp,
    /// Mean batch loss per epoch.
    pub epoch_losses: Vec<f64>,
    /// Whether the median fallback was needed.
    pub fallback: bool,
}

/// Trains a Siamese bisection model on `group` and splits it.
pub fn train_split(
    group: &[u32],
    db: &Database,
    pt: &PathTable,
    cfg: &TrainConfig,
    m: SimilarityMeasure,
) -> Result<Split> {
    if group.len() < 2 {
        return Err(Error::InvalidArgument("a split needs at least two sets".into()));
    }
    let reps = pt.encode_normalized(db, cfg.variant);
    Ok(split_group(group, db, &reps, cfg, m, node_seed(cfg.seed, &[])))
}

fn split_group(
    group: &[u32],
    db: &Database,
    reps: &[Vec<f64>],
    cfg: &TrainConfig,
    m: SimilarityMeasure,
    seed: u64,
) -> Split {
    let dim = reps.first().map_or(0, Vec::len);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = SiameseMlp::init(dim, rng.random());

    let len = group.len();
    let mut pairs: Vec<(u32, u32, f64)> = (0..cfg.pairs_per_group)
        .map(|_| {
            let i = rng.random_range(0..len);
            let mut j = rng.random_range(0..len - 1);
            if j >= i {
                j += 1;
            }
            let (x, y) = (group[i], group[j]);
            let dissim = 1.0 - similarity(db.get(x), db.get(y), m).to_f64();
            (x, y, dissim)
        })
        .collect();

    let mut adam = AdamState::new(net.num_params());
    adam.lr = cfg.learning_rate;
    let mut grads = vec![0.0; net.num_params()];
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        pairs.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for batch in pairs.chunks(cfg.batch) {
            grads.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            let mut batch_loss = 0.0;
            for &(x, y, d) in batch {
                batch_loss +=
                    backward_into(&net, &reps[x as usize], &reps[y as usize], d, &mut grads, scale);
            }
            adam_step(&mut net, &mut adam, &grads);
            loss_sum += batch_loss * scale;
            batches += 1;
        }
        epoch_losses.push(loss_sum / batches as f64);
    }

    let outputs: Vec<f64> = group.iter().map(|&s| net.forward(&reps[s as usize])).collect();
    let (mut left, mut right) = (Vec::new(), Vec::new());
    for (&s, &o) in group.iter().zip(&outputs) {
        if second_group(o) {
            right.push(s);
        } else {
            left.push(s);
        }
    }
    let fallback = left.is_empty() || right.is_empty();
    if fallback {
        let mut order: Vec<(f64, u32)> = outputs.iter().copied().zip(group.iter().copied()).collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let half = len / 2;
        left = order[..half].iter().map(|&(_, s)| s).collect();
        right = order[half..].iter().map(|&(_, s)| s).collect();
        left.sort_unstable();
        right.sort_unstable();
    }
    Split { left, right, model: net, epoch_losses, fallback }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the node reached from the root by `path`.
pub fn node_seed(seed: u64, path: &[u32]) -> u64 {
    path.iter().fold(splitmix(seed), |h, &step| splitmix(h ^ splitmix(step as u64 + 1)))
}

/// Training record of one split node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeStats {
    /// Level of the group that was split.
    pub level: usize,
    pub group: u32,
    pub size: usize,
    pub epoch_losses: Vec<f64>,
    pub fallback: bool,
}

/// Partitions at successive levels, each refining the previous one.
///
/// Group ids at every level are laid out so that the children of a group
/// occupy consecutive ids, in parent order.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionHierarchy {
    levels: Vec<Partition>,
    /// `parents[i][g]`: parent at level `i - 1` of group `g` at level `i`.
    parents: Vec<Vec<u32>>,
    pub stats: Vec<NodeStats>,
    pub models: Vec<(usize, u32, SiameseMlp)>,
}

impl PartitionHierarchy {
    /// Builds a hierarchy from explicit levels, checking refinement.
    pub fn from_levels(levels: Vec<Partition>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidArgument("hierarchy needs at least one level".into()));
        }
        let mut parents = vec![Vec::new()];
        for w in levels.windows(2) {
            let (coarse, fine) = (&w[0], &w[1]);
            if coarse.num_sets() != fine.num_sets() {
                return Err(Error::InvalidArgument("levels cover different set counts".into()));
            }
            let mut parent = vec![u32::MAX; fine.num_groups()];
            for s in 0..fine.num_sets() as u32 {
                let (f, c) = (fine.group_of(s).index(), coarse.group_of(s).0);
                if parent[f] == u32::MAX {
                    parent[f] = c;
                } else if parent[f] != c {
                    return Err(Error::InvalidArgument(format!(
                        "group {f} straddles coarse groups {} and {c}",
                        parent[f]
                    )));
                }
            }
            if parent.contains(&u32::MAX) {
                return Err(Error::InvalidArgument("empty group in hierarchy".into()));
            }
            parents.push(parent);
        }
        Ok(Self { levels, parents, stats: Vec::new(), models: Vec::new() })
    }

    /// Two levels over a flat partition: fine group `g` joins coarse group
    /// `g * coarse / n`, so coarse groups are runs of consecutive fine ids.
    pub fn two_level(fine: &Partition, coarse_groups: usize) -> Result<Self> {
        let n = fine.num_groups();
        let c = coarse_groups.clamp(1, n.max(1));
        let labels: Vec<GroupId> = fine
            .assignments()
            .iter()
            .map(|g| GroupId((g.index() * c / n) as u32))
            .collect();
        let coarse = Partition::new(labels, c)?.compact();
        Self::from_levels(vec![coarse, fine.clone()])
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, i: usize) -> &Partition {
        &self.levels[i]
    }

    pub fn levels(&self) -> &[Partition] {
        &self.levels
    }

    pub fn finest(&self) -> &Partition {
        self.levels.last().expect("non-empty")
    }

    pub fn parents(&self, level: usize) -> &[u32] {
        &self.parents[level]
    }

    /// Ancestor at level `up` of group `g` at level `level`.
    pub fn ancestor(&self, level: usize, g: u32, up: usize) -> u32 {
        assert!(up <= level);
        (up + 1..=level).rev().fold(g, |g, l| self.parents[l][g as usize])
    }

    /// For each group at level `coarse`, its descendants at level `fine`,
    /// ascending.
    pub fn descendants(&self, coarse: usize, fine: usize) -> Vec<Vec<u32>> {
        let mut out = vec![Vec::new(); self.levels[coarse].num_groups()];
        for g in 0..self.levels[fine].num_groups() as u32 {
            out[self.ancestor(fine, g, coarse) as usize].push(g);
        }
        out
    }

    /// Checks that every level refines the one above it.
    pub fn is_refinement(&self) -> bool {
        (1..self.levels.len()).all(|l| {
            let (coarse, fine) = (&self.levels[l - 1], &self.levels[l]);
            (0..fine.num_sets() as u32)
                .all(|s| self.parents[l][fine.group_of(s).index()] == coarse.group_of(s).0)
        })
    }
}

/// Runs the cascade to completion.
pub fn build_hierarchy(
    db: &Database,
    pt: &PathTable,
    cfg: &TrainConfig,
    m: SimilarityMeasure,
) -> Result<PartitionHierarchy> {
    cfg.validate()?;
    let reps = pt.encode_normalized(db, cfg.variant);
    let init = init_partition(db, cfg.init_groups);
    let mut groups: Vec<(Vec<u32>, Vec<u32>)> = init
        .groups()
        .into_iter()
        .enumerate()
        .map(|(g, members)| (members, vec![g as u32]))
        .collect();
    let mut levels = vec![init];
    let mut parents = vec![Vec::new()];
    let mut stats = Vec::new();
    let mut models = Vec::new();

    for level in 1..=cfg.max_levels {
        let splits: Vec<Option<Split>> = groups
            .par_iter()
            .map(|(members, path)| {
                (members.len() >= cfg.min_group.max(2))
                    .then(|| split_group(members, db, &reps, cfg, m, node_seed(cfg.seed, path)))
            })
            .collect();
        if splits.iter().all(Option::is_none) {
            break;
        }
        let mut next = Vec::new();
        let mut parent = Vec::new();
        for (g, ((members, path), split)) in groups.into_iter().zip(splits).enumerate() {
            match split {
                Some(split) => {
                    stats.push(NodeStats {
                        level: level - 1,
                        group: g as u32,
                        size: members.len(),
                        epoch_losses: split.epoch_losses.clone(),
                        fallback: split.fallback,
                    });
                    if cfg.retain_models {
                        models.push((level - 1, g as u32, split.model));
                    }
                    for (bit, side) in [split.left, split.right].into_iter().enumerate() {
                        let mut child_path = path.clone();
                        child_path.push(bit as u32);
                        next.push((side, child_path));
                        parent.push(g as u32);
                    }
                }
                None => {
                    next.push((members, path));
                    parent.push(g as u32);
                }
            }
        }
        let mut group_of = vec![GroupId(0); db.len()];
        for (g, (members, _)) in next.iter().enumerate() {
            for &s in members {
                group_of[s as usize] = GroupId(g as u32);
            }
        }
        levels.push(Partition::new(group_of, next.len())?);
        parents.push(parent);
        groups = next;
    }
    Ok(PartitionHierarchy { levels, parents, stats, models })
}
