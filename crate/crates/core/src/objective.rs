//! Partition-quality objectives: pruning efficiency, the pairwise-distance
//! objective (GPO), and the token-union terms it approximates.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measure::{similarity, SimilarityMeasure};
use crate::set::{Database, Partition, SetRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QueryMode {
    Knn,
    Range,
}

/// Fraction of the database spared from verification.
///
/// `results` is `k` for kNN queries (capped at the database size) or the
/// number of range hits. Every verified result is counted as necessary work,
/// so only candidates beyond the results reduce efficiency.
pub fn pruning_efficiency(
    db_size: usize,
    candidates: usize,
    results: usize,
    _mode: QueryMode,
) -> Result<f64> {
    if candidates < results {
        return Err(Error::InvalidArgument(format!(
            "candidates ({candidates}) fewer than results ({results})"
        )));
    }
    if db_size == 0 {
        return Ok(1.0);
    }
    let wasted = (candidates - results) as f64;
    Ok((db_size as f64 - wasted) / db_size as f64)
}

/// Sum of `1 - Sim` over all ordered pairs within each group, self-pairs
/// included (they contribute zero).
pub fn gpo(db: &Database, p: &Partition, m: SimilarityMeasure) -> f64 {
    let groups = p.groups();
    let per_group: Vec<f64> = groups.par_iter().map(|g| phi(db, g, m)).collect();
    per_group.iter().sum()
}

/// Sum of ordered-pair distances within one group of set ids.
pub fn phi(db: &Database, members: &[u32], m: SimilarityMeasure) -> f64 {
    let mut acc = 0.0;
    for (i, &x) in members.iter().enumerate() {
        let sx = db.get(x);
        for &y in &members[i + 1..] {
            acc += 1.0 - similarity(sx, db.get(y), m).to_f64();
        }
    }
    2.0 * acc
}

/// For each token, the ascending list of groups whose union contains it.
pub(crate) fn token_groups(db: &Database, p: &Partition) -> Vec<Vec<u32>> {
    let mut out: Vec<Vec<u32>> = vec![Vec::new(); db.universe_size()];
    for r in db.records() {
        let g = p.group_of(r.id()).0;
        for t in r.token_ids() {
            let list = &mut out[t.index()];
            if let Err(pos) = list.binary_search(&g) {
                list.insert(pos, g);
            }
        }
    }
    out
}

/// Distinct-token overlap of `q` with every group union.
fn union_overlaps(q: &SetRecord, token_groups: &[Vec<u32>], n: usize) -> Vec<u64> {
    let mut counts = vec![0u64; n];
    for t in q.token_ids() {
        if let Some(groups) = token_groups.get(t.index()) {
            for &g in groups {
                counts[g as usize] += 1;
            }
        }
    }
    counts
}

/// `sum_g |G_g| * sum_{Q in db} |GS_g ∩ Q| / |Q|` over distinct tokens, where
/// `GS_g` is the token union of group `g`.
pub fn objective_f(db: &Database, p: &Partition) -> f64 {
    let tg = token_groups(db, p);
    let sizes = p.group_sizes();
    let mut per_group = vec![0.0f64; p.num_groups()];
    for q in db.records() {
        let qlen = q.distinct_len() as f64;
        for (g, c) in union_overlaps(q, &tg, p.num_groups()).into_iter().enumerate() {
            per_group[g] += c as f64 / qlen;
        }
    }
    per_group.iter().zip(&sizes).map(|(f, &s)| s as f64 * f).sum()
}

/// Sum over groups of the number of distinct tokens in the group union.
pub fn union_size_sum(db: &Database, p: &Partition) -> u64 {
    token_groups(db, p).iter().map(|gs| gs.len() as u64).sum()
}

/// Mean over `sample` of `sum_g (|G_g|/|D|) (1 - |GS_g ∩ Q| / |Q|)`.
pub fn expected_pe_estimate(db: &Database, p: &Partition, sample: &[SetRecord]) -> f64 {
    if sample.is_empty() || db.is_empty() {
        return 0.0;
    }
    let tg = token_groups(db, p);
    let sizes = p.group_sizes();
    let total = db.len() as f64;
    let mut acc = 0.0;
    for q in sample {
        let qlen = q.distinct_len() as f64;
        let overlaps = union_overlaps(q, &tg, p.num_groups());
        for (g, c) in overlaps.into_iter().enumerate() {
            acc += sizes[g] as f64 / total * (1.0 - c as f64 / qlen);
        }
    }
    acc / sample.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::set::GroupId;

    fn db(lists: &[&[u32]]) -> Database {
        Database::from_token_lists(lists.iter().map(|l| l.iter().copied())).unwrap()
    }

    fn part(labels: &[u32]) -> Partition {
        let n = labels.iter().max().map_or(0, |m| m + 1) as usize;
        Partition::new(labels.iter().map(|&l| GroupId(l)).collect(), n).unwrap()
    }

    #[test]
    fn pe_examples() {
        assert_eq!(pruning_efficiency(1000, 10, 10, QueryMode::Knn).unwrap(), 1.0);
        assert_eq!(pruning_efficiency(1000, 1000, 10, QueryMode::Knn).unwrap(), 10.0 / 1000.0);
        assert_eq!(pruning_efficiency(100, 40, 15, QueryMode::Range).unwrap(), 0.75);
        assert!(pruning_efficiency(100, 5, 10, QueryMode::Range).is_err());
    }

    #[test]
    fn gpo_identical_pair_is_zero() {
        let d = db(&[&[1, 2], &[1, 2]]);
        assert_eq!(gpo(&d, &part(&[0, 0]), SimilarityMeasure::JACCARD), 0.0);
    }

    #[test]
    fn gpo_single_group_sums_all_ordered_pairs() {
        let d = db(&[&[0, 1, 2], &[1, 3], &[4]]);
        let m = SimilarityMeasure::JACCARD;
        let mut expected = 0.0;
        for x in d.records() {
            for y in d.records() {
                expected += 1.0 - similarity(x, y, m).to_f64();
            }
        }
        assert!((gpo(&d, &part(&[0, 0, 0]), m) - expected).abs() < 1e-12);
        // pairs (0,1): 3/4, (0,2): 1, (1,2): 1, doubled
        assert!((expected - 5.5).abs() < 1e-12);
    }

    #[test]
    fn gpo_prefers_balanced_split_under_uniform_distance() {
        // Four pairwise token-disjoint sets: every distance is 1.
        let d = db(&[&[0], &[1], &[2], &[3]]);
        let m = SimilarityMeasure::JACCARD;
        let balanced = gpo(&d, &part(&[0, 0, 1, 1]), m);
        let skewed = gpo(&d, &part(&[0, 0, 0, 1]), m);
        assert_eq!(balanced, 4.0);
        assert_eq!(skewed, 6.0);
    }

    #[test]
    fn f_examples() {
        // single group where every query token is in the union: |D|^2
        let d = db(&[&[0, 1], &[1, 2], &[2, 3]]);
        assert!((objective_f(&d, &part(&[0, 0, 0])) - 9.0).abs() < 1e-12);
        // token-disjoint groups, queries fully inside their own group
        let d = db(&[&[0, 1], &[0], &[1], &[5, 6], &[6]]);
        assert!((objective_f(&d, &part(&[0, 0, 0, 1, 1])) - 13.0).abs() < 1e-12);
        // singleton groups with no cross overlap: |D|
        let d = db(&[&[0], &[1], &[2]]);
        assert!((objective_f(&d, &part(&[0, 1, 2])) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn union_sizes() {
        let d = db(&[&[0, 1], &[1, 2], &[5]]);
        assert_eq!(union_size_sum(&d, &part(&[0, 0, 0])), 4);
        assert_eq!(union_size_sum(&d, &part(&[0, 0, 1])), 4);
        assert_eq!(union_size_sum(&d, &part(&[0, 1, 1])), 5);
    }

    #[test]
    fn expected_pe_examples() {
        let d = db(&[&[0, 1], &[0, 1], &[0, 1]]);
        let sample = d.records().to_vec();
        assert_eq!(expected_pe_estimate(&d, &part(&[0, 1, 2]), &sample), 0.0);

        // token-disjoint equal groups, one query per group: 1 - 1/n
        let d = db(&[&[0], &[0], &[1], &[1], &[2], &[2]]);
        let p = part(&[0, 0, 1, 1, 2, 2]);
        let sample = vec![d.get(0).clone(), d.get(2).clone(), d.get(4).clone()];
        assert!((expected_pe_estimate(&d, &p, &sample) - (1.0 - 1.0 / 3.0)).abs() < 1e-12);

        // n = 1: 1 - mean UB
        let d = db(&[&[0, 1], &[2]]);
        let q = SetRecord::from_tokens(0, [0, 7]).unwrap();
        assert!((expected_pe_estimate(&d, &part(&[0, 0]), &[q]) - 0.5).abs() < 1e-12);
    }
}
