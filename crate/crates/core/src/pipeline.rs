//! One-call construction of a partition and index by any method.

use std::fmt;
use std::str::FromStr;

use crate::baselines::{par_a, par_c, par_d, par_g, par_random, BaselineConfig};
use crate::error::{Error, Result};
use crate::l2p::{build_hierarchy, PartitionHierarchy, TrainConfig};
use crate::measure::SimilarityMeasure;
use crate::ptr::PathTable;
use crate::set::Database;
use crate::tgm::Index;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    L2p,
    ParC,
    ParD,
    ParA,
    ParG,
    Random,
}

impl Method {
    pub const ALL: [Method; 6] =
        [Method::Random, Method::ParC, Method::ParD, Method::ParA, Method::ParG, Method::L2p];

    pub fn name(self) -> &'static str {
        match self {
            Method::L2p => "l2p",
            Method::ParC => "par-c",
            Method::ParD => "par-d",
            Method::ParA => "par-a",
            Method::ParG => "par-g",
            Method::Random => "random",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method {s:?}")))
    }
}

/// Which tiers the index keeps.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Shape {
    /// Finest groups only.
    #[default]
    Flat,
    /// The coarsest and finest hierarchy levels.
    TwoLevel,
    /// Explicit hierarchy levels.
    Levels(Vec<usize>),
}

/// Group count suggested for a database: half a percent of its sets, at
/// least two.
pub fn auto_groups(db_len: usize) -> usize {
    ((db_len as f64 * 0.005).round() as usize).max(2)
}

/// Training schedule aiming at roughly `groups` final groups: an initial
/// cut into about `groups / 8` runs followed by three halving rounds, with
/// more rounds once the initial cut reaches 128 runs.
pub fn l2p_config_for(groups: usize, seed: u64) -> TrainConfig {
    let groups = groups.max(1);
    let mut levels = 0;
    while levels < 3 && (1 << (levels + 1)) <= groups {
        levels += 1;
    }
    let mut init = groups.div_ceil(1 << levels);
    if init > 128 {
        init = 128;
        while 128 << levels < groups {
            levels += 1;
        }
    }
    TrainConfig { init_groups: init, max_levels: levels, seed, ..TrainConfig::default() }
}

/// Partitions `db` into about `groups` groups. Baselines produce two levels:
/// their groups, and coarse groups of eight consecutive group ids.
pub fn partition(db: &Database, method: Method, groups: usize, m: SimilarityMeasure, seed: u64) -> Result<PartitionHierarchy> {
    let cfg = BaselineConfig::new(groups, seed);
    let fine = match method {
        Method::L2p => {
            let pt = PathTable::new(db.universe_size().max(1));
            return build_hierarchy(db, &pt, &l2p_config_for(groups, seed), m);
        }
        Method::Random => par_random(db, groups, seed)?,
        Method::ParC => par_c(db, &cfg, m)?,
        Method::ParD => par_d(db, &cfg, m)?,
        Method::ParA => par_a(db, &cfg, m)?,
        Method::ParG => par_g(db, &cfg, m)?,
    };
    PartitionHierarchy::two_level(&fine, (fine.num_groups() / 8).max(1))
}

/// Builds an index of the requested shape over a hierarchy.
pub fn index_for(db: &Database, h: &PartitionHierarchy, shape: &Shape, m: SimilarityMeasure) -> Result<Index> {
    let last = h.num_levels() - 1;
    match shape {
        Shape::Flat => Ok(Index::flat(db, h.finest(), m)),
        Shape::TwoLevel if last == 0 => Index::hierarchical(db, h, &[0], m),
        Shape::TwoLevel => Index::hierarchical(db, h, &[0, last], m),
        Shape::Levels(levels) => Index::hierarchical(db, h, levels, m),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("kmeans".parse::<Method>().is_err());
    }

    #[test]
    fn auto_group_rule() {
        assert_eq!(auto_groups(10_000), 50);
        assert_eq!(auto_groups(100), 2);
        assert_eq!(auto_groups(1_000_000), 5000);
    }

    #[test]
    fn schedules() {
        let c = l2p_config_for(64, 0);
        assert_eq!((c.init_groups, c.max_levels), (8, 3));
        let c = l2p_config_for(256, 0);
        assert_eq!((c.init_groups, c.max_levels), (32, 3));
        let c = l2p_config_for(50, 0);
        assert_eq!((c.init_groups, c.max_levels), (7, 3));
        let c = l2p_config_for(4, 0);
        assert_eq!((c.init_groups, c.max_levels), (1, 2));
        let c = l2p_config_for(1, 0);
        assert_eq!((c.init_groups, c.max_levels), (1, 0));
        let c = l2p_config_for(5000, 0);
        assert_eq!(c.init_groups, 128);
        assert!(128 << c.max_levels >= 5000);
    }

    #[test]
    fn baseline_hierarchies_have_two_levels() {
        let db = Database::from_token_lists((0..64u32).map(|i| vec![i % 9, 9 + i % 4])).unwrap();
        let h = partition(&db, Method::Random, 16, SimilarityMeasure::JACCARD, 1).unwrap();
        assert_eq!(h.num_levels(), 2);
        assert_eq!(h.level(0).num_groups(), 2);
        let idx = index_for(&db, &h, &Shape::TwoLevel, SimilarityMeasure::JACCARD).unwrap();
        assert!(idx.is_hierarchical());
        assert_eq!(idx.finest().num_groups(), 16);
    }
}
