//! Insert experiments: grow an index incrementally and compare its pruning
//! with a rebuilt one, checking every answer against the full scan.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ingest::SetGenerator;
use crate::objective::QueryMode;
use crate::query::{brute_force, knn_search, same_answer, QueryKind};
use crate::set::{Database, SetRecord};
use crate::tgm::{Index, UniverseMode};

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateConfig {
    /// Inserted sets as a fraction of the original database.
    pub ratio: f64,
    pub mode: UniverseMode,
    /// In open mode, chance that a generated token is swapped for a token
    /// outside the original universe.
    pub new_token_fraction: f64,
    pub queries: usize,
    pub k: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateReport {
    pub inserted: usize,
    /// Tokens added to the universe by the inserts.
    pub new_tokens: usize,
    /// Mean kNN pruning efficiency before inserting.
    pub pe_before: f64,
    pub pe_after: f64,
    /// Same queries against an index rebuilt on the enlarged database.
    pub pe_rebuilt: f64,
    pub queries: usize,
    /// Post-insert answers differing from the full scan.
    pub mismatches: usize,
}

impl UpdateReport {
    pub fn exact(&self) -> bool {
        self.mismatches == 0
    }
}

fn mean_pe(index: &Index, db: &Database, queries: &[SetRecord], k: usize) -> Result<(f64, usize)> {
    let mut total = 0.0;
    let mut mismatches = 0;
    for q in queries {
        let got = knn_search(index, db, q, k, index.measure)?;
        let truth = brute_force(db, q, QueryKind::Knn(k), index.measure)?;
        if !same_answer(&got, &truth, QueryKind::Knn(k)) {
            mismatches += 1;
        }
        total += got.pruning_efficiency(db.len(), QueryMode::Knn);
    }
    Ok((total / queries.len().max(1) as f64, mismatches))
}

/// Inserts `ceil(ratio * |db|)` sets drawn from `generator` into copies of
/// `db` and `index`, then measures kNN pruning before, after, and after a
/// rebuild. Post-insert queries are half original sets and half inserted
/// ones.
pub fn run_update_experiment(
    db: &Database,
    index: &Index,
    generator: &mut SetGenerator,
    cfg: &UpdateConfig,
    rebuild: impl Fn(&Database) -> Result<Index>,
) -> Result<UpdateReport> {
    if !(0.0..=1.0).contains(&cfg.ratio) {
        return Err(Error::InvalidArgument(format!("insert ratio {} outside [0, 1]", cfg.ratio)));
    }
    if !(0.0..=1.0).contains(&cfg.new_token_fraction) {
        return Err(Error::InvalidArgument(format!(
            "new token fraction {} outside [0, 1]",
            cfg.new_token_fraction
        )));
    }
    if db.is_empty() || cfg.queries == 0 || cfg.k == 0 {
        return Err(Error::InvalidArgument("need a non-empty database, queries and k".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let old_queries: Vec<SetRecord> =
        (0..cfg.queries).map(|_| db.get(rng.random_range(0..db.len() as u32)).clone()).collect();
    let (pe_before, _) = mean_pe(index, db, &old_queries, cfg.k)?;

    let universe = db.universe_size();
    let count = (cfg.ratio * db.len() as f64).ceil() as usize;
    let mut grown = db.clone();
    let mut updated = index.clone();
    for _ in 0..count {
        let mut tokens = generator.next_tokens();
        if cfg.mode == UniverseMode::Open {
            for t in &mut tokens {
                if rng.random_bool(cfg.new_token_fraction) {
                    *t = (universe + rng.random_range(0..universe.max(1))) as u32;
                }
            }
        }
        let s = SetRecord::from_tokens(0, tokens)?;
        updated.update_insert(&mut grown, s, cfg.mode)?;
    }

    let mut queries = old_queries;
    if count > 0 {
        for q in queries.iter_mut().skip(cfg.queries / 2) {
            let id = db.len() as u32 + rng.random_range(0..count as u32);
            *q = grown.get(id).clone();
        }
    }
    let (pe_after, mismatches) = mean_pe(&updated, &grown, &queries, cfg.k)?;
    let rebuilt = rebuild(&grown)?;
    let (pe_rebuilt, rebuilt_mismatches) = mean_pe(&rebuilt, &grown, &queries, cfg.k)?;
    Ok(UpdateReport {
        inserted: count,
        new_tokens: grown.universe_size() - universe,
        pe_before,
        pe_after,
        pe_rebuilt,
        queries: queries.len(),
        mismatches: mismatches + rebuilt_mismatches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::par_random;
    use crate::ingest::{generate, SyntheticConfig};
    use crate::measure::SimilarityMeasure;

    fn setup(mode: UniverseMode, ratio: f64, fraction: f64) -> UpdateReport {
        let cfg = SyntheticConfig::power_law(400, 300, 2.0, 3);
        let db = generate(&cfg).unwrap();
        let m = SimilarityMeasure::JACCARD;
        let build = |d: &Database| Ok(Index::flat(d, &par_random(d, 8, 1)?, m));
        let index = build(&db).unwrap();
        let mut gen = SetGenerator::new(cfg).unwrap();
        for _ in 0..db.len() {
            gen.next_tokens();
        }
        let ucfg = UpdateConfig { ratio, mode, new_token_fraction: fraction, queries: 20, k: 5, seed: 9 };
        run_update_experiment(&db, &index, &mut gen, &ucfg, build).unwrap()
    }

    #[test]
    fn zero_ratio_changes_nothing() {
        let r = setup(UniverseMode::Closed, 0.0, 0.0);
        assert_eq!(r.inserted, 0);
        assert_eq!(r.pe_before, r.pe_after);
        assert!(r.exact());
    }

    #[test]
    fn closed_and_open_inserts_stay_exact() {
        let r = setup(UniverseMode::Closed, 0.5, 0.0);
        assert_eq!(r.inserted, 200);
        assert!(r.exact());
        assert_eq!(r.new_tokens, 0);
        let r = setup(UniverseMode::Open, 0.5, 0.5);
        assert!(r.exact());
        assert!(r.new_tokens > 0);
    }

    #[test]
    fn rejects_bad_ratio() {
        let db = Database::from_token_lists([vec![0]]).unwrap();
        let index = Index::flat(&db, &par_random(&db, 1, 0).unwrap(), SimilarityMeasure::JACCARD);
        let mut gen = SetGenerator::new(SyntheticConfig::uniform(1, 1, 0.5, 0)).unwrap();
        let cfg = UpdateConfig { ratio: 1.5, mode: UniverseMode::Closed, new_token_fraction: 0.0, queries: 1, k: 1, seed: 0 };
        assert!(run_update_experiment(&db, &index, &mut gen, &cfg, |_| unreachable!()).is_err());
    }
}
