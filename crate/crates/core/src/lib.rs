//! Exact set similarity search over a learned partitioning.
//!
//! A database of token sets is split into groups; a bitmap over tokens and
//! groups then bounds, for any query, the best similarity a group can
//! offer, so whole groups are skipped without losing exactness.
//!
//! ```
//! use les3_core::{knn_search, Database, Index, Partition, SetRecord, SimilarityMeasure};
//!
//! let db = Database::from_token_lists([vec![0, 1], vec![0, 2], vec![5, 6]]).unwrap();
//! let groups = Partition::from_labels(&[0, 0, 1]);
//! let index = Index::flat(&db, &groups, SimilarityMeasure::JACCARD);
//! let q = SetRecord::from_tokens(0, [0, 1]).unwrap();
//! let hits = knn_search(&index, &db, &q, 1, SimilarityMeasure::JACCARD).unwrap();
//! assert_eq!(hits.hits[0].0, 0);
//! assert_eq!(hits.metrics.groups_pruned, 1);
//! ```

pub mod baselines;
pub mod codec;
pub mod error;
pub mod ingest;
pub mod l2p;
pub mod measure;
pub mod nn;
pub mod objective;
pub mod pipeline;
pub mod ptr;
pub mod query;
pub mod score;
pub mod set;
pub mod tgm;
pub mod updates;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/sets.md")]
    mod sets {}
    #[doc = include_str!("../../../book/src/similarity.md")]
    mod similarity {}
    #[doc = include_str!("../../../book/src/index.md")]
    mod index {}
    #[doc = include_str!("../../../book/src/partitioning.md")]
    mod partitioning {}
    #[doc = include_str!("../../../book/src/queries.md")]
    mod queries {}
    #[doc = include_str!("../../../book/src/updates.md")]
    mod updates {}
    #[doc = include_str!("../../../book/src/file-format.md")]
    mod file_format {}
}

pub use error::{Error, FormatError, Result};
pub use l2p::{build_hierarchy, PartitionHierarchy, TrainConfig};
pub use measure::{similarity, MeasureKind, Semantics, SimilarityMeasure};
pub use pipeline::Method;
pub use query::{brute_force, knn_search, range_search, QueryKind, QueryResult};
pub use score::Score;
pub use set::{Database, GroupId, Partition, SetRecord, TokenId};
pub use tgm::{Index, Tgm, UniverseMode};
