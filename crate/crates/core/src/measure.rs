//! Set similarity measures and the per-group upper bound they admit.
//!
//! Every measure here satisfies two conditions: restricting a candidate to
//! its overlap with the query never lowers the similarity, and shrinking that
//! overlap never raises it. Under those conditions the similarity between the
//! query and the part of the query present in a group's token union bounds
//! the similarity of every member of the group, and the bound is attained
//! when a member equals that part.

use std::fmt;
use std::str::FromStr;

use crate::error::Error;
use crate::score::Score;
use crate::set::SetRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum MeasureKind {
    #[default]
    Jaccard,
    Cosine,
    Dice,
}

/// Whether multiplicities count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Semantics {
    /// Distinct tokens only.
    #[default]
    Set,
    /// Intersection is `sum(min(count))`, union `sum(max(count))`, sizes are
    /// total counts.
    Bag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct SimilarityMeasure {
    pub kind: MeasureKind,
    pub semantics: Semantics,
}

impl SimilarityMeasure {
    pub const JACCARD: Self = Self::new(MeasureKind::Jaccard, Semantics::Set);
    pub const COSINE: Self = Self::new(MeasureKind::Cosine, Semantics::Set);
    pub const DICE: Self = Self::new(MeasureKind::Dice, Semantics::Set);

    pub const fn new(kind: MeasureKind, semantics: Semantics) -> Self {
        Self { kind, semantics }
    }

    pub const fn bag(self) -> Self {
        Self { kind: self.kind, semantics: Semantics::Bag }
    }

    pub fn all() -> [Self; 6] {
        use MeasureKind::*;
        use Semantics::*;
        [
            Self::new(Jaccard, Set),
            Self::new(Cosine, Set),
            Self::new(Dice, Set),
            Self::new(Jaccard, Bag),
            Self::new(Cosine, Bag),
            Self::new(Dice, Bag),
        ]
    }

    /// Size of a record under this measure's semantics.
    #[inline]
    pub fn size_of(&self, s: &SetRecord) -> u64 {
        match self.semantics {
            Semantics::Set => s.distinct_len(),
            Semantics::Bag => s.total_len(),
        }
    }

    /// Similarity from the intersection size and the two operand sizes.
    pub fn from_overlap(&self, inter: u64, x: u64, y: u64) -> Score {
        debug_assert!(x > 0 && y > 0 && inter <= x.min(y));
        match self.kind {
            MeasureKind::Jaccard => Score::ratio(inter, x + y - inter),
            MeasureKind::Dice => Score::ratio(2 * inter, x + y),
            MeasureKind::Cosine => Score::sqrt_ratio(inter * inter, x * y),
        }
    }
}

impl fmt::Display for SimilarityMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            MeasureKind::Jaccard => "jaccard",
            MeasureKind::Cosine => "cosine",
            MeasureKind::Dice => "dice",
        };
        match self.semantics {
            Semantics::Set => f.write_str(kind),
            Semantics::Bag => write!(f, "{kind}-bag"),
        }
    }
}

impl FromStr for SimilarityMeasure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, semantics) = match s.strip_suffix("-bag") {
            Some(k) => (k, Semantics::Bag),
            None => (s, Semantics::Set),
        };
        let kind = match kind {
            "jaccard" => MeasureKind::Jaccard,
            "cosine" => MeasureKind::Cosine,
            "dice" => MeasureKind::Dice,
            other => return Err(Error::InvalidArgument(format!("unknown measure '{other}'"))),
        };
        Ok(Self { kind, semantics })
    }
}

/// Intersection size of two records under the given semantics.
pub fn overlap(x: &SetRecord, y: &SetRecord, semantics: Semantics) -> u64 {
    let (a, b) = (x.tokens(), y.tokens());
    let (mut i, mut j, mut acc) = (0, 0, 0u64);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                acc += match semantics {
                    Semantics::Set => 1,
                    Semantics::Bag => a[i].1.min(b[j].1) as u64,
                };
                i += 1;
                j += 1;
            }
        }
    }
    acc
}

/// Exact similarity of two records.
pub fn similarity(x: &SetRecord, y: &SetRecord, m: SimilarityMeasure) -> Score {
    let inter = overlap(x, y, m.semantics);
    m.from_overlap(inter, m.size_of(x), m.size_of(y))
}

/// Upper bound on the similarity between `q` and any set whose overlap with
/// `q` is contained in `R`, where `r` is the size of `R` under the measure's
/// semantics (distinct query tokens present, or their query multiplicities
/// summed under bag semantics).
pub fn group_upper_bound(q: &SetRecord, r: u64, m: SimilarityMeasure) -> Score {
    bound_from_sizes(m.size_of(q), r, m)
}

/// [`group_upper_bound`] from the query size directly.
#[inline]
pub fn bound_from_sizes(q_size: u64, r: u64, m: SimilarityMeasure) -> Score {
    debug_assert!(r <= q_size);
    if r == 0 {
        return Score::ZERO;
    }
    match m.kind {
        MeasureKind::Jaccard => Score::ratio(r, q_size),
        MeasureKind::Dice => Score::ratio(2 * r, q_size + r),
        MeasureKind::Cosine => Score::sqrt_ratio(r, q_size),
    }
}
