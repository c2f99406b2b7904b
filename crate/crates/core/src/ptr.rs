//! Path-table set representation.
//!
//! Tokens sit at the leaves of a balanced binary tree of height
//! `h = ceil(log2 |T|)` (at least 1), in token-id order from the left. A
//! token's path records 1 for every step to a left child. Its path-table row
//! is the path followed by the path's complement, so a set encodes as the
//! per-position sum of its tokens' rows: `2h` integers.

use crate::set::{Database, SetRecord, TokenId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Variant {
    /// Path and complement, `2h` positions.
    #[default]
    Full,
    /// Path positions only, `h` positions.
    Half,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathTable {
    height: usize,
    universe_size: usize,
}

/// Per-position token counts of a set.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SetRepresentation(pub Vec<u32>);

impl PathTable {
    pub fn new(universe_size: usize) -> Self {
        assert!(universe_size >= 1, "path table needs a non-empty universe");
        let height = (usize::BITS - (universe_size - 1).leading_zeros()).max(1) as usize;
        Self { height, universe_size }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn universe_size(&self) -> usize {
        self.universe_size
    }

    pub fn dim(&self, variant: Variant) -> usize {
        match variant {
            Variant::Full => 2 * self.height,
            Variant::Half => self.height,
        }
    }

    /// Bit `i` (0-based depth) of the root-to-leaf path of `t`.
    #[inline]
    pub fn path_bit(&self, t: TokenId, i: usize) -> u8 {
        let leaf_bit = (t.0 as u64 >> (self.height - 1 - i)) & 1;
        1 - leaf_bit as u8
    }

    /// The `2h` path-table row of `t`.
    pub fn row(&self, t: TokenId) -> Vec<u8> {
        let h = self.height;
        let mut row = vec![0u8; 2 * h];
        for i in 0..h {
            let b = self.path_bit(t, i);
            row[i] = b;
            row[h + i] = 1 - b;
        }
        row
    }

    pub fn encode(&self, s: &SetRecord, variant: Variant) -> SetRepresentation {
        let h = self.height;
        let mut v = vec![0u32; self.dim(variant)];
        for &(t, c) in s.tokens() {
            debug_assert!(t.index() < self.universe_size, "token outside path table");
            if t.index() >= self.universe_size {
                continue;
            }
            for i in 0..h {
                if self.path_bit(t, i) == 1 {
                    v[i] += c;
                } else if variant == Variant::Full {
                    v[h + i] += c;
                }
            }
        }
        SetRepresentation(v)
    }

    /// Encodes every record, scaled by the largest total set size so inputs
    /// fall in `[0, 1]`.
    pub fn encode_normalized(&self, db: &Database, variant: Variant) -> Vec<Vec<f64>> {
        let scale = db.max_total_len().max(1) as f64;
        db.records()
            .iter()
            .map(|r| self.encode(r, variant).0.iter().map(|&x| x as f64 / scale).collect())
            .collect()
    }
}
