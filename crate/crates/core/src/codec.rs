//! Binary index file.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "LES3"  u16 version  u8 flags  u64 groups  u64 universe  u64 sets
//! membership: per group, varint size then delta-coded varint set ids
//! rows:       per token, tag 0x00 + ceil(groups/64) u64 words
//!                     or tag 0x01 + varint count + delta-coded group ids
//! hierarchy:  (hierarchical only) varint tier count, varint level ids,
//!             then per coarse tier: varint group count and, per group,
//!             varint child count + delta-coded child ids
//! u32 CRC-32C of everything above
//! ```
//!
//! Flags: bit 0 hierarchical, bits 1-2 measure kind, bit 3 bag semantics.
//! A row is written dense when more than one group in 32 has its bit set.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{FormatError, Result};
use crate::measure::{MeasureKind, Semantics, SimilarityMeasure};
use crate::set::TokenId;
use crate::tgm::{Htgm, Index, Layout, Tgm};

pub const MAGIC: &[u8; 4] = b"LES3";
pub const VERSION: u16 = 1;

const TAG_DENSE: u8 = 0x00;
const TAG_SPARSE: u8 = 0x01;

fn put_varint(out: &mut Vec<u8>, v: u64) {
    leb128::write::unsigned(out, v).expect("writing to a Vec cannot fail");
}

fn put_deltas(out: &mut Vec<u8>, ids: &[u32]) {
    put_varint(out, ids.len() as u64);
    let mut prev = 0u32;
    for (i, &id) in ids.iter().enumerate() {
        put_varint(out, if i == 0 { id } else { id - prev } as u64);
        prev = id;
    }
}

fn measure_bits(m: SimilarityMeasure) -> u8 {
    let kind = match m.kind {
        MeasureKind::Jaccard => 0,
        MeasureKind::Cosine => 1,
        MeasureKind::Dice => 2,
    };
    (kind << 1) | (u8::from(m.semantics == Semantics::Bag) << 3)
}

impl Index {
    pub fn to_bytes(&self) -> Vec<u8> {
        let fine = self.finest();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(measure_bits(self.measure) | u8::from(self.is_hierarchical()));
        for v in [fine.num_groups(), fine.universe_size(), fine.num_sets()] {
            out.extend_from_slice(&(v as u64).to_le_bytes());
        }
        for members in fine.all_members() {
            put_deltas(&mut out, members);
        }
        let n = fine.num_groups();
        for t in 0..fine.universe_size() {
            let t = TokenId(t as u32);
            let row = fine.row(t);
            let count: u32 = row.iter().map(|w| w.count_ones()).sum();
            if count as usize * 32 > n {
                out.push(TAG_DENSE);
                row.iter().for_each(|w| out.extend_from_slice(&w.to_le_bytes()));
            } else {
                out.push(TAG_SPARSE);
                put_deltas(&mut out, &fine.row_groups(t));
            }
        }
        if let Layout::Hierarchical(h) = &self.layout {
            put_varint(&mut out, h.num_tiers() as u64);
            h.levels().iter().for_each(|&l| put_varint(&mut out, l as u64));
            for tier in 0..h.num_tiers() - 1 {
                let lists = h.child_lists(tier);
                put_varint(&mut out, lists.len() as u64);
                lists.iter().for_each(|kids| put_deltas(&mut out, kids));
            }
        }
        let crc = crc32c::crc32c(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FormatError> {
        if bytes.len() < 4 {
            return Err(FormatError::Truncated);
        }
        if &bytes[..4] != MAGIC {
            return Err(FormatError::BadMagic);
        }
        if bytes.len() < 6 {
            return Err(FormatError::Truncated);
        }
        let found = u16::from_le_bytes([bytes[4], bytes[5]]);
        if found != VERSION {
            return Err(FormatError::VersionMismatch { found, expected: VERSION });
        }
        if bytes.len() < 4 + 2 + 1 + 24 + 4 {
            return Err(FormatError::Truncated);
        }
        let (payload, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        let computed = crc32c::crc32c(payload);
        let parsed = decode(payload);
        if stored != computed {
            return Err(match parsed {
                Err(FormatError::Truncated) => FormatError::Truncated,
                _ => FormatError::Checksum { stored, computed },
            });
        }
        parsed
    }

    pub fn write_to<W: Write>(&self, mut sink: W) -> Result<()> {
        sink.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut source: R) -> Result<Self> {
        let mut bytes = Vec::new();
        source.read_to_end(&mut bytes)?;
        Ok(Self::from_bytes(&bytes)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::from_bytes(&std::fs::read(path)?)?)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl Reader<'_> {
    fn bytes(&mut self, n: usize) -> Result<&[u8], FormatError> {
        if self.buf.len() < n {
            return Err(FormatError::Truncated);
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.bytes(1)?[0])
    }

    fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().expect("8 bytes")))
    }

    fn varint(&mut self) -> Result<u64, FormatError> {
        leb128::read::unsigned(&mut self.buf).map_err(|e| match e {
            leb128::read::Error::IoError(_) => FormatError::Truncated,
            leb128::read::Error::Overflow => FormatError::Malformed("varint overflow".into()),
        })
    }

    fn count(&mut self, limit: usize, what: &str) -> Result<usize, FormatError> {
        let v = self.varint()?;
        if v > limit as u64 {
            return Err(FormatError::Malformed(format!("{what} {v} exceeds {limit}")));
        }
        Ok(v as usize)
    }

    /// Delta-coded ascending ids, each below `bound`.
    fn deltas(&mut self, bound: usize, what: &str) -> Result<Vec<u32>, FormatError> {
        let len = self.count(bound, what)?;
        let mut ids = Vec::with_capacity(len);
        let mut prev = 0u64;
        for i in 0..len {
            let d = self.varint()?;
            if i > 0 && d == 0 {
                return Err(FormatError::Malformed(format!("{what}: repeated id")));
            }
            let id = prev.checked_add(d).filter(|&id| id < bound as u64).ok_or_else(|| {
                FormatError::Malformed(format!("{what}: id out of range"))
            })?;
            ids.push(id as u32);
            prev = id;
        }
        Ok(ids)
    }
}

fn decode(payload: &[u8]) -> Result<Index, FormatError> {
    let mut r = Reader { buf: &payload[6..] };
    let flags = r.u8()?;
    if flags & !0b1111 != 0 {
        return Err(FormatError::Malformed(format!("unknown flags {flags:#04x}")));
    }
    let kind = match (flags >> 1) & 0b11 {
        0 => MeasureKind::Jaccard,
        1 => MeasureKind::Cosine,
        2 => MeasureKind::Dice,
        k => return Err(FormatError::Malformed(format!("unknown measure kind {k}"))),
    };
    let semantics = if flags & 0b1000 != 0 { Semantics::Bag } else { Semantics::Set };
    let measure = SimilarityMeasure::new(kind, semantics);
    let too_big = |v: u64| v > u32::MAX as u64;
    let (n, universe, sets) = (r.u64()?, r.u64()?, r.u64()?);
    if too_big(n) || too_big(universe) || too_big(sets) {
        return Err(FormatError::Malformed("counts exceed 32-bit ids".into()));
    }
    let (n, universe, sets) = (n as usize, universe as usize, sets as usize);
    // Every group, row and member costs at least one byte; reject absurd
    // headers before allocating for them.
    if n + universe + sets > r.buf.len() {
        return Err(FormatError::Truncated);
    }

    let mut members = Vec::with_capacity(n);
    let mut seen = vec![false; sets];
    for _ in 0..n {
        let list = r.deltas(sets, "group member")?;
        for &s in &list {
            if std::mem::replace(&mut seen[s as usize], true) {
                return Err(FormatError::Malformed(format!("set {s} in two groups")));
            }
        }
        members.push(list);
    }
    if seen.contains(&false) {
        return Err(FormatError::Malformed("membership does not cover every set".into()));
    }

    let mut fine = Tgm::empty(n, universe);
    let words = n.div_ceil(64);
    for t in 0..universe {
        let t = TokenId(t as u32);
        match r.u8()? {
            TAG_DENSE => {
                for w in 0..words {
                    let mut word = r.u64()?;
                    if w == words - 1 && n % 64 != 0 && word >> (n % 64) != 0 {
                        return Err(FormatError::Malformed("bit beyond last group".into()));
                    }
                    while word != 0 {
                        fine.set(t, w * 64 + word.trailing_zeros() as usize);
                        word &= word - 1;
                    }
                }
            }
            TAG_SPARSE => {
                for g in r.deltas(n, "row group")? {
                    fine.set(t, g as usize);
                }
            }
            tag => return Err(FormatError::Malformed(format!("unknown row tag {tag:#04x}"))),
        }
    }
    fine.set_members(members);

    let layout = if flags & 1 == 0 {
        Layout::Flat(fine)
    } else {
        let tiers = r.count(64, "tier count")?;
        if tiers == 0 {
            return Err(FormatError::Malformed("hierarchy without tiers".into()));
        }
        let levels = (0..tiers)
            .map(|_| r.varint().map(|l| l as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let mut children = Vec::with_capacity(tiers - 1);
        for _ in 0..tiers - 1 {
            let groups = r.count(n, "tier group count")?;
            let lists = (0..groups)
                .map(|_| r.deltas(n, "child"))
                .collect::<Result<Vec<_>, _>>()?;
            children.push(lists);
        }
        // Child ids must index the tier below.
        for i in 0..children.len() {
            let below = children.get(i + 1).map_or(n, Vec::len);
            if children[i].iter().flatten().any(|&c| c as usize >= below) {
                return Err(FormatError::Malformed("child id out of range".into()));
            }
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(FormatError::Malformed("levels not increasing".into()));
        }
        let h = Htgm::from_finest(fine, levels, children)
            .map_err(|e| FormatError::Malformed(e.to_string()))?;
        Layout::Hierarchical(h)
    };
    if !r.buf.is_empty() {
        return Err(FormatError::Malformed(format!("{} trailing bytes", r.buf.len())));
    }
    Ok(Index { measure, layout })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::l2p::PartitionHierarchy;
    use crate::set::{Database, Partition};

    fn sample() -> (Database, Index, Index) {
        let db = Database::from_token_lists((0..200u32).map(|i| vec![i % 7, 7 + i % 13, 30 + i % 3]))
            .unwrap();
        let labels: Vec<u32> = (0..200).map(|i| i % 70).collect();
        let fine = Partition::from_labels(&labels);
        let flat = Index::flat(&db, &fine, SimilarityMeasure::COSINE.bag());
        let h = PartitionHierarchy::two_level(&fine, 9).unwrap();
        let hier = Index::hierarchical(&db, &h, &[0, 1], SimilarityMeasure::DICE).unwrap();
        (db, flat, hier)
    }

    #[test]
    fn round_trips_are_exact() {
        let (_, flat, hier) = sample();
        for idx in [flat, hier] {
            let bytes = idx.to_bytes();
            let back = Index::from_bytes(&bytes).unwrap();
            assert_eq!(back, idx);
            assert_eq!(back.to_bytes(), bytes);
        }
    }

    #[test]
    fn corruption_is_classified() {
        let (_, flat, _) = sample();
        let bytes = flat.to_bytes();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert_eq!(Index::from_bytes(&bad), Err(FormatError::BadMagic));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(Index::from_bytes(&bad), Err(FormatError::VersionMismatch { found: 9, .. })));
        let mut bad = bytes.clone();
        let mid = bytes.len() / 2;
        bad[mid] ^= 0x10;
        assert!(matches!(Index::from_bytes(&bad), Err(FormatError::Checksum { .. })));
        assert_eq!(Index::from_bytes(&bytes[..bytes.len() / 3]), Err(FormatError::Truncated));
        assert_eq!(Index::from_bytes(&bytes[..3]), Err(FormatError::Truncated));
    }

    #[test]
    fn sparse_and_dense_rows_both_used() {
        let db = Database::from_token_lists((0..100u32).map(|i| vec![i, 200])).unwrap();
        let p = Partition::from_labels(&(0..100).collect::<Vec<_>>());
        let idx = Index::flat(&db, &p, SimilarityMeasure::JACCARD);
        let bytes = idx.to_bytes();
        // all-dense would spend 1 + 16 bytes on each of 201 rows
        assert!(bytes.len() < 201 * 17 / 2, "{}", bytes.len());
        let back = Index::from_bytes(&bytes).unwrap();
        assert_eq!(back.finest().row_groups(TokenId(200)).len(), 100);
        assert_eq!(back, idx);
    }
}
