//! Dataset text format, token dictionaries, and synthetic corpora.
//!
//! A dataset is UTF-8 text with one set per line and whitespace-separated
//! tokens; a token repeated on a line becomes a multiplicity. Dictionaries
//! persist as `id<TAB>token` lines.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};

use crate::error::{Error, Result};
use crate::set::{Database, SetRecord, TokenId};

/// Bijection between raw token strings and dense ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenDictionary {
    forward: HashMap<String, TokenId>,
    reverse: Vec<String>,
}

impl TokenDictionary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Dictionary whose token strings are the decimal ids `0..universe_size`.
    pub fn identity(universe_size: usize) -> Self {
        let mut d = Self::new();
        for t in 0..universe_size {
            d.intern(&t.to_string());
        }
        d
    }

    pub fn len(&self) -> usize {
        self.reverse.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reverse.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<TokenId> {
        self.forward.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.reverse.get(id.index()).map(String::as_str)
    }

    /// Returns the id of `token`, assigning the next id if unseen.
    pub fn intern(&mut self, token: &str) -> TokenId {
        if let Some(id) = self.forward.get(token) {
            return *id;
        }
        let id = TokenId(self.reverse.len() as u32);
        self.forward.insert(token.to_owned(), id);
        self.reverse.push(token.to_owned());
        id
    }

    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        for (id, tok) in self.reverse.iter().enumerate() {
            writeln!(out, "{id}\t{tok}")?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(input: R) -> Result<Self> {
        let mut d = Self::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let (id, tok) = line.split_once('\t').ok_or_else(|| Error::Parse {
                line: lineno,
                message: "expected 'id<TAB>token'".into(),
            })?;
            let id: usize = id.parse().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("bad token id '{id}'"),
            })?;
            if id != d.len() {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("ids must be dense and ordered; expected {}", d.len()),
                });
            }
            if d.forward.contains_key(tok) {
                return Err(Error::Parse { line: lineno, message: format!("duplicate token '{tok}'") });
            }
            d.intern(tok);
        }
        Ok(d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    /// Arbitrary token strings; ids assigned in first-appearance order.
    RawTokens,
    /// Decimal token ids that must already lie in `[0, universe_size)`.
    IntegerIds { universe_size: usize },
}

#[derive(Debug, Clone)]
pub struct Parsed {
    pub db: Database,
    pub dictionary: TokenDictionary,
    /// Number of blank lines that were skipped.
    pub skipped_empty: usize,
}

pub fn parse_dataset<R: BufRead>(input: R, format: Format) -> Result<Parsed> {
    match format {
        Format::RawTokens => {
            let mut dictionary = TokenDictionary::new();
            let (records, skipped_empty) = parse_records(input, &mut dictionary, true, 0)?;
            let db = Database::new(records, dictionary.len())?;
            Ok(Parsed { db, dictionary, skipped_empty })
        }
        Format::IntegerIds { universe_size } => {
            let mut records = Vec::new();
            let mut skipped_empty = 0;
            for (i, line) in input.lines().enumerate() {
                let line = line?;
                let mut ids = Vec::new();
                for tok in line.split_whitespace() {
                    let t: u32 = tok.parse().map_err(|_| Error::Parse {
                        line: i + 1,
                        message: format!("'{tok}' is not a token id"),
                    })?;
                    if t as usize >= universe_size {
                        return Err(Error::Parse {
                            line: i + 1,
                            message: format!("token {t} outside universe of {universe_size}"),
                        });
                    }
                    ids.push(t);
                }
                if ids.is_empty() {
                    skipped_empty += 1;
                    continue;
                }
                records.push(SetRecord::from_tokens(records.len() as u32, ids)?);
            }
            let db = Database::new(records, universe_size)?;
            Ok(Parsed { db, dictionary: TokenDictionary::identity(universe_size), skipped_empty })
        }
    }
}

/// Parses lines against an existing dictionary. Unknown tokens are appended
/// when `open` is set and rejected otherwise. Record ids start at `first_id`.
/// Returns the records and the number of blank lines skipped.
pub fn parse_records<R: BufRead>(
    input: R,
    dictionary: &mut TokenDictionary,
    open: bool,
    first_id: u32,
) -> Result<(Vec<SetRecord>, usize)> {
    let mut records = Vec::new();
    let mut skipped = 0;
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let mut ids = Vec::new();
        for tok in line.split_whitespace() {
            let id = if open {
                dictionary.intern(tok)
            } else {
                dictionary.get(tok).ok_or_else(|| Error::Parse {
                    line: i + 1,
                    message: Error::UnknownToken { token: tok.to_owned(), universe: dictionary.len() }
                        .to_string(),
                })?
            };
            ids.push(id.0);
        }
        if ids.is_empty() {
            skipped += 1;
            continue;
        }
        records.push(SetRecord::from_tokens(first_id + records.len() as u32, ids)?);
    }
    Ok((records, skipped))
}

/// Writes records in the dataset text format, tokens in ascending id order
/// with multiplicities spelled out.
pub fn write_dataset<W: Write>(records: &[SetRecord], dict: &TokenDictionary, mut out: W) -> Result<()> {
    for r in records {
        let mut first = true;
        for &(t, c) in r.tokens() {
            let tok = dict.token(t).ok_or_else(|| {
                Error::InvalidArgument(format!("token {t} missing from dictionary"))
            })?;
            for _ in 0..c {
                if !first {
                    out.write_all(b" ")?;
                }
                out.write_all(tok.as_bytes())?;
                first = false;
            }
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SyntheticMode {
    /// Every token joins every set independently with probability `token_prob`.
    Uniform { token_prob: f64 },
    /// Planted clusters whose member-to-centroid agreement follows a
    /// power-law density with exponent `alpha`; `set_size` is the centroid size.
    PowerLaw { alpha: f64, set_size: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticConfig {
    pub num_sets: usize,
    pub universe_size: usize,
    pub mode: SyntheticMode,
    pub seed: u64,
}

/// Default centroid size for power-law corpora.
pub const DEFAULT_POWER_LAW_SET_SIZE: usize = 8;
/// Sets per planted cluster.
pub const CLUSTER_SIZE: usize = 50;
/// Lower end of the agreement density support.
pub const V_MIN: f64 = 0.01;

impl SyntheticConfig {
    pub fn uniform(num_sets: usize, universe_size: usize, token_prob: f64, seed: u64) -> Self {
        Self { num_sets, universe_size, mode: SyntheticMode::Uniform { token_prob }, seed }
    }

    pub fn power_law(num_sets: usize, universe_size: usize, alpha: f64, seed: u64) -> Self {
        Self {
            num_sets,
            universe_size,
            mode: SyntheticMode::PowerLaw { alpha, set_size: DEFAULT_POWER_LAW_SET_SIZE },
            seed,
        }
    }

    pub fn with_set_size(mut self, size: usize) -> Self {
        if let SyntheticMode::PowerLaw { set_size, .. } = &mut self.mode {
            *set_size = size;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.universe_size == 0 {
            return Err(Error::InvalidArgument("universe size must be positive".into()));
        }
        if self.universe_size > u32::MAX as usize {
            return Err(Error::InvalidArgument("universe size exceeds 32-bit token ids".into()));
        }
        match self.mode {
            SyntheticMode::Uniform { token_prob } => {
                if !(token_prob > 0.0 && token_prob < 1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "token probability {token_prob} must lie in (0, 1)"
                    )));
                }
            }
            SyntheticMode::PowerLaw { alpha, set_size } => {
                if !(alpha >= 1.0 && alpha.is_finite()) {
                    return Err(Error::InvalidArgument(format!("alpha {alpha} must be >= 1")));
                }
                if set_size == 0 || set_size > self.universe_size {
                    return Err(Error::InvalidArgument(format!(
                        "set size {set_size} must lie in [1, {}]",
                        self.universe_size
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A seeded stream of synthetic sets. Continuing the stream after the base
/// corpus yields further sets from the same distribution.
pub struct SetGenerator {
    cfg: SyntheticConfig,
    rng: ChaCha8Rng,
    centroids: Vec<Vec<u32>>,
}

impl SetGenerator {
    pub fn new(cfg: SyntheticConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let centroids = match cfg.mode {
            SyntheticMode::Uniform { .. } => Vec::new(),
            SyntheticMode::PowerLaw { set_size, .. } => {
                let c = (cfg.num_sets / CLUSTER_SIZE).max(1);
                (0..c)
                    .map(|_| {
                        let mut v: Vec<u32> = index::sample(&mut rng, cfg.universe_size, set_size)
                            .into_iter()
                            .map(|t| t as u32)
                            .collect();
                        v.sort_unstable();
                        v
                    })
                    .collect()
            }
        };
        Ok(Self { cfg, rng, centroids })
    }

    pub fn config(&self) -> &SyntheticConfig {
        &self.cfg
    }

    /// Draws the next non-empty set as a sorted token list.
    pub fn next_tokens(&mut self) -> Vec<u32> {
        match self.cfg.mode {
            SyntheticMode::Uniform { token_prob } => loop {
                let set = uniform_set(self.cfg.universe_size, token_prob, &mut self.rng);
                if !set.is_empty() {
                    return set;
                }
            },
            SyntheticMode::PowerLaw { alpha, .. } => {
                let c = self.rng.random_range(0..self.centroids.len());
                let v = power_law_sample(alpha, V_MIN, self.rng.random::<f64>());
                let universe = self.cfg.universe_size;
                planted_member(&self.centroids[c], 1.0 - v, universe, &mut self.rng)
            }
        }
    }

    pub fn next_record(&mut self, id: u32) -> SetRecord {
        SetRecord::from_tokens(id, self.next_tokens()).expect("generators never emit empty sets")
    }
}

/// Generates a full corpus for `cfg`.
pub fn generate(cfg: &SyntheticConfig) -> Result<Database> {
    let mut g = SetGenerator::new(*cfg)?;
    let records = (0..cfg.num_sets).map(|i| g.next_record(i as u32)).collect();
    Database::new(records, cfg.universe_size)
}

pub fn gen_uniform(cfg: &SyntheticConfig) -> Result<Database> {
    match cfg.mode {
        SyntheticMode::Uniform { .. } => generate(cfg),
        _ => Err(Error::InvalidArgument("expected a uniform configuration".into())),
    }
}

pub fn gen_power_law(cfg: &SyntheticConfig) -> Result<Database> {
    match cfg.mode {
        SyntheticMode::PowerLaw { .. } => generate(cfg),
        _ => Err(Error::InvalidArgument("expected a power-law configuration".into())),
    }
}

/// Independent Bernoulli inclusion of every token, drawn by geometric skips.
fn uniform_set<R: Rng>(universe: usize, p: f64, rng: &mut R) -> Vec<u32> {
    let geo = Geometric::new(p).expect("probability validated");
    let mut out = Vec::new();
    let mut next: u64 = 0;
    loop {
        next = next.saturating_add(geo.sample(rng));
        if next >= universe as u64 {
            return out;
        }
        out.push(next as u32);
        next += 1;
    }
}

/// Inverse-CDF draw from the density proportional to `v^-alpha` on
/// `[v_min, 1]`, given a uniform `u` in `[0, 1)`.
pub fn power_law_sample(alpha: f64, v_min: f64, u: f64) -> f64 {
    let v = if (alpha - 1.0).abs() < 1e-12 {
        v_min.powf(1.0 - u)
    } else {
        let a = 1.0 - alpha;
        let lo = v_min.powf(a);
        (lo + u * (1.0 - lo)).powf(1.0 / a)
    };
    v.clamp(v_min, 1.0)
}

/// Copies `centroid`, replacing each token with probability `mutation` by a
/// uniformly drawn token not otherwise present.
pub fn planted_member<R: Rng>(centroid: &[u32], mutation: f64, universe: usize, rng: &mut R) -> Vec<u32> {
    let mut kept = Vec::with_capacity(centroid.len());
    let mut replace = 0usize;
    for &t in centroid {
        if rng.random::<f64>() < mutation {
            replace += 1;
        } else {
            kept.push(t);
        }
    }
    let mut out = kept;
    let mut fresh = Vec::with_capacity(replace);
    // Rejection is cheap: sets are tiny relative to the universe.
    let available = universe.saturating_sub(out.len());
    let replace = replace.min(available);
    while fresh.len() < replace {
        let t = rng.random_range(0..universe) as u32;
        if !out.contains(&t) && !fresh.contains(&t) {
            fresh.push(t);
        }
    }
    out.extend(fresh);
    out.sort_unstable();
    out
}
