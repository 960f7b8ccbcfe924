//! Item encoding: maps discrete tokens to sparse sets of columns.
//!
//! Every vocabulary item owns a fixed set of `columns_per_item` distinct
//! columns drawn uniformly from the `m_columns` available ones. Distinct
//! items are guaranteed distinct column sets. Noise words are drawn the same
//! way but never registered, so they can collide with anything.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reserved token for the start-of-sequence pattern. Contains characters
/// `tokenize` can never emit, so corpus text cannot collide with it.
pub const START_TOKEN: &str = "<start>";

/// Index of a registered vocabulary item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ItemCode(pub u32);

impl fmt::Display for ItemCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A sparse set of column indices: sorted, distinct, all < m_columns of the
/// vocabulary that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sdr {
    columns: Vec<u32>,
}

impl Sdr {
    /// Builds an SDR from raw columns, sorting and validating them.
    pub fn new(mut columns: Vec<u32>, m_columns: u32) -> Result<Self> {
        columns.sort_unstable();
        columns.dedup();
        if columns.is_empty() {
            return Err(Error::config("SDR must contain at least one column"));
        }
        if let Some(&max) = columns.last() {
            if max >= m_columns {
                return Err(Error::config(format!(
                    "SDR column {max} out of range for {m_columns} columns"
                )));
            }
        }
        Ok(Sdr { columns })
    }

    pub fn columns(&self) -> &[u32] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn contains(&self, col: u32) -> bool {
        self.columns.binary_search(&col).is_ok()
    }

    /// Number of columns shared with another SDR.
    pub fn overlap(&self, other: &Sdr) -> usize {
        self.columns
            .iter()
            .filter(|c| other.contains(**c))
            .count()
    }
}

/// Registered token-to-SDR mapping with deterministic column assignment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Vocabulary {
    m_columns: u32,
    columns_per_item: u32,
    seed: u64,
    /// Monotone counter: each registration consumes one stream id, so the
    /// mapping depends only on seed and registration order.
    next_stream: u64,
    tokens: Vec<String>,
    sdrs: Vec<Sdr>,
    #[serde(skip)]
    index: HashMap<String, ItemCode>,
}

impl Vocabulary {
    pub fn new(m_columns: u32, columns_per_item: u32, seed: u64) -> Result<Self> {
        if m_columns == 0 {
            return Err(Error::config("m_columns must be positive"));
        }
        if columns_per_item == 0 || columns_per_item > m_columns {
            return Err(Error::config(format!(
                "columns_per_item must be in 1..={m_columns}, got {columns_per_item}"
            )));
        }
        Ok(Vocabulary {
            m_columns,
            columns_per_item,
            seed,
            next_stream: 0,
            tokens: Vec::new(),
            sdrs: Vec::new(),
            index: HashMap::new(),
        })
    }

    /// Rebuilds the token index after deserialization.
    pub fn rebuild_index(&mut self) {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), ItemCode(i as u32)))
            .collect();
    }

    pub fn m_columns(&self) -> u32 {
        self.m_columns
    }

    pub fn columns_per_item(&self) -> u32 {
        self.columns_per_item
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> impl Iterator<Item = (&str, ItemCode)> {
        self.tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), ItemCode(i as u32)))
    }

    /// Registers a token, assigning it a fresh distinct column set. Returns
    /// the existing code when the token is already registered.
    pub fn register(&mut self, token: &str) -> Result<ItemCode> {
        if token.is_empty() {
            return Err(Error::config("cannot register an empty token"));
        }
        if let Some(code) = self.index.get(token) {
            return Ok(*code);
        }
        let mut rng = self.stream_rng();
        self.next_stream += 1;
        let b = self.columns_per_item as usize;
        let m = self.m_columns as usize;
        for _ in 0..1000 {
            let cols: Vec<u32> = {
                let mut v: Vec<u32> = sample(&mut rng, m, b).iter().map(|c| c as u32).collect();
                v.sort_unstable();
                v
            };
            if self.sdrs.iter().any(|s| s.columns() == cols.as_slice()) {
                continue;
            }
            let code = ItemCode(self.tokens.len() as u32);
            self.tokens.push(token.to_string());
            self.sdrs.push(Sdr { columns: cols });
            self.index.insert(token.to_string(), code);
            return Ok(code);
        }
        Err(Error::config(format!(
            "could not assign a distinct column set for {token:?}: vocabulary saturated \
             ({} items, {} choose {})",
            self.tokens.len(),
            self.m_columns,
            self.columns_per_item
        )))
    }

    /// Registers the reserved start item (idempotent).
    pub fn register_start(&mut self) -> Result<ItemCode> {
        self.register(START_TOKEN)
    }

    pub fn lookup(&self, token: &str) -> Option<ItemCode> {
        self.index.get(token).copied()
    }

    pub fn token(&self, code: ItemCode) -> Result<&str> {
        self.tokens
            .get(code.0 as usize)
            .map(String::as_str)
            .ok_or_else(|| Error::lookup(format!("no item with code {code}")))
    }

    pub fn encode(&self, code: ItemCode) -> Result<&Sdr> {
        self.sdrs
            .get(code.0 as usize)
            .ok_or_else(|| Error::lookup(format!("no item with code {code}")))
    }

    pub fn encode_token(&self, token: &str) -> Result<&Sdr> {
        let code = self
            .lookup(token)
            .ok_or_else(|| Error::lookup(format!("unknown token {token:?}")))?;
        self.encode(code)
    }

    /// Draws an unregistered random word of `noise_columns` distinct columns.
    /// The draw is independent of the registered items, so collisions with
    /// item columns are possible and intended.
    pub fn noise_word(&self, noise_columns: u32, rng: &mut impl Rng) -> Result<Sdr> {
        if noise_columns == 0 || noise_columns > self.m_columns {
            return Err(Error::config(format!(
                "noise_columns must be in 1..={}, got {noise_columns}",
                self.m_columns
            )));
        }
        let mut cols: Vec<u32> = sample(rng, self.m_columns as usize, noise_columns as usize)
            .iter()
            .map(|c| c as u32)
            .collect();
        cols.sort_unstable();
        Ok(Sdr { columns: cols })
    }

    fn stream_rng(&self) -> ChaCha8Rng {
        // Mix the stream counter into the seed so each registration gets an
        // independent deterministic stream regardless of how many draws the
        // previous registration consumed.
        let mixed = self
            .seed
            .wrapping_mul(0x9e37_79b9_7f4a_7c15)
            .wrapping_add(self.next_stream.wrapping_mul(0xbf58_476d_1ce4_e5b9));
        ChaCha8Rng::seed_from_u64(mixed)
    }
}

/// Lowercased stopword set loaded from a one-token-per-line file.
#[derive(Debug, Clone, Default)]
pub struct Stopwords {
    words: std::collections::HashSet<String>,
}

impl Stopwords {
    /// The 100 most common English words, shipped with the crate.
    pub fn builtin() -> Self {
        Self::parse(include_str!("../data/stopwords_en_top100.txt"))
    }

    pub fn empty() -> Self {
        Stopwords::default()
    }

    /// Parses stopword text: one token per line, `#` starts a comment,
    /// blank lines ignored, tokens lowercased.
    pub fn parse(text: &str) -> Self {
        let words = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| l.to_lowercase())
            .collect();
        Stopwords { words }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::load(path, e.to_string()))?;
        Ok(Self::parse(&text))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.words.contains(token)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Splits a line into lowercase word tokens and drops stopwords.
/// Any non-alphanumeric character separates tokens.
pub fn tokenize(line: &str, stopwords: &Stopwords) -> Vec<String> {
    line.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .filter(|t| !stopwords.contains(t))
        .collect()
}
