//! Long-term association weights.
//!
//! Word-association norms arrive as CSV in one of two shapes, auto-detected
//! from the header:
//!
//! * an aggregated edge list with `cue,response,strength` columns, or
//! * raw per-participant responses with `cue,R1[,R2,R3]` columns, which are
//!   aggregated here (strength = response count / total responses for the
//!   cue over the chosen response positions).
//!
//! Loaded norms are validated (per-cue strengths must not sum above 1),
//! filtered (self-loops out, weak edges below `min_strength` out), then
//! restricted to a vocabulary as a binary directed item graph. The graph
//! drives the plasticity gate and the matched-size random control.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoder::{ItemCode, Vocabulary};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseSet {
    /// First responses only.
    R1,
    /// First, second and third responses pooled.
    R123,
}

impl Default for ResponseSet {
    fn default() -> Self {
        ResponseSet::R123
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadOptions {
    /// Edges with strength below this are dropped (>= keeps).
    pub min_strength: f64,
    pub response_set: ResponseSet,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            min_strength: 0.01,
            response_set: ResponseSet::R123,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub rows_read: usize,
    pub edges_kept: usize,
    pub self_loops_dropped: usize,
    pub below_min_dropped: usize,
    /// Raw format only: blank/NA response slots.
    pub missing_responses: usize,
    pub cues: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssocEdge {
    pub cue: String,
    pub response: String,
    pub strength: f64,
}

/// Filtered association norms, edges sorted by (cue, response).
#[derive(Debug, Clone, Default)]
pub struct AssociationNorms {
    edges: Vec<AssocEdge>,
}

fn norm_token(raw: &str) -> String {
    raw.trim().to_lowercase()
}

fn is_missing(raw: &str) -> bool {
    let t = raw.trim();
    t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("unknown word")
}

impl AssociationNorms {
    pub fn load(path: &Path, opts: &LoadOptions) -> Result<(Self, LoadReport)> {
        let file = File::open(path).map_err(|e| Error::load(path, e.to_string()))?;
        Self::from_reader(file, opts).map_err(|e| match e {
            Error::Load { reason, .. } => Error::load(path, reason),
            other => other,
        })
    }

    /// Parses either CSV shape; see the module docs.
    pub fn from_reader(reader: impl Read, opts: &LoadOptions) -> Result<(Self, LoadReport)> {
        if !(0.0..=1.0).contains(&opts.min_strength) {
            return Err(Error::config("min_strength must lie in [0, 1]"));
        }
        let mut csv = csv::ReaderBuilder::new()
            .flexible(false)
            .from_reader(reader);
        let headers: Vec<String> = csv
            .headers()
            .map_err(|e| Error::load("<reader>", e.to_string()))?
            .iter()
            .map(|h| h.trim().to_lowercase())
            .collect();
        let col = |name: &str| headers.iter().position(|h| h == name);

        let mut report = LoadReport::default();
        // strength-weighted edges per cue and the per-cue strength sums
        let mut per_cue: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();

        if let (Some(ci), Some(ri), Some(si)) = (col("cue"), col("response"), col("strength")) {
            for (line, record) in csv.records().enumerate() {
                let record = record.map_err(|e| Error::load("<reader>", e.to_string()))?;
                report.rows_read += 1;
                let cue = norm_token(&record[ci]);
                let response = norm_token(&record[ri]);
                let strength: f64 = record[si].trim().parse().map_err(|_| {
                    Error::load(
                        "<reader>",
                        format!("row {}: unparseable strength {:?}", line + 2, &record[si]),
                    )
                })?;
                if cue.is_empty() || response.is_empty() {
                    return Err(Error::load(
                        "<reader>",
                        format!("row {}: empty cue or response", line + 2),
                    ));
                }
                if !(strength > 0.0 && strength <= 1.0) {
                    return Err(Error::load(
                        "<reader>",
                        format!("row {}: strength {} outside (0, 1]", line + 2, strength),
                    ));
                }
                *per_cue.entry(cue).or_default().entry(response).or_insert(0.0) += strength;
            }
        } else if let Some(ci) = col("cue") {
            let mut response_cols: Vec<usize> = Vec::new();
            if let Some(i) = col("r1") {
                response_cols.push(i);
            }
            if opts.response_set == ResponseSet::R123 {
                response_cols.extend(col("r2"));
                response_cols.extend(col("r3"));
            }
            if response_cols.is_empty() {
                return Err(Error::load(
                    "<reader>",
                    format!("unrecognized header {:?}: need cue,response,strength or cue,R1[,R2,R3]", headers),
                ));
            }
            // counts then normalize per cue by total responses given
            let mut counts: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
            for record in csv.records() {
                let record = record.map_err(|e| Error::load("<reader>", e.to_string()))?;
                report.rows_read += 1;
                let cue = norm_token(&record[ci]);
                if cue.is_empty() {
                    continue;
                }
                for &rc in &response_cols {
                    let raw = record.get(rc).unwrap_or("");
                    if is_missing(raw) {
                        report.missing_responses += 1;
                        continue;
                    }
                    *counts.entry(cue.clone()).or_default().entry(norm_token(raw)).or_insert(0) += 1;
                }
            }
            for (cue, responses) in counts {
                let total: u64 = responses.values().sum();
                if total == 0 {
                    continue;
                }
                let strengths = responses
                    .into_iter()
                    .map(|(r, c)| (r, c as f64 / total as f64))
                    .collect();
                per_cue.insert(cue, strengths);
            }
        } else {
            return Err(Error::load(
                "<reader>",
                format!("unrecognized header {:?}: need cue,response,strength or cue,R1[,R2,R3]", headers),
            ));
        }

        // Per-cue strengths describe fractions of a response distribution;
        // a sum above 1 means the file is inconsistent.
        for (cue, responses) in &per_cue {
            let sum: f64 = responses.values().sum();
            if sum > 1.0 + 1e-9 {
                return Err(Error::load(
                    "<reader>",
                    format!("cue {:?}: strengths sum to {sum}, above 1", cue),
                ));
            }
        }

        let mut edges = Vec::new();
        for (cue, responses) in per_cue {
            for (response, strength) in responses {
                if response == cue {
                    report.self_loops_dropped += 1;
                } else if strength < opts.min_strength {
                    report.below_min_dropped += 1;
                } else {
                    edges.push(AssocEdge {
                        cue: cue.clone(),
                        response,
                        strength,
                    });
                }
            }
        }
        report.edges_kept = edges.len();
        report.cues = edges
            .iter()
            .map(|e| e.cue.as_str())
            .collect::<BTreeSet<_>>()
            .len();
        Ok((AssociationNorms { edges }, report))
    }

    pub fn edges(&self) -> &[AssocEdge] {
        &self.edges
    }

    pub fn strength(&self, cue: &str, response: &str) -> Option<f64> {
        self.edges
            .iter()
            .find(|e| e.cue == cue && e.response == response)
            .map(|e| e.strength)
    }
}

/// Binary directed graph over vocabulary items: `out[i]` lists the items
/// associated from item `i`, sorted. Strengths are binarized away once the
/// min-strength filter has run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemGraph {
    out: Vec<Vec<ItemCode>>,
}

impl ItemGraph {
    pub fn empty(vocab: &Vocabulary) -> Self {
        ItemGraph {
            out: vec![Vec::new(); vocab.len()],
        }
    }

    /// Keeps the edges whose endpoints are both registered items.
    pub fn from_norms(norms: &AssociationNorms, vocab: &Vocabulary) -> Self {
        let mut graph = Self::empty(vocab);
        for edge in norms.edges() {
            let (Some(a), Some(b)) = (vocab.lookup(&edge.cue), vocab.lookup(&edge.response))
            else {
                continue;
            };
            graph.out[a.0 as usize].push(b);
        }
        for row in &mut graph.out {
            row.sort_unstable();
            row.dedup();
        }
        graph
    }

    /// Uniform random control: the same number of edges as `edge_count`,
    /// drawn without replacement from ordered item pairs, excluding
    /// self-pairs and the listed items (the sequence-start marker).
    pub fn random_control(
        vocab: &Vocabulary,
        edge_count: usize,
        exclude: &[ItemCode],
        seed: u64,
    ) -> Result<Self> {
        let items: Vec<ItemCode> = (0..vocab.len() as u32)
            .map(ItemCode)
            .filter(|c| !exclude.contains(c))
            .collect();
        let universe = items.len().saturating_mul(items.len().saturating_sub(1));
        if edge_count > universe {
            return Err(Error::config(format!(
                "cannot draw {edge_count} distinct edges from {universe} ordered pairs"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut chosen: HashSet<(u32, u32)> = HashSet::new();
        let mut graph = Self::empty(vocab);
        while chosen.len() < edge_count {
            let a = items[rng.gen_range(0..items.len())];
            let b = items[rng.gen_range(0..items.len())];
            if a == b || !chosen.insert((a.0, b.0)) {
                continue;
            }
            graph.out[a.0 as usize].push(b);
        }
        for row in &mut graph.out {
            row.sort_unstable();
        }
        Ok(graph)
    }

    /// Adds one ordered edge, keeping neighbor lists sorted and distinct.
    pub fn insert_edge(&mut self, from: ItemCode, to: ItemCode) {
        let row = &mut self.out[from.0 as usize];
        if let Err(pos) = row.binary_search(&to) {
            row.insert(pos, to);
        }
    }

    pub fn out_neighbors(&self, item: ItemCode) -> &[ItemCode] {
        self.out
            .get(item.0 as usize)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn contains_edge(&self, from: ItemCode, to: ItemCode) -> bool {
        self.out_neighbors(from).binary_search(&to).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.out.iter().map(Vec::len).sum()
    }

    pub fn edge_list(&self) -> Vec<(ItemCode, ItemCode)> {
        let mut edges = Vec::with_capacity(self.edge_count());
        for (i, row) in self.out.iter().enumerate() {
            for &j in row {
                edges.push((ItemCode(i as u32), j));
            }
        }
        edges
    }
}

/// Column-level expansion of the item graph, used by the plasticity gate:
/// when any column of item `i`'s code is active and `i -> j` is an edge,
/// every column of `j`'s code becomes primed for the next step.
#[derive(Debug, Clone)]
pub struct GatePrimer {
    /// column index -> items whose code contains that column
    col_items: Vec<Vec<ItemCode>>,
    /// item -> union of its out-neighbors' code columns, sorted
    primed_by_item: Vec<Vec<u32>>,
}

impl GatePrimer {
    pub fn new(graph: &ItemGraph, vocab: &Vocabulary) -> Result<Self> {
        let mut col_items = vec![Vec::new(); vocab.m_columns() as usize];
        let mut primed_by_item = vec![Vec::new(); vocab.len()];
        for idx in 0..vocab.len() as u32 {
            let item = ItemCode(idx);
            for &col in vocab.encode(item)?.columns() {
                col_items[col as usize].push(item);
            }
            let mut primed = Vec::new();
            for &out in graph.out_neighbors(item) {
                primed.extend_from_slice(vocab.encode(out)?.columns());
            }
            primed.sort_unstable();
            primed.dedup();
            primed_by_item[idx as usize] = primed;
        }
        Ok(GatePrimer {
            col_items,
            primed_by_item,
        })
    }

    /// Columns primed by the items whose codes intersect the active columns.
    pub fn primed_columns(&self, active_columns: &[u32]) -> Vec<u32> {
        let mut items: Vec<ItemCode> = active_columns
            .iter()
            .flat_map(|c| self.col_items[*c as usize].iter().copied())
            .collect();
        items.sort_unstable();
        items.dedup();
        let mut primed: Vec<u32> = items
            .into_iter()
            .flat_map(|i| self.primed_by_item[i.0 as usize].iter().copied())
            .collect();
        primed.sort_unstable();
        primed.dedup();
        primed
    }
}

/// Bundled miniature association fixture (edge-list format) covering the
/// rhyme vocabulary, so runs work without any external download.
pub const BUILTIN_NORMS_CSV: &str = include_str!("../data/mini_wan.csv");

/// Hex SHA-256 of in-memory bytes.
pub fn bytes_sha256(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("{:x}", hasher.finalize())
}

/// Hex SHA-256 of a file, recorded alongside runs for dataset provenance.
pub fn file_sha256(path: &Path) -> Result<String> {
    let mut file = File::open(path).map_err(|e| Error::load(path, e.to_string()))?;
    let mut hasher = Sha256::new();
    std::io::copy(&mut file, &mut hasher).map_err(|e| Error::load(path, e.to_string()))?;
    Ok(format!("{:x}", hasher.finalize()))
}
