//! Versioned on-disk form of a gate weight map.
//!
//! The map itself is binary (an item-pair either primes or it doesn't), so
//! the checkpoint is the sparse ordered pair list plus enough context to
//! detect mismatched use: the encoder dimensions and a hash of the
//! vocabulary it was binarized against.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::{ItemCode, Vocabulary};
use crate::error::{Error, Result};
use crate::ltm::{bytes_sha256, ItemGraph};

pub const GATE_CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateCheckpoint {
    pub version: u32,
    /// Hash of the vocabulary (code->token mapping) the codes refer to.
    pub vocab_hash: String,
    pub m_columns: u32,
    pub columns_per_item: u32,
    /// Ordered (from, to) item-code pairs, sorted.
    pub edges: Vec<(u32, u32)>,
}

/// Hash of the code->token mapping; codes are dense so order is canonical.
pub fn vocab_hash(vocab: &Vocabulary) -> String {
    let mut lines = String::new();
    for code in 0..vocab.len() as u32 {
        let token = vocab.token(ItemCode(code)).unwrap_or("");
        lines.push_str(&format!("{code}\t{token}\n"));
    }
    bytes_sha256(lines.as_bytes())
}

impl GateCheckpoint {
    pub fn from_graph(graph: &ItemGraph, vocab: &Vocabulary) -> Self {
        let mut edges: Vec<(u32, u32)> = graph
            .edge_list()
            .into_iter()
            .map(|(a, b)| (a.0, b.0))
            .collect();
        edges.sort_unstable();
        GateCheckpoint {
            version: GATE_CHECKPOINT_VERSION,
            vocab_hash: vocab_hash(vocab),
            m_columns: vocab.m_columns(),
            columns_per_item: vocab.columns_per_item(),
            edges,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::config(format!("encode checkpoint: {e}")))?;
        fs::write(path, json).map_err(|e| Error::load(path, e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::load(path, e.to_string()))?;
        let ck: GateCheckpoint = serde_json::from_str(&text)
            .map_err(|e| Error::load(path, format!("decode checkpoint: {e}")))?;
        if ck.version != GATE_CHECKPOINT_VERSION {
            return Err(Error::load(
                path,
                format!(
                    "unsupported checkpoint version {} (expected {})",
                    ck.version, GATE_CHECKPOINT_VERSION
                ),
            ));
        }
        Ok(ck)
    }

    /// Rebuilds the graph, refusing a vocabulary other than the one the
    /// checkpoint was taken against.
    pub fn to_graph(&self, vocab: &Vocabulary) -> Result<ItemGraph> {
        let hash = vocab_hash(vocab);
        if hash != self.vocab_hash {
            return Err(Error::config(format!(
                "checkpoint vocabulary hash {} does not match {}",
                self.vocab_hash, hash
            )));
        }
        let mut graph = ItemGraph::empty(vocab);
        for &(a, b) in &self.edges {
            graph.insert_edge(ItemCode(a), ItemCode(b));
        }
        Ok(graph)
    }

    /// Column-level connection count implied by the item edges: each pair
    /// fully wires its two items' column sets.
    pub fn column_connections(&self) -> u64 {
        self.edges.len() as u64
            * (self.columns_per_item as u64)
            * (self.columns_per_item as u64)
    }
}
