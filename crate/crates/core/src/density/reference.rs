//! Count-based reference model.
//!
//! Each position is predicted from a context made of three parts:
//!
//! * its role (which weather/camera attribute, asset token, or pose digit),
//! * a marker: the owning agent's family for pose digits of non-ego agents,
//!   a fixed ego marker for the ego, nothing otherwise,
//! * the tokens before it inside its group (weather block, camera block,
//!   asset pair, or the three digits of one pose scalar), cut at the first
//!   masked one.
//!
//! Training stores counts for every prefix length, so a context cut short by
//! masking is still a well-estimated marginal. Probabilities are
//! `(count + α) / (total + α·V)` with `V` the slot class vocabulary size.

use super::{validate_sequence, Categorical, MaskedSequenceModel};
use crate::codec::{
    CodecSchema, SlotClass, Token, TokenSequence, AGENT_TOKENS, CAMERA_TOKENS, HEADER_TOKENS, WEATHER_TOKENS,
};
use crate::error::{Error, Result};
use crate::scene::Family;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;

pub const DEFAULT_ALPHA: f64 = 0.1;

const MAX_PREFIX: usize = WEATHER_TOKENS - 1;
const MARK_EGO: u8 = 254;
const MARK_ANY: u8 = 255;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct ContextKey {
    role: u8,
    marker: u8,
    len: u8,
    prefix: [Token; MAX_PREFIX],
}

/// Where a position sits: its role, the first position of its group, and
/// the family-token position whose value is the marker (if any).
#[derive(Debug, Clone, Copy)]
struct Slot {
    role: u8,
    group_start: usize,
    marker: SlotMarker,
}

#[derive(Debug, Clone, Copy)]
enum SlotMarker {
    Any,
    Ego,
    FamilyAt(usize),
}

fn slot_of(p: usize) -> Slot {
    if p < WEATHER_TOKENS {
        return Slot {
            role: p as u8,
            group_start: 0,
            marker: SlotMarker::Any,
        };
    }
    if p < WEATHER_TOKENS + CAMERA_TOKENS {
        return Slot {
            role: p as u8,
            group_start: WEATHER_TOKENS,
            marker: SlotMarker::Any,
        };
    }
    let pose_role = |off: usize| (WEATHER_TOKENS + CAMERA_TOKENS + 2 + off) as u8;
    if p < HEADER_TOKENS {
        let off = p - WEATHER_TOKENS - CAMERA_TOKENS;
        return Slot {
            role: pose_role(off),
            group_start: p - off % 3,
            marker: SlotMarker::Ego,
        };
    }
    let rel = (p - HEADER_TOKENS) % AGENT_TOKENS;
    let base = p - rel;
    match rel {
        0 | 1 => Slot {
            role: (WEATHER_TOKENS + CAMERA_TOKENS + rel) as u8,
            group_start: base,
            marker: SlotMarker::Any,
        },
        _ => {
            let off = rel - 2;
            Slot {
                role: pose_role(off),
                group_start: p - off % 3,
                marker: SlotMarker::FamilyAt(base),
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReferenceDensityModel {
    schema: CodecSchema,
    schema_hash: String,
    alpha: f64,
    sequences: u64,
    table: HashMap<ContextKey, Vec<u32>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PersistedEntry {
    role: u8,
    marker: u8,
    prefix: Vec<Token>,
    counts: Vec<u32>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Persisted {
    schema_hash: String,
    alpha: f64,
    sequences: u64,
    schema: CodecSchema,
    entries: Vec<PersistedEntry>,
}

impl ReferenceDensityModel {
    /// A model with no counts: every prediction is uniform over its class.
    pub fn uniform(schema: CodecSchema, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::Config("smoothing constant must be positive".into()));
        }
        Ok(ReferenceDensityModel {
            schema_hash: schema.hash(),
            schema,
            alpha,
            sequences: 0,
            table: HashMap::new(),
        })
    }

    pub fn train(schema: CodecSchema, corpus: &[TokenSequence], alpha: f64) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::Invalid("training corpus is empty".into()));
        }
        let mut model = Self::uniform(schema, alpha)?;
        for seq in corpus {
            model.observe(seq)?;
        }
        Ok(model)
    }

    /// Add one sequence's counts.
    pub fn observe(&mut self, seq: &TokenSequence) -> Result<()> {
        validate_sequence(&self.schema, seq)?;
        for p in 0..seq.len() {
            let slot = slot_of(p);
            let class = self.schema.class_at(p);
            let range = self.schema.range(class);
            let local = (seq.tokens[p] - range.offset) as usize;
            let markers: &[u8] = match slot.marker {
                SlotMarker::Any => &[MARK_ANY],
                SlotMarker::Ego => &[MARK_EGO],
                SlotMarker::FamilyAt(f) => {
                    let fam = seq.tokens[f] - self.schema.range(SlotClass::AssetFamily).offset;
                    &[fam as u8, MARK_ANY]
                }
            };
            for &marker in markers {
                for len in 0..=(p - slot.group_start) {
                    let key = Self::key(slot, marker, &seq.tokens[slot.group_start..slot.group_start + len]);
                    let counts = self.table.entry(key).or_insert_with(|| vec![0; range.size as usize]);
                    counts[local] += 1;
                }
            }
        }
        self.sequences += 1;
        Ok(())
    }

    fn key(slot: Slot, marker: u8, prefix: &[Token]) -> ContextKey {
        let mut arr = [0; MAX_PREFIX];
        arr[..prefix.len()].copy_from_slice(prefix);
        ContextKey {
            role: slot.role,
            marker,
            len: prefix.len() as u8,
            prefix: arr,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn schema_hash(&self) -> &str {
        &self.schema_hash
    }

    /// Number of training sequences seen.
    pub fn sequences(&self) -> u64 {
        self.sequences
    }

    fn context(&self, seq: &TokenSequence, p: usize, masked: &[usize]) -> ContextKey {
        let slot = slot_of(p);
        let marker = match slot.marker {
            SlotMarker::Any => MARK_ANY,
            SlotMarker::Ego => MARK_EGO,
            SlotMarker::FamilyAt(f) => {
                let range = self.schema.range(SlotClass::AssetFamily);
                let t = seq.tokens[f];
                if masked.contains(&f) || !range.contains(t) || Family::from_index((t - range.offset) as usize).is_none()
                {
                    MARK_ANY
                } else {
                    (t - range.offset) as u8
                }
            }
        };
        let end = (slot.group_start..p).find(|q| masked.contains(q)).unwrap_or(p);
        Self::key(slot, marker, &seq.tokens[slot.group_start..end])
    }

    fn distribution(&self, class: SlotClass, key: &ContextKey) -> Categorical {
        let range = self.schema.range(class);
        let v = range.size as f64;
        let probs = match self.table.get(key) {
            Some(counts) => {
                let total: f64 = counts.iter().map(|&c| f64::from(c)).sum();
                let denom = total + self.alpha * v;
                counts.iter().map(|&c| (f64::from(c) + self.alpha) / denom).collect()
            }
            None => vec![1.0 / v; range.size as usize],
        };
        Categorical {
            class,
            offset: range.offset,
            probs,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut entries: Vec<(&ContextKey, &Vec<u32>)> = self.table.iter().collect();
        entries.sort_by_key(|(k, _)| **k);
        let persisted = Persisted {
            schema_hash: self.schema_hash.clone(),
            alpha: self.alpha,
            sequences: self.sequences,
            schema: self.schema.clone(),
            entries: entries
                .into_iter()
                .map(|(k, c)| PersistedEntry {
                    role: k.role,
                    marker: k.marker,
                    prefix: k.prefix[..k.len as usize].to_vec(),
                    counts: c.clone(),
                })
                .collect(),
        };
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(file, &persisted)?;
        Ok(())
    }

    /// Load a saved model; fails unless its schema hash matches `expected_hash`.
    pub fn load(path: &Path, expected_hash: &str) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let p: Persisted = serde_json::from_reader(file)?;
        let actual = p.schema.hash();
        if p.schema_hash != actual {
            return Err(Error::SchemaMismatch {
                expected: p.schema_hash,
                found: actual,
            });
        }
        if p.schema_hash != expected_hash {
            return Err(Error::SchemaMismatch {
                expected: expected_hash.to_string(),
                found: p.schema_hash,
            });
        }
        let mut model = Self::uniform(p.schema, p.alpha)?;
        model.sequences = p.sequences;
        for e in p.entries {
            if e.prefix.len() > MAX_PREFIX {
                return Err(Error::Invalid("model entry prefix too long".into()));
            }
            let mut prefix = [0; MAX_PREFIX];
            prefix[..e.prefix.len()].copy_from_slice(&e.prefix);
            let key = ContextKey {
                role: e.role,
                marker: e.marker,
                len: e.prefix.len() as u8,
                prefix,
            };
            model.table.insert(key, e.counts);
        }
        Ok(model)
    }
}

impl MaskedSequenceModel for ReferenceDensityModel {
    fn schema(&self) -> &CodecSchema {
        &self.schema
    }

    fn predict_distribution(&self, seq: &TokenSequence, masked: &[usize]) -> Result<Vec<Categorical>> {
        masked
            .iter()
            .map(|&p| {
                if p >= seq.len() {
                    return Err(Error::Invalid(format!("position {p} beyond sequence length {}", seq.len())));
                }
                let key = self.context(seq, p, masked);
                Ok(self.distribution(self.schema.class_at(p), &key))
            })
            .collect()
    }
}
