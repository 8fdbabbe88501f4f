//! Byte Pair Encoding over base token ids.
//!
//! Sequences have no word boundaries, so merges may span a whole sequence.
//! They never cross sequence boundaries and never involve special tokens.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tok::{TokenSequence, NUM_SPECIALS};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BpeError {
    #[error("target vocabulary size {target} must exceed the base size {base}")]
    TargetTooSmall { target: usize, base: usize },
    #[error("sequence does not match the model's base vocabulary ({0})")]
    VocabMismatch(String),
    #[error("token id {id} is outside the model vocabulary of {size}")]
    UnknownId { id: u32, size: usize },
    #[error("sequence is already BPE-encoded")]
    AlreadyEncoded,
    #[error("sequence is not BPE-encoded")]
    NotEncoded,
    #[error("bad model file: {0}")]
    Json(String),
}

pub type Pair = (u32, u32);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BpeModel {
    pub base_vocab_size: usize,
    /// Merge `i` creates id `base_vocab_size + i`.
    pub merges: Vec<Pair>,
    #[serde(skip)]
    pub target_size: usize,
}

impl BpeModel {
    pub fn vocab_size(&self) -> usize {
        self.base_vocab_size + self.merges.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, BpeError> {
        let mut model: BpeModel =
            serde_json::from_str(text).map_err(|e| BpeError::Json(e.to_string()))?;
        for (i, &(l, r)) in model.merges.iter().enumerate() {
            let limit = (model.base_vocab_size + i) as u32;
            if l >= limit || r >= limit || l < NUM_SPECIALS || r < NUM_SPECIALS {
                return Err(BpeError::Json(format!("merge {i} ({l}, {r}) is invalid")));
            }
        }
        model.target_size = model.vocab_size();
        Ok(model)
    }

    fn ranks(&self) -> HashMap<Pair, u32> {
        self.merges
            .iter()
            .enumerate()
            .map(|(i, &p)| (p, i as u32))
            .collect()
    }

    fn check_base(&self, seq: &TokenSequence) -> Result<(), BpeError> {
        if let Some(&id) = seq.ids.iter().find(|&&id| id as usize >= self.base_vocab_size) {
            return Err(BpeError::VocabMismatch(format!(
                "id {id} is not a base id (base size {})",
                self.base_vocab_size
            )));
        }
        Ok(())
    }
}

fn eligible(id: u32) -> bool {
    id >= NUM_SPECIALS
}

/// Adds the non-overlapping, left-to-right pair counts of `ids` into `counts`,
/// scaled by `sign`.
fn count_pairs(ids: &[u32], counts: &mut HashMap<Pair, i64>, sign: i64) {
    let mut i = 0;
    while i + 1 < ids.len() {
        let pair = (ids[i], ids[i + 1]);
        if !eligible(pair.0) || !eligible(pair.1) {
            i += 1;
            continue;
        }
        *counts.entry(pair).or_insert(0) += sign;
        // a run like x x x holds only one non-overlapping (x, x)
        if pair.0 == pair.1 && i + 2 < ids.len() && ids[i + 2] == pair.0 {
            i += 2;
        } else {
            i += 1;
        }
    }
}

/// Replaces every non-overlapping, left-to-right occurrence of `pair`.
fn merge_pair(ids: &[u32], pair: Pair, new_id: u32) -> Vec<u32> {
    let mut out = Vec::with_capacity(ids.len());
    let mut i = 0;
    while i < ids.len() {
        if i + 1 < ids.len() && (ids[i], ids[i + 1]) == pair {
            out.push(new_id);
            i += 2;
        } else {
            out.push(ids[i]);
            i += 1;
        }
    }
    out
}

/// Learns merges until `target_size` ids exist or no pair occurs twice.
///
/// The most frequent pair wins; ties go to the smallest `(left, right)`.
pub fn bpe_train(corpus: &[TokenSequence], target_size: usize) -> Result<BpeModel, BpeError> {
    let base = match corpus.first() {
        Some(seq) => crate::tok::build_vocab(seq.scheme).len(),
        None => 0,
    };
    if let Some(seq) = corpus.iter().find(|s| s.is_bpe) {
        return Err(BpeError::VocabMismatch(format!(
            "{} sequence is already encoded",
            seq.scheme
        )));
    }
    if let Some(seq) = corpus.iter().find(|s| s.scheme != corpus[0].scheme) {
        return Err(BpeError::VocabMismatch(format!(
            "mixed schemes {} and {}",
            corpus[0].scheme, seq.scheme
        )));
    }
    let base = base.max(NUM_SPECIALS as usize);
    train_ids(
        corpus.iter().map(|s| s.ids.clone()).collect(),
        base,
        target_size,
    )
}

/// Training over raw id sequences drawn from a vocabulary of `base` ids.
pub fn train_ids(
    mut seqs: Vec<Vec<u32>>,
    base: usize,
    target_size: usize,
) -> Result<BpeModel, BpeError> {
    if target_size <= base {
        return Err(BpeError::TargetTooSmall {
            target: target_size,
            base,
        });
    }
    if let Some(&id) = seqs.iter().flatten().find(|&&id| id as usize >= base) {
        return Err(BpeError::UnknownId { id, size: base });
    }

    let mut counts: HashMap<Pair, i64> = seqs
        .par_iter()
        .map(|s| {
            let mut c = HashMap::new();
            count_pairs(s, &mut c, 1);
            c
        })
        .reduce(HashMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_insert(0) += v;
            }
            a
        });
    let mut where_seen: HashMap<Pair, BTreeSet<usize>> = HashMap::new();
    for (si, s) in seqs.iter().enumerate() {
        for w in s.windows(2) {
            where_seen.entry((w[0], w[1])).or_default().insert(si);
        }
    }
    let mut heap: BinaryHeap<(i64, Reverse<Pair>)> =
        counts.iter().map(|(&p, &c)| (c, Reverse(p))).collect();

    let mut merges = Vec::new();
    while base + merges.len() < target_size {
        let best = loop {
            match heap.pop() {
                None => break None,
                // stale heap entries are skipped
                Some((c, Reverse(p))) if counts.get(&p) == Some(&c) => break Some((c, p)),
                Some(_) => continue,
            }
        };
        let Some((count, pair)) = best else { break };
        if count < 2 {
            break;
        }
        let new_id = (base + merges.len()) as u32;
        merges.push(pair);

        let affected = where_seen.remove(&pair).unwrap_or_default();
        let mut delta: HashMap<Pair, i64> = HashMap::new();
        for si in affected {
            let old = &seqs[si];
            if !old.windows(2).any(|w| (w[0], w[1]) == pair) {
                continue;
            }
            let new = merge_pair(old, pair, new_id);
            count_pairs(old, &mut delta, -1);
            count_pairs(&new, &mut delta, 1);
            for w in new.windows(2) {
                if w[0] == new_id || w[1] == new_id {
                    where_seen.entry((w[0], w[1])).or_default().insert(si);
                }
            }
            seqs[si] = new;
        }
        let mut touched: Vec<(Pair, i64)> = delta.into_iter().filter(|&(_, d)| d != 0).collect();
        touched.sort_unstable();
        for (p, d) in touched {
            let c = counts.entry(p).or_insert(0);
            *c += d;
            if *c > 0 {
                heap.push((*c, Reverse(p)));
            } else {
                counts.remove(&p);
            }
        }
    }

    Ok(BpeModel {
        base_vocab_size: base,
        merges,
        target_size,
    })
}

pub fn bpe_encode(seq: &TokenSequence, model: &BpeModel) -> Result<TokenSequence, BpeError> {
    if seq.is_bpe {
        return Err(BpeError::AlreadyEncoded);
    }
    model.check_base(seq)?;
    let ranks = model.ranks();
    Ok(TokenSequence {
        scheme: seq.scheme,
        ids: encode_ids(&seq.ids, model, &ranks),
        is_bpe: true,
    })
}

/// Equivalent to applying every merge in learned order: the lowest-ranked
/// pair present can never be recreated by a later merge.
fn encode_ids(ids: &[u32], model: &BpeModel, ranks: &HashMap<Pair, u32>) -> Vec<u32> {
    let mut ids = ids.to_vec();
    loop {
        let best = ids
            .windows(2)
            .filter_map(|w| ranks.get(&(w[0], w[1])))
            .min()
            .copied();
        let Some(rank) = best else { return ids };
        let pair = model.merges[rank as usize];
        ids = merge_pair(&ids, pair, model.base_vocab_size as u32 + rank);
    }
}

pub fn bpe_decode(seq: &TokenSequence, model: &BpeModel) -> Result<TokenSequence, BpeError> {
    if !seq.is_bpe {
        return Err(BpeError::NotEncoded);
    }
    let size = model.vocab_size();
    let mut out = Vec::with_capacity(seq.ids.len() * 2);
    for &id in &seq.ids {
        if id as usize >= size {
            return Err(BpeError::UnknownId { id, size });
        }
        expand(id, model, &mut out);
    }
    Ok(TokenSequence {
        scheme: seq.scheme,
        ids: out,
        is_bpe: false,
    })
}

fn expand(id: u32, model: &BpeModel, out: &mut Vec<u32>) {
    let mut stack = vec![id];
    while let Some(id) = stack.pop() {
        match (id as usize).checked_sub(model.base_vocab_size) {
            Some(i) => {
                let (l, r) = model.merges[i];
                stack.push(r);
                stack.push(l);
            }
            None => out.push(id),
        }
    }
}

/// Base tokens per encoded token over a corpus.
pub fn compression_ratio(base: &[TokenSequence], encoded: &[TokenSequence]) -> f64 {
    let b: usize = base.iter().map(TokenSequence::len).sum();
    let e: usize = encoded.iter().map(TokenSequence::len).sum();
    if e == 0 {
        1.0
    } else {
        b as f64 / e as f64
    }
}
