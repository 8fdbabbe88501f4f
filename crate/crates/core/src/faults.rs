//! Structural fault injection into well-formed token sequences.
//!
//! Each injector edits the token stream directly, knowing only the grammar
//! of the scheme, and produces exactly one error of its category per
//! injection site.

use std::collections::BTreeSet;

use crate::score::{MAX_PITCH, MIN_PITCH};
use crate::tok::{build_vocab, TokenSequence, TokenType, Vocabulary, EOS_ID};
use crate::tse::ErrorCategory;

/// Inserts `k` faults of `category` at the first `k` suitable sites.
/// Returns `None` when the category does not apply to the scheme, when the
/// sequence has fewer than `k` sites or when too few unused pitches remain.
pub fn inject(seq: &TokenSequence, category: ErrorCategory, k: usize) -> Option<TokenSequence> {
    if seq.is_bpe || !category.applies_to(seq.scheme) {
        return None;
    }
    let vocab = build_vocab(seq.scheme);
    let types: Vec<TokenType> = seq
        .ids
        .iter()
        .map(|&id| vocab.spec(id).map(|s| s.ttype))
        .collect::<Option<_>>()?;
    let note = seq.scheme.note_type();
    let unused = unused_pitches(seq, &vocab);

    // (insert after index, tokens to insert)
    let mut edits: Vec<(usize, Vec<u32>)> = Vec::new();
    match category {
        ErrorCategory::Type => {
            for (i, &t) in types.iter().enumerate() {
                if t == note {
                    edits.push((i, vec![seq.ids[i]]));
                }
            }
        }
        ErrorCategory::DuplicatedNote => {
            let width = if seq.scheme.uses_note_off() { 2 } else { 3 };
            for (i, &t) in types.iter().enumerate() {
                if t == note {
                    let end = i + width - 1;
                    edits.push((end, seq.ids[i..=end].to_vec()));
                }
            }
        }
        ErrorCategory::NoNoteOn => {
            let &pitch = unused.first()?;
            for (i, &t) in types.iter().enumerate() {
                if matches!(t, TokenType::Velocity | TokenType::NoteOff) {
                    edits.push((i, vec![vocab.expect_id(TokenType::NoteOff, pitch)]));
                }
            }
        }
        ErrorCategory::NoNoteOff => {
            if unused.len() < k {
                return None;
            }
            let sites = types
                .iter()
                .enumerate()
                .filter(|(_, &t)| matches!(t, TokenType::Velocity | TokenType::NoteOff));
            for ((i, _), &pitch) in sites.zip(&unused) {
                edits.push((
                    i,
                    vec![
                        vocab.expect_id(TokenType::NoteOn, pitch),
                        vocab.expect_id(TokenType::Velocity, 0),
                    ],
                ));
            }
        }
        ErrorCategory::Time => {
            let &pitch = unused.first()?;
            let mut position = None;
            for (i, &t) in types.iter().enumerate() {
                match t {
                    TokenType::Bar => position = None,
                    TokenType::Position => position = vocab.spec(seq.ids[i]).map(|s| s.value),
                    _ => {}
                }
                let closes_group = matches!(
                    types.get(i + 1),
                    Some(TokenType::Position | TokenType::Bar | TokenType::Eos)
                );
                if let (Some(cur), true) = (position, closes_group && t != TokenType::Position) {
                    edits.push((i, time_fault(&vocab, cur, pitch)));
                }
            }
        }
    }
    if edits.len() < k {
        return None;
    }
    edits.truncate(k);

    let mut ids = seq.ids.clone();
    for (after, tokens) in edits.into_iter().rev() {
        ids.splice(after + 1..after + 1, tokens);
    }
    debug_assert_eq!(ids.last(), Some(&EOS_ID));
    Some(TokenSequence::new(seq.scheme, ids))
}

/// A repeated position followed by a one-unit note that keeps the grammar
/// intact.
fn time_fault(vocab: &Vocabulary, position: u32, pitch: u32) -> Vec<u32> {
    let mut out = vec![vocab.expect_id(TokenType::Position, position)];
    if vocab.scheme().uses_note_off() {
        out.extend([
            vocab.expect_id(TokenType::NoteOn, pitch),
            vocab.expect_id(TokenType::Velocity, 0),
            vocab.expect_id(TokenType::NoteOff, pitch),
        ]);
    } else {
        out.extend([
            vocab.expect_id(TokenType::Pitch, pitch),
            vocab.expect_id(TokenType::Velocity, 0),
            vocab.expect_id(TokenType::Duration, 1),
        ]);
    }
    out
}

fn unused_pitches(seq: &TokenSequence, vocab: &Vocabulary) -> Vec<u32> {
    let used: BTreeSet<u32> = seq
        .ids
        .iter()
        .filter_map(|&id| vocab.spec(id))
        .filter(|s| {
            matches!(
                s.ttype,
                TokenType::Pitch | TokenType::NoteOn | TokenType::NoteOff
            )
        })
        .map(|s| s.value)
        .collect();
    (MIN_PITCH as u32..=MAX_PITCH as u32)
        .filter(|p| !used.contains(p))
        .collect()
}
