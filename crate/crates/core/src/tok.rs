//! Vocabularies and the four time/duration token schemes.
//!
//! | scheme     | time             | duration        | also known as      |
//! |------------|------------------|-----------------|--------------------|
//! | `ts-dur`   | `TimeShift`      | `Duration`      | TSD, Structured    |
//! | `ts-noff`  | `TimeShift`      | `NoteOff`       | MIDI-Like          |
//! | `pos-dur`  | `Bar`+`Position` | `Duration`      | REMI               |
//! | `pos-noff` | `Bar`+`Position` | `NoteOff`       |                    |

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::score::{
    bar_position, decompose_gap, Score, DURATION_GRID, MAX_PITCH, MIN_PITCH, POSITIONS_PER_BAR,
    VELOCITY_BINS,
};
use crate::tse::{ErrorCategory, ErrorPolicy, TokenReplay, TseReport};

pub const PAD_ID: u32 = 0;
pub const BOS_ID: u32 = 1;
pub const EOS_ID: u32 = 2;
pub const MASK_ID: u32 = 3;
pub const SEP_ID: u32 = 4;
pub const NUM_SPECIALS: u32 = 5;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TokError {
    #[error("unknown scheme {0:?} (expected ts-dur, ts-noff, pos-dur or pos-noff)")]
    UnknownScheme(String),
    #[error("token {index}: {category} error")]
    Grammar {
        index: usize,
        category: ErrorCategory,
    },
    #[error("sequence is BPE-encoded; decode it first")]
    BpeEncoded,
    #[error("vocabulary hash mismatch for scheme {scheme}: file has {found}, expected {expected}")]
    VocabMismatch {
        scheme: Scheme,
        found: String,
        expected: String,
    },
    #[error("bad token file: {0}")]
    Json(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TimeKind {
    TimeShift,
    BarPosition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DurationKind {
    Duration,
    NoteOff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Scheme {
    pub time: TimeKind,
    pub duration: DurationKind,
}

impl Scheme {
    pub const TS_DUR: Scheme = Scheme {
        time: TimeKind::TimeShift,
        duration: DurationKind::Duration,
    };
    pub const TS_NOFF: Scheme = Scheme {
        time: TimeKind::TimeShift,
        duration: DurationKind::NoteOff,
    };
    pub const POS_DUR: Scheme = Scheme {
        time: TimeKind::BarPosition,
        duration: DurationKind::Duration,
    };
    pub const POS_NOFF: Scheme = Scheme {
        time: TimeKind::BarPosition,
        duration: DurationKind::NoteOff,
    };
    pub const ALL: [Scheme; 4] = [
        Scheme::TS_DUR,
        Scheme::TS_NOFF,
        Scheme::POS_DUR,
        Scheme::POS_NOFF,
    ];

    pub fn name(self) -> &'static str {
        match (self.time, self.duration) {
            (TimeKind::TimeShift, DurationKind::Duration) => "ts-dur",
            (TimeKind::TimeShift, DurationKind::NoteOff) => "ts-noff",
            (TimeKind::BarPosition, DurationKind::Duration) => "pos-dur",
            (TimeKind::BarPosition, DurationKind::NoteOff) => "pos-noff",
        }
    }

    /// The published tokenization this combination is equivalent to.
    pub fn known_as(self) -> Option<&'static str> {
        match self.name() {
            "ts-dur" => Some("TSD"),
            "ts-noff" => Some("MIDI-Like"),
            "pos-dur" => Some("REMI"),
            _ => None,
        }
    }

    pub fn uses_position(self) -> bool {
        self.time == TimeKind::BarPosition
    }

    pub fn uses_note_off(self) -> bool {
        self.duration == DurationKind::NoteOff
    }

    /// Token type that starts a note.
    pub fn note_type(self) -> TokenType {
        if self.uses_note_off() {
            TokenType::NoteOn
        } else {
            TokenType::Pitch
        }
    }

    /// Token types that occur in this scheme's sequences, in vocabulary
    /// order, with BOS first and EOS last.
    pub fn content_types(self) -> Vec<TokenType> {
        let mut types = vec![TokenType::Bos, self.note_type()];
        if self.uses_note_off() {
            types.push(TokenType::NoteOff);
        }
        types.push(TokenType::Velocity);
        if !self.uses_note_off() {
            types.push(TokenType::Duration);
        }
        if self.uses_position() {
            types.extend([TokenType::Bar, TokenType::Position]);
        } else {
            types.push(TokenType::TimeShift);
        }
        types.push(TokenType::Eos);
        types
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = TokError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.name() == s.to_ascii_lowercase())
            .ok_or_else(|| TokError::UnknownScheme(s.to_string()))
    }
}

impl Serialize for Scheme {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Scheme {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TokenType {
    #[serde(rename = "PAD")]
    Pad,
    #[serde(rename = "BOS")]
    Bos,
    #[serde(rename = "EOS")]
    Eos,
    #[serde(rename = "MASK")]
    Mask,
    #[serde(rename = "SEP")]
    Sep,
    Pitch,
    NoteOn,
    NoteOff,
    Velocity,
    Duration,
    TimeShift,
    Bar,
    Position,
}

impl TokenType {
    pub fn is_special(self) -> bool {
        matches!(
            self,
            TokenType::Pad | TokenType::Bos | TokenType::Eos | TokenType::Mask | TokenType::Sep
        )
    }

    pub fn label(self) -> &'static str {
        match self {
            TokenType::Pad => "PAD",
            TokenType::Bos => "BOS",
            TokenType::Eos => "EOS",
            TokenType::Mask => "MASK",
            TokenType::Sep => "SEP",
            TokenType::Pitch => "Pitch",
            TokenType::NoteOn => "NoteOn",
            TokenType::NoteOff => "NoteOff",
            TokenType::Velocity => "Velocity",
            TokenType::Duration => "Duration",
            TokenType::TimeShift => "TimeShift",
            TokenType::Bar => "Bar",
            TokenType::Position => "Position",
        }
    }
}

impl fmt::Display for TokenType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSpec {
    #[serde(rename = "type")]
    pub ttype: TokenType,
    pub value: u32,
}

impl TokenSpec {
    pub const fn new(ttype: TokenType, value: u32) -> Self {
        Self { ttype, value }
    }
}

impl fmt::Display for TokenSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ttype.is_special() || self.ttype == TokenType::Bar {
            f.write_str(self.ttype.label())
        } else {
            write!(f, "{}_{}", self.ttype, self.value)
        }
    }
}

#[derive(Debug, Clone)]
pub struct Vocabulary {
    scheme: Scheme,
    specs: Vec<TokenSpec>,
    index: HashMap<TokenSpec, u32>,
}

#[derive(Serialize)]
struct VocabEntry {
    id: u32,
    #[serde(rename = "type")]
    ttype: TokenType,
    value: u32,
}

impl Vocabulary {
    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn spec(&self, id: u32) -> Option<TokenSpec> {
        self.specs.get(id as usize).copied()
    }

    pub fn id(&self, spec: TokenSpec) -> Option<u32> {
        self.index.get(&spec).copied()
    }

    pub fn specs(&self) -> &[TokenSpec] {
        &self.specs
    }

    /// Types present in this vocabulary, in first-id order.
    pub fn types(&self) -> Vec<TokenType> {
        let mut out: Vec<TokenType> = Vec::new();
        for s in &self.specs {
            if !out.contains(&s.ttype) {
                out.push(s.ttype);
            }
        }
        out
    }

    /// Id of a token known to be in the vocabulary; panics otherwise.
    pub fn expect_id(&self, ttype: TokenType, value: u32) -> u32 {
        self.index[&TokenSpec::new(ttype, value)]
    }

    /// JSON array of `{"id", "type", "value"}`.
    pub fn to_json(&self) -> String {
        let entries: Vec<VocabEntry> = self
            .specs
            .iter()
            .enumerate()
            .map(|(id, s)| VocabEntry {
                id: id as u32,
                ttype: s.ttype,
                value: s.value,
            })
            .collect();
        serde_json::to_string(&entries).expect("vocabulary serializes")
    }

    /// Hex SHA-256 of [`Vocabulary::to_json`].
    pub fn hash(&self) -> String {
        hex_digest(self.to_json().as_bytes())
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn build_vocab(scheme: Scheme) -> Vocabulary {
    let mut specs: Vec<TokenSpec> = [
        TokenType::Pad,
        TokenType::Bos,
        TokenType::Eos,
        TokenType::Mask,
        TokenType::Sep,
    ]
    .iter()
    .enumerate()
    .map(|(i, &t)| TokenSpec::new(t, i as u32))
    .collect();

    let pitches = MIN_PITCH as u32..=MAX_PITCH as u32;
    specs.extend(pitches.clone().map(|p| TokenSpec::new(scheme.note_type(), p)));
    if scheme.uses_note_off() {
        specs.extend(pitches.map(|p| TokenSpec::new(TokenType::NoteOff, p)));
    }
    specs.extend((0..VELOCITY_BINS as u32).map(|v| TokenSpec::new(TokenType::Velocity, v)));
    if !scheme.uses_note_off() {
        specs.extend(DURATION_GRID.iter().map(|&d| TokenSpec::new(TokenType::Duration, d)));
    }
    if scheme.uses_position() {
        specs.push(TokenSpec::new(TokenType::Bar, 0));
        specs.extend(
            (0..POSITIONS_PER_BAR as u32).map(|p| TokenSpec::new(TokenType::Position, p)),
        );
    } else {
        specs.extend(DURATION_GRID.iter().map(|&d| TokenSpec::new(TokenType::TimeShift, d)));
    }

    let index = specs
        .iter()
        .enumerate()
        .map(|(i, s)| (*s, i as u32))
        .collect();
    Vocabulary {
        scheme,
        specs,
        index,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub scheme: Scheme,
    pub ids: Vec<u32>,
    pub is_bpe: bool,
}

#[derive(Serialize, Deserialize)]
struct TokenFile {
    scheme: Scheme,
    vocab_hash: String,
    is_bpe: bool,
    ids: Vec<u32>,
}

impl TokenSequence {
    pub fn new(scheme: Scheme, ids: Vec<u32>) -> Self {
        Self {
            scheme,
            ids,
            is_bpe: false,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&TokenFile {
            scheme: self.scheme,
            vocab_hash: build_vocab(self.scheme).hash(),
            is_bpe: self.is_bpe,
            ids: self.ids.clone(),
        })
        .expect("token file serializes")
    }

    /// Parses a token file, rejecting it if its vocabulary hash does not
    /// match the vocabulary built for its scheme.
    pub fn from_json(text: &str) -> Result<Self, TokError> {
        let file: TokenFile =
            serde_json::from_str(text).map_err(|e| TokError::Json(e.to_string()))?;
        let expected = build_vocab(file.scheme).hash();
        if file.vocab_hash != expected {
            return Err(TokError::VocabMismatch {
                scheme: file.scheme,
                found: file.vocab_hash,
                expected,
            });
        }
        Ok(Self {
            scheme: file.scheme,
            ids: file.ids,
            is_bpe: file.is_bpe,
        })
    }

    /// Human-readable rendering, e.g. `BOS Pitch_60 Velocity_4 ...`.
    pub fn render(&self, vocab: &Vocabulary) -> String {
        self.ids
            .iter()
            .map(|&id| match vocab.spec(id) {
                Some(s) => s.to_string(),
                None => format!("<{id}>"),
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    // NoteOffs sort before NoteOns at equal time; ties by pitch
    Off { pitch: u8 },
    On { pitch: u8, vel_bin: u8, duration: u32 },
}

pub fn tokenize(score: &Score, scheme: Scheme) -> TokenSequence {
    let vocab = build_vocab(scheme);
    tokenize_with(score, &vocab)
}

pub fn tokenize_with(score: &Score, vocab: &Vocabulary) -> TokenSequence {
    let scheme = vocab.scheme();
    let mut events: Vec<(u64, Event)> = Vec::with_capacity(score.notes.len() * 2);
    for n in &score.notes {
        events.push((
            n.onset,
            Event::On {
                pitch: n.pitch,
                vel_bin: n.vel_bin,
                duration: n.duration,
            },
        ));
        if scheme.uses_note_off() {
            events.push((n.offset(), Event::Off { pitch: n.pitch }));
        }
    }
    events.sort();

    let mut ids = vec![BOS_ID];
    let mut time = 0u64;
    // bar index of the last emitted Bar token, plus one
    let mut bars_emitted = 0u64;
    let mut last_position_time: Option<u64> = None;
    if scheme.uses_position() {
        ids.push(vocab.expect_id(TokenType::Bar, 0));
        bars_emitted = 1;
    }

    for (t, event) in events {
        if scheme.uses_position() {
            let (bar, pos) = bar_position(t);
            while bars_emitted <= bar {
                ids.push(vocab.expect_id(TokenType::Bar, 0));
                bars_emitted += 1;
            }
            if last_position_time != Some(t) {
                ids.push(vocab.expect_id(TokenType::Position, pos));
                last_position_time = Some(t);
            }
        } else if t > time {
            for shift in decompose_gap(t - time) {
                ids.push(vocab.expect_id(TokenType::TimeShift, shift));
            }
        }
        time = t;

        match event {
            Event::On {
                pitch,
                vel_bin,
                duration,
            } => {
                ids.push(vocab.expect_id(scheme.note_type(), pitch as u32));
                ids.push(vocab.expect_id(TokenType::Velocity, vel_bin as u32));
                if !scheme.uses_note_off() {
                    ids.push(vocab.expect_id(TokenType::Duration, duration));
                }
            }
            Event::Off { pitch } => ids.push(vocab.expect_id(TokenType::NoteOff, pitch as u32)),
        }
    }
    ids.push(EOS_ID);
    TokenSequence::new(scheme, ids)
}

/// Decodes a base-token sequence back into a score.
///
/// Under [`ErrorPolicy::Lenient`] erroneous tokens are skipped and tallied;
/// notes never closed by a NoteOff get the maximum duration. Under
/// [`ErrorPolicy::Strict`] the first error is returned.
pub fn detokenize(
    seq: &TokenSequence,
    policy: ErrorPolicy,
) -> Result<(Score, TseReport), TokError> {
    if seq.is_bpe {
        return Err(TokError::BpeEncoded);
    }
    let vocab = build_vocab(seq.scheme);
    let mut replay = TokenReplay::new(&vocab, true);
    for (index, &id) in seq.ids.iter().enumerate() {
        if let Some(category) = replay.step(id) {
            if policy == ErrorPolicy::Strict {
                return Err(TokError::Grammar { index, category });
            }
        }
    }
    let (notes, report, unclosed) = replay.finish();
    if policy == ErrorPolicy::Strict {
        if let Some(&index) = unclosed.first() {
            return Err(TokError::Grammar {
                index,
                category: ErrorCategory::NoNoteOff,
            });
        }
    }
    Ok((Score::from_notes(notes), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::QNote;

    fn ids(vocab: &Vocabulary, tokens: &[(TokenType, u32)]) -> Vec<u32> {
        tokens.iter().map(|&(t, v)| vocab.expect_id(t, v)).collect()
    }

    fn one_note() -> Score {
        Score::from_notes(vec![QNote {
            pitch: 60,
            vel_bin: 4,
            onset: 0,
            duration: 8,
        }])
    }

    #[test]
    fn vocab_sizes() {
        let sizes: Vec<usize> = Scheme::ALL.iter().map(|&s| build_vocab(s).len()).collect();
        // 5 specials + 88 pitches + 8 velocities + per-scheme categories
        assert_eq!(sizes, vec![141, 5 + 88 + 88 + 8 + 20, 5 + 88 + 8 + 20 + 1 + 32, 222]);
    }

    #[test]
    fn vocab_layout_is_deterministic_and_dense() {
        for scheme in Scheme::ALL {
            let a = build_vocab(scheme);
            let b = build_vocab(scheme);
            assert_eq!(a.specs(), b.specs());
            assert_eq!(a.hash(), b.hash());
            for (i, s) in a.specs().iter().enumerate() {
                assert_eq!(a.id(*s), Some(i as u32));
            }
            assert_eq!(a.spec(BOS_ID).unwrap().ttype, TokenType::Bos);
            assert_eq!(a.spec(SEP_ID).unwrap().ttype, TokenType::Sep);
        }
        let hashes: std::collections::HashSet<String> =
            Scheme::ALL.iter().map(|&s| build_vocab(s).hash()).collect();
        assert_eq!(hashes.len(), 4);
    }

    #[test]
    fn scheme_names_roundtrip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
        }
        assert_eq!(Scheme::POS_DUR.known_as(), Some("REMI"));
        assert!("octuple".parse::<Scheme>().is_err());
    }

    #[test]
    fn empty_score() {
        for scheme in Scheme::ALL {
            let seq = tokenize(&Score::default(), scheme);
            let v = build_vocab(scheme);
            if scheme.uses_position() {
                assert_eq!(seq.ids, vec![BOS_ID, v.expect_id(TokenType::Bar, 0), EOS_ID]);
            } else {
                assert_eq!(seq.ids, vec![BOS_ID, EOS_ID]);
            }
        }
    }

    #[test]
    fn one_note_ts_dur() {
        let v = build_vocab(Scheme::TS_DUR);
        let seq = tokenize(&one_note(), Scheme::TS_DUR);
        assert_eq!(seq.render(&v), "BOS Pitch_60 Velocity_4 Duration_8 EOS");
    }

    #[test]
    fn one_note_pos_noff() {
        let v = build_vocab(Scheme::POS_NOFF);
        let seq = tokenize(&one_note(), Scheme::POS_NOFF);
        assert_eq!(
            seq.render(&v),
            "BOS Bar Position_0 NoteOn_60 Velocity_4 Position_8 NoteOff_60 EOS"
        );
    }

    #[test]
    fn long_gap_uses_greedy_time_shifts() {
        let s = Score::from_notes(vec![
            QNote { pitch: 60, vel_bin: 0, onset: 0, duration: 1 },
            QNote { pitch: 60, vel_bin: 0, onset: 72, duration: 1 },
        ]);
        let v = build_vocab(Scheme::TS_DUR);
        assert_eq!(
            tokenize(&s, Scheme::TS_DUR).render(&v),
            "BOS Pitch_60 Velocity_0 Duration_1 TimeShift_64 TimeShift_8 Pitch_60 Velocity_0 Duration_1 EOS"
        );
    }

    #[test]
    fn empty_bars_and_shared_positions() {
        let s = Score::from_notes(vec![
            QNote { pitch: 60, vel_bin: 1, onset: 70, duration: 2 },
            QNote { pitch: 64, vel_bin: 1, onset: 70, duration: 2 },
        ]);
        let v = build_vocab(Scheme::POS_DUR);
        assert_eq!(
            tokenize(&s, Scheme::POS_DUR).render(&v),
            "BOS Bar Bar Bar Position_6 Pitch_60 Velocity_1 Duration_2 Pitch_64 Velocity_1 Duration_2 EOS"
        );
    }

    #[test]
    fn restruck_pitch_puts_note_off_first() {
        let s = Score::from_notes(vec![
            QNote { pitch: 60, vel_bin: 1, onset: 0, duration: 4 },
            QNote { pitch: 60, vel_bin: 2, onset: 4, duration: 4 },
        ]);
        let v = build_vocab(Scheme::TS_NOFF);
        assert_eq!(
            tokenize(&s, Scheme::TS_NOFF).render(&v),
            "BOS NoteOn_60 Velocity_1 TimeShift_4 NoteOff_60 NoteOn_60 Velocity_2 TimeShift_4 NoteOff_60 EOS"
        );
    }

    #[test]
    fn unclosed_note_on_gets_max_duration() {
        let v = build_vocab(Scheme::TS_NOFF);
        let seq = TokenSequence::new(
            Scheme::TS_NOFF,
            [vec![BOS_ID], ids(&v, &[(TokenType::NoteOn, 60), (TokenType::Velocity, 4)]), vec![EOS_ID]].concat(),
        );
        let (score, report) = detokenize(&seq, ErrorPolicy::Lenient).unwrap();
        assert_eq!(score.notes[0].duration, 64);
        assert_eq!(report.counts.nnof, 1);
        assert_eq!(
            detokenize(&seq, ErrorPolicy::Strict).unwrap_err(),
            TokError::Grammar { index: 1, category: ErrorCategory::NoNoteOff }
        );
    }

    #[test]
    fn backward_position_is_skipped() {
        let v = build_vocab(Scheme::POS_DUR);
        let body = ids(
            &v,
            &[
                (TokenType::Bar, 0),
                (TokenType::Position, 9),
                (TokenType::Pitch, 60),
                (TokenType::Velocity, 4),
                (TokenType::Duration, 8),
                (TokenType::Position, 5),
                (TokenType::Pitch, 62),
                (TokenType::Velocity, 4),
                (TokenType::Duration, 8),
            ],
        );
        let seq = TokenSequence::new(Scheme::POS_DUR, [vec![BOS_ID], body, vec![EOS_ID]].concat());
        let (score, report) = detokenize(&seq, ErrorPolicy::Lenient).unwrap();
        assert_eq!(report.counts.time, 1);
        assert!(score.notes.iter().all(|n| n.onset == 9));
        assert_eq!(
            detokenize(&seq, ErrorPolicy::Strict).unwrap_err(),
            TokError::Grammar { index: 6, category: ErrorCategory::Time }
        );
    }

    #[test]
    fn bpe_sequences_are_rejected() {
        let mut seq = tokenize(&one_note(), Scheme::TS_DUR);
        seq.is_bpe = true;
        assert_eq!(detokenize(&seq, ErrorPolicy::Lenient).unwrap_err(), TokError::BpeEncoded);
    }

    #[test]
    fn token_file_json() {
        let seq = tokenize(&one_note(), Scheme::POS_DUR);
        let text = seq.to_json();
        assert!(text.starts_with(r#"{"scheme":"pos-dur","vocab_hash":""#));
        assert_eq!(TokenSequence::from_json(&text).unwrap(), seq);
        let tampered = text.replace(&build_vocab(Scheme::POS_DUR).hash(), "00");
        assert!(matches!(
            TokenSequence::from_json(&tampered).unwrap_err(),
            TokError::VocabMismatch { .. }
        ));
    }

    #[test]
    fn vocab_json_shape() {
        let v = build_vocab(Scheme::TS_DUR);
        let parsed: serde_json::Value = serde_json::from_str(&v.to_json()).unwrap();
        let arr = parsed.as_array().unwrap();
        assert_eq!(arr.len(), 141);
        assert_eq!(arr[5], serde_json::json!({"id": 5, "type": "Pitch", "value": 21}));
        assert_eq!(arr[1], serde_json::json!({"id": 1, "type": "BOS", "value": 1}));
    }
}
