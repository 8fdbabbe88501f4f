//! Token Syntax Error: successor grammar plus note/time tracking.
//!
//! One left-to-right pass classifies each token as valid or as one of five
//! error kinds. Type errors are skipped without touching any state. The
//! other kinds are value errors: the token still counts as the grammar
//! predecessor but does not alter the musical state.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::AddAssign;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::score::{snap_duration, QNote, MAX_DURATION, UNITS_PER_BAR};
use crate::tok::{build_vocab, Scheme, TokenSequence, TokenType, Vocabulary, BOS_ID};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TseError {
    #[error("sequence is BPE-encoded; decode it before validation")]
    BpeNotDecoded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ErrorCategory {
    /// Token type not allowed after the previous one.
    #[serde(rename = "type")]
    Type,
    /// Position that goes back or stays in time.
    #[serde(rename = "time")]
    Time,
    /// Note started while the same pitch is already sounding.
    #[serde(rename = "dupn")]
    DuplicatedNote,
    /// NoteOff for a pitch that is not sounding.
    #[serde(rename = "nnon")]
    NoNoteOn,
    /// NoteOn never closed by a NoteOff.
    #[serde(rename = "nnof")]
    NoNoteOff,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 5] = [
        ErrorCategory::Type,
        ErrorCategory::Time,
        ErrorCategory::DuplicatedNote,
        ErrorCategory::NoNoteOn,
        ErrorCategory::NoNoteOff,
    ];

    pub fn column(self) -> &'static str {
        match self {
            ErrorCategory::Type => "type",
            ErrorCategory::Time => "time",
            ErrorCategory::DuplicatedNote => "dupn",
            ErrorCategory::NoNoteOn => "nnon",
            ErrorCategory::NoNoteOff => "nnof",
        }
    }

    /// Whether this category can occur under `scheme` at all.
    pub fn applies_to(self, scheme: Scheme) -> bool {
        match self {
            ErrorCategory::Type | ErrorCategory::DuplicatedNote => true,
            ErrorCategory::Time => scheme.uses_position(),
            ErrorCategory::NoNoteOn | ErrorCategory::NoNoteOff => scheme.uses_note_off(),
        }
    }
}

impl fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.column())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ErrorPolicy {
    Strict,
    #[default]
    Lenient,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TseCounts {
    #[serde(rename = "type")]
    pub type_: u64,
    pub time: u64,
    pub dupn: u64,
    pub nnon: u64,
    pub nnof: u64,
}

impl TseCounts {
    pub fn get(&self, category: ErrorCategory) -> u64 {
        match category {
            ErrorCategory::Type => self.type_,
            ErrorCategory::Time => self.time,
            ErrorCategory::DuplicatedNote => self.dupn,
            ErrorCategory::NoNoteOn => self.nnon,
            ErrorCategory::NoNoteOff => self.nnof,
        }
    }

    fn slot(&mut self, category: ErrorCategory) -> &mut u64 {
        match category {
            ErrorCategory::Type => &mut self.type_,
            ErrorCategory::Time => &mut self.time,
            ErrorCategory::DuplicatedNote => &mut self.dupn,
            ErrorCategory::NoNoteOn => &mut self.nnon,
            ErrorCategory::NoNoteOff => &mut self.nnof,
        }
    }

    pub fn add(&mut self, category: ErrorCategory) {
        *self.slot(category) += 1;
    }

    pub fn total(&self) -> u64 {
        ErrorCategory::ALL.iter().map(|&c| self.get(c)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TseRatios {
    #[serde(rename = "type")]
    pub type_: f64,
    pub time: f64,
    pub dupn: f64,
    pub nnon: f64,
    pub nnof: f64,
}

impl TseRatios {
    pub fn get(&self, category: ErrorCategory) -> f64 {
        match category {
            ErrorCategory::Type => self.type_,
            ErrorCategory::Time => self.time,
            ErrorCategory::DuplicatedNote => self.dupn,
            ErrorCategory::NoNoteOn => self.nnon,
            ErrorCategory::NoNoteOff => self.nnof,
        }
    }
}

/// Error counts normalized by the number of tokens (leading BOS excluded).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
pub struct TseReport {
    pub counts: TseCounts,
    pub total_tokens: u64,
}

impl TseReport {
    pub fn ratio(&self, category: ErrorCategory) -> f64 {
        if self.total_tokens == 0 {
            0.0
        } else {
            self.counts.get(category) as f64 / self.total_tokens as f64
        }
    }

    pub fn ratios(&self) -> TseRatios {
        TseRatios {
            type_: self.ratio(ErrorCategory::Type),
            time: self.ratio(ErrorCategory::Time),
            dupn: self.ratio(ErrorCategory::DuplicatedNote),
            nnon: self.ratio(ErrorCategory::NoNoteOn),
            nnof: self.ratio(ErrorCategory::NoNoteOff),
        }
    }

    pub fn is_clean(&self) -> bool {
        self.counts.total() == 0
    }
}

impl AddAssign for TseReport {
    fn add_assign(&mut self, rhs: Self) {
        for c in ErrorCategory::ALL {
            *self.counts.slot(c) += rhs.counts.get(c);
        }
        self.total_tokens += rhs.total_tokens;
    }
}

impl Serialize for TseReport {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("TseReport", 3)?;
        st.serialize_field("counts", &self.counts)?;
        st.serialize_field("total_tokens", &self.total_tokens)?;
        st.serialize_field("ratios", &self.ratios())?;
        st.end()
    }
}

/// Legal successor types for each token type of a scheme.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrammarTable {
    pub scheme: Scheme,
    pub allowed: BTreeMap<TokenType, BTreeSet<TokenType>>,
}

impl GrammarTable {
    pub fn allows(&self, prev: TokenType, next: TokenType) -> bool {
        self.allowed
            .get(&prev)
            .is_some_and(|set| set.contains(&next))
    }

    pub fn successors(&self, prev: TokenType) -> &BTreeSet<TokenType> {
        &self.allowed[&prev]
    }
}

pub fn grammar_for(scheme: Scheme) -> GrammarTable {
    use TokenType::*;
    let rules: Vec<(TokenType, Vec<TokenType>)> = match scheme.name() {
        "ts-dur" => vec![
            (Bos, vec![Pitch, TimeShift, Eos]),
            (Pitch, vec![Velocity]),
            (Velocity, vec![Duration]),
            (Duration, vec![Pitch, TimeShift, Eos]),
            (TimeShift, vec![Pitch, TimeShift, Eos]),
        ],
        "ts-noff" => vec![
            (Bos, vec![NoteOn, TimeShift, Eos]),
            (NoteOn, vec![Velocity]),
            (Velocity, vec![NoteOn, NoteOff, TimeShift, Eos]),
            (NoteOff, vec![NoteOn, NoteOff, TimeShift, Eos]),
            (TimeShift, vec![NoteOn, NoteOff, TimeShift, Eos]),
        ],
        "pos-dur" => vec![
            (Bos, vec![Bar, Eos]),
            (Bar, vec![Position, Bar, Eos]),
            (Position, vec![Pitch]),
            (Pitch, vec![Velocity]),
            (Velocity, vec![Duration]),
            (Duration, vec![Pitch, Position, Bar, Eos]),
        ],
        _ => vec![
            (Bos, vec![Bar, Eos]),
            (Bar, vec![Position, Bar, Eos]),
            (Position, vec![NoteOn, NoteOff]),
            (NoteOn, vec![Velocity]),
            (Velocity, vec![NoteOn, NoteOff, Position, Bar, Eos]),
            (NoteOff, vec![NoteOn, NoteOff, Position, Bar, Eos]),
        ],
    };
    let mut allowed: BTreeMap<TokenType, BTreeSet<TokenType>> = rules
        .into_iter()
        .map(|(t, next)| (t, next.into_iter().collect()))
        .collect();
    // every other vocabulary type (EOS, PAD, MASK, SEP) accepts no successor
    for t in build_vocab(scheme).types() {
        allowed.entry(t).or_default();
    }
    GrammarTable { scheme, allowed }
}

pub fn validate(seq: &TokenSequence) -> Result<TseReport, TseError> {
    if seq.is_bpe {
        return Err(TseError::BpeNotDecoded);
    }
    let vocab = build_vocab(seq.scheme);
    let mut replay = TokenReplay::new(&vocab, false);
    for &id in &seq.ids {
        replay.step(id);
    }
    Ok(replay.finish().1)
}

#[derive(Debug, Clone, Copy)]
struct PendingNote {
    pitch: u8,
    velocity: Option<u8>,
    duplicate: bool,
}

#[derive(Debug, Clone, Copy)]
struct ActiveNote {
    onset: u64,
    velocity: Option<u8>,
    index: usize,
}

/// The state machine shared by validation and decoding.
pub struct TokenReplay<'v> {
    vocab: &'v Vocabulary,
    grammar: GrammarTable,
    collect: bool,
    index: usize,
    prev: TokenType,
    time: u64,
    bars_seen: u64,
    position: Option<u32>,
    // Duration schemes: sounding (pitch, end) intervals and the note being read
    sounding: Vec<(u8, u64)>,
    pending: Option<PendingNote>,
    // NoteOff schemes
    active: BTreeMap<u8, ActiveNote>,
    velocity_target: Option<u8>,
    notes: Vec<QNote>,
    report: TseReport,
}

impl<'v> TokenReplay<'v> {
    pub fn new(vocab: &'v Vocabulary, collect_notes: bool) -> Self {
        Self {
            vocab,
            grammar: grammar_for(vocab.scheme()),
            collect: collect_notes,
            index: 0,
            prev: TokenType::Bos,
            time: 0,
            bars_seen: 0,
            position: None,
            sounding: Vec::new(),
            pending: None,
            active: BTreeMap::new(),
            velocity_target: None,
            notes: Vec::new(),
            report: TseReport::default(),
        }
    }

    /// Consumes one token id, returning its error category if it is wrong.
    pub fn step(&mut self, id: u32) -> Option<ErrorCategory> {
        let index = self.index;
        self.index += 1;
        if index == 0 && id == BOS_ID {
            return None;
        }
        self.report.total_tokens += 1;

        let spec = match self.vocab.spec(id) {
            Some(spec) if self.grammar.allows(self.prev, spec.ttype) => spec,
            _ => return self.flag(ErrorCategory::Type),
        };
        self.prev = spec.ttype;
        let value = spec.value;

        match spec.ttype {
            TokenType::Bar => {
                self.bars_seen += 1;
                self.position = None;
                self.time = (self.bars_seen - 1) * UNITS_PER_BAR;
            }
            TokenType::Position => {
                if self.position.is_some_and(|cur| value <= cur) {
                    return self.flag(ErrorCategory::Time);
                }
                self.position = Some(value);
                self.time = self.bars_seen.saturating_sub(1) * UNITS_PER_BAR + value as u64;
            }
            TokenType::TimeShift => self.time += value as u64,
            TokenType::Pitch => {
                let now = self.time;
                self.sounding.retain(|&(_, end)| end > now);
                let pitch = value as u8;
                let duplicate = self.sounding.iter().any(|&(p, _)| p == pitch);
                self.pending = Some(PendingNote {
                    pitch,
                    velocity: None,
                    duplicate,
                });
                if duplicate {
                    return self.flag(ErrorCategory::DuplicatedNote);
                }
            }
            TokenType::Velocity => {
                if let Some(p) = self.pending.as_mut() {
                    p.velocity = Some(value as u8);
                } else if let Some(pitch) = self.velocity_target.take() {
                    if let Some(a) = self.active.get_mut(&pitch) {
                        a.velocity = Some(value as u8);
                    }
                }
            }
            TokenType::Duration => {
                if let Some(p) = self.pending.take() {
                    if let (false, Some(vel_bin)) = (p.duplicate, p.velocity) {
                        self.sounding.push((p.pitch, self.time + value as u64));
                        self.emit(QNote {
                            pitch: p.pitch,
                            vel_bin,
                            onset: self.time,
                            duration: value,
                        });
                    }
                }
            }
            TokenType::NoteOn => {
                let pitch = value as u8;
                self.velocity_target = None;
                if self.active.contains_key(&pitch) {
                    return self.flag(ErrorCategory::DuplicatedNote);
                }
                self.active.insert(
                    pitch,
                    ActiveNote {
                        onset: self.time,
                        velocity: None,
                        index,
                    },
                );
                self.velocity_target = Some(pitch);
            }
            TokenType::NoteOff => {
                let pitch = value as u8;
                let Some(a) = self.active.remove(&pitch) else {
                    return self.flag(ErrorCategory::NoNoteOn);
                };
                if let Some(vel_bin) = a.velocity {
                    self.emit(QNote {
                        pitch,
                        vel_bin,
                        onset: a.onset,
                        duration: snap_duration((self.time - a.onset).max(1)),
                    });
                }
            }
            _ => {}
        }
        None
    }

    fn flag(&mut self, category: ErrorCategory) -> Option<ErrorCategory> {
        self.report.counts.add(category);
        Some(category)
    }

    fn emit(&mut self, note: QNote) {
        if self.collect {
            self.notes.push(note);
        }
    }

    /// Closes the pass: NoteOns still active are counted as `nnof` and
    /// given the maximum duration. Returns the decoded notes, the report
    /// and the token indices of the unclosed NoteOns.
    pub fn finish(mut self) -> (Vec<QNote>, TseReport, Vec<usize>) {
        let active = std::mem::take(&mut self.active);
        let mut unclosed: Vec<usize> = Vec::with_capacity(active.len());
        for (pitch, a) in active {
            self.report.counts.add(ErrorCategory::NoNoteOff);
            unclosed.push(a.index);
            if let Some(vel_bin) = a.velocity {
                self.emit(QNote {
                    pitch,
                    vel_bin,
                    onset: a.onset,
                    duration: MAX_DURATION,
                });
            }
        }
        unclosed.sort_unstable();
        (self.notes, self.report, unclosed)
    }
}
