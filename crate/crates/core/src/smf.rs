//! Standard MIDI File reading and writing.
//!
//! Only note events and time signatures are kept. Every track and channel is
//! merged into a single note list; tempo and controller data are ignored
//! since everything downstream works in beats.

use std::collections::{BTreeMap, VecDeque};

use thiserror::Error;

const HEADER_MAGIC: &[u8; 4] = b"MThd";
const TRACK_MAGIC: &[u8; 4] = b"MTrk";
const PERCUSSION_CHANNEL: u8 = 9;
const MAX_DELTA: u64 = 0x0FFF_FFFF;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SmfError {
    #[error("malformed MIDI header: {0}")]
    MalformedHeader(&'static str),
    #[error("unsupported SMF format {0}")]
    UnsupportedFormat(u16),
    #[error("SMPTE time division is not supported")]
    UnsupportedTimeDivision,
    #[error("chunk truncated at byte {offset}")]
    TruncatedChunk { offset: usize },
    #[error("variable-length quantity longer than 4 bytes at byte {offset}")]
    BadVarLen { offset: usize },
    #[error("malformed event at byte {offset}")]
    MalformedEvent { offset: usize },
    #[error("invalid song: {0}")]
    InvalidSong(String),
    #[error("more than 15 overlapping notes of pitch {pitch} at tick {tick}")]
    ChannelExhausted { pitch: u8, tick: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RawNote {
    pub pitch: u8,
    pub velocity: u8,
    pub onset_ticks: u64,
    pub duration_ticks: u64,
}

impl RawNote {
    fn sort_key(&self) -> (u64, u8, u8, u64) {
        (self.onset_ticks, self.pitch, self.velocity, self.duration_ticks)
    }

    pub fn offset_ticks(&self) -> u64 {
        self.onset_ticks + self.duration_ticks
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeSignature {
    pub tick: u64,
    pub numerator: u8,
    /// Actual denominator (4 for x/4), always a power of two.
    pub denominator: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawSong {
    pub ticks_per_quarter: u16,
    pub notes: Vec<RawNote>,
    pub time_signatures: Vec<TimeSignature>,
}

impl RawSong {
    /// Builds a song, sorting notes by onset, pitch, velocity then duration.
    pub fn new(ticks_per_quarter: u16, mut notes: Vec<RawNote>) -> Self {
        notes.sort_by_key(RawNote::sort_key);
        Self {
            ticks_per_quarter,
            notes,
            time_signatures: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), SmfError> {
        if self.ticks_per_quarter == 0 || self.ticks_per_quarter > 0x7FFF {
            return Err(SmfError::InvalidSong(format!(
                "ticks per quarter {} outside [1, 32767]",
                self.ticks_per_quarter
            )));
        }
        for n in &self.notes {
            if n.pitch > 127 || n.velocity == 0 || n.velocity > 127 || n.duration_ticks == 0 {
                return Err(SmfError::InvalidSong(format!("note out of range: {n:?}")));
            }
        }
        if self
            .notes
            .windows(2)
            .any(|w| w[0].sort_key() > w[1].sort_key())
        {
            return Err(SmfError::InvalidSong("notes are not sorted".into()));
        }
        for ts in &self.time_signatures {
            if !ts.denominator.is_power_of_two() || ts.numerator == 0 {
                return Err(SmfError::InvalidSong(format!(
                    "bad time signature {}/{}",
                    ts.numerator, ts.denominator
                )));
            }
        }
        Ok(())
    }

    /// True when every time signature in the file is n/4-compatible
    /// (numerator 4) or none is present.
    pub fn is_four_four(&self) -> bool {
        self.time_signatures.iter().all(|ts| ts.numerator == 4)
    }
}

/// Non-fatal irregularities met while parsing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseWarnings {
    /// Note-Ons still open at end of track, closed with a 1-tick duration.
    pub unmatched_note_ons: usize,
    /// Note-Offs with no sounding note to close.
    pub orphan_note_offs: usize,
    /// Notes found on channel 10.
    pub percussion_notes: usize,
}

impl ParseWarnings {
    pub fn is_clean(&self) -> bool {
        *self == Self::default()
    }
}

pub fn parse_smf(bytes: &[u8]) -> Result<RawSong, SmfError> {
    parse_smf_with_warnings(bytes).map(|(song, _)| song)
}

pub fn parse_smf_with_warnings(bytes: &[u8]) -> Result<(RawSong, ParseWarnings), SmfError> {
    let mut cur = Cursor::new(bytes);
    if cur.take(4).ok() != Some(HEADER_MAGIC.as_slice()) {
        return Err(SmfError::MalformedHeader("missing MThd magic"));
    }
    let header_len = cur
        .u32()
        .map_err(|_| SmfError::MalformedHeader("truncated header"))? as usize;
    if header_len < 6 {
        return Err(SmfError::MalformedHeader("header shorter than 6 bytes"));
    }
    let header = cur
        .take(header_len)
        .map_err(|_| SmfError::MalformedHeader("truncated header"))?;
    let format = u16::from_be_bytes([header[0], header[1]]);
    let division = u16::from_be_bytes([header[4], header[5]]);
    if format > 1 {
        return Err(SmfError::UnsupportedFormat(format));
    }
    if division & 0x8000 != 0 {
        return Err(SmfError::UnsupportedTimeDivision);
    }
    if division == 0 {
        return Err(SmfError::MalformedHeader("zero ticks per quarter"));
    }

    let mut warnings = ParseWarnings::default();
    let mut notes = Vec::new();
    let mut time_signatures = Vec::new();
    while cur.remaining() >= 8 {
        let chunk_start = cur.pos;
        let id = cur.take(4)?;
        let len = cur.u32()? as usize;
        if len > cur.remaining() {
            return Err(SmfError::TruncatedChunk { offset: chunk_start });
        }
        let body_start = cur.pos;
        let body = cur.take(len)?;
        if id == TRACK_MAGIC {
            parse_track(
                body,
                body_start,
                &mut notes,
                &mut time_signatures,
                &mut warnings,
            )?;
        }
    }

    if warnings.percussion_notes > 0 {
        log::warn!(
            "{} percussion (channel 10) notes merged into the note list",
            warnings.percussion_notes
        );
    }
    time_signatures.sort_by_key(|ts: &TimeSignature| ts.tick);
    let mut song = RawSong::new(division, notes);
    song.time_signatures = time_signatures;
    Ok((song, warnings))
}

fn parse_track(
    body: &[u8],
    base: usize,
    notes: &mut Vec<RawNote>,
    time_signatures: &mut Vec<TimeSignature>,
    warnings: &mut ParseWarnings,
) -> Result<(), SmfError> {
    let mut cur = Cursor::new(body);
    cur.base = base;
    let mut tick: u64 = 0;
    let mut running: Option<u8> = None;
    // (channel, pitch) -> queue of (onset, velocity)
    let mut open: BTreeMap<(u8, u8), VecDeque<(u64, u8)>> = BTreeMap::new();

    while cur.remaining() > 0 {
        tick = tick.saturating_add(cur.var_len()? as u64);
        let event_offset = cur.offset();
        let first = cur.u8()?;
        let status = if first & 0x80 != 0 {
            first
        } else {
            // running status: `first` is already the first data byte
            let status = running.ok_or(SmfError::MalformedEvent {
                offset: event_offset,
            })?;
            cur.pos -= 1;
            status
        };

        match status {
            0xFF => {
                let kind = cur.u8()?;
                let len = cur.var_len()? as usize;
                let data = cur.take(len)?;
                match kind {
                    0x2F => break,
                    0x58 if data.len() >= 2 => {
                        let denominator = 1u32.checked_shl(data[1] as u32).ok_or(
                            SmfError::MalformedEvent {
                                offset: event_offset,
                            },
                        )?;
                        time_signatures.push(TimeSignature {
                            tick,
                            numerator: data[0],
                            denominator,
                        });
                    }
                    _ => {}
                }
            }
            0xF0 | 0xF7 => {
                let len = cur.var_len()? as usize;
                cur.take(len)?;
            }
            0x80..=0xEF => {
                running = Some(status);
                let channel = status & 0x0F;
                let data_len = match status & 0xF0 {
                    0xC0 | 0xD0 => 1,
                    _ => 2,
                };
                let data = cur.take(data_len)?;
                if data.iter().any(|b| b & 0x80 != 0) {
                    return Err(SmfError::MalformedEvent {
                        offset: event_offset,
                    });
                }
                let kind = status & 0xF0;
                let is_on = kind == 0x90 && data[1] > 0;
                let is_off = kind == 0x80 || (kind == 0x90 && data[1] == 0);
                if is_on {
                    open.entry((channel, data[0]))
                        .or_default()
                        .push_back((tick, data[1]));
                } else if is_off {
                    match open.get_mut(&(channel, data[0])).and_then(VecDeque::pop_front) {
                        Some((onset, velocity)) => {
                            if channel == PERCUSSION_CHANNEL {
                                warnings.percussion_notes += 1;
                            }
                            notes.push(RawNote {
                                pitch: data[0],
                                velocity,
                                onset_ticks: onset,
                                duration_ticks: (tick - onset).max(1),
                            })
                        }
                        None => warnings.orphan_note_offs += 1,
                    }
                }
            }
            _ => {
                return Err(SmfError::MalformedEvent {
                    offset: event_offset,
                })
            }
        }
    }

    for ((channel, pitch), queue) in open {
        for (onset, velocity) in queue {
            warnings.unmatched_note_ons += 1;
            if channel == PERCUSSION_CHANNEL {
                warnings.percussion_notes += 1;
            }
            notes.push(RawNote {
                pitch,
                velocity,
                onset_ticks: onset,
                duration_ticks: 1,
            });
        }
    }
    Ok(())
}

/// Writes a format-0, single-track file.
///
/// Overlapping notes of the same pitch are spread over distinct channels so
/// that first-in-first-out pairing in [`parse_smf`] recovers them exactly.
pub fn write_smf(song: &RawSong) -> Result<Vec<u8>, SmfError> {
    song.validate()?;

    // (tick, order, channel, pitch, bytes)
    let mut events: Vec<(u64, u8, u8, u8, Vec<u8>)> = Vec::new();
    for ts in &song.time_signatures {
        let data = vec![
            0xFF,
            0x58,
            4,
            ts.numerator,
            ts.denominator.trailing_zeros() as u8,
            24,
            8,
        ];
        events.push((ts.tick, 0, 0, 0, data));
    }

    let channels: Vec<u8> = (0u8..16).filter(|&c| c != PERCUSSION_CHANNEL).collect();
    // pitch -> per-channel tick at which the channel is free again
    let mut busy_until: BTreeMap<u8, Vec<u64>> = BTreeMap::new();
    for n in &song.notes {
        let slots = busy_until
            .entry(n.pitch)
            .or_insert_with(|| vec![0; channels.len()]);
        let slot = slots
            .iter()
            .position(|&free| free <= n.onset_ticks)
            .ok_or(SmfError::ChannelExhausted {
                pitch: n.pitch,
                tick: n.onset_ticks,
            })?;
        slots[slot] = n.offset_ticks();
        let ch = channels[slot];
        events.push((
            n.offset_ticks(),
            1,
            ch,
            n.pitch,
            vec![0x80 | ch, n.pitch, 0],
        ));
        events.push((
            n.onset_ticks,
            2,
            ch,
            n.pitch,
            vec![0x90 | ch, n.pitch, n.velocity],
        ));
    }
    events.sort_by(|a, b| (a.0, a.1, a.2, a.3).cmp(&(b.0, b.1, b.2, b.3)));

    let mut track = Vec::new();
    let mut last = 0u64;
    for (tick, _, _, _, data) in &events {
        let mut delta = tick - last;
        while delta > MAX_DELTA {
            // empty text event carries the excess delta
            write_var_len(&mut track, MAX_DELTA as u32);
            track.extend_from_slice(&[0xFF, 0x01, 0x00]);
            delta -= MAX_DELTA;
        }
        write_var_len(&mut track, delta as u32);
        track.extend_from_slice(data);
        last = *tick;
    }
    track.extend_from_slice(&[0x00, 0xFF, 0x2F, 0x00]);

    let mut out = Vec::with_capacity(22 + track.len());
    out.extend_from_slice(HEADER_MAGIC);
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&0u16.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&song.ticks_per_quarter.to_be_bytes());
    out.extend_from_slice(TRACK_MAGIC);
    out.extend_from_slice(&(track.len() as u32).to_be_bytes());
    out.extend_from_slice(&track);
    Ok(out)
}

pub fn write_var_len(out: &mut Vec<u8>, mut value: u32) {
    debug_assert!(value as u64 <= MAX_DELTA);
    let mut buf = [0u8; 4];
    let mut i = 3;
    buf[i] = (value & 0x7F) as u8;
    value >>= 7;
    while value > 0 {
        i -= 1;
        buf[i] = (value & 0x7F) as u8 | 0x80;
        value >>= 7;
    }
    out.extend_from_slice(&buf[i..]);
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
    base: usize,
}

impl<'a> Cursor<'a> {
    fn new(data: &'a [u8]) -> Self {
        Self {
            data,
            pos: 0,
            base: 0,
        }
    }

    fn offset(&self) -> usize {
        self.base + self.pos
    }

    fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], SmfError> {
        if n > self.remaining() {
            return Err(SmfError::TruncatedChunk {
                offset: self.offset(),
            });
        }
        let slice = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8, SmfError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, SmfError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn var_len(&mut self) -> Result<u32, SmfError> {
        let start = self.offset();
        let mut value = 0u32;
        for _ in 0..4 {
            let b = self.u8()?;
            value = (value << 7) | (b & 0x7F) as u32;
            if b & 0x80 == 0 {
                return Ok(value);
            }
        }
        Err(SmfError::BadVarLen { offset: start })
    }
}
