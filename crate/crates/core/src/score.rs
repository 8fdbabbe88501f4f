//! Beat-grid quantization, preprocessing and data augmentation.
//!
//! Time is measured in units of 1/8 beat. Onsets live on that grid directly;
//! durations and time shifts are restricted to [`DURATION_GRID`], whose
//! resolution halves after one, two and four beats.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::smf::{RawNote, RawSong};

pub const UNITS_PER_BEAT: u64 = 8;
pub const UNITS_PER_BAR: u64 = 32;
pub const POSITIONS_PER_BAR: usize = 32;
pub const MIN_PITCH: u8 = 21;
pub const MAX_PITCH: u8 = 108;
pub const VELOCITY_BINS: u8 = 8;

/// Durations and time shifts, in 1/8 beat: 8 spb up to one beat, then 4, 2
/// and 1 spb up to eight beats.
pub const DURATION_GRID: [u32; 20] = [
    1, 2, 3, 4, 5, 6, 7, 8, 10, 12, 14, 16, 20, 24, 28, 32, 40, 48, 56, 64,
];
pub const MAX_DURATION: u32 = 64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScoreError {
    #[error("velocity offset {0} outside [-7, 7]")]
    InvalidVelocityOffset(i32),
    #[error("augmentation variant {0} lost every note")]
    EmptyVariant(Augmentation),
}

pub fn grid_index(units: u32) -> Option<usize> {
    DURATION_GRID.binary_search(&units).ok()
}

/// Nearest grid value to `numer / denom` units, ties going to the longer
/// value. Values past the grid clamp to [`MAX_DURATION`].
pub fn nearest_grid(numer: u128, denom: u128) -> u32 {
    let mut best = DURATION_GRID[0];
    let mut best_err = u128::MAX;
    for &g in &DURATION_GRID {
        let err = (g as u128 * denom).abs_diff(numer);
        if err <= best_err {
            best = g;
            best_err = err;
        }
    }
    best
}

pub fn snap_duration(units: u64) -> u32 {
    nearest_grid(units as u128, 1)
}

/// Greedy largest-first decomposition of a gap into grid values.
pub fn decompose_gap(mut gap: u64) -> Vec<u32> {
    let mut parts = Vec::new();
    while gap > 0 {
        let g = *DURATION_GRID
            .iter()
            .rev()
            .find(|&&g| g as u64 <= gap)
            .expect("grid contains 1");
        parts.push(g);
        gap -= g as u64;
    }
    parts
}

pub fn velocity_bin(velocity: u8) -> u8 {
    let v = velocity.clamp(1, 127) as u32;
    (((v - 1) * VELOCITY_BINS as u32) / 127) as u8
}

/// Centre of a velocity bin, used when turning a score back into MIDI.
pub fn bin_velocity(bin: u8) -> u8 {
    let centre = (bin.min(VELOCITY_BINS - 1) as f64 + 0.5) * 127.0 / VELOCITY_BINS as f64;
    (centre.round() as u8).clamp(1, 127)
}

pub fn bar_position(onset_units: u64) -> (u64, u32) {
    (
        onset_units / UNITS_PER_BAR,
        (onset_units % UNITS_PER_BAR) as u32,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QNote {
    pub pitch: u8,
    pub vel_bin: u8,
    pub onset: u64,
    pub duration: u32,
}

impl QNote {
    pub fn offset(&self) -> u64 {
        self.onset + self.duration as u64
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Score {
    pub notes: Vec<QNote>,
}

/// What preprocessing removed or altered.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct QuantizeStats {
    pub input_notes: usize,
    pub out_of_range: usize,
    pub duplicates: usize,
    pub trimmed: usize,
}

impl Score {
    /// Sorts, drops duplicates and trims same-pitch overlaps so that the
    /// result satisfies the score invariants.
    pub fn from_notes(notes: Vec<QNote>) -> Self {
        Self::normalize(notes).0
    }

    fn normalize(mut notes: Vec<QNote>) -> (Self, usize, usize) {
        // longer duration then higher velocity wins among equal (onset, pitch)
        notes.sort_by(|a, b| {
            (a.onset, a.pitch)
                .cmp(&(b.onset, b.pitch))
                .then(b.duration.cmp(&a.duration))
                .then(b.vel_bin.cmp(&a.vel_bin))
        });
        let before = notes.len();
        notes.dedup_by(|b, a| a.onset == b.onset && a.pitch == b.pitch);
        let duplicates = before - notes.len();

        let mut trimmed = 0;
        let mut next_onset: [Option<u64>; 128] = [None; 128];
        for n in notes.iter_mut().rev() {
            let slot = &mut next_onset[n.pitch as usize & 0x7F];
            if let Some(next) = *slot {
                let room = next - n.onset;
                if n.duration as u64 > room {
                    n.duration = *DURATION_GRID
                        .iter()
                        .rev()
                        .find(|&&g| g as u64 <= room)
                        .expect("room is at least one unit");
                    trimmed += 1;
                }
            }
            *slot = Some(n.onset);
        }
        (Self { notes }, duplicates, trimmed)
    }

    pub fn is_valid(&self) -> bool {
        let ranged = self.notes.iter().all(|n| {
            (MIN_PITCH..=MAX_PITCH).contains(&n.pitch)
                && n.vel_bin < VELOCITY_BINS
                && grid_index(n.duration).is_some()
        });
        let sorted = self
            .notes
            .windows(2)
            .all(|w| (w[0].onset, w[0].pitch) < (w[1].onset, w[1].pitch));
        ranged && sorted && Self::normalize(self.notes.clone()).0 == *self
    }

    pub fn is_empty(&self) -> bool {
        self.notes.is_empty()
    }

    pub fn len(&self) -> usize {
        self.notes.len()
    }

    /// Renders back to MIDI ticks. `ticks_per_quarter` must be a multiple of
    /// 8 for the conversion to be exact.
    pub fn to_raw_song(&self, ticks_per_quarter: u16) -> RawSong {
        let per_unit = ticks_per_quarter as u64 / UNITS_PER_BEAT;
        let notes = self
            .notes
            .iter()
            .map(|n| RawNote {
                pitch: n.pitch,
                velocity: bin_velocity(n.vel_bin),
                onset_ticks: n.onset * per_unit,
                duration_ticks: n.duration as u64 * per_unit,
            })
            .collect();
        RawSong::new(ticks_per_quarter, notes)
    }
}

pub fn quantize(song: &RawSong) -> Score {
    quantize_with_stats(song).0
}

pub fn quantize_with_stats(song: &RawSong) -> (Score, QuantizeStats) {
    let tpq = song.ticks_per_quarter.max(1) as u128;
    if !song.is_four_four() {
        log::warn!("non-4/4 time signature; bars are still counted as 4 beats");
    }
    let mut stats = QuantizeStats {
        input_notes: song.notes.len(),
        ..Default::default()
    };
    let mut notes = Vec::with_capacity(song.notes.len());
    for n in &song.notes {
        if !(MIN_PITCH..=MAX_PITCH).contains(&n.pitch) {
            stats.out_of_range += 1;
            continue;
        }
        // round(onset * 8 / tpq), ties up
        let onset = (2 * UNITS_PER_BEAT as u128 * n.onset_ticks as u128 + tpq) / (2 * tpq);
        let duration = nearest_grid(UNITS_PER_BEAT as u128 * n.duration_ticks as u128, tpq);
        notes.push(QNote {
            pitch: n.pitch,
            vel_bin: velocity_bin(n.velocity),
            onset: onset as u64,
            duration,
        });
    }
    let (score, duplicates, trimmed) = Score::normalize(notes);
    stats.duplicates = duplicates;
    stats.trimmed = trimmed;
    (score, stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Augmentation {
    Pitch(i32),
    Velocity(i32),
}

impl std::fmt::Display for Augmentation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Augmentation::Pitch(o) => write!(f, "p{o:+}"),
            Augmentation::Velocity(o) => write!(f, "v{o:+}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variant {
    pub augmentation: Augmentation,
    pub score: Score,
}

pub const DEFAULT_PITCH_OFFSETS: [i32; 4] = [-24, -12, 12, 24];
pub const DEFAULT_VELOCITY_OFFSETS: [i32; 2] = [-1, 1];

/// One variant per pitch offset and one per velocity offset. Variants equal
/// to the original are omitted; variants that lose every note are skipped
/// with a warning.
pub fn augment(
    score: &Score,
    pitch_offsets: &[i32],
    vel_offsets: &[i32],
) -> Result<Vec<Variant>, ScoreError> {
    if let Some(&bad) = vel_offsets.iter().find(|o| o.abs() > 7) {
        return Err(ScoreError::InvalidVelocityOffset(bad));
    }
    let candidates = pitch_offsets
        .iter()
        .map(|&o| Augmentation::Pitch(o))
        .chain(vel_offsets.iter().map(|&o| Augmentation::Velocity(o)));

    let mut variants = Vec::new();
    for augmentation in candidates {
        let notes: Vec<QNote> = score
            .notes
            .iter()
            .filter_map(|n| apply(n, augmentation))
            .collect();
        let variant = Score { notes };
        if variant == *score {
            continue;
        }
        if variant.is_empty() {
            log::warn!("{}", ScoreError::EmptyVariant(augmentation));
            continue;
        }
        variants.push(Variant {
            augmentation,
            score: variant,
        });
    }
    Ok(variants)
}

fn apply(n: &QNote, augmentation: Augmentation) -> Option<QNote> {
    match augmentation {
        Augmentation::Pitch(o) => {
            let p = n.pitch as i32 + o;
            (MIN_PITCH as i32..=MAX_PITCH as i32)
                .contains(&p)
                .then_some(QNote { pitch: p as u8, ..*n })
        }
        Augmentation::Velocity(o) => Some(QNote {
            vel_bin: (n.vel_bin as i32 + o).clamp(0, VELOCITY_BINS as i32 - 1) as u8,
            ..*n
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn raw(pitch: u8, velocity: u8, onset: u64, dur: u64) -> RawNote {
        RawNote {
            pitch,
            velocity,
            onset_ticks: onset,
            duration_ticks: dur,
        }
    }

    fn q(pitch: u8, onset: u64, duration: u32) -> QNote {
        QNote {
            pitch,
            vel_bin: 4,
            onset,
            duration,
        }
    }

    /// Brute-force nearest grid value over real-valued durations.
    fn nearest_oracle(units: f64) -> u32 {
        let mut best = DURATION_GRID[0];
        for &g in &DURATION_GRID {
            let (d, bd) = ((g as f64 - units).abs(), (best as f64 - units).abs());
            if d < bd || (d == bd && g > best) {
                best = g;
            }
        }
        best
    }

    #[test]
    fn grid_shape() {
        assert_eq!(DURATION_GRID.len(), 20);
        assert!(DURATION_GRID.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(*DURATION_GRID.last().unwrap(), 64);
    }

    #[test]
    fn one_beat_is_eight_units() {
        let s = quantize(&RawSong::new(96, vec![raw(60, 64, 0, 96)]));
        assert_eq!(s.notes, vec![QNote { pitch: 60, vel_bin: 3, onset: 0, duration: 8 }]);
    }

    #[test]
    fn one_point_two_beats_rounds_to_ten_units() {
        assert_eq!(nearest_oracle(115.0 * 8.0 / 96.0), 10);
        let s = quantize(&RawSong::new(96, vec![raw(60, 64, 0, 115)]));
        assert_eq!(s.notes[0].duration, 10);
    }

    #[test]
    fn nearest_grid_matches_oracle() {
        for ticks in 0..2000u64 {
            for tpq in [96u16, 120, 480] {
                let units = ticks as f64 * 8.0 / tpq as f64;
                assert_eq!(
                    nearest_grid(8 * ticks as u128, tpq as u128),
                    nearest_oracle(units),
                    "ticks {ticks} tpq {tpq}"
                );
            }
        }
    }

    #[test]
    fn pitch_range_filter() {
        let (s, stats) = quantize_with_stats(&RawSong::new(
            96,
            vec![raw(20, 64, 0, 96), raw(21, 64, 0, 96), raw(108, 64, 0, 96), raw(109, 64, 0, 96)],
        ));
        assert_eq!(s.notes.iter().map(|n| n.pitch).collect::<Vec<_>>(), vec![21, 108]);
        assert_eq!(stats.out_of_range, 2);
    }

    #[test]
    fn velocity_bin_extremes_and_monotone() {
        assert_eq!(velocity_bin(1), 0);
        assert_eq!(velocity_bin(127), 7);
        for v in 1..127u8 {
            assert!(velocity_bin(v) <= velocity_bin(v + 1));
        }
        for b in 0..8 {
            assert_eq!(velocity_bin(bin_velocity(b)), b);
        }
    }

    #[test]
    fn onset_ties_round_up() {
        // 6 ticks at tpq 96 is half a unit
        let s = quantize(&RawSong::new(96, vec![raw(60, 64, 6, 12)]));
        assert_eq!(s.notes[0].onset, 1);
    }

    #[test]
    fn long_and_tiny_durations() {
        let s = quantize(&RawSong::new(
            96,
            vec![raw(60, 64, 0, 96 * 20), raw(62, 64, 0, 1)],
        ));
        assert_eq!(s.notes[0].duration, 64);
        assert_eq!(s.notes[1].duration, 1);
    }

    #[test]
    fn dedup_keeps_longer_then_louder() {
        let s = Score::from_notes(vec![
            QNote { pitch: 60, vel_bin: 7, onset: 0, duration: 4 },
            QNote { pitch: 60, vel_bin: 1, onset: 0, duration: 8 },
            QNote { pitch: 62, vel_bin: 2, onset: 0, duration: 8 },
            QNote { pitch: 62, vel_bin: 5, onset: 0, duration: 8 },
        ]);
        assert_eq!(
            s.notes,
            vec![
                QNote { pitch: 60, vel_bin: 1, onset: 0, duration: 8 },
                QNote { pitch: 62, vel_bin: 5, onset: 0, duration: 8 },
            ]
        );
    }

    #[test]
    fn same_pitch_overlap_is_trimmed_to_grid() {
        let s = Score::from_notes(vec![q(60, 0, 16), q(60, 9, 4)]);
        assert_eq!(s.notes[0].duration, 8);
        assert!(s.is_valid());
    }

    #[test]
    fn bar_position_examples() {
        assert_eq!(bar_position(0), (0, 0));
        assert_eq!(bar_position(33), (1, 1));
        for u in 0..200u64 {
            let (b, p) = bar_position(u);
            assert_eq!(b * 32 + p as u64, u);
            assert!(p < 32);
        }
        assert_eq!(bar_position(95), (2, 31));
    }

    #[test]
    fn gap_decomposition() {
        assert_eq!(decompose_gap(72), vec![64, 8]);
        assert_eq!(decompose_gap(9), vec![8, 1]);
        assert!(decompose_gap(0).is_empty());
        for gap in 0..500u64 {
            assert_eq!(decompose_gap(gap).iter().map(|&g| g as u64).sum::<u64>(), gap);
        }
    }

    #[test]
    fn augment_two_octaves() {
        let s = Score::from_notes(vec![q(60, 0, 8), q(60, 8, 8)]);
        let v = augment(&s, &[24, -24], &[]).unwrap();
        assert_eq!(v.len(), 2);
        assert!(v[0].score.notes.iter().all(|n| n.pitch == 84));
        assert!(v[1].score.notes.iter().all(|n| n.pitch == 36));
    }

    #[test]
    fn augment_drops_out_of_range_notes() {
        let s = Score::from_notes(vec![q(100, 0, 8), q(60, 0, 8)]);
        let v = augment(&s, &[24], &[]).unwrap();
        assert_eq!(v[0].score.notes, vec![q(84, 0, 8)]);
    }

    #[test]
    fn augment_velocity_clamp_and_identity() {
        let loud = Score::from_notes(vec![QNote { pitch: 60, vel_bin: 7, onset: 0, duration: 8 }]);
        assert!(augment(&loud, &[0], &[1]).unwrap().is_empty());
        let down = augment(&loud, &[], &[-1]).unwrap();
        assert_eq!(down[0].score.notes[0].vel_bin, 6);
        assert!(augment(&loud, &[], &[]).unwrap().is_empty());
        assert_eq!(
            augment(&loud, &[], &[8]).unwrap_err(),
            ScoreError::InvalidVelocityOffset(8)
        );
    }

    #[test]
    fn augment_skips_empty_variant() {
        let s = Score::from_notes(vec![q(100, 0, 8)]);
        assert!(augment(&s, &[24], &[]).unwrap().is_empty());
    }

    fn raw_note() -> impl Strategy<Value = RawNote> {
        (0u8..128, 1u8..128, 0u64..20_000, 1u64..5_000).prop_map(|(p, v, o, d)| raw(p, v, o, d))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn quantized_durations_on_grid(notes in prop::collection::vec(raw_note(), 0..8), tpq in 1u16..1000) {
            let s = quantize(&RawSong::new(tpq, notes));
            prop_assert!(s.is_valid());
            prop_assert!(s.notes.iter().all(|n| grid_index(n.duration).is_some()));
        }
    }

    proptest! {
        #[test]
        fn quantize_is_identity_on_grid_aligned_input(
            notes in prop::collection::vec((21u8..=108, 0u8..8, 0u64..400, 0usize..20), 0..40)
        ) {
            let s = Score::from_notes(
                notes.into_iter()
                    .map(|(pitch, vel_bin, onset, d)| QNote { pitch, vel_bin, onset, duration: DURATION_GRID[d] })
                    .collect(),
            );
            let back = quantize(&s.to_raw_song(96));
            prop_assert_eq!(back, s);
        }
    }
}
