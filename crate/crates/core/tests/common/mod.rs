#![allow(dead_code)]

use mtf_core::score::{QNote, Score, DURATION_GRID};
use rand::Rng;

/// Random score with onsets spread over several bars, including long gaps.
pub fn random_score<R: Rng>(rng: &mut R, max_notes: usize) -> Score {
    let n = rng.random_range(0..=max_notes);
    let span = if rng.random_bool(0.2) { 4000 } else { 400 };
    let notes = (0..n)
        .map(|_| QNote {
            pitch: rng.random_range(21..=108),
            vel_bin: rng.random_range(0..8),
            onset: rng.random_range(0..span),
            duration: DURATION_GRID[rng.random_range(0..DURATION_GRID.len())],
        })
        .collect();
    Score::from_notes(notes)
}
