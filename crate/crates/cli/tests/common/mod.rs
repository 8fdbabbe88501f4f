#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mtf_core::score::{bin_velocity, QNote, Score, DURATION_GRID};
use mtf_core::smf::write_smf;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn mtf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mtf"))
        .args(args)
        .env("MTF_LOG", "error")
        .output()
        .expect("binary runs")
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Pop-like song: a chord on every downbeat and a melody on even 1/8-beat
/// positions, weighted towards beats.
pub fn pop_song(seed: u64, bars: u64) -> Score {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let root = rng.random_range(48..60u8);
    let mut notes = Vec::new();
    for bar in 0..bars {
        let t = bar * 32;
        for (k, interval) in [0u8, 4, 7].iter().enumerate() {
            notes.push(QNote {
                pitch: root + interval,
                vel_bin: 3,
                onset: t,
                duration: if k == 0 { 32 } else { 16 },
            });
        }
        let mut pos = 0u64;
        while pos < 32 {
            let step = [4u64, 8, 2, 4][rng.random_range(0..4)];
            if pos % 8 != 0 || rng.random_bool(0.5) {
                notes.push(QNote {
                    pitch: rng.random_range(64..80),
                    vel_bin: rng.random_range(3..7),
                    onset: t + pos,
                    duration: DURATION_GRID[rng.random_range(1..10)],
                });
            }
            pos += step;
        }
    }
    Score::from_notes(notes)
}

pub fn write_pop_corpus(dir: &Path, files: usize, seed: u64) -> Vec<PathBuf> {
    std::fs::create_dir_all(dir).unwrap();
    (0..files)
        .map(|i| {
            let path = dir.join(format!("song{i:03}.mid"));
            let song = pop_song(seed + i as u64, 8 + (i as u64 % 5));
            std::fs::write(&path, write_smf(&song.to_raw_song(480)).unwrap()).unwrap();
            path
        })
        .collect()
}

pub fn velocity_of(bin: u8) -> u8 {
    bin_velocity(bin)
}
