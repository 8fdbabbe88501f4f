use mtf_core::score::{quantize, QNote, Score};
use mtf_core::smf::{parse_smf, write_smf, RawNote, RawSong};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_song<R: Rng>(rng: &mut R, notes: usize) -> RawSong {
    let tpq = [96u16, 120, 384, 480, 960][rng.random_range(0..5)];
    let notes = (0..notes)
        .map(|_| RawNote {
            pitch: rng.random_range(0..128),
            velocity: rng.random_range(1..128),
            onset_ticks: rng.random_range(0..200_000),
            duration_ticks: rng.random_range(1..5_000),
        })
        .collect();
    RawSong::new(tpq, notes)
}

#[test]
fn thousand_note_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let song = random_song(&mut rng, 1000);
        let bytes = write_smf(&song).unwrap();
        let back = parse_smf(&bytes).unwrap();
        assert_eq!(back.notes, song.notes);
        assert_eq!(back.ticks_per_quarter, song.ticks_per_quarter);
        assert_eq!(write_smf(&back).unwrap(), bytes);
    }
}

#[test]
fn quantized_scores_survive_midi() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let score = quantize(&random_song(&mut rng, 300));
        let bytes = write_smf(&score.to_raw_song(480)).unwrap();
        let again = quantize(&parse_smf(&bytes).unwrap());
        assert_eq!(again, score);
    }
    let empty = Score::from_notes(Vec::<QNote>::new());
    assert!(parse_smf(&write_smf(&empty.to_raw_song(96)).unwrap()).unwrap().notes.is_empty());
}

#[test]
fn fuzz_random_and_mutated_bytes() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let seeds: Vec<Vec<u8>> = (0..8)
        .map(|_| write_smf(&random_song(&mut rng, 40)).unwrap())
        .collect();
    let mut accepted = 0;
    for i in 0..100_000 {
        let bytes: Vec<u8> = match i % 3 {
            0 => {
                let len = rng.random_range(0..64);
                (0..len).map(|_| rng.random()).collect()
            }
            1 => {
                // valid header, random track body
                let mut b = b"MThd\0\0\0\x06\0\0\0\x01\0\x60MTrk".to_vec();
                let len = rng.random_range(0..48u32);
                b.extend_from_slice(&len.to_be_bytes());
                b.extend((0..rng.random_range(0..64)).map(|_| rng.random::<u8>()));
                b
            }
            _ => {
                let mut b = seeds[rng.random_range(0..seeds.len())].clone();
                for _ in 0..rng.random_range(1..6) {
                    let at = rng.random_range(0..b.len());
                    match rng.random_range(0..3) {
                        0 => b[at] = rng.random(),
                        1 => b.truncate(at),
                        _ => b.insert(at, rng.random()),
                    }
                    if b.is_empty() {
                        break;
                    }
                }
                b
            }
        };
        if let Ok(song) = parse_smf(&bytes) {
            accepted += 1;
            assert!(song.notes.iter().all(|n| n.duration_ticks >= 1));
        }
    }
    assert!(accepted > 0);
}
