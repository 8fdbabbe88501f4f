//! One-shot run: quantize, split, augment, tokenize, train BPE, analyze, and
//! record everything in a manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mtf_core::analysis::{self, Artifact, Format};
use mtf_core::bpe::{self, BpeError};
use mtf_core::score::{self, Score};
use mtf_core::tok::{self, build_vocab, TokenSequence};
use mtf_core::tse::ErrorPolicy;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::commands::{
    load_midi, midi_inputs, to_json_bytes, token_file_bytes, validate_all, write_analysis,
    write_histograms, MIDI_SUFFIXES, TOKEN_SUFFIX,
};
use crate::fsio::{file_name, sha256_hex, stem, write_atomic};
use crate::{resolve_formats, PipelineArgs, UsageError};

pub const VALID_FRACTION: f64 = 0.10;
pub const TEST_FRACTION: f64 = 0.15;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded shuffle of `0..n`; the first `floor(0.15 n)` go to test, the next
/// `floor(0.10 n)` to validation and the rest to training. Each part is
/// returned in ascending order.
pub fn split_indices(n: usize, seed: u64) -> Split {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = (n as f64 * TEST_FRACTION).floor() as usize;
    let n_valid = (n as f64 * VALID_FRACTION).floor() as usize;
    let part = |range: std::ops::Range<usize>| {
        let mut v = order[range].to_vec();
        v.sort_unstable();
        v
    };
    Split {
        test: part(0..n_test),
        valid: part(n_test..n_test + n_valid),
        train: part(n_test + n_valid..n),
    }
}

struct Item {
    split: &'static str,
    name: String,
    score: Score,
}

#[derive(Serialize)]
struct CorpusEntry {
    file: String,
    sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    split: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    notes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn relative(path: &Path, root: &Path) -> String {
    path.strip_prefix(root)
        .unwrap_or(path)
        .components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

pub fn run(args: &PipelineArgs, seed: u64) -> Result<()> {
    let schemes = args.schemes.resolved();
    let target = args.size.target();
    for &scheme in &schemes {
        let base = build_vocab(scheme).len();
        if target <= base {
            return Err(UsageError(BpeError::TargetTooSmall { target, base }.to_string()).into());
        }
    }
    let formats = resolve_formats(&args.formats);
    let policy: ErrorPolicy = args.policy.into();
    let out = &args.output;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    tempfile::NamedTempFile::new_in(out)
        .with_context(|| format!("{} is not writable", out.display()))?;

    let files = midi_inputs(&args.input)?;
    let loaded: Vec<_> = files
        .par_iter()
        .map(|p| (std::fs::read(p).map(|b| sha256_hex(&b)), load_midi(p)))
        .collect();
    let ok: Vec<usize> = (0..files.len()).filter(|&i| loaded[i].1.is_ok()).collect();
    if ok.is_empty() {
        bail!("every input file failed");
    }
    let split = split_indices(ok.len(), seed);
    let mut split_of: BTreeMap<usize, &'static str> = BTreeMap::new();
    for (name, part) in [("train", &split.train), ("valid", &split.valid), ("test", &split.test)] {
        for &k in part {
            split_of.insert(ok[k], name);
        }
    }

    let mut corpus = Vec::new();
    let mut items = Vec::new();
    for (i, path) in files.iter().enumerate() {
        let (hash, result) = &loaded[i];
        let sha256 = hash.as_ref().map(String::clone).unwrap_or_default();
        match result {
            Ok(l) => {
                let split = split_of[&i];
                let name = stem(path, &MIDI_SUFFIXES);
                corpus.push(CorpusEntry {
                    file: file_name(path),
                    sha256,
                    split: Some(split),
                    notes: Some(l.score.len()),
                    error: None,
                });
                if split == "train" {
                    let variants = score::augment(
                        &l.score,
                        &args.offsets.pitch_offsets.0,
                        &args.offsets.vel_offsets.0,
                    )
                    .map_err(|e| UsageError(e.to_string()))?;
                    for v in variants {
                        items.push(Item {
                            split,
                            name: format!("{name}.{}", v.augmentation),
                            score: v.score,
                        });
                    }
                }
                items.push(Item {
                    split,
                    name,
                    score: l.score.clone(),
                });
            }
            Err(e) => {
                log::warn!("skipping {}: {e:#}", file_name(path));
                corpus.push(CorpusEntry {
                    file: file_name(path),
                    sha256,
                    split: None,
                    notes: None,
                    error: Some(format!("{e:#}")),
                });
            }
        }
    }
    items.sort_by(|a, b| (a.split, &a.name).cmp(&(b.split, &b.name)));

    let mut written: Vec<PathBuf> = Vec::new();
    let originals: Vec<Score> = ok
        .iter()
        .map(|&i| loaded[i].1.as_ref().unwrap().score.clone())
        .collect();
    let analysis_dir = out.join("analysis");
    let mut put = |name: &str, artifact: Artifact<'_>| -> Result<()> {
        for &f in &formats {
            let path = analysis_dir.join(format!("{name}.{}", f.extension()));
            write_atomic(&path, analysis::render(artifact, f).as_bytes())?;
            written.push(path);
        }
        Ok(())
    };
    write_histograms(&originals, &mut put)?;

    let mut scheme_stats = BTreeMap::new();
    for &scheme in &schemes {
        let dir = out.join(scheme.name());
        let vocab = build_vocab(scheme);
        let vocab_path = dir.join("vocab.json");
        write_atomic(&vocab_path, vocab.to_json().as_bytes())?;
        written.push(vocab_path);

        let seqs: Vec<(String, TokenSequence)> = items
            .par_iter()
            .map(|it| (format!("{}/{}", it.split, it.name), tok::tokenize_with(&it.score, &vocab)))
            .collect();
        for (name, seq) in &seqs {
            let path = dir.join("tokens").join(format!("{name}{TOKEN_SUFFIX}"));
            write_atomic(&path, &token_file_bytes(seq))?;
            written.push(path);
        }

        let train: Vec<TokenSequence> = seqs
            .iter()
            .filter(|(n, _)| n.starts_with("train/"))
            .map(|(_, s)| s.clone())
            .collect();
        let model = bpe::bpe_train(&train, target)?;
        let model_path = dir.join("bpe.json");
        write_atomic(&model_path, model.to_json().as_bytes())?;
        written.push(model_path);
        let encoded: Vec<TokenSequence> = seqs
            .par_iter()
            .map(|(_, s)| bpe::bpe_encode(s, &model))
            .collect::<Result<_, _>>()?;
        for ((name, _), enc) in seqs.iter().zip(&encoded) {
            let path = dir.join("bpe").join(format!("{name}{TOKEN_SUFFIX}"));
            write_atomic(&path, &token_file_bytes(enc))?;
            written.push(path);
        }

        let (report, _) = validate_all(&seqs)?;
        if policy == ErrorPolicy::Strict && !report.is_clean() {
            bail!("{scheme}: token syntax errors under strict policy");
        }
        written.extend(write_analysis(&seqs, scheme, &dir.join("analysis"), &formats, false)?);

        let base: Vec<TokenSequence> = seqs.into_iter().map(|(_, s)| s).collect();
        scheme_stats.insert(
            scheme.name(),
            json!({
                "vocab_size": vocab.len(),
                "vocab_hash": vocab.hash(),
                "bpe_vocab_size": model.vocab_size(),
                "bpe_merges": model.merges.len(),
                "sequences": base.len(),
                "base_tokens": base.iter().map(TokenSequence::len).sum::<usize>(),
                "bpe_tokens": encoded.iter().map(TokenSequence::len).sum::<usize>(),
                "compression_ratio": bpe::compression_ratio(&base, &encoded),
            }),
        );
    }

    let mut artifacts = BTreeMap::new();
    for path in &written {
        let bytes = std::fs::read(path)?;
        artifacts.insert(relative(path, out), sha256_hex(&bytes));
    }
    let manifest = json!({
        "tool": "mtf",
        "versions": { "mtf-cli": env!("CARGO_PKG_VERSION"), "mtf-core": mtf_core::VERSION },
        "config": {
            "schemes": schemes.iter().map(|s| s.name()).collect::<Vec<_>>(),
            "bpe_target": target,
            "pitch_offsets": args.offsets.pitch_offsets.0,
            "vel_offsets": args.offsets.vel_offsets.0,
            "policy": format!("{policy:?}").to_lowercase(),
            "formats": formats.iter().map(|f: &Format| f.extension()).collect::<Vec<_>>(),
            "seed": seed,
            "valid_fraction": VALID_FRACTION,
            "test_fraction": TEST_FRACTION,
        },
        "corpus": corpus,
        "schemes": scheme_stats,
        "artifacts": artifacts,
    });
    write_atomic(&out.join("manifest.json"), &to_json_bytes(&manifest))?;
    log::info!("pipeline wrote {} artifacts", written.len());
    Ok(())
}
