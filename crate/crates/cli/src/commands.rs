use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use mtf_core::analysis::{self, Artifact, Format};
use mtf_core::bpe::{self, BpeError, BpeModel};
use mtf_core::embed::{self, IdParams};
use mtf_core::score::{self, QuantizeStats, Score};
use mtf_core::smf::{self, ParseWarnings};
use mtf_core::tok::{self, Scheme, TokenSequence};
use mtf_core::tse::{self, ErrorCategory, ErrorPolicy, TseReport};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::fsio::{file_name, list_files, stem, write_atomic};
use crate::{
    resolve_formats, AnalyzeArgs, AugmentArgs, BpeApplyArgs, BpeTrainArgs, DetokenizeArgs,
    EmbedMetricsArgs, TokenizeArgs, UsageError, ValidateArgs,
};

pub const MIDI_SUFFIXES: [&str; 2] = [".mid", ".midi"];
pub const TOKEN_SUFFIX: &str = ".tokens.json";

pub struct LoadedMidi {
    pub score: Score,
    pub stats: QuantizeStats,
    pub warnings: ParseWarnings,
}

pub fn load_midi(path: &Path) -> Result<LoadedMidi> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let (song, warnings) = smf::parse_smf_with_warnings(&bytes)?;
    let (score, stats) = score::quantize_with_stats(&song);
    Ok(LoadedMidi {
        score,
        stats,
        warnings,
    })
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("value serializes");
    bytes.push(b'\n');
    bytes
}

pub fn token_file_bytes(seq: &TokenSequence) -> Vec<u8> {
    let mut bytes = seq.to_json().into_bytes();
    bytes.push(b'\n');
    bytes
}

pub fn midi_inputs(input: &Path) -> Result<Vec<PathBuf>> {
    let files = list_files(input, &MIDI_SUFFIXES)?;
    if files.is_empty() {
        bail!("no MIDI files in {}", input.display());
    }
    Ok(files)
}

/// Token files under `input` as (stem, sequence). Any unreadable file, or a
/// vocabulary hash that does not match the scheme, aborts.
pub fn load_token_files(input: &Path) -> Result<Vec<(String, TokenSequence)>> {
    let files = list_files(input, &[TOKEN_SUFFIX])?;
    if files.is_empty() {
        bail!("no {TOKEN_SUFFIX} files in {}", input.display());
    }
    files
        .iter()
        .map(|path| {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let seq = TokenSequence::from_json(&text)
                .with_context(|| format!("loading {}", path.display()))?;
            Ok((stem(path, &[TOKEN_SUFFIX]), seq))
        })
        .collect()
}

pub fn load_model(path: &Path) -> Result<BpeModel> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    BpeModel::from_json(&text).with_context(|| format!("loading {}", path.display()))
}

/// The one scheme shared by all sequences, checked against `expected`.
pub fn common_scheme(seqs: &[(String, TokenSequence)], expected: Option<Scheme>) -> Result<Scheme> {
    let first = expected.unwrap_or(seqs[0].1.scheme);
    if let Some((name, seq)) = seqs.iter().find(|(_, s)| s.scheme != first) {
        bail!("{name} uses scheme {}, expected {first}", seq.scheme);
    }
    Ok(first)
}

pub fn decode_all(
    seqs: Vec<(String, TokenSequence)>,
    model: Option<&BpeModel>,
) -> Result<Vec<(String, TokenSequence)>> {
    seqs.into_iter()
        .map(|(name, seq)| {
            if !seq.is_bpe {
                return Ok((name, seq));
            }
            let model = model.ok_or_else(|| {
                UsageError(format!("{name} is BPE-encoded; pass the model with --bpe"))
            })?;
            let decoded = bpe::bpe_decode(&seq, model).with_context(|| format!("decoding {name}"))?;
            Ok((name, decoded))
        })
        .collect()
}

fn train_error(e: BpeError) -> anyhow::Error {
    match e {
        BpeError::TargetTooSmall { .. } => UsageError(e.to_string()).into(),
        other => other.into(),
    }
}

#[derive(Serialize)]
struct TokenizeEntry {
    file: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    input_notes: usize,
    notes: usize,
    dropped_out_of_range: usize,
    dropped_duplicates: usize,
    trimmed_overlaps: usize,
    unmatched_note_ons: usize,
    orphan_note_offs: usize,
    percussion_notes: usize,
    lengths: BTreeMap<String, usize>,
}

pub fn tokenize(args: &TokenizeArgs) -> Result<()> {
    let files = midi_inputs(&args.input)?;
    let schemes = args.schemes.resolved();
    let loaded: Vec<Result<LoadedMidi>> = files.par_iter().map(|p| load_midi(p)).collect();

    let mut entries = Vec::new();
    let mut ok = 0;
    for (path, result) in files.iter().zip(loaded) {
        let name = file_name(path);
        let loaded = match result {
            Ok(l) => l,
            Err(e) => {
                log::warn!("skipping {name}: {e:#}");
                entries.push(TokenizeEntry {
                    file: name,
                    error: Some(format!("{e:#}")),
                    input_notes: 0,
                    notes: 0,
                    dropped_out_of_range: 0,
                    dropped_duplicates: 0,
                    trimmed_overlaps: 0,
                    unmatched_note_ons: 0,
                    orphan_note_offs: 0,
                    percussion_notes: 0,
                    lengths: BTreeMap::new(),
                });
                continue;
            }
        };
        let base = stem(path, &MIDI_SUFFIXES);
        let mut lengths = BTreeMap::new();
        for &scheme in &schemes {
            let seq = tok::tokenize(&loaded.score, scheme);
            lengths.insert(scheme.to_string(), seq.len());
            let out = args.output.join(scheme.name()).join(format!("{base}{TOKEN_SUFFIX}"));
            write_atomic(&out, &token_file_bytes(&seq))?;
        }
        ok += 1;
        entries.push(TokenizeEntry {
            file: name,
            error: None,
            input_notes: loaded.stats.input_notes,
            notes: loaded.score.len(),
            dropped_out_of_range: loaded.stats.out_of_range,
            dropped_duplicates: loaded.stats.duplicates,
            trimmed_overlaps: loaded.stats.trimmed,
            unmatched_note_ons: loaded.warnings.unmatched_note_ons,
            orphan_note_offs: loaded.warnings.orphan_note_offs,
            percussion_notes: loaded.warnings.percussion_notes,
            lengths,
        });
    }
    let summary = json!({
        "schemes": schemes.iter().map(|s| s.name()).collect::<Vec<_>>(),
        "processed": ok,
        "failed": files.len() - ok,
        "files": entries,
    });
    write_atomic(&args.output.join("summary.json"), &to_json_bytes(&summary))?;
    log::info!("tokenized {ok} of {} files", files.len());
    if ok == 0 {
        bail!("every input file failed");
    }
    Ok(())
}

pub fn detokenize(args: &DetokenizeArgs) -> Result<()> {
    let model = args.bpe.as_deref().map(load_model).transpose()?;
    let seqs = decode_all(load_token_files(&args.input)?, model.as_ref())?;
    let policy: ErrorPolicy = args.policy.into();
    let mut files = BTreeMap::new();
    let mut ok = 0;
    for (name, seq) in &seqs {
        match tok::detokenize(seq, policy) {
            Ok((score, report)) => {
                let bytes = smf::write_smf(&score.to_raw_song(args.tpq))?;
                write_atomic(&args.output.join(format!("{name}.mid")), &bytes)?;
                files.insert(name.clone(), json!({ "notes": score.len(), "tse": report }));
                ok += 1;
            }
            Err(e) => {
                log::warn!("{name}: {e}");
                files.insert(name.clone(), json!({ "error": e.to_string() }));
            }
        }
    }
    let summary = json!({ "processed": ok, "failed": seqs.len() - ok, "files": files });
    write_atomic(&args.output.join("summary.json"), &to_json_bytes(&summary))?;
    if ok == 0 {
        bail!("every input file failed to decode");
    }
    Ok(())
}

pub fn bpe_train(args: &BpeTrainArgs) -> Result<()> {
    let seqs = load_token_files(&args.input)?;
    common_scheme(&seqs, None)?;
    let corpus: Vec<TokenSequence> = seqs.into_iter().map(|(_, s)| s).collect();
    let model = bpe::bpe_train(&corpus, args.size.target()).map_err(train_error)?;
    write_atomic(&args.output, model.to_json().as_bytes())?;
    let encoded: Vec<TokenSequence> = corpus
        .iter()
        .map(|s| bpe::bpe_encode(s, &model))
        .collect::<Result<_, _>>()?;
    println!(
        "{}",
        json!({
            "merges": model.merges.len(),
            "vocab_size": model.vocab_size(),
            "target_size": args.size.target(),
            "compression_ratio": bpe::compression_ratio(&corpus, &encoded),
        })
    );
    Ok(())
}

pub fn bpe_apply(args: &BpeApplyArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    for (name, seq) in load_token_files(&args.input)? {
        let out = if args.decode {
            bpe::bpe_decode(&seq, &model)
        } else {
            bpe::bpe_encode(&seq, &model)
        }
        .with_context(|| format!("processing {name}"))?;
        write_atomic(&args.output.join(format!("{name}{TOKEN_SUFFIX}")), &token_file_bytes(&out))?;
    }
    Ok(())
}

/// Aggregate report plus one report per named sequence.
pub fn validate_all(seqs: &[(String, TokenSequence)]) -> Result<(TseReport, Vec<(String, TseReport)>)> {
    let per_file: Vec<(String, TseReport)> = seqs
        .par_iter()
        .map(|(name, seq)| Ok((name.clone(), tse::validate(seq)?)))
        .collect::<Result<_>>()?;
    let mut total = TseReport::default();
    for (_, r) in &per_file {
        total += *r;
    }
    Ok((total, per_file))
}

fn ratio_cells(r: &TseReport) -> String {
    ErrorCategory::ALL
        .iter()
        .map(|&c| r.ratio(c).to_string())
        .collect::<Vec<_>>()
        .join(",")
}

pub fn validation_csv(total: &TseReport, per_file: Option<&[(String, TseReport)]>) -> String {
    let Some(files) = per_file else {
        return analysis::tse_csv(total);
    };
    let header: Vec<&str> = ErrorCategory::ALL.iter().map(|c| c.column()).collect();
    let mut out = format!("file,{}\n", header.join(","));
    for (name, r) in files {
        out.push_str(&format!("{name},{}\n", ratio_cells(r)));
    }
    out.push_str(&format!("ALL,{}\n", ratio_cells(total)));
    out
}

pub fn validate(args: &ValidateArgs) -> Result<()> {
    let model = args.bpe.as_deref().map(load_model).transpose()?;
    let seqs = load_token_files(&args.input)?;
    let scheme = common_scheme(&seqs, args.scheme)?;
    let seqs = decode_all(seqs, model.as_ref())?;
    let (total, per_file) = validate_all(&seqs)?;

    let text = match args.format.into() {
        Format::Csv => validation_csv(&total, args.per_file.then_some(&per_file[..])),
        Format::Json => {
            let mut value = json!({ "scheme": scheme.name(), "files": seqs.len(), "report": total });
            if args.per_file {
                value["per_file"] = json!(per_file.iter().cloned().collect::<BTreeMap<_, _>>());
            }
            String::from_utf8(to_json_bytes(&value))?
        }
        Format::Svg => analysis::render(Artifact::Tse(&total), Format::Svg),
    };
    match &args.output {
        Some(path) => write_atomic(path, text.as_bytes())?,
        None => print!("{text}"),
    }
    Ok(())
}

/// Histograms, succession matrix and error report for one scheme's token
/// files, written as `<name>.<ext>` under `out`. Returns the written paths.
pub fn write_analysis(
    seqs: &[(String, TokenSequence)],
    scheme: Scheme,
    out: &Path,
    formats: &[Format],
    include_histograms: bool,
) -> Result<Vec<PathBuf>> {
    let base: Vec<TokenSequence> = seqs.iter().map(|(_, s)| s.clone()).collect();
    let matrix = analysis::succession_matrix(&base, scheme)?;
    let (report, _) = validate_all(seqs)?;
    let mut written = Vec::new();
    let mut put = |name: &str, artifact: Artifact<'_>| -> Result<()> {
        for &f in formats {
            let path = out.join(format!("{name}.{}", f.extension()));
            write_atomic(&path, analysis::render(artifact, f).as_bytes())?;
            written.push(path);
        }
        Ok(())
    };
    if include_histograms {
        let scores: Vec<Score> = base
            .iter()
            .map(|s| tok::detokenize(s, ErrorPolicy::Lenient).map(|(score, _)| score))
            .collect::<Result<_, _>>()?;
        write_histograms(&scores, &mut put)?;
    }
    put("succession", Artifact::Succession(&matrix))?;
    put("tse", Artifact::Tse(&report))?;
    Ok(written)
}

pub fn write_histograms(
    scores: &[Score],
    put: &mut impl FnMut(&str, Artifact<'_>) -> Result<()>,
) -> Result<()> {
    let h = analysis::note_histograms(scores);
    put("onset_position", Artifact::Histogram(&h.onset))?;
    put("offset_position", Artifact::Histogram(&h.offset))?;
    put("duration", Artifact::Histogram(&h.duration))?;
    Ok(())
}

pub fn analyze(args: &AnalyzeArgs) -> Result<()> {
    let model = args.bpe.as_deref().map(load_model).transpose()?;
    let seqs = load_token_files(&args.input)?;
    let scheme = common_scheme(&seqs, None)?;
    let seqs = decode_all(seqs, model.as_ref())?;
    let formats = resolve_formats(&args.formats);
    let written = write_analysis(&seqs, scheme, &args.output, &formats, true)?;
    log::info!("wrote {} analysis files", written.len());
    Ok(())
}

pub fn augment(args: &AugmentArgs) -> Result<()> {
    let files = midi_inputs(&args.input)?;
    let mut ok = 0;
    for path in &files {
        let loaded = match load_midi(path) {
            Ok(l) => l,
            Err(e) => {
                log::warn!("skipping {}: {e:#}", file_name(path));
                continue;
            }
        };
        let variants = score::augment(
            &loaded.score,
            &args.offsets.pitch_offsets.0,
            &args.offsets.vel_offsets.0,
        )
        .map_err(|e| UsageError(e.to_string()))?;
        let base = stem(path, &MIDI_SUFFIXES);
        for v in variants {
            let bytes = smf::write_smf(&v.score.to_raw_song(args.tpq))?;
            write_atomic(&args.output.join(format!("{base}.{}.mid", v.augmentation)), &bytes)?;
        }
        ok += 1;
    }
    if ok == 0 {
        bail!("every input file failed");
    }
    Ok(())
}

pub fn embed_metrics(args: &EmbedMetricsArgs) -> Result<()> {
    let z = embed::load_embeddings(&args.z).with_context(|| format!("loading {}", args.z.display()))?;
    let params = IdParams {
        lpca_alpha: args.lpca_alpha,
        mom_k: args.mom_k,
        twonn_discard: args.twonn_discard,
        ..IdParams::default()
    };
    let mut report = json!({ "n": z.n(), "d": z.d() });
    report["intrinsic_dimension"] = match embed::id_estimates(&z, &params) {
        Ok(est) => json!(est),
        Err(e) => {
            log::warn!("intrinsic dimension: {e}");
            json!({ "error": e.to_string() })
        }
    };

    if let Some(path) = &args.zbar {
        let zbar = embed::load_embeddings(path).with_context(|| format!("loading {}", path.display()))?;
        let density = embed::cosine_pair_density(&z, &zbar, args.bins)?;
        for f in resolve_formats(&args.formats) {
            let out = args.output.join(format!("cosine_density.{}", f.extension()));
            write_atomic(&out, analysis::render(Artifact::Histogram(&density), f).as_bytes())?;
        }
        if let Some(tau) = args.tau {
            let loss = embed::contrastive_loss(&z, &zbar, tau).map_err(|e| match e {
                embed::EmbedError::NonPositiveTau(_) => anyhow!(UsageError(e.to_string())),
                other => other.into(),
            })?;
            report["contrastive"] = json!(loss);
        }
    } else if args.tau.is_some() {
        return Err(UsageError("--tau needs --zbar".into()).into());
    }
    write_atomic(&args.output.join("metrics.json"), &to_json_bytes(&report))?;
    Ok(())
}
