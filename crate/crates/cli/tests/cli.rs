mod common;

use std::path::Path;

use common::{mtf, s, write_pop_corpus};
use mtf_core::faults::inject;
use mtf_core::tok::TokenSequence;
use mtf_core::tse::ErrorCategory;

fn read_seq(path: &Path) -> TokenSequence {
    TokenSequence::from_json(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn tree_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn tokenize_one_file() {
    let dir = tempfile::tempdir().unwrap();
    write_pop_corpus(&dir.path().join("in"), 1, 1);
    let out = dir.path().join("out");
    let r = mtf(&["tokenize", "--input", s(&dir.path().join("in")), "--output", s(&out), "--scheme", "ts-dur"]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let files: Vec<_> = std::fs::read_dir(out.join("ts-dur")).unwrap().collect();
    assert_eq!(files.len(), 1);
    let seq = read_seq(&out.join("ts-dur/song000.tokens.json"));
    assert!(seq.len() > 10);
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["processed"], 1);
    assert!(summary["files"][0]["notes"].as_u64().unwrap() > 0);
}

#[test]
fn corrupt_file_is_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    write_pop_corpus(&input, 2, 2);
    std::fs::write(input.join("broken.mid"), b"MThd\0\0\0\x06garbage").unwrap();
    let out = dir.path().join("out");
    let r = mtf(&["tokenize", "--input", s(&input), "--output", s(&out)]);
    assert!(r.status.success());
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["processed"], 2);
    assert_eq!(summary["failed"], 1);
    assert!(summary["files"][0]["error"].is_string());
    assert_eq!(std::fs::read_dir(out.join("pos-noff")).unwrap().count(), 2);
}

#[test]
fn all_failing_inputs_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    std::fs::create_dir_all(&input).unwrap();
    std::fs::write(input.join("a.mid"), b"nope").unwrap();
    let r = mtf(&["tokenize", "--input", s(&input), "--output", s(&dir.path().join("o"))]);
    assert_eq!(r.status.code(), Some(1));
}

#[test]
fn bad_arguments_exit_two() {
    assert_eq!(mtf(&["tokenize", "--scheme", "remi"]).status.code(), Some(2));
    assert_eq!(mtf(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        mtf(&["augment", "--input", "a", "--output", "b", "--vel-offsets", "9"]).status.code(),
        Some(2)
    );
}

#[test]
fn tokenize_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    write_pop_corpus(&input, 3, 3);
    for run in ["a", "b"] {
        let r = mtf(&["tokenize", "--input", s(&input), "--output", s(&dir.path().join(run)), "--seed", "5"]);
        assert!(r.status.success());
    }
    assert_eq!(tree_bytes(&dir.path().join("a")), tree_bytes(&dir.path().join("b")));
}

#[test]
fn validate_clean_faulty_and_encoded() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    write_pop_corpus(&input, 4, 4);
    let out = dir.path().join("tok");
    assert!(mtf(&["tokenize", "--input", s(&input), "--output", s(&out), "--scheme", "ts-noff"]).status.success());
    let tokens = out.join("ts-noff");

    let clean = mtf(&["validate", "--input", s(&tokens)]);
    assert!(clean.status.success());
    assert_eq!(String::from_utf8_lossy(&clean.stdout), "type,time,dupn,nnon,nnof\n0,0,0,0,0\n");

    // BPE-encoded copies validate identically once decoded
    let model = dir.path().join("bpe.json");
    assert!(mtf(&["bpe-train", "--input", s(&tokens), "--output", s(&model), "--bpe-size", "400"]).status.success());
    let enc = dir.path().join("enc");
    assert!(mtf(&["bpe-apply", "--input", s(&tokens), "--model", s(&model), "--output", s(&enc)]).status.success());
    let r = mtf(&["validate", "--input", s(&enc), "--bpe", s(&model)]);
    assert_eq!(r.stdout, clean.stdout);
    assert_eq!(mtf(&["validate", "--input", s(&enc)]).status.code(), Some(2));

    // one fault-injected file
    let victim = tokens.join("song001.tokens.json");
    let faulty = inject(&read_seq(&victim), ErrorCategory::NoNoteOn, 3).unwrap();
    std::fs::write(&victim, faulty.to_json()).unwrap();
    let r = mtf(&["validate", "--input", s(&tokens), "--format", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&r.stdout).unwrap();
    let counts = &v["report"]["counts"];
    assert_eq!(counts["nnon"], 3);
    for c in ["type", "time", "dupn", "nnof"] {
        assert_eq!(counts[c], 0, "{c}");
    }

    // scheme and vocabulary hash mismatches abort
    assert_ne!(mtf(&["validate", "--input", s(&tokens), "--scheme", "pos-dur"]).status.code(), Some(0));
    let text = std::fs::read_to_string(&victim).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let hash = v["vocab_hash"].as_str().unwrap().to_string();
    std::fs::write(&victim, text.replace(&hash, &"0".repeat(64))).unwrap();
    assert_eq!(mtf(&["validate", "--input", s(&tokens)]).status.code(), Some(1));
}

#[test]
fn detokenize_round_trips_midi() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    write_pop_corpus(&input, 2, 5);
    let tok = dir.path().join("tok");
    assert!(mtf(&["tokenize", "--input", s(&input), "--output", s(&tok), "--scheme", "pos-dur"]).status.success());
    let mid = dir.path().join("mid");
    let r = mtf(&["detokenize", "--input", s(&tok.join("pos-dur")), "--output", s(&mid), "--policy", "strict"]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert_eq!(
        std::fs::read(mid.join("song000.mid")).unwrap(),
        std::fs::read(input.join("song000.mid")).unwrap()
    );
}

#[test]
fn augment_writes_variants() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    write_pop_corpus(&input, 1, 6);
    let out = dir.path().join("aug");
    let r = mtf(&["augment", "--input", s(&input), "--output", s(&out), "--pitch-offsets", "-12,12", "--vel-offsets", "-1"]);
    assert!(r.status.success());
    let mut names: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names, ["song000.p+12.mid", "song000.p-12.mid", "song000.v-1.mid"]);
}

#[test]
fn analyze_emits_all_formats() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    write_pop_corpus(&input, 2, 7);
    let tok = dir.path().join("tok");
    assert!(mtf(&["tokenize", "--input", s(&input), "--output", s(&tok), "--scheme", "pos-noff"]).status.success());
    let out = dir.path().join("an");
    assert!(mtf(&["analyze", "--input", s(&tok.join("pos-noff")), "--output", s(&out)]).status.success());
    for name in ["onset_position", "offset_position", "duration", "succession", "tse"] {
        for ext in ["csv", "json", "svg"] {
            assert!(out.join(format!("{name}.{ext}")).is_file(), "{name}.{ext}");
        }
    }
    let csv = std::fs::read_to_string(out.join("onset_position.csv")).unwrap();
    assert_eq!(csv.lines().count(), 33);
}

#[test]
fn pipeline_three_files_four_schemes() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    write_pop_corpus(&input, 3, 8);
    let out = dir.path().join("run");
    let r = mtf(&["pipeline", "--input", s(&input), "--output", s(&out), "--bpe-size", "300"]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    for scheme in ["ts-dur", "ts-noff", "pos-dur", "pos-noff"] {
        for f in ["vocab.json", "bpe.json", "analysis/succession.svg", "analysis/tse.csv"] {
            assert!(out.join(scheme).join(f).is_file(), "{scheme}/{f}");
        }
        let key = format!("{scheme}/tokens/train/song000.tokens.json");
        assert!(manifest["artifacts"][&key].is_string(), "{key}");
        assert!(manifest["schemes"][scheme]["compression_ratio"].as_f64().unwrap() >= 1.0);
    }
    assert!(out.join("analysis/onset_position.svg").is_file());
    assert!(!String::from_utf8_lossy(&std::fs::read(out.join("manifest.json")).unwrap())
        .contains(dir.path().to_str().unwrap()));
}

#[test]
fn pipeline_rejects_small_bpe_target() {
    let dir = tempfile::tempdir().unwrap();
    write_pop_corpus(&dir.path().join("in"), 1, 9);
    let r = mtf(&[
        "pipeline", "--input", s(&dir.path().join("in")), "--output", s(&dir.path().join("run")), "--bpe-size", "100",
    ]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("must exceed the base size"));
}

#[test]
fn embed_metrics_report() {
    use mtf_core::embed::EmbeddingSet;
    use rand::{Rng, SeedableRng};
    let dir = tempfile::tempdir().unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let z: Vec<f64> = (0..400 * 6).map(|_| rng.random::<f64>() - 0.5).collect();
    let zb: Vec<f64> = z.iter().map(|v| v + 0.05 * (rng.random::<f64>() - 0.5)).collect();
    let zp = dir.path().join("z.emb");
    let zbp = dir.path().join("zbar.emb");
    std::fs::write(&zp, EmbeddingSet::new(400, 6, z).unwrap().to_emb1()).unwrap();
    std::fs::write(&zbp, EmbeddingSet::new(400, 6, zb).unwrap().to_emb1()).unwrap();
    let out = dir.path().join("m");
    let r = mtf(&["embed-metrics", "--z", s(&zp), "--zbar", s(&zbp), "--tau", "0.1", "--output", s(&out)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(v["d"], 6);
    assert!(v["intrinsic_dimension"]["twonn"].as_f64().unwrap() > 3.0);
    assert!(v["contrastive"]["mean_loss"].as_f64().unwrap() >= 0.0);
    assert!(out.join("cosine_density.svg").is_file());
    let bad = mtf(&["embed-metrics", "--z", s(&zp), "--zbar", s(&zbp), "--tau", "0", "--output", s(&out)]);
    assert_eq!(bad.status.code(), Some(2));
}
