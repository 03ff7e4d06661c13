//! CLI integration: sweep and K-fold modes, error reporting, output shapes.

use std::path::Path;
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_voiceauth")
}

fn run_ok(dir: &Path, args: &[&str]) -> String {
    let out = Command::new(bin()).current_dir(dir).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn run_err(dir: &Path, args: &[&str]) -> String {
    let out = Command::new(bin()).current_dir(dir).args(args).output().unwrap();
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

fn make_corpus(dir: &Path) {
    run_ok(
        dir,
        &[
            "synth", "--out-dir", "corpus", "--speakers", "3", "--separation", "5",
            "--mixtures", "2", "--dim", "8", "--train-secs", "6", "--enroll-utts", "2",
            "--enroll-secs", "4", "--test-utts", "2", "--test-secs", "3", "--seed", "13",
        ],
    );
}

#[test]
fn sweep_nw_writes_monotone_csv() {
    let tmp = tempfile::tempdir().unwrap();
    make_corpus(tmp.path());
    run_ok(
        tmp.path(),
        &[
            "evaluate", "--manifest", "corpus/manifest.tsv", "--out-dir", "sweep",
            "--skip-mve", "--sweep-nw", "11,51", "--mixtures", "2", "--train-stride", "3",
            "--seed", "13",
        ],
    );
    let csv = std::fs::read_to_string(tmp.path().join("sweep/sweep_nw.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "n_w,latency_s,average_weer_percent");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("11,0.125,"));
    assert!(lines[2].starts_with("51,0.525,"));
}

#[test]
fn sweep_model_and_enroll_secs_run() {
    let tmp = tempfile::tempdir().unwrap();
    make_corpus(tmp.path());
    run_ok(
        tmp.path(),
        &[
            "evaluate", "--manifest", "corpus/manifest.tsv", "--out-dir", "sweep",
            "--skip-mve", "--sweep-model", "1x2,2x2", "--window", "21", "--train-stride",
            "3", "--seed", "13",
        ],
    );
    let csv = std::fs::read_to_string(tmp.path().join("sweep/sweep_model.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);

    run_ok(
        tmp.path(),
        &[
            "evaluate", "--manifest", "corpus/manifest.tsv", "--out-dir", "sweep",
            "--skip-mve", "--sweep-enroll-secs", "2,4", "--window", "21", "--mixtures",
            "2", "--train-stride", "3", "--seed", "13",
        ],
    );
    let csv = std::fs::read_to_string(tmp.path().join("sweep/sweep_enroll.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "enroll_secs,average_weer_percent");
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn kfold_reports_mean_and_confidence_range() {
    let tmp = tempfile::tempdir().unwrap();
    make_corpus(tmp.path());
    let stdout = run_ok(
        tmp.path(),
        &[
            "evaluate", "--manifest", "corpus/manifest.tsv", "--out-dir", "kf",
            "--skip-mve", "--kfold", "2", "--rounds", "2", "--window", "21",
            "--mixtures", "2", "--train-stride", "3", "--seed", "13",
        ],
    );
    assert!(stdout.contains("2-fold x 2 rounds"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("kf/kfold.json")).unwrap())
            .unwrap();
    assert_eq!(json["k"], 2);
    assert_eq!(json["runs"].as_array().unwrap().len(), 4);
    assert!(json["mean_weer_percent"].as_f64().unwrap() >= 0.0);
    assert!(json["confidence_range_95"].as_f64().unwrap() >= 0.0);
}

#[test]
fn config_file_applies_and_flags_override_it() {
    let tmp = tempfile::tempdir().unwrap();
    make_corpus(tmp.path());
    std::fs::write(
        tmp.path().join("cfg.json"),
        r#"{"mixtures": 2, "window": {"n_w": 21, "stride": 1}, "train_stride": 3, "seed": 13}"#,
    )
    .unwrap();
    run_ok(
        tmp.path(),
        &[
            "train-si", "--config", "cfg.json", "--manifest", "corpus/manifest.tsv",
            "--out", "si_cfg.json",
        ],
    );
    // Same settings via flags produce the identical model file.
    run_ok(
        tmp.path(),
        &[
            "train-si", "--manifest", "corpus/manifest.tsv", "--out", "si_flags.json",
            "--mixtures", "2", "--window", "21", "--train-stride", "3", "--seed", "13",
        ],
    );
    assert_eq!(
        std::fs::read(tmp.path().join("si_cfg.json")).unwrap(),
        std::fs::read(tmp.path().join("si_flags.json")).unwrap()
    );
    // A flag overrides the file: different mixture count, different model.
    run_ok(
        tmp.path(),
        &[
            "train-si", "--config", "cfg.json", "--manifest", "corpus/manifest.tsv",
            "--out", "si_override.json", "--mixtures", "4",
        ],
    );
    let overridden = std::fs::read_to_string(tmp.path().join("si_override.json")).unwrap();
    assert!(overridden.contains("\"mixtures\": 4"));
}

#[test]
fn enroll_unknown_speaker_is_an_argument_error() {
    let tmp = tempfile::tempdir().unwrap();
    make_corpus(tmp.path());
    run_ok(
        tmp.path(),
        &[
            "train-si", "--manifest", "corpus/manifest.tsv", "--out", "si.json",
            "--mixtures", "2", "--window", "21", "--train-stride", "3", "--seed", "13",
        ],
    );
    let stderr = run_err(
        tmp.path(),
        &[
            "enroll", "--si", "si.json", "--manifest", "corpus/manifest.tsv", "--out-dir",
            "pairs", "--speaker", "ghost", "--window", "21", "--seed", "13",
        ],
    );
    assert!(stderr.contains("ghost"), "error must name the speaker: {stderr}");
}

#[test]
fn stream_rejects_audio_shorter_than_one_window() {
    let tmp = tempfile::tempdir().unwrap();
    run_ok(
        tmp.path(),
        &[
            "synth", "--out-dir", "corpus", "--speakers", "2", "--separation", "5",
            "--mixtures", "2", "--dim", "39", "--train-secs", "5", "--enroll-utts", "1",
            "--enroll-secs", "4", "--test-utts", "1", "--test-secs", "3", "--seed", "19",
        ],
    );
    run_ok(
        tmp.path(),
        &[
            "train-si", "--manifest", "corpus/manifest.tsv", "--out", "si.json",
            "--mixtures", "2", "--window", "21", "--train-stride", "3", "--seed", "19",
        ],
    );
    run_ok(
        tmp.path(),
        &[
            "enroll", "--si", "si.json", "--manifest", "corpus/manifest.tsv", "--out-dir",
            "pairs", "--speaker", "spk00", "--window", "21", "--train-stride", "3",
            "--skip-mve", "--seed", "19",
        ],
    );
    // 0.1 s of audio gives 8 MFCC frames; the 21-frame window cannot fit.
    let samples: Vec<i16> = (0..800).map(|i| ((i % 80) * 100) as i16).collect();
    let audio = voiceauth::frontend::AudioSignal::new(samples, 8000).unwrap();
    voiceauth::frontend::write_wav(&tmp.path().join("short.wav"), &audio).unwrap();
    let stderr = run_err(
        tmp.path(),
        &[
            "stream", "--pair", "pairs/spk00.pair.json", "--wav", "short.wav", "--out",
            "s.csv", "--window", "21",
        ],
    );
    assert!(stderr.contains("insufficient data"), "unexpected error: {stderr}");
}

#[test]
fn silent_wav_abstains_on_every_window() {
    let tmp = tempfile::tempdir().unwrap();
    run_ok(
        tmp.path(),
        &[
            "synth", "--out-dir", "corpus", "--speakers", "2", "--separation", "5",
            "--mixtures", "2", "--dim", "39", "--train-secs", "5", "--enroll-utts", "1",
            "--enroll-secs", "4", "--test-utts", "1", "--test-secs", "3", "--seed", "23",
        ],
    );
    run_ok(
        tmp.path(),
        &[
            "train-si", "--manifest", "corpus/manifest.tsv", "--out", "si.json",
            "--mixtures", "2", "--window", "21", "--train-stride", "3", "--seed", "23",
        ],
    );
    run_ok(
        tmp.path(),
        &[
            "enroll", "--si", "si.json", "--manifest", "corpus/manifest.tsv", "--out-dir",
            "pairs", "--speaker", "spk00", "--window", "21", "--train-stride", "3",
            "--skip-mve", "--seed", "23",
        ],
    );
    let audio = voiceauth::frontend::AudioSignal::new(vec![0i16; 16000], 8000).unwrap();
    voiceauth::frontend::write_wav(&tmp.path().join("silence.wav"), &audio).unwrap();
    let stdout = run_ok(
        tmp.path(),
        &[
            "stream", "--pair", "pairs/spk00.pair.json", "--wav", "silence.wav", "--out",
            "silent.csv", "--window", "21",
        ],
    );
    assert!(stdout.contains("accept_fraction=nan"), "stdout: {stdout}");
    let csv = std::fs::read_to_string(tmp.path().join("silent.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert!(!rows.is_empty());
    assert!(
        rows.iter().all(|r| r.ends_with(",abstain")),
        "every silent-anchor window must abstain"
    );
}

#[test]
fn weer_command_reports_the_sweep() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("trials.csv"),
        "score,is_target,vad\n3.0,1,1\n2.5,1,1\n1.0,0,1\n0.5,0,1\n9.0,0,0\n",
    )
    .unwrap();
    let stdout = run_ok(
        tmp.path(),
        &["weer", "--trials", "trials.csv", "--out-prefix", "out"],
    );
    // Separable speech trials; the silent impostor at 9.0 must be excluded.
    assert!(stdout.contains("weer=0%"), "stdout: {stdout}");
    assert!(stdout.contains("abstained=1"), "stdout: {stdout}");
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("out.json")).unwrap())
            .unwrap();
    assert_eq!(json["weer_percent"], 0.0);
    let sweep = std::fs::read_to_string(tmp.path().join("out.sweep.csv")).unwrap();
    assert!(sweep.starts_with("theta,wmde,wfae\n"));
}

#[test]
fn stream_report_decimation_thins_output() {
    let tmp = tempfile::tempdir().unwrap();
    // 39-dim corpus so WAV-derived features match the model dimension.
    run_ok(
        tmp.path(),
        &[
            "synth", "--out-dir", "corpus", "--speakers", "2", "--separation", "5",
            "--mixtures", "2", "--dim", "39", "--train-secs", "5", "--enroll-utts", "1",
            "--enroll-secs", "4", "--test-utts", "1", "--test-secs", "3", "--seed", "17",
        ],
    );
    run_ok(
        tmp.path(),
        &[
            "train-si", "--manifest", "corpus/manifest.tsv", "--out", "si.json",
            "--mixtures", "2", "--window", "21", "--train-stride", "3", "--seed", "17",
        ],
    );
    run_ok(
        tmp.path(),
        &[
            "enroll", "--si", "si.json", "--manifest", "corpus/manifest.tsv", "--out-dir",
            "pairs", "--speaker", "spk00", "--window", "21", "--train-stride", "3",
            "--skip-mve", "--seed", "17",
        ],
    );
    let samples: Vec<i16> = (0..16000)
        .map(|i| (0.3 * 32767.0 * (2.0 * std::f64::consts::PI * 900.0 * i as f64 / 8000.0).sin()) as i16)
        .collect();
    let audio = voiceauth::frontend::AudioSignal::new(samples, 8000).unwrap();
    voiceauth::frontend::write_wav(&tmp.path().join("tone.wav"), &audio).unwrap();

    run_ok(
        tmp.path(),
        &[
            "stream", "--pair", "pairs/spk00.pair.json", "--wav", "tone.wav", "--out",
            "full.csv", "--window", "21",
        ],
    );
    run_ok(
        tmp.path(),
        &[
            "stream", "--pair", "pairs/spk00.pair.json", "--wav", "tone.wav", "--out",
            "thin.csv", "--window", "21", "--report-every", "10",
        ],
    );
    let full = std::fs::read_to_string(tmp.path().join("full.csv")).unwrap();
    let thin = std::fs::read_to_string(tmp.path().join("thin.csv")).unwrap();
    let full_rows = full.lines().count() - 1;
    let thin_rows = thin.lines().count() - 1;
    assert_eq!(thin_rows, full_rows.div_ceil(10));
    // Full stream: 1 + (198 - 21) = 178 windows over 2 s of 8 kHz audio.
    assert_eq!(full_rows, 178);
    assert!(full.starts_with("anchor_frame,time_s,llr,vad,decision\n"));
}
