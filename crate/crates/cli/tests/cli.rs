//! Exit-code and output contract of the command-line interface:
//! 0 success, 1 runtime failure, 2 usage or config error.

use std::path::Path;
use std::process::Command;

use claimcheck::testkit;

fn claimcheck_cmd() -> Command {
    Command::new(env!("CARGO_BIN_EXE_claimcheck"))
}

#[test]
fn validate_config_prints_defaults_with_sources() {
    let output = claimcheck_cmd().arg("validate-config").output().unwrap();
    assert_eq!(output.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("scoring.lambda = 0.5 (default)"), "{stdout}");
    assert!(stdout.contains("debate.rounds = 3 (default)"), "{stdout}");
    assert!(stdout.contains("configuration valid"), "{stdout}");
}

#[test]
fn validate_config_reports_violations_and_sources() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.toml");
    std::fs::write(&config, "[debate]\nnovelty_penalty = 1.5\n[search]\nseed = 7\n").unwrap();
    let output = claimcheck_cmd()
        .arg("validate-config")
        .arg("--config")
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stdout = String::from_utf8_lossy(&output.stdout);
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stdout.contains("search.seed = 7 (file)"), "{stdout}");
    assert!(stdout.contains("scoring.lambda = 0.5 (default)"), "{stdout}");
    assert!(
        stderr.contains("debate.novelty_penalty") && stderr.contains("(0,1)"),
        "{stderr}"
    );
}

#[test]
fn validate_config_flag_overrides_are_visible() {
    let output = claimcheck_cmd()
        .args(["validate-config", "--seed", "123"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("search.seed = 123 (flag)"), "{stdout}");
}

#[test]
fn malformed_config_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.toml");
    std::fs::write(&config, "not toml at all [").unwrap();
    let output = claimcheck_cmd()
        .arg("validate-config")
        .arg("--config")
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn verify_missing_image_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let (fixture, _) = testkit::build_fixture(dir.path(), 1, "plain", 42, 1, false);
    let output = claimcheck_cmd()
        .arg("verify")
        .arg(dir.path().join("no-such-image.png"))
        .arg("some claim")
        .arg("--config")
        .arg(&fixture.config)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("image not found"), "{stderr}");
}

#[test]
fn verify_hybrid_without_detector_source_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let (fixture, _) = testkit::build_fixture(dir.path(), 1, "plain", 42, 1, false);
    let output = claimcheck_cmd()
        .arg("verify")
        .arg(&fixture.image)
        .arg("some claim")
        .arg("--config")
        .arg(&fixture.config)
        .args(["--mode", "hybrid"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn verify_scripted_claim_prints_verdict_and_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let (fixture, _) = testkit::build_fixture(dir.path(), 1, "plain", 42, 1, false);
    let trace_path = dir.path().join("trace.json");
    let output = claimcheck_cmd()
        .arg("verify")
        .arg(&fixture.image)
        .arg("Synthetic claim c0000 about topic-0000 circulating online.")
        .arg("--config")
        .arg(&fixture.config)
        .arg("--out")
        .arg(&trace_path)
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&output.stdout);
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert_eq!(output.status.code(), Some(0), "stdout: {stdout} stderr: {stderr}");
    assert!(stdout.contains("REAL"), "{stdout}");
    assert!(stdout.contains("confidence"), "{stdout}");
    let trace: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&trace_path).unwrap()).unwrap();
    assert_eq!(trace["verdict"]["label"], "REAL");
    assert!(trace["search"]["text_trace"]["iterations"].is_array());
}

#[test]
fn verify_hybrid_with_inline_detector_report() {
    let dir = tempfile::tempdir().unwrap();
    let (fixture, _) = testkit::build_fixture(dir.path(), 1, "plain", 42, 1, true);
    let output = claimcheck_cmd()
        .arg("verify")
        .arg(&fixture.image)
        .arg("Synthetic claim c0000 about topic-0000 circulating online.")
        .arg("--config")
        .arg(&fixture.config)
        .args(["--mode", "hybrid"])
        .args(["--detector-report", "fake 0.9 fixture_detector"])
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert_eq!(output.status.code(), Some(0), "{stdout}");
    assert!(stdout.contains("IMAGE_FAKE"), "detector echo drives the verdict: {stdout}");
}

#[test]
fn verify_hybrid_with_external_detector_command() {
    let dir = tempfile::tempdir().unwrap();
    let (fixture, _) = testkit::build_fixture(dir.path(), 1, "plain", 42, 1, true);
    // external detector contract: image path argument, "<verdict> <confidence>" on stdout
    let detector = dir.path().join("detector.sh");
    std::fs::write(&detector, "#!/bin/sh\ntest -n \"$1\" || exit 1\necho \"real 0.88\"\n").unwrap();
    let mut config_text = std::fs::read_to_string(&fixture.config).unwrap();
    config_text = config_text.replace(
        "[tools]",
        &format!("[tools]\ndetector_command = \"{}\"", detector.display()),
    );
    std::fs::write(&fixture.config, config_text).unwrap();
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        std::fs::set_permissions(&detector, std::fs::Permissions::from_mode(0o755)).unwrap();
    }
    let output = claimcheck_cmd()
        .arg("verify")
        .arg(&fixture.image)
        .arg("Synthetic claim c0000 about topic-0000 circulating online.")
        .arg("--config")
        .arg(&fixture.config)
        .args(["--mode", "hybrid"])
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&output.stdout);
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert_eq!(output.status.code(), Some(0), "stdout: {stdout} stderr: {stderr}");
    assert!(stdout.contains("REAL"), "real detector verdict keeps it REAL: {stdout}");
}

#[test]
fn bench_empty_dataset_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let (fixture, _) = testkit::build_fixture(dir.path(), 1, "plain", 42, 1, false);
    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    let output = claimcheck_cmd()
        .arg("bench")
        .arg(&empty)
        .arg("--config")
        .arg(&fixture.config)
        .arg("--out")
        .arg(dir.path().join("report.json"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("no prediction pairs"), "{stderr}");
}

#[test]
fn bench_prints_summary_table() {
    let dir = tempfile::tempdir().unwrap();
    let (fixture, _) = testkit::build_fixture(dir.path(), 8, "plain", 42, 2, false);
    let out = dir.path().join("report.json");
    let output = claimcheck_cmd()
        .arg("bench")
        .arg(&fixture.dataset)
        .arg("--config")
        .arg(&fixture.config)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&output.stdout);
    for column in ["Method", "Accuracy", "Precision", "Recall", "F1-score"] {
        assert!(stdout.contains(column), "missing {column} in\n{stdout}");
    }
    assert!(Path::new(&out).exists());

    // the emitted report round-trips byte-identically through its schema
    let emitted = std::fs::read_to_string(&out).unwrap();
    let parsed: claimcheck::harness::Report = serde_json::from_str(&emitted).unwrap();
    let reserialized = serde_json::to_string_pretty(&parsed).unwrap() + "\n";
    assert_eq!(emitted, reserialized);
}

#[test]
fn bench_results_do_not_depend_on_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let (fixture, _) = testkit::build_fixture(dir.path(), 24, "plain", 42, 1, false);
    let mut reports = Vec::new();
    for workers in ["1", "3"] {
        let out = dir.path().join(format!("report_w{workers}.json"));
        let output = claimcheck_cmd()
            .arg("bench")
            .arg(&fixture.dataset)
            .arg("--config")
            .arg(&fixture.config)
            .args(["--workers", workers])
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        assert_eq!(output.status.code(), Some(0));
        let parsed: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
        reports.push(parsed);
    }
    assert_eq!(reports[0]["records"], reports[1]["records"]);
    assert_eq!(reports[0]["metrics"], reports[1]["metrics"]);
}

#[test]
fn verify_without_configured_backends_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let image = dir.path().join("img.png");
    std::fs::write(&image, testkit::placeholder_png()).unwrap();
    let output = claimcheck_cmd()
        .arg("verify")
        .arg(&image)
        .arg("some claim")
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("no backend configured"), "{stderr}");
}

#[test]
fn verify_empty_claim_text_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let (fixture, _) = testkit::build_fixture(dir.path(), 1, "plain", 42, 1, false);
    let output = claimcheck_cmd()
        .arg("verify")
        .arg(&fixture.image)
        .arg("   ")
        .arg("--config")
        .arg(&fixture.config)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn unknown_subcommand_exits_2() {
    let output = claimcheck_cmd().arg("frobnicate").output().unwrap();
    assert_eq!(output.status.code(), Some(2));
}
