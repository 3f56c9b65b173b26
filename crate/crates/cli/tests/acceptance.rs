//! CLI-level acceptance: the determinism criterion (byte-identical reruns,
//! checked by hashing three representative commands) plus exit-code and
//! output contracts.

use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use map_core::merge::{merge, plan_window, CheckpointRef, WindowMode};
use map_core::tensor_store::{write_archive, ArchiveMeta, Dtype, TensorArchive, TensorInit};
use sha2::{Digest, Sha256};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_mapeval")
}

fn run(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(bin());
    cmd.args(args).env_remove("MAP_SEED");
    for (key, value) in envs {
        cmd.env(key, value);
    }
    cmd.output().expect("spawn mapeval")
}

fn stdout_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn hash_file(path: &Path) -> String {
    sha256_hex(&std::fs::read(path).expect("read output file"))
}

fn hash_dir(dir: &Path) -> Vec<(String, String)> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)
        .expect("read dir")
        .map(|e| e.expect("dir entry").path())
        .collect();
    entries.sort();
    entries
        .iter()
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                hash_file(p),
            )
        })
        .collect()
}

fn write_checkpoints(dir: &Path, count: u64) -> Vec<String> {
    (1..=count)
        .map(|step| {
            let path = dir.join(format!("{step:03}.ckpt"));
            let values: Vec<f64> = (0..32).map(|j| (step * 100 + j) as f64 / 7.0).collect();
            write_archive(
                &path,
                &[TensorInit::new("w", Dtype::F64, vec![32], values)],
                ArchiveMeta {
                    step: Some(step),
                    ..Default::default()
                },
            )
            .unwrap();
            path.to_string_lossy().into_owned()
        })
        .collect()
}

#[test]
fn acceptance_10_determinism_of_cli_outputs() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();

    // cost: stdout only.
    let cost_a = run(&["cost", "--n", "1,2,4,8,16"], &[]);
    let cost_b = run(&["cost", "--n", "1,2,4,8,16"], &[]);
    assert!(cost_a.status.success());
    assert_eq!(sha256_hex(&cost_a.stdout), sha256_hex(&cost_b.stdout));

    // simulate noise-reduction: file output.
    let nr1 = dir.path().join("nr1");
    let nr2 = dir.path().join("nr2");
    for out in [&nr1, &nr2] {
        let output = run(
            &["simulate", "noise-reduction", "--seed", "11", "--out", out.to_str().unwrap()],
            &[],
        );
        assert!(output.status.success(), "{}", stderr_of(&output));
    }
    assert_eq!(hash_dir(&nr1), hash_dir(&nr2));

    // simulate run: JSONL + three CSVs.
    let run1 = dir.path().join("run1");
    let run2 = dir.path().join("run2");
    for out in [&run1, &run2] {
        let output = run(
            &["simulate", "run", "--seed", "7", "--out", out.to_str().unwrap()],
            &[],
        );
        assert!(output.status.success(), "{}", stderr_of(&output));
    }
    let hashes1 = hash_dir(&run1);
    assert_eq!(hashes1, hash_dir(&run2));
    assert_eq!(hashes1.len(), 4, "expected 4 output files");

    println!(
        "ACCEPTANCE 10 (CLI determinism): PASS — cost/noise-reduction/run rerun hashes identical ({} files + stdout) [{:.2?}]",
        hashes1.len() + 1,
        start.elapsed()
    );
}

#[test]
fn cost_of_one_sample_is_the_documented_row() {
    let output = run(&["cost", "--n", "1"], &[]);
    assert!(output.status.success());
    assert_eq!(stdout_of(&output), "n,cost\n1,15.0\n");
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let output = run(&["definitely-not-a-command"], &[]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn missing_required_k_is_a_usage_error() {
    let output = run(
        &["trajectory", "--log", "x.jsonl", "--benchmark", "b", "--metric", "passk"],
        &[],
    );
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn insufficient_history_exits_one_with_stable_code() {
    let dir = tempfile::tempdir().unwrap();
    let ckpts = write_checkpoints(dir.path(), 3);
    let out = dir.path().join("merged.ckpt");
    let mut args = vec!["merge", "--window", "5", "--anchor", "3", "--out", out.to_str().unwrap()];
    let refs: Vec<&str> = ckpts.iter().map(|s| s.as_str()).collect();
    args.extend(refs);
    let output = run(&args, &[]);
    assert_eq!(output.status.code(), Some(1));
    assert!(
        stderr_of(&output).starts_with("ERROR[InsufficientHistory]:"),
        "stderr was: {}",
        stderr_of(&output)
    );
    assert!(!out.exists(), "failed merge must not leave an output file");
}

#[test]
fn merge_cli_matches_library_merge() {
    let dir = tempfile::tempdir().unwrap();
    let ckpts = write_checkpoints(dir.path(), 6);
    let out = dir.path().join("merged.ckpt");
    let mut args = vec!["merge", "--window", "4", "--anchor", "6", "--out", out.to_str().unwrap()];
    args.extend(ckpts.iter().map(|s| s.as_str()));
    let output = run(&args, &[]);
    assert!(output.status.success(), "{}", stderr_of(&output));

    let series: Vec<CheckpointRef> = ckpts
        .iter()
        .enumerate()
        .map(|(i, p)| CheckpointRef::new(p, i as u64 + 1))
        .collect();
    let expected = merge(&plan_window(&series, 6, 4, WindowMode::Strict).unwrap()).unwrap();
    let got = TensorArchive::open(&out).unwrap();
    assert_eq!(got, expected.archive);
    assert_eq!(got.meta().step, Some(6));
    assert_eq!(
        got.meta().extra.get("merge_member_steps"),
        Some(&serde_json::Value::from(vec![3u64, 4, 5, 6]))
    );
}

#[test]
fn rolling_merge_cli_writes_one_file_per_anchor() {
    let dir = tempfile::tempdir().unwrap();
    let ckpts = write_checkpoints(dir.path(), 6);
    let out_dir = dir.path().join("rolled");
    let mut args = vec![
        "rolling-merge",
        "--window",
        "2",
        "--every",
        "4,6",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ];
    args.extend(ckpts.iter().map(|s| s.as_str()));
    let output = run(&args, &[]);
    assert!(output.status.success(), "{}", stderr_of(&output));
    let a = TensorArchive::open(out_dir.join("merged-00000004.ckpt")).unwrap();
    let b = TensorArchive::open(out_dir.join("merged-00000006.ckpt")).unwrap();
    assert_eq!(a.meta().step, Some(4));
    assert_eq!(b.meta().step, Some(6));
}

#[test]
fn prr_cli_reports_the_fifteen_of_sixty_six_table() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("table.csv");
    // Permutation with 15 inversions over 12 models.
    let perm: [usize; 12] = [3, 2, 1, 0, 7, 6, 5, 4, 10, 9, 8, 11];
    let mut csv = String::from("model,score_pt,score_sft\n");
    for (i, &p) in perm.iter().enumerate() {
        csv.push_str(&format!("m{i},{},{}\n", 12 - i, 12 - p));
    }
    std::fs::write(&table, csv).unwrap();
    let output = run(&["prr", "--table", table.to_str().unwrap()], &[]);
    assert!(output.status.success(), "{}", stderr_of(&output));
    assert_eq!(
        stdout_of(&output),
        "models,pairs,reversals,prr\n12,66,15,0.22727272727272727\n"
    );
}

#[test]
fn prr_cli_rejects_wrong_header() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("table.csv");
    std::fs::write(&table, "model,before,after\nm1,1,2\nm2,2,1\n").unwrap();
    let output = run(&["prr", "--table", table.to_str().unwrap()], &[]);
    assert_eq!(output.status.code(), Some(1));
    assert!(stderr_of(&output).starts_with("ERROR[SchemaMismatch]:"));
}

#[test]
fn map_seed_env_is_the_seed_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let via_env = dir.path().join("env");
    let via_flag = dir.path().join("flag");
    let output = run(
        &["simulate", "run", "--out", via_env.to_str().unwrap()],
        &[("MAP_SEED", "3")],
    );
    assert!(output.status.success(), "{}", stderr_of(&output));
    let output = run(
        &["simulate", "run", "--seed", "3", "--out", via_flag.to_str().unwrap()],
        &[],
    );
    assert!(output.status.success(), "{}", stderr_of(&output));
    assert_eq!(hash_dir(&via_env), hash_dir(&via_flag));

    // The flag outranks the environment.
    let flag_wins = dir.path().join("flagwins");
    let output = run(
        &["simulate", "run", "--seed", "3", "--out", flag_wins.to_str().unwrap()],
        &[("MAP_SEED", "99")],
    );
    assert!(output.status.success(), "{}", stderr_of(&output));
    assert_eq!(hash_dir(&flag_wins), hash_dir(&via_flag));
}

#[test]
fn greedy_metric_refuses_sampled_logs() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("log.jsonl");
    let mut lines = String::new();
    for (ckpt, step) in [("c1", 1u64), ("c2", 2)] {
        lines.push_str(&format!(
            "{{\"checkpoint\":\"{ckpt}\",\"step\":{step},\"benchmark\":\"b\",\"problem\":\"p1\",\"mode\":\"sampled\",\"outcomes\":[true,false]}}\n"
        ));
    }
    std::fs::write(&log, lines).unwrap();
    let output = run(
        &["trajectory", "--log", log.to_str().unwrap(), "--benchmark", "b", "--metric", "greedy"],
        &[],
    );
    assert_eq!(output.status.code(), Some(1));
    assert!(stderr_of(&output).starts_with("ERROR[DomainError]:"));
}

#[test]
fn report_with_no_inputs_emits_headers_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report");
    let output = run(&["report", "--out", out.to_str().unwrap()], &[]);
    assert!(output.status.success(), "{}", stderr_of(&output));
    for (file, header) in [
        ("series.csv", "protocol,step,score\n"),
        ("tau.csv", "label,protocol,tau\n"),
        ("prr.csv", "table,model,score_pt,score_sft,rank_pt,rank_sft\n"),
        ("cost.csv", "n,cost\n"),
        ("summary.csv", "metric,value\n"),
    ] {
        let text = std::fs::read_to_string(out.join(file)).unwrap();
        assert_eq!(text, header, "{file}");
    }
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(json["series"], serde_json::json!([]));
    assert_eq!(json["summary"], serde_json::json!({}));
}

#[test]
fn report_win_rate_counts_seed_tables() {
    let dir = tempfile::tempdir().unwrap();
    // Three seeds via the simulate CLI, then consolidate.
    let mut tau_files = Vec::new();
    for seed in ["1", "2", "3"] {
        let out = dir.path().join(format!("run{seed}"));
        let output = run(&["simulate", "run", "--seed", seed, "--out", out.to_str().unwrap()], &[]);
        assert!(output.status.success(), "{}", stderr_of(&output));
        tau_files.push(out.join("tau_summary.csv"));
    }
    let report_dir = dir.path().join("report");
    let mut args = vec!["report".to_string(), "--out".into(), report_dir.to_str().unwrap().into()];
    for f in &tau_files {
        args.push("--tau".into());
        args.push(f.to_str().unwrap().into());
    }
    let arg_refs: Vec<&str> = args.iter().map(|s| s.as_str()).collect();
    let output = run(&arg_refs, &[]);
    assert!(output.status.success(), "{}", stderr_of(&output));
    let summary = std::fs::read_to_string(report_dir.join("summary.csv")).unwrap();
    assert!(summary.contains("tau_comparisons,3"), "summary was: {summary}");
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(report_dir.join("report.json")).unwrap())
            .unwrap();
    assert_eq!(json["summary"]["tau_comparisons"], serde_json::json!(3));
}
