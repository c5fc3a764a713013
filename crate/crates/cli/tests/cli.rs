use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use opplab_cli::output::{read_manifest, sha256_hex};

fn opplab(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_opplab"));
    cmd.args(args).env_remove("OPPLAB_PANIC_AT_STREAM").env_remove("OPPLAB_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn opplab")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn run(cmd: &str, cfg: &str, out: &Path, envs: &[(&str, &str)]) -> Output {
    opplab(&[cmd, "--config", cfg, "--seed", "5", "--out", out.to_str().unwrap()], envs)
}

const SAMPLE: &str = r#"{"model":{"preset":"engel"},"task":{"sample":{"n":6,"replications":8}}}"#;

#[test]
fn expand_sylvester_two_fifths() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "e.json",
        r#"{"model":{"preset":"sylvester"},"task":{"expand":{"scheme":"sylvester","x":"2/5"}}}"#,
    );
    let out = tmp.path().join("out");
    let o = run("expand", &cfg, &out, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(out.join("digits.txt")).unwrap(), "3\n15\n");
}

#[test]
fn manifest_hashes_match_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "s.json", SAMPLE);
    let out = tmp.path().join("out");
    assert_eq!(code(&run("sample", &cfg, &out, &[])), 0);
    let m = read_manifest(&out).unwrap();
    assert_eq!((m.status.as_str(), m.seed, m.partial), ("ok", 5, false));
    assert!(m.files.contains_key("results.csv"));
    for (name, hash) in &m.files {
        assert_eq!(&sha256_hex(&fs::read(out.join(name)).unwrap()), hash, "{name}");
    }
}

#[test]
fn same_seed_same_bytes_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "s.json", SAMPLE);
    let dirs: Vec<PathBuf> = ["1", "4"]
        .iter()
        .map(|t| {
            let out = tmp.path().join(format!("t{t}"));
            assert_eq!(code(&run("sample", &cfg, &out, &[("OPPLAB_THREADS", t)])), 0);
            out
        })
        .collect();
    let a = read_manifest(&dirs[0]).unwrap();
    let b = read_manifest(&dirs[1]).unwrap();
    assert_eq!(a.files, b.files);
    assert_eq!((a.threads, b.threads), (1, 4));
}

#[test]
fn injected_panic_leaves_partial_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "s.json", SAMPLE);
    let out = tmp.path().join("out");
    let o = run("sample", &cfg, &out, &[("OPPLAB_PANIC_AT_STREAM", "3"), ("RUST_BACKTRACE", "0")]);
    assert_eq!(code(&o), 4);
    let m = read_manifest(&out).unwrap();
    assert!(m.partial);
    assert_eq!(m.status, "partial");
    let csv = fs::read_to_string(out.join("results.csv")).unwrap();
    assert!(!csv.lines().any(|l| l.starts_with("3,")), "failed stream must not appear");
    let report = opplab(&["report", out.to_str().unwrap()], &[]);
    assert_eq!(code(&report), 0);
    assert!(String::from_utf8_lossy(&report.stdout).starts_with("PARTIAL"));
}

#[test]
fn config_errors_have_distinct_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let bad_json = write_config(tmp.path(), "a.json", "{not json");
    assert_eq!(code(&run("sample", &bad_json, &out, &[])), 2);
    assert_eq!(code(&run("sample", "/nonexistent/config.json", &out, &[])), 2);

    let unknown = write_config(
        tmp.path(),
        "b.json",
        r#"{"model":{"preset":"luroth","colour":1},"task":{"sample":{"n":5,"replications":2}}}"#,
    );
    let o = run("sample", &unknown, &out, &[]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));

    let small_p = write_config(
        tmp.path(),
        "c.json",
        r#"{"model":{"preset":"luroth"},"task":{"law":{"theorem":"thm5","beta":1,"p":0.5,"rho":{"e":1,"l":0},"n_grid":[100,1000],"replications":10,"epsilons":[0.1]}}}"#,
    );
    let o = run("law", &small_p, &out, &[]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("p must be"));

    // command and task disagree
    let sample = write_config(tmp.path(), "d.json", SAMPLE);
    assert_eq!(code(&run("verify", &sample, &out, &[])), 3);
    assert!(!out.exists(), "no artifacts on config errors");
}

#[test]
fn report_requires_a_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&opplab(&["report", tmp.path().to_str().unwrap()], &[])), 3);
    fs::write(tmp.path().join("manifest.json"), "{}").unwrap();
    assert_eq!(code(&opplab(&["report", "--out", tmp.path().to_str().unwrap()], &[])), 3);
}

#[test]
fn verify_report_and_plot_data() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "v.json",
        r#"{"model":{"preset":"luroth"},"task":{"verify":{"lemma":"dominance","samples":100000,"x_grid":[1.5,2,5]}}}"#,
    );
    let out = tmp.path().join("out");
    let o = run("verify", &cfg, &out, &[]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("verdict: PASS"));
    let report = opplab(&["report", out.to_str().unwrap()], &[]);
    assert_eq!(code(&report), 0);
    let text = String::from_utf8_lossy(&report.stdout);
    assert!(text.contains("p_hat") && text.contains("margin"), "{text}");
    let dat = fs::read_to_string(out.join("dominance.dat")).unwrap();
    assert_eq!(dat.lines().filter(|l| !l.starts_with('#')).count(), 3);
}

#[test]
fn law_run_writes_series_and_trends() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "l.json",
        r#"{"model":{"preset":"luroth"},"task":{"law":{"theorem":"thm2","weights":{"u":1,"s":1,"r":1,"p":2,"j0":1},"n_grid":[50,500],"replications":40,"epsilons":[0.5]}}}"#,
    );
    let out = tmp.path().join("out");
    let o = run("law", &cfg, &out, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["theorem"], "thm2");
    let series = fs::read_to_string(out.join("series.csv")).unwrap();
    assert_eq!(series.lines().count(), 1 + 40 * 2);
}
