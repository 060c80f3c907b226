use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn avis(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_avis"))
        .args(args)
        .output()
        .expect("spawn avis")
}

fn dir(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn manifest(p: &Path) -> String {
    fs::read_to_string(p.join("manifest.txt")).unwrap()
}

#[test]
fn zero_t0_is_a_usage_error() {
    let t = tempfile::tempdir().unwrap();
    let o = avis(&["restore", "--out-dir", dir(t.path()), "--t0", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn zero_seeds_is_a_usage_error() {
    let t = tempfile::tempdir().unwrap();
    let o = avis(&["verify-bound", "--out-dir", dir(t.path()), "--seeds", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn empty_mode_list_is_a_usage_error() {
    let t = tempfile::tempdir().unwrap();
    let o = avis(&["bench", "--out-dir", dir(t.path()), "--modes", ""]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_bound_defaults_pass() {
    let t = tempfile::tempdir().unwrap();
    let o = avis(&["verify-bound", "--out-dir", dir(t.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("100/100"));
    let csv = fs::read_to_string(t.path().join("bound.csv")).unwrap();
    assert_eq!(csv.lines().count(), 101);
    assert!(manifest(t.path()).ends_with("status=ok\n"));
}

#[test]
fn learned_bound_reports_empirical_status() {
    let t = tempfile::tempdir().unwrap();
    let train = t.path().join("train");
    let o = avis(&[
        "train-prior",
        "--out-dir",
        dir(&train),
        "--height",
        "4",
        "--width",
        "4",
        "--epochs",
        "2",
        "--sequences",
        "4",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let params = train.join("params.lprm");
    let v = t.path().join("verify");
    let o = avis(&[
        "verify-bound",
        "--out-dir",
        dir(&v),
        "--prior",
        "learned",
        "--params",
        dir(&params),
        "--seeds",
        "3",
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("empirical-lower-bound only"));
}

#[test]
fn bench_ratio_is_one_over_n() {
    let t = tempfile::tempdir().unwrap();
    let o = avis(&[
        "bench",
        "--out-dir",
        dir(t.path()),
        "--frames",
        "15",
        "--height",
        "16",
        "--width",
        "16",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(t.path().join("bench.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect())
        .collect();
    assert_eq!(rows.len(), 3);
    // mode, chunks, steps, latency_steps, ..., guidance_pass_ratio_vs_avis
    assert_eq!(rows[0][3], "2");
    assert_eq!(rows[1][3], "2");
    assert_eq!(rows[2][3], "10");
    assert_eq!(rows[1][11].parse::<f64>().unwrap(), 0.2);
}

#[test]
fn chunk_one_avis_and_flash_agree() {
    let t = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for mode in ["avis", "flash"] {
        let out = t.path().join(mode);
        let o = avis(&[
            "restore",
            "--out-dir",
            dir(&out),
            "--mode",
            mode,
            "--chunks",
            "1",
            "--seed",
            "4",
        ]);
        assert!(o.status.success());
        files.push(fs::read(out.join("restored.vraw")).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn degrade_then_restore_from_files() {
    let t = tempfile::tempdir().unwrap();
    let s = t.path().join("synth");
    assert!(avis(&[
        "synth",
        "--out-dir",
        dir(&s),
        "--kind",
        "gauss-ar1",
        "--height",
        "16",
        "--width",
        "16"
    ])
    .status
    .success());
    let clip = s.join("clip.vraw");
    let d = t.path().join("degrade");
    assert!(avis(&[
        "degrade",
        "--out-dir",
        dir(&d),
        "--input",
        dir(&clip),
        "--task",
        "sr4"
    ])
    .status
    .success());
    let r = t.path().join("restore");
    let o = avis(&[
        "restore",
        "--out-dir",
        dir(&r),
        "--input",
        dir(&d.join("measurement.vraw")),
        "--task",
        "sr4",
        "--reference",
        dir(&clip),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(r.join("metrics.csv").exists());
    assert!(r.join("trace.csv").exists());
    let m = manifest(&r);
    assert!(m.starts_with("verb=restore\n"));
    assert!(m.contains("\nframes=9\n"));
}

#[test]
fn failed_run_is_marked_in_manifest() {
    let t = tempfile::tempdir().unwrap();
    let missing = t.path().join("nope.vraw");
    let o = avis(&[
        "restore",
        "--out-dir",
        dir(t.path()),
        "--input",
        dir(&missing),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(manifest(t.path()).ends_with("status=failed\n"));
}

#[test]
fn metrics_of_identical_clips() {
    let t = tempfile::tempdir().unwrap();
    let s = t.path().join("synth");
    assert!(avis(&["synth", "--out-dir", dir(&s)]).status.success());
    let clip = s.join("clip.vraw");
    let m = t.path().join("m");
    let o = avis(&[
        "metrics",
        "--out-dir",
        dir(&m),
        "--restored",
        dir(&clip),
        "--reference",
        dir(&clip),
    ]);
    assert!(o.status.success());
    assert_eq!(
        String::from_utf8_lossy(&o.stdout).trim(),
        "psnr=99.0000 ssim=1"
    );
}
