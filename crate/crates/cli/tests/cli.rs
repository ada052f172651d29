use std::path::Path;
use std::process::{Command, Output};

fn srf_pal(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_srf-pal"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

const FAST: &str = r#"{"pool_size": 10, "training_set_size": 10, "global_samples": 20,
    "de_population": 8, "de_generations": 3, "windows_per_day": 4}"#;

#[test]
fn generate_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    for out in ["a", "b"] {
        let o = srf_pal(d, &["generate", "--seed", "7", "--days", "3", "--out", out]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert!(o.stdout.is_empty());
    }
    for f in ["signals.csv", "labels.csv"] {
        assert_eq!(std::fs::read(d.join("a").join(f)).unwrap(), std::fs::read(d.join("b").join(f)).unwrap());
    }
    let o = srf_pal(d, &["generate", "--seed", "8", "--days", "3", "--out", "c"]);
    assert_eq!(code(&o), 0);
    assert_ne!(std::fs::read(d.join("a/signals.csv")).unwrap(), std::fs::read(d.join("c/signals.csv")).unwrap());
}

#[test]
fn missing_input_exits_one_naming_path() {
    let tmp = tempfile::tempdir().unwrap();
    let o = srf_pal(tmp.path(), &["train", "--data", "missing.csv", "--labels", "l.csv", "--out", "m"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.csv"));
    assert!(!tmp.path().join("m").exists());
}

#[test]
fn usage_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let o = srf_pal(tmp.path(), &["generate", "--out", "x", "--bogus"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(code(&srf_pal(tmp.path(), &["frobnicate"])), 2);
    assert_eq!(code(&srf_pal(tmp.path(), &[])), 2);
    assert_eq!(code(&srf_pal(tmp.path(), &["generate", "--seed", "x", "--out", "o"])), 2);
}

#[test]
fn bad_config_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("c.json"), r#"{"sede": 1}"#).unwrap();
    let o = srf_pal(tmp.path(), &["generate", "--out", "o", "--config", "c.json"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("c.json"));
}

#[test]
fn generate_train_assess_eval_export() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("fast.json"), FAST).unwrap();
    let run = |args: &[&str]| {
        let o = srf_pal(d, args);
        assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    };
    run(&["generate", "--seed", "3", "--days", "4", "--out", "data", "--config", "fast.json"]);
    run(&[
        "train", "--data", "data/signals.csv", "--labels", "data/labels.csv", "--train-days", "2", "--seed", "3",
        "--out", "model", "--config", "fast.json",
    ]);
    assert!(d.join("model/model.json").exists());
    let report = std::fs::read_to_string(d.join("model/training_report.csv")).unwrap();
    assert_eq!(report.lines().count(), 1 + 18);

    run(&["assess", "--model", "model/model.json", "--input", "data/signals.csv", "--out", "out"]);
    let windows = std::fs::read_to_string(d.join("out/windows.csv")).unwrap();
    assert!(windows.starts_with("day,window_index,pal\n"));
    assert_eq!(windows.lines().count(), 1 + 16);
    for line in windows.lines().skip(1) {
        let pal: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!((1.0..=3.0).contains(&pal));
    }
    let days = std::fs::read_to_string(d.join("out/days.csv")).unwrap();
    assert!(days.starts_with("day,daily_pal_avg,daily_pal_macro,daily_class\n"));
    assert_eq!(days.lines().count(), 1 + 4);

    run(&["eval", "--input", "out", "--labels", "data/labels.csv", "--train-days", "2", "--out", "eval"]);
    let summary = std::fs::read_to_string(d.join("eval/eval.csv")).unwrap();
    assert!(summary.contains("window_count,8\n"), "{summary}");
    assert!(summary.contains("day_count,2\n"), "{summary}");
    let confusion = std::fs::read_to_string(d.join("eval/confusion.csv")).unwrap();
    let total: usize = confusion.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(total, 2);

    run(&[
        "export-trails", "--model", "model/model.json", "--input", "data/signals.csv", "--out", "trails", "--day",
        "16953", "--window", "81",
    ]);
    assert_eq!(std::fs::read_dir(d.join("trails/archetypes")).unwrap().count(), 18);
    assert_eq!(std::fs::read_dir(d.join("trails/windows")).unwrap().count(), 15);
    let t = std::fs::read_to_string(d.join("trails/windows/16953_81_heart_rate_level3.csv")).unwrap();
    assert_eq!(t.lines().count(), 1001);

    let mut entries: Vec<String> = std::fs::read_dir(d).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    entries.sort();
    assert_eq!(entries, ["data", "eval", "fast.json", "model", "out", "trails"]);
}

#[test]
fn assess_rejects_unknown_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("m.json"), r#"{"schema_version": 99}"#).unwrap();
    assert_eq!(code(&srf_pal(d, &["generate", "--days", "1", "--out", "data"])), 0);
    let o = srf_pal(d, &["assess", "--model", "m.json", "--input", "data/signals.csv", "--out", "o"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("99"));
}
