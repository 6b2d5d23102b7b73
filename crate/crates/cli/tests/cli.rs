use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn uavsem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uavsem"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn short_experiment(dir: &Path) -> String {
    let text = String::from_utf8(uavsem(&["defaults"]).stdout).unwrap();
    let text = text
        .replace("mission_duration = 1000.0", "mission_duration = 50.0")
        .replace("episodes = 100", "episodes = 3")
        .replace("warmup_steps = 1000", "warmup_steps = 8")
        .replace("batch_size = 256", "batch_size = 8")
        .replace("hidden = [256, 256]", "hidden = [8]");
    let path = dir.join("exp.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn validate_accepts_defaults_and_rejects_nonsense() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_experiment(dir.path());
    assert!(uavsem(&["validate", "--config", &cfg]).status.success());

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[scenario]\nnum_uavs = 0\n").unwrap();
    let out = uavsem(&["validate", "--config", bad.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("num_uavs"));

    assert!(!uavsem(&["validate", "--config", "/nonexistent.toml"]).status.success());
}

#[test]
fn sweeps_write_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_experiment(dir.path());
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();
    for (verb, file, rows) in [("sweep-snr", "snr_sweep.csv", 10), ("sweep-tau", "tau_sweep.csv", 8), ("heatmap", "heatmap.csv", 32)] {
        let o = uavsem(&[verb, "--config", &cfg, "--out", out_s, "--repetitions", "2"]);
        assert!(o.status.success(), "{verb}: {}", String::from_utf8_lossy(&o.stderr));
        let table = fs::read_to_string(out.join(file)).unwrap();
        assert!(table.starts_with("config_hash,seed,"));
        assert_eq!(table.lines().count(), rows + 1, "{verb}");
    }
}

#[test]
fn train_then_evaluate_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_experiment(dir.path());
    let out = dir.path().join("run");
    let out_s = out.to_str().unwrap();
    let o = uavsem(&["train", "--config", &cfg, "--out", out_s, "--seeds", "7"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("log sha256"));
    assert_eq!(fs::read_to_string(out.join("train_log.csv")).unwrap().lines().count(), 4);

    let ck = out.join("checkpoint.json");
    let o = uavsem(&["eval", "--config", &cfg, "--out", out_s, "--checkpoint", ck.to_str().unwrap(), "--seeds", "1,2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(out.join("eval.csv")).unwrap().lines().count(), 3);
    assert!(out.join("gu_trace.csv").exists() && out.join("uav_trace.csv").exists());
}
