use std::process::Command;

fn wavefront(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_wavefront")).args(args).output().unwrap()
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    let out = wavefront(&["--config", missing.to_str().unwrap(), "design"]);
    assert_eq!(out.status.code(), Some(2));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[paths]\nterrain = \"absent.asc\"\nsites = \"absent.csv\"\nwork_dir = \"w\"\n").unwrap();
    let out = wavefront(&["--config", bad.to_str().unwrap(), "pipeline"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.asc"));
}

#[test]
fn synth_then_stages_and_failures() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("s");
    let o = wavefront(&["--seed", "4", "synth", "--out", out_dir.to_str().unwrap(), "--sites", "6", "--cell", "0.5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["terrain.asc", "coasts.csv", "rivers.csv", "sites.csv", "truth.json", "config.toml"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let cfg = out_dir.join("config.toml");
    let cfg = cfg.to_str().unwrap();

    let o = wavefront(&["--config", cfg, "predict"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("posterior.csv"));

    let o = wavefront(&["--config", cfg, "build-env"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("build-env: done"));
    let o = wavefront(&["--config", cfg, "build-env"]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("up to date"));

    let single = out_dir.join("one.csv");
    let o = wavefront(&["--config", cfg, "simulate", "--nu", "20", "--v-coast", "0.3", "--v-river", "0.2", "--out", single.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&single).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash="));
    assert_eq!(lines.next().unwrap(), "site_id,arrival_years,reached");
    assert_eq!(lines.count(), 6);
    assert!(single.with_extension("json").exists());

    let o = wavefront(&["--config", cfg, "simulate", "--nu", "20"]);
    assert_eq!(o.status.code(), Some(2));
}
