use std::path::Path;
use std::process::{Command, Output};

fn scenforge(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scenforge"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path, extra: &str) -> String {
    let text = format!(
        "seed = 5\nbases = [\"StraightObstacle\"]\nscenarios_per_base = 1\nroutes = 2\nsims = 20\nrefine_every = 10\n{extra}"
    );
    let path = dir.join("small.toml");
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn gen_then_report_and_replay() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "");
    let o = scenforge(tmp.path(), &["--config", &cfg, "--out", "a", "gen"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("2 cells, 4 selected scenes, 0 failed cells"));
    for sub in ["scripts", "traces", "reports", "state"] {
        assert!(tmp.path().join("a").join(sub).is_dir(), "{sub}");
    }

    let o = scenforge(tmp.path(), &["--out", "a", "report", "--format", "tsv"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("base\tscenario\tpolicy"));
    assert!(stdout(&o).contains("Avg.\t*\tsurrogate"));

    let trace = tmp.path().join("a/traces/StraightObstacle-1-r0-k0.jsonl");
    let o = scenforge(tmp.path(), &["replay", trace.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("identical"));

    let text = std::fs::read_to_string(&trace).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    let last = lines.pop().unwrap().replacen("\"step\":", "\"step\":1", 1);
    let tampered = format!("{}\n{last}\n", lines.join("\n"));
    let bad = tmp.path().join("tampered.jsonl");
    std::fs::write(&bad, tampered).unwrap();
    let o = scenforge(tmp.path(), &["replay", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).starts_with("differs"));
}

#[test]
fn seed_flag_overrides_config_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "");
    for out in ["x", "y"] {
        let o = scenforge(tmp.path(), &["--config", &cfg, "--seed", "11", "--out", out, "gen"]);
        assert_eq!(o.status.code(), Some(0));
    }
    let read = |d: &str| std::fs::read_to_string(tmp.path().join(d).join("reports/selected.jsonl")).unwrap();
    assert_eq!(read("x"), read("y"));
    let written = std::fs::read_to_string(tmp.path().join("x/config.toml")).unwrap();
    assert!(written.contains("seed = 11"));
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "selected = 99\n");
    let o = scenforge(tmp.path(), &["--config", &cfg, "gen"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("selected"));

    let o = scenforge(tmp.path(), &["--config", "missing.toml", "gen"]);
    assert_eq!(o.status.code(), Some(2));

    let o = scenforge(tmp.path(), &["kb", "query", "--kind", "weather", "rain"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn cell_errors_exit_1_and_are_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("empty.jsonl"), "").unwrap();
    let cfg = small_config(tmp.path(), "fixtures = \"empty.jsonl\"\n");
    let o = scenforge(tmp.path(), &["--config", &cfg, "--out", "z", "gen"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("2 failed cells"));
    let cells = std::fs::read_to_string(tmp.path().join("z/reports/cells.jsonl")).unwrap();
    assert_eq!(cells.lines().filter(|l| l.contains("\"error\":\"")).count(), 2);
}

#[test]
fn kb_build_and_query() {
    let tmp = tempfile::tempdir().unwrap();
    let o = scenforge(tmp.path(), &["kb", "build", "--dir", "kb"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(tmp.path().join("kb/entries.jsonl").is_file());
    let o = scenforge(
        tmp.path(),
        &[
            "kb",
            "query",
            "--kind",
            "behavior",
            "--dir",
            "kb",
            "-k",
            "2",
            "a pedestrian runs across the road",
        ],
    );
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 2);
    assert!(out.starts_with("1\t"));
}

#[test]
fn run_and_finetune() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(
        tmp.path(),
        "[policies.cautious]\nbrake_trigger_distance = 15.0\n[finetune]\neval_budget = 16\n[finetune.cem]\npopulation = 8\n",
    );
    let o = scenforge(tmp.path(), &["--config", &cfg, "--out", "r", "run"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("cautious\tCR"));
    let o = scenforge(tmp.path(), &["--config", &cfg, "--out", "r", "finetune"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("test 2 scenes"));
    assert!(tmp.path().join("r/state/finetuned_policy.toml").is_file());
    assert!(tmp.path().join("r/reports/finetune.json").is_file());
}
