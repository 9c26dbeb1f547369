use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use qpassage_cli::{exit, RunConfig};

const SMALL: &str = r#"
[packet]
width = "1 um"
velocity = "0.717 cm/s"

[detectors]
decay_rate = "2.3895e4 1/s"
first = { start = "0 um", end = "20 um" }
second = { start = "30 um", end = "50 um" }

[grid]
x_min = "-48 um"
x_max = "80 um"
points = 2048

[arrival]
t_max = "2 ms"
dt = "0.1 us"

[passage]
tau_max = "8 ms"
dt = "1 us"
entry_points = 32

[kijowski]
t_min = "-0.5 ms"
t_max = "1.5 ms"
samples = 801
"#;

fn qpassage(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qpassage"))
        .args(args)
        .current_dir(dir)
        .env_remove("QPASSAGE_THREADS")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_config_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = qpassage(&["arrival", "--config", "no/such/run.toml"], dir.path());
    assert_eq!(o.status.code(), Some(exit::INVALID_INPUT));
    assert!(stderr(&o).contains("no/such/run.toml"), "{}", stderr(&o));
}

#[test]
fn unknown_keys_and_units_are_rejected_with_a_location() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", "[packet]\nwidth = \"1 um\"\nspeed = 3\n");
    let o = qpassage(&["kijowski", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(exit::INVALID_INPUT));
    let msg = stderr(&o);
    assert!(msg.contains("line 3") && msg.contains("speed"), "{msg}");

    let cfg = write_config(dir.path(), "unit.toml", "[packet]\nwidth = \"1 ms\"\n");
    let o = qpassage(&["kijowski", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(exit::INVALID_INPUT));
    assert!(stderr(&o).contains("unknown length unit"), "{}", stderr(&o));
}

#[test]
fn inconsistent_geometry_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace("start = \"30 um\"", "start = \"10 um\"");
    let cfg = write_config(dir.path(), "overlap.toml", &text);
    let o = qpassage(&["arrival", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(exit::INVALID_INPUT));
    assert!(stderr(&o).contains("detector2"), "{}", stderr(&o));
}

#[test]
fn config_echo_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let o = qpassage(&["kijowski", "--config", &cfg, "--out", "k"], dir.path());
    assert_eq!(o.status.code(), Some(exit::SUCCESS), "{}", stderr(&o));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("k/summary.json")).unwrap()).unwrap();
    let echoed: RunConfig = serde_json::from_value(summary["config"].clone()).unwrap();
    let original = RunConfig::from_toml_str(SMALL).unwrap();
    assert_eq!(echoed, original);
    assert_eq!(echoed.experiment().unwrap(), original.experiment().unwrap());
}

#[test]
fn reruns_write_identical_csv_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    for (out, threads) in [("a", "1"), ("b", "3")] {
        let o = qpassage(
            &["passage", "--config", &cfg, "--out", out, "--threads", threads, "--emit-plots"],
            dir.path(),
        );
        assert!(o.status.code() != Some(exit::INVALID_INPUT), "{}", stderr(&o));
    }
    for file in ["passage.csv", "arrival.csv", "passage_classical.csv"] {
        let a = fs::read(dir.path().join("a").join(file)).unwrap();
        let b = fs::read(dir.path().join("b").join(file)).unwrap();
        assert!(!a.is_empty());
        assert!(a == b, "{file} differs between runs");
    }
    let header = fs::read_to_string(dir.path().join("a/passage.csv")).unwrap();
    assert!(header.starts_with("t_or_tau_seconds,density_per_second\n"));
    assert!(dir.path().join("a/plot.py").exists());
}

#[test]
fn failed_convergence_check_has_its_own_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{SMALL}\n[convergence]\ntolerance = 1e-12\n");
    let cfg = write_config(dir.path(), "strict.toml", &text);
    let o = qpassage(&["arrival", "--config", &cfg, "--out", "s"], dir.path());
    assert_eq!(o.status.code(), Some(exit::NOT_CONVERGED), "{}", stderr(&o));
    // outputs are still written for inspection
    assert!(dir.path().join("s/arrival.csv").exists());
}

#[test]
fn physical_warnings_have_their_own_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    // a window that misses most of the arrival distribution
    let text = SMALL.replace("t_max = \"1.5 ms\"", "t_max = \"0 ms\"");
    let cfg = write_config(dir.path(), "window.toml", &text);
    let o = qpassage(&["kijowski", "--config", &cfg, "--out", "w"], dir.path());
    assert_eq!(o.status.code(), Some(exit::PHYSICAL_WARNING), "{}", stderr(&o));
    assert!(stderr(&o).contains("warning"));
}

#[test]
fn reset_state_profiles_are_normalized() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{SMALL}\n[reset_state]\ntimes = [\"0.041 ms\"]\n");
    let cfg = write_config(dir.path(), "reset.toml", &text);
    let o = qpassage(&["reset-state", "--config", &cfg, "--out", "r"], dir.path());
    assert_eq!(o.status.code(), Some(exit::SUCCESS), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("r/reset_state_0_position.csv")).unwrap();
    let rows: Vec<(f64, f64)> = csv
        .lines()
        .skip(1)
        .map(|l| {
            let mut it = l.split(',').map(|v| v.parse::<f64>().unwrap());
            (it.next().unwrap(), it.next().unwrap())
        })
        .collect();
    let dx = rows[1].0 - rows[0].0;
    let mass: f64 = rows.iter().map(|r| r.1).sum::<f64>() * dx;
    assert!((mass - 1.0).abs() < 1e-9);
    // no density outside the first detector
    assert!(rows.iter().all(|&(x, p)| (-1e-8..20.1e-6).contains(&x) || p == 0.0));
}

#[test]
fn shipped_configs_are_valid() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = RunConfig::from_path(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        cfg.experiment().unwrap();
        cfg.discrete_reset().unwrap();
        seen += 1;
    }
    assert!(seen >= 4);
}
