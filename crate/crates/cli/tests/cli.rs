use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn oscinv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oscinv")).args(args).output().expect("binary runs")
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn forward_closed_form_writes_report_and_field() {
    let tmp = TempDir::new().unwrap();
    let cfg = configs().join("ac1_closed_form.json");
    let out = tmp.path().join("run");
    let o = oscinv(&["forward", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0].parse::<f64>().unwrap(), 100.0);
    assert!(row[3].parse::<f64>().unwrap() <= 1e-6);
    let field = fs::read_to_string(out.join("field.csv")).unwrap();
    assert_eq!(field.lines().next(), Some("t,x1,u"));
}

#[test]
fn same_config_gives_identical_bytes() {
    let tmp = TempDir::new().unwrap();
    let cfg = configs().join("ac2_second_order.json");
    let run = |name: &str| {
        let out = tmp.path().join(name);
        let o = oscinv(&["study", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
        (fs::read(out.join("report.csv")).unwrap(), fs::read(out.join("report.json")).unwrap())
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn coarse_time_step_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let text = fs::read_to_string(configs().join("ac2_second_order.json"))
        .unwrap()
        .replace("\"points_per_period\": 32", "\"points_per_period\": 8");
    let cfg = write(&tmp, "coarse.json", &text);
    assert_eq!(oscinv(&["study", "--config", &cfg]).status.code(), Some(2));
}

#[test]
fn omega_list_override() {
    let cfg = configs().join("ac2_second_order.json");
    let o = oscinv(&["study", "--config", cfg.to_str().unwrap(), "--omega-list", "50,100"]);
    assert_eq!(o.status.code(), Some(2));
    let o = oscinv(&["study", "--config", cfg.to_str().unwrap(), "--omega-list", "40,80,160"]);
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 3);
}

#[test]
fn failed_criterion_exits_one() {
    let tmp = TempDir::new().unwrap();
    let text = fs::read_to_string(configs().join("ac1_closed_form.json"))
        .unwrap()
        .replace("\"omega\": 100", "\"omega\": 100, \"tolerances\": {\"reference\": 1e-20}");
    let cfg = write(&tmp, "strict.json", &text);
    assert_eq!(oscinv(&["forward", "--config", &cfg]).status.code(), Some(1));
}

#[test]
fn roundtrips_pass() {
    for (cmd, file) in [
        ("invert1", "ac5_point_sensor.json"),
        ("invert2", "ac4_final_time.json"),
        ("invert3", "ac7_combined.json"),
    ] {
        let cfg = configs().join(file);
        let o = oscinv(&[cmd, "--config", cfg.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn invert2_from_data_file() {
    let tmp = TempDir::new().unwrap();
    // Λ₁(3) and Λ₃(3) for r₀ = 1 + t
    let lam = |k: f64| (4.0 - (3.0 * k).cos() - (3.0 * k).sin() / k) / (k * k);
    let data = write(
        &tmp,
        "data.json",
        &format!(r#"{{"psi": {{"expr": "{}*sin(x) + {}*sin(3*x)"}}, "t0": 3}}"#, lam(1.0), 0.3 * lam(3.0)),
    );
    let cfg = configs().join("ac4_final_time.json");
    let out = tmp.path().join("out");
    let o = oscinv(&["invert2", "--config", cfg.to_str().unwrap(), "--data", &data, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let f: Vec<f64> = serde_json::from_str(&fs::read_to_string(out.join("f_coefficients.json")).unwrap()).unwrap();
    // yₘ = √(2/π) sin mx, so sin x has coefficient √(π/2)
    let c = (std::f64::consts::PI / 2.0).sqrt();
    assert!((f[0] - c).abs() < 1e-10);
    assert!((f[2] - 0.3 * c).abs() < 1e-10);
    assert!(f[1].abs() < 1e-10);
}

#[test]
fn inadmissible_final_time_exits_two() {
    let tmp = TempDir::new().unwrap();
    // r₀ ≡ 1 makes Λ₁(2π) vanish
    let cfg = write(
        &tmp,
        "cfg.json",
        r#"{"basis": {"kind": "interval", "length": 3.141592653589793, "modes": 4},
            "source": {"f": "sin(x)", "r0": "1"}, "T": 6.283185307179586,
            "observation": {"x0": [1.0], "t0": 6.283185307179586}}"#,
    );
    let data = write(&tmp, "data.json", r#"{"psi": {"coefficients": [0, 0, 0, 0]}}"#);
    let o = oscinv(&["invert2", "--config", &cfg, "--data", &data]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn invert1_from_sampled_trace() {
    let tmp = TempDir::new().unwrap();
    // f = sin x, r = 1 with x⁰ = π/2: φ₀ = 1 − cos t, χ = 0
    let n = 2001;
    let values: Vec<String> = (0..n).map(|i| format!("{}", 1.0 - (2.0 * i as f64 / (n - 1) as f64).cos())).collect();
    let data = write(
        &tmp,
        "data.json",
        &format!(r#"{{"phi0": {{"t_end": 2, "values": [{}]}}, "x0": [1.5707963267948966]}}"#, values.join(",")),
    );
    let cfg = write(
        &tmp,
        "cfg.json",
        r#"{"basis": {"kind": "interval", "length": 3.141592653589793, "modes": 4},
            "source": {"f": "sin(x)", "r0": "1"}, "T": 2}"#,
    );
    let out = tmp.path().join("out");
    let o = oscinv(&["invert1", "--config", &cfg, "--data", &data, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("source.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,r0"));
    for line in lines {
        let r0: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!((r0 - 1.0).abs() < 1e-4, "{line}");
    }
}

#[test]
fn missing_config_exits_two() {
    assert_eq!(oscinv(&["study", "--config", "/nonexistent.json"]).status.code(), Some(2));
}
