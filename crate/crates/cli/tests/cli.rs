use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_recoilspec"));
    cmd.env("RUST_LOG", "error");
    cmd
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn pattern_writes_both_curves() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("pattern.csv");
    let cfg = config("tli_h2tpp.toml");
    ok(&["pattern", s(&cfg), "--power", "0.5", "--points", "120", "--out", s(&out)]);
    let text = fs::read_to_string(&out).unwrap();
    assert!(!text.contains('\r'));
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header.split(',').count(), 3, "{header}");
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 121);

    let flat = dir.path().join("flat.csv");
    ok(&["pattern", s(&cfg), "--power", "0", "--points", "50", "--out", s(&flat)]);
    let header = fs::read_to_string(&flat).unwrap();
    let header = header.lines().find(|l| !l.starts_with('#')).unwrap().to_owned();
    assert_eq!(header.split(',').count(), 2, "{header}");
}

#[test]
fn scan_is_reproducible_and_extracts() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let cfg = config("kdtli_h2tpp.toml");
    for d in [&a, &b] {
        ok(&["scan", s(&cfg), "--seed", "4", "--out", s(d)]);
    }
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 21);
    for name in &names {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name:?}");
    }
    ok(&["extract", s(&a)]);
    ok(&["extract", s(&b)]);
    let summary = fs::read(a.join("summary.json")).unwrap();
    assert_eq!(summary, fs::read(b.join("summary.json")).unwrap());
    let v = json(&a.join("summary.json"));
    let sigma = v["regression"]["sigma_abs_A2"].as_f64().unwrap();
    let ci = &v["regression"]["ci95_A2"];
    assert!((sigma - 15.0).abs() < 0.5, "{sigma}");
    assert!(ci[0].as_f64().unwrap() < sigma && sigma < ci[1].as_f64().unwrap());
}

#[test]
fn protocol_override_narrows_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("kdtli_h2tpp.toml");
    let width = |n: &str| {
        let d = dir.path().join(n);
        let arg = format!("molecules_per_sample={n}");
        ok(&["scan", s(&cfg), "--protocol", &arg, "--out", s(&d)]);
        ok(&["extract", s(&d)]);
        let v = json(&d.join("summary.json"));
        v["regression"]["ci95_A2"][1].as_f64().unwrap() - v["regression"]["ci95_A2"][0].as_f64().unwrap()
    };
    let ratio = width("10000") / width("1000000");
    assert!((7.0..14.0).contains(&ratio), "{ratio}");
}

#[test]
fn fluorescence_pair_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("kdtli_h2tpp_fluorescence.toml");
    let (half, full) = (dir.path().join("half"), dir.path().join("full"));
    let n = "molecules_per_sample=1000000";
    ok(&["scan", s(&cfg), "--shift", "half", "--protocol", n, "--out", s(&half)]);
    ok(&["scan", s(&cfg), "--shift", "full", "--protocol", n, "--seed", "1", "--out", s(&full)]);
    ok(&["extract", s(&half), "--mode", "fluorescence", "--full", s(&full)]);
    let v = json(&half.join("summary_fluorescence.json"));
    // the 1% velocity spread dephases the full-shift scan slightly, so
    // the yield reads about 2% high; the monochromatic closed loop is
    // covered by the core tests
    let p = v["p_fluo"].as_f64().unwrap();
    assert!((p - 0.11).abs() < 0.005, "{v}");
    let sigma = v["sigma_abs_A2"].as_f64().unwrap();
    assert!((sigma - 15.0).abs() < 0.1, "{v}");

    // plain extraction of the same data reads low
    ok(&["extract", s(&half)]);
    let blind = json(&half.join("summary.json"))["regression"]["sigma_abs_A2"].as_f64().unwrap();
    assert!((14.4..14.8).contains(&blind), "{blind}");

    // a record from another scenario is refused
    let other = dir.path().join("other");
    ok(&["scan", s(&config("kdtli_h2tpp.toml")), "--shift", "full", "--out", s(&other)]);
    let out = run(&["extract", s(&half), "--mode", "fluorescence", "--full", s(&other)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_single_width() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let cfg = config("kdtli_h2tpp.toml");
    ok(&["sweep", s(&cfg), "--widths", "0", "--out", s(&out)]);
    let text = fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "width,sigma_A2,ci_low_A2,ci_high_A2");
    assert_eq!(rows.len(), 2);
    assert!(dir.path().join("sweep.json").exists());
}

#[test]
fn fluo_curve_slope_ratios() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fluo.csv");
    let cfg = config("kdtli_h2tpp_fluorescence.toml");
    ok(&["fluo-curve", s(&cfg), "--p-fluo", "0,0.11,1", "--points", "11", "--out", s(&out)]);
    let text = fs::read_to_string(&out).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 11);
    assert!(rows[0][1..].iter().all(|&y| y == 0.0));
    let last = rows.last().unwrap();
    assert!((1.0 - last[2] / last[1] - 0.030).abs() <= 0.003);
    assert!((1.0 - last[3] / last[1] - 0.255).abs() <= 0.01);
    // straight lines through the origin
    for row in &rows[1..] {
        for k in 1..4 {
            assert!((row[k] / row[0] - last[k] / last[0]).abs() < 1e-9 * last[k]);
        }
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    let text = fs::read_to_string(config("kdtli_h2tpp.toml")).unwrap();

    // unknown key
    fs::write(&bad, format!("{text}\n[extra]\nx = 1\n")).unwrap();
    let out = run(&["scan", s(&bad), "--out", s(&dir.path().join("r"))]);
    assert_eq!(out.status.code(), Some(2));

    // recoil shift beyond one period
    fs::write(&bad, text.replace("distance_cm = 1.51", "distance_cm = 4.0")).unwrap();
    let out = run(&["scan", s(&bad), "--out", s(&dir.path().join("r"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("distance_cm"));

    // missing record
    let out = run(&["extract", s(&dir.path().join("nowhere"))]);
    assert_eq!(out.status.code(), Some(2));

    // numerical failure: an emptied scan step has no mean level to fit
    let rec = dir.path().join("rec");
    ok(&["scan", s(&config("kdtli_h2tpp.toml")), "--out", s(&rec)]);
    let step = rec.join("step_005.csv");
    let zeroed: String = fs::read_to_string(&step)
        .unwrap()
        .lines()
        .map(|l| match l.split_once(',') {
            Some((x, _)) if !l.starts_with('#') && x != "position_m" => format!("{x},0\n"),
            _ => format!("{l}\n"),
        })
        .collect();
    fs::write(&step, zeroed).unwrap();
    let out = run(&["extract", s(&rec)]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
