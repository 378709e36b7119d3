use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn blockid(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blockid"))
        .current_dir(dir)
        .env_remove("BLOCKID_SEED")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn kv(text: &str, key: &str) -> Option<String> {
    text.lines()
        .filter_map(|l| l.split_once(" = "))
        .find(|(k, _)| *k == key)
        .map(|(_, v)| v.to_string())
}

fn gen(dir: &Path, plant: &str, seed: &str) -> PathBuf {
    let out = dir.join("data");
    let o = blockid(dir, &["gen", "--plant", plant, "--out", "data", "--seed", seed]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

const SMALL: [&str; 4] = ["--max-poles", "2", "--max-zeros", "2"];

fn fit_args<'a>(kind: &'a str, ident: &'a [&'a str], valid: &'a [&'a str]) -> Vec<&'a str> {
    let mut args = vec!["fit", "--kind", kind, "--ident"];
    args.extend_from_slice(ident);
    args.push("--valid");
    args.extend_from_slice(valid);
    args.extend_from_slice(&["--out", "fit", "--format", "kv"]);
    args.extend_from_slice(&SMALL);
    args
}

#[test]
fn gen_writes_the_standard_suite_reproducibly() {
    let tmp = tempfile::tempdir().unwrap();
    let data = gen(tmp.path(), "foam-wh", "7");
    let mut names: Vec<String> = fs::read_dir(&data)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(
        names,
        ["foam-wh-gradual.csv", "foam-wh-step-10.csv", "foam-wh-step-20.csv", "foam-wh-step-40.csv", "foam-wh-step-60.csv"]
    );
    let first = fs::read(data.join("foam-wh-step-20.csv")).unwrap();
    let again = tempfile::tempdir().unwrap();
    let data2 = gen(again.path(), "foam-wh", "7");
    assert_eq!(first, fs::read(data2.join("foam-wh-step-20.csv")).unwrap());
    let other = tempfile::tempdir().unwrap();
    let data3 = gen(other.path(), "foam-wh", "8");
    assert_ne!(first, fs::read(data3.join("foam-wh-step-20.csv")).unwrap());
}

#[test]
fn unknown_plant_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = blockid(tmp.path(), &["gen", "--plant", "nope", "--out", "d"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("nope") && err.contains("foam-wh"), "{err}");
}

#[test]
fn fit_then_eval_agree() {
    let tmp = tempfile::tempdir().unwrap();
    gen(tmp.path(), "wh", "3");
    let ident = ["data/wh-step-10.csv", "data/wh-step-60.csv", "data/wh-gradual.csv"];
    let valid = ["data/wh-step-20.csv", "data/wh-step-40.csv"];
    let o = blockid(tmp.path(), &fit_args("wiener", &ident, &valid));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = fs::read_to_string(tmp.path().join("fit/report-wiener.txt")).unwrap();
    assert_eq!(kv(&report, "schema").as_deref(), Some("blockid-report v1"));
    assert_eq!(kv(&report, "output.0.dataset.3.name").as_deref(), Some("wh-step-20"));
    let reported = kv(&report, "output.0.dataset.3.fit").unwrap();

    let e = blockid(
        tmp.path(),
        &["eval", "--model", "fit/model-wiener.txt", "--data", "data/wh-step-20.csv", "--format", "kv"],
    );
    assert!(e.status.success());
    assert_eq!(kv(&stdout(&e), "dataset.0.output.0.fit"), Some(reported));
}

#[test]
fn missing_validation_file_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    gen(tmp.path(), "linear", "1");
    let ident = ["data/linear-step-10.csv"];
    let valid = ["data/does-not-exist.csv"];
    let o = blockid(tmp.path(), &fit_args("linear", &ident, &valid));
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("does-not-exist"));

    let none = blockid(tmp.path(), &["fit", "--kind", "linear", "--ident", "data/linear-step-10.csv", "--out", "x"]);
    assert_eq!(none.status.code(), Some(2));
}

#[test]
fn simulate_writes_predictions_that_eval_reproduces() {
    let tmp = tempfile::tempdir().unwrap();
    gen(tmp.path(), "linear", "2");
    let ident = ["data/linear-step-10.csv", "data/linear-step-60.csv", "data/linear-gradual.csv"];
    let valid = ["data/linear-step-20.csv", "data/linear-step-40.csv"];
    assert!(blockid(tmp.path(), &fit_args("linear", &ident, &valid)).status.success());
    let s = blockid(
        tmp.path(),
        &["simulate", "--model", "fit/model-linear.txt", "--data", "data/linear-step-40.csv", "--out", "sim.csv"],
    );
    assert!(s.status.success(), "{}", String::from_utf8_lossy(&s.stderr));
    // a model evaluated on its own predictions fits perfectly
    let e = blockid(tmp.path(), &["eval", "--model", "fit/model-linear.txt", "--data", "sim.csv", "--format", "kv"]);
    assert_eq!(kv(&stdout(&e), "dataset.0.output.0.fit").as_deref(), Some("100.00"));
}

#[test]
fn curvefit_recovers_power_law() {
    let tmp = tempfile::tempdir().unwrap();
    let mut csv = String::from("porosity,pressure\n");
    for phi in [68.0, 76.0, 82.0, 86.0] {
        csv.push_str(&format!("{phi},{}\n", 2.0 * (1.0f64 - phi / 100.0).powf(1.5)));
    }
    fs::write(tmp.path().join("pts.csv"), csv).unwrap();
    let o = blockid(tmp.path(), &["curvefit", "--points", "pts.csv", "--format", "kv"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let c: f64 = kv(&text, "c").unwrap().parse().unwrap();
    let n: f64 = kv(&text, "n").unwrap().parse().unwrap();
    assert!((c - 2.0).abs() < 1e-6 && (n - 1.5).abs() < 1e-6, "{text}");
}

#[test]
fn geometry_builds_a_curvature_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let mut csv = String::from("t,x1,y1,x2,y2,x3,y3,x4,y4\n");
    for (i, r) in [50.0, 40.0, 30.0].iter().enumerate() {
        csv.push_str(&format!("{}", i as f64 * 0.1));
        for k in 0..4 {
            let th = 0.3 * k as f64;
            csv.push_str(&format!(",{},{}", r * f64::cos(th), r * f64::sin(th)));
        }
        csv.push('\n');
    }
    fs::write(tmp.path().join("m.csv"), csv).unwrap();
    let o = blockid(tmp.path(), &["geometry", "--markers", "m.csv", "--mode", "curvature", "--out", "k.csv"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(tmp.path().join("k.csv").exists());
    let bad = blockid(tmp.path(), &["geometry", "--markers", "m.csv", "--mode", "contraction", "--out", "c.csv"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn seed_environment_variable_overrides_default() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    gen(a.path(), "wiener", "42");
    let o = Command::new(env!("CARGO_BIN_EXE_blockid"))
        .current_dir(b.path())
        .env("BLOCKID_SEED", "42")
        .args(["gen", "--plant", "wiener", "--out", "data"])
        .output()
        .unwrap();
    assert!(o.status.success());
    let name = "data/wiener-step-20.csv";
    assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap());
}

#[test]
fn search_and_select() {
    let tmp = tempfile::tempdir().unwrap();
    gen(tmp.path(), "hammerstein", "4");
    let mut args = vec!["search", "--kinds", "linear,hammerstein", "--ident"];
    args.extend(["data/hammerstein-step-10.csv", "data/hammerstein-step-60.csv", "data/hammerstein-gradual.csv"]);
    args.extend(["--valid", "data/hammerstein-step-20.csv", "data/hammerstein-step-40.csv", "--out", "s"]);
    args.extend(SMALL);
    let o = blockid(tmp.path(), &args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let selection = fs::read_to_string(tmp.path().join("s/selection.txt")).unwrap();
    assert_eq!(kv(&selection, "selected").as_deref(), Some("Hammerstein"), "{selection}");

    let again = blockid(
        tmp.path(),
        &["select", "s/report-linear.txt", "s/report-hammerstein.txt", "--out", "sel.txt", "--format", "kv"],
    );
    assert!(again.status.success());
    let resel = fs::read_to_string(tmp.path().join("sel.txt")).unwrap();
    assert_eq!(kv(&resel, "selected"), kv(&selection, "selected"));
}
