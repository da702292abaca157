use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn gtvlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gtvlab")).args(args).env("RUST_LOG", "error").output().unwrap()
}

fn run_ok(cmd: &str, config: &Path, out: &Path, extra: &[&str]) {
    let mut args = vec![cmd, "-c", config.to_str().unwrap(), "-o", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = gtvlab(&args);
    assert!(o.status.success(), "{cmd} failed: {}", String::from_utf8_lossy(&o.stderr));
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn three_point_energy() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("e");
    run_ok("energy", &configs().join("three_point.toml"), &out, &[]);
    let e = json(&out.join("energy.json"));
    assert!((e["term_tv"].as_f64().unwrap() - 9.876543209876543).abs() < 1e-12);
    assert!((e["term_v"].as_f64().unwrap() - 1.0 / 16.0 / (0.15 * 3.0)).abs() < 1e-12);
}

#[test]
fn reruns_are_byte_identical_and_thread_independent() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("two_phase.toml");
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    run_ok("minimize", &cfg, &a, &["--threads", "1"]);
    run_ok("minimize", &cfg, &b, &["--threads", "1"]);
    run_ok("minimize", &cfg, &c, &["--threads", "3"]);
    assert_eq!(files(&a), files(&b));
    assert_eq!(files(&a), files(&c));
    let m = json(&a.join("minimize.json"));
    // the level-set rounding of the relaxation never beats the exact cut
    assert!(m["relax"]["rounded_graph_tv"].as_f64().unwrap() >= m["cut"]["graph_tv"].as_f64().unwrap() - 1e-12);
}

#[test]
fn manifest_config_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("first");
    run_ok("graph", &configs().join("graph_schedule.toml"), &first, &["--set", "cloud.n=400", "--seed", "99"]);
    let manifest = json(&first.join("manifest.json"));
    assert_eq!(manifest["master_seed"], 99);
    assert_eq!(manifest["command"], "graph");
    let resolved = tmp.path().join("resolved.toml");
    fs::write(&resolved, manifest["config"].as_str().unwrap()).unwrap();
    let second = tmp.path().join("second");
    run_ok("graph", &resolved, &second, &[]);
    assert_eq!(files(&first), files(&second));
    for (name, bytes) in files(&first) {
        if name != "manifest.json" {
            let digest = manifest["artifacts"][&name].as_str().unwrap().to_string();
            assert_eq!(digest.len(), 64, "{name}");
            assert!(!bytes.is_empty());
        }
    }
    let points = fs::read_to_string(first.join("points.csv")).unwrap();
    assert_eq!(points.lines().count(), 401);
}

#[test]
fn aniso_sweep_has_one_crossing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("a");
    run_ok("aniso", &configs().join("aniso.toml"), &out, &[]);
    let a = json(&out.join("aniso.json"));
    assert_eq!(a["sign_changes"], 1);
    let rows = fs::read_to_string(out.join("aniso.csv")).unwrap();
    assert_eq!(rows.lines().count(), 12);
}

#[test]
fn rate_rows_are_consistent() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("r");
    run_ok("rate", &configs().join("half_space_rate.toml"), &out, &["--set", "rate.replications=200"]);
    let mut r = csv::Reader::from_path(out.join("rate.csv")).unwrap();
    let hdr = r.headers().unwrap().clone();
    let col = |name: &str| hdr.iter().position(|h| h == name).unwrap();
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec.unwrap();
        let f = |name: &str| rec[col(name)].parse::<f64>().unwrap();
        let (mean, bias, se, sd, eps) = (f("mean"), f("bias"), f("se"), f("sd"), f("eps"));
        assert!((mean - 4.0 / 3.0 - bias).abs() < 1e-12);
        assert!((se - sd / 200f64.sqrt()).abs() < 1e-12);
        assert!(f("mse") >= bias * bias - 1e-12);
        // the finite box truncates the interface: the exact mean is 4/3 - eps/2
        assert!((bias + eps / 2.0).abs() < 3.0 * se, "bias {bias} se {se} at eps {eps}");
        rows += 1;
    }
    assert_eq!(rows, 4);
}

#[test]
fn tl1_of_shifted_step() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("t");
    run_ok("tl1", &configs().join("tl1_1d.toml"), &out, &[]);
    let t = json(&out.join("tl1.json"));
    let label = t["label"].as_f64().unwrap();
    // the fraction of sample points in (0.4, 0.5], up to sampling error
    assert!((label - 0.1).abs() < 0.05, "{label}");
    assert!(t["total"].as_f64().unwrap() >= label);
}

#[test]
fn config_errors_name_the_line_and_leave_no_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "schema_version = 1\n[cloud]\nsource = \"three-point\"\n[graph]\nepsilon = 0.1\n").unwrap();
    let out = tmp.path().join("out");
    let o = gtvlab(&["graph", "-c", cfg.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 5") && err.contains("epsilon"), "{err}");
    assert!(!out.exists());

    // a failure after staging began must not leave files behind either
    fs::write(&cfg, "schema_version = 1\n[cloud]\nsource = \"three-point\"\n[graph]\neps = 0.15\n[minimize]\nseeds = { from = \"list\", seeds = [[0, 0]] }\n").unwrap();
    let o = gtvlab(&["minimize", "-c", cfg.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(!out.exists());
    assert_eq!(fs::read_dir(tmp.path()).unwrap().count(), 1, "staging directory left behind");
}

#[test]
fn missing_section_is_reported() {
    let o = gtvlab(&["rate", "-c", configs().join("three_point.toml").to_str().unwrap(), "-o", "/nonexistent/x"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("[rate]"));
}
