use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn tdelay(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tdelay")).args(args).current_dir(cwd).output().expect("run tdelay")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn workdir() -> tempfile::TempDir {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("barrier.cfg"), "# unit barrier on [-1, 1]\nkind = square\nheight = 1\na = -1\nb = 1\n").unwrap();
    std::fs::write(d.path().join("well.cfg"), "kind = square\nheight = -1\na = 0\nb = 2\ngeometry = radial\n").unwrap();
    d
}

/// Header row and the body lines after the comment block.
fn csv(text: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(|c| c.parse().unwrap_or(f64::NAN)).collect()).collect();
    (header, rows)
}

#[test]
fn delay_sweep_columns_and_config_block() {
    let d = workdir();
    let out = stdout(&tdelay(&["delay", "--potential", "barrier.cfg", "--emin", "0.1", "--emax", "3", "--n", "200"], d.path()));
    assert!(out.starts_with("# tdelay delay\n"));
    for line in ["# emin = 0.1", "# emax = 3", "# n = 200", "# potential.kind = square", "# potential.height = 1"] {
        assert!(out.lines().any(|l| l == line), "missing {line}");
    }
    let (h, rows) = csv(&out);
    assert_eq!(h, ["E", "tau_ew", "tau_tr", "tau_refl", "absT2"]);
    assert_eq!(rows.len(), 200);
    assert_eq!(rows[0][0], 0.1);
    assert_eq!(rows[199][0], 3.0);
}

#[test]
fn sojourn_scan_columns() {
    let d = workdir();
    let args = ["sojourn-scan", "--potential", "barrier.cfg", "--energy", "0.5", "--rmax", "400", "--steps", "80", "--fuzzy-rho", "40", "--reference", "free-flight"];
    let out = stdout(&tdelay(&args, d.path()));
    let (h, rows) = csv(&out);
    assert_eq!(h, ["r", "T_int", "T_ref", "tau_local"]);
    assert_eq!(rows.len(), 80);
    assert!(out.contains("# fuzzy.rho = 40\n") && out.contains("# reference = free-flight\n"));
    for r in &rows {
        assert!((r[1] - r[2] - r[3]).abs() < 1e-9 * r[1].abs().max(1.0));
    }
}

#[test]
fn misspelt_key_exits_2_naming_it() {
    let d = workdir();
    std::fs::write(d.path().join("run.cfg"), "energy = 1\npotental.kind = square\n").unwrap();
    let o = tdelay(&["delay", "--config", "run.cfg"], d.path());
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("run.cfg:2") && e.contains("`potental.kind`"), "{e}");
    let o = tdelay(&["delay", "--potential", "barrier.cfg", "--set", "potental.height=2", "--energy", "1"], d.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("potental"));
}

#[test]
fn bad_values_exit_2_with_origin() {
    let d = workdir();
    std::fs::write(d.path().join("run.cfg"), "# run\nenergy = fast\n").unwrap();
    let o = tdelay(&["delay", "--potential", "barrier.cfg", "--config", "run.cfg"], d.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("run.cfg:2"), "{}", stderr(&o));
    let o = tdelay(&["delay", "--potential", "barrier.cfg", "--energy", "-1"], d.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--energy"));
    let o = tdelay(&["delay", "--potential", "barrier.cfg"], d.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`energy`"));
    let o = tdelay(&["delay", "--set", "potential.kind=square", "--set", "potential.height=1", "--set", "potential.a=1", "--set", "potential.b=0", "--energy", "1"], d.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn computation_errors_exit_1() {
    let d = workdir();
    // strong energy-clock ramps kick the packet off the grid
    let args = ["clocks", "--potential", "barrier.cfg", "--k0", "2", "--r", "5", "--couplings", "0.1,0.2,0.3"];
    let o = tdelay(&args, d.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("grid boundary"), "{}", stderr(&o));
}

#[test]
fn flags_override_config() {
    let d = workdir();
    std::fs::write(d.path().join("run.cfg"), "energy = 1\ndirection = left\n").unwrap();
    let out = stdout(&tdelay(&["delay", "--config", "run.cfg", "--potential", "barrier.cfg", "--set", "energy=1.5", "--energy", "2"], d.path()));
    assert!(out.contains("# energy = 2\n"));
    assert_eq!(csv(&out).1[0][0], 2.0);
    let out = stdout(&tdelay(&["delay", "--config", "run.cfg", "--potential", "barrier.cfg", "--set", "energy=1.5"], d.path()));
    assert_eq!(csv(&out).1[0][0], 1.5);
}

#[test]
fn byte_identical_reruns_and_output_file() {
    let d = workdir();
    let args = ["fuzzy-sweep", "--potential", "barrier.cfg", "--energy", "0.5", "--r", "50", "--out", "a.csv"];
    stdout(&tdelay(&args, d.path()));
    let first = std::fs::read(d.path().join("a.csv")).unwrap();
    stdout(&tdelay(&args, d.path()));
    assert_eq!(first, std::fs::read(d.path().join("a.csv")).unwrap());
    let o = stdout(&tdelay(&["floquet", "--potential", "well.cfg", "--omega", "1.2", "--amplitude", "0.3", "--set", "drive.b=2", "--energy", "0.5"], d.path()));
    let o2 = stdout(&tdelay(&["floquet", "--potential", "well.cfg", "--omega", "1.2", "--amplitude", "0.3", "--set", "drive.b=2", "--energy", "0.5"], d.path()));
    assert_eq!(o, o2);
}

#[test]
fn smatrix_json_matches_closed_form() {
    let d = workdir();
    let out = stdout(&tdelay(&["smatrix", "--potential", "barrier.cfg", "--energy", "0.5"], d.path()));
    let v: Value = serde_json::from_str(&out).unwrap();
    // V0 = 1, width 2, E = 1/2: kappa = 1 and T = 1 / (1 + sinh^2 2)
    let t = 1.0 / (1.0 + 2f64.sinh().powi(2));
    assert!((v["transmission"].as_f64().unwrap() - t).abs() < 1e-11);
    let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    let raw_keys: Vec<usize> = ["\"command\"", "\"config\"", "\"energy\"", "\"reflection\"", "\"s\""].iter().map(|k| out.find(k).unwrap()).collect();
    assert!(raw_keys.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn twelve_significant_digits() {
    let d = workdir();
    let out = stdout(&tdelay(&["delay", "--potential", "barrier.cfg", "--energy", "0.7"], d.path()));
    let row = out.lines().last().unwrap();
    for cell in row.split(',') {
        let mantissa = cell.trim_start_matches('-').split('e').next().unwrap();
        assert_eq!(mantissa.replace('.', "").len(), 12, "{cell}");
    }
}

#[test]
fn remaining_subcommands_run() {
    let d = workdir();
    let p = d.path();
    let (h, rows) = csv(&stdout(&tdelay(&["classical", "--potential", "barrier.cfg", "--energy", "2"], p)));
    assert_eq!(h[..2], ["E", "tau_closed_form"]);
    // over the barrier: width times (1/v_inside - 1/v_outside)
    let tau = 2.0 * (1.0 / 2f64.sqrt() - 1.0 / 2.0);
    assert!((rows[0][1] - tau).abs() < 1e-6, "{}", rows[0][1]);

    let lr: Value = serde_json::from_str(&stdout(&tdelay(&["linear-response", "--potential", "barrier.cfg", "--energy", "1.5", "--r", "3"], p))).unwrap();
    assert!(lr["difference"].as_f64().unwrap().abs() < 1e-6);

    let g: Value = serde_json::from_str(&stdout(&tdelay(&["general-delay", "--potential", "barrier.cfg", "--energy", "1.5", "--condition", "transmit"], p))).unwrap();
    assert!(g["probability"].as_f64().unwrap() > 0.5);

    let res = ["resonance", "--set", "potential.kind=double-barrier", "--set", "potential.height=1", "--set", "potential.width=1.2", "--set", "potential.gap=2"];
    let r: Value = serde_json::from_str(&stdout(&tdelay(&[&res[..], &["--emin", "0.2", "--emax", "0.6", "--n", "200"]].concat(), p))).unwrap();
    assert!(r["e_r"].as_f64().unwrap() > 0.2 && r["e_r"].as_f64().unwrap() < 0.6);

    let f: Value = serde_json::from_str(&stdout(&tdelay(&["floquet-delay", "--potential", "well.cfg", "--omega", "1.2", "--amplitude", "0.3", "--set", "drive.b=2", "--energy", "0.5"], p))).unwrap();
    let parts = f["decomposition"].as_array().unwrap();
    let psum: f64 = parts.iter().map(|x| x["probability"].as_f64().unwrap()).sum();
    let tsum: f64 = parts.iter().map(|x| x["probability"].as_f64().unwrap() * x["tau"].as_f64().unwrap()).sum();
    assert!((psum - 1.0).abs() < 1e-6);
    assert!((tsum - f["tau_ew"].as_f64().unwrap()).abs() < 1e-6);

    let (h, rows) = csv(&stdout(&tdelay(&["smatrix", "--potential", "well.cfg", "--emin", "0.2", "--emax", "1", "--n", "3"], p)));
    assert_eq!(h, ["E", "delta", "S_re", "S_im"]);
    for r in rows {
        assert!((r[2].hypot(r[3]) - 1.0).abs() < 1e-9);
    }

    let ps: Value = serde_json::from_str(&stdout(&tdelay(&["packet-sojourn", "--potential", "barrier.cfg", "--k0", "2", "--r", "5"], p))).unwrap();
    let a = ps["direct_sojourn"].as_f64().unwrap();
    let b = ps["onshell_interaction_sojourn"].as_f64().unwrap();
    assert!((a - b).abs() < 2e-2 * b, "{a} {b}");

    let clocks = stdout(&tdelay(&["clocks", "--potential", "barrier.cfg", "--k0", "2", "--r", "5", "--couplings", "2e-3,4e-3,6e-3"], p));
    let body: Vec<&str> = clocks.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body[0], "clock,coupling,reading,flagged");
    assert_eq!(body.len(), 1 + 3 * 4);
    let o = tdelay(&["clocks", "--potential", "barrier.cfg", "--k0", "2", "--r", "5", "--couplings", "2e-3,4e-3"], p);
    assert_eq!(o.status.code(), Some(2));
}
