use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn wgmconv(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wgmconv"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("runs wgmconv")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn design_rim_reports() {
    let dir = tempfile::tempdir().unwrap();
    let o = wgmconv(dir.path(), &["design-rim"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "rho = 568 um, rho/R = 0.196");

    let cyl = config(dir.path(), "cyl.toml", "[geometry]\nrim = \"cylindrical\"\n");
    let o = wgmconv(dir.path(), &["--config", &cyl, "design-rim"]);
    assert_eq!(stdout(&o).trim(), "rho = inf");

    let silica = config(dir.path(), "silica.toml", "[materials]\nprism = \"fused-silica\"\n");
    let o = wgmconv(dir.path(), &["--config", &silica, "design-rim"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("coupling impossible"), "{}", stderr(&o));
}

#[test]
fn validation_errors_precede_work() {
    let dir = tempfile::tempdir().unwrap();
    let qm = config(dir.path(), "qm.toml", "[conversion]\nq_m = 0\n");
    let o = wgmconv(dir.path(), &["--config", &qm, "efficiency"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("conversion.q_m"));

    let empty = config(dir.path(), "empty.toml", "[solver]\nl_min = 14\nl_max = 13\n");
    let o = wgmconv(dir.path(), &["--config", &empty, "dispersion"]);
    assert_eq!(o.status.code(), Some(2));

    let o = wgmconv(dir.path(), &["dynamics", "--periods", "-5"]);
    assert_eq!(o.status.code(), Some(2));

    let typo = config(dir.path(), "typo.toml", "[geometry]\nr_outer = 2.9\n");
    let o = wgmconv(dir.path(), &["--config", &typo, "design-rim"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("r_outer"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn print_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let o = wgmconv(dir.path(), &["--print-config"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("r_outer_mm = 2.9"));
    assert!(text.contains("rim = 567.6"), "{text}");
    let p = config(dir.path(), "resolved.toml", &text);
    let again = wgmconv(dir.path(), &["--config", &p, "--print-config"]);
    assert_eq!(stdout(&again), text);
}

#[test]
fn spectrum_fit_and_label() {
    let dir = tempfile::tempdir().unwrap();
    let mut data = String::from("# label: synthetic\nf_GHz, T\n");
    for i in 0..2001 {
        let f = 95.0 + 10.0 * i as f64 / 2000.0;
        let t = 1.0 - 0.8 / (1.0 + (2.0 * (f - 100.0) / 1.0f64).powi(2));
        data.push_str(&format!("{f}, {t}\n"));
    }
    let spec = config(dir.path(), "spec.csv", &data);
    let o = wgmconv(dir.path(), &["--out", "res", "--svg", "spectrum", "fit", &spec]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("max contrast 0.800"), "{}", stdout(&o));
    let fits = fs::read_to_string(dir.path().join("res/fits.csv")).unwrap();
    assert!(fits.starts_with("f0_GHz, Q, C, L_c, rmse\n100.000000, 100.000, 0.8000, , "), "{fits}");
    assert!(dir.path().join("res/spectrum.svg").exists());

    let disp = config(dir.path(), "disp.csv", "L_c, f_GHz, ring_energy_fraction\n12, 97.0, 0.8\n13, 100.3, 0.85\n14, , 0\n");
    let o = wgmconv(dir.path(), &["--out", "res", "spectrum", "label", &spec, "--dispersion", &disp]);
    assert!(o.status.success(), "{}", stderr(&o));
    let labels = fs::read_to_string(dir.path().join("res/labels.csv")).unwrap();
    assert!(labels.lines().nth(1).unwrap().contains(", 13, "), "{labels}");

    let bad = config(dir.path(), "bad.csv", "f_GHz, T\n1, 1\n0, 1\n");
    let o = wgmconv(dir.path(), &["spectrum", "fit", &bad]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn dynamics_reports_invariants() {
    let dir = tempfile::tempdir().unwrap();
    let o = wgmconv(dir.path(), &["--out", "dyn", "dynamics", "--periods", "50"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("invariants conserved: max drift"), "{out}");
    assert!(out.contains("small-signal agreement") && out.contains("PASS"), "{out}");
    let csv = fs::read_to_string(dir.path().join("dyn/dynamics.csv")).unwrap();
    assert!(csv.starts_with("t_s, a_re, a_im,"));
    assert_eq!(csv.lines().count(), 1002);
}

#[test]
fn dispersion_is_thread_count_independent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "d.toml", "[solver]\nl_min = 13\nl_max = 14\n");
    let a = wgmconv(dir.path(), &["--config", &cfg, "--threads", "1", "--out", "a", "dispersion"]);
    let b = wgmconv(dir.path(), &["--config", &cfg, "--threads", "4", "--out", "b", "dispersion", "--line", "--svg"]);
    assert!(a.status.success() && b.status.success(), "{}", stderr(&a));
    let ca = fs::read(dir.path().join("a/dispersion.csv")).unwrap();
    let cb = fs::read(dir.path().join("b/dispersion.csv")).unwrap();
    assert_eq!(ca, cb);
    let text = String::from_utf8(ca).unwrap();
    let f13: f64 = text.lines().nth(1).unwrap().split(", ").nth(1).unwrap().parse().unwrap();
    assert!((f13 - 100.0).abs() < 3.0, "{text}");
    assert!(fs::read_to_string(dir.path().join("b/dispersion.svg")).unwrap().contains("<polyline"));
}

#[test]
fn mesh_export_writes_vtk() {
    let dir = tempfile::tempdir().unwrap();
    let o = wgmconv(dir.path(), &["--out", "m", "mesh", "export"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let vtk = fs::read_to_string(dir.path().join("m/mesh.vtk")).unwrap();
    assert!(vtk.starts_with("# vtk DataFile Version 3.0"));
    let profile = fs::read_to_string(dir.path().join("m/profile.csv")).unwrap();
    assert!(profile.starts_with("region, index, r_m, z_m\nring, 0, "));
}
