mod common;

use std::fs;
use std::path::Path;

use common::scenario_path;
use stripflow::scenario::{
    import_trajectory, load_scenario, run, validate, Mode, RunManifest, RunOptions, Scenario,
};
use stripflow::stepper::Status;
use stripflow::Error;

const SMALL: &str = r#"
[space]
m = 1
A = [[[1.0, 0.0]]]
phi = 1.5
M = 4.0

[geometry]
nu = 1.0
L = 6.283185307179586
nx = 16
ny = 11
alpha = 0.5

[initial]
g0 = ["0.01 * sin(x)"]

[solve]
mu_solve = 0.0

[time]
dt = 0.05
t_end = 0.25

[output]
directory = "unused"
"#;

fn small(edit: impl Fn(String) -> String) -> Scenario {
    Scenario::from_toml_str(&edit(SMALL.to_string())).unwrap()
}

fn opts(dir: &Path) -> RunOptions {
    RunOptions {
        out: Some(dir.to_path_buf()),
        deterministic: true,
        seed: 3,
        ..Default::default()
    }
}

fn read_manifest(dir: &Path) -> RunManifest {
    serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn trajectory_round_trips_through_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let v = validate(small(|s| s)).unwrap();
    let (manifest, dir) = run(&v, Mode::Evolve, &opts(&out)).unwrap();
    assert_eq!(manifest.status, Status::Completed);
    assert_eq!(dir, out);
    let (times, samples) = import_trajectory(&out.join("trajectory.csv")).unwrap();
    assert_eq!(times.len(), 6);
    assert!((times[5] - 0.25).abs() < 1e-12);
    // initial row equals the sampled initial profile bit for bit
    assert_eq!(samples[0][0], v.profile.g(0).to_vec());
    let diag = fs::read_to_string(out.join("diagnostics.csv")).unwrap();
    assert!(diag.starts_with(
        "step,t,h2alpha_norm,w1_margin,l2_norm,step_residual,strip_residual,status\n"
    ));
    assert!(diag.trim_end().ends_with("Completed"));
}

#[test]
fn manifest_names_the_scenario() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let v = validate(small(|s| s)).unwrap();
    run(&v, Mode::DiagnoseFrozen, &opts(&out)).unwrap();
    let m = read_manifest(&out);
    assert_eq!(m.scenario_checksum, v.scenario.checksum());
    assert_eq!(m.mode, Mode::DiagnoseFrozen);
    assert!(m.acceptance.values().all(|ok| *ok), "{:?}", m.acceptance);
    let listed: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert_eq!(
        listed
            .iter()
            .filter(|n| n.ends_with("manifest.json"))
            .count(),
        1
    );
    let mut files = m.files.clone();
    files.sort();
    let mut listed = listed;
    listed.sort();
    assert_eq!(files, listed);
}

#[test]
fn deterministic_reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let v = validate(small(|s| s)).unwrap();
    for mode in [
        Mode::Evolve,
        Mode::DiagnoseFrozen,
        Mode::DiagnoseLocalization,
    ] {
        let (a, b) = (
            tmp.path().join(format!("{}-a", mode.as_str())),
            tmp.path().join(format!("{}-b", mode.as_str())),
        );
        run(&v, mode, &opts(&a)).unwrap();
        run(&v, mode, &opts(&b)).unwrap();
        for entry in fs::read_dir(&a).unwrap() {
            let name = entry.unwrap().file_name();
            assert_eq!(
                fs::read(a.join(&name)).unwrap(),
                fs::read(b.join(&name)).unwrap(),
                "{name:?} differs"
            );
        }
    }
}

#[test]
fn crash_between_files_leaves_nothing_behind() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let v = validate(small(|s| s)).unwrap();
    for after in 0..3 {
        let o = RunOptions {
            fail_after_files: Some(after),
            ..opts(&out)
        };
        assert!(matches!(run(&v, Mode::Evolve, &o), Err(Error::Io(_))));
        assert!(!out.exists());
        assert_eq!(
            fs::read_dir(tmp.path()).unwrap().count(),
            0,
            "staging directory survived"
        );
    }
    // a crash while replacing an earlier run keeps the earlier run intact
    run(&v, Mode::Evolve, &opts(&out)).unwrap();
    let before = fs::read(out.join("trajectory.csv")).unwrap();
    let o = RunOptions {
        fail_after_files: Some(1),
        ..opts(&out)
    };
    assert!(run(&v, Mode::Evolve, &o).is_err());
    assert_eq!(fs::read(out.join("trajectory.csv")).unwrap(), before);
}

#[test]
fn foreign_directories_are_not_replaced() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("precious");
    fs::create_dir(&out).unwrap();
    fs::write(out.join("notes.txt"), "keep me").unwrap();
    let v = validate(small(|s| s)).unwrap();
    assert!(run(&v, Mode::Evolve, &opts(&out)).is_err());
    assert_eq!(
        fs::read_to_string(out.join("notes.txt")).unwrap(),
        "keep me"
    );
}

#[test]
fn extreme_profiles_are_rejected() {
    let degenerate = small(|s| s.replace("0.01 * sin(x)", "1.5 * sin(x)"));
    assert!(matches!(
        validate(degenerate),
        Err(Error::DegenerateDomain { .. })
    ));
    let steep = small(|s| s.replace("0.01 * sin(x)", "0.5 * sin(4*x)"));
    assert!(matches!(validate(steep), Err(Error::Validation(m)) if m.starts_with("admissibility")));
    let not_finite = small(|s| s.replace("0.01 * sin(x)", "sqrt(x - 10)"));
    assert!(validate(not_finite).is_err());
}

#[test]
fn schema_errors_are_reported() {
    let no_time = SMALL.replace("[time]\ndt = 0.05\nt_end = 0.25\n", "");
    assert!(
        matches!(Scenario::from_toml_str(&no_time), Err(Error::Schema(m)) if m.contains("time"))
    );
    let unknown = SMALL.replace("alpha = 0.5", "alpha = 0.5\nbeta = 2");
    assert!(Scenario::from_toml_str(&unknown).is_err());
    assert!(matches!(
        Scenario::from_toml_str("[space"),
        Err(Error::Parse(_))
    ));
    let bad_expr = small(|s| s.replace("0.01 * sin(x)", "0.01 * sinn(x)"));
    assert!(validate(bad_expr).is_err());
}

#[test]
fn goldens_validate() {
    for name in ["flat.scn", "decay_sine.scn", "ramp.scn", "pair.scn"] {
        let v = load_scenario(&scenario_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(
            v.report.sectorial.pass && v.report.ellipticity.pass && v.report.admissibility.in_w1
        );
    }
}
