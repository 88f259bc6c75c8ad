use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn stripflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stripflow"))
        .args(args)
        .env("STRIPFLOW_THREADS", "1")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("terminated by signal")
}

fn run_into(name: &str, out: &Path, extra: &[&str]) -> Output {
    let s = scenario(name);
    let mut args = vec!["run", s.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    stripflow(&args)
}

#[test]
fn validate_accepts_goldens() {
    for name in ["flat.scn", "decay_sine.scn", "ramp.scn", "pair.scn"] {
        let o = stripflow(&["validate", scenario(name).to_str().unwrap()]);
        assert_eq!(
            code(&o),
            0,
            "{name}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        assert!(String::from_utf8_lossy(&o.stdout).contains("checksum"));
    }
}

#[test]
fn invalid_scenarios_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let flat = fs::read_to_string(scenario("flat.scn")).unwrap();
    let cases = [
        (
            "degenerate.scn",
            flat.replace("g0 = [\"0\"]", "g0 = [\"-1.5 * sin(x)\"]"),
        ),
        ("notime.scn", flat.replace("[time]", "[clock]")),
        ("garbled.scn", "[space\nm = ".to_string()),
    ];
    for (name, text) in cases {
        let path = tmp.path().join(name);
        fs::write(&path, text).unwrap();
        let out = tmp.path().join(format!("{name}.out"));
        assert_eq!(
            code(&stripflow(&["validate", path.to_str().unwrap()])),
            2,
            "{name}"
        );
        assert_eq!(code(&run_into_path(&path, &out)), 2, "{name}");
        assert!(!out.exists());
    }
    assert_eq!(
        code(&stripflow(&[
            "validate",
            tmp.path().join("missing.scn").to_str().unwrap()
        ])),
        2
    );
}

fn run_into_path(path: &Path, out: &Path) -> Output {
    stripflow(&[
        "run",
        path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ])
}

#[test]
fn flat_run_completes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("flat");
    let o = run_into("flat.scn", &out, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["trajectory.csv", "diagnostics.csv", "manifest.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "Completed");
}

#[test]
fn ramp_breakdown_exits_with_three_and_keeps_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("ramp");
    let o = run_into("ramp.scn", &out, &[]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "BoundaryApproach");
    let diag = fs::read_to_string(out.join("diagnostics.csv")).unwrap();
    assert!(diag.trim_end().ends_with("BoundaryApproach"));
}

#[test]
fn deterministic_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    for mode in ["evolve", "diagnose-frozen"] {
        let (a, b) = (
            tmp.path().join(format!("{mode}-a")),
            tmp.path().join(format!("{mode}-b")),
        );
        for dir in [&a, &b] {
            let o = run_into(
                "decay_sine.scn",
                dir,
                &["--mode", mode, "--deterministic", "--seed", "7"],
            );
            assert_eq!(
                code(&o),
                0,
                "{mode}: {}",
                String::from_utf8_lossy(&o.stderr)
            );
        }
        for entry in fs::read_dir(&a).unwrap() {
            let name = entry.unwrap().file_name();
            assert_eq!(
                fs::read(a.join(&name)).unwrap(),
                fs::read(b.join(&name)).unwrap(),
                "{mode}: {name:?} differs"
            );
        }
    }
}

#[test]
fn unknown_mode_is_a_usage_error() {
    let o = stripflow(&[
        "run",
        scenario("flat.scn").to_str().unwrap(),
        "--mode",
        "sideways",
    ]);
    assert_ne!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("sideways"));
}
