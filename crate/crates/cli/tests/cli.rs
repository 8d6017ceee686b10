use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
seed = 5
[control]
bandwidth = 20.0
[control.mech]
mass = 4.0
viscous = 10.0
coulomb = 2.0
sample_rate = 2000.0
[reference]
velocities = [0.15]
dwell = 0.05
[pgnn]
epochs = 20
ls_every = 10
record_stride = 4
"#;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clm-lab"))
        .arg("--config")
        .arg(dir.join("cfg.toml"))
        .arg("--out")
        .arg(dir.join("out"))
        .args(args)
        .output()
        .unwrap()
}

fn setup(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cfg.toml"), config).unwrap();
    dir
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn full_protocol_and_exit_codes() {
    let dir = setup(SMALL);
    let out = dir.path().join("out");
    let o = run(dir.path(), &["gen-data"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for i in 1..=2 {
        for l in 1..=3 {
            assert!(out.join(format!("Z_{i}_{l}.csv")).exists());
        }
    }
    assert_eq!(code(&run(dir.path(), &["calibrate"])), 0);
    let o = run(dir.path(), &["identify"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(text.matches("final cost").count(), 3);
    assert!(text.contains("anchor"));

    // the pgnn strategy needs a model
    let o = run(dir.path(), &["evaluate", "--strategy", "pgnn"]);
    assert_eq!(code(&o), 2);
    let model = out.join("pgnn_model.json");
    let o = run(
        dir.path(),
        &[
            "evaluate",
            "--strategy",
            "pgnn",
            "--model",
            model.to_str().unwrap(),
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("log_pgnn.csv").exists() && out.join("mse_pgnn.json").exists());

    let o = run(dir.path(), &["compare"]);
    assert_eq!(code(&o), 0);
    let table = String::from_utf8_lossy(&o.stdout);
    for s in ["original", "classical", "pgnn", "F_y", "F_x", "T_z"] {
        assert!(table.contains(s), "{table}");
    }
    let json = fs::read_to_string(out.join("compare.json")).unwrap();
    assert!(json.contains("\"config_hash\""));
}

#[test]
fn seed_flag_changes_the_data() {
    let dir = setup(SMALL);
    let out = dir.path().join("out");
    assert_eq!(
        code(&run(
            dir.path(),
            &["gen-data", "--coil", "2", "--delta-sign", "1"]
        )),
        0
    );
    assert!(out.join("Z_1_2.csv").exists() && !out.join("Z_2_2.csv").exists());
    let a = fs::read(out.join("Z_1_2.csv")).unwrap();
    assert_eq!(
        code(&run(
            dir.path(),
            &[
                "--seed",
                "6",
                "gen-data",
                "--coil",
                "2",
                "--delta-sign",
                "1"
            ]
        )),
        0
    );
    assert_ne!(fs::read(out.join("Z_1_2.csv")).unwrap(), a);
    assert_eq!(
        code(&run(
            dir.path(),
            &[
                "--seed",
                "5",
                "gen-data",
                "--coil",
                "2",
                "--delta-sign",
                "1"
            ]
        )),
        0
    );
    assert_eq!(fs::read(out.join("Z_1_2.csv")).unwrap(), a);
}

#[test]
fn validation_errors_exit_with_two() {
    let dir = setup(SMALL);
    assert_eq!(
        code(&run(dir.path(), &["gen-data", "--delta-sign", "3"])),
        2
    );
    assert_eq!(code(&run(dir.path(), &["gen-data", "--coil", "0"])), 2);
    assert_eq!(code(&run(dir.path(), &["gen-data", "--coil", "4"])), 2);
    assert_eq!(
        code(&run(dir.path(), &["evaluate", "--strategy", "fancy"])),
        2
    );
    assert_eq!(
        code(&run(dir.path(), &["evaluate", "--strategy", "classical"])),
        2
    );

    let bad = setup("delta = 2.0\n");
    let o = run(bad.path(), &["gen-data"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("delta"));
    let typo = setup("sede = 1\n");
    assert_eq!(code(&run(typo.path(), &["gen-data"])), 2);
}

#[test]
fn divergence_exits_with_three() {
    // true phase offset half a period away from the estimate reverses the force
    let cfg = format!(
        "{SMALL}\n[motor.geometry]\ncoil_sets = 3\npole_pitch = 0.024\nlever_arms = [-0.06, 0.0, 0.06]\nmu = 0.1\n\
         [[motor.coils]]\nk = 61.0\nzeta = 2.62\n[[motor.coils]]\nk = 61.0\nzeta = 2.62\n[[motor.coils]]\nk = 61.0\nzeta = 2.62\n"
    );
    let dir = setup(&cfg);
    let o = run(dir.path(), &["evaluate", "--strategy", "original"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("diverged"));
    assert!(dir.path().join("out/log_original.csv").exists());
}
