use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"seed = 11
strategies = ["StraightMU8", "AverageMU8(pred=uniform)"]

[environment]
family = "U"
goods = 2
agents = 2

[scpp]
games = 1000
max_iterations = 10
verify_games = 1000

[egta]
instances = 200
resamples = 20

[oracle]
trials = 10
"#;

fn sealedbid(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sealedbid"))
        .arg("--config")
        .arg(dir.join("experiment.toml"))
        .args(args)
        .output()
        .unwrap()
}

fn setup(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("experiment.toml"), config).unwrap();
    dir
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn desk_scpp_derive_writes_prediction_and_trace() {
    let desk = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk_u33.toml");
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_sealedbid"))
        .arg("--config")
        .arg(&desk)
        .arg("--out-dir")
        .arg(dir.path())
        .args(["scpp", "derive", "--strategy", "StraightMU8"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let summary = String::from_utf8(out.stdout).unwrap();
    assert_eq!(summary.lines().count(), 1, "{summary}");

    let toml = std::fs::read_to_string(dir.path().join("scpp/U33_StraightMU8_HB.toml")).unwrap();
    let file = sealedbid::prediction::PredictionFile::from_toml_str(&toml).unwrap();
    assert_eq!(file.environment, "U[3,3]");
    assert_eq!(file.prediction.goods(), 3);
    assert_eq!(file.config_hash.len(), 64);

    let trace = std::fs::read_to_string(dir.path().join("scpp/U33_StraightMU8_HB_trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash="));
    assert_eq!(lines.next(), Some("iteration,ks_marg"));
    assert_eq!(lines.count(), file.iterations);
}

#[test]
fn unknown_strategy_is_named_and_fails() {
    let dir = setup(&CONFIG.replace("StraightMU8\"", "StraightMX8\""));
    let out = sealedbid(dir.path(), &["simulate"]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains("StraightMX8") && err.contains("line 2"), "{err}");

    let dir = setup(CONFIG);
    let out = sealedbid(dir.path(), &["oracle", "compare", "--strategy", "Wibble(K=3)"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("Wibble"), "{}", stderr(&out));
}

#[test]
fn outputs_are_byte_identical_across_worker_counts() {
    let run = |workers: &str| {
        let dir = setup(CONFIG);
        for args in [&["valuation", "sample"][..], &["simulate"], &["oracle", "compare"]] {
            let out = sealedbid(dir.path(), &[&["--workers", workers][..], args].concat());
            assert!(out.status.success(), "{}", stderr(&out));
        }
        ["out/valuations.csv", "out/payoffs.csv", "out/oracle/U22_StraightMU8_HB.csv"]
            .map(|f| std::fs::read(dir.path().join(f)).unwrap())
    };
    assert_eq!(run("1"), run("3"));
}

#[test]
fn existing_outputs_need_force() {
    let dir = setup(CONFIG);
    assert!(sealedbid(dir.path(), &["valuation", "sample"]).status.success());
    let again = sealedbid(dir.path(), &["valuation", "sample"]);
    assert!(!again.status.success());
    assert!(stderr(&again).contains("--force"));
    assert!(sealedbid(dir.path(), &["--force", "valuation", "sample"]).status.success());
}

#[test]
fn egta_solve_reports_equilibria_as_json() {
    let dir = setup(CONFIG);
    assert!(sealedbid(dir.path(), &["simulate"]).status.success());
    let payoffs = dir.path().join("out/payoffs.csv");
    let out = sealedbid(dir.path(), &["egta", "solve", "--payoffs", payoffs.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(dir.path().join("out/equilibria.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(json["seed"], 11);
    let eqs = json["equilibria"].as_array().unwrap();
    assert!(!eqs.is_empty());
    for eq in eqs {
        let total: f64 = eq["probabilities"].as_object().unwrap().values().map(|p| p.as_f64().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }
    // inputs are never rewritten
    let before = std::fs::read(&payoffs).unwrap();
    assert!(sealedbid(dir.path(), &["--force", "egta", "regret", "--payoffs", payoffs.to_str().unwrap()]).status.success());
    assert_eq!(std::fs::read(&payoffs).unwrap(), before);
}

#[test]
fn missing_prediction_files_are_config_errors() {
    let dir = setup(&format!("{CONFIG}\n[predictions]\nU22 = \"nowhere.toml\"\n"));
    let out = sealedbid(dir.path(), &["valuation", "sample"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("nowhere.toml"), "{}", stderr(&out));
}
