use std::fs;
use std::process::Command;

use hetnet_cli::experiment::{run_experiment, write_outputs};
use hetnet_cli::{load_config, parse_config, ConfigError, ExperimentConfig};
use hetnet_core::sim::Policy;
use hetnet_core::Deployment;

fn tiny(out: &std::path::Path) -> ExperimentConfig {
    let text = format!(
        r#"
        seed = 4242
        out = "{}"
        n_groups = 30
        n_small_cells = 5
        macro_antennas = 32
        sc_antennas = 8
        n_drops = 2
        slots_per_drop = 6
        max_groups = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10]
        ratecdf = true
        "#,
        out.display()
    );
    parse_config(&text).unwrap()
}

#[test]
fn empty_file_gives_reference_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.toml");
    fs::write(&path, "").unwrap();
    let cfg = load_config(&path).unwrap();
    let p = &cfg.params;
    assert_eq!(p.n_groups, 500);
    assert_eq!(p.cell_radius, 1000.0);
    assert_eq!(p.cutoff_distance, 50.0);
    assert_eq!(p.pathloss_exponent, 3.5);
    assert_eq!(p.wall_loss_db, 5.0);
    assert_eq!(p.loading, 0.8);
    assert_eq!((p.epsilon1, p.epsilon2), (0.1, 0.1));
    assert_eq!(p.gamma, 1.0);
    assert_eq!(cfg.policies, Policy::ALL.to_vec());
    assert_eq!(cfg.deployments.len(), 3);
    assert_eq!(cfg.groups, (1..=10).collect::<Vec<_>>());
}

#[test]
fn invalid_values_are_rejected_by_field() {
    let err = parse_config("beta = 1.5").unwrap_err();
    assert!(matches!(err, ConfigError::Params(_)), "{err}");
    assert!(err.to_string().contains("loading"), "{err}");
    let err = parse_config("bogus = 1").unwrap_err();
    assert!(err.to_string().contains("bogus"), "{err}");
    let err = parse_config("policy = [\"none\", \"sometimes\"]").unwrap_err();
    assert!(err.to_string().contains("policy"), "{err}");
    let err = parse_config("max_groups = []").unwrap_err();
    assert!(err.to_string().contains("max_groups"), "{err}");
    assert!(parse_config("seed = -3").is_err());
    assert!(load_config(std::path::Path::new("/nonexistent/x.toml")).is_err());
}

#[test]
fn scalars_and_lists() {
    let cfg = parse_config("gamma = 2\nn_small_cells = [10, 20]\npolicy = \"tin\"\ndeployment = \"edge\"").unwrap();
    assert_eq!(cfg.gammas, vec![2.0]);
    assert_eq!(cfg.params.gamma, 2.0);
    assert_eq!(cfg.small_cells, vec![10, 20]);
    assert_eq!(cfg.policies, vec![Policy::Tin]);
    assert_eq!(cfg.deployments, vec![Deployment::Edge]);
}

#[test]
fn printed_config_reads_back() {
    let cfg = parse_config("gamma = [0.1, 1, 10]\nseed = 9\nbeta = 0.5\npolicy = [\"onoff\"]").unwrap();
    let again = parse_config(&cfg.to_toml()).unwrap();
    assert_eq!(cfg, again);
    assert_eq!(cfg.hash(), again.hash());
    assert_ne!(cfg.hash(), ExperimentConfig::default().hash());
}

#[test]
fn full_grid_rows_carry_identity_and_rerun_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(&dir.path().join("a"));
    let report = run_experiment(&cfg);
    assert_eq!(report.tradeoff.len(), 120);
    assert_eq!(report.failures(), 0);
    assert_eq!(report.offload.len(), 3);
    let hash = cfg.hash();
    assert!(report
        .tradeoff
        .iter()
        .all(|r| r.seed == 4242 && r.config_hash == hash && r.status == "ok"));
    assert!(report.offload.iter().all(|r| r.seed == 4242));
    assert!(report.rates.iter().all(|r| r.seed == 4242));
    assert_eq!(report.rates.len(), 120 * 2 * 30);
    write_outputs(&cfg, &report).unwrap();

    let mut again = cfg.clone();
    again.out = dir.path().join("b");
    write_outputs(&again, &run_experiment(&again)).unwrap();
    for file in ["tradeoff.csv", "offload.csv", "ratecdf.csv", "manifest.json"] {
        let a = fs::read(cfg.out.join(file)).unwrap();
        let b = fs::read(again.out.join(file)).unwrap();
        if file == "manifest.json" {
            // only the output directory differs
            let strip = |v: Vec<u8>| {
                String::from_utf8(v)
                    .unwrap()
                    .lines()
                    .filter(|l| !l.contains("\"out\""))
                    .collect::<Vec<_>>()
                    .join("\n")
            };
            assert_eq!(strip(a), strip(b));
        } else {
            assert_eq!(a, b, "{file}");
        }
    }
    let header = fs::read_to_string(cfg.out.join("tradeoff.csv")).unwrap();
    assert!(header.starts_with("seed,config_hash,policy,deployment,n_f,gamma,G,"));
}

#[test]
fn binary_dry_run_writes_nothing_and_bad_config_fails() {
    let exe = env!("CARGO_BIN_EXE_hetnet");
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let res = Command::new(exe)
        .args([
            "--dry-run",
            "--seed",
            "17",
            "--sweep-g",
            "2:4",
            "--policy",
            "none,tin",
            "--out",
        ])
        .arg(&out)
        .output()
        .unwrap();
    assert!(res.status.success());
    let text = String::from_utf8(res.stdout).unwrap();
    assert!(text.contains("seed = 17"));
    assert!(text.contains("max_groups = [2, 3, 4]"));
    assert!(!out.exists());

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "beta = 1.5\n").unwrap();
    let res = Command::new(exe)
        .arg("--config")
        .arg(&bad)
        .arg("--dry-run")
        .output()
        .unwrap();
    assert!(!res.status.success());
    assert!(String::from_utf8(res.stderr).unwrap().contains("loading"));
}

#[test]
fn binary_writes_outputs() {
    let exe = env!("CARGO_BIN_EXE_hetnet");
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(
        &cfg,
        "n_groups = 30\nn_small_cells = 4\nmacro_antennas = 32\nsc_antennas = 8\nslots_per_drop = 4\n",
    )
    .unwrap();
    let out = dir.path().join("o");
    let res = Command::new(exe)
        .arg("--config")
        .arg(&cfg)
        .args([
            "--drops",
            "1",
            "--sweep-g",
            "1:2",
            "--deployment",
            "edge",
            "--gamma",
            "0.5,2",
            "--out",
        ])
        .arg(&out)
        .output()
        .unwrap();
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let tradeoff = fs::read_to_string(out.join("tradeoff.csv")).unwrap();
    assert_eq!(tradeoff.lines().count(), 1 + 4 * 2 * 2);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["schema_version"], 1);
    assert_eq!(manifest["tradeoff_rows"], 16);
    assert!(!out.join("ratecdf.csv").exists());
}
