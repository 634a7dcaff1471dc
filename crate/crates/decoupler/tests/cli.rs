//! End-to-end checks of the CLI surface: config parsing, command dispatch,
//! artifact formats, and the reproducibility contract (identical
//! (config, seed) -> byte-identical reports).

use decoupler::cli;
use decoupler::config::RunConfig;
use decoupler::io;

fn tiny_decouple_config(dir: &std::path::Path, seed: u64) -> RunConfig {
    let text = format!(
        r#"
[nonlinearity]
family = "linear"
beta = 0.5

[mc]
paths = 4000
steps = 60
seed = {seed}

[decouple]
q0 = 1.0
n_q = 6
b_max = 4.0
n_b = 33
tol = 2e-2

[output]
dir = "{}"
"#,
        dir.display()
    );
    toml::from_str(&text).unwrap()
}

#[test]
fn decouple_command_writes_loadable_field_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_decouple_config(dir.path(), 9);
    cli::cmd_decouple(&cfg).unwrap();

    let field = io::read_decoupling_field(&dir.path().join("decoupling.field")).unwrap();
    assert_eq!(field.grid.n_b, 33);
    assert!((field.horizon() - 1.0).abs() < 1e-12);
    // J(0, .) = sigma on the nodes
    for (j, b) in field.grid.b_nodes().enumerate() {
        assert!((field.grid.values[j] - 0.5 * b.abs()).abs() < 1e-12);
    }
    let report = std::fs::read_to_string(dir.path().join("decouple_report.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(parsed["library"], "decoupler");
    assert!(parsed["report"]["oracle_x_norm_gap"].as_f64().unwrap() < 5e-2);
    assert!(parsed["report"]["certified_horizon"].as_f64().unwrap() > 1.0);
    assert!(dir.path().join("residuals.csv").exists());
    assert!(dir.path().join("lipschitz.csv").exists());
}

#[test]
fn reports_are_byte_identical_for_equal_seed_and_differ_otherwise() {
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let d3 = tempfile::tempdir().unwrap();
    cli::cmd_decouple(&tiny_decouple_config(d1.path(), 123)).unwrap();
    cli::cmd_decouple(&tiny_decouple_config(d2.path(), 123)).unwrap();
    cli::cmd_decouple(&tiny_decouple_config(d3.path(), 124)).unwrap();
    let read = |d: &std::path::Path| std::fs::read(d.join("decoupling.field")).unwrap();
    assert_eq!(read(d1.path()), read(d2.path()));
    assert_ne!(read(d1.path()), read(d3.path()));
}

#[test]
fn pde_command_emits_error_table_for_closed_forms() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        r#"
[nonlinearity]
family = "linear"
beta = 0.5

[pde]
b_min = -6.0
b_max = 6.0
h_b = 0.03125
q0 = 1.0

[output]
dir = "{}"
"#,
        dir.path().display()
    );
    let cfg: RunConfig = toml::from_str(&text).unwrap();
    cli::cmd_pde(&cfg).unwrap();
    let h = io::read_h_field(&dir.path().join("h.field")).unwrap();
    assert!((h.horizon() - 1.0).abs() < 1e-12);
    let report = std::fs::read_to_string(dir.path().join("pde_report.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&report).unwrap();
    let table = parsed["report"]["oracle_error_table"].as_array().unwrap();
    let worst = table
        .iter()
        .map(|row| row[1].as_f64().unwrap())
        .fold(0.0f64, f64::max);
    assert!(worst < 1e-3, "oracle error {worst}");
    assert!(dir.path().join("pde_oracle_error.csv").exists());
}

#[test]
fn oracle_command_round_trips_through_the_container() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        r#"
[nonlinearity]
family = "fisher_wright"
alpha = 1.0

[decouple]
q0 = 2.0
n_q = 9
b_max = 2.0
n_b = 33

[output]
dir = "{}"
"#,
        dir.path().display()
    );
    let cfg: RunConfig = toml::from_str(&text).unwrap();
    cli::cmd_oracle(&cfg).unwrap();
    let field = io::read_decoupling_field(&dir.path().join("oracle.field")).unwrap();
    // zeros of sigma at 0 and 1 are zeros of J at every clock time
    let j0 = ((0.0 - field.grid.b_min) / field.grid.b_step).round() as usize;
    let j1 = ((1.0 - field.grid.b_min) / field.grid.b_step).round() as usize;
    for (i, _) in field.grid.q_grid.iter().enumerate() {
        assert!(field.grid.values[i * field.grid.n_b + j0].abs() < 1e-14);
        assert!(field.grid.values[i * field.grid.n_b + j1].abs() < 1e-14);
    }
}

#[test]
fn spde_multipoint_command_runs_at_desk_scale() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        r#"
[nonlinearity]
family = "constant"
c = 1.0

[mc]
seed = 5

[multipoint]
rho = 1e-2
grid_n = 64
replicas = 64
t = 0.5
distance_exponent = 0.25
psi_samples = 4000

[output]
dir = "{}"
"#,
        dir.path().display()
    );
    let cfg: RunConfig = toml::from_str(&text).unwrap();
    cli::cmd_spde_multipoint(&cfg).unwrap();
    let report = std::fs::read_to_string(dir.path().join("multipoint_report.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(
        parsed["report"]["covariances_within_3se"],
        serde_json::Value::Bool(true)
    );
}

#[test]
fn binary_output_is_independent_of_worker_count() {
    // the deterministic-partition contract: --workers 1 and --workers 2
    // produce byte-identical artifacts
    let bin = env!("CARGO_BIN_EXE_decoupler");
    let run = |workers: u32| -> Vec<u8> {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("run.toml");
        std::fs::write(
            &cfg_path,
            format!(
                r#"
[nonlinearity]
family = "linear"
beta = 0.5

[mc]
paths = 3000
steps = 50
seed = 77

[decouple]
q0 = 0.8
n_q = 5
b_max = 4.0
n_b = 17
tol = 2e-2

[output]
dir = "{}"
"#,
                dir.path().join("out").display()
            ),
        )
        .unwrap();
        let status = std::process::Command::new(bin)
            .args([
                "decouple",
                "--config",
                cfg_path.to_str().unwrap(),
                "--workers",
                &workers.to_string(),
            ])
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(dir.path().join("out/decoupling.field")).unwrap()
    };
    assert_eq!(run(1), run(2));
}

#[test]
fn verify_smoke_tier_via_binary() {
    let bin = env!("CARGO_BIN_EXE_decoupler");
    let dir = tempfile::tempdir().unwrap();
    let out = std::process::Command::new(bin)
        .args(["verify", "--tier", "smoke", "--seed", "3"])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "verify failed:\n{stdout}");
    assert_eq!(stdout.matches("PASS").count(), 3, "{stdout}");
    let report = std::fs::read_to_string(dir.path().join("verify_report.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(parsed["all_pass"], serde_json::Value::Bool(true));
}

#[test]
fn config_errors_carry_exit_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[nonlinearity]\nfamily = \"no_such_family\"\n").unwrap();
    let cfg = RunConfig::from_path(&bad).unwrap();
    let err = cli::cmd_decouple(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}
