use std::fs;
use std::process::{Command, Output};

fn normad(args: &[&str], dir: &std::path::Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_normad"))
        .args(args)
        .current_dir(dir)
        .env_remove("RUST_LOG")
        .output()
        .expect("spawn normad")
}

#[test]
fn help_documents_env_prefix() {
    let dir = tempfile::tempdir().unwrap();
    let out = normad(&["run", "--help"], dir.path());
    assert!(out.status.success());
    let top = normad(&["--help"], dir.path());
    let text = String::from_utf8_lossy(&top.stdout);
    assert!(text.contains("NORMAD_"), "{text}");
    assert!(text.contains("--full"), "{text}");
}

#[test]
fn xor_run_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = normad(
        &["run", "xor", "--seed-list", "3", "--set", "learn.max_iterations=5", "--out", "o"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let o = dir.path().join("o");
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(o.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["runs"].as_array().unwrap().len(), 1);
    assert_eq!(report["config"]["learn"]["max_iterations"], 5);
    assert!(report["metadata"]["timestamp"].as_u64().unwrap() > 0);
    let raster = fs::read_to_string(o.join("raster_3_p0.csv")).unwrap();
    assert!(raster.starts_with("neuron_id,spike_time_ms\n"));
    let corr = fs::read_to_string(o.join("correlation_3.csv")).unwrap();
    assert!(corr.starts_with("iteration,c_p0,c_p1,c_p2,c_p3\n"));
    let ck = normad_core::io::load_checkpoint(&o.join("checkpoint_3.bin"), Some(0.1)).unwrap();
    assert_eq!(ck.network.layer_sizes(), &[54, 54, 1]);
    assert_eq!(ck.seed, 3);
}

#[test]
fn config_file_env_and_flags_layer() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("c.toml"),
        "seeds = [7, 8]\n[learn]\nmax_iterations = 2\nr_h = 0.5\nr_o = 0.25\n",
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_normad"))
        .args(["run", "xor", "--config", "c.toml", "--seed-list", "1", "--out", "o"])
        .current_dir(dir.path())
        .env("NORMAD_LEARN__R_O", "0.125")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("o/report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["seeds"], serde_json::json!([1]));
    assert_eq!(report["config"]["learn"]["r_h"], 0.5);
    assert_eq!(report["config"]["learn"]["r_o"], 0.125);
    assert_eq!(report["config"]["learn"]["max_iterations"], 2);
}

#[test]
fn bad_config_exits_nonzero_with_field_name() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "[learn]\nr_q = 1.0\n").unwrap();
    let out = normad(&["run", "xor", "--config", "bad.toml", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("r_q"));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn missing_config_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = normad(&["run", "xor", "--config", "nope.toml"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn custom_run_reads_rasters() {
    let dir = tempfile::tempdir().unwrap();
    let inputs: String = (0..3).map(|k| format!("{k},{}\n", 2.0 + k as f64)).collect();
    fs::write(dir.path().join("in.csv"), format!("neuron_id,spike_time_ms\n{inputs}")).unwrap();
    fs::write(dir.path().join("want.csv"), "neuron_id,spike_time_ms\n0,18.5\n").unwrap();
    fs::write(
        dir.path().join("c.toml"),
        "topology = [3, 4, 1]\nt_epoch = 30.0\nseeds = [0]\n[learn]\nmax_iterations = 3\n\n\
         [[patterns]]\ninputs = \"in.csv\"\ndesired = \"want.csv\"\n",
    )
    .unwrap();
    let out = normad(&["run", "custom", "--config", "c.toml", "--out", "o"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let desired = fs::read_to_string(dir.path().join("o/raster_0_p0_desired.csv")).unwrap();
    assert!(desired.contains("18.5"));
}
