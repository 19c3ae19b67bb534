//! Every JSON artifact the CLI emits must validate against the schemas
//! shipped in `schemas/`.

use std::path::Path;

use spinrf::cli;
use spinrf::config::FlatConfig;

fn schema_dir() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas")
}

fn assert_valid(schema_file: &str, instance_path: &Path) {
    let schema: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(schema_dir().join(schema_file)).unwrap())
            .unwrap();
    let instance: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(instance_path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator
        .iter_errors(&instance)
        .map(|e| format!("{} at {}", e, e.instance_path()))
        .collect();
    assert!(
        errors.is_empty(),
        "{} fails {}: {:?}",
        instance_path.display(),
        schema_file,
        errors
    );
}

#[test]
fn train_summary_matches_schema() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = FlatConfig::default();
    cfg.set("train", "classes", "3");
    cfg.set("train", "per_class", "5");
    cfg.set("train", "hidden", "4");
    cfg.set("train", "epochs", "1");
    cli::cmd_train(&cfg, dir.path()).unwrap();
    assert_valid(
        "train_summary.schema.json",
        &dir.path().join("summary.json"),
    );
}

#[test]
fn task2d_summary_matches_schema() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = FlatConfig::default();
    cfg.set("task2d", "task", "3");
    cfg.set("task2d", "restarts", "1");
    cfg.set("task2d", "epochs", "2");
    cfg.set("task2d", "n_samples", "60");
    cfg.set("task2d", "grid_res", "5");
    cli::cmd_task2d(&cfg, dir.path()).unwrap();
    assert_valid(
        "task2d_summary.schema.json",
        &dir.path().join("summary.json"),
    );
}

#[test]
fn energy_budget_matches_schema() {
    let dir = tempfile::tempdir().unwrap();
    cli::cmd_energy(&FlatConfig::default(), dir.path()).unwrap();
    assert_valid("energy_budget.schema.json", &dir.path().join("energy.json"));
}

#[test]
fn fit_reports_match_schema() {
    let dir = tempfile::tempdir().unwrap();

    // Spin-diode curve: single dispersive resonance plus a flat offset.
    let spectrum = dir.path().join("spectrum.csv");
    let mut csv = String::from("f_hz,v_uv\n");
    for k in 0..200 {
        let f = 0.8e8 + 0.4e8 * k as f64 / 199.0;
        let x = f - 1.0e8;
        let c = 1.0e6;
        csv.push_str(&format!("{},{}\n", f, 0.3 + 50.0 * c * x / (c * c + x * x)));
    }
    std::fs::write(&spectrum, csv).unwrap();
    let mut cfg = FlatConfig::default();
    cfg.set("fit", "input", spectrum.to_str().unwrap());
    cfg.set("fit", "n_resonances", "1");
    cli::cmd_fit(&cfg, &dir.path().join("sd")).unwrap();
    assert_valid("fit_report.schema.json", &dir.path().join("sd/fit.json"));

    // Neuron curve: flat, then linear above threshold.
    let neuron = dir.path().join("neuron.csv");
    let mut csv = String::from("i_a,v_uv\n");
    for k in 0..=50 {
        let i = 1e-4 * k as f64;
        let v = if i >= 3e-3 { (i - 3e-3) * 2e7 } else { 0.0 };
        csv.push_str(&format!("{},{}\n", i, v));
    }
    std::fs::write(&neuron, csv).unwrap();
    let mut cfg = FlatConfig::default();
    cfg.set("fit", "kind", "neuron");
    cfg.set("fit", "input", neuron.to_str().unwrap());
    cli::cmd_fit(&cfg, &dir.path().join("nr")).unwrap();
    assert_valid("fit_report.schema.json", &dir.path().join("nr/fit.json"));
}

#[test]
fn gen_data_provenance_matches_schema() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = FlatConfig::default();
    cfg.set("gen", "classes", "2");
    cfg.set("gen", "per_class", "3");
    cli::cmd_gen_data(&cfg, dir.path()).unwrap();
    assert_valid(
        "dataset_provenance.schema.json",
        &dir.path().join("synth.json"),
    );
}

/// Minimal well-formed IDX pair so the sweep runs without real data.
fn write_idx(dir: &Path, stem: &str, images: &[[u8; 4]], labels: &[u8]) {
    let mut im = Vec::new();
    im.extend_from_slice(&0x0000_0803u32.to_be_bytes());
    im.extend_from_slice(&(images.len() as u32).to_be_bytes());
    im.extend_from_slice(&2u32.to_be_bytes());
    im.extend_from_slice(&2u32.to_be_bytes());
    for x in images {
        im.extend_from_slice(x);
    }
    std::fs::write(dir.join(format!("{stem}-images-idx3-ubyte")), im).unwrap();
    let mut lb = Vec::new();
    lb.extend_from_slice(&0x0000_0801u32.to_be_bytes());
    lb.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    lb.extend_from_slice(labels);
    std::fs::write(dir.join(format!("{stem}-labels-idx1-ubyte")), lb).unwrap();
}

#[test]
fn sweep_summary_matches_schema() {
    let data = tempfile::tempdir().unwrap();
    let images: Vec<[u8; 4]> = (0..12u8).map(|k| [k, 255 - k, 7 * k, 100]).collect();
    let labels: Vec<u8> = (0..12u8).map(|k| k % 10).collect();
    write_idx(data.path(), "train", &images, &labels);
    write_idx(data.path(), "t10k", &images[..4], &labels[..4]);

    let dir = tempfile::tempdir().unwrap();
    let mut cfg = FlatConfig::default();
    cfg.set("sweep", "mnist_dir", data.path().to_str().unwrap());
    cfg.set("sweep", "f_max", "1e8,5e8");
    cfg.set("sweep", "chains", "10");
    cfg.set("sweep", "epochs", "1");
    cfg.set("sweep", "repeats", "1");
    cli::cmd_sweep_freq(&cfg, dir.path()).unwrap();
    assert_valid(
        "sweep_summary.schema.json",
        &dir.path().join("summary.json"),
    );
}
