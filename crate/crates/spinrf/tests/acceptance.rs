//! End-to-end acceptance suite. Each test prints exactly one
//! `criterion N (...): PASS|FAIL|SKIP` line (run with `-- --nocapture`
//! to see them) and fails the build on FAIL.

use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spinrf::chain::FrequencyGrid;
use spinrf::config::FlatConfig;
use spinrf::device::{rectification_coefficient, stno_power, OscillatorParams, ResonatorParams};
use spinrf::energy::{network_budget, EnergyConfig};
use spinrf::fit::{self, Resonance, SpinDiodeFit};
use spinrf::network::{self, NetworkModel};
use spinrf::trainer::{AnyModel, Loss};
use spinrf::{cli, Result};

fn report(n: u32, name: &str, ok: bool, detail: &str) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    println!(
        "criterion {n} ({name}): {verdict}{}{}",
        if detail.is_empty() { "" } else { " - " },
        detail
    );
    assert!(ok, "criterion {n} ({name}) failed: {detail}");
}

fn gaussian(rng: &mut impl Rng) -> f64 {
    // Box-Muller.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

// ---- 1. gradient correctness ------------------------------------------

/// Compare every analytic gradient entry of `model` against a central
/// finite difference of the loss. Entries whose finite difference is
/// unreliable (band-edge clipping, activation kinks detected by a
/// step-halving consistency check) are skipped. Returns (checked, worst
/// relative error).
fn fd_check(model: &AnyModel, batch: &Array2<f64>, labels: &[usize]) -> (usize, f64) {
    let (_, g) = model
        .loss_and_grad(batch, labels, Loss::CrossEntropy)
        .unwrap();
    let p0 = model.param_vector();
    let n_bias = match model {
        AnyModel::Physical(m) => {
            m.layer1.n_chains() + m.hidden.as_ref().map_or(0, |h| h.layer2.n_chains())
        }
        _ => 0,
    };
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for i in 0..p0.len() {
        // Frequencies are GHz-scale, biases are V-scale.
        let h = if i < p0.len() - n_bias { 1e-7 } else { 1e-9 };
        let loss_at = |step: f64| -> Option<f64> {
            let mut p = p0.clone();
            p[i] += step;
            let mut m = model.clone();
            m.set_param_vector(&p).unwrap();
            // A frequency on its band edge gets clipped back; that makes
            // the difference quotient wrong, so reject it.
            if (m.param_vector()[i] - p0[i] - step).abs() > 1e-3 * step.abs() {
                return None;
            }
            Some(
                m.loss_and_grad(batch, labels, Loss::CrossEntropy)
                    .unwrap()
                    .0,
            )
        };
        let (Some(lp), Some(lm), Some(lp2), Some(lm2)) =
            (loss_at(h), loss_at(-h), loss_at(2.0 * h), loss_at(-2.0 * h))
        else {
            continue;
        };
        let fd = (lp - lm) / (2.0 * h);
        let fd2 = (lp2 - lm2) / (4.0 * h);
        // A kink between -2h and 2h makes the two estimates disagree.
        let scale = fd.abs().max(fd2.abs()).max(1e-9);
        if (fd - fd2).abs() > 0.05 * scale {
            continue;
        }
        let rel = (g[i] - fd).abs() / fd.abs().max(1e-9);
        worst = worst.max(rel);
        checked += 1;
    }
    (checked, worst)
}

#[test]
fn criterion_1_gradient_correctness() {
    let started = Instant::now();
    let mut total_checked = 0usize;
    let mut worst: f64 = 0.0;
    for seed in 0..50u64 {
        let model = AnyModel::Physical(network::micro(seed));
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
        let batch = Array2::from_shape_fn((3, 4), |_| rng.gen_range(0.0..1.0));
        let labels: Vec<usize> = (0..3).map(|_| rng.gen_range(0..2)).collect();
        let (n, w) = fd_check(&model, &batch, &labels);
        assert!(n >= 5, "micro seed {seed}: only {n} parameters checkable");
        total_checked += n;
        worst = worst.max(w);
    }
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let grid = FrequencyGrid::new(2e7, 1.2e8, 4).unwrap();
        let model = AnyModel::Physical(
            NetworkModel::single_layer(
                grid,
                3,
                0.013,
                ResonatorParams::default(),
                (2e7, 1.2e8),
                &mut rng,
            )
            .unwrap(),
        );
        let batch = Array2::from_shape_fn((3, 4), |_| rng.gen_range(0.0..1.0));
        let labels: Vec<usize> = (0..3).map(|_| rng.gen_range(0..3)).collect();
        let (n, w) = fd_check(&model, &batch, &labels);
        assert!(
            n >= 5,
            "single-layer seed {seed}: only {n} parameters checkable"
        );
        total_checked += n;
        worst = worst.max(w);
    }
    let secs = started.elapsed().as_secs_f64();
    report(
        1,
        "gradient correctness",
        worst <= 1e-4 && secs < 60.0,
        &format!("{total_checked} params, worst rel err {worst:.2e}, {secs:.1}s"),
    );
}

// ---- 2. device-model pins ---------------------------------------------

#[test]
fn criterion_2_device_pins() {
    let o = OscillatorParams::default();
    let p_clamp = stno_power(4.0 * o.i_th, &o, true);
    let ok_power = (p_clamp - 1e-6).abs() <= 1e-9 * 1e-6;

    let r = ResonatorParams::default();
    let f_res = 1e8;
    let g_plus = rectification_coefficient(f_res * (1.0 + r.alpha), f_res, &r).unwrap();
    let g_minus = rectification_coefficient(f_res * (1.0 - r.alpha), f_res, &r).unwrap();
    let ok_peak = (g_plus.abs() - r.k_sd).abs() <= 1e-9 * r.k_sd
        && (g_minus.abs() - r.k_sd).abs() <= 1e-9 * r.k_sd;
    report(
        2,
        "device-model pins",
        ok_power && ok_peak,
        &format!(
            "P(4 I_th) = {p_clamp:.3e} W, peak |G| = {:.6e} uV/uW",
            g_plus.abs()
        ),
    );
}

// ---- 3. energy budget --------------------------------------------------

#[test]
fn criterion_3_energy_budget() {
    let started = Instant::now();
    let cfg = EnergyConfig::default();
    let (p_syn, _) = cfg.synaptic_supply_power();
    let (p_neu, _) = cfg.neuron_supply_power();
    let (_, e_syn, e_neu) = cfg.operation_energy();
    let b = network_budget(&[256, 128, 10], &cfg, None).unwrap();
    let ok = (p_syn - 1e-7).abs() < 1e-18
        && (p_neu - 1e-6).abs() < 1e-18
        && (e_syn - 1e-14).abs() < 1e-25
        && (e_neu - 1e-13).abs() < 1e-24
        && (b.synaptic_power_w - 3.4048e-3).abs() < 1e-7
        && b.power_ratio_vs_baseline > 1e4
        && started.elapsed().as_secs_f64() < 1.0;
    report(
        3,
        "energy budget",
        ok,
        &format!(
            "synapse {:.1e} W / {:.0e} J, neuron {:.1e} W / {:.0e} J, 256-128-10 total {:.4e} W, baseline ratio {:.2e}",
            p_syn, e_syn, p_neu, e_neu, b.synaptic_power_w, b.power_ratio_vs_baseline
        ),
    );
}

// ---- 4. MNIST frequency-range study -----------------------------------

fn find_mnist() -> Option<String> {
    let dir = std::env::var("MNIST_DIR").ok()?;
    let need = "train-images-idx3-ubyte";
    if std::path::Path::new(&dir).join(need).exists() {
        Some(dir)
    } else {
        None
    }
}

fn sweep_config(mnist: &str, subset: usize, f_max: &str, repeats: usize) -> FlatConfig {
    let mut cfg = FlatConfig::default();
    cfg.set("run", "seed", "0");
    cfg.set("sweep", "mnist_dir", mnist);
    cfg.set("sweep", "subset", subset.to_string());
    cfg.set("sweep", "f_max", f_max);
    cfg.set("sweep", "repeats", repeats.to_string());
    cfg
}

#[test]
fn criterion_4_mnist_frequency_range() {
    // The MNIST IDX files are not bundled; point MNIST_DIR at a directory
    // containing train-images-idx3-ubyte etc. and run the two ignored
    // tests below for the real check.
    match find_mnist() {
        Some(_) => println!(
            "criterion 4 (MNIST frequency-range study): SKIP - data found; run \
             `cargo test --test acceptance -- --ignored --nocapture` for the full study"
        ),
        None => println!(
            "criterion 4 (MNIST frequency-range study): SKIP - MNIST_DIR not set or \
             IDX files missing; implementation covered by ignored tests \
             criterion_4_mnist_smoke / criterion_4_mnist_full"
        ),
    }
}

#[test]
#[ignore = "needs MNIST IDX files via MNIST_DIR; < 5 min"]
fn criterion_4_mnist_smoke() {
    let dir = find_mnist().expect("set MNIST_DIR to a directory with the four IDX files");
    let started = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let s = cli::cmd_sweep_freq(&sweep_config(&dir, 6000, "5e9", 1), tmp.path()).unwrap();
    let acc = s.mean_test_acc[0];
    let secs = started.elapsed().as_secs_f64();
    report(
        4,
        "MNIST smoke (6000-image subset)",
        acc >= 0.85 && secs < 300.0,
        &format!("acc {acc:.4} at f_max 5 GHz, {secs:.0}s"),
    );
}

#[test]
#[ignore = "needs MNIST IDX files via MNIST_DIR; full-dataset study, ~desk scale"]
fn criterion_4_mnist_full() {
    let dir = find_mnist().expect("set MNIST_DIR to a directory with the four IDX files");
    let tmp = tempfile::tempdir().unwrap();
    let s = cli::cmd_sweep_freq(
        &sweep_config(&dir, 0, "1e8,5e8,5e9,1e10,2e10", 10),
        tmp.path(),
    )
    .unwrap();
    let at = |f: f64| {
        let i = s.f_max_values.iter().position(|&x| x == f).unwrap();
        (s.mean_test_acc[i], s.mean_neighbor_corr[i])
    };
    let plateau = [5e9, 1e10, 2e10].iter().map(|&f| at(f).0).sum::<f64>() / 3.0;
    let ok_plateau = (plateau - 0.9152).abs() <= 0.015;
    let ok_drop = at(1e8).0 < at(5e9).0;
    let corr = [at(1e8).1, at(5e8).1, at(2e10).1];
    let ok_corr = corr[0] > corr[1] && corr[1] > corr[2];
    report(
        4,
        "MNIST frequency-range study",
        ok_plateau && ok_drop && ok_corr,
        &format!("plateau acc {plateau:.4}, corr {corr:?}"),
    );
}

// ---- 5. drone-scale classification ------------------------------------

#[test]
fn criterion_5_drone_scale() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = FlatConfig::default();
    cfg.set("train", "epochs", "5");
    let phys = cli::cmd_train(&cfg, &tmp.path().join("phys")).unwrap();
    cfg.set("train", "model", "software");
    let soft = cli::cmd_train(&cfg, &tmp.path().join("soft")).unwrap();
    let ok = phys.best_test_acc >= 0.95 && soft.best_test_acc - phys.best_test_acc <= 0.01;
    report(
        5,
        "drone-scale classification",
        ok,
        &format!(
            "physical {:.4}, software {:.4} on synthetic 10-class / 256-bin set",
            phys.best_test_acc, soft.best_test_acc
        ),
    );
}

// ---- 6. 2D nonlinear tasks --------------------------------------------

#[test]
fn criterion_6_task2d() {
    let started = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let cfg = FlatConfig::default();
    let s = cli::cmd_task2d(&cfg, tmp.path()).unwrap();
    let accs: Vec<f64> = s.tasks.iter().map(|t| t.test_acc).collect();
    let secs = started.elapsed().as_secs_f64();
    let ok = accs.iter().all(|&a| a >= 0.99) && secs < 120.0;
    report(
        6,
        "2D nonlinear tasks",
        ok,
        &format!("test accuracies {accs:?}, {secs:.1}s"),
    );
}

// ---- 7. fit round-trips ------------------------------------------------

fn two_res_truth() -> SpinDiodeFit {
    SpinDiodeFit {
        resonances: vec![
            Resonance {
                f_res: 3.0e8,
                width: 3.0e6,
                a_sym: 2.0,
                b_asym: 90.0,
            },
            Resonance {
                f_res: 4.1e8,
                width: 4.1e6,
                a_sym: -1.0,
                b_asym: 60.0,
            },
        ],
        offset: 0.5,
        rmse: 0.0,
        iterations: 0,
    }
}

fn fit_two_res(noise_frac: f64, seed: u64) -> Result<Vec<f64>> {
    let truth = two_res_truth();
    let n = 400;
    let freqs: Vec<f64> = (0..n)
        .map(|i| 2.0e8 + 3.0e8 * i as f64 / (n - 1) as f64)
        .collect();
    let clean: Vec<f64> = freqs.iter().map(|&f| truth.eval(f)).collect();
    let amp = clean.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let volts: Vec<f64> = clean
        .iter()
        .map(|&v| v + noise_frac * amp * gaussian(&mut rng))
        .collect();
    let got = fit::fit_spin_diode(&freqs, &volts, 2)?;
    Ok(got.resonances.iter().map(|r| r.f_res).collect())
}

#[test]
fn criterion_7_fit_round_trips() {
    let started = Instant::now();
    let truth: Vec<f64> = two_res_truth().resonances.iter().map(|r| r.f_res).collect();
    let noiseless = fit_two_res(0.0, 0).unwrap();
    let mut worst_clean: f64 = 0.0;
    for (g, t) in noiseless.iter().zip(&truth) {
        worst_clean = worst_clean.max((g - t).abs() / t);
    }
    let mut worst_noisy: f64 = 0.0;
    for seed in 0..20 {
        let got = fit_two_res(0.01, seed).unwrap();
        for (g, t) in got.iter().zip(&truth) {
            worst_noisy = worst_noisy.max((g - t).abs() / t);
        }
    }

    // Piecewise neuron: 3 mA threshold from a 0.1 mA grid.
    let i_grid: Vec<f64> = (0..=60).map(|k| 1e-4 * k as f64).collect();
    let v: Vec<f64> = i_grid
        .iter()
        .map(|&i| if i >= 3e-3 { (i - 3e-3) * 2.0e7 } else { 0.0 })
        .collect();
    let nf = fit::fit_piecewise_neuron(&i_grid, &v).unwrap();
    let ok_thresh = (nf.i_th - 3e-3).abs() <= 1e-4 + 1e-12;

    let secs = started.elapsed().as_secs_f64();
    let ok = worst_clean <= 1e-3 && worst_noisy <= 1e-2 && ok_thresh && secs < 60.0;
    report(
        7,
        "fit round-trips",
        ok,
        &format!(
            "f_res err noiseless {worst_clean:.2e}, 1% noise {worst_noisy:.2e}, neuron threshold {:.4e} A, {secs:.1}s",
            nf.i_th
        ),
    );
}

// ---- 8. determinism and serialization ---------------------------------

#[test]
fn criterion_8_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = FlatConfig::default();
    cfg.set("train", "epochs", "2");
    cfg.set("train", "per_class", "20");
    cfg.set("run", "seed", "7");
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    cli::cmd_train(&cfg, &a).unwrap();
    cli::cmd_train(&cfg, &b).unwrap();
    let mut identical = true;
    for name in ["history.csv", "checkpoint.bin"] {
        let xa = std::fs::read(a.join(name)).unwrap();
        let xb = std::fs::read(b.join(name)).unwrap();
        identical &= xa == xb;
    }

    let model = network::micro(3);
    let bytes = model.to_checkpoint_bytes();
    let back = NetworkModel::from_checkpoint_bytes(&bytes).unwrap();
    let round_trip = back.to_checkpoint_bytes() == bytes;

    report(
        8,
        "determinism and serialization",
        identical && round_trip,
        &format!("repeat runs byte-identical: {identical}, checkpoint round-trip: {round_trip}"),
    );
}
