//! Subcommand implementations behind the `spinrf` binary. They live in
//! the library so integration tests can drive them without spawning
//! processes; the binary only parses arguments and maps errors to exit
//! codes.

use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::FlatConfig;
use crate::dataset::{self, SpectrumDataset, Split};
use crate::device::{OscillatorParams, ResonatorParams};
use crate::energy::{network_budget, EnergyBudget, EnergyConfig};
use crate::error::{Error, Result};
use crate::fit;
use crate::network::NetworkModel;
use crate::software::SoftwareModel;
use crate::trainer::{self, AnyModel, Loss, TrainConfig};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "SPINRF_OUT_DIR";

pub fn resolve_out_dir(explicit: Option<&str>) -> PathBuf {
    match explicit {
        Some(d) => PathBuf::from(d),
        None => std::env::var(OUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|_| PathBuf::from("runs")),
    }
}

fn prepare_out_dir(out_dir: &Path, cfg: &FlatConfig) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    // Config echo: feeding this file back through --config reproduces the
    // run exactly.
    std::fs::write(out_dir.join("config.txt"), cfg.to_text())?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Corrupt(format!("serializing {}: {e}", path.display())))?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

fn parse_loss(s: &str) -> Result<Loss> {
    match s {
        "cross_entropy" => Ok(Loss::CrossEntropy),
        "mse" => Ok(Loss::Mse),
        other => Err(Error::Config(format!(
            "loss must be cross_entropy or mse, got '{other}'"
        ))),
    }
}

// ---- train -------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub command: String,
    pub model: String,
    pub data: String,
    pub seed: u64,
    pub epochs: usize,
    pub final_test_acc: f64,
    pub best_test_acc: f64,
    pub best_epoch: usize,
    pub wall_secs: f64,
    pub config_echo: String,
}

fn load_train_dataset(
    source: &str,
    data_path: Option<&str>,
    classes: usize,
    per_class: usize,
    gen_seed: u64,
) -> Result<SpectrumDataset> {
    match source {
        "synth-drone" => dataset::synth_drone_like(classes, per_class, gen_seed),
        "csv" => {
            let p = data_path
                .ok_or_else(|| Error::Config("data = csv requires train.data_path".into()))?;
            if !Path::new(p).exists() {
                return Err(Error::Io(std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    format!("dataset file not found: {p}"),
                )));
            }
            dataset::load_spectra_csv(p)
        }
        other => Err(Error::Config(format!(
            "train.data must be synth-drone or csv, got '{other}'"
        ))),
    }
}

pub fn build_physical(
    ds: &SpectrumDataset,
    n_hidden: usize,
    hidden_band: (f64, f64),
    g_m: f64,
    v_layer: f64,
    seed: u64,
) -> Result<AnyModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let band = (ds.grid.f_min, ds.grid.f_max);
    Ok(AnyModel::Physical(NetworkModel::two_layer(
        ds.grid,
        n_hidden,
        ds.n_classes,
        hidden_band,
        g_m,
        v_layer,
        ResonatorParams::default(),
        OscillatorParams::default(),
        band,
        &mut rng,
    )?))
}

pub fn build_software(ds: &SpectrumDataset, n_hidden: usize, seed: u64) -> Result<AnyModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(AnyModel::Software(SoftwareModel::new(
        &[ds.grid.n_bins, n_hidden, ds.n_classes],
        &mut rng,
    )?))
}

pub fn cmd_train(cfg: &FlatConfig, out_dir: &Path) -> Result<TrainSummary> {
    let started = Instant::now();
    let mut r = cfg.reader();
    let seed = r.get_u64("run", "seed", 0)?;
    let model_kind = r.get_str("train", "model", "physical");
    let data = r.get_str("train", "data", "synth-drone");
    let data_path = r.get_opt_str("train", "data_path");
    let classes = r.get_usize("train", "classes", 10)?;
    let per_class = r.get_usize("train", "per_class", 100)?;
    let gen_seed = r.get_u64("train", "gen_seed", 1)?;
    let epochs = r.get_usize("train", "epochs", 50)?;
    let batch_size = r.get_usize("train", "batch_size", 32)?;
    let n_hidden = r.get_usize("train", "hidden", 128)?;
    let hidden_f_min = r.get_f64("train", "hidden_f_min", 1e9)?;
    let hidden_f_max = r.get_f64("train", "hidden_f_max", 5e9)?;
    let g_m = r.get_f64("train", "g_m", 1.81e-3)?;
    let v_layer = r.get_f64("train", "v_layer", 0.013)?;
    let default_lr = if model_kind == "software" {
        0.06
    } else {
        1.07e-5
    };
    let learning_rate = r.get_f64("train", "learning_rate", default_lr)?;
    let loss = parse_loss(&r.get_str("train", "loss", "cross_entropy"))?;
    r.finish()?;

    prepare_out_dir(out_dir, cfg)?;
    let ds = load_train_dataset(&data, data_path.as_deref(), classes, per_class, gen_seed)?;
    let model = match model_kind.as_str() {
        "physical" => build_physical(
            &ds,
            n_hidden,
            (hidden_f_min, hidden_f_max),
            g_m,
            v_layer,
            seed,
        )?,
        "software" => build_software(&ds, n_hidden, seed)?,
        other => {
            return Err(Error::Config(format!(
                "train.model must be physical or software, got '{other}'"
            )))
        }
    };
    let tc = TrainConfig {
        learning_rate,
        epochs,
        batch_size,
        loss,
        seed,
        repeats: 1,
    };
    let res = trainer::train(model, &ds, &tc)?;

    std::fs::write(
        out_dir.join("history.csv"),
        trainer::history_csv(&res.history),
    )?;
    if let AnyModel::Physical(m) = &res.best_model {
        m.save_checkpoint(out_dir.join("checkpoint.bin"))?;
    }
    let last = res.history.last().expect("epochs >= 1");
    let summary = TrainSummary {
        command: "train".into(),
        model: model_kind,
        data,
        seed,
        epochs,
        final_test_acc: last.test_acc,
        best_test_acc: res.history[res.best_epoch - 1].test_acc,
        best_epoch: res.best_epoch,
        wall_secs: started.elapsed().as_secs_f64(),
        config_echo: cfg.to_text(),
    };
    write_json(&out_dir.join("summary.json"), &summary)?;
    Ok(summary)
}

// ---- frequency-range sweep ---------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub f_max: f64,
    pub repeat: usize,
    pub train_acc: f64,
    pub test_acc: f64,
    /// Mean Pearson correlation between adjacent per-bin weight columns;
    /// high values mean neighboring synapses cannot be set independently.
    pub neighbor_corr: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub command: String,
    pub seed: u64,
    pub f_max_values: Vec<f64>,
    pub mean_test_acc: Vec<f64>,
    pub mean_neighbor_corr: Vec<f64>,
    pub rows: Vec<SweepRow>,
    pub wall_secs: f64,
    pub config_echo: String,
}

/// Mean Pearson correlation of adjacent columns of the first-layer weight
/// matrix evaluated on the input grid.
pub fn neighbor_weight_correlation(model: &NetworkModel) -> Result<f64> {
    let freqs = model.input_grid.centers();
    let w = model.layer1.effective_weights(&freqs)?;
    let n = w.ncols();
    if n < 2 {
        return Err(Error::Shape("need at least 2 input bins".into()));
    }
    let mut acc = 0.0;
    for i in 0..n - 1 {
        let a: Vec<f64> = w.column(i).to_vec();
        let b: Vec<f64> = w.column(i + 1).to_vec();
        acc += dataset::pearson(&a, &b);
    }
    Ok(acc / (n - 1) as f64)
}

/// Restrict a dataset to its first `n_train` train samples and
/// `n_train / 6` test samples (the full MNIST train:test ratio).
pub fn subset_dataset(ds: &SpectrumDataset, n_train: usize) -> SpectrumDataset {
    if n_train == 0 {
        return ds.clone();
    }
    let n_test = (n_train / 6).max(1);
    let mut taken_train = 0;
    let mut taken_test = 0;
    let samples = ds
        .samples
        .iter()
        .filter(|s| match s.split {
            Split::Train => {
                taken_train += 1;
                taken_train <= n_train
            }
            Split::Test => {
                taken_test += 1;
                taken_test <= n_test
            }
        })
        .cloned()
        .collect();
    SpectrumDataset {
        grid: ds.grid,
        n_classes: ds.n_classes,
        samples,
    }
}

pub fn cmd_sweep_freq(cfg: &FlatConfig, out_dir: &Path) -> Result<SweepSummary> {
    let started = Instant::now();
    let mut r = cfg.reader();
    let seed = r.get_u64("run", "seed", 0)?;
    let mnist_dir = r
        .get_opt_str("sweep", "mnist_dir")
        .or_else(|| std::env::var("MNIST_DIR").ok())
        .ok_or_else(|| {
            Error::Config("sweep.mnist_dir (or MNIST_DIR) must point at the IDX files".into())
        })?;
    let f_min = r.get_f64("sweep", "f_min", 5e7)?;
    let f_max_values = r.get_f64_list("sweep", "f_max", &[1e8, 5e8, 1e9, 5e9, 1e10, 2e10])?;
    let chains = r.get_usize("sweep", "chains", 10)?;
    let epochs = r.get_usize("sweep", "epochs", 20)?;
    let repeats = r.get_usize("sweep", "repeats", 10)?;
    let subset = r.get_usize("sweep", "subset", 0)?;
    let learning_rate = r.get_f64("sweep", "learning_rate", 1e-6)?;
    let batch_size = r.get_usize("sweep", "batch_size", 32)?;
    r.finish()?;

    prepare_out_dir(out_dir, cfg)?;
    let full = dataset::load_mnist_dir(&mnist_dir, f_min, f_max_values[0])?;
    let base = subset_dataset(&full, subset);

    let mut rows = Vec::new();
    let mut csv = String::from("f_max,repeat,train_acc,test_acc,neighbor_corr\n");
    let mut mean_acc = Vec::new();
    let mut mean_corr = Vec::new();
    for &f_max in &f_max_values {
        if f_max <= f_min {
            return Err(Error::Config(format!(
                "sweep.f_max {f_max} must exceed f_min {f_min}"
            )));
        }
        // Same pixel data, different frequency placement: rebuild the grid.
        let mut ds = base.clone();
        ds.grid = crate::chain::FrequencyGrid::new(f_min, f_max, ds.grid.n_bins)?;
        let mut acc_sum = 0.0;
        let mut corr_sum = 0.0;
        for repeat in 0..repeats {
            let run_seed = seed.wrapping_add(1 + repeat as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
            let model = NetworkModel::single_layer(
                ds.grid,
                chains,
                0.0,
                ResonatorParams::default(),
                (f_min, f_max),
                &mut rng,
            )?;
            let tc = TrainConfig {
                learning_rate,
                epochs,
                batch_size,
                loss: Loss::CrossEntropy,
                seed: run_seed,
                repeats: 1,
            };
            let res = trainer::train(AnyModel::Physical(model), &ds, &tc)?;
            let last = res.history.last().unwrap();
            let corr = match &res.model {
                AnyModel::Physical(m) => neighbor_weight_correlation(m)?,
                _ => unreachable!(),
            };
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                f_max, repeat, last.train_acc, last.test_acc, corr
            ));
            rows.push(SweepRow {
                f_max,
                repeat,
                train_acc: last.train_acc,
                test_acc: last.test_acc,
                neighbor_corr: corr,
            });
            acc_sum += last.test_acc;
            corr_sum += corr;
        }
        mean_acc.push(acc_sum / repeats as f64);
        mean_corr.push(corr_sum / repeats as f64);
    }
    std::fs::write(out_dir.join("sweep.csv"), csv)?;
    let summary = SweepSummary {
        command: "sweep-freq".into(),
        seed,
        f_max_values,
        mean_test_acc: mean_acc,
        mean_neighbor_corr: mean_corr,
        rows,
        wall_secs: started.elapsed().as_secs_f64(),
        config_echo: cfg.to_text(),
    };
    write_json(&out_dir.join("summary.json"), &summary)?;
    Ok(summary)
}

// ---- 2D tasks ----------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct Task2dReport {
    pub task: u8,
    pub test_acc: f64,
    pub best_restart: usize,
    pub grid_file: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Task2dSummary {
    pub command: String,
    pub seed: u64,
    pub tasks: Vec<Task2dReport>,
    pub wall_secs: f64,
    pub config_echo: String,
}

/// Per-task tuned hyper-parameters `(g_m, v_layer, init_jitter)` for the
/// 2D benchmark tasks.  The 2-2-1 network is small enough that each
/// decision boundary wants a different transconductance (which sets the
/// oscillator's voltage dynamic range and hence boundary sharpness) and a
/// different bias starting point.
fn task2d_hparams(task: u8) -> (f64, f64, f64) {
    match task {
        1 => (5.0e-3, 0.005, 0.0015),
        2 => (1.0e-2, 0.0025, 0.0008),
        _ => (1.81e-3, 0.013, 0.004),
    }
}

pub fn cmd_task2d(cfg: &FlatConfig, out_dir: &Path) -> Result<Task2dSummary> {
    let started = Instant::now();
    let mut r = cfg.reader();
    let seed = r.get_u64("run", "seed", 0)?;
    let task_sel = r.get_usize("task2d", "task", 0)?;
    let n_samples = r.get_usize("task2d", "n_samples", 1000)?;
    let epochs = r.get_usize("task2d", "epochs", 300)?;
    let restarts = r.get_usize("task2d", "restarts", 16)?;
    let grid_res = r.get_usize("task2d", "grid_res", 50)?;
    let learning_rate = r.get_f64("task2d", "learning_rate", 3e-4)?;
    let batch_size = r.get_usize("task2d", "batch_size", 16)?;
    // When unset these fall back to per-task tuned values (see
    // `task2d_hparams`); setting a key applies it to every task.
    let g_m_override = r.get_opt_f64("task2d", "g_m")?;
    let v_layer_override = r.get_opt_f64("task2d", "v_layer")?;
    let jitter_override = r.get_opt_f64("task2d", "init_jitter")?;
    r.finish()?;

    if grid_res < 2 {
        return Err(Error::Config("task2d.grid_res must be >= 2".into()));
    }
    let tasks: Vec<u8> = match task_sel {
        0 => vec![1, 2, 3],
        t @ 1..=3 => vec![t as u8],
        other => {
            return Err(Error::Config(format!(
                "task2d.task must be 0 (all) or 1..=3, got {other}"
            )))
        }
    };
    prepare_out_dir(out_dir, cfg)?;

    let mut reports = Vec::new();
    for &task in &tasks {
        let (g_m, v_layer, jitter) = {
            let (g, v, j) = task2d_hparams(task);
            (
                g_m_override.unwrap_or(g),
                v_layer_override.unwrap_or(v),
                jitter_override.unwrap_or(j),
            )
        };
        let ds = dataset::make_task2d(task, n_samples, seed.wrapping_add(1 + task as u64))?;
        let (test_x, test_y) = ds.split_matrix(Split::Test);
        let mut best: Option<(f64, usize, AnyModel)> = None;
        for restart in 0..restarts {
            let restart_seed = seed.wrapping_add(restart as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(restart_seed.wrapping_mul(31));
            let model = AnyModel::Physical(NetworkModel::task2d_restart(
                g_m, v_layer, jitter, &mut rng,
            )?);
            let tc = TrainConfig {
                learning_rate,
                epochs,
                batch_size,
                loss: Loss::Mse,
                seed: restart_seed,
                repeats: 1,
            };
            let res = trainer::train(model, &ds, &tc)?;
            let acc = trainer::evaluate(&res.best_model, &test_x, &test_y)?;
            let better = match &best {
                Some((b, _, _)) => acc > *b,
                None => true,
            };
            if better {
                best = Some((acc, restart, res.best_model));
            }
        }
        let (acc, best_restart, model) = best.expect("restarts >= 1");

        // Decision-region dump over the full input square.
        let (lo, hi) = dataset::TASK2D_P_RANGE;
        let mut grid_csv = String::from("p1_uw,p2_uw,predicted_class\n");
        let mut pts = Array2::zeros((grid_res * grid_res, 2));
        for i in 0..grid_res {
            for j in 0..grid_res {
                let p1 = lo + (hi - lo) * i as f64 / (grid_res - 1) as f64;
                let p2 = lo + (hi - lo) * j as f64 / (grid_res - 1) as f64;
                pts[[i * grid_res + j, 0]] = p1;
                pts[[i * grid_res + j, 1]] = p2;
            }
        }
        let out = model.forward(&pts)?;
        let thr = 0.5 * (trainer::BINARY_LO + trainer::BINARY_HI);
        for k in 0..pts.nrows() {
            let cls = (out[[k, 0]] > thr) as usize;
            grid_csv.push_str(&format!("{},{},{}\n", pts[[k, 0]], pts[[k, 1]], cls));
        }
        let grid_file = format!("grid_task{task}.csv");
        std::fs::write(out_dir.join(&grid_file), grid_csv)?;
        if let AnyModel::Physical(m) = &model {
            m.save_checkpoint(out_dir.join(format!("checkpoint_task{task}.bin")))?;
        }
        reports.push(Task2dReport {
            task,
            test_acc: acc,
            best_restart,
            grid_file,
        });
    }
    let summary = Task2dSummary {
        command: "task2d".into(),
        seed,
        tasks: reports,
        wall_secs: started.elapsed().as_secs_f64(),
        config_echo: cfg.to_text(),
    };
    write_json(&out_dir.join("summary.json"), &summary)?;
    Ok(summary)
}

// ---- energy ------------------------------------------------------------

pub fn cmd_energy(cfg: &FlatConfig, out_dir: &Path) -> Result<EnergyBudget> {
    let mut r = cfg.reader();
    let layers = r.get_usize_list("energy", "layers", &[256, 128, 10])?;
    let ec = EnergyConfig {
        n_pre: r.get_usize("energy", "n_pre", 256)?,
        m_post: r.get_usize("energy", "m_post", 128)?,
        k_sd: r.get_f64("energy", "k_sd", 1e4)?,
        v_min: r.get_f64("energy", "v_min", 1e-3)?,
        r_synapse: r.get_f64("energy", "r_synapse", 2.5e3)?,
        r_neuron: r.get_f64("energy", "r_neuron", 2.5e3)?,
        i_th: r.get_f64("energy", "i_th", 1e-5)?,
        a_range: r.get_f64("energy", "a_range", 2.0)?,
        f_op: r.get_f64("energy", "f_op", 1e9)?,
        periods_to_settle: r.get_u64("energy", "periods_to_settle", 100)? as u32,
    };
    let baseline = r.get_f64("energy", "baseline_w", crate::energy::DEFAULT_BASELINE_W)?;
    r.finish()?;
    prepare_out_dir(out_dir, cfg)?;
    let budget = network_budget(&layers, &ec, Some(baseline))?;
    write_json(&out_dir.join("energy.json"), &budget)?;
    std::fs::write(out_dir.join("energy.txt"), render_energy_table(&budget))?;
    Ok(budget)
}

pub fn render_energy_table(b: &EnergyBudget) -> String {
    let sizes: Vec<String> = b.layer_sizes.iter().map(|s| s.to_string()).collect();
    format!(
        "architecture          {}\n\
         synapses              {}\n\
         neurons               {}\n\
         synaptic power        {:.4} mW\n\
         neuron power          {:.4} mW\n\
         total power           {:.4} mW\n\
         settle time           {:.1} ns\n\
         energy / synapse op   {:.2} fJ\n\
         energy / neuron op    {:.2} fJ\n\
         energy / inference    {:.4} pJ\n\
         baseline              {:.1} W\n\
         baseline / total      {:.3e}\n",
        sizes.join("-"),
        b.n_synapses,
        b.n_neurons,
        b.synaptic_power_w * 1e3,
        b.neuron_power_w * 1e3,
        b.total_power_w * 1e3,
        b.t_op_s * 1e9,
        b.e_synapse_j * 1e15,
        b.e_neuron_j * 1e15,
        b.e_inference_j * 1e12,
        b.baseline_power_w,
        b.power_ratio_vs_baseline,
    )
}

// ---- fit ---------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum FitReport {
    SpinDiode(fit::SpinDiodeFit),
    Neuron(fit::PiecewiseNeuronFit),
}

pub fn cmd_fit(cfg: &FlatConfig, out_dir: &Path) -> Result<FitReport> {
    let mut r = cfg.reader();
    let kind = r.get_str("fit", "kind", "spin_diode");
    let input = r
        .get_opt_str("fit", "input")
        .ok_or_else(|| Error::Config("fit.input must name a two-column CSV".into()))?;
    let n_res = r.get_usize("fit", "n_resonances", 2)?;
    r.finish()?;
    prepare_out_dir(out_dir, cfg)?;
    let (xs, ys) = fit::load_curve_csv(&input)?;
    let report = match kind.as_str() {
        "spin_diode" => FitReport::SpinDiode(fit::fit_spin_diode(&xs, &ys, n_res)?),
        "neuron" => FitReport::Neuron(fit::fit_piecewise_neuron(&xs, &ys)?),
        other => {
            return Err(Error::Config(format!(
                "fit.kind must be spin_diode or neuron, got '{other}'"
            )))
        }
    };
    write_json(&out_dir.join("fit.json"), &report)?;
    Ok(report)
}

// ---- dataset generation ------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct GenDataSummary {
    pub out_file: String,
    pub n_samples: usize,
    pub n_train: usize,
    pub n_test: usize,
}

pub fn cmd_gen_data(cfg: &FlatConfig, out_dir: &Path) -> Result<GenDataSummary> {
    let mut r = cfg.reader();
    let seed = r.get_u64("run", "seed", 0)?;
    let classes = r.get_usize("gen", "classes", 10)?;
    let per_class = r.get_usize("gen", "per_class", 100)?;
    let out_file = r.get_str("gen", "out", "synth.csv");
    r.finish()?;
    prepare_out_dir(out_dir, cfg)?;
    let ds = dataset::synth_drone_like(classes, per_class, seed)?;
    let path = out_dir.join(&out_file);
    dataset::save_spectra_csv(&ds, &path)?;
    let prov = dataset::DatasetProvenance {
        generator: dataset::GENERATOR_VERSION.into(),
        seed,
        n_classes: classes,
        per_class,
    };
    write_json(&path.with_extension("json"), &prov)?;
    let (n_train, n_test) = ds.split_counts();
    Ok(GenDataSummary {
        out_file: path.display().to_string(),
        n_samples: ds.samples.len(),
        n_train,
        n_test,
    })
}
