//! Command-line front end: argument parsing and exit-code mapping only;
//! all behavior lives in `spinrf::cli`.

use clap::{Parser, Subcommand};

use spinrf::cli;
use spinrf::config::FlatConfig;
use spinrf::error::Result;

#[derive(Parser)]
#[command(
    name = "spinrf",
    about = "Simulate, train and budget spintronic RF neural networks",
    version
)]
struct Args {
    /// Flat config file ([section] key = value); optional.
    #[arg(long, global = true)]
    config: Option<String>,

    /// Output directory (default: $SPINRF_OUT_DIR or ./runs).
    #[arg(long, global = true)]
    out_dir: Option<String>,

    /// Master seed; shorthand for --set run.seed=N.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override a config value as section.key=value; repeatable.
    #[arg(long = "set", global = true)]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one network and write checkpoint, history and summary.
    Train {
        /// physical | software
        #[arg(long)]
        model: Option<String>,
        /// synth-drone | csv
        #[arg(long)]
        data: Option<String>,
        /// Spectra CSV (with data = csv).
        #[arg(long)]
        data_path: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        /// cross_entropy | mse
        #[arg(long)]
        loss: Option<String>,
    },
    /// MNIST frequency-range study: accuracy and neighbor-weight
    /// correlation per f_max.
    SweepFreq {
        /// Directory holding the four MNIST IDX files.
        #[arg(long)]
        mnist_dir: Option<String>,
        /// Train-image subset size (0 = full set).
        #[arg(long)]
        subset: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        repeats: Option<usize>,
        /// Comma-separated f_max list in Hz.
        #[arg(long)]
        f_max: Option<String>,
    },
    /// Train the built-in 2D nonlinear tasks and dump decision grids.
    Task2d {
        /// 0 = all tasks, otherwise 1..=3.
        #[arg(long)]
        task: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        restarts: Option<usize>,
    },
    /// Power and per-operation energy budget for an architecture.
    Energy {
        /// Comma-separated layer sizes, e.g. 256,128,10.
        #[arg(long)]
        layers: Option<String>,
    },
    /// Fit a measured curve: multi-resonance spectrum or piecewise neuron.
    Fit {
        /// spin_diode | neuron
        #[arg(long)]
        kind: Option<String>,
        /// Two-column CSV (header row, then x,y).
        #[arg(long)]
        input: Option<String>,
        #[arg(long)]
        n_resonances: Option<usize>,
    },
    /// Generate the synthetic drone-like dataset as CSV + provenance.
    GenData {
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long)]
        per_class: Option<usize>,
        /// Output file name inside the output directory.
        #[arg(long)]
        out: Option<String>,
    },
}

fn set_opt(cfg: &mut FlatConfig, section: &str, key: &str, v: Option<impl ToString>) {
    if let Some(v) = v {
        cfg.set(section, key, v.to_string());
    }
}

fn run(args: Args) -> Result<()> {
    let mut cfg = match &args.config {
        Some(p) => FlatConfig::load(p)?,
        None => FlatConfig::default(),
    };
    set_opt(&mut cfg, "run", "seed", args.seed);

    // Subcommand flags are sugar for config keys; --set wins over both.
    match &args.command {
        Command::Train {
            model,
            data,
            data_path,
            epochs,
            learning_rate,
            batch_size,
            loss,
        } => {
            set_opt(&mut cfg, "train", "model", model.clone());
            set_opt(&mut cfg, "train", "data", data.clone());
            set_opt(&mut cfg, "train", "data_path", data_path.clone());
            set_opt(&mut cfg, "train", "epochs", *epochs);
            set_opt(&mut cfg, "train", "learning_rate", *learning_rate);
            set_opt(&mut cfg, "train", "batch_size", *batch_size);
            set_opt(&mut cfg, "train", "loss", loss.clone());
        }
        Command::SweepFreq {
            mnist_dir,
            subset,
            epochs,
            repeats,
            f_max,
        } => {
            set_opt(&mut cfg, "sweep", "mnist_dir", mnist_dir.clone());
            set_opt(&mut cfg, "sweep", "subset", *subset);
            set_opt(&mut cfg, "sweep", "epochs", *epochs);
            set_opt(&mut cfg, "sweep", "repeats", *repeats);
            set_opt(&mut cfg, "sweep", "f_max", f_max.clone());
        }
        Command::Task2d {
            task,
            epochs,
            restarts,
        } => {
            set_opt(&mut cfg, "task2d", "task", *task);
            set_opt(&mut cfg, "task2d", "epochs", *epochs);
            set_opt(&mut cfg, "task2d", "restarts", *restarts);
        }
        Command::Energy { layers } => {
            set_opt(&mut cfg, "energy", "layers", layers.clone());
        }
        Command::Fit {
            kind,
            input,
            n_resonances,
        } => {
            set_opt(&mut cfg, "fit", "kind", kind.clone());
            set_opt(&mut cfg, "fit", "input", input.clone());
            set_opt(&mut cfg, "fit", "n_resonances", *n_resonances);
        }
        Command::GenData {
            classes,
            per_class,
            out,
        } => {
            set_opt(&mut cfg, "gen", "classes", *classes);
            set_opt(&mut cfg, "gen", "per_class", *per_class);
            set_opt(&mut cfg, "gen", "out", out.clone());
        }
    }
    for ov in &args.overrides {
        cfg.apply_override(ov)?;
    }

    let out_dir = cli::resolve_out_dir(args.out_dir.as_deref());
    match args.command {
        Command::Train { .. } => {
            let s = cli::cmd_train(&cfg, &out_dir)?;
            println!(
                "trained {} on {}: test accuracy {:.4} (best {:.4} at epoch {})",
                s.model, s.data, s.final_test_acc, s.best_test_acc, s.best_epoch
            );
        }
        Command::SweepFreq { .. } => {
            let s = cli::cmd_sweep_freq(&cfg, &out_dir)?;
            for (i, f) in s.f_max_values.iter().enumerate() {
                println!(
                    "f_max {:>12.3e} Hz  mean test acc {:.4}  neighbor corr {:.4}",
                    f, s.mean_test_acc[i], s.mean_neighbor_corr[i]
                );
            }
        }
        Command::Task2d { .. } => {
            let s = cli::cmd_task2d(&cfg, &out_dir)?;
            for t in &s.tasks {
                println!(
                    "task {}: test accuracy {:.4} ({})",
                    t.task, t.test_acc, t.grid_file
                );
            }
        }
        Command::Energy { .. } => {
            let b = cli::cmd_energy(&cfg, &out_dir)?;
            print!("{}", cli::render_energy_table(&b));
        }
        Command::Fit { .. } => {
            cli::cmd_fit(&cfg, &out_dir)?;
            println!(
                "fit report written to {}",
                out_dir.join("fit.json").display()
            );
        }
        Command::GenData { .. } => {
            let s = cli::cmd_gen_data(&cfg, &out_dir)?;
            println!(
                "wrote {} ({} samples: {} train / {} test)",
                s.out_file, s.n_samples, s.n_train, s.n_test
            );
        }
    }
    Ok(())
}

fn main() {
    let args = Args::parse();
    if let Err(e) = run(args) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
