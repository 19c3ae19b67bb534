//! Input spectra: generation, ingestion and preprocessing.
//!
//! Everything the networks consume is a [`SpectrumDataset`]: power per
//! frequency bin in uW on a fixed grid, one class label per sample and a
//! train/test split tag. Sources are the drone-style CSV interchange
//! format, a synthetic 10-class RF generator, MNIST images mapped onto a
//! frequency grid, and the three built-in 2D nonlinear tasks.

use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chain::FrequencyGrid;
use crate::error::{Error, Result};

pub const GENERATOR_VERSION: &str = "synth-drone-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Test => write!(f, "test"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Power per frequency bin, uW.
    pub powers: Vec<f64>,
    pub label: usize,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumDataset {
    pub grid: FrequencyGrid,
    pub n_classes: usize,
    pub samples: Vec<Sample>,
}

/// JSON sidecar recording how a generated dataset came to be.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetProvenance {
    pub generator: String,
    pub seed: u64,
    pub n_classes: usize,
    pub per_class: usize,
}

impl SpectrumDataset {
    pub fn validate(&self) -> Result<()> {
        for (idx, s) in self.samples.iter().enumerate() {
            if s.powers.len() != self.grid.n_bins {
                return Err(Error::Shape(format!(
                    "sample {idx} has {} bins, grid declares {}",
                    s.powers.len(),
                    self.grid.n_bins
                )));
            }
            if s.label >= self.n_classes {
                return Err(Error::Domain(format!(
                    "sample {idx} label {} out of range [0, {})",
                    s.label, self.n_classes
                )));
            }
        }
        Ok(())
    }

    pub fn split_counts(&self) -> (usize, usize) {
        let train = self
            .samples
            .iter()
            .filter(|s| s.split == Split::Train)
            .count();
        (train, self.samples.len() - train)
    }

    /// Matrix view of one split: [n x n_bins] powers plus labels.
    pub fn split_matrix(&self, split: Split) -> (Array2<f64>, Vec<usize>) {
        let rows: Vec<&Sample> = self.samples.iter().filter(|s| s.split == split).collect();
        let mut m = Array2::zeros((rows.len(), self.grid.n_bins));
        let mut labels = Vec::with_capacity(rows.len());
        for (r, s) in rows.iter().enumerate() {
            for (i, &p) in s.powers.iter().enumerate() {
                m[[r, i]] = p;
            }
            labels.push(s.label);
        }
        (m, labels)
    }
}

/// Per-frequency arithmetic mean over the time frames of a spectrogram
/// [time x freq].
pub fn average_spectrogram(spec: &Array2<f64>) -> Result<Array1<f64>> {
    if spec.nrows() == 0 || spec.ncols() == 0 {
        return Err(Error::Shape("empty spectrogram".into()));
    }
    for &x in spec.iter() {
        if !(x >= 0.0) {
            return Err(Error::Domain(format!(
                "spectrogram entries must be non-negative, got {x}"
            )));
        }
    }
    let n = spec.nrows() as f64;
    Ok(spec.sum_axis(ndarray::Axis(0)) / n)
}

/// Global min-max scaling of all powers in the dataset onto [0, 1] uW.
/// The map is affine over the whole dataset, not per sample.
pub fn minmax_scale(mut ds: SpectrumDataset) -> Result<SpectrumDataset> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in &ds.samples {
        for &p in &s.powers {
            lo = lo.min(p);
            hi = hi.max(p);
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Domain("dataset contains non-finite powers".into()));
    }
    if hi <= lo {
        return Err(Error::Degenerate(
            "constant dataset cannot be min-max scaled".into(),
        ));
    }
    let span = hi - lo;
    for s in &mut ds.samples {
        for p in &mut s.powers {
            *p = (*p - lo) / span;
        }
    }
    Ok(ds)
}

// ---- CSV interchange ---------------------------------------------------

/// Write the documented spectra CSV: a header row
/// `f_min_hz,f_max_hz,n_bins,n_classes` followed by one row per sample of
/// `label,split,p0,...,p{n_bins-1}`. Floats use shortest round-trip
/// formatting, so save/load is exact.
pub fn save_spectra_csv<P: AsRef<Path>>(ds: &SpectrumDataset, path: P) -> Result<()> {
    ds.validate()?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        f,
        "{},{},{},{}",
        ds.grid.f_min, ds.grid.f_max, ds.grid.n_bins, ds.n_classes
    )?;
    for s in &ds.samples {
        write!(f, "{},{}", s.label, s.split)?;
        for p in &s.powers {
            write!(f, ",{p}")?;
        }
        writeln!(f)?;
    }
    Ok(())
}

pub fn load_spectra_csv<P: AsRef<Path>>(path: P) -> Result<SpectrumDataset> {
    let f = std::fs::File::open(path)?;
    let reader = BufReader::new(f);
    let mut lines = reader.lines();
    let header = lines.next().ok_or_else(|| Error::Parse {
        row: 1,
        msg: "missing header row".into(),
    })??;
    let h: Vec<&str> = header.trim().split(',').collect();
    if h.len() != 4 {
        return Err(Error::Parse {
            row: 1,
            msg: format!("header must have 4 fields, got {}", h.len()),
        });
    }
    let parse_f = |s: &str, row: usize| -> Result<f64> {
        s.trim().parse::<f64>().map_err(|e| Error::Parse {
            row,
            msg: format!("bad number '{s}': {e}"),
        })
    };
    let f_min = parse_f(h[0], 1)?;
    let f_max = parse_f(h[1], 1)?;
    let n_bins = h[2].trim().parse::<usize>().map_err(|e| Error::Parse {
        row: 1,
        msg: format!("bad n_bins '{}': {e}", h[2]),
    })?;
    let n_classes = h[3].trim().parse::<usize>().map_err(|e| Error::Parse {
        row: 1,
        msg: format!("bad n_classes '{}': {e}", h[3]),
    })?;
    let grid = FrequencyGrid::new(f_min, f_max, n_bins)?;

    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = i + 2; // 1-based, after header
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != 2 + n_bins {
            return Err(Error::Parse {
                row,
                msg: format!(
                    "expected {} fields (label, split, {n_bins} bins), got {}",
                    2 + n_bins,
                    fields.len()
                ),
            });
        }
        let label = fields[0]
            .trim()
            .parse::<usize>()
            .map_err(|e| Error::Parse {
                row,
                msg: format!("bad label '{}': {e}", fields[0]),
            })?;
        if label >= n_classes {
            return Err(Error::Parse {
                row,
                msg: format!("label {label} out of range [0, {n_classes})"),
            });
        }
        let split = match fields[1].trim() {
            "train" => Split::Train,
            "test" => Split::Test,
            other => {
                return Err(Error::Parse {
                    row,
                    msg: format!("split must be 'train' or 'test', got '{other}'"),
                })
            }
        };
        let mut powers = Vec::with_capacity(n_bins);
        for s in &fields[2..] {
            powers.push(parse_f(s, row)?);
        }
        samples.push(Sample {
            powers,
            label,
            split,
        });
    }
    let ds = SpectrumDataset {
        grid,
        n_classes,
        samples,
    };
    ds.validate()?;
    Ok(ds)
}

// ---- synthetic drone-like generator ------------------------------------

/// Synthetic 10-class RF dataset mimicking the band-occupancy differences
/// of drone emitters: 256 bins over 20-120 MHz by default, each class a
/// fixed template of occupied sub-bands, each sample the template under
/// +/-10% multiplicative jitter and 1%-of-full-scale additive noise, min-max
/// scaled globally to [0, 1] uW. Deterministic under `seed`; class templates
/// depend only on the class index so they are stable across seeds.
pub fn synth_drone_like(n_classes: usize, per_class: usize, seed: u64) -> Result<SpectrumDataset> {
    if n_classes < 2 {
        return Err(Error::Domain("need at least 2 classes".into()));
    }
    if per_class < 2 {
        return Err(Error::Domain("need at least 2 samples per class".into()));
    }
    let grid = FrequencyGrid::new(2e7, 1.2e8, 256)?;
    let n_bins = grid.n_bins;

    let templates: Vec<Vec<f64>> = (0..n_classes)
        .map(|c| class_template(c as u64, n_bins))
        .collect();

    let total = n_classes * per_class;
    // Mirror the reference dataset's 702/298 proportions at 1000 samples.
    let n_train_total = ((total as u64 * 702 + 500) / 1000) as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(total);
    for c in 0..n_classes {
        // Distribute the train budget as evenly as possible over classes.
        let start = c * n_train_total / n_classes;
        let end = (c + 1) * n_train_total / n_classes;
        let n_train_c = end - start;
        for s in 0..per_class {
            let gain = rng.gen_range(0.9..=1.1);
            let powers: Vec<f64> = templates[c]
                .iter()
                .map(|&t| gain * t + rng.gen_range(0.0..0.01))
                .collect();
            samples.push(Sample {
                powers,
                label: c,
                split: if s < n_train_c {
                    Split::Train
                } else {
                    Split::Test
                },
            });
        }
    }
    minmax_scale(SpectrumDataset {
        grid,
        n_classes,
        samples,
    })
}

fn class_template(class: u64, n_bins: usize) -> Vec<f64> {
    // Three Gaussian-ish occupied sub-bands per class at class-specific
    // positions/widths/amplitudes.
    let mut rng = ChaCha8Rng::seed_from_u64(0x5d0e_c0de ^ class.wrapping_mul(0x9e37_79b9));
    let mut t = vec![0.0; n_bins];
    for _ in 0..3 {
        let center = rng.gen_range(0.08 * n_bins as f64..0.92 * n_bins as f64);
        let width = rng.gen_range(0.015 * n_bins as f64..0.06 * n_bins as f64);
        let amp = rng.gen_range(0.4..1.0);
        for (i, v) in t.iter_mut().enumerate() {
            let z = (i as f64 - center) / width;
            *v += amp * (-0.5 * z * z).exp();
        }
    }
    t
}

// ---- MNIST -------------------------------------------------------------

/// IDX image file (magic 0x00000803): big-endian u32 magic, count, rows,
/// cols, then row-major u8 pixels.
pub fn load_idx_images<P: AsRef<Path>>(path: P) -> Result<Vec<Vec<u8>>> {
    let mut bytes = Vec::new();
    std::fs::File::open(&path)?.read_to_end(&mut bytes)?;
    let be = |b: &[u8], at: usize| -> Result<u32> {
        b.get(at..at + 4)
            .map(|c| u32::from_be_bytes(c.try_into().unwrap()))
            .ok_or_else(|| Error::Corrupt("idx file truncated".into()))
    };
    if be(&bytes, 0)? != 0x0000_0803 {
        return Err(Error::Corrupt("bad idx image magic".into()));
    }
    let n = be(&bytes, 4)? as usize;
    let rows = be(&bytes, 8)? as usize;
    let cols = be(&bytes, 12)? as usize;
    let px = rows * cols;
    if bytes.len() != 16 + n * px {
        return Err(Error::Corrupt(format!(
            "idx image payload is {} bytes, expected {}",
            bytes.len() - 16,
            n * px
        )));
    }
    Ok(bytes[16..].chunks_exact(px).map(|c| c.to_vec()).collect())
}

/// IDX label file (magic 0x00000801).
pub fn load_idx_labels<P: AsRef<Path>>(path: P) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    std::fs::File::open(&path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 8 {
        return Err(Error::Corrupt("idx file truncated".into()));
    }
    if u32::from_be_bytes(bytes[0..4].try_into().unwrap()) != 0x0000_0801 {
        return Err(Error::Corrupt("bad idx label magic".into()));
    }
    let n = u32::from_be_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if bytes.len() != 8 + n {
        return Err(Error::Corrupt(format!(
            "idx label payload is {} bytes, expected {n}",
            bytes.len() - 8
        )));
    }
    Ok(bytes[8..].to_vec())
}

/// Map images onto a frequency grid: pixel i (row-major) becomes bin i,
/// intensities scaled from [0, 255] to [0, 1] uW.
pub fn mnist_as_spectrum(
    train: (&[Vec<u8>], &[u8]),
    test: (&[Vec<u8>], &[u8]),
    f_min: f64,
    f_max: f64,
) -> Result<SpectrumDataset> {
    let n_px = train
        .0
        .first()
        .or(test.0.first())
        .map(|im| im.len())
        .ok_or_else(|| Error::Shape("no images".into()))?;
    let grid = FrequencyGrid::new(f_min, f_max, n_px)?;
    let mut samples = Vec::with_capacity(train.0.len() + test.0.len());
    let mut push = |images: &[Vec<u8>], labels: &[u8], split: Split| -> Result<()> {
        if images.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        for (im, &lb) in images.iter().zip(labels) {
            if im.len() != n_px {
                return Err(Error::Shape(format!(
                    "image has {} pixels, expected {n_px}",
                    im.len()
                )));
            }
            if lb > 9 {
                return Err(Error::Domain(format!("label {lb} out of range")));
            }
            samples.push(Sample {
                powers: im.iter().map(|&p| p as f64 / 255.0).collect(),
                label: lb as usize,
                split,
            });
        }
        Ok(())
    };
    push(train.0, train.1, Split::Train)?;
    push(test.0, test.1, Split::Test)?;
    Ok(SpectrumDataset {
        grid,
        n_classes: 10,
        samples,
    })
}

/// Load the four standard MNIST IDX files from a directory.
pub fn load_mnist_dir<P: AsRef<Path>>(dir: P, f_min: f64, f_max: f64) -> Result<SpectrumDataset> {
    let d = dir.as_ref();
    let tr_im = load_idx_images(d.join("train-images-idx3-ubyte"))?;
    let tr_lb = load_idx_labels(d.join("train-labels-idx1-ubyte"))?;
    let te_im = load_idx_images(d.join("t10k-images-idx3-ubyte"))?;
    let te_lb = load_idx_labels(d.join("t10k-labels-idx1-ubyte"))?;
    mnist_as_spectrum((&tr_im, &tr_lb), (&te_im, &te_lb), f_min, f_max)
}

// ---- 2D nonlinear tasks ------------------------------------------------

/// Input tone frequencies of the 2D tasks, Hz.
pub const TASK2D_F1: f64 = 2.2e8;
pub const TASK2D_F2: f64 = 4.0e8;
/// Input power range of the 2D tasks, uW.
pub const TASK2D_P_RANGE: (f64, f64) = (0.5, 5.0);

/// Target boundary of task 1..=3 over (P1, P2) in [0.5, 5]^2 uW.
/// All three are non-linearly-separable by construction and split the
/// square into roughly equal halves:
///   1: corner — class 1 where both powers exceed 1.82 uW (L-shaped boundary)
///   2: diagonal band — class 1 where |P1 - P2| < 1.32 uW
///   3: quarter disc — class 1 inside radius 3.59 uW around (0.5, 0.5)
pub fn task2d_boundary(task_id: u8, p1: f64, p2: f64) -> Result<bool> {
    match task_id {
        1 => Ok(p1 > 1.82 && p2 > 1.82),
        2 => Ok((p1 - p2).abs() < 1.32),
        3 => Ok((p1 - 0.5).powi(2) + (p2 - 0.5).powi(2) < 3.59f64.powi(2)),
        other => Err(Error::Config(format!("task id must be 1..=3, got {other}"))),
    }
}

/// Labeled two-bin dataset for one of the built-in tasks; 70/30 split.
pub fn make_task2d(task_id: u8, n_samples: usize, seed: u64) -> Result<SpectrumDataset> {
    let grid = FrequencyGrid::new(TASK2D_F1, TASK2D_F2, 2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (task_id as u64) << 32);
    let n_train = n_samples * 7 / 10;
    let (lo, hi) = TASK2D_P_RANGE;
    let mut samples = Vec::with_capacity(n_samples);
    for s in 0..n_samples {
        let p1 = rng.gen_range(lo..=hi);
        let p2 = rng.gen_range(lo..=hi);
        let label = task2d_boundary(task_id, p1, p2)? as usize;
        samples.push(Sample {
            powers: vec![p1, p2],
            label,
            split: if s < n_train {
                Split::Train
            } else {
                Split::Test
            },
        });
    }
    Ok(SpectrumDataset {
        grid,
        n_classes: 2,
        samples,
    })
}

/// Pearson correlation between two equally long slices.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va <= 0.0 || vb <= 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}
