//! Gradient training: Adam, losses, the epoch loop and a seeded
//! random-search hyperparameter tuner.
//!
//! The physical model's parameters live on very different scales (resonance
//! frequencies around 1e9 Hz, biases around 1e-2 V), so the optimizer works
//! on a flattened vector in "natural units": f_res in GHz and biases in
//! volts. With that convention a single scalar learning rate around 1e-5
//! moves both parameter families sensibly, which is also the regime the
//! tuner searches.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Sample, SpectrumDataset, Split};
use crate::error::{Error, Result};
use crate::network::NetworkModel;
use crate::software::SoftwareModel;

const HZ_PER_GHZ: f64 = 1e9;
const UV_PER_V: f64 = crate::chain::UV_PER_V;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    CrossEntropy,
    Mse,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub loss: Loss,
    pub seed: u64,
    /// Independent restarts used when a caller averages over runs.
    pub repeats: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1.07e-5,
            epochs: 50,
            batch_size: 32,
            loss: Loss::CrossEntropy,
            seed: 0,
            repeats: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        // lr = 0 is deliberately legal: it gives the "frozen model"
        // reference run used in tests.
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning_rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be >= 1".into()));
        }
        Ok(())
    }
}

// ---- Adam --------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        AdamState {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&self) -> u64 {
        self.t
    }
}

/// One Adam update with bias correction, in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Shape(format!(
            "adam_step: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if let Some(bad) = grads.iter().find(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!(
            "non-finite gradient {bad} at optimizer step {}",
            state.t + 1
        )));
    }
    state.t += 1;
    let b1t = 1.0 - state.beta1.powi(state.t as i32);
    let b2t = 1.0 - state.beta2.powi(state.t as i32);
    for i in 0..params.len() {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
        let m_hat = state.m[i] / b1t;
        let v_hat = state.v[i] / b2t;
        params[i] -= lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

// ---- model abstraction -------------------------------------------------

/// Either the physical RF network or its conventional software twin, seen
/// through one flat-parameter training interface.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)] // a handful of models exist per run; boxing only adds indirection
pub enum AnyModel {
    Physical(NetworkModel),
    Software(SoftwareModel),
}

impl AnyModel {
    pub fn n_outputs(&self) -> usize {
        match self {
            AnyModel::Physical(m) => m.n_outputs(),
            AnyModel::Software(m) => m.n_outputs(),
        }
    }

    /// Scale applied to raw outputs before the loss so that logits are
    /// O(1): bare physical outputs are uV and get mapped to mV-scale
    /// numbers; an oscillator head already emits O(1) uW, and software
    /// outputs are dimensionless.
    pub fn logit_scale(&self) -> f64 {
        match self {
            AnyModel::Physical(m) => {
                if m.output_head.is_some() {
                    1.0
                } else {
                    1e-3
                }
            }
            AnyModel::Software(_) => 1.0,
        }
    }

    pub fn forward(&self, batch: &Array2<f64>) -> Result<Array2<f64>> {
        match self {
            AnyModel::Physical(m) => m.forward(batch),
            AnyModel::Software(m) => m.forward(batch),
        }
    }

    /// Flatten the trainable parameters into optimizer (natural) units.
    pub fn param_vector(&self) -> Vec<f64> {
        let mut v = Vec::new();
        match self {
            AnyModel::Physical(m) => {
                v.extend(m.layer1.f_res.iter().map(|&f| f / HZ_PER_GHZ));
                v.extend(m.layer1.v_chains.iter());
                if let Some(h) = &m.hidden {
                    v.extend(h.layer2.f_res.iter().map(|&f| f / HZ_PER_GHZ));
                    v.extend(h.layer2.v_chains.iter());
                }
            }
            AnyModel::Software(m) => {
                for l in &m.layers {
                    v.extend(l.w.iter());
                    v.extend(l.b.iter());
                }
            }
        }
        v
    }

    /// Write a flat parameter vector back, projecting resonance
    /// frequencies onto their allowed band.
    pub fn set_param_vector(&mut self, p: &[f64]) -> Result<()> {
        let expected = self.param_vector().len();
        if p.len() != expected {
            return Err(Error::Shape(format!(
                "parameter vector has {} entries, model needs {expected}",
                p.len()
            )));
        }
        let mut it = p.iter();
        match self {
            AnyModel::Physical(m) => {
                for f in m.layer1.f_res.iter_mut() {
                    *f = it.next().unwrap() * HZ_PER_GHZ;
                }
                for b in m.layer1.v_chains.iter_mut() {
                    *b = *it.next().unwrap();
                }
                if let Some(h) = &mut m.hidden {
                    for f in h.layer2.f_res.iter_mut() {
                        *f = it.next().unwrap() * HZ_PER_GHZ;
                    }
                    for b in h.layer2.v_chains.iter_mut() {
                        *b = *it.next().unwrap();
                    }
                }
                m.layer1.clip_to_band();
                if let Some(h) = &mut m.hidden {
                    h.layer2.clip_to_band();
                }
            }
            AnyModel::Software(m) => {
                for l in &mut m.layers {
                    for w in l.w.iter_mut() {
                        *w = *it.next().unwrap();
                    }
                    for b in l.b.iter_mut() {
                        *b = *it.next().unwrap();
                    }
                }
            }
        }
        Ok(())
    }

    /// Mean loss over the batch plus the gradient in natural units,
    /// ordered like `param_vector`.
    pub fn loss_and_grad(
        &self,
        batch: &Array2<f64>,
        labels: &[usize],
        loss: Loss,
    ) -> Result<(f64, Vec<f64>)> {
        let scale = self.logit_scale();
        match self {
            AnyModel::Physical(m) => {
                let cache = m.forward_full(batch)?;
                let logits = &cache.out * scale;
                let (l, mut g_logits) = loss_grad(&logits, labels, loss)?;
                g_logits *= scale; // back through the unit scaling
                let g = m.backward(batch, &cache, &g_logits)?;
                let mut flat = Vec::new();
                flat.extend(g.l1_f_res.iter().map(|&x| x * HZ_PER_GHZ));
                flat.extend(g.l1_bias_uv.iter().map(|&x| x * UV_PER_V));
                if let (Some(f), Some(b)) = (&g.l2_f_res, &g.l2_bias_uv) {
                    flat.extend(f.iter().map(|&x| x * HZ_PER_GHZ));
                    flat.extend(b.iter().map(|&x| x * UV_PER_V));
                }
                Ok((l, flat))
            }
            AnyModel::Software(m) => {
                let (cache, out) = m.forward_full(batch)?;
                let (l, g_logits) = loss_grad(&out, labels, loss)?;
                let g = m.backward(&cache, &g_logits)?;
                let mut flat = Vec::new();
                for (gw, gb) in &g.layers {
                    flat.extend(gw.iter());
                    flat.extend(gb.iter());
                }
                Ok((l, flat))
            }
        }
    }
}

/// Mean loss over the batch and its gradient w.r.t. the (scaled) logits.
fn loss_grad(logits: &Array2<f64>, labels: &[usize], loss: Loss) -> Result<(f64, Array2<f64>)> {
    let (b, k) = logits.dim();
    if labels.len() != b {
        return Err(Error::Shape(format!(
            "{b} logit rows but {} labels",
            labels.len()
        )));
    }
    let mut grad = Array2::zeros((b, k));
    let mut total = 0.0;
    if k == 1 {
        // Scalar binary head (the 2D tasks): a single output trained
        // toward BINARY_LO / BINARY_HI by squared error, whatever the
        // configured loss, since softmax over one logit is meaningless.
        for (r, &y) in labels.iter().enumerate() {
            if y > 1 {
                return Err(Error::Domain(format!(
                    "scalar output supports labels 0/1, got {y}"
                )));
            }
            let t = if y == 1 { BINARY_HI } else { BINARY_LO };
            let d = logits[[r, 0]] - t;
            total += d * d;
            grad[[r, 0]] = 2.0 * d / b as f64;
        }
        let mean = total / b as f64;
        if !mean.is_finite() {
            return Err(Error::NonFinite(format!("loss diverged to {mean}")));
        }
        return Ok((mean, grad));
    }
    match loss {
        Loss::CrossEntropy => {
            for (r, &y) in labels.iter().enumerate() {
                let row = logits.row(r);
                let zmax = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = row.iter().map(|&z| (z - zmax).exp()).collect();
                let zsum: f64 = exps.iter().sum();
                total += zsum.ln() - (logits[[r, y]] - zmax);
                for c in 0..k {
                    let p = exps[c] / zsum;
                    grad[[r, c]] = (p - if c == y { 1.0 } else { 0.0 }) / b as f64;
                }
            }
        }
        Loss::Mse => {
            for (r, &y) in labels.iter().enumerate() {
                for c in 0..k {
                    let t = if c == y { 1.0 } else { 0.0 };
                    let d = logits[[r, c]] - t;
                    total += d * d / k as f64;
                    grad[[r, c]] = 2.0 * d / (b * k) as f64;
                }
            }
        }
    }
    let mean = total / b as f64;
    if !mean.is_finite() {
        return Err(Error::NonFinite(format!("loss diverged to {mean}")));
    }
    Ok((mean, grad))
}

/// Target levels for a single scalar output in scaled-logit units; the
/// decision threshold sits halfway between them.
pub const BINARY_LO: f64 = 0.2;
pub const BINARY_HI: f64 = 0.8;

/// Argmax classification accuracy; ties go to the lowest class index. A
/// single-column output is read as a scalar binary score thresholded
/// between [`BINARY_LO`] and [`BINARY_HI`].
pub fn accuracy(outputs: &Array2<f64>, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    if outputs.ncols() == 1 {
        let thr = 0.5 * (BINARY_LO + BINARY_HI);
        let correct = labels
            .iter()
            .enumerate()
            .filter(|&(r, &y)| (outputs[[r, 0]] > thr) as usize == y)
            .count();
        return correct as f64 / labels.len() as f64;
    }
    let mut correct = 0usize;
    for (r, &y) in labels.iter().enumerate() {
        let row = outputs.row(r);
        let mut best = 0usize;
        for c in 1..row.len() {
            if row[c] > row[best] {
                best = c;
            }
        }
        if best == y {
            correct += 1;
        }
    }
    correct as f64 / labels.len() as f64
}

pub fn evaluate(model: &AnyModel, inputs: &Array2<f64>, labels: &[usize]) -> Result<f64> {
    Ok(accuracy(&model.forward(inputs)?, labels))
}

// ---- training loop -----------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    /// Model after the last epoch.
    pub model: AnyModel,
    /// Snapshot from the epoch with the best test accuracy (earliest on
    /// ties).
    pub best_model: AnyModel,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

pub fn train(model: AnyModel, ds: &SpectrumDataset, cfg: &TrainConfig) -> Result<TrainResult> {
    cfg.validate()?;
    ds.validate()?;
    let (train_x, train_y) = ds.split_matrix(Split::Train);
    let (test_x, test_y) = ds.split_matrix(Split::Test);
    if train_y.is_empty() {
        return Err(Error::Degenerate("dataset has no training samples".into()));
    }
    let scalar_binary = model.n_outputs() == 1 && ds.n_classes == 2;
    if ds.n_classes != model.n_outputs() && !scalar_binary {
        return Err(Error::Shape(format!(
            "model has {} outputs for {} classes",
            model.n_outputs(),
            ds.n_classes
        )));
    }

    let mut model = model;
    let mut params = model.param_vector();
    let mut adam = AdamState::new(params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_y.len()).collect();

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, AnyModel)> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut n_batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let mut bx = Array2::zeros((chunk.len(), train_x.ncols()));
            let mut by = Vec::with_capacity(chunk.len());
            for (r, &i) in chunk.iter().enumerate() {
                bx.row_mut(r).assign(&train_x.row(i));
                by.push(train_y[i]);
            }
            let (l, g) = model.loss_and_grad(&bx, &by, cfg.loss)?;
            epoch_loss += l;
            n_batches += 1;
            adam_step(&mut params, &g, &mut adam, cfg.learning_rate)?;
            model.set_param_vector(&params)?;
            // Band projection may have moved frequencies; keep the
            // optimizer's view consistent with the model (projected Adam).
            params = model.param_vector();
        }
        let loss = epoch_loss / n_batches as f64;
        let train_acc = evaluate(&model, &train_x, &train_y)?;
        let test_acc = if test_y.is_empty() {
            train_acc
        } else {
            evaluate(&model, &test_x, &test_y)?
        };
        history.push(EpochRecord {
            epoch,
            loss,
            train_acc,
            test_acc,
        });
        let better = match &best {
            Some((acc, _, _)) => test_acc > *acc,
            None => true,
        };
        if better {
            best = Some((test_acc, epoch, model.clone()));
        }
    }

    let (_, best_epoch, best_model) = best.expect("epochs >= 1 guarantees a record");
    Ok(TrainResult {
        model,
        best_model,
        best_epoch,
        history,
    })
}

/// History as the documented CSV (`epoch,loss,train_acc,test_acc`).
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,loss,train_acc,test_acc\n");
    for r in history {
        s.push_str(&format!(
            "{},{},{},{}\n",
            r.epoch, r.loss, r.train_acc, r.test_acc
        ));
    }
    s
}

// ---- hyperparameter search ---------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HyperSearchSpace {
    /// Log-uniform range for the learning rate.
    pub learning_rate: (f64, f64),
    /// Log-uniform range for the transconductance g_m, A/V.
    pub g_m: (f64, f64),
    /// Uniform range for the first-layer constant bias, V.
    pub v_layer: (f64, f64),
    pub n_trials: usize,
    pub objective_repeats: usize,
    pub seed: u64,
}

impl Default for HyperSearchSpace {
    fn default() -> Self {
        HyperSearchSpace {
            learning_rate: (1e-6, 1e-3),
            g_m: (1e-4, 1e-2),
            v_layer: (0.0, 0.05),
            n_trials: 100,
            objective_repeats: 10,
            seed: 0,
        }
    }
}

impl HyperSearchSpace {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi), log) in [
            ("learning_rate", self.learning_rate, true),
            ("g_m", self.g_m, true),
            ("v_layer", self.v_layer, false),
        ] {
            if !(lo.is_finite() && hi.is_finite() && hi >= lo) {
                return Err(Error::Config(format!("empty {name} range [{lo}, {hi}]")));
            }
            if log && lo <= 0.0 {
                return Err(Error::Config(format!(
                    "{name} is sampled log-uniformly and must be > 0, got {lo}"
                )));
            }
        }
        if self.n_trials == 0 {
            return Err(Error::Config("n_trials must be >= 1".into()));
        }
        if self.objective_repeats == 0 {
            return Err(Error::Config("objective_repeats must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub learning_rate: f64,
    pub g_m: f64,
    pub v_layer: f64,
    /// Mean validation accuracy over the repeats; absent if the trial
    /// failed.
    pub mean_accuracy: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchResult {
    pub trials: Vec<Trial>,
    pub best_index: Option<usize>,
}

impl SearchResult {
    pub fn best(&self) -> Result<&Trial> {
        self.best_index.map(|i| &self.trials[i]).ok_or_else(|| {
            Error::NonConvergence(format!("all {} trials failed", self.trials.len()))
        })
    }
}

/// Seeded random search. `train_fn(lr, g_m, v_layer, repeat_seed)` returns
/// one repeat's validation accuracy; the objective is the mean over
/// `objective_repeats` seeds and the best trial is its argmax (first on
/// ties). A failed repeat fails the whole trial but not the search.
pub fn hyper_search<F>(space: &HyperSearchSpace, mut train_fn: F) -> Result<SearchResult>
where
    F: FnMut(f64, f64, f64, u64) -> Result<f64>,
{
    space.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(space.seed);
    let mut trials: Vec<Trial> = Vec::with_capacity(space.n_trials);
    let mut best_index: Option<usize> = None;
    for index in 0..space.n_trials {
        let lr = log_uniform(&mut rng, space.learning_rate);
        let g_m = log_uniform(&mut rng, space.g_m);
        let v_layer = uniform(&mut rng, space.v_layer);
        let mut acc = 0.0;
        let mut failed: Option<String> = None;
        for r in 0..space.objective_repeats {
            let repeat_seed = space
                .seed
                .wrapping_mul(0x100_0000_01b3)
                .wrapping_add((index as u64) << 16 | r as u64);
            match train_fn(lr, g_m, v_layer, repeat_seed) {
                Ok(a) => acc += a,
                Err(e) => {
                    failed = Some(e.to_string());
                    break;
                }
            }
        }
        let trial = match failed {
            None => Trial {
                index,
                learning_rate: lr,
                g_m,
                v_layer,
                mean_accuracy: Some(acc / space.objective_repeats as f64),
                error: None,
            },
            Some(e) => Trial {
                index,
                learning_rate: lr,
                g_m,
                v_layer,
                mean_accuracy: None,
                error: Some(e),
            },
        };
        if let Some(a) = trial.mean_accuracy {
            let better = match best_index {
                Some(b) => a > trials[b].mean_accuracy.unwrap(),
                None => true,
            };
            if better {
                best_index = Some(index);
            }
        }
        trials.push(trial);
    }
    Ok(SearchResult { trials, best_index })
}

/// Re-tag a fraction of the train split as validation ("test") for use
/// inside tuner trials; the original test split is dropped so the tuner
/// never sees it.
pub fn validation_split(ds: &SpectrumDataset, val_frac: f64, seed: u64) -> Result<SpectrumDataset> {
    if !(0.0..1.0).contains(&val_frac) || val_frac <= 0.0 {
        return Err(Error::Config(format!(
            "validation fraction must be in (0, 1), got {val_frac}"
        )));
    }
    let train: Vec<&Sample> = ds
        .samples
        .iter()
        .filter(|s| s.split == Split::Train)
        .collect();
    if train.len() < 2 {
        return Err(Error::Degenerate(
            "need at least 2 training samples to hold out validation".into(),
        ));
    }
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((train.len() as f64 * val_frac).round() as usize).clamp(1, train.len() - 1);
    let mut samples = Vec::with_capacity(train.len());
    for (rank, &i) in order.iter().enumerate() {
        samples.push(Sample {
            powers: train[i].powers.clone(),
            label: train[i].label,
            split: if rank < n_val {
                Split::Test
            } else {
                Split::Train
            },
        });
    }
    Ok(SpectrumDataset {
        grid: ds.grid,
        n_classes: ds.n_classes,
        samples,
    })
}

fn log_uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        return lo;
    }
    (rng.gen_range(lo.ln()..=hi.ln())).exp()
}

fn uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        return lo;
    }
    rng.gen_range(lo..=hi)
}
