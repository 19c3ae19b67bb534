//! A synaptic layer built from chains of serially connected spin-diode
//! resonators.
//!
//! Each of the M chains rectifies every input frequency bin; resonator k of
//! a chain contributes with sign (-1)^k when the chain is wired head-to-head
//! (`SignMode::Alternating`), which cancels the DC drift of long chains.
//! The effective weight matrix is therefore a function of the trainable
//! resonance frequencies, and so are its gradients.
//!
//! Unit conventions: input powers in uW, weights in uV/uW, chain voltages in
//! uV. The stored biases `v_chains` / `v_layer` are in volts and converted
//! at use, matching the magnitudes reported for the hardware (V_layer is of
//! order 0.013 V). `backward` returns the bias gradient with respect to the
//! uV-valued bias term (so it equals plain column sums of the upstream
//! gradient); the trainer converts to volts where needed.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::device::{rectification_grad_raw, rectification_raw, ResonatorParams};
use crate::error::{Error, Result};

pub const UV_PER_V: f64 = 1e6;

/// Equidistant, endpoint-inclusive frequency grid: bin i sits at
/// f_min + i * (f_max - f_min) / (n_bins - 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub f_min: f64,
    pub f_max: f64,
    pub n_bins: usize,
}

impl FrequencyGrid {
    pub fn new(f_min: f64, f_max: f64, n_bins: usize) -> Result<Self> {
        if !(f_min > 0.0 && f_min.is_finite()) {
            return Err(Error::Domain(format!("f_min must be > 0, got {f_min}")));
        }
        if !(f_max > f_min && f_max.is_finite()) {
            return Err(Error::Domain(format!(
                "f_max must exceed f_min, got [{f_min}, {f_max}]"
            )));
        }
        if n_bins < 2 {
            return Err(Error::Domain(format!("n_bins must be >= 2, got {n_bins}")));
        }
        Ok(FrequencyGrid {
            f_min,
            f_max,
            n_bins,
        })
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        (self.f_max - self.f_min) / (self.n_bins - 1) as f64
    }

    #[inline]
    pub fn center(&self, i: usize) -> f64 {
        self.f_min + i as f64 * self.spacing()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_bins).map(|i| self.center(i)).collect()
    }
}

/// Electrical wiring of the resonators within a chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignMode {
    /// Head-to-head: resonator k contributes with sign (-1)^k, k = 0 first.
    Alternating,
    /// Head-to-tail: all contributions positive.
    Uniform,
}

impl SignMode {
    #[inline]
    fn sign(self, k: usize) -> f64 {
        match self {
            SignMode::Alternating => {
                if k.is_multiple_of(2) {
                    1.0
                } else {
                    -1.0
                }
            }
            SignMode::Uniform => 1.0,
        }
    }
}

/// One synaptic layer: M chains of N_res resonators plus trainable chain
/// biases and a per-layer constant bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainLayerState {
    /// Trainable resonance frequencies in Hz, shape [M chains x N_res].
    pub f_res: Array2<f64>,
    /// Trainable per-chain voltage biases in volts, length M.
    pub v_chains: Array1<f64>,
    /// Constant per-layer voltage bias in volts (hyperparameter).
    pub v_layer: f64,
    pub sign_mode: SignMode,
    pub resonator_params: ResonatorParams,
    /// Allowed physical band for every resonance frequency.
    pub band: (f64, f64),
}

/// Gradients produced by [`ChainLayerState::backward`].
#[derive(Debug, Clone)]
pub struct ChainGrads {
    /// dL/df_res in 1/Hz (times loss units), shape [M x N_res].
    pub f_res: Array2<f64>,
    /// dL/d(bias in uV): equals column sums of the upstream gradient.
    pub v_chains_uv: Array1<f64>,
    /// dL/d(input powers in uW), shape [batch x n_bins].
    pub powers: Array2<f64>,
}

impl ChainLayerState {
    pub fn new(
        f_res: Array2<f64>,
        v_chains: Array1<f64>,
        v_layer: f64,
        sign_mode: SignMode,
        resonator_params: ResonatorParams,
        band: (f64, f64),
    ) -> Result<Self> {
        resonator_params.validate()?;
        if !(band.0 > 0.0 && band.1 > band.0) {
            return Err(Error::Domain(format!(
                "invalid frequency band [{}, {}]",
                band.0, band.1
            )));
        }
        if f_res.nrows() != v_chains.len() {
            return Err(Error::Shape(format!(
                "f_res has {} chains but v_chains has {} entries",
                f_res.nrows(),
                v_chains.len()
            )));
        }
        for &f in f_res.iter() {
            if !(f >= band.0 && f <= band.1) {
                return Err(Error::Domain(format!(
                    "resonance frequency {f} outside band [{}, {}]",
                    band.0, band.1
                )));
            }
        }
        Ok(ChainLayerState {
            f_res,
            v_chains,
            v_layer,
            sign_mode,
            resonator_params,
            band,
        })
    }

    /// Layer with resonator k of every chain initialized at grid bin k's
    /// center plus uniform jitter of +/- 0.25 bin spacings, so the initial
    /// weight pattern is near-diagonal like the hardware design where
    /// first-layer synapses match their input frequencies.
    pub fn init_on_grid<R: rand::Rng>(
        m_chains: usize,
        grid: &FrequencyGrid,
        v_layer: f64,
        params: ResonatorParams,
        band: (f64, f64),
        rng: &mut R,
    ) -> Result<Self> {
        let n_res = grid.n_bins;
        let jitter = 0.25 * grid.spacing();
        let mut f = Array2::zeros((m_chains, n_res));
        for j in 0..m_chains {
            for k in 0..n_res {
                let base = grid.center(k);
                let val = base + rng.gen_range(-jitter..=jitter);
                f[[j, k]] = val.clamp(band.0, band.1);
            }
        }
        ChainLayerState::new(
            f,
            Array1::zeros(m_chains),
            v_layer,
            SignMode::Alternating,
            params,
            band,
        )
    }

    #[inline]
    pub fn n_chains(&self) -> usize {
        self.f_res.nrows()
    }

    #[inline]
    pub fn n_res(&self) -> usize {
        self.f_res.ncols()
    }

    /// Bias in uV applied to every chain output.
    #[inline]
    pub fn bias_uv(&self, j: usize) -> f64 {
        (self.v_chains[j] + self.v_layer) * UV_PER_V
    }

    /// Effective weight matrix W[j][i] = sum_k s_k G(f_i, f_res[j][k]),
    /// shape [M x n_bins], in uV/uW.
    pub fn effective_weights(&self, freqs: &[f64]) -> Result<Array2<f64>> {
        if freqs.is_empty() {
            return Err(Error::Shape("empty frequency list".into()));
        }
        let p = self.resonator_params;
        let mut w = Array2::zeros((self.n_chains(), freqs.len()));
        for j in 0..self.n_chains() {
            let row = self.f_res.row(j);
            let mut out = w.row_mut(j);
            for (k, &fr) in row.iter().enumerate() {
                let s = self.sign_mode.sign(k);
                for (i, &fi) in freqs.iter().enumerate() {
                    out[i] += s * rectification_raw(fi, fr, &p);
                }
            }
        }
        Ok(w)
    }

    /// Forward pass V = P W^T + b, voltages in uV for powers in uW.
    pub fn forward(&self, freqs: &[f64], powers: &Array2<f64>) -> Result<Array2<f64>> {
        let w = self.effective_weights(freqs)?;
        self.forward_with_weights(&w, freqs, powers)
    }

    /// Forward pass reusing a precomputed weight matrix (one step trains on
    /// the same weights for forward and backward).
    pub fn forward_with_weights(
        &self,
        w: &Array2<f64>,
        freqs: &[f64],
        powers: &Array2<f64>,
    ) -> Result<Array2<f64>> {
        if powers.ncols() != freqs.len() {
            return Err(Error::Shape(format!(
                "powers have {} bins but grid has {}",
                powers.ncols(),
                freqs.len()
            )));
        }
        for &pw in powers.iter() {
            if !(pw >= 0.0) {
                return Err(Error::Domain(format!(
                    "input powers must be non-negative, got {pw}"
                )));
            }
        }
        let mut v = powers.dot(&w.t());
        for j in 0..self.n_chains() {
            let b = self.bias_uv(j);
            v.column_mut(j).mapv_inplace(|x| x + b);
        }
        Ok(v)
    }

    /// Exact gradients of the forward map.
    ///
    /// grad_f_res[j][k] = sum_b sum_i up[b][j] P[b][i] s_k dG/df_res(f_i, f_jk)
    /// grad_v_chains_uv[j] = sum_b up[b][j]
    /// grad_powers[b][i] = sum_j up[b][j] W[j][i]
    pub fn backward(
        &self,
        freqs: &[f64],
        powers: &Array2<f64>,
        upstream: &Array2<f64>,
    ) -> Result<ChainGrads> {
        let w = self.effective_weights(freqs)?;
        self.backward_with_weights(&w, freqs, powers, upstream)
    }

    pub fn backward_with_weights(
        &self,
        w: &Array2<f64>,
        freqs: &[f64],
        powers: &Array2<f64>,
        upstream: &Array2<f64>,
    ) -> Result<ChainGrads> {
        let m = self.n_chains();
        if powers.ncols() != freqs.len() {
            return Err(Error::Shape(format!(
                "powers have {} bins but grid has {}",
                powers.ncols(),
                freqs.len()
            )));
        }
        if upstream.nrows() != powers.nrows() || upstream.ncols() != m {
            return Err(Error::Shape(format!(
                "upstream gradient is {}x{}, expected {}x{}",
                upstream.nrows(),
                upstream.ncols(),
                powers.nrows(),
                m
            )));
        }
        let p = self.resonator_params;
        // U[j][i] = sum_b up[b][j] P[b][i] collapses the batch before the
        // expensive resonator loop.
        let u = upstream.t().dot(powers);
        let mut grad_f = Array2::zeros((m, self.n_res()));
        for j in 0..m {
            let urow = u.row(j);
            for (k, &fr) in self.f_res.row(j).iter().enumerate() {
                let s = self.sign_mode.sign(k);
                let mut acc = 0.0;
                for (i, &fi) in freqs.iter().enumerate() {
                    acc += urow[i] * rectification_grad_raw(fi, fr, &p);
                }
                grad_f[[j, k]] = s * acc;
            }
        }
        let grad_bias = upstream.sum_axis(ndarray::Axis(0));
        let grad_powers = upstream.dot(w);
        Ok(ChainGrads {
            f_res: grad_f,
            v_chains_uv: grad_bias,
            powers: grad_powers,
        })
    }

    /// Project every resonance frequency back into the allowed band
    /// (applied after each optimizer step).
    pub fn clip_to_band(&mut self) {
        let (lo, hi) = self.band;
        self.f_res.mapv_inplace(|f| f.clamp(lo, hi));
    }
}
