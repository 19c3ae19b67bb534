//! Power and energy budget of the RF network: per-device supply powers,
//! settle-time latency, per-operation energies and whole-network totals
//! with comparison against a conventional-receiver baseline.
//!
//! Note on K_SD: the energy estimates round the rectification sensitivity
//! to 1e4 uV/uW while the simulation modules use the measured 8.8e3; the
//! default here is the rounded value. Numerically uV/uW equals V/W, so no
//! conversion is needed anywhere below.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergyConfig {
    /// Inputs per chain (resonators seen by one supply line), N.
    pub n_pre: usize,
    /// Chains (post-synaptic units), M.
    pub m_post: usize,
    /// Rectification sensitivity, uV/uW (== V/W).
    pub k_sd: f64,
    /// Smallest usable rectified voltage, V.
    pub v_min: f64,
    /// Series resistance per synaptic line, ohm.
    pub r_synapse: f64,
    /// Oscillator resistance, ohm.
    pub r_neuron: f64,
    /// Oscillator threshold current, A.
    pub i_th: f64,
    /// Drive headroom multiple a: neurons are biased up to a * i_th.
    pub a_range: f64,
    /// Device operating frequency, Hz.
    pub f_op: f64,
    /// Oscillation periods needed for the output to settle.
    pub periods_to_settle: u32,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        EnergyConfig {
            n_pre: 256,
            m_post: 128,
            k_sd: 1e4,
            v_min: 1e-3,
            r_synapse: 2.5e3,
            r_neuron: 2.5e3,
            i_th: 1e-5,
            a_range: 2.0,
            f_op: 1e9,
            periods_to_settle: 100,
        }
    }
}

impl EnergyConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("k_sd", self.k_sd),
            ("v_min", self.v_min),
            ("r_synapse", self.r_synapse),
            ("r_neuron", self.r_neuron),
            ("i_th", self.i_th),
            ("f_op", self.f_op),
        ];
        for (name, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.a_range >= 0.0) || !self.a_range.is_finite() {
            return Err(Error::Config(format!(
                "a_range must be >= 0, got {}",
                self.a_range
            )));
        }
        if self.n_pre == 0 || self.m_post == 0 || self.periods_to_settle == 0 {
            return Err(Error::Config(
                "n_pre, m_post and periods_to_settle must be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// RF input current per chain, A: the drive that still produces v_min
    /// at the output after splitting over the N synapses of the chain,
    /// i.e. the inversion of v = N * k_sd * r * i^2.
    pub fn chain_input_current(&self) -> f64 {
        (self.v_min / (self.n_pre as f64 * self.k_sd * self.r_synapse)).sqrt()
    }

    /// Supply power per synapse and for all M*N synapses, W.
    pub fn synaptic_supply_power(&self) -> (f64, f64) {
        let per = self.v_min / self.k_sd;
        (per, self.m_post as f64 * self.n_pre as f64 * per)
    }

    /// Supply power per neuron and for all M neurons, W: each oscillator
    /// is biased at a * i_th through its resistance.
    pub fn neuron_supply_power(&self) -> (f64, f64) {
        let per = self.r_neuron * (self.a_range * self.i_th).powi(2);
        (per, self.m_post as f64 * per)
    }

    /// Settling latency and the energy one synapse / one neuron spends
    /// per operation: (t_op s, e_synapse J, e_neuron J).
    pub fn operation_energy(&self) -> (f64, f64, f64) {
        let t_op = self.periods_to_settle as f64 / self.f_op;
        let (p_syn, _) = self.synaptic_supply_power();
        let (p_neu, _) = self.neuron_supply_power();
        (t_op, p_syn * t_op, p_neu * t_op)
    }
}

/// Itemized budget for a full feed-forward stack.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergyBudget {
    /// Consecutive layer widths, e.g. [256, 128, 10].
    pub layer_sizes: Vec<usize>,
    pub n_synapses: usize,
    pub n_neurons: usize,
    /// Total synaptic supply power, W. This is the figure comparable to
    /// the headline milliwatt estimate, which counts synapses only.
    pub synaptic_power_w: f64,
    pub neuron_power_w: f64,
    pub total_power_w: f64,
    pub t_op_s: f64,
    pub e_synapse_j: f64,
    pub e_neuron_j: f64,
    /// Energy of one full inference: all devices active for one t_op.
    pub e_inference_j: f64,
    pub baseline_power_w: f64,
    pub power_ratio_vs_baseline: f64,
}

/// Default comparison baseline, W: a spectrum digitizer (~45 W) plus a
/// processing unit (~100 W).
pub const DEFAULT_BASELINE_W: f64 = 45.0 + 100.0;

/// Aggregate the per-device figures over a layered architecture. Every
/// non-input layer contributes its fan-in in synapses and its width in
/// neurons; `baseline_w` defaults to [`DEFAULT_BASELINE_W`].
pub fn network_budget(
    layer_sizes: &[usize],
    cfg: &EnergyConfig,
    baseline_w: Option<f64>,
) -> Result<EnergyBudget> {
    cfg.validate()?;
    if layer_sizes.len() < 2 {
        return Err(Error::Config(
            "need at least an input and an output layer".into(),
        ));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::Config("layer sizes must be >= 1".into()));
    }
    let baseline = baseline_w.unwrap_or(DEFAULT_BASELINE_W);
    if !(baseline > 0.0) {
        return Err(Error::Config(format!(
            "baseline power must be > 0, got {baseline}"
        )));
    }

    let mut n_synapses = 0usize;
    let mut n_neurons = 0usize;
    for w in layer_sizes.windows(2) {
        n_synapses += w[0] * w[1];
        n_neurons += w[1];
    }
    let (p_syn_per, _) = cfg.synaptic_supply_power();
    let (p_neu_per, _) = cfg.neuron_supply_power();
    let (t_op, e_syn, e_neu) = cfg.operation_energy();
    let synaptic_power = n_synapses as f64 * p_syn_per;
    let neuron_power = n_neurons as f64 * p_neu_per;
    let total = synaptic_power + neuron_power;
    Ok(EnergyBudget {
        layer_sizes: layer_sizes.to_vec(),
        n_synapses,
        n_neurons,
        synaptic_power_w: synaptic_power,
        neuron_power_w: neuron_power,
        total_power_w: total,
        t_op_s: t_op,
        e_synapse_j: e_syn,
        e_neuron_j: e_neu,
        e_inference_j: total * t_op,
        baseline_power_w: baseline,
        power_ratio_vs_baseline: baseline / total,
    })
}
