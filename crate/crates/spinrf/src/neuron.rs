//! A neuron layer of spin-torque oscillators.
//!
//! Chain voltages are converted to DC currents through a transconductance
//! g_m and each oscillator emits RF power at its fixed, clamped emission
//! frequency. The emitted powers, paired with the emission frequencies,
//! form the input spectrum of the next synaptic layer.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::device::{stno_power, stno_power_grad, OscillatorParams};
use crate::error::{Error, Result};

/// uW per W; neuron outputs feed synaptic layers that work in uW.
const UW_PER_W: f64 = 1e6;
/// V per uV; chain voltages arrive in uV while g_m is in A/V.
const V_PER_UV: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronLayerState {
    /// Transconductance in A/V converting chain voltages to drive currents.
    pub g_m: f64,
    /// Fixed emission frequency of each neuron, in Hz.
    pub emit_freqs: Vec<f64>,
    pub osc_params: OscillatorParams,
    /// Whether the drive current is clamped at I_c (hidden layers are).
    pub clamped: bool,
}

impl NeuronLayerState {
    pub fn new(
        g_m: f64,
        emit_freqs: Vec<f64>,
        osc_params: OscillatorParams,
        clamped: bool,
    ) -> Result<Self> {
        osc_params.validate()?;
        if !(g_m > 0.0 && g_m.is_finite()) {
            return Err(Error::Domain(format!("g_m must be > 0, got {g_m}")));
        }
        if emit_freqs.is_empty() {
            return Err(Error::Domain(
                "neuron layer needs at least one neuron".into(),
            ));
        }
        for &f in &emit_freqs {
            if !(f > 0.0 && f.is_finite()) {
                return Err(Error::Domain(format!(
                    "emission frequencies must be > 0, got {f}"
                )));
            }
        }
        let mut sorted = emit_freqs.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Domain(
                "emission frequencies must be pairwise distinct".into(),
            ));
        }
        Ok(NeuronLayerState {
            g_m,
            emit_freqs,
            osc_params,
            clamped,
        })
    }

    /// Equidistant emission frequencies over `band`, the default hidden
    /// layout (1-5 GHz for 128 neurons unless configured otherwise).
    pub fn equidistant(
        n: usize,
        band: (f64, f64),
        g_m: f64,
        osc_params: OscillatorParams,
        clamped: bool,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain(
                "neuron layer needs at least one neuron".into(),
            ));
        }
        let freqs = if n == 1 {
            vec![0.5 * (band.0 + band.1)]
        } else {
            let step = (band.1 - band.0) / (n - 1) as f64;
            (0..n).map(|i| band.0 + i as f64 * step).collect()
        };
        NeuronLayerState::new(g_m, freqs, osc_params, clamped)
    }

    #[inline]
    pub fn n_neurons(&self) -> usize {
        self.emit_freqs.len()
    }

    /// Element-wise activation: voltages in uV -> emitted powers in uW.
    pub fn forward(&self, voltages: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_shape(voltages)?;
        Ok(voltages.mapv(|v| {
            let i_dc = v * V_PER_UV * self.g_m;
            stno_power(i_dc, &self.osc_params, self.clamped) * UW_PER_W
        }))
    }

    /// Element-wise chain rule: dP/dV = g_m * dP/dI. In uW/uV this is
    /// numerically the same value as in W/V, so no unit factor appears.
    pub fn backward(&self, voltages: &Array2<f64>, upstream: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_shape(voltages)?;
        if upstream.dim() != voltages.dim() {
            return Err(Error::Shape(format!(
                "upstream gradient is {:?}, expected {:?}",
                upstream.dim(),
                voltages.dim()
            )));
        }
        let mut out = voltages.clone();
        out.zip_mut_with(upstream, |v, &u| {
            let i_dc = *v * V_PER_UV * self.g_m;
            *v = u * self.g_m * stno_power_grad(i_dc, &self.osc_params, self.clamped);
        });
        Ok(out)
    }

    fn check_shape(&self, voltages: &Array2<f64>) -> Result<()> {
        if voltages.ncols() != self.n_neurons() {
            return Err(Error::Shape(format!(
                "voltages have {} columns but layer has {} neurons",
                voltages.ncols(),
                self.n_neurons()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layer(n: usize) -> NeuronLayerState {
        NeuronLayerState::equidistant(n, (1e9, 5e9), 1.81e-3, OscillatorParams::default(), true)
            .unwrap()
    }

    #[test]
    fn rejects_duplicate_or_nonpositive_freqs() {
        let o = OscillatorParams::default();
        assert!(NeuronLayerState::new(1e-3, vec![1e9, 1e9], o, true).is_err());
        assert!(NeuronLayerState::new(1e-3, vec![0.0], o, true).is_err());
        assert!(NeuronLayerState::new(0.0, vec![1e9], o, true).is_err());
    }

    #[test]
    fn below_threshold_voltage_gives_zero_power() {
        let l = layer(2);
        let v_th = l.osc_params.i_th / l.g_m / V_PER_UV; // uV at threshold
        let p = l.forward(&array![[0.5 * v_th, v_th]]).unwrap();
        assert_eq!(p[[0, 0]], 0.0);
        assert_eq!(p[[0, 1]], 0.0);
    }

    #[test]
    fn one_microwatt_at_four_ith_drive() {
        // V = 4 i_th / g_m with default oscillator constants -> 1 uW.
        let l = layer(1);
        let v = 4.0 * l.osc_params.i_th / l.g_m / V_PER_UV;
        let p = l.forward(&array![[v]]).unwrap();
        assert_relative_eq!(p[[0, 0]], 1.0, max_relative = 1e-9);
    }

    #[test]
    fn monotone_voltages_give_monotone_powers() {
        let l = layer(1);
        let v_th = l.osc_params.i_th / l.g_m / V_PER_UV;
        let v_c = l.osc_params.clamp_current() / l.g_m / V_PER_UV;
        let mut last = -1.0;
        for s in 0..20 {
            let v = v_th + (v_c - v_th) * (s as f64 + 1.0) / 21.0;
            let p = l.forward(&array![[v]]).unwrap()[[0, 0]];
            assert!(p > last);
            last = p;
        }
    }

    #[test]
    fn clamped_output_never_exceeds_one_microwatt() {
        let l = layer(3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = Array2::from_shape_fn((16, 3), |_| rng.gen_range(-1e5..1e6));
        let p = l.forward(&v).unwrap();
        for &x in p.iter() {
            assert!(x >= 0.0);
            assert!(x <= 1.0 * (1.0 + 1e-6), "power {x} exceeds clamp");
        }
    }

    #[test]
    fn forward_is_elementwise_permutable() {
        let l = layer(3);
        let v = array![[1e3, 7e3, 1.5e4]];
        let p = l.forward(&v).unwrap();
        let vp = array![[1.5e4, 1e3, 7e3]];
        let pp = l.forward(&vp).unwrap();
        assert_eq!(p[[0, 0]], pp[[0, 1]]);
        assert_eq!(p[[0, 1]], pp[[0, 2]]);
        assert_eq!(p[[0, 2]], pp[[0, 0]]);
    }

    #[test]
    fn backward_zero_below_threshold() {
        let l = layer(1);
        let g = l.backward(&array![[0.0]], &array![[1.0]]).unwrap();
        assert_eq!(g[[0, 0]], 0.0);
    }

    #[test]
    fn backward_matches_finite_difference() {
        let l = layer(2);
        let v_th = l.osc_params.i_th / l.g_m / V_PER_UV;
        let v_c = l.osc_params.clamp_current() / l.g_m / V_PER_UV;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let v0 = rng.gen_range(1.1 * v_th..0.9 * v_c);
            let v1 = rng.gen_range(1.1 * v_th..0.9 * v_c);
            let v = array![[v0, v1]];
            let up = array![[1.0, 1.0]];
            let g = l.backward(&v, &up).unwrap();
            for col in 0..2 {
                let h = 1e-6 * v[[0, col]];
                let mut vp = v.clone();
                vp[[0, col]] += h;
                let mut vm = v.clone();
                vm[[0, col]] -= h;
                let fd = (l.forward(&vp).unwrap()[[0, col]] - l.forward(&vm).unwrap()[[0, col]])
                    / (2.0 * h);
                assert_relative_eq!(g[[0, col]], fd, max_relative = 1e-4);
            }
        }
    }

    #[test]
    fn backward_reparameterization_oracle() {
        // Scaling g_m by c must reproduce the derivative of P(c*g_m*V):
        // grad_{scaled}(V) = c * grad-of-power-at-current(c g_m V).
        let base = layer(1);
        let c = 1.7;
        let scaled = NeuronLayerState::new(
            c * base.g_m,
            base.emit_freqs.clone(),
            base.osc_params,
            base.clamped,
        )
        .unwrap();
        let v_th = base.osc_params.i_th / base.g_m / V_PER_UV;
        for frac in [1.3, 1.8, 2.5] {
            let v = frac * v_th / c; // keep scaled drive in band
            let up = array![[1.0]];
            let g_scaled = scaled.backward(&array![[v]], &up).unwrap()[[0, 0]];
            let i = v * V_PER_UV * c * base.g_m;
            let expected =
                c * base.g_m * crate::device::stno_power_grad(i, &base.osc_params, base.clamped);
            assert_relative_eq!(g_scaled, expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let l = layer(2);
        assert!(l.forward(&Array2::zeros((1, 3))).is_err());
        assert!(l
            .backward(&Array2::zeros((1, 2)), &Array2::zeros((2, 2)))
            .is_err());
    }
}
