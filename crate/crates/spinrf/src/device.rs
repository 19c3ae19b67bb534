//! Closed-form models of the two magnetic-tunnel-junction device roles.
//!
//! A junction used as a resonator rectifies an RF input into a DC voltage
//! (the synapse); a junction used as an oscillator converts a DC current
//! into emitted RF power above a threshold (the neuron). Both models are
//! analytic, together with their first derivatives, so that resonance
//! frequencies can be trained by gradient descent.
//!
//! Units: frequencies in Hz, currents in A, resistances in Ohm, powers in W.
//! The spin-diode sensitivity `k_sd` is in uV/uW, which is numerically
//! identical to V/W.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical constants of a spin-diode resonator (synapse).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonatorParams {
    /// Gilbert damping, dimensionless. Sets the fractional linewidth.
    pub alpha: f64,
    /// Spin-diode sensitivity in uV/uW.
    pub k_sd: f64,
}

impl Default for ResonatorParams {
    fn default() -> Self {
        // alpha = 0.01 and K_SD = 8.8e3 uV/uW for the simulated network.
        ResonatorParams {
            alpha: 0.01,
            k_sd: 8.8e3,
        }
    }
}

impl ResonatorParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) || !self.alpha.is_finite() {
            return Err(Error::Domain(format!(
                "alpha must be in (0, 1), got {}",
                self.alpha
            )));
        }
        if !(self.k_sd > 0.0) || !self.k_sd.is_finite() {
            return Err(Error::Domain(format!(
                "k_sd must be > 0, got {}",
                self.k_sd
            )));
        }
        Ok(())
    }
}

/// Physical constants of a spin-torque nano-oscillator (neuron).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillatorParams {
    /// Threshold current in A below which there is no emission.
    pub i_th: f64,
    /// Non-linear damping coefficient Q, dimensionless.
    pub q_nl: f64,
    /// Output power scaling parameter A, dimensionless.
    pub a_scale: f64,
    /// Device resistance in Ohm.
    pub r_ohm: f64,
    /// Clamp current as a multiple of the threshold: I_c = clamp_factor * i_th.
    pub clamp_factor: f64,
    /// Tunnel-magnetoresistance shape factor (Delta R / R * beta_s).
    /// Enters the output power squared; kept explicit with default 1 to
    /// document the simplification rather than hard-code it.
    pub shape_tmr_factor: f64,
}

impl Default for OscillatorParams {
    fn default() -> Self {
        // A = 1.25, Q = 2, I_th = 10 uA, R = 1 kOhm, I_c = 4 I_th gives a
        // maximum clamped output power of exactly 1 uW.
        OscillatorParams {
            i_th: 1e-5,
            q_nl: 2.0,
            a_scale: 1.25,
            r_ohm: 1e3,
            clamp_factor: 4.0,
            shape_tmr_factor: 1.0,
        }
    }
}

impl OscillatorParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.i_th > 0.0 && self.i_th.is_finite()) {
            return Err(Error::Domain(format!(
                "i_th must be > 0, got {}",
                self.i_th
            )));
        }
        if !(self.r_ohm > 0.0 && self.r_ohm.is_finite()) {
            return Err(Error::Domain(format!(
                "r_ohm must be > 0, got {}",
                self.r_ohm
            )));
        }
        if !(self.clamp_factor > 1.0 && self.clamp_factor.is_finite()) {
            return Err(Error::Domain(format!(
                "clamp_factor must be > 1, got {}",
                self.clamp_factor
            )));
        }
        if !(self.q_nl >= 0.0 && self.q_nl.is_finite()) {
            return Err(Error::Domain(format!(
                "q_nl must be >= 0, got {}",
                self.q_nl
            )));
        }
        Ok(())
    }

    /// Clamp current I_c in A.
    #[inline]
    pub fn clamp_current(&self) -> f64 {
        self.clamp_factor * self.i_th
    }

    /// Output power at the clamp current, the maximum a clamped neuron emits.
    pub fn clamp_power(&self) -> f64 {
        stno_power_raw(self.clamp_current(), self)
    }
}

/// Rectification coefficient G(f_in, f_res) in uV/uW: the synaptic weight a
/// single resonator applies to an input tone at `f_in`.
///
/// G = 2 alpha f_res (f_in - f_res) K_SD / ((alpha f_res)^2 + (f_in - f_res)^2)
///
/// Odd in the detuning (f_in - f_res), bounded by +/- k_sd, with the
/// extrema exactly at a detuning of +/- alpha * f_res.
pub fn rectification_coefficient(f_in: f64, f_res: f64, p: &ResonatorParams) -> Result<f64> {
    check_freqs(f_in, f_res)?;
    Ok(rectification_raw(f_in, f_res, p))
}

/// Analytic derivative of the rectification coefficient with respect to the
/// resonance frequency, in uV/(uW*Hz).
pub fn rectification_coefficient_grad_fres(
    f_in: f64,
    f_res: f64,
    p: &ResonatorParams,
) -> Result<f64> {
    check_freqs(f_in, f_res)?;
    Ok(rectification_grad_raw(f_in, f_res, p))
}

fn check_freqs(f_in: f64, f_res: f64) -> Result<()> {
    if !(f_res > 0.0 && f_res.is_finite()) {
        return Err(Error::Domain(format!(
            "resonance frequency must be finite and > 0, got {f_res}"
        )));
    }
    if !(f_in >= 0.0 && f_in.is_finite()) {
        return Err(Error::Domain(format!(
            "input frequency must be finite and >= 0, got {f_in}"
        )));
    }
    Ok(())
}

/// Unchecked G; callers guarantee f_res > 0. Hot path for weight tensors.
#[inline(always)]
pub(crate) fn rectification_raw(f_in: f64, f_res: f64, p: &ResonatorParams) -> f64 {
    let c = p.alpha * f_res;
    let x = f_in - f_res;
    2.0 * c * x * p.k_sd / (c * c + x * x)
}

/// Unchecked dG/df_res.
///
/// With c = alpha f_res and x = f_in - f_res (so dc/df_res = alpha,
/// dx/df_res = -1) the quotient rule gives
///   dG/df_res = 2 K [ (alpha x - c) D - c x (2 c alpha - 2 x) ] / D^2,
/// D = c^2 + x^2. At resonance (x = 0) this reduces to -2 K / (alpha f_res).
#[inline(always)]
pub(crate) fn rectification_grad_raw(f_in: f64, f_res: f64, p: &ResonatorParams) -> f64 {
    let a = p.alpha;
    let c = a * f_res;
    let x = f_in - f_res;
    let d = c * c + x * x;
    let num = (a * x - c) * d - c * x * (2.0 * c * a - 2.0 * x);
    2.0 * p.k_sd * num / (d * d)
}

/// Emitted RF power of a spin-torque oscillator in W for a drive current
/// `i_dc` in A.
///
/// Zero at or below threshold (including any negative current: a
/// reverse-biased oscillator does not emit), then
/// A * p(xi) * (shape)^2 * R * i^2 with p = (xi - 1)/(xi + Q), xi = i/i_th.
/// When `clamped` the output freezes at its I_c value for i_dc >= I_c.
pub fn stno_power(i_dc: f64, o: &OscillatorParams, clamped: bool) -> f64 {
    if i_dc <= o.i_th {
        return 0.0;
    }
    let i = if clamped {
        i_dc.min(o.clamp_current())
    } else {
        i_dc
    };
    stno_power_raw(i, o)
}

#[inline(always)]
fn stno_power_raw(i: f64, o: &OscillatorParams) -> f64 {
    let xi = i / o.i_th;
    let p = (xi - 1.0) / (xi + o.q_nl);
    let s = o.shape_tmr_factor;
    o.a_scale * p * s * s * o.r_ohm * i * i
}

/// Analytic dP/dI in W/A.
///
/// Kink convention: at i_dc = i_th the right-sided (in-band) derivative is
/// returned; at i_dc = I_c (clamped) the left-sided one. Strictly below
/// threshold, and strictly above the clamp when clamped, the derivative is 0.
pub fn stno_power_grad(i_dc: f64, o: &OscillatorParams, clamped: bool) -> f64 {
    if i_dc < o.i_th {
        return 0.0;
    }
    if clamped && i_dc > o.clamp_current() {
        return 0.0;
    }
    let i = i_dc;
    let t = o.i_th;
    let xi = i / t;
    let q = o.q_nl;
    let p = (xi - 1.0) / (xi + q);
    // dp/di = (1/t) (Q + 1) / (xi + Q)^2
    let dp_di = (q + 1.0) / ((xi + q) * (xi + q)) / t;
    let s = o.shape_tmr_factor;
    o.a_scale * s * s * o.r_ohm * (dp_di * i * i + 2.0 * p * i)
}
