//! Fitting measured device curves: multi-resonance spin-diode spectra
//! (sum of Lorentzian and anti-Lorentzian components) and the
//! piecewise-linear neuron transfer curve, with RMSE reporting.

use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One resonance of the rectified-voltage model: at detuning x = f - f_res
/// it contributes (A c^2 + B c x) / (c^2 + x^2), i.e. a symmetric
/// Lorentzian of amplitude A and an antisymmetric part of amplitude B,
/// both in uV, with half-width c in Hz.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Resonance {
    pub f_res: f64,
    pub width: f64,
    pub a_sym: f64,
    pub b_asym: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpinDiodeFit {
    pub resonances: Vec<Resonance>,
    /// Constant background, uV.
    pub offset: f64,
    /// Residual RMSE at the data abscissae, uV.
    pub rmse: f64,
    pub iterations: usize,
}

impl SpinDiodeFit {
    pub fn eval(&self, f: f64) -> f64 {
        let mut v = self.offset;
        for r in &self.resonances {
            let x = f - r.f_res;
            let c = r.width;
            v += (r.a_sym * c * c + r.b_asym * c * x) / (c * c + x * x);
        }
        v
    }
}

// Parameter packing for the optimizer: [offset, (f_res, width, A, B) per
// resonance], all in normalized coordinates (frequencies / f_scale,
// voltages / v_scale).
fn model_eval(p: &[f64], f: f64) -> f64 {
    let mut v = p[0];
    let mut i = 1;
    while i < p.len() {
        let (fr, c, a, b) = (p[i], p[i + 1], p[i + 2], p[i + 3]);
        let x = f - fr;
        let d = c * c + x * x;
        v += (a * c * c + b * c * x) / d;
        i += 4;
    }
    v
}

fn model_jacobian_row(p: &[f64], f: f64, row: &mut [f64]) {
    row[0] = 1.0;
    let mut i = 1;
    while i < p.len() {
        let (fr, c, a, b) = (p[i], p[i + 1], p[i + 2], p[i + 3]);
        let x = f - fr;
        let d = c * c + x * x;
        let n = a * c * c + b * c * x;
        // d/d f_res: x depends on f_res with dx/df_res = -1.
        row[i] = -((b * c) / d - 2.0 * n * x / (d * d));
        row[i + 1] = (2.0 * a * c + b * x) / d - 2.0 * n * c / (d * d);
        row[i + 2] = c * c / d;
        row[i + 3] = c * x / d;
        i += 4;
    }
}

fn rmse_of(p: &[f64], fs: &[f64], vs: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&f, &v) in fs.iter().zip(vs) {
        let r = model_eval(p, f) - v;
        acc += r * r;
    }
    (acc / fs.len() as f64).sqrt()
}

/// Solve A x = b in place by Gaussian elimination with partial pivoting.
/// The systems here are tiny (4 n_res + 1 unknowns).
fn solve_dense(a: &mut [Vec<f64>], b: &mut [f64]) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        if a[piv][col].abs() < 1e-300 {
            return Err(Error::Degenerate("singular normal equations".into()));
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let fac = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= fac * a[col][k];
            }
            b[row] -= fac * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut s = b[col];
        for k in col + 1..n {
            s -= a[col][k] * x[k];
        }
        x[col] = s / a[col][col];
    }
    Ok(x)
}

/// Nonlinear least squares for a multi-resonance rectification spectrum.
/// Initialization places resonances at the largest |d^2 V / d f^2| peaks;
/// refinement is damped Gauss-Newton with an analytic Jacobian. Stops when
/// the relative RMSE change drops below 1e-9; after 500 iterations without
/// that, fails with the best-so-far fit serialized into the error.
pub fn fit_spin_diode(freqs: &[f64], volts: &[f64], n_res: usize) -> Result<SpinDiodeFit> {
    let n = freqs.len();
    if n_res == 0 {
        return Err(Error::Config("need at least one resonance".into()));
    }
    if volts.len() != n {
        return Err(Error::Shape(format!(
            "{n} frequencies but {} voltages",
            volts.len()
        )));
    }
    if n < 4 * n_res + 1 {
        return Err(Error::Shape(format!(
            "need at least {} points for {n_res} resonances, got {n}",
            4 * n_res + 1
        )));
    }
    if !freqs.windows(2).all(|w| w[1] > w[0]) {
        return Err(Error::Domain(
            "frequencies must be strictly increasing".into(),
        ));
    }

    // Normalize so the optimizer sees O(1) numbers regardless of units.
    let f_scale = freqs[n - 1];
    let v_scale = volts
        .iter()
        .fold(0.0f64, |m, &v| m.max(v.abs()))
        .max(1e-300);
    let fs: Vec<f64> = freqs.iter().map(|&f| f / f_scale).collect();
    let vs: Vec<f64> = volts.iter().map(|&v| v / v_scale).collect();

    // Initial guesses: background from the mean, resonances at curvature
    // peaks with width 1% of the peak frequency.
    let mean_v = vs.iter().sum::<f64>() / n as f64;
    let mut curv: Vec<(f64, usize)> = (1..n - 1)
        .map(|i| ((vs[i - 1] - 2.0 * vs[i] + vs[i + 1]).abs(), i))
        .collect();
    curv.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let min_sep = (n / (4 * n_res)).max(2);
    let mut peaks: Vec<usize> = Vec::new();
    for &(_, i) in &curv {
        if peaks.iter().all(|&p| p.abs_diff(i) >= min_sep) {
            peaks.push(i);
            if peaks.len() == n_res {
                break;
            }
        }
    }
    while peaks.len() < n_res {
        // Pathologically flat data: spread the remaining guesses evenly.
        peaks.push((peaks.len() + 1) * n / (n_res + 1));
    }

    let mut p = vec![mean_v];
    for &i in &peaks {
        p.push(fs[i]); // f_res
        p.push(0.01 * fs[i].max(1e-6)); // width
        p.push(vs[i] - mean_v); // A
        p.push(0.0); // B
    }

    let n_par = p.len();
    let mut rmse = rmse_of(&p, &fs, &vs);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iters = 0;
    let mut jrow = vec![0.0; n_par];
    for it in 0..500 {
        iters = it + 1;
        // Normal equations J^T J and J^T r for the current residuals.
        let mut jtj = vec![vec![0.0; n_par]; n_par];
        let mut jtr = vec![0.0; n_par];
        for (&f, &v) in fs.iter().zip(&vs) {
            model_jacobian_row(&p, f, &mut jrow);
            let r = model_eval(&p, f) - v;
            for a in 0..n_par {
                jtr[a] += jrow[a] * r;
                for b in a..n_par {
                    jtj[a][b] += jrow[a] * jrow[b];
                }
            }
        }
        for a in 0..n_par {
            for b in 0..a {
                jtj[a][b] = jtj[b][a];
            }
        }

        // Marquardt damping; retry with stronger damping until the step
        // improves the fit.
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for d in 0..n_par {
                a[d][d] += lambda * jtj[d][d].max(1e-12);
            }
            let mut rhs = jtr.clone();
            let step = match solve_dense(&mut a, &mut rhs) {
                Ok(s) => s,
                Err(_) => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let cand: Vec<f64> = p.iter().zip(&step).map(|(&x, &s)| x - s).collect();
            let cand_rmse = rmse_of(&cand, &fs, &vs);
            if cand_rmse.is_finite() && cand_rmse <= rmse {
                let rel = if rmse > 0.0 {
                    (rmse - cand_rmse) / rmse
                } else {
                    0.0
                };
                p = cand;
                rmse = cand_rmse;
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                if rel < 1e-9 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // Damping saturated: no direction improves the fit, which is
            // as converged as floating point allows.
            converged = true;
        }
        if converged {
            break;
        }
    }

    // Back to physical units, with widths canonicalized positive
    // (flipping the width's sign flips only the antisymmetric term).
    let mut resonances = Vec::with_capacity(n_res);
    let mut i = 1;
    while i < p.len() {
        let (fr, mut c, a, mut b) = (p[i], p[i + 1], p[i + 2], p[i + 3]);
        if c < 0.0 {
            c = -c;
            b = -b;
        }
        resonances.push(Resonance {
            f_res: fr * f_scale,
            width: c * f_scale,
            a_sym: a * v_scale,
            b_asym: b * v_scale,
        });
        i += 4;
    }
    resonances.sort_by(|x, y| x.f_res.partial_cmp(&y.f_res).unwrap());
    let fit = SpinDiodeFit {
        resonances,
        offset: p[0] * v_scale,
        rmse: rmse * v_scale,
        iterations: iters,
    };
    if !converged {
        let best = serde_json::to_string(&fit).unwrap_or_default();
        return Err(Error::NonConvergence(format!(
            "spin-diode fit did not converge in 500 iterations; best-so-far: {best}"
        )));
    }
    Ok(fit)
}

// ---- piecewise-linear neuron -------------------------------------------

/// V(I) = 0 below the threshold, W*I + c at or above it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PiecewiseNeuronFit {
    /// Threshold current, A.
    pub i_th: f64,
    /// Slope above threshold, uV/A.
    pub slope: f64,
    /// Intercept above threshold, uV.
    pub intercept: f64,
    pub rmse: f64,
}

impl PiecewiseNeuronFit {
    pub fn eval(&self, i_dc: f64) -> f64 {
        if i_dc < self.i_th {
            0.0
        } else {
            self.slope * i_dc + self.intercept
        }
    }
}

/// Threshold by grid search over the data midpoints (plus the endpoints),
/// with an ordinary least-squares line above each candidate; the candidate
/// with the lowest RMSE wins, ties going to the larger threshold.
pub fn fit_piecewise_neuron(i_dc: &[f64], v_uv: &[f64]) -> Result<PiecewiseNeuronFit> {
    let n = i_dc.len();
    if n < 4 {
        return Err(Error::Shape(format!("need at least 4 points, got {n}")));
    }
    if v_uv.len() != n {
        return Err(Error::Shape(format!(
            "{n} currents but {} voltages",
            v_uv.len()
        )));
    }
    if !i_dc.windows(2).all(|w| w[1] > w[0]) {
        return Err(Error::Domain("currents must be strictly increasing".into()));
    }

    let mut candidates = Vec::with_capacity(n + 1);
    candidates.push(i_dc[0]);
    for w in i_dc.windows(2) {
        candidates.push(0.5 * (w[0] + w[1]));
    }
    candidates.push(i_dc[n - 1]);

    let mut best: Option<PiecewiseNeuronFit> = None;
    for &t in &candidates {
        let above: Vec<usize> = (0..n).filter(|&k| i_dc[k] >= t).collect();
        let (slope, intercept) = if above.len() >= 2 {
            // OLS over the above-threshold points.
            let m = above.len() as f64;
            let sx: f64 = above.iter().map(|&k| i_dc[k]).sum();
            let sy: f64 = above.iter().map(|&k| v_uv[k]).sum();
            let sxx: f64 = above.iter().map(|&k| i_dc[k] * i_dc[k]).sum();
            let sxy: f64 = above.iter().map(|&k| i_dc[k] * v_uv[k]).sum();
            let den = m * sxx - sx * sx;
            if den.abs() < 1e-300 {
                (0.0, sy / m)
            } else {
                let w = (m * sxy - sx * sy) / den;
                (w, (sy - w * sx) / m)
            }
        } else if above.len() == 1 {
            (0.0, v_uv[above[0]])
        } else {
            (0.0, 0.0)
        };
        let cand = PiecewiseNeuronFit {
            i_th: t,
            slope,
            intercept,
            rmse: 0.0,
        };
        let mut acc = 0.0;
        for k in 0..n {
            let r = cand.eval(i_dc[k]) - v_uv[k];
            acc += r * r;
        }
        let rmse = (acc / n as f64).sqrt();
        let cand = PiecewiseNeuronFit { rmse, ..cand };
        let take = match &best {
            None => true,
            // Strictly better, or an RMSE tie resolved toward the larger
            // threshold (candidates are visited in increasing order).
            Some(b) => rmse < b.rmse || (rmse - b.rmse).abs() <= 1e-12 * (1.0 + b.rmse),
        };
        if take {
            best = Some(cand);
        }
    }
    Ok(best.expect("candidate list is non-empty"))
}

/// Two-oscillator composition: total rectified voltage is the sum of the
/// two fitted single-device curves.
pub fn eval_two_neuron_model(
    fit1: &PiecewiseNeuronFit,
    fit2: &PiecewiseNeuronFit,
    i1: f64,
    i2: f64,
) -> f64 {
    fit1.eval(i1) + fit2.eval(i2)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RmseReport {
    pub rmse_uv: f64,
    /// RMSE as a percentage of the measured-data range.
    pub percent_of_range: f64,
}

pub fn rmse_report(predicted: &[f64], measured: &[f64]) -> Result<RmseReport> {
    if predicted.is_empty() || predicted.len() != measured.len() {
        return Err(Error::Shape(format!(
            "rmse over {} predictions vs {} measurements",
            predicted.len(),
            measured.len()
        )));
    }
    let n = predicted.len() as f64;
    let mse = predicted
        .iter()
        .zip(measured)
        .map(|(&p, &m)| (p - m) * (p - m))
        .sum::<f64>()
        / n;
    let lo = measured.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = measured.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return Err(Error::Degenerate(
            "measured data has zero range; percent-of-range undefined".into(),
        ));
    }
    let rmse = mse.sqrt();
    Ok(RmseReport {
        rmse_uv: rmse,
        percent_of_range: 100.0 * rmse / (hi - lo),
    })
}

/// Two-column CSV with one header row: x,y per line.
pub fn load_curve_csv<P: AsRef<Path>>(path: P) -> Result<(Vec<f64>, Vec<f64>)> {
    let f = std::fs::File::open(path)?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, line) in std::io::BufReader::new(f).lines().enumerate() {
        let row = i + 1;
        let line = line?;
        if row == 1 || line.trim().is_empty() {
            continue;
        }
        let mut it = line.trim().split(',');
        let parse = |s: Option<&str>| -> Result<f64> {
            s.ok_or_else(|| Error::Parse {
                row,
                msg: "expected two comma-separated columns".into(),
            })?
            .trim()
            .parse::<f64>()
            .map_err(|e| Error::Parse {
                row,
                msg: format!("bad number: {e}"),
            })
        };
        xs.push(parse(it.next())?);
        ys.push(parse(it.next())?);
        if it.next().is_some() {
            return Err(Error::Parse {
                row,
                msg: "expected exactly two columns".into(),
            });
        }
    }
    Ok((xs, ys))
}
