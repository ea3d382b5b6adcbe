//! Least-squares fits of H̄(t) and of τ against ε, M and β, with linearized
//! 95% confidence intervals.
//!
//! The exponential families use damped Gauss–Newton (step halving on the
//! residual norm); the 1/ε line and the degree-5 polynomial are linear and
//! solved directly by QR. Intervals come from the standard linearized
//! covariance s²(JᵀJ)⁻¹ and the Student-t quantile.

use crate::error::{Error, Result};
use crate::linalg::{lstsq, normal_matrix_inverse};
use statrs::distribution::{ContinuousCDF, StudentsT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum FitFamily {
    /// H(t) = H₀·exp(−t/τ); params [H₀, τ].
    ExpDecay,
    /// τ(ε) = a/ε + b; params [a, b].
    InvEpsilon,
    /// τ(M) = a·exp(−M/b) + c; params [a, b, c].
    ExpModes,
    /// τ(β) = a₀ + a₁β + … + a₅β⁵; params [a₀ … a₅].
    Poly5,
}

impl FitFamily {
    pub fn name(&self) -> &'static str {
        match self {
            FitFamily::ExpDecay => "exp_decay",
            FitFamily::InvEpsilon => "inv_epsilon",
            FitFamily::ExpModes => "exp_modes",
            FitFamily::Poly5 => "poly5",
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct FitResult {
    pub family: FitFamily,
    pub params: Vec<f64>,
    /// Per-parameter 95% half-widths; infinite when JᵀJ is singular.
    pub ci95: Vec<f64>,
    pub r_squared: f64,
    pub residual_norm: f64,
    pub converged: bool,
    pub n_points: usize,
}

impl FitResult {
    pub fn report(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("family = {}\n", self.family.name()));
        out.push_str(&format!("n_points = {}\n", self.n_points));
        out.push_str(&format!("converged = {}\n", self.converged));
        for (i, (p, ci)) in self.params.iter().zip(&self.ci95).enumerate() {
            out.push_str(&format!("p{i} = {p} +- {ci}\n"));
        }
        out.push_str(&format!("r_squared = {}\n", self.r_squared));
        out.push_str(&format!("residual_norm = {}\n", self.residual_norm));
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,value,ci95\n");
        for (i, (p, ci)) in self.params.iter().zip(&self.ci95).enumerate() {
            out.push_str(&format!("{i},{p},{ci}\n"));
        }
        out
    }
}

fn r_squared(values: &[f64], residuals: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss_tot: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    if ss_tot <= f64::MIN_POSITIVE {
        if ss_res <= 1e-20 {
            1.0
        } else {
            f64::NEG_INFINITY
        }
    } else {
        1.0 - ss_res / ss_tot
    }
}

/// 95% half-widths from the linearized covariance s²(JᵀJ)⁻¹ at the solution.
/// Entries are infinite when the normal matrix is singular.
pub fn confidence_intervals(jacobian: &[Vec<f64>], residuals: &[f64]) -> Result<Vec<f64>> {
    let n = jacobian.len();
    let p = if n == 0 { 0 } else { jacobian[0].len() };
    if n < p + 1 {
        return Err(Error::Domain(format!(
            "confidence intervals need at least {} points, got {n}",
            p + 1
        )));
    }
    let dof = (n - p) as f64;
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    let s2 = ss_res / dof;
    let tq = StudentsT::new(0.0, 1.0, dof)
        .map_err(|e| Error::Numerical(format!("t-distribution: {e}")))?
        .inverse_cdf(0.975);
    match normal_matrix_inverse(jacobian) {
        Some(inv) => Ok((0..p)
            .map(|j| {
                let var = s2 * inv[j][j];
                if var >= 0.0 {
                    tq * var.sqrt()
                } else {
                    0.0
                }
            })
            .collect()),
        None => Ok(vec![f64::INFINITY; p]), // unbounded-interval flag
    }
}

/// Damped Gauss–Newton on a residual/Jacobian model. Converges when the
/// gradient norm drops to 1e-10·(1 + SSR).
fn gauss_newton<F>(model: F, mut params: Vec<f64>, max_iter: usize) -> (Vec<f64>, bool)
where
    F: Fn(&[f64]) -> (Vec<f64>, Vec<Vec<f64>>),
{
    let ssr = |r: &[f64]| r.iter().map(|x| x * x).sum::<f64>();
    let mut converged = false;
    for _ in 0..max_iter {
        let (resid, jac) = model(&params);
        let current = ssr(&resid);
        let p = params.len();
        // gradient of ½SSR is Jᵀr
        let grad: Vec<f64> = (0..p)
            .map(|j| jac.iter().zip(&resid).map(|(row, r)| row[j] * r).sum())
            .collect();
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm <= 1e-10 * (1.0 + current) {
            converged = true;
            break;
        }
        let delta = match lstsq(&jac, &resid) {
            Ok(d) => d,
            Err(_) => break,
        };
        // error-norm decrease acceptance with step halving
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<f64> = params
                .iter()
                .zip(&delta)
                .map(|(p, d)| p - alpha * d)
                .collect();
            let (r_trial, _) = model(&trial);
            if ssr(&r_trial) < current {
                params = trial;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            // no descent direction left at this scale
            converged = gnorm <= 1e-6 * (1.0 + current);
            break;
        }
    }
    (params, converged)
}

fn finish_fit(
    family: FitFamily,
    params: Vec<f64>,
    converged: bool,
    values: &[f64],
    residuals: Vec<f64>,
    jacobian: Vec<Vec<f64>>,
) -> Result<FitResult> {
    // zero residual degrees of freedom: intervals are undetermined
    let ci95 = if values.len() < params.len() + 1 {
        vec![f64::INFINITY; params.len()]
    } else {
        confidence_intervals(&jacobian, &residuals)?
    };
    Ok(FitResult {
        family,
        n_points: values.len(),
        r_squared: r_squared(values, &residuals),
        residual_norm: residuals.iter().map(|r| r * r).sum::<f64>().sqrt(),
        params,
        ci95,
        converged,
    })
}

/// Fits H(t) = H₀ exp(−t/τ). The initial guess comes from the log-linear
/// regression of the strictly positive values.
pub fn fit_exp_decay(times: &[f64], h_values: &[f64]) -> Result<FitResult> {
    if times.len() != h_values.len() || times.len() < 5 {
        return Err(Error::Domain(format!(
            "exp-decay fit needs at least 5 points, got {}",
            times.len()
        )));
    }
    // log-linear guess on positive values
    let pos: Vec<(f64, f64)> = times
        .iter()
        .zip(h_values)
        .filter(|(_, &h)| h > 0.0)
        .map(|(&t, &h)| (t, h.ln()))
        .collect();
    if pos.len() < 3 {
        return Err(Error::NoDecay("fewer than 3 positive values".into()));
    }
    let n = pos.len() as f64;
    let (st, sl) = pos.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mt, ml) = (st / n, sl / n);
    let cov: f64 = pos.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
    let var: f64 = pos.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
    let slope = cov / var;
    if !(slope < -1e-12) {
        return Err(Error::NoDecay(format!(
            "log-linear slope {slope:e} shows no decay"
        )));
    }
    let tau0 = -1.0 / slope;
    let h00 = (ml - slope * mt).exp();

    let model = |p: &[f64]| -> (Vec<f64>, Vec<Vec<f64>>) {
        let (h0, tau) = (p[0], p[1]);
        let mut resid = Vec::with_capacity(times.len());
        let mut jac = Vec::with_capacity(times.len());
        for (&t, &h) in times.iter().zip(h_values) {
            let e = (-t / tau).exp();
            resid.push(h0 * e - h);
            jac.push(vec![e, h0 * e * t / (tau * tau)]);
        }
        (resid, jac)
    };
    let (params, converged) = gauss_newton(model, vec![h00, tau0], 200);
    if !converged {
        return Err(Error::NonConvergence(format!(
            "exp-decay fit stalled at H0={}, tau={}",
            params[0], params[1]
        )));
    }
    let (resid, jac) = model(&params);
    finish_fit(FitFamily::ExpDecay, params, converged, h_values, resid, jac)
}

/// Drops (t, H) points at or below the measured noise floor before fitting.
pub fn exclude_below_floor(
    times: &[f64],
    h_values: &[f64],
    floor: Option<f64>,
) -> (Vec<f64>, Vec<f64>) {
    match floor {
        None => (times.to_vec(), h_values.to_vec()),
        Some(f) => times
            .iter()
            .zip(h_values)
            .filter(|(_, &h)| h > f)
            .map(|(&t, &h)| (t, h))
            .unzip(),
    }
}

/// Fits τ = a/ε + b by linear least squares.
pub fn fit_tau_epsilon(eps_values: &[f64], tau_values: &[f64]) -> Result<FitResult> {
    let distinct = distinct_count(eps_values);
    if eps_values.len() != tau_values.len() || distinct < 3 {
        return Err(Error::Domain(format!(
            "τ(ε) fit needs at least 3 distinct ε, got {distinct}"
        )));
    }
    let jac: Vec<Vec<f64>> = eps_values.iter().map(|&e| vec![1.0 / e, 1.0]).collect();
    let params = lstsq(&jac, tau_values)?;
    let resid: Vec<f64> = jac
        .iter()
        .zip(tau_values)
        .map(|(row, &y)| row[0] * params[0] + row[1] * params[1] - y)
        .collect();
    finish_fit(FitFamily::InvEpsilon, params, true, tau_values, resid, jac)
}

/// Fits τ = a·exp(−M/b) + c by Gauss–Newton.
pub fn fit_tau_modes(m_values: &[f64], tau_values: &[f64]) -> Result<FitResult> {
    let distinct = distinct_count(m_values);
    if m_values.len() != tau_values.len() || distinct < 4 {
        return Err(Error::Domain(format!(
            "τ(M) fit needs at least 4 distinct M, got {distinct}"
        )));
    }
    let tau_min = tau_values.iter().copied().fold(f64::INFINITY, f64::min);
    let tau_max = tau_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // guess b from the log-slope of (τ − min τ) over M, c from min τ
    let shifted: Vec<(f64, f64)> = m_values
        .iter()
        .zip(tau_values)
        .filter(|(_, &t)| t > tau_min + 1e-12 * tau_min.abs().max(1.0))
        .map(|(&m, &t)| (m, (t - tau_min).ln()))
        .collect();
    let b0 = if shifted.len() >= 2 {
        let n = shifted.len() as f64;
        let (sm, sl) = shifted.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
        let (mm, ml) = (sm / n, sl / n);
        let cov: f64 = shifted.iter().map(|p| (p.0 - mm) * (p.1 - ml)).sum();
        let var: f64 = shifted.iter().map(|p| (p.0 - mm) * (p.0 - mm)).sum();
        let slope = cov / var;
        if slope < -1e-12 {
            -1.0 / slope
        } else {
            m_values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        }
    } else {
        4.0
    };
    let m_lo = m_values.iter().copied().fold(f64::INFINITY, f64::min);
    let a0 = (tau_max - tau_min) * (m_lo / b0).exp();
    let model = |p: &[f64]| -> (Vec<f64>, Vec<Vec<f64>>) {
        let (a, b, c) = (p[0], p[1], p[2]);
        let mut resid = Vec::with_capacity(m_values.len());
        let mut jac = Vec::with_capacity(m_values.len());
        for (&m, &tau) in m_values.iter().zip(tau_values) {
            let e = (-m / b).exp();
            resid.push(a * e + c - tau);
            jac.push(vec![e, a * e * m / (b * b), 1.0]);
        }
        (resid, jac)
    };
    let (params, converged) = gauss_newton(model, vec![a0, b0, tau_min], 200);
    let (resid, jac) = model(&params);
    finish_fit(FitFamily::ExpModes, params, converged, tau_values, resid, jac)
}

/// Fits the degree-5 polynomial in β by linear least squares with column
/// scaling for conditioning.
pub fn fit_tau_beta(beta_values: &[f64], tau_values: &[f64]) -> Result<FitResult> {
    let distinct = distinct_count(beta_values);
    if beta_values.len() != tau_values.len() || distinct < 6 {
        return Err(Error::Domain(format!(
            "τ(β) fit needs at least 6 distinct β, got {distinct}"
        )));
    }
    let scale = beta_values
        .iter()
        .map(|b| b.abs())
        .fold(f64::NEG_INFINITY, f64::max);
    if !(scale > 0.0) {
        return Err(Error::Domain("τ(β) fit needs a nonzero β range".into()));
    }
    let jac_scaled: Vec<Vec<f64>> = beta_values
        .iter()
        .map(|&b| {
            let u = b / scale;
            (0..6).map(|k| u.powi(k as i32)).collect()
        })
        .collect();
    let scaled = lstsq(&jac_scaled, tau_values)?;
    let params: Vec<f64> = scaled
        .iter()
        .enumerate()
        .map(|(k, &c)| c / scale.powi(k as i32))
        .collect();
    let resid: Vec<f64> = beta_values
        .iter()
        .zip(tau_values)
        .map(|(&b, &y)| {
            params
                .iter()
                .enumerate()
                .map(|(k, &c)| c * b.powi(k as i32))
                .sum::<f64>()
                - y
        })
        .collect();
    // intervals in the unscaled basis
    let jac: Vec<Vec<f64>> = beta_values
        .iter()
        .map(|&b| (0..6).map(|k| b.powi(k as i32)).collect())
        .collect();
    finish_fit(FitFamily::Poly5, params, true, tau_values, resid, jac)
}

pub fn eval_poly(params: &[f64], x: f64) -> f64 {
    params
        .iter()
        .rev()
        .fold(0.0, |acc, &c| acc * x + c)
}

fn distinct_count(values: &[f64]) -> usize {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    sorted.len()
}
