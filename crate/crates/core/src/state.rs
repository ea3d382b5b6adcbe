//! The full two-dimensional superposition Ψ(x_a, x_b, t): random initial
//! states, physical ↔ normal coordinate conversion, and evaluation of Ψ, its
//! spatial gradient and the Born density.

use crate::error::{Error, Result};
use crate::mode::{psi_dx_in_frame, psi_in_frame, ModeFrame, ModeSolution};
use crate::special::hermite_all;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{PI, SQRT_2};

/// Largest quantum number the batched evaluator supports. Shell filling up to
/// M = 15 never exceeds n = 4; the cap only guards hand-built states.
pub const EVAL_MAX_N: usize = 15;

/// Maximum number of superposed modes (shells 0..4 complete).
pub const MAX_MODES: usize = 15;

/// A point in the physical oscillator coordinates.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PointAb {
    pub xa: f64,
    pub xb: f64,
}

/// A point in the decoupled normal coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointNormal {
    pub x1: f64,
    pub x2: f64,
}

/// x₁ = (x_a + x_b)/√2, x₂ = (x_a − x_b)/√2.
#[inline]
pub fn to_normal(p: PointAb) -> PointNormal {
    PointNormal {
        x1: (p.xa + p.xb) / SQRT_2,
        x2: (p.xa - p.xb) / SQRT_2,
    }
}

/// x_a = (x₁ + x₂)/√2, x_b = (x₁ − x₂)/√2.
#[inline]
pub fn from_normal(p: PointNormal) -> PointAb {
    PointAb {
        xa: (p.x1 + p.x2) / SQRT_2,
        xb: (p.x1 - p.x2) / SQRT_2,
    }
}

/// One superposed energy mode: quantum numbers for both normal branches and
/// the phase θ ∈ [0,1) entering the coefficient exp(2πiθ)/√M.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Mode {
    pub n1: u32,
    pub n2: u32,
    pub theta: f64,
}

/// An evenly weighted superposition of M energy modes.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SuperpositionState {
    pub modes: Vec<Mode>,
    pub seed: u64,
}

impl SuperpositionState {
    /// Draws a random M-mode state: shells s = n₁+n₂ = 0, 1, 2, … fill
    /// completely in increasing order; within the topmost (possibly partial)
    /// shell the occupied pairs are chosen uniformly without replacement.
    /// Phases are independent and uniform on [0,1). Deterministic in `seed`.
    pub fn generate(m: usize, seed: u64) -> Result<Self> {
        if m < 1 || m > MAX_MODES {
            return Err(Error::Domain(format!(
                "mode count M = {m} outside [1, {MAX_MODES}]"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pairs: Vec<(u32, u32)> = Vec::with_capacity(m);
        let mut shell = 0u32;
        let mut remaining = m;
        loop {
            let size = shell as usize + 1;
            if remaining >= size {
                pairs.extend((0..=shell).map(|n1| (n1, shell - n1)));
                remaining -= size;
                if remaining == 0 {
                    break;
                }
                shell += 1;
            } else {
                // partial Fisher–Yates over the topmost shell
                let mut candidates: Vec<(u32, u32)> =
                    (0..=shell).map(|n1| (n1, shell - n1)).collect();
                for i in 0..remaining {
                    let j = rng.random_range(i..candidates.len());
                    candidates.swap(i, j);
                }
                let mut chosen: Vec<(u32, u32)> = candidates[..remaining].to_vec();
                chosen.sort_unstable();
                pairs.extend(chosen);
                break;
            }
        }
        let modes = pairs
            .into_iter()
            .map(|(n1, n2)| Mode {
                n1,
                n2,
                theta: rng.random::<f64>(),
            })
            .collect();
        Ok(SuperpositionState { modes, seed })
    }

    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }

    /// Plain-text preset record: M, seed and the full-precision mode list.
    pub fn to_preset_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("modes = {}\n", self.modes.len()));
        out.push_str(&format!("seed = {}\n", self.seed));
        for m in &self.modes {
            out.push_str(&format!("mode = {} {} {}\n", m.n1, m.n2, m.theta));
        }
        out
    }

    pub fn from_preset_text(text: &str) -> Result<Self> {
        let mut seed = None;
        let mut count = None;
        let mut modes = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("bad preset line: {line}")))?;
            let value = value.trim();
            match key.trim() {
                "modes" => count = Some(value.parse::<usize>().map_err(bad_preset)?),
                "seed" => seed = Some(value.parse::<u64>().map_err(bad_preset)?),
                "mode" => {
                    let fields: Vec<&str> = value.split_whitespace().collect();
                    if fields.len() != 3 {
                        return Err(Error::Config(format!("bad mode entry: {value}")));
                    }
                    modes.push(Mode {
                        n1: fields[0].parse().map_err(bad_preset)?,
                        n2: fields[1].parse().map_err(bad_preset)?,
                        theta: fields[2].parse().map_err(bad_preset)?,
                    });
                }
                other => return Err(Error::Config(format!("unknown preset key: {other}"))),
            }
        }
        let state = SuperpositionState {
            modes,
            seed: seed.ok_or_else(|| Error::Config("preset missing seed".into()))?,
        };
        if Some(state.modes.len()) != count {
            return Err(Error::Config("preset mode count mismatch".into()));
        }
        Ok(state)
    }
}

fn bad_preset<E: std::fmt::Display>(e: E) -> Error {
    Error::Config(format!("bad preset value: {e}"))
}

/// Ψ, ∂Ψ/∂x₁ and ∂Ψ/∂x₂ at one configuration point.
#[derive(Debug, Clone, Copy)]
pub struct PsiPoint {
    pub psi: Complex64,
    pub d1: Complex64,
    pub d2: Complex64,
}

/// Batched evaluator for a fixed state and pair of mode solutions. The mode
/// factors ψ_n(x_r) are computed once per distinct n and branch, then the M
/// products are summed; this is the inner loop of every trajectory step.
pub struct StateEvaluator<'a> {
    sol1: &'a ModeSolution,
    sol2: &'a ModeSolution,
    coeffs: Vec<Complex64>,
    pairs: Vec<(usize, usize)>,
    n_max1: usize,
    n_max2: usize,
}

struct BranchArrays {
    psi: [Complex64; EVAL_MAX_N + 1],
    dpsi: [Complex64; EVAL_MAX_N + 1],
}

fn branch_arrays(frame: &ModeFrame, x: f64, n_max: usize) -> BranchArrays {
    let g = frame.g_minus;
    let wi = frame.omega_inv;
    let scale = (wi / g).sqrt();
    let u = x * scale;
    let mut h = [0.0; EVAL_MAX_N + 2];
    hermite_all(n_max, u, &mut h);
    let norm = (wi / (PI * g)).powf(0.25);
    let gauss_mag = (-x * x * wi / (2.0 * g)).exp();
    // R_n = norm·|gauss|·e^{i(arg_gauss − (n+1/2)·phase)}/√(2ⁿn!)
    let base_arg = -x * x * frame.g_zero / (2.0 * g) - 0.5 * frame.phase;
    let (s0, c0) = base_arg.sin_cos();
    let mut r = Complex64::new(norm * gauss_mag * c0, norm * gauss_mag * s0);
    let (sw, cw) = frame.phase.sin_cos();
    let w = Complex64::new(cw, -sw);
    let gauss_factor = Complex64::new(wi, frame.g_zero) * (-x / g);
    let mut out = BranchArrays {
        psi: [Complex64::new(0.0, 0.0); EVAL_MAX_N + 1],
        dpsi: [Complex64::new(0.0, 0.0); EVAL_MAX_N + 1],
    };
    for n in 0..=n_max {
        out.psi[n] = r * h[n];
        let h_prev = if n == 0 { 0.0 } else { h[n - 1] };
        out.dpsi[n] = r * (gauss_factor * h[n] + 2.0 * n as f64 * h_prev * scale);
        r = r * w / (2.0 * (n as f64 + 1.0)).sqrt();
    }
    out
}

impl<'a> StateEvaluator<'a> {
    pub fn new(
        state: &SuperpositionState,
        sol1: &'a ModeSolution,
        sol2: &'a ModeSolution,
    ) -> Result<Self> {
        if state.modes.is_empty() {
            return Err(Error::Domain("state has no modes".into()));
        }
        let m = state.modes.len() as f64;
        let mut pairs = Vec::with_capacity(state.modes.len());
        let mut coeffs = Vec::with_capacity(state.modes.len());
        let (mut n_max1, mut n_max2) = (0usize, 0usize);
        for mode in &state.modes {
            let (n1, n2) = (mode.n1 as usize, mode.n2 as usize);
            if n1 > EVAL_MAX_N || n2 > EVAL_MAX_N {
                return Err(Error::Domain(format!(
                    "mode ({}, {}) exceeds the evaluator cap n ≤ {EVAL_MAX_N}",
                    mode.n1, mode.n2
                )));
            }
            if pairs.contains(&(n1, n2)) {
                return Err(Error::Domain(format!(
                    "duplicate mode ({}, {}) in state",
                    mode.n1, mode.n2
                )));
            }
            n_max1 = n_max1.max(n1);
            n_max2 = n_max2.max(n2);
            pairs.push((n1, n2));
            let arg = 2.0 * PI * mode.theta;
            coeffs.push(Complex64::new(arg.cos(), arg.sin()) / m.sqrt());
        }
        Ok(StateEvaluator {
            sol1,
            sol2,
            coeffs,
            pairs,
            n_max1,
            n_max2,
        })
    }

    /// Ψ and its normal-coordinate gradient at (p, t).
    pub fn eval(&self, p: PointNormal, t: f64) -> Result<PsiPoint> {
        let frame1 = self.sol1.frame(t)?;
        let frame2 = self.sol2.frame(t)?;
        Ok(self.eval_in_frames(&frame1, &frame2, p))
    }

    /// Same as `eval` with the per-time frames already fetched (grid loops).
    pub fn eval_in_frames(
        &self,
        frame1: &ModeFrame,
        frame2: &ModeFrame,
        p: PointNormal,
    ) -> PsiPoint {
        let b1 = branch_arrays(frame1, p.x1, self.n_max1);
        let b2 = branch_arrays(frame2, p.x2, self.n_max2);
        let mut psi = Complex64::new(0.0, 0.0);
        let mut d1 = Complex64::new(0.0, 0.0);
        let mut d2 = Complex64::new(0.0, 0.0);
        for (coeff, &(n1, n2)) in self.coeffs.iter().zip(&self.pairs) {
            psi += coeff * b1.psi[n1] * b2.psi[n2];
            d1 += coeff * b1.dpsi[n1] * b2.psi[n2];
            d2 += coeff * b1.psi[n1] * b2.dpsi[n2];
        }
        PsiPoint { psi, d1, d2 }
    }

    pub fn frames(&self, t: f64) -> Result<(ModeFrame, ModeFrame)> {
        Ok((self.sol1.frame(t)?, self.sol2.frame(t)?))
    }
}

/// Ψ(p, t) = Σ c_{n₁,n₂} ψ_{n₁}(x₁,t) ψ_{n₂}(x₂,t).
pub fn psi_total(
    state: &SuperpositionState,
    sol1: &ModeSolution,
    sol2: &ModeSolution,
    p: PointNormal,
    t: f64,
) -> Result<Complex64> {
    Ok(StateEvaluator::new(state, sol1, sol2)?.eval(p, t)?.psi)
}

/// Analytic (∂Ψ/∂x₁, ∂Ψ/∂x₂).
pub fn psi_total_grad(
    state: &SuperpositionState,
    sol1: &ModeSolution,
    sol2: &ModeSolution,
    p: PointNormal,
    t: f64,
) -> Result<(Complex64, Complex64)> {
    let out = StateEvaluator::new(state, sol1, sol2)?.eval(p, t)?;
    Ok((out.d1, out.d2))
}

/// |Ψ|² at a physical-coordinate point.
pub fn born_density(
    state: &SuperpositionState,
    sol1: &ModeSolution,
    sol2: &ModeSolution,
    p: PointAb,
    t: f64,
) -> Result<f64> {
    Ok(psi_total(state, sol1, sol2, to_normal(p), t)?.norm_sqr())
}

/// Slow reference for tests: ψ factors straight from the mode solutions.
#[doc(hidden)]
pub fn psi_total_reference(
    state: &SuperpositionState,
    sol1: &ModeSolution,
    sol2: &ModeSolution,
    p: PointNormal,
    t: f64,
) -> Result<Complex64> {
    let m = state.modes.len() as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    for mode in &state.modes {
        let arg = 2.0 * PI * mode.theta;
        let coeff = Complex64::new(arg.cos(), arg.sin()) / m.sqrt();
        let f1 = sol1.frame(t)?;
        let f2 = sol2.frame(t)?;
        acc += coeff
            * psi_in_frame(&f1, mode.n1 as usize, p.x1)?
            * psi_in_frame(&f2, mode.n2 as usize, p.x2)?;
    }
    Ok(acc)
}

/// Slow reference gradient for tests.
#[doc(hidden)]
pub fn psi_total_grad_reference(
    state: &SuperpositionState,
    sol1: &ModeSolution,
    sol2: &ModeSolution,
    p: PointNormal,
    t: f64,
) -> Result<(Complex64, Complex64)> {
    let m = state.modes.len() as f64;
    let mut acc1 = Complex64::new(0.0, 0.0);
    let mut acc2 = Complex64::new(0.0, 0.0);
    for mode in &state.modes {
        let arg = 2.0 * PI * mode.theta;
        let coeff = Complex64::new(arg.cos(), arg.sin()) / m.sqrt();
        let f1 = sol1.frame(t)?;
        let f2 = sol2.frame(t)?;
        let (n1, n2) = (mode.n1 as usize, mode.n2 as usize);
        acc1 += coeff * psi_dx_in_frame(&f1, n1, p.x1)? * psi_in_frame(&f2, n2, p.x2)?;
        acc2 += coeff * psi_in_frame(&f1, n1, p.x1)? * psi_dx_in_frame(&f2, n2, p.x2)?;
    }
    Ok((acc1, acc2))
}
