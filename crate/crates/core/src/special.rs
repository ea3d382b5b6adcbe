//! Numerical kernels for fractional-order Bessel functions and Hermite
//! polynomials.
//!
//! The mode solutions need J_{1/3} and Y_{1/3} (and their derivatives) for
//! arguments from nearly zero up to (2/3)ω³/β, so the kernel switches between
//! an ascending power series and the Hankel asymptotic expansion. The series
//! terms are accumulated in double-double arithmetic: around the switchover
//! the alternating sum cancels ~5 digits, which plain f64 terms cannot afford
//! at the 1e-10 accuracy this crate commits to.

use crate::error::{Error, Result};
use std::f64::consts::PI;

/// J_ν, Y_ν and their derivatives with respect to the argument, at one point.
#[derive(Debug, Clone, Copy)]
pub struct BesselPair {
    pub j: f64,
    pub y: f64,
    pub j_prime: f64,
    pub y_prime: f64,
}

/// Series/asymptotic switchover. Both branches agree to better than 1e-11 in
/// a window around this point (checked by the overlap test).
const SWITCHOVER: f64 = 14.0;

/// Maximum Hermite degree accepted by the public entry points.
pub const HERMITE_MAX_N: usize = 60;

// ---------------------------------------------------------------------------
// double-double helpers (Dekker/Bailey primitives, FMA-based products)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    fn from(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    fn value(self) -> f64 {
        self.hi + self.lo
    }
}

fn two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    Dd { hi: s, lo: err }
}

fn two_prod(a: f64, b: f64) -> Dd {
    let p = a * b;
    let err = a.mul_add(b, -p);
    Dd { hi: p, lo: err }
}

fn dd_add(a: Dd, b: Dd) -> Dd {
    let s = two_sum(a.hi, b.hi);
    let lo = s.lo + a.lo + b.lo;
    let t = two_sum(s.hi, lo);
    Dd { hi: t.hi, lo: t.lo }
}

fn dd_mul(a: Dd, b: Dd) -> Dd {
    let p = two_prod(a.hi, b.hi);
    let lo = p.lo + a.hi * b.lo + a.lo * b.hi;
    let t = two_sum(p.hi, lo);
    Dd { hi: t.hi, lo: t.lo }
}

fn dd_mul_f64(a: Dd, b: f64) -> Dd {
    let p = two_prod(a.hi, b);
    let lo = p.lo + a.lo * b;
    let t = two_sum(p.hi, lo);
    Dd { hi: t.hi, lo: t.lo }
}

fn dd_div(a: Dd, b: Dd) -> Dd {
    let q1 = a.hi / b.hi;
    let r = dd_add(a, dd_mul_f64(b, -q1));
    let q2 = r.hi / b.hi;
    let r2 = dd_add(r, dd_mul_f64(b, -q2));
    let q3 = r2.hi / b.hi;
    let t = two_sum(q1, q2);
    dd_add(t, Dd::from(q3))
}

// ---------------------------------------------------------------------------
// gamma (Lanczos, g = 7, positive arguments only — all the orders the Bessel
// prefactors need lie in (0, 2))
// ---------------------------------------------------------------------------

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

pub(crate) fn gamma_pos(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    if x < 0.5 {
        // reflection keeps the Lanczos argument in its accurate range
        return PI / ((PI * x).sin() * gamma_pos(1.0 - x));
    }
    let x = x - 1.0;
    let mut a = LANCZOS_COEF[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, &c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
}

// ---------------------------------------------------------------------------
// ascending series branch
// ---------------------------------------------------------------------------

/// J_ν(x) and J'_ν(x) by the ascending power series,
/// J_ν = P·Σ(−1)^k s_k and J'_ν = (P/x)·Σ(−1)^k (ν+2k) s_k with
/// P = (x/2)^ν / Γ(ν+1) and s_{k+1}/s_k = (x²/4)/((k+1)(ν+k+1)).
/// The alternating sums run in double-double so the cancellation up to the
/// switchover costs no accuracy.
fn series_j_jp(nu: f64, x: f64) -> (f64, f64) {
    let q = dd_mul_f64(two_prod(x, x), 0.25);
    let mut term = Dd::from(1.0);
    let mut sum = Dd::from(1.0);
    let mut dsum = Dd::from(nu);
    let mut k = 0usize;
    loop {
        let kf = k as f64;
        // (k+1)(ν+k+1) as an exact double-double product
        let denom = dd_mul_f64(two_sum(nu, kf + 1.0), kf + 1.0);
        term = dd_mul_f64(dd_div(dd_mul(term, q), denom), -1.0);
        sum = dd_add(sum, term);
        dsum = dd_add(dsum, dd_mul_f64(term, nu + 2.0 * (kf + 1.0)));
        k += 1;
        if term.hi.abs() < 1e-34 * sum.hi.abs().max(1.0) || k > 200 {
            break;
        }
    }
    let prefactor = (0.5 * x).powf(nu) / gamma_pos(nu + 1.0);
    (prefactor * sum.value(), prefactor / x * dsum.value())
}

fn bessel_pair_series(nu: f64, x: f64) -> BesselPair {
    let (jp, jp_d) = series_j_jp(nu, x);
    let (jn, jn_d) = series_j_jp(-nu, x);
    let (s, c) = (nu * PI).sin_cos();
    BesselPair {
        j: jp,
        y: (jp * c - jn) / s,
        j_prime: jp_d,
        y_prime: (jp_d * c - jn_d) / s,
    }
}

// ---------------------------------------------------------------------------
// Hankel asymptotic branch
// ---------------------------------------------------------------------------

/// The P, Q sums of the Hankel expansion for fixed order ν at large x.
fn hankel_pq(nu: f64, x: f64) -> (f64, f64) {
    let mu = 4.0 * nu * nu;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term = 1.0f64;
    let mut prev = f64::INFINITY;
    for k in 1..=40usize {
        let kf = k as f64;
        let odd = 2.0 * kf - 1.0;
        term *= (mu - odd * odd) / (kf * 8.0 * x);
        if term.abs() >= prev {
            break; // asymptotic tail started to grow
        }
        prev = term.abs();
        match k % 4 {
            1 => q += term,
            2 => p -= term,
            3 => q -= term,
            _ => p += term,
        }
        if term.abs() < 1e-18 {
            break;
        }
    }
    (p, q)
}

fn bessel_jy_asymptotic(nu: f64, x: f64) -> (f64, f64) {
    let (p, q) = hankel_pq(nu, x);
    let w = x - (0.5 * nu + 0.25) * PI;
    let (sw, cw) = w.sin_cos();
    let amp = (2.0 / (PI * x)).sqrt();
    (amp * (cw * p - sw * q), amp * (sw * p + cw * q))
}

fn bessel_pair_asymptotic(nu: f64, x: f64) -> BesselPair {
    let (j, y) = bessel_jy_asymptotic(nu, x);
    let (jm, ym) = bessel_jy_asymptotic(nu - 1.0, x);
    BesselPair {
        j,
        y,
        j_prime: jm - (nu / x) * j,
        y_prime: ym - (nu / x) * y,
    }
}

// ---------------------------------------------------------------------------
// public entry points
// ---------------------------------------------------------------------------

/// J_ν, Y_ν and derivatives for fractional order ν ∈ (0,1), x > 0.
pub fn bessel_pair(order: f64, x: f64) -> Result<BesselPair> {
    if !(order > 0.0 && order < 1.0) {
        return Err(Error::Domain(format!(
            "bessel_pair: order must lie in (0,1), got {order}"
        )));
    }
    if !(x > 0.0) {
        return Err(Error::Domain(format!(
            "bessel_pair: argument must be positive, got {x}"
        )));
    }
    let pair = if x < SWITCHOVER {
        bessel_pair_series(order, x)
    } else {
        bessel_pair_asymptotic(order, x)
    };
    // Wronskian self-check: catches a failed series/asymptotic switchover.
    let expected = 2.0 / (PI * x);
    let w = pair.j * pair.y_prime - pair.y * pair.j_prime;
    if !w.is_finite() || ((w - expected) / expected).abs() > 1e-8 {
        return Err(Error::Numerical(format!(
            "bessel_pair: precision loss at x = {x} (Wronskian residual {:e})",
            (w - expected) / expected
        )));
    }
    Ok(pair)
}

/// Physicists' Hermite polynomial H_n(u).
pub fn hermite(n: usize, u: f64) -> Result<f64> {
    if n > HERMITE_MAX_N {
        return Err(Error::Domain(format!(
            "hermite: n = {n} exceeds the overflow guard {HERMITE_MAX_N}"
        )));
    }
    let mut values = [0.0; HERMITE_MAX_N + 1];
    hermite_all(n, u, &mut values);
    Ok(values[n])
}

/// H'_n(u) = 2n·H_{n−1}(u).
pub fn hermite_deriv(n: usize, u: f64) -> Result<f64> {
    if n > HERMITE_MAX_N {
        return Err(Error::Domain(format!(
            "hermite_deriv: n = {n} exceeds the overflow guard {HERMITE_MAX_N}"
        )));
    }
    if n == 0 {
        return Ok(0.0);
    }
    Ok(2.0 * n as f64 * hermite(n - 1, u)?)
}

/// Fills `out[0..=n_max]` with H_0(u) .. H_{n_max}(u) by the three-term
/// recurrence. Hot-path helper; the caller guarantees `n_max < out.len()`.
#[inline]
pub(crate) fn hermite_all(n_max: usize, u: f64, out: &mut [f64]) {
    out[0] = 1.0;
    if n_max == 0 {
        return;
    }
    out[1] = 2.0 * u;
    for n in 1..n_max {
        out[n + 1] = 2.0 * u * out[n] - 2.0 * n as f64 * out[n - 1];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_base_cases() {
        assert_eq!(hermite(0, 3.7).unwrap(), 1.0);
        assert_eq!(hermite(1, 2.0).unwrap(), 4.0);
        // H_3(u) = 8u³ − 12u
        assert_eq!(hermite(3, 1.0).unwrap(), -4.0);
    }

    #[test]
    fn hermite_deriv_base_cases() {
        assert_eq!(hermite_deriv(0, 5.0).unwrap(), 0.0);
        assert_eq!(hermite_deriv(1, 5.0).unwrap(), 2.0);
        // 2·3·H_2(1) = 6·(4−2) = 12
        assert_eq!(hermite_deriv(3, 1.0).unwrap(), 12.0);
    }

    #[test]
    fn hermite_guard() {
        assert!(hermite(HERMITE_MAX_N + 1, 0.0).is_err());
        assert!(hermite_deriv(HERMITE_MAX_N + 1, 0.0).is_err());
    }

    #[test]
    fn hermite_ode_identity() {
        // H''_n − 2u H'_n + 2n H_n = 0 with the recurrence forms:
        // H''_n = 2n H'_{n−1} = 4n(n−1) H_{n−2}.
        let mut rng = 0x9e3779b97f4a7c15u64;
        let mut next = || {
            rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (rng >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..100 {
            let n = 2 + (next() * 20.0) as usize;
            let u = 8.0 * next() - 4.0;
            let h_n = hermite(n, u).unwrap();
            let h_d = hermite_deriv(n, u).unwrap();
            let h_dd = 4.0 * (n * (n - 1)) as f64 * hermite(n - 2, u).unwrap();
            let resid = h_dd - 2.0 * u * h_d + 2.0 * n as f64 * h_n;
            let scale = h_n.abs().max(h_d.abs()).max(1.0);
            assert!(resid.abs() <= 1e-10 * scale, "n={n} u={u} resid={resid}");
        }
    }

    #[test]
    fn hermite_deriv_matches_finite_differences() {
        let step = 1e-5;
        for n in 1..=8usize {
            for &u in &[-2.3, -0.7, 0.4, 1.9, 3.1] {
                let d = hermite_deriv(n, u).unwrap();
                let fd =
                    (hermite(n, u + step).unwrap() - hermite(n, u - step).unwrap()) / (2.0 * step);
                assert!(
                    ((d - fd) / d.abs().max(1.0)).abs() <= 1e-6,
                    "n={n} u={u} d={d} fd={fd}"
                );
            }
        }
    }

    #[test]
    fn bessel_rejects_bad_inputs() {
        assert!(bessel_pair(1.0 / 3.0, 0.0).is_err());
        assert!(bessel_pair(1.0 / 3.0, -2.0).is_err());
        assert!(bessel_pair(1.5, 1.0).is_err());
        assert!(bessel_pair(0.0, 1.0).is_err());
    }

    #[test]
    fn bessel_small_argument_power_law() {
        // J_{1/3}(x) → (x/2)^{1/3}/Γ(4/3), Y → −∞ as x → 0⁺.
        let nu = 1.0 / 3.0;
        let x = 1e-8;
        let pair = bessel_pair(nu, x).unwrap();
        let leading = (0.5 * x).powf(nu) / gamma_pos(nu + 1.0);
        assert!(((pair.j - leading) / leading).abs() < 1e-10);
        assert!(pair.y < -1e2);
    }

    #[test]
    fn bessel_wronskian_on_log_grid() {
        let nu = 1.0 / 3.0;
        let n = 400;
        let (lo, hi) = (0.05f64, 500.0f64);
        for i in 0..=n {
            let x = lo * (hi / lo).powf(i as f64 / n as f64);
            let p = bessel_pair(nu, x).unwrap();
            let expected = 2.0 / (PI * x);
            let resid = (p.j * p.y_prime - p.y * p.j_prime - expected).abs();
            assert!(resid <= 1e-10 * expected, "x={x} resid={resid:e}");
        }
    }

    #[test]
    fn bessel_derivative_recurrence() {
        // J'_ν = J_{ν−1} − (ν/x) J_ν, with J_{ν−1} from the ν−1 series.
        let nu = 1.0 / 3.0;
        for &x in &[0.3, 1.0, 2.7, 6.0, 11.0] {
            let p = bessel_pair(nu, x).unwrap();
            let (jm, _) = series_j_jp(nu - 1.0, x);
            let rhs = jm - nu / x * p.j;
            assert!(
                (p.j_prime - rhs).abs() <= 1e-12 * rhs.abs().max(1.0),
                "x={x}"
            );
        }
    }

    #[test]
    fn gamma_reference_points() {
        assert!((gamma_pos(1.0) - 1.0).abs() < 1e-14);
        assert!((gamma_pos(0.5) - PI.sqrt()).abs() < 1e-14);
        assert!((gamma_pos(4.0 / 3.0) - 0.892_979_511_569_249_2).abs() < 1e-14);
        assert!((gamma_pos(2.0 / 3.0) - 1.354_117_939_426_400_4).abs() < 1e-14);
    }
}
