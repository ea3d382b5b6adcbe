//! De Broglie velocity field in normal coordinates and trajectory integration
//! with the adaptive tolerance-ladder scheme.
//!
//! Each trajectory solves ẋ_r = Im(∂_rΨ/Ψ)/m with an explicit Runge–Kutta
//! method of order 8 (the Dormand–Prince 8(5,3) pair, coefficients from the
//! Hairer–Nørsett–Wanner tables). A trajectory is integrated once at absolute
//! tolerance τ and once at τ/10; if the stored positions differ by more than
//! the cutoff δ the pair descends one decade, down to the tolerance floor.

use crate::error::{Error, Result};
use crate::mode::ModeSolution;
use crate::state::{from_normal, to_normal, PointAb, PointNormal, StateEvaluator, SuperpositionState};

/// |Ψ|² below this is treated as a node; the step is rejected and retried.
const DENSITY_FLOOR: f64 = 1e-28;
/// Smallest step the node-handling policy will retry with.
const MIN_STEP: f64 = 1e-12;

/// Tolerance ladder and step-control settings.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct IntegratorConfig {
    /// Absolute tolerance of the first ladder rung.
    pub tol_start: f64,
    /// The ladder stops descending at this tolerance.
    pub tol_floor: f64,
    /// Position-difference cutoff δ between consecutive rungs.
    pub ladder_cutoff: f64,
    /// Time step cap.
    pub max_step: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            tol_start: 1e-5,
            tol_floor: 1e-15,
            ladder_cutoff: 0.0025,
            max_step: 0.5,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_floor > 0.0 && self.tol_floor <= self.tol_start) {
            return Err(Error::Config(format!(
                "tolerance ladder requires 0 < tol_floor ≤ tol_start (got {} > {})",
                self.tol_floor, self.tol_start
            )));
        }
        if !(self.ladder_cutoff > 0.0) {
            return Err(Error::Config("ladder cutoff δ must be positive".into()));
        }
        if !(self.max_step > 0.0) {
            return Err(Error::Config("max_step must be positive".into()));
        }
        Ok(())
    }
}

/// Why a trajectory finished.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrajectoryStatus {
    /// Two consecutive rungs agreed below δ; holds the tighter tolerance.
    Converged { final_tolerance: f64 },
    /// The ladder reached the floor without agreement.
    LadderExhausted,
    /// The velocity field was singular (wave-function node) along the path.
    VelocitySingular,
}

#[derive(Debug, Clone)]
pub struct TrajectoryResult {
    /// Positions at the requested output times (physical coordinates).
    pub positions: Vec<PointAb>,
    pub status: TrajectoryStatus,
}

/// Guidance velocity (ẋ₁, ẋ₂) = Im(∇Ψ/Ψ)/m at one configuration point.
pub fn velocity(
    state: &SuperpositionState,
    sol1: &ModeSolution,
    sol2: &ModeSolution,
    p: PointNormal,
    t: f64,
) -> Result<(f64, f64)> {
    let ev = StateEvaluator::new(state, sol1, sol2)?;
    velocity_from_evaluator(&ev, p, t)?.ok_or_else(|| {
        Error::Numerical(format!(
            "velocity singular near a node at (x1={}, x2={}, t={t})",
            p.x1, p.x2
        ))
    })
}

/// `None` signals a node (|Ψ|² under the floor).
fn velocity_from_evaluator(
    ev: &StateEvaluator,
    p: PointNormal,
    t: f64,
) -> Result<Option<(f64, f64)>> {
    let out = ev.eval(p, t)?;
    let density = out.psi.norm_sqr();
    if density < DENSITY_FLOOR {
        return Ok(None);
    }
    let inv_mass = 1.0; // m = 1 in all runs; kept literal in the hot path
    let v1 = (out.d1 * out.psi.conj()).im / density * inv_mass;
    let v2 = (out.d2 * out.psi.conj()).im / density * inv_mass;
    Ok(Some((v1, v2)))
}

// ---------------------------------------------------------------------------
// Dormand–Prince 8(5,3) tableau (Hairer–Nørsett–Wanner)
// ---------------------------------------------------------------------------

const C: [f64; 12] = [
    0.0,
    0.526001519587677318785587544488e-01,
    0.789002279381515978178381316732e-01,
    0.118350341907227396726757197510,
    0.281649658092772603273242802490,
    0.333333333333333333333333333333,
    0.25,
    0.307692307692307692307692307692,
    0.651282051282051282051282051282,
    0.6,
    0.857142857142857142857142857142,
    1.0,
];

const A21: f64 = 5.26001519587677318785587544488e-2;
const A31: f64 = 1.97250569845378994544595329183e-2;
const A32: f64 = 5.91751709536136983633785987549e-2;
const A41: f64 = 2.95875854768068491816892993775e-2;
const A43: f64 = 8.87627564304205475450678981324e-2;
const A51: f64 = 2.41365134159266685502369798665e-1;
const A53: f64 = -8.84549479328286085344864962717e-1;
const A54: f64 = 9.24834003261792003115737966543e-1;
const A61: f64 = 3.7037037037037037037037037037e-2;
const A64: f64 = 1.70828608729473871279604482173e-1;
const A65: f64 = 1.25467687566822425016691814123e-1;
const A71: f64 = 3.7109375e-2;
const A74: f64 = 1.70252211019544039314978060272e-1;
const A75: f64 = 6.02165389804559606850219397283e-2;
const A76: f64 = -1.7578125e-2;
const A81: f64 = 3.70920001185047927108779319836e-2;
const A84: f64 = 1.70383925712239993810214054705e-1;
const A85: f64 = 1.07262030446373284651809199168e-1;
const A86: f64 = -1.53194377486244017527936158236e-2;
const A87: f64 = 8.27378916381402288758473766002e-3;
const A91: f64 = 6.24110958716075717114429577812e-1;
const A94: f64 = -3.36089262944694129406857109825;
const A95: f64 = -8.68219346841726006818189891453e-1;
const A96: f64 = 2.75920996994467083049415600797e1;
const A97: f64 = 2.01540675504778934086186788979e1;
const A98: f64 = -4.34898841810699588477366255144e1;
const A101: f64 = 4.77662536438264365890433908527e-1;
const A104: f64 = -2.48811461997166764192642586468;
const A105: f64 = -5.90290826836842996371446475743e-1;
const A106: f64 = 2.12300514481811942347288949897e1;
const A107: f64 = 1.52792336328824235832596922938e1;
const A108: f64 = -3.32882109689848629194453265587e1;
const A109: f64 = -2.03312017085086261358222928593e-2;
const A111: f64 = -9.3714243008598732571704021658e-1;
const A114: f64 = 5.18637242884406370830023853209;
const A115: f64 = 1.09143734899672957818500254654;
const A116: f64 = -8.14978701074692612513997267357;
const A117: f64 = -1.85200656599969598641566180701e1;
const A118: f64 = 2.27394870993505042818970056734e1;
const A119: f64 = 2.49360555267965238987089396762;
const A1110: f64 = -3.0467644718982195003823669022;
const A121: f64 = 2.27331014751653820792359768449;
const A124: f64 = -1.05344954667372501984066689879e1;
const A125: f64 = -2.00087205822486249909675718444;
const A126: f64 = -1.79589318631187989172765950534e1;
const A127: f64 = 2.79488845294199600508499808837e1;
const A128: f64 = -2.85899827713502369474065508674;
const A129: f64 = -8.87285693353062954433549289258;
const A1210: f64 = 1.23605671757943030647266201528e1;
const A1211: f64 = 6.43392746015763530355970484046e-1;

const B1: f64 = 5.42937341165687622380535766363e-2;
const B6: f64 = 4.45031289275240888144113950566;
const B7: f64 = 1.89151789931450038304281599044;
const B8: f64 = -5.8012039600105847814672114227;
const B9: f64 = 3.1116436695781989440891606237e-1;
const B10: f64 = -1.52160949662516078556178806805e-1;
const B11: f64 = 2.01365400804030348374776537501e-1;
const B12: f64 = 4.47106157277725905176885569043e-2;

const BHH1: f64 = 0.244094488188976377952755905512;
const BHH2: f64 = 0.733846688281611857341361741547;
const BHH3: f64 = 0.220588235294117647058823529412e-1;

const ER1: f64 = 0.1312004499419488073250102996e-1;
const ER6: f64 = -0.1225156446376204440720569753e1;
const ER7: f64 = -0.4957589496572501915214079952;
const ER8: f64 = 0.1664377182454986536961530415e1;
const ER9: f64 = -0.3503288487499736816886487290;
const ER10: f64 = 0.3341791187130174790297318841;
const ER11: f64 = 0.8192320648511571246570742613e-1;
const ER12: f64 = -0.2235530786388629525884427845e-1;

type Y = [f64; 2];

#[inline]
fn axpy(y: &Y, h: f64, terms: &[(f64, &Y)]) -> Y {
    let mut out = *y;
    for &(a, k) in terms {
        out[0] += h * a * k[0];
        out[1] += h * a * k[1];
    }
    out
}

enum StepFail {
    Singular,
    DomainOrNumerical(Error),
}

/// One adaptive DOP853 integration over the segmented time grid. Returns the
/// state at every requested time (the first entry is the initial state).
fn dop853_run<F>(
    mut rhs: F,
    y0: Y,
    times: &[f64],
    atol: f64,
    max_step: f64,
) -> std::result::Result<Vec<Y>, StepFail>
where
    F: FnMut(f64, &Y) -> std::result::Result<Option<Y>, Error>,
{
    let eval = |rhs: &mut F, t: f64, y: &Y| -> std::result::Result<Y, StepFail> {
        match rhs(t, y) {
            Ok(Some(v)) => Ok(v),
            Ok(None) => Err(StepFail::Singular),
            Err(e) => Err(StepFail::DomainOrNumerical(e)),
        }
    };

    let mut out = Vec::with_capacity(times.len());
    let mut t = times[0];
    let mut y = y0;
    out.push(y);
    let mut h = max_step.min(1e-2);
    let mut k1 = eval(&mut rhs, t, &y)?;
    // Hairer's step controller with β = 0 (pure I-control)
    const SAFE: f64 = 0.9;
    const FAC1: f64 = 0.333;
    const FAC2: f64 = 6.0;

    for &t_end in &times[1..] {
        while t < t_end {
            let clipped = h > t_end - t;
            let hs = if clipped { t_end - t } else { h };
            let step = (|| -> std::result::Result<(Y, Y, f64), StepFail> {
                let k2 = eval(&mut rhs, t + C[1] * hs, &axpy(&y, hs, &[(A21, &k1)]))?;
                let k3 = eval(&mut rhs, t + C[2] * hs, &axpy(&y, hs, &[(A31, &k1), (A32, &k2)]))?;
                let k4 = eval(&mut rhs, t + C[3] * hs, &axpy(&y, hs, &[(A41, &k1), (A43, &k3)]))?;
                let k5 = eval(
                    &mut rhs,
                    t + C[4] * hs,
                    &axpy(&y, hs, &[(A51, &k1), (A53, &k3), (A54, &k4)]),
                )?;
                let k6 = eval(
                    &mut rhs,
                    t + C[5] * hs,
                    &axpy(&y, hs, &[(A61, &k1), (A64, &k4), (A65, &k5)]),
                )?;
                let k7 = eval(
                    &mut rhs,
                    t + C[6] * hs,
                    &axpy(&y, hs, &[(A71, &k1), (A74, &k4), (A75, &k5), (A76, &k6)]),
                )?;
                let k8 = eval(
                    &mut rhs,
                    t + C[7] * hs,
                    &axpy(
                        &y,
                        hs,
                        &[(A81, &k1), (A84, &k4), (A85, &k5), (A86, &k6), (A87, &k7)],
                    ),
                )?;
                let k9 = eval(
                    &mut rhs,
                    t + C[8] * hs,
                    &axpy(
                        &y,
                        hs,
                        &[
                            (A91, &k1),
                            (A94, &k4),
                            (A95, &k5),
                            (A96, &k6),
                            (A97, &k7),
                            (A98, &k8),
                        ],
                    ),
                )?;
                let k10 = eval(
                    &mut rhs,
                    t + C[9] * hs,
                    &axpy(
                        &y,
                        hs,
                        &[
                            (A101, &k1),
                            (A104, &k4),
                            (A105, &k5),
                            (A106, &k6),
                            (A107, &k7),
                            (A108, &k8),
                            (A109, &k9),
                        ],
                    ),
                )?;
                let k11 = eval(
                    &mut rhs,
                    t + C[10] * hs,
                    &axpy(
                        &y,
                        hs,
                        &[
                            (A111, &k1),
                            (A114, &k4),
                            (A115, &k5),
                            (A116, &k6),
                            (A117, &k7),
                            (A118, &k8),
                            (A119, &k9),
                            (A1110, &k10),
                        ],
                    ),
                )?;
                let k12 = eval(
                    &mut rhs,
                    t + hs,
                    &axpy(
                        &y,
                        hs,
                        &[
                            (A121, &k1),
                            (A124, &k4),
                            (A125, &k5),
                            (A126, &k6),
                            (A127, &k7),
                            (A128, &k8),
                            (A129, &k9),
                            (A1210, &k10),
                            (A1211, &k11),
                        ],
                    ),
                )?;
                let mut ksum = [0.0; 2];
                let mut err5 = [0.0; 2];
                for i in 0..2 {
                    ksum[i] = B1 * k1[i]
                        + B6 * k6[i]
                        + B7 * k7[i]
                        + B8 * k8[i]
                        + B9 * k9[i]
                        + B10 * k10[i]
                        + B11 * k11[i]
                        + B12 * k12[i];
                    err5[i] = ER1 * k1[i]
                        + ER6 * k6[i]
                        + ER7 * k7[i]
                        + ER8 * k8[i]
                        + ER9 * k9[i]
                        + ER10 * k10[i]
                        + ER11 * k11[i]
                        + ER12 * k12[i];
                }
                let y1 = [y[0] + hs * ksum[0], y[1] + hs * ksum[1]];
                // 8th vs 5th and 8th vs 3rd order estimates, Hairer's blend.
                // Pure absolute error control: sk = atol.
                let mut e5 = 0.0;
                let mut e3 = 0.0;
                for i in 0..2 {
                    let e3i = ksum[i] - BHH1 * k1[i] - BHH2 * k9[i] - BHH3 * k12[i];
                    e3 += (e3i / atol) * (e3i / atol);
                    e5 += (err5[i] / atol) * (err5[i] / atol);
                }
                let mut deno = e5 + 0.01 * e3;
                if deno <= 0.0 {
                    deno = 1.0;
                }
                let err = hs.abs() * e5 * (1.0 / (2.0 * deno)).sqrt();
                Ok((y1, k12, err))
            })();

            match step {
                Ok((y1, _k12, err)) => {
                    let fac11 = err.powf(0.125);
                    let fac = (fac11 / SAFE).clamp(1.0 / FAC2, 1.0 / FAC1);
                    if err <= 1.0 {
                        t += hs;
                        y = y1;
                        k1 = eval(&mut rhs, t, &y)?;
                        if !clipped {
                            h = (hs / fac).min(max_step);
                        }
                    } else {
                        h = hs / (fac11 / SAFE).min(1.0 / FAC1);
                        if h < MIN_STEP {
                            return Err(StepFail::Singular);
                        }
                    }
                }
                Err(StepFail::Singular) => {
                    // node handling: halve and retry until the minimum step
                    h = hs * 0.5;
                    if h < MIN_STEP {
                        return Err(StepFail::Singular);
                    }
                }
                Err(e) => return Err(e),
            }
        }
        out.push(y);
        t = t_end;
    }
    Ok(out)
}

/// Integrates one trajectory with the tolerance ladder. Positions are stored
/// at `output_times` (which must start at the initial time) in physical
/// coordinates; the ladder comparison happens in normal coordinates.
pub fn integrate_trajectory(
    state: &SuperpositionState,
    sol1: &ModeSolution,
    sol2: &ModeSolution,
    start: PointAb,
    output_times: &[f64],
    cfg: &IntegratorConfig,
) -> Result<TrajectoryResult> {
    let ev = StateEvaluator::new(state, sol1, sol2)?;
    integrate_trajectory_with(&ev, start, output_times, cfg)
}

/// Same as [`integrate_trajectory`] with a prebuilt evaluator (ensemble path).
pub fn integrate_trajectory_with(
    ev: &StateEvaluator,
    start: PointAb,
    output_times: &[f64],
    cfg: &IntegratorConfig,
) -> Result<TrajectoryResult> {
    cfg.validate()?;
    if output_times.len() < 2 {
        return Err(Error::Config("need at least two output times".into()));
    }
    let p0 = to_normal(start);
    let y0 = [p0.x1, p0.x2];

    let run = |atol: f64| -> std::result::Result<Vec<Y>, StepFail> {
        let rhs = |t: f64, y: &Y| -> Result<Option<Y>> {
            Ok(
                velocity_from_evaluator(ev, PointNormal { x1: y[0], x2: y[1] }, t)?
                    .map(|(v1, v2)| [v1, v2]),
            )
        };
        dop853_run(rhs, y0, output_times, atol, cfg.max_step)
    };

    let max_diff = |a: &[Y], b: &[Y]| -> f64 {
        a.iter()
            .zip(b)
            .map(|(p, q)| (p[0] - q[0]).abs().max((p[1] - q[1]).abs()))
            .fold(0.0, f64::max)
    };

    let to_positions = |ys: Vec<Y>| -> Vec<PointAb> {
        ys.into_iter()
            .map(|y| from_normal(PointNormal { x1: y[0], x2: y[1] }))
            .collect()
    };

    let mut tol = cfg.tol_start;
    let mut coarse = match run(tol) {
        Ok(v) => v,
        Err(StepFail::Singular) => {
            return Ok(TrajectoryResult {
                positions: Vec::new(),
                status: TrajectoryStatus::VelocitySingular,
            })
        }
        Err(StepFail::DomainOrNumerical(e)) => return Err(e),
    };
    loop {
        let tighter = tol * 0.1;
        let fine = match run(tighter) {
            Ok(v) => v,
            Err(StepFail::Singular) => {
                return Ok(TrajectoryResult {
                    positions: Vec::new(),
                    status: TrajectoryStatus::VelocitySingular,
                })
            }
            Err(StepFail::DomainOrNumerical(e)) => return Err(e),
        };
        if max_diff(&coarse, &fine) <= cfg.ladder_cutoff {
            return Ok(TrajectoryResult {
                positions: to_positions(fine),
                status: TrajectoryStatus::Converged {
                    final_tolerance: tighter,
                },
            });
        }
        // relative slack: repeated ·0.1 drifts a few ulp past the floor
        if tighter <= cfg.tol_floor * (1.0 + 1e-9) {
            return Ok(TrajectoryResult {
                positions: Vec::new(),
                status: TrajectoryStatus::LadderExhausted,
            });
        }
        tol = tighter;
        coarse = fine;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mode::{solve_g, Branch, PhysicalParams};
    use crate::state::Mode;

    fn ground_state_setup() -> (SuperpositionState, ModeSolution, ModeSolution) {
        let params = PhysicalParams::unit(0.0).unwrap();
        let sol1 = solve_g(&params, Branch::Plus).unwrap();
        let sol2 = solve_g(&params, Branch::Minus).unwrap();
        let state = SuperpositionState {
            modes: vec![Mode { n1: 0, n2: 0, theta: 0.3 }],
            seed: 0,
        };
        (state, sol1, sol2)
    }

    #[test]
    fn single_mode_velocity_vanishes() {
        let (state, sol1, sol2) = ground_state_setup();
        for &(x1, x2, t) in &[(0.0, 0.0, 0.0), (0.7, -0.3, 1.5), (-1.2, 2.0, 6.0)] {
            let v = velocity(&state, &sol1, &sol2, PointNormal { x1, x2 }, t).unwrap();
            assert!(v.0.abs() < 1e-13 && v.1.abs() < 1e-13);
        }
    }

    #[test]
    fn velocity_equals_current_over_density() {
        // v = j/|Ψ|² with j = Im(Ψ*∇Ψ) assembled independently here.
        let params = PhysicalParams::unit(0.1).unwrap();
        let sol1 = solve_g(&params, Branch::Plus).unwrap();
        let sol2 = solve_g(&params, Branch::Minus).unwrap();
        let state = SuperpositionState::generate(9, 11).unwrap();
        for &(x1, x2, t) in &[(0.4, -0.2, 0.8), (1.5, 0.9, 3.3)] {
            let p = PointNormal { x1, x2 };
            let psi = crate::state::psi_total(&state, &sol1, &sol2, p, t).unwrap();
            let (d1, d2) = crate::state::psi_total_grad(&state, &sol1, &sol2, p, t).unwrap();
            let dens = psi.norm_sqr();
            let j1 = (psi.conj() * d1).im;
            let j2 = (psi.conj() * d2).im;
            let v = velocity(&state, &sol1, &sol2, p, t).unwrap();
            assert!((v.0 - j1 / dens).abs() <= 1e-12 * v.0.abs().max(1.0));
            assert!((v.1 - j2 / dens).abs() <= 1e-12 * v.1.abs().max(1.0));
        }
    }

    #[test]
    fn static_trajectory_stays_put() {
        let (state, sol1, sol2) = ground_state_setup();
        let times: Vec<f64> = (0..50).map(|i| 10.0 * i as f64 / 49.0).collect();
        let start = PointAb { xa: 0.7, xb: -0.3 };
        let res =
            integrate_trajectory(&state, &sol1, &sol2, start, &times, &IntegratorConfig::default())
                .unwrap();
        match res.status {
            TrajectoryStatus::Converged { final_tolerance } => {
                assert!(final_tolerance <= 1.001e-6);
            }
            other => panic!("unexpected status {other:?}"),
        }
        for p in &res.positions {
            assert!((p.xa - start.xa).abs() < 1e-9 && (p.xb - start.xb).abs() < 1e-9);
        }
    }

    #[test]
    fn ladder_tolerance_is_a_decade_of_start() {
        let params = PhysicalParams::unit(0.1).unwrap();
        let sol1 = solve_g(&params, Branch::Plus).unwrap();
        let sol2 = solve_g(&params, Branch::Minus).unwrap();
        let state = SuperpositionState::generate(4, 3).unwrap();
        let times: Vec<f64> = (0..50).map(|i| 9.0 * i as f64 / 49.0).collect();
        let res = integrate_trajectory(
            &state,
            &sol1,
            &sol2,
            PointAb { xa: 0.4, xb: 0.2 },
            &times,
            &IntegratorConfig::default(),
        )
        .unwrap();
        if let TrajectoryStatus::Converged { final_tolerance } = res.status {
            let k = (1e-5f64 / final_tolerance).log10();
            assert!((k - k.round()).abs() < 1e-9 && k >= 1.0 - 1e-9);
        } else {
            panic!("trajectory did not converge: {:?}", res.status);
        }
    }

    #[test]
    fn determinism_bitwise() {
        let params = PhysicalParams::unit(0.1).unwrap();
        let sol1 = solve_g(&params, Branch::Plus).unwrap();
        let sol2 = solve_g(&params, Branch::Minus).unwrap();
        let state = SuperpositionState::generate(6, 8).unwrap();
        let times: Vec<f64> = (0..50).map(|i| 9.0 * i as f64 / 49.0).collect();
        let cfg = IntegratorConfig::default();
        let a = integrate_trajectory(&state, &sol1, &sol2, PointAb { xa: -0.9, xb: 1.1 }, &times, &cfg)
            .unwrap();
        let b = integrate_trajectory(&state, &sol1, &sol2, PointAb { xa: -0.9, xb: 1.1 }, &times, &cfg)
            .unwrap();
        assert_eq!(a.positions.len(), b.positions.len());
        for (p, q) in a.positions.iter().zip(&b.positions) {
            assert!(p.xa == q.xa && p.xb == q.xb);
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = IntegratorConfig::default();
        cfg.tol_floor = 1e-3;
        assert!(cfg.validate().is_err());
        let mut cfg = IntegratorConfig::default();
        cfg.ladder_cutoff = 0.0;
        assert!(cfg.validate().is_err());
    }
}
