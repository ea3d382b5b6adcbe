//! Initial-position sampling, ensemble evolution and snapshot persistence.
//!
//! Trajectories are embarrassingly parallel: per-particle RNG streams are
//! derived from the master seed by counter-based stream selection, so the
//! sampled set and the evolved snapshots are bit-identical regardless of the
//! parallel schedule.

use crate::error::{Error, Result};
use crate::guidance::{integrate_trajectory_with, IntegratorConfig, TrajectoryStatus};
use crate::mode::ModeSolution;
use crate::state::{born_density, PointAb, StateEvaluator, SuperpositionState};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

/// Half-side of the configuration-space box the paper samples in.
pub const BOX_HALF: f64 = 5.0;

/// Cramér's bound on sup|H_n(u)|e^{−u²/2}/√(2ⁿn!): |Φ_n| ≤ K·(mω/π)^{1/4}.
const CRAMER_K: f64 = 1.086_435;

/// Initial-distribution choice.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Sampler {
    /// Independent draws from an isotropic Gaussian, redrawn until inside the
    /// box. The default width 1/√2 is the ground-state Born width, which is
    /// out of equilibrium with respect to every M ≥ 2 superposition.
    NonequilibriumGaussian { center: PointAb, sigma: f64 },
    /// Rejection sampling against |Ψ(·, 0)|² with a uniform proposal.
    EquilibriumBorn,
}

impl Default for Sampler {
    fn default() -> Self {
        Sampler::NonequilibriumGaussian {
            center: PointAb { xa: 0.0, xb: 0.0 },
            sigma: std::f64::consts::FRAC_1_SQRT_2,
        }
    }
}

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct EnsembleConfig {
    pub n_particles: usize,
    pub sampler: Sampler,
    pub seed: u64,
    pub n_output_times: usize,
    /// End of the integration window; capped by the mode-solution horizon.
    pub t_max: f64,
    pub integrator: IntegratorConfig,
}

impl EnsembleConfig {
    pub fn new(n_particles: usize, seed: u64, t_max: f64) -> Self {
        EnsembleConfig {
            n_particles,
            sampler: Sampler::default(),
            seed,
            n_output_times: 50,
            t_max,
            integrator: IntegratorConfig::default(),
        }
    }

    /// Uniformly spaced output times including t = 0 and t_max.
    pub fn output_times(&self) -> Vec<f64> {
        let n = self.n_output_times;
        (0..n)
            .map(|i| self.t_max * i as f64 / (n - 1) as f64)
            .collect()
    }
}

/// Positions of every converged trajectory at the output times.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSnapshots {
    pub times: Vec<f64>,
    /// Original sampling indices of the kept trajectories.
    pub particle_ids: Vec<u32>,
    /// Row-major `[particle][time]` positions.
    pub positions: Vec<PointAb>,
    pub n_sampled: usize,
    pub dropped: usize,
}

impl EnsembleSnapshots {
    pub fn n_kept(&self) -> usize {
        self.particle_ids.len()
    }

    /// Positions of all kept particles at output-time index `ti`.
    pub fn at_time(&self, ti: usize) -> impl Iterator<Item = PointAb> + '_ {
        let nt = self.times.len();
        self.positions.iter().skip(ti).step_by(nt).copied()
    }
}

fn particle_rng(seed: u64, particle: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(particle);
    rng
}

fn sample_one(
    sampler: &Sampler,
    rng: &mut ChaCha8Rng,
    state: &SuperpositionState,
    sol1: &ModeSolution,
    sol2: &ModeSolution,
) -> Result<PointAb> {
    match *sampler {
        Sampler::NonequilibriumGaussian { center, sigma } => {
            if !(sigma > 0.0) {
                return Err(Error::Config("gaussian sigma must be positive".into()));
            }
            let na = Normal::new(center.xa, sigma)
                .map_err(|e| Error::Config(format!("bad gaussian: {e}")))?;
            let nb = Normal::new(center.xb, sigma)
                .map_err(|e| Error::Config(format!("bad gaussian: {e}")))?;
            loop {
                let p = PointAb {
                    xa: na.sample(rng),
                    xb: nb.sample(rng),
                };
                if p.xa.abs() <= BOX_HALF && p.xb.abs() <= BOX_HALF {
                    return Ok(p);
                }
            }
        }
        Sampler::EquilibriumBorn => {
            // Provable envelope from Cramér's inequality:
            // |Ψ|² ≤ M·K⁴·m·ω/π at t = 0.
            let params = &sol1.params;
            let envelope = state.mode_count() as f64
                * CRAMER_K.powi(4)
                * params.mass
                * params.omega
                / std::f64::consts::PI;
            // A proposal is pathological when fewer than one in 10⁴ draws
            // lands; the cap makes that a hard configuration error.
            const MAX_DRAWS: usize = 2_000_000;
            for _ in 0..MAX_DRAWS {
                let p = PointAb {
                    xa: BOX_HALF * (2.0 * rng.random::<f64>() - 1.0),
                    xb: BOX_HALF * (2.0 * rng.random::<f64>() - 1.0),
                };
                let u: f64 = rng.random();
                if u * envelope < born_density(state, sol1, sol2, p, 0.0)? {
                    return Ok(p);
                }
            }
            Err(Error::Config(
                "equilibrium rejection sampling acceptance below 1e-4".into(),
            ))
        }
    }
}

/// Draws the initial positions (at t = 0) for every particle.
pub fn sample_initial(
    cfg: &EnsembleConfig,
    state: &SuperpositionState,
    sol1: &ModeSolution,
    sol2: &ModeSolution,
) -> Result<Vec<PointAb>> {
    (0..cfg.n_particles)
        .into_par_iter()
        .map(|i| {
            let mut rng = particle_rng(cfg.seed, i as u64);
            sample_one(&cfg.sampler, &mut rng, state, sol1, sol2)
        })
        .collect()
}

/// Samples, integrates every trajectory through the tolerance ladder, and
/// collects the positions at the output times. Non-converged trajectories
/// are dropped and counted; more than 1% of them aborts the run.
pub fn evolve_ensemble(
    cfg: &EnsembleConfig,
    state: &SuperpositionState,
    sol1: &ModeSolution,
    sol2: &ModeSolution,
) -> Result<EnsembleSnapshots> {
    if cfg.n_output_times < 2 {
        return Err(Error::Config("need at least two output times".into()));
    }
    let horizon = sol1.t_max().min(sol2.t_max());
    if cfg.t_max > horizon {
        return Err(Error::Config(format!(
            "t_max = {} beyond the solution horizon {horizon}",
            cfg.t_max
        )));
    }
    let times = cfg.output_times();
    let starts = sample_initial(cfg, state, sol1, sol2)?;

    let results: Vec<(u32, std::result::Result<Vec<PointAb>, TrajectoryStatus>)> = starts
        .par_iter()
        .enumerate()
        .map(|(i, &start)| {
            let ev = StateEvaluator::new(state, sol1, sol2)?;
            let res = integrate_trajectory_with(&ev, start, &times, &cfg.integrator)?;
            Ok((
                i as u32,
                match res.status {
                    TrajectoryStatus::Converged { .. } => Ok(res.positions),
                    other => Err(other),
                },
            ))
        })
        .collect::<Result<_>>()?;

    let mut snapshots = EnsembleSnapshots {
        times,
        particle_ids: Vec::with_capacity(cfg.n_particles),
        positions: Vec::with_capacity(cfg.n_particles * cfg.n_output_times),
        n_sampled: cfg.n_particles,
        dropped: 0,
    };
    for (id, res) in results {
        match res {
            Ok(positions) => {
                snapshots.particle_ids.push(id);
                snapshots.positions.extend(positions);
            }
            Err(_) => snapshots.dropped += 1,
        }
    }
    if cfg.n_particles > 0 && snapshots.dropped as f64 > 0.01 * cfg.n_particles as f64 {
        return Err(Error::Integrity(format!(
            "{} of {} trajectories failed to converge (> 1%)",
            snapshots.dropped, cfg.n_particles
        )));
    }
    Ok(snapshots)
}

// ---------------------------------------------------------------------------
// persistence: binary snapshot with a plain-text header, plus CSV export
// ---------------------------------------------------------------------------

const SNAPSHOT_MAGIC: &str = "qrelax-snapshot v1";

pub fn write_snapshot(path: &Path, snap: &EnsembleSnapshots) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{SNAPSHOT_MAGIC}")?;
    writeln!(w, "n_kept = {}", snap.n_kept())?;
    writeln!(w, "n_sampled = {}", snap.n_sampled)?;
    writeln!(w, "n_times = {}", snap.times.len())?;
    writeln!(w, "dropped = {}", snap.dropped)?;
    writeln!(w, "data")?;
    for &t in &snap.times {
        w.write_all(&t.to_le_bytes())?;
    }
    for &id in &snap.particle_ids {
        w.write_all(&id.to_le_bytes())?;
    }
    for p in &snap.positions {
        w.write_all(&p.xa.to_le_bytes())?;
        w.write_all(&p.xb.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<EnsembleSnapshots> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut header = String::new();
    let bad = |what: &str| Error::Config(format!("snapshot {}: {what}", path.display()));
    r.read_line(&mut header)?;
    if header.trim_end() != SNAPSHOT_MAGIC {
        return Err(bad("unrecognized magic line"));
    }
    let mut fields = std::collections::HashMap::new();
    loop {
        let mut line = String::new();
        r.read_line(&mut line)?;
        let line = line.trim_end();
        if line == "data" {
            break;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad("malformed header line"))?;
        fields.insert(k.trim().to_string(), v.trim().to_string());
    }
    let get = |k: &str| -> Result<usize> {
        fields
            .get(k)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(&format!("missing header field {k}")))
    };
    let n_kept = get("n_kept")?;
    let n_sampled = get("n_sampled")?;
    let n_times = get("n_times")?;
    let dropped = get("dropped")?;
    let mut f64_buf = [0u8; 8];
    let mut u32_buf = [0u8; 4];
    let mut times = Vec::with_capacity(n_times);
    for _ in 0..n_times {
        r.read_exact(&mut f64_buf)?;
        times.push(f64::from_le_bytes(f64_buf));
    }
    let mut particle_ids = Vec::with_capacity(n_kept);
    for _ in 0..n_kept {
        r.read_exact(&mut u32_buf)?;
        particle_ids.push(u32::from_le_bytes(u32_buf));
    }
    let mut positions = Vec::with_capacity(n_kept * n_times);
    for _ in 0..n_kept * n_times {
        r.read_exact(&mut f64_buf)?;
        let xa = f64::from_le_bytes(f64_buf);
        r.read_exact(&mut f64_buf)?;
        positions.push(PointAb {
            xa,
            xb: f64::from_le_bytes(f64_buf),
        });
    }
    Ok(EnsembleSnapshots {
        times,
        particle_ids,
        positions,
        n_sampled,
        dropped,
    })
}

/// CSV export: `t,particle_id,x_a,x_b`.
pub fn export_snapshot_csv(path: &Path, snap: &EnsembleSnapshots) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "t,particle_id,x_a,x_b")?;
    let nt = snap.times.len();
    for (row, &id) in snap.particle_ids.iter().enumerate() {
        for (ti, &t) in snap.times.iter().enumerate() {
            let p = snap.positions[row * nt + ti];
            writeln!(w, "{t},{id},{},{}", p.xa, p.xb)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mode::{solve_g, Branch, PhysicalParams};
    use crate::state::Mode;

    fn ground_setup() -> (SuperpositionState, ModeSolution, ModeSolution) {
        let params = PhysicalParams::unit(0.0).unwrap();
        let sol1 = solve_g(&params, Branch::Plus).unwrap();
        let sol2 = solve_g(&params, Branch::Minus).unwrap();
        let state = SuperpositionState {
            modes: vec![Mode { n1: 0, n2: 0, theta: 0.25 }],
            seed: 0,
        };
        (state, sol1, sol2)
    }

    #[test]
    fn gaussian_sampling_moments() {
        let (state, sol1, sol2) = ground_setup();
        let n = 40_000;
        let cfg = EnsembleConfig::new(n, 99, 10.0);
        let pts = sample_initial(&cfg, &state, &sol1, &sol2).unwrap();
        assert_eq!(pts.len(), n);
        let sigma = std::f64::consts::FRAC_1_SQRT_2;
        let mean_a: f64 = pts.iter().map(|p| p.xa).sum::<f64>() / n as f64;
        let mean_b: f64 = pts.iter().map(|p| p.xb).sum::<f64>() / n as f64;
        let bound = 4.0 * sigma / (n as f64).sqrt();
        assert!(mean_a.abs() < bound && mean_b.abs() < bound);
        let var_a: f64 = pts.iter().map(|p| (p.xa - mean_a).powi(2)).sum::<f64>() / n as f64;
        let var_b: f64 = pts.iter().map(|p| (p.xb - mean_b).powi(2)).sum::<f64>() / n as f64;
        assert!((var_a / (sigma * sigma) - 1.0).abs() < 0.05);
        assert!((var_b / (sigma * sigma) - 1.0).abs() < 0.05);
        for p in &pts {
            assert!(p.xa.abs() <= BOX_HALF && p.xb.abs() <= BOX_HALF);
        }
    }

    #[test]
    fn zero_particles_is_empty() {
        let (state, sol1, sol2) = ground_setup();
        let cfg = EnsembleConfig::new(0, 1, 10.0);
        assert!(sample_initial(&cfg, &state, &sol1, &sol2).unwrap().is_empty());
    }

    #[test]
    fn sampling_deterministic_and_schedule_independent() {
        let (state, sol1, sol2) = ground_setup();
        let cfg = EnsembleConfig::new(500, 7, 10.0);
        let a = sample_initial(&cfg, &state, &sol1, &sol2).unwrap();
        let b = sample_initial(&cfg, &state, &sol1, &sol2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn static_field_snapshots_equal_initial_sample() {
        let (state, sol1, sol2) = ground_setup();
        let cfg = EnsembleConfig::new(60, 3, 10.0);
        let sample = sample_initial(&cfg, &state, &sol1, &sol2).unwrap();
        let snap = evolve_ensemble(&cfg, &state, &sol1, &sol2).unwrap();
        assert_eq!(snap.dropped, 0);
        assert_eq!(snap.n_kept(), 60);
        assert_eq!(snap.times[0], 0.0);
        assert_eq!(*snap.times.last().unwrap(), 10.0);
        let nt = snap.times.len();
        for (row, &id) in snap.particle_ids.iter().enumerate() {
            for ti in 0..nt {
                let p = snap.positions[row * nt + ti];
                let s = sample[id as usize];
                assert!((p.xa - s.xa).abs() < 1e-9 && (p.xb - s.xb).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn snapshot_round_trip_and_csv() {
        let (state, sol1, sol2) = ground_setup();
        let cfg = EnsembleConfig::new(12, 5, 10.0);
        let snap = evolve_ensemble(&cfg, &state, &sol1, &sol2).unwrap();
        let dir = std::env::temp_dir().join("qrelax_snapshot_test");
        std::fs::create_dir_all(&dir).unwrap();
        let bin = dir.join("snap.bin");
        write_snapshot(&bin, &snap).unwrap();
        let back = read_snapshot(&bin).unwrap();
        assert_eq!(snap, back);
        let csv = dir.join("snap.csv");
        export_snapshot_csv(&csv, &snap).unwrap();
        let text = std::fs::read_to_string(&csv).unwrap();
        assert!(text.starts_with("t,particle_id,x_a,x_b"));
        assert_eq!(text.lines().count(), 1 + 12 * 50);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn output_times_uniform() {
        let cfg = EnsembleConfig::new(1, 1, 9.99);
        let times = cfg.output_times();
        assert_eq!(times.len(), 50);
        assert_eq!(times[0], 0.0);
        assert!((times[49] - 9.99).abs() < 1e-12);
        let dt = times[1] - times[0];
        for w in times.windows(2) {
            assert!((w[1] - w[0] - dt).abs() < 1e-12);
        }
    }
}
