//! Coarse-graining of trajectory densities against |Ψ|² and the H̄(t)
//! functional.
//!
//! The configuration box is partitioned into ε-cells. ρ̄ is the per-cell mean
//! of the particle histogram; |Ψ|²̄ is the per-cell mean of the Born density
//! from a fixed 4×4 Gauss–Legendre tensor rule. Both tables are renormalized
//! over the box before the log ratio so H̄ stays a proper relative entropy in
//! the presence of Born mass outside the box.

use crate::ensemble::{EnsembleSnapshots, BOX_HALF};
use crate::error::{Error, Result};
use crate::mode::ModeSolution;
use crate::state::{to_normal, PointAb, StateEvaluator, SuperpositionState};
use rayon::prelude::*;
use std::io::{BufWriter, Write};
use std::path::Path;

/// Square-cell partition of the configuration box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoarseGrid {
    pub epsilon: f64,
    pub n_per_axis: usize,
}

impl CoarseGrid {
    /// ε must divide the box side exactly (0.1, 0.2, 0.25, 0.5, …).
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::Config(format!("ε must be positive, got {epsilon}")));
        }
        let side = 2.0 * BOX_HALF;
        let n = side / epsilon;
        if (n - n.round()).abs() > 1e-12 * n {
            return Err(Error::Config(format!(
                "box side {side} is not divisible by ε = {epsilon}"
            )));
        }
        Ok(CoarseGrid {
            epsilon,
            n_per_axis: n.round() as usize,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.n_per_axis * self.n_per_axis
    }

    /// Cell index of an in-box point, column-major over (a, b).
    pub fn cell_index(&self, p: PointAb) -> Option<usize> {
        let ia = ((p.xa + BOX_HALF) / self.epsilon).floor();
        let ib = ((p.xb + BOX_HALF) / self.epsilon).floor();
        let n = self.n_per_axis as f64;
        if ia < 0.0 || ib < 0.0 || ia >= n || ib >= n {
            return None;
        }
        Some(ia as usize * self.n_per_axis + ib as usize)
    }

    /// Center of cell `(ia, ib)`.
    fn cell_center(&self, ia: usize, ib: usize) -> PointAb {
        PointAb {
            xa: -BOX_HALF + (ia as f64 + 0.5) * self.epsilon,
            xb: -BOX_HALF + (ib as f64 + 0.5) * self.epsilon,
        }
    }
}

/// Per-cell table of ρ̄ plus the out-of-box particle count.
pub fn coarse_density(
    positions: &[PointAb],
    grid: &CoarseGrid,
) -> Result<(Vec<f64>, usize)> {
    let mut counts = vec![0u64; grid.n_cells()];
    let mut overflow = 0usize;
    for &p in positions {
        match grid.cell_index(p) {
            Some(i) => counts[i] += 1,
            None => overflow += 1,
        }
    }
    let n_in = positions.len() - overflow;
    if n_in == 0 {
        return Err(Error::Domain("no particles inside the box".into()));
    }
    let norm = 1.0 / (n_in as f64 * grid.epsilon * grid.epsilon);
    Ok((counts.iter().map(|&c| c as f64 * norm).collect(), overflow))
}

// 4-point Gauss–Legendre nodes/weights on [−1, 1]
const GL4_X: [f64; 4] = [
    -0.861_136_311_594_052_6,
    -0.339_981_043_584_856_3,
    0.339_981_043_584_856_3,
    0.861_136_311_594_052_6,
];
const GL4_W: [f64; 4] = [
    0.347_854_845_137_453_85,
    0.652_145_154_862_546_1,
    0.652_145_154_862_546_1,
    0.347_854_845_137_453_85,
];

// 8-point rule used by the refinement self-check
const GL8_X: [f64; 8] = [
    -0.960_289_856_497_536_2,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_2,
];
const GL8_W: [f64; 8] = [
    0.101_228_536_290_376_26,
    0.222_381_034_453_374_47,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_47,
    0.101_228_536_290_376_26,
];

pub(crate) fn coarse_born_with_nodes(
    state: &SuperpositionState,
    sol1: &ModeSolution,
    sol2: &ModeSolution,
    grid: &CoarseGrid,
    t: f64,
    eight_point: bool,
) -> Result<Vec<f64>> {
    let (nodes, weights): (&[f64], &[f64]) = if eight_point {
        (&GL8_X, &GL8_W)
    } else {
        (&GL4_X, &GL4_W)
    };
    let ev = StateEvaluator::new(state, sol1, sol2)?;
    let (frame1, frame2) = ev.frames(t)?;
    let half = 0.5 * grid.epsilon;
    let n = grid.n_per_axis;
    let table: Vec<f64> = (0..grid.n_cells())
        .into_par_iter()
        .map(|cell| {
            let (ia, ib) = (cell / n, cell % n);
            let center = grid.cell_center(ia, ib);
            let mut acc = 0.0;
            for (i, &xi) in nodes.iter().enumerate() {
                for (j, &xj) in nodes.iter().enumerate() {
                    let p = PointAb {
                        xa: center.xa + half * xi,
                        xb: center.xb + half * xj,
                    };
                    let psi = ev.eval_in_frames(&frame1, &frame2, to_normal(p)).psi;
                    // weights normalized to a mean over the cell
                    acc += 0.25 * weights[i] * weights[j] * psi.norm_sqr();
                }
            }
            acc
        })
        .collect();
    Ok(table)
}

/// Per-cell mean of the Born density, fixed 4×4 Gauss–Legendre tensor rule.
pub fn coarse_born(
    state: &SuperpositionState,
    sol1: &ModeSolution,
    sol2: &ModeSolution,
    grid: &CoarseGrid,
    t: f64,
) -> Result<Vec<f64>> {
    coarse_born_with_nodes(state, sol1, sol2, grid, t, false)
}

/// H̄ = Σ ε² ρ̄ ln(ρ̄/|Ψ|²̄) with both tables renormalized over the box and the
/// empty-cell convention 0·ln 0 = 0.
pub fn h_function(rho: &[f64], born: &[f64], grid: &CoarseGrid) -> Result<f64> {
    if rho.len() != grid.n_cells() || born.len() != grid.n_cells() {
        return Err(Error::Domain("table size does not match the grid".into()));
    }
    let cell_area = grid.epsilon * grid.epsilon;
    let rho_mass: f64 = rho.iter().sum::<f64>() * cell_area;
    let born_mass: f64 = born.iter().sum::<f64>() * cell_area;
    if rho_mass <= 0.0 || born_mass <= 0.0 {
        return Err(Error::Domain("tables carry no mass on the box".into()));
    }
    let mut h = 0.0;
    for (i, (&r, &b)) in rho.iter().zip(born).enumerate() {
        let rn = r / rho_mass;
        let bn = b / born_mass;
        if rn > 0.0 {
            if bn < 1e-300 {
                return Err(Error::Integrity(format!(
                    "trajectory mass in cell {i} where the Born density vanishes"
                )));
            }
            h += cell_area * rn * (rn / bn).ln();
        }
    }
    Ok(h)
}

/// Coarse-grained H̄ values over the snapshot times.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct HSeries {
    pub times: Vec<f64>,
    pub h_values: Vec<f64>,
    /// H̄(0) of an equilibrium control run, when this series is one.
    pub noise_floor: Option<f64>,
    pub epsilon: f64,
    /// Smallest in-box particle fraction across the series.
    pub min_in_box_fraction: f64,
}

impl HSeries {
    pub fn max_h(&self) -> f64 {
        self.h_values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Applies the coarse-graining pipeline at every snapshot time.
pub fn h_series(
    snapshots: &EnsembleSnapshots,
    state: &SuperpositionState,
    sol1: &ModeSolution,
    sol2: &ModeSolution,
    grid: &CoarseGrid,
) -> Result<HSeries> {
    let n_times = snapshots.times.len();
    let per_time: Vec<(f64, f64)> = (0..n_times)
        .into_par_iter()
        .map(|ti| {
            let positions: Vec<PointAb> = snapshots.at_time(ti).collect();
            let (rho, overflow) = coarse_density(&positions, grid)?;
            let born = coarse_born(state, sol1, sol2, grid, snapshots.times[ti])?;
            let h = h_function(&rho, &born, grid)?;
            if h < -1e-9 {
                return Err(Error::Numerical(format!(
                    "renormalized H̄ = {h} negative beyond rounding at t = {}",
                    snapshots.times[ti]
                )));
            }
            let in_frac = 1.0 - overflow as f64 / positions.len().max(1) as f64;
            Ok((h, in_frac))
        })
        .collect::<Result<_>>()?;
    Ok(HSeries {
        times: snapshots.times.clone(),
        h_values: per_time.iter().map(|p| p.0).collect(),
        noise_floor: None,
        epsilon: grid.epsilon,
        min_in_box_fraction: per_time.iter().map(|p| p.1).fold(f64::INFINITY, f64::min),
    })
}

/// CSV export with header metadata lines (`# key = value`).
pub fn export_h_series_csv(
    path: &Path,
    series: &HSeries,
    meta: &[(&str, String)],
) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "# epsilon = {}", series.epsilon)?;
    if let Some(floor) = series.noise_floor {
        writeln!(w, "# noise_floor = {floor}")?;
    }
    for (k, v) in meta {
        writeln!(w, "# {k} = {v}")?;
    }
    writeln!(w, "t,H")?;
    for (t, h) in series.times.iter().zip(&series.h_values) {
        writeln!(w, "{t},{h}")?;
    }
    Ok(())
}

/// Reads back a `t,H` CSV (used by the fit/plot subcommands).
pub fn read_h_series_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>, Option<f64>)> {
    let text = std::fs::read_to_string(path)?;
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut floor = None;
    for line in text.lines() {
        let line = line.trim();
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.split_once('=') {
                if k.trim() == "noise_floor" {
                    floor = v.trim().parse::<f64>().ok();
                }
            }
            continue;
        }
        if line.is_empty() || line.starts_with('t') {
            continue;
        }
        let (t, h) = line
            .split_once(',')
            .ok_or_else(|| Error::Config(format!("bad h-series line: {line}")))?;
        times.push(t.trim().parse().map_err(|e| Error::Config(format!("{e}")))?);
        values.push(h.trim().parse().map_err(|e| Error::Config(format!("{e}")))?);
    }
    Ok((times, values, floor))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        assert!(CoarseGrid::new(0.2).is_ok());
        assert!(CoarseGrid::new(0.25).is_ok());
        assert_eq!(CoarseGrid::new(0.1).unwrap().n_per_axis, 100);
        assert!(CoarseGrid::new(0.3).is_err());
        assert!(CoarseGrid::new(0.0).is_err());
        assert!(CoarseGrid::new(-0.5).is_err());
    }

    #[test]
    fn density_delta_distribution() {
        let grid = CoarseGrid::new(0.5).unwrap();
        let positions = vec![PointAb { xa: 0.1, xb: 0.1 }; 1000];
        let (rho, overflow) = coarse_density(&positions, &grid).unwrap();
        assert_eq!(overflow, 0);
        let idx = grid.cell_index(PointAb { xa: 0.1, xb: 0.1 }).unwrap();
        for (i, &r) in rho.iter().enumerate() {
            if i == idx {
                assert!((r - 1.0 / 0.25).abs() < 1e-12);
            } else {
                assert_eq!(r, 0.0);
            }
        }
    }

    #[test]
    fn density_uniform_law() {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let grid = CoarseGrid::new(1.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let n = 200_000;
        let positions: Vec<PointAb> = (0..n)
            .map(|_| PointAb {
                xa: 10.0 * rng.random::<f64>() - 5.0,
                xb: 10.0 * rng.random::<f64>() - 5.0,
            })
            .collect();
        let (rho, _) = coarse_density(&positions, &grid).unwrap();
        // uniform density = 1/100 per unit area; binomial error with
        // p = 1/100: σ ≈ sqrt(p/n) per cell
        let sigma = (0.01 * 0.99 / n as f64).sqrt();
        for &r in &rho {
            assert!((r - 0.01).abs() < 6.0 * sigma, "cell value {r}");
        }
    }

    #[test]
    fn density_mass_sums_to_one() {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let grid = CoarseGrid::new(0.25).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        // some points straddle the box edge
        let positions: Vec<PointAb> = (0..5000)
            .map(|_| PointAb {
                xa: 12.0 * rng.random::<f64>() - 6.0,
                xb: 12.0 * rng.random::<f64>() - 6.0,
            })
            .collect();
        let (rho, overflow) = coarse_density(&positions, &grid).unwrap();
        assert!(overflow > 0);
        let mass: f64 = rho.iter().sum::<f64>() * 0.25 * 0.25;
        assert!((mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn density_errors_when_empty() {
        let grid = CoarseGrid::new(0.5).unwrap();
        assert!(coarse_density(&[], &grid).is_err());
        let outside = vec![PointAb { xa: 7.0, xb: 0.0 }];
        assert!(coarse_density(&outside, &grid).is_err());
    }

    #[test]
    fn h_zero_when_tables_match() {
        let grid = CoarseGrid::new(0.5).unwrap();
        let mut table = vec![0.0; grid.n_cells()];
        for (i, v) in table.iter_mut().enumerate() {
            *v = 0.3 + (i % 7) as f64;
        }
        let h = h_function(&table, &table, &grid).unwrap();
        assert!(h.abs() < 1e-12);
    }

    #[test]
    fn h_single_cell_closed_form() {
        let grid = CoarseGrid::new(0.5).unwrap();
        let eps2 = 0.25;
        let mut rho = vec![0.0; grid.n_cells()];
        rho[13] = 1.0 / eps2;
        // normalized Born table, uniform
        let born = vec![1.0 / 100.0; grid.n_cells()];
        let h = h_function(&rho, &born, &grid).unwrap();
        let expect = (1.0 / (eps2 * born[13])).ln();
        assert!((h - expect).abs() < 1e-12, "{h} vs {expect}");
    }

    #[test]
    fn h_gibbs_positivity_on_random_tables() {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let grid = CoarseGrid::new(1.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let rho: Vec<f64> = (0..grid.n_cells()).map(|_| rng.random::<f64>()).collect();
            let born: Vec<f64> = (0..grid.n_cells())
                .map(|_| 0.01 + rng.random::<f64>())
                .collect();
            let h = h_function(&rho, &born, &grid).unwrap();
            assert!(h >= -1e-12, "Gibbs violated: {h}");
        }
    }

    #[test]
    fn h_support_mismatch_is_integrity_error() {
        let grid = CoarseGrid::new(1.0).unwrap();
        let mut rho = vec![0.0; grid.n_cells()];
        rho[0] = 1.0;
        rho[1] = 1.0;
        let mut born = vec![0.0; grid.n_cells()];
        born[1] = 1.0;
        match h_function(&rho, &born, &grid) {
            Err(Error::Integrity(_)) => {}
            other => panic!("expected integrity error, got {other:?}"),
        }
    }
}
