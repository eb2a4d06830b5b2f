//! Monte Carlo generator of single-shot (detuning, current) records and 2D
//! histogramming.
//!
//! The four-step pulse sequence is abstracted to its measurement output: each
//! shot draws a branch from the singlet/triplet mixture, centers the current
//! on that branch's anticrossing curve, and adds Gaussian readout noise.
//! Optional T1 relaxation lets a triplet decay at a uniform random time
//! inside the integration window, blurring its mean toward the singlet.
//!
//! Shot streams are deterministic per (seed, grid-point index), so parallel
//! and serial generation produce identical output.

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, ModelParams};

/// Which anticrossing the sweep crosses: `+1` for (2,0)-(1,1) (outer dot,
/// transition current step in the +g direction), `-1` for (0,2)-(1,1)
/// (inner dot, mirrored detuning axis).
pub type BoundarySign = i8;

/// Detuning sweep description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    /// Strictly monotone detuning grid, μeV.
    pub detuning_grid: Vec<f64>,
    /// Single-shot repetitions at each grid point.
    pub shots_per_point: u32,
    /// +1 for (2,0)-(1,1), -1 for (0,2)-(1,1).
    pub boundary_sign: BoundarySign,
    pub rng_seed: u64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.detuning_grid.is_empty() {
            return Err(Error::invalid("detuning grid is empty"));
        }
        if self.shots_per_point == 0 {
            return Err(Error::invalid("shots_per_point must be >= 1"));
        }
        if self.detuning_grid.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("detuning grid contains non-finite values"));
        }
        if self.detuning_grid.len() > 1 {
            let ascending = self.detuning_grid[1] > self.detuning_grid[0];
            for w in self.detuning_grid.windows(2) {
                let ok = if ascending { w[1] > w[0] } else { w[1] < w[0] };
                if !ok {
                    return Err(Error::invalid("detuning grid must be strictly monotone"));
                }
            }
        }
        if self.boundary_sign != 1 && self.boundary_sign != -1 {
            return Err(Error::invalid("boundary_sign must be +1 or -1"));
        }
        Ok(())
    }
}

/// Singlet-triplet relaxation during the measurement window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelaxationSpec {
    /// T1, μs.
    pub t1_us: f64,
    /// Integration time of one measurement segment, μs.
    pub t_meas_us: f64,
    pub enabled: bool,
}

impl RelaxationSpec {
    pub fn disabled() -> Self {
        RelaxationSpec {
            t1_us: 100.0,
            t_meas_us: 6.25,
            enabled: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t1_us <= 0.0 || self.t_meas_us <= 0.0 {
            return Err(Error::invalid("relaxation times must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Singlet,
    Triplet,
}

impl std::fmt::Display for Branch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Branch::Singlet => write!(f, "singlet"),
            Branch::Triplet => write!(f, "triplet"),
        }
    }
}

/// One single-shot record. `branch` is generation metadata for oracle use
/// only; the fit engine never sees it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShotRecord {
    pub detuning_uev: f64,
    pub current_pa: f64,
    pub branch: Branch,
}

/// All shots of a sweep plus the spec and parameters that generated them.
#[derive(Debug, Clone, PartialEq)]
pub struct ShotMatrix {
    pub records: Vec<ShotRecord>,
    pub spec: SweepSpec,
    pub params_used: ModelParams,
}

/// Mean current of one branch at detuning ε.
pub fn branch_mean(
    params: &ModelParams,
    boundary_sign: BoundarySign,
    branch: Branch,
    epsilon: f64,
) -> f64 {
    let shift = match branch {
        Branch::Singlet => 0.0,
        Branch::Triplet => params.delta_sb,
    };
    let tc = match branch {
        Branch::Singlet => params.tc_singlet,
        Branch::Triplet => params.tc_triplet,
    };
    params.current_offset
        + params.current_slope * epsilon
        + boundary_sign as f64
            * model::branch_current(
                epsilon - params.detuning_offset - shift,
                tc,
                params.current_amplitude,
                params.electron_temp_energy,
            )
}

fn point_shots(
    spec: &SweepSpec,
    params: &ModelParams,
    relax: &RelaxationSpec,
    point: usize,
) -> Vec<ShotRecord> {
    let epsilon = spec.detuning_grid[point];
    let mu_s = branch_mean(params, spec.boundary_sign, Branch::Singlet, epsilon);
    let mu_t = branch_mean(params, spec.boundary_sign, Branch::Triplet, epsilon);
    let p_decay = if relax.enabled {
        1.0 - (-relax.t_meas_us / relax.t1_us).exp()
    } else {
        0.0
    };

    let mut rng = ChaCha12Rng::seed_from_u64(spec.rng_seed);
    rng.set_stream(point as u64);

    let mut out = Vec::with_capacity(spec.shots_per_point as usize);
    for _ in 0..spec.shots_per_point {
        let branch = if rng.gen::<f64>() < params.p_triplet {
            Branch::Triplet
        } else {
            Branch::Singlet
        };
        let mut mean = match branch {
            Branch::Singlet => mu_s,
            Branch::Triplet => mu_t,
        };
        if branch == Branch::Triplet && relax.enabled && rng.gen::<f64>() < p_decay {
            // Decay at a uniform random fraction u of the window: the
            // integrated signal is the time-weighted mean of the two levels.
            let u = rng.gen::<f64>();
            mean = u * mu_t + (1.0 - u) * mu_s;
        }
        let noise: f64 = rng.sample(StandardNormal);
        out.push(ShotRecord {
            detuning_uev: epsilon,
            current_pa: mean + params.current_sigma * noise,
            branch,
        });
    }
    out
}

/// Generates the full sweep, parallel over grid points.
pub fn simulate_shots(
    spec: &SweepSpec,
    params: &ModelParams,
    relax: &RelaxationSpec,
) -> Result<ShotMatrix> {
    spec.validate()?;
    params.validate()?;
    relax.validate()?;
    let per_point: Vec<Vec<ShotRecord>> = (0..spec.detuning_grid.len())
        .into_par_iter()
        .map(|i| point_shots(spec, params, relax, i))
        .collect();
    Ok(ShotMatrix {
        records: per_point.into_iter().flatten().collect(),
        spec: spec.clone(),
        params_used: params.clone(),
    })
}

/// Serial reference path; bit-identical to [`simulate_shots`].
pub fn simulate_shots_serial(
    spec: &SweepSpec,
    params: &ModelParams,
    relax: &RelaxationSpec,
) -> Result<ShotMatrix> {
    spec.validate()?;
    params.validate()?;
    relax.validate()?;
    let records = (0..spec.detuning_grid.len())
        .flat_map(|i| point_shots(spec, params, relax, i))
        .collect();
    Ok(ShotMatrix {
        records,
        spec: spec.clone(),
        params_used: params.clone(),
    })
}

/// Mirrors the detuning axis (ε → -ε), mapping an inner-dot (0,2)-(1,1)
/// dataset onto the outer-dot convention before analysis. Record order is
/// preserved; the stored grid is reversed to stay monotone.
pub fn mirror_detunings(shots: &ShotMatrix) -> ShotMatrix {
    let mut spec = shots.spec.clone();
    spec.detuning_grid = spec.detuning_grid.iter().rev().map(|v| -v).collect();
    spec.boundary_sign = -spec.boundary_sign;
    ShotMatrix {
        records: shots
            .records
            .iter()
            .map(|r| ShotRecord {
                detuning_uev: -r.detuning_uev,
                ..*r
            })
            .collect(),
        spec,
        params_used: shots.params_used.clone(),
    }
}

/// Binned (detuning, current) intensity map. Detuning bins are exactly the
/// sweep grid points; current bins are uniform.
///
/// Counts are stored as floats so that exactly evaluated model surfaces can
/// be fit through the same interface; simulator output is always integral.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram2D {
    /// Column centers, one per sweep grid point (ascending or as swept).
    pub detuning_uev: Vec<f64>,
    /// `current_bins + 1` ascending bin edges, pA.
    pub current_edges_pa: Vec<f64>,
    /// `counts[column][bin]`, column indexed like `detuning_uev`.
    pub counts: Vec<Vec<f64>>,
}

impl Histogram2D {
    pub fn n_columns(&self) -> usize {
        self.detuning_uev.len()
    }

    pub fn n_bins(&self) -> usize {
        self.current_edges_pa.len().saturating_sub(1)
    }

    pub fn bin_center(&self, k: usize) -> f64 {
        0.5 * (self.current_edges_pa[k] + self.current_edges_pa[k + 1])
    }

    pub fn total_count(&self) -> f64 {
        self.counts.iter().flatten().sum()
    }

    pub fn column_count(&self, j: usize) -> f64 {
        self.counts[j].iter().sum()
    }

    /// Counts-weighted mean current of one column.
    pub fn column_mean(&self, j: usize) -> f64 {
        let n = self.column_count(self.check_col(j));
        if n == 0.0 {
            return f64::NAN;
        }
        self.counts[j]
            .iter()
            .enumerate()
            .map(|(k, c)| c * self.bin_center(k))
            .sum::<f64>()
            / n
    }

    /// Counts-weighted current variance of one column.
    pub fn column_variance(&self, j: usize) -> f64 {
        let n = self.column_count(self.check_col(j));
        if n == 0.0 {
            return f64::NAN;
        }
        let mean = self.column_mean(j);
        self.counts[j]
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let d = self.bin_center(k) - mean;
                c * d * d
            })
            .sum::<f64>()
            / n
    }

    fn check_col(&self, j: usize) -> usize {
        assert!(j < self.n_columns(), "column {j} out of range");
        j
    }

    pub fn validate(&self) -> Result<()> {
        if self.detuning_uev.is_empty() || self.n_bins() < 1 {
            return Err(Error::invalid("empty histogram"));
        }
        if self.counts.len() != self.n_columns()
            || self.counts.iter().any(|c| c.len() != self.n_bins())
        {
            return Err(Error::invalid("histogram count matrix shape mismatch"));
        }
        if self.counts.iter().flatten().any(|&c| c < 0.0 || !c.is_finite()) {
            return Err(Error::invalid("histogram counts must be finite and >= 0"));
        }
        if self.current_edges_pa.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("current edges must be strictly increasing"));
        }
        Ok(())
    }

    /// Bins raw (ε, I) records. Columns are the distinct detuning values in
    /// ascending order; current edges span `[min I - pad, max I + pad]`.
    pub fn from_records(records: &[(f64, f64)], current_bins: usize, pad: f64) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::invalid("no shots to histogram"));
        }
        if current_bins < 2 {
            return Err(Error::invalid("current_bins must be >= 2"));
        }
        let mut grid: Vec<f64> = records.iter().map(|r| r.0).collect();
        grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
        grid.dedup();

        let (mut lo, mut hi) = records
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                (lo.min(r.1), hi.max(r.1))
            });
        let pad = if pad > 0.0 {
            pad
        } else {
            // Degenerate noiseless data still needs a finite bin width.
            1e-9_f64.max(1e-9 * hi.abs().max(lo.abs()))
        };
        lo -= pad;
        hi += pad;
        let width = (hi - lo) / current_bins as f64;
        let edges: Vec<f64> = (0..=current_bins).map(|k| lo + k as f64 * width).collect();

        let mut counts = vec![vec![0.0f64; current_bins]; grid.len()];
        for &(eps, cur) in records {
            let j = grid
                .binary_search_by(|g| g.partial_cmp(&eps).unwrap())
                .map_err(|_| Error::invalid("detuning not on grid"))?;
            let k = (((cur - lo) / width) as usize).min(current_bins - 1);
            counts[j][k] += 1.0;
        }
        let hist = Histogram2D {
            detuning_uev: grid,
            current_edges_pa: edges,
            counts,
        };
        hist.validate()?;
        Ok(hist)
    }
}

/// Bins a ShotMatrix; current-edge padding is the generator's σ_I.
pub fn histogram(shots: &ShotMatrix, current_bins: usize) -> Result<Histogram2D> {
    if shots.records.is_empty() {
        return Err(Error::invalid("empty ShotMatrix"));
    }
    let records: Vec<(f64, f64)> = shots
        .records
        .iter()
        .map(|r| (r.detuning_uev, r.current_pa))
        .collect();
    Histogram2D::from_records(&records, current_bins, shots.params_used.current_sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn test_params() -> ModelParams {
        ModelParams {
            p_singlet: 0.5,
            p_triplet: 0.5,
            detuning_offset: 0.0,
            delta_sb: 28.1,
            tc_singlet: 40.5,
            tc_triplet: 40.5,
            current_offset: 0.2,
            current_slope: 0.0,
            current_amplitude: 1.0,
            electron_temp_energy: 8.6,
            current_sigma: 0.1,
        }
    }

    fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect()
    }

    #[test]
    fn noiseless_single_branch_lies_on_curve() {
        let mut params = test_params();
        params.p_singlet = 1.0;
        params.p_triplet = 0.0;
        params.current_sigma = 1e-300; // σ = 0 is rejected by validate; use the noiseless limit
        let spec = SweepSpec {
            detuning_grid: grid(-200.0, 200.0, 21),
            shots_per_point: 7,
            boundary_sign: 1,
            rng_seed: 42,
        };
        let shots = simulate_shots(&spec, &params, &RelaxationSpec::disabled()).unwrap();
        assert_eq!(shots.records.len(), 21 * 7);
        for r in &shots.records {
            let want = branch_mean(&params, 1, Branch::Singlet, r.detuning_uev);
            assert_abs_diff_eq!(r.current_pa, want, epsilon = 1e-12);
            assert_eq!(r.branch, Branch::Singlet);
        }
    }

    #[test]
    fn determinism_and_parallel_serial_identity() {
        let params = test_params();
        let spec = SweepSpec {
            detuning_grid: grid(-150.0, 150.0, 16),
            shots_per_point: 200,
            boundary_sign: 1,
            rng_seed: 7,
        };
        let relax = RelaxationSpec {
            t1_us: 100.0,
            t_meas_us: 12.5,
            enabled: true,
        };
        let a = simulate_shots(&spec, &params, &relax).unwrap();
        let b = simulate_shots(&spec, &params, &relax).unwrap();
        let c = simulate_shots_serial(&spec, &params, &relax).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn mixture_mean_matches_law_of_large_numbers() {
        let params = test_params();
        let eps = 14.0;
        let spec = SweepSpec {
            detuning_grid: vec![eps],
            shots_per_point: 50_000,
            boundary_sign: 1,
            rng_seed: 123,
        };
        let shots = simulate_shots(&spec, &params, &RelaxationSpec::disabled()).unwrap();
        let mean: f64 =
            shots.records.iter().map(|r| r.current_pa).sum::<f64>() / shots.records.len() as f64;
        let mu_s = branch_mean(&params, 1, Branch::Singlet, eps);
        let mu_t = branch_mean(&params, 1, Branch::Triplet, eps);
        let expect = 0.5 * (mu_s + mu_t);
        // 4 sigma of the mixture-mean estimator; mixture std <= sigma + separation
        let tol = 4.0 * (params.current_sigma + (mu_t - mu_s).abs()) / (50_000f64).sqrt();
        assert!(
            (mean - expect).abs() < tol,
            "mean {mean} vs {expect} (tol {tol})"
        );
    }

    #[test]
    fn per_branch_variance_converges_to_sigma_squared() {
        let params = test_params();
        let spec = SweepSpec {
            detuning_grid: vec![5.0],
            shots_per_point: 40_000,
            boundary_sign: 1,
            rng_seed: 99,
        };
        let shots = simulate_shots(&spec, &params, &RelaxationSpec::disabled()).unwrap();
        for branch in [Branch::Singlet, Branch::Triplet] {
            let vals: Vec<f64> = shots
                .records
                .iter()
                .filter(|r| r.branch == branch)
                .map(|r| r.current_pa)
                .collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            let s2 = params.current_sigma * params.current_sigma;
            // sample-variance std error ~ s2 sqrt(2/n); allow 5 of them
            let tol = 5.0 * s2 * (2.0 / n).sqrt();
            assert!((var - s2).abs() < tol, "branch {branch}: var {var} vs {s2}");
        }
    }

    #[test]
    fn branch_fraction_converges_to_p_triplet() {
        let mut params = test_params();
        params.p_triplet = 0.3;
        params.p_singlet = 0.7;
        let spec = SweepSpec {
            detuning_grid: grid(-30.0, 30.0, 5),
            shots_per_point: 20_000,
            boundary_sign: 1,
            rng_seed: 4,
        };
        let shots = simulate_shots(&spec, &params, &RelaxationSpec::disabled()).unwrap();
        let n = shots.records.len() as f64;
        let frac = shots
            .records
            .iter()
            .filter(|r| r.branch == Branch::Triplet)
            .count() as f64
            / n;
        let tol = 5.0 * (0.3f64 * 0.7 / n).sqrt();
        assert!((frac - 0.3).abs() < tol, "fraction {frac}");
    }

    #[test]
    fn boundary_sign_mirror_identity_of_means() {
        // With m = 0: the sign -1 means at ε equal the sign +1 means at -ε
        // with ε0 → -ε0 - Δ and the branch labels swapped.
        let mut params = test_params();
        params.current_slope = 0.0;
        params.detuning_offset = 11.0;
        let mut mirrored = params.clone();
        mirrored.detuning_offset = -params.detuning_offset - params.delta_sb;
        std::mem::swap(&mut mirrored.tc_singlet, &mut mirrored.tc_triplet);
        for i in 0..80 {
            let eps = -190.0 + 4.8 * i as f64;
            assert_abs_diff_eq!(
                branch_mean(&params, -1, Branch::Singlet, eps),
                branch_mean(&mirrored, 1, Branch::Triplet, -eps),
                epsilon = 1e-12
            );
            assert_abs_diff_eq!(
                branch_mean(&params, -1, Branch::Triplet, eps),
                branch_mean(&mirrored, 1, Branch::Singlet, -eps),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn mirror_detunings_round_trips() {
        let params = test_params();
        let spec = SweepSpec {
            detuning_grid: grid(-50.0, 80.0, 9),
            shots_per_point: 11,
            boundary_sign: -1,
            rng_seed: 3,
        };
        let shots = simulate_shots(&spec, &params, &RelaxationSpec::disabled()).unwrap();
        let mirrored = mirror_detunings(&shots);
        assert!(mirrored.spec.validate().is_ok());
        assert_eq!(mirrored.spec.boundary_sign, 1);
        let back = mirror_detunings(&mirrored);
        assert_eq!(back.records, shots.records);
    }

    #[test]
    fn rejects_invalid_specs() {
        let params = test_params();
        let relax = RelaxationSpec::disabled();
        let empty = SweepSpec {
            detuning_grid: vec![],
            shots_per_point: 10,
            boundary_sign: 1,
            rng_seed: 0,
        };
        assert!(simulate_shots(&empty, &params, &relax).is_err());
        let zero_shots = SweepSpec {
            detuning_grid: vec![1.0, 2.0],
            shots_per_point: 0,
            boundary_sign: 1,
            rng_seed: 0,
        };
        assert!(simulate_shots(&zero_shots, &params, &relax).is_err());
        let non_monotone = SweepSpec {
            detuning_grid: vec![1.0, 3.0, 2.0],
            shots_per_point: 1,
            boundary_sign: 1,
            rng_seed: 0,
        };
        assert!(simulate_shots(&non_monotone, &params, &relax).is_err());
        let bad_sign = SweepSpec {
            detuning_grid: vec![1.0, 2.0],
            shots_per_point: 1,
            boundary_sign: 2,
            rng_seed: 0,
        };
        assert!(simulate_shots(&bad_sign, &params, &relax).is_err());
    }

    #[test]
    fn histogram_partition_properties() {
        let params = test_params();
        let spec = SweepSpec {
            detuning_grid: grid(-100.0, 100.0, 12),
            shots_per_point: 500,
            boundary_sign: 1,
            rng_seed: 21,
        };
        let shots = simulate_shots(&spec, &params, &RelaxationSpec::disabled()).unwrap();
        let hist = histogram(&shots, 40).unwrap();
        assert_eq!(hist.n_columns(), 12);
        assert_eq!(hist.n_bins(), 40);
        assert_abs_diff_eq!(hist.total_count(), (12 * 500) as f64, epsilon = 1e-12);
        for j in 0..hist.n_columns() {
            assert_abs_diff_eq!(hist.column_count(j), 500.0, epsilon = 1e-12);
        }
        // single shot: exactly one occupied cell
        let one = SweepSpec {
            detuning_grid: vec![0.0],
            shots_per_point: 1,
            boundary_sign: 1,
            rng_seed: 1,
        };
        let h1 = histogram(&simulate_shots(&one, &params, &RelaxationSpec::disabled()).unwrap(), 8)
            .unwrap();
        let occupied: usize = h1.counts.iter().flatten().filter(|&&c| c > 0.0).count();
        assert_eq!(occupied, 1);
        assert_abs_diff_eq!(h1.total_count(), 1.0, epsilon = 0.0);
    }

    #[test]
    fn histogram_rejects_degenerate_input() {
        let params = test_params();
        let spec = SweepSpec {
            detuning_grid: vec![0.0],
            shots_per_point: 3,
            boundary_sign: 1,
            rng_seed: 1,
        };
        let shots = simulate_shots(&spec, &params, &RelaxationSpec::disabled()).unwrap();
        assert!(histogram(&shots, 1).is_err());
        let empty = ShotMatrix {
            records: vec![],
            spec,
            params_used: params,
        };
        assert!(histogram(&empty, 10).is_err());
    }
}
