//! Spin-funnel analysis.
//!
//! The S₀-T₋ anticrossing traces a field-dependent locus in the (B, ε) plane,
//!
//! ```text
//! ε(B) = y₀ - t_c² / (g μ_B sqrt((B - B₀)² + B⊥²))
//! ```
//!
//! Each column of a blockade-probability map is reduced to a Gaussian peak
//! position; the peak locus is then fit for the tunnel coupling t_c and the
//! offset fields B₀ (in-plane) and B⊥ (transverse).

use serde::{Deserialize, Serialize};

use crate::consts::G_MU_B_UEV_PER_UT;
use crate::error::{Error, Result};
use crate::lm::{self, LmOptions};

/// Blockade-probability map over (B, ε).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunnelMap {
    /// Magnetic-field grid, μT, strictly monotone.
    pub b_grid_ut: Vec<f64>,
    /// Detuning grid, μeV, strictly monotone.
    pub epsilon_grid_uev: Vec<f64>,
    /// `probability[b_index][eps_index]` in [0, 1].
    pub probability: Vec<Vec<f64>>,
}

impl FunnelMap {
    pub fn validate(&self) -> Result<()> {
        if self.b_grid_ut.len() < 2 || self.epsilon_grid_uev.len() < 5 {
            return Err(Error::invalid("funnel map needs >= 2 fields x >= 5 detunings"));
        }
        for grid in [&self.b_grid_ut, &self.epsilon_grid_uev] {
            let ascending = grid[1] > grid[0];
            if grid
                .windows(2)
                .any(|w| if ascending { w[1] <= w[0] } else { w[1] >= w[0] })
            {
                return Err(Error::invalid("funnel grids must be strictly monotone"));
            }
        }
        if self.probability.len() != self.b_grid_ut.len()
            || self
                .probability
                .iter()
                .any(|col| col.len() != self.epsilon_grid_uev.len())
        {
            return Err(Error::invalid("probability matrix shape mismatch"));
        }
        if self
            .probability
            .iter()
            .flatten()
            .any(|&p| !(0.0..=1.0).contains(&p))
        {
            return Err(Error::invalid("probabilities must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// One extracted column peak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunnelPeak {
    pub b_ut: f64,
    pub epsilon_peak_uev: f64,
    /// Standard error of the fitted center, μeV.
    pub peak_sigma_uev: f64,
}

/// Funnel-locus fit output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunnelFit {
    pub tc_uev: f64,
    pub b0_ut: f64,
    pub b_perp_ut: f64,
    pub y0_uev: f64,
    pub g_mu_b_uev_per_ut: f64,
    /// Covariance over (tc, B₀, B⊥, y₀), native units.
    pub covariance: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

/// Funnel locus ε(B).
pub fn funnel_epsilon(b_ut: f64, tc: f64, b0: f64, b_perp: f64, y0: f64, g_mu_b: f64) -> f64 {
    let db = b_ut - b0;
    y0 - tc * tc / (g_mu_b * (db * db + b_perp * b_perp).sqrt())
}

/// Per-column Gaussian peak extraction.
///
/// Columns whose maximum does not exceed twice their median are skipped;
/// failing every column is [`Error::NoFunnelDetected`]. Returns the peaks and
/// the skipped column indices.
pub fn extract_peaks(map: &FunnelMap) -> Result<(Vec<FunnelPeak>, Vec<usize>)> {
    map.validate()?;
    let mut peaks = Vec::new();
    let mut skipped = Vec::new();
    for (bi, col) in map.probability.iter().enumerate() {
        match fit_column_gaussian(&map.epsilon_grid_uev, col) {
            Some((center, center_se)) => peaks.push(FunnelPeak {
                b_ut: map.b_grid_ut[bi],
                epsilon_peak_uev: center,
                peak_sigma_uev: center_se,
            }),
            None => skipped.push(bi),
        }
    }
    if peaks.is_empty() {
        return Err(Error::NoFunnelDetected);
    }
    Ok((peaks, skipped))
}

/// 3-parameter Gaussian plus constant baseline on one column. Returns the
/// center and its standard error, or None when the column fails the contrast
/// precondition or the fit does not converge.
fn fit_column_gaussian(eps: &[f64], prob: &[f64]) -> Option<(f64, f64)> {
    let mut sorted: Vec<f64> = prob.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted[sorted.len() / 2];
    let (imax, &pmax) = prob
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())?;
    if pmax <= 2.0 * median || pmax <= 0.0 {
        return None;
    }

    let span = (eps[eps.len() - 1] - eps[0]).abs();
    // Half-max width estimate around the peak.
    let half = median + 0.5 * (pmax - median);
    let mut lo = eps[imax];
    let mut hi = eps[imax];
    for j in (0..imax).rev() {
        if prob[j] < half {
            break;
        }
        lo = eps[j];
    }
    for j in imax..eps.len() {
        if prob[j] < half {
            break;
        }
        hi = eps[j];
    }
    let width0 = ((hi - lo).abs() / 2.355).max(span / eps.len() as f64);

    let x0 = [median, pmax - median, eps[imax], width0.ln()];
    let out = lm::minimize(
        |x, r| {
            let (base, amp, center, w) = (x[0], x[1], x[2], x[3].exp());
            r.clear();
            r.extend(eps.iter().zip(prob).map(|(&e, &p)| {
                let z = (e - center) / w;
                base + amp * (-0.5 * z * z).exp() - p
            }));
            Ok(())
        },
        &x0,
        &["baseline", "amplitude", "center", "ln_width"],
        &LmOptions::default(),
    )
    .ok()?;
    if !out.converged {
        return None;
    }
    let cov = out.covariance();
    let se = cov[(2, 2)].max(0.0).sqrt();
    Some((out.x[2], se))
}

/// 4-parameter nonlinear fit of the peak locus with g·μ_B fixed.
///
/// Peaks only on one side of B₀ leave the field offset poorly constrained;
/// that case carries a warning and a widened B₀ variance.
pub fn fit_funnel(peaks: &[FunnelPeak], g_mu_b_uev_per_ut: f64) -> Result<FunnelFit> {
    if peaks.len() < 5 {
        return Err(Error::invalid("funnel fit needs >= 5 peaks"));
    }
    if g_mu_b_uev_per_ut <= 0.0 {
        return Err(Error::invalid("g_mu_b must be > 0"));
    }

    // Initial values from the locus geometry.
    let (mut y0, mut depth_b, mut eps_min) = (f64::NEG_INFINITY, 0.0, f64::INFINITY);
    for p in peaks {
        if p.epsilon_peak_uev > y0 {
            y0 = p.epsilon_peak_uev;
        }
        if p.epsilon_peak_uev < eps_min {
            eps_min = p.epsilon_peak_uev;
            depth_b = p.b_ut;
        }
    }
    let depth = (y0 - eps_min).max(1e-9);
    // The deep region ε ≤ y₀ - depth/2 extends to |B - B₀| = sqrt(3) B⊥.
    let half_level = y0 - depth / 2.0;
    let mut half_dist = 0.0f64;
    for p in peaks {
        if p.epsilon_peak_uev <= half_level {
            half_dist = half_dist.max((p.b_ut - depth_b).abs());
        }
    }
    let b_perp0 = if half_dist > 0.0 {
        half_dist / 3f64.sqrt()
    } else {
        ((peaks[peaks.len() - 1].b_ut - peaks[0].b_ut).abs() / 4.0).max(1e-6)
    };
    let tc0 = (depth * g_mu_b_uev_per_ut * b_perp0).sqrt();

    let weights: Vec<f64> = peaks
        .iter()
        .map(|p| {
            if p.peak_sigma_uev > 0.0 {
                1.0 / p.peak_sigma_uev
            } else {
                1.0
            }
        })
        .collect();
    let x0 = [tc0.ln(), depth_b, b_perp0.ln(), y0];
    let out = lm::minimize(
        |x, r| {
            let (tc, b0, b_perp, y0) = (x[0].exp(), x[1], x[2].exp(), x[3]);
            r.clear();
            r.extend(peaks.iter().zip(&weights).map(|(p, w)| {
                w * (funnel_epsilon(p.b_ut, tc, b0, b_perp, y0, g_mu_b_uev_per_ut)
                    - p.epsilon_peak_uev)
            }));
            Ok(())
        },
        &x0,
        &["ln_tc", "b0", "ln_b_perp", "y0"],
        &LmOptions::default(),
    )?;
    if !out.converged {
        return Err(Error::NonConvergence {
            iterations: out.iterations,
        });
    }

    let (tc, b0, b_perp, y0) = (out.x[0].exp(), out.x[1], out.x[2].exp(), out.x[3]);
    let cov_internal = out.covariance();
    let scale = [tc, 1.0, b_perp, 1.0];
    let mut covariance = vec![vec![0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            covariance[i][j] = cov_internal[(i, j)] * scale[i] * scale[j];
        }
    }

    let mut warnings = Vec::new();
    let one_sided = peaks.iter().all(|p| p.b_ut >= b0) || peaks.iter().all(|p| p.b_ut <= b0);
    if one_sided {
        warnings.push("peaks lie on one side of B0; its uncertainty is widened 4x".to_string());
        for j in 0..4 {
            covariance[1][j] *= 2.0;
            covariance[j][1] *= 2.0;
        }
    }

    Ok(FunnelFit {
        tc_uev: tc,
        b0_ut: b0,
        b_perp_ut: b_perp,
        y0_uev: y0,
        g_mu_b_uev_per_ut,
        covariance,
        warnings,
    })
}

/// Synthetic map generator for round trips: a Gaussian ridge of the given
/// width and amplitude along the funnel locus over a baseline, with optional
/// additive probability noise (clamped back into [0, 1]).
#[allow(clippy::too_many_arguments)]
pub fn synthetic_map(
    b_grid_ut: &[f64],
    epsilon_grid_uev: &[f64],
    truth: (f64, f64, f64, f64),
    g_mu_b: f64,
    baseline: f64,
    amplitude: f64,
    ridge_width_uev: f64,
    noise: Option<(f64, u64)>,
) -> FunnelMap {
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;
    use rand_distr::StandardNormal;

    let (tc, b0, b_perp, y0) = truth;
    let mut rng = noise.map(|(_, seed)| ChaCha12Rng::seed_from_u64(seed));
    let probability = b_grid_ut
        .iter()
        .map(|&b| {
            let center = funnel_epsilon(b, tc, b0, b_perp, y0, g_mu_b);
            epsilon_grid_uev
                .iter()
                .map(|&e| {
                    let z = (e - center) / ridge_width_uev;
                    let mut p = baseline + amplitude * (-0.5 * z * z).exp();
                    if let (Some(rng), Some((sigma, _))) = (rng.as_mut(), noise) {
                        let n: f64 = rng.sample(StandardNormal);
                        p += sigma * n;
                    }
                    p.clamp(0.0, 1.0)
                })
                .collect()
        })
        .collect();
    FunnelMap {
        b_grid_ut: b_grid_ut.to_vec(),
        epsilon_grid_uev: epsilon_grid_uev.to_vec(),
        probability,
    }
}

/// Default gyromagnetic energy per field (g = 2), μeV/μT.
pub fn default_g_mu_b() -> f64 {
    G_MU_B_UEV_PER_UT
}
