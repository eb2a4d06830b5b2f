//! Finite-statistics error analysis of the extracted splitting.
//!
//! With N shots in a histogram, the total variance of the singlet/triplet
//! current mixture bounds how well the peak separation η — and through the
//! linear expansion η = λ Δ_SB, the splitting itself — can be known:
//!
//! ```text
//! σ_tot² = σ_I² + P_S P_T η²
//! σ̃_tot² = σ_tot² (1 ± 2 erf⁻¹(C)/√N)
//! η̃      = η sqrt(1 ± 2 erf⁻¹(C)/√N · [1 + σ_I²/(η² P_S P_T)])
//! Δ̃_SB   ≈ Δ_SB ± Δ_SB · erf⁻¹(C)/√N · [1 + σ_I²/(η² P_S P_T)]
//! ```
//!
//! The quadratic penalty in σ_I/η means N must grow as (σ_I/η)⁴ to keep a
//! fixed fractional error, which sets the smallest resolvable splitting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, ModelParams};
use crate::special::erf_inv;

/// Confidence level and shot count of an interval request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceSpec {
    /// Confidence C in (0, 1).
    pub confidence: f64,
    /// Single-shot measurements N.
    pub shots: u64,
}

impl ConfidenceSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::invalid("confidence must be in (0, 1)"));
        }
        if self.shots < 2 {
            return Err(Error::invalid("shots must be >= 2"));
        }
        Ok(())
    }

    fn z_over_sqrt_n(&self) -> f64 {
        erf_inv(self.confidence) / (self.shots as f64).sqrt()
    }
}

/// Breakdown of the propagated fractional uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyReport {
    /// Propagated half-interval on Δ_SB, μeV.
    pub delta_interval_uev: f64,
    /// Shot-noise term of δη.
    pub shot_term: f64,
    /// Population term |P_S - P_T|/(2 P_T) · δP_S.
    pub population_term: f64,
    /// Broadening term σ_I²/(η² P_S P_T) · δσ_I.
    pub sigma_term: f64,
    /// Collective slope uncertainty δλ.
    pub lambda_term: f64,
    /// Combined histogram width sqrt(σ_I² + P_S P_T η²), pA.
    pub sigma_total_pa: f64,
    /// Exact asymmetric η̃/η bounds, reported when they deviate from the
    /// symmetric first-order form by more than 5%.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub asymmetric_eta_bounds: Option<(f64, f64)>,
}

/// Combined histogram variance `σ_I² + P_S P_T η²`.
pub fn total_variance(sigma_i: f64, eta: f64, p_s: f64, p_t: f64) -> Result<f64> {
    if sigma_i < 0.0 || p_s < 0.0 || p_t < 0.0 {
        return Err(Error::invalid("total_variance inputs must be non-negative"));
    }
    if (p_s + p_t - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("populations must sum to 1"));
    }
    Ok(sigma_i * sigma_i + p_s * p_t * eta * eta)
}

/// Inverts [`total_variance`] for η given an estimate of the total variance;
/// clamps at zero when the excess variance is negative (pure noise).
pub fn eta_from_total_variance(
    sigma_tot_sq: f64,
    sigma_i: f64,
    p_s: f64,
    p_t: f64,
) -> Result<f64> {
    if p_s <= 0.0 || p_t <= 0.0 {
        return Err(Error::invalid("populations must be positive to invert"));
    }
    if (p_s + p_t - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("populations must sum to 1"));
    }
    let excess = sigma_tot_sq - sigma_i * sigma_i;
    Ok((excess.max(0.0) / (p_s * p_t)).sqrt())
}

/// Finite-statistics bounds on an N-shot estimate of the total variance:
/// `σ_tot² (1 ± 2 erf⁻¹(C)/√N)`.
pub fn variance_confidence(sigma_tot_sq: f64, spec: &ConfidenceSpec) -> Result<(f64, f64)> {
    spec.validate()?;
    if sigma_tot_sq < 0.0 {
        return Err(Error::invalid("variance must be >= 0"));
    }
    let half_width = 2.0 * spec.z_over_sqrt_n();
    if half_width >= 1.0 {
        return Err(Error::IntervalUnbounded {
            confidence: spec.confidence,
            shots: spec.shots,
        });
    }
    Ok((
        sigma_tot_sq * (1.0 - half_width),
        sigma_tot_sq * (1.0 + half_width),
    ))
}

/// Fractional bounds η̃/η of an N-shot separation estimate,
/// `sqrt(1 ± 2 erf⁻¹(C)/√N · [1 + σ_I²/(η² P_S P_T)])`.
pub fn eta_confidence(
    eta: f64,
    sigma_i: f64,
    p_s: f64,
    p_t: f64,
    spec: &ConfidenceSpec,
) -> Result<(f64, f64)> {
    spec.validate()?;
    if eta <= 0.0 {
        return Err(Error::invalid("eta must be > 0"));
    }
    if p_s <= 0.0 || p_t <= 0.0 || (p_s + p_t - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("populations must be positive and sum to 1"));
    }
    let bracket = 1.0 + sigma_i * sigma_i / (eta * eta * p_s * p_t);
    let w = 2.0 * spec.z_over_sqrt_n() * bracket;
    let lower_arg = 1.0 - w;
    if lower_arg < 0.0 {
        return Err(Error::UnresolvableSeparation { argument: lower_arg });
    }
    Ok((lower_arg.sqrt(), (1.0 + w).sqrt()))
}

/// Symmetric half-interval on Δ_SB (μeV):
/// `Δ_SB · erf⁻¹(C)/√N · [1 + σ_I²/(η² P_S P_T)]` with η = λ Δ_SB from the
/// linear expansion.
pub fn delta_sb_interval(delta_sb: f64, model: &ModelParams, spec: &ConfidenceSpec) -> Result<f64> {
    spec.validate()?;
    model.validate()?;
    if delta_sb < 0.0 {
        return Err(Error::invalid("delta_sb must be >= 0"));
    }
    let mut with_delta = model.clone();
    with_delta.delta_sb = delta_sb;
    let eta = model::branch_separation(&with_delta).eta_linear.abs();
    if delta_sb == 0.0 {
        return Ok(0.0);
    }
    if eta == 0.0 {
        return Err(Error::ZeroContrast);
    }
    let bracket = 1.0 + model.current_sigma * model.current_sigma
        / (eta * eta * model.p_singlet * model.p_triplet);
    Ok(delta_sb * spec.z_over_sqrt_n() * bracket)
}

/// Fractional uncertainties of the nuisance parameters entering δη and δλ.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FractionalDeltas {
    /// δP_S, fractional.
    pub d_p_singlet: f64,
    /// δσ_I, fractional.
    pub d_sigma_i: f64,
    /// δλ, fractional, covering the correlated (t_c, I_amp, T_e) cluster.
    pub d_lambda: f64,
}

impl FractionalDeltas {
    fn validate(&self) -> Result<()> {
        if self.d_p_singlet < 0.0 || self.d_sigma_i < 0.0 || self.d_lambda < 0.0 {
            return Err(Error::invalid("fractional uncertainties must be >= 0"));
        }
        Ok(())
    }
}

/// Quadrature propagation of all resolved error terms into δΔ_SB:
/// `δΔ² = δη² + δλ²` with
/// `δη² = shot² + (|P_S-P_T|/(2 P_T) δP_S)² + (σ_I²/(η² P_S P_T) δσ_I)²`.
pub fn propagate_errors(
    deltas: &FractionalDeltas,
    model: &ModelParams,
    spec: &ConfidenceSpec,
) -> Result<UncertaintyReport> {
    deltas.validate()?;
    spec.validate()?;
    model.validate()?;
    let sep = model::branch_separation(model);
    let eta = sep.eta_linear.abs();
    if eta == 0.0 {
        return Err(Error::ZeroContrast);
    }
    let (p_s, p_t) = (model.p_singlet, model.p_triplet);
    if p_s <= 0.0 || p_t <= 0.0 {
        return Err(Error::invalid("populations must be positive"));
    }
    let noise_ratio = model.current_sigma * model.current_sigma / (eta * eta * p_s * p_t);
    let bracket = 1.0 + noise_ratio;

    let shot_term = spec.z_over_sqrt_n() * bracket;
    let population_term = (p_s - p_t).abs() / (2.0 * p_t) * deltas.d_p_singlet;
    let sigma_term = noise_ratio * deltas.d_sigma_i;
    let d_eta_sq = shot_term * shot_term + population_term * population_term + sigma_term * sigma_term;
    let d_delta = (d_eta_sq + deltas.d_lambda * deltas.d_lambda).sqrt();

    // Exact asymmetric bounds, attached when the first-order symmetric form
    // is off by more than 5%.
    let asymmetric = match eta_confidence(eta, model.current_sigma, p_s, p_t, spec) {
        Ok((lo, hi)) => {
            let sym = shot_term;
            let up = hi - 1.0;
            let down = 1.0 - lo;
            if sym > 0.0 && ((up - sym).abs() / sym > 0.05 || (down - sym).abs() / sym > 0.05) {
                Some((lo, hi))
            } else {
                None
            }
        }
        Err(_) => None,
    };

    Ok(UncertaintyReport {
        delta_interval_uev: model.delta_sb * d_delta,
        shot_term,
        population_term,
        sigma_term,
        lambda_term: deltas.d_lambda,
        sigma_total_pa: total_variance(model.current_sigma, eta, p_s, p_t)?.sqrt(),
        asymmetric_eta_bounds: asymmetric,
    })
}
