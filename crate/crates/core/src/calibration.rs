//! Lever-arm extraction and voltage-to-energy scale factors.
//!
//! The charge-transition width in gate volts grows with refrigerator
//! temperature as `ΔV(T_MC) = k_B sqrt(T_MC² + T_e²) / α`; fitting width vs.
//! temperature yields the lever arm α (eV/V) and the saturated electron
//! temperature T_e. Combining two gates' lever arms with their
//! cross-capacitances gives the scale factor converting a detuning voltage
//! sweep to energy.

use serde::{Deserialize, Serialize};

use crate::consts::KB_UEV_PER_K;
use crate::error::{Error, Result};
use crate::lm::{self, LmOptions};

/// Charge-transition width vs. refrigerator base temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureSweep {
    /// (T_MC in K, width in V) samples.
    pub points: Vec<(f64, f64)>,
    pub gate_label: String,
}

impl TemperatureSweep {
    pub fn validate(&self) -> Result<()> {
        if self.points.len() < 4 {
            return Err(Error::invalid("temperature sweep needs >= 4 points"));
        }
        for &(t, w) in &self.points {
            if t < 0.0 || !t.is_finite() {
                return Err(Error::invalid("T_MC must be finite and >= 0"));
            }
            if w <= 0.0 || !w.is_finite() {
                return Err(Error::invalid("width must be finite and > 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeverArmResult {
    /// Lever arm α, eV/V.
    pub alpha_ev_per_v: f64,
    /// Electron temperature T_e, K.
    pub electron_temp_k: f64,
    /// RMS width residual, V.
    pub residual_v: f64,
}

/// Model width in volts: `k_B sqrt(T_MC² + T_e²) / α` with k_B in eV/K.
pub fn width_model_v(t_mc_k: f64, alpha_ev_per_v: f64, t_e_k: f64) -> f64 {
    let kb_ev_per_k = KB_UEV_PER_K * 1e-6;
    kb_ev_per_k * (t_mc_k * t_mc_k + t_e_k * t_e_k).sqrt() / alpha_ev_per_v
}

/// Two-parameter (α, T_e) least-squares fit of a temperature sweep.
pub fn fit_lever_arm(sweep: &TemperatureSweep) -> Result<LeverArmResult> {
    sweep.validate()?;
    let widths: Vec<f64> = sweep.points.iter().map(|p| p.1).collect();
    let (wmin, wmax) = widths
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &w| {
            (a.min(w), b.max(w))
        });
    if (wmax - wmin) / wmax < 1e-9 {
        return Err(Error::DegenerateFit(
            "all widths equal: no temperature dependence to separate alpha from T_e".into(),
        ));
    }

    let kb_ev_per_k = KB_UEV_PER_K * 1e-6;
    let t_max = sweep
        .points
        .iter()
        .map(|p| p.0)
        .fold(f64::NEG_INFINITY, f64::max);
    // High-T asymptote slope gives the alpha scale; start T_e mid-range.
    let alpha0 = (kb_ev_per_k * t_max / wmax).max(1e-6);
    let te0 = (0.3 * t_max).max(1e-3);

    let out = lm::minimize(
        |x, r| {
            let (alpha, te) = (x[0].exp(), x[1].exp());
            r.clear();
            r.extend(
                sweep
                    .points
                    .iter()
                    .map(|&(t, w)| width_model_v(t, alpha, te) - w),
            );
            Ok(())
        },
        &[alpha0.ln(), te0.ln()],
        &["ln_alpha", "ln_te"],
        &LmOptions::default(),
    )?;
    if !out.converged {
        return Err(Error::NonConvergence {
            iterations: out.iterations,
        });
    }
    Ok(LeverArmResult {
        alpha_ev_per_v: out.x[0].exp(),
        electron_temp_k: out.x[1].exp(),
        residual_v: (out.ssr / sweep.points.len() as f64).sqrt(),
    })
}

/// Lever arms, cross-capacitances, and sweep ratio entering the detuning
/// scale factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleFactorInputs {
    pub alpha_p1_ev_per_v: f64,
    pub alpha_p2_ev_per_v: f64,
    /// G_{P1,P2}: influence of gate P2 on dot P1 relative to P1's own gate.
    pub g_p1_p2: f64,
    /// G_{P2,P1}.
    pub g_p2_p1: f64,
    /// ΔV_P2 / ΔV_P1 of the detuning sweep.
    pub sweep_ratio: f64,
}

impl ScaleFactorInputs {
    pub fn validate(&self) -> Result<()> {
        if self.alpha_p1_ev_per_v <= 0.0 || self.alpha_p2_ev_per_v <= 0.0 {
            return Err(Error::invalid("lever arms must be > 0"));
        }
        if self.g_p1_p2.abs() >= 1.0 || self.g_p2_p1.abs() >= 1.0 {
            return Err(Error::invalid("|cross-capacitance| must be < 1"));
        }
        if !self.sweep_ratio.is_finite() {
            return Err(Error::invalid("sweep_ratio must be finite"));
        }
        Ok(())
    }
}

/// Energy per volt of P1 sweep:
/// `|α_P1 - α_P2 G_{P2,P1} - (ΔV_P2/ΔV_P1)(α_P2 - α_P1 G_{P1,P2})|`.
pub fn scale_factor(inputs: &ScaleFactorInputs) -> Result<f64> {
    inputs.validate()?;
    let f = (inputs.alpha_p1_ev_per_v
        - inputs.alpha_p2_ev_per_v * inputs.g_p2_p1
        - inputs.sweep_ratio * (inputs.alpha_p2_ev_per_v - inputs.alpha_p1_ev_per_v * inputs.g_p1_p2))
        .abs();
    let scale = inputs.alpha_p1_ev_per_v.max(inputs.alpha_p2_ev_per_v);
    if f < 1e-12 * scale {
        return Err(Error::DegenerateDetuningAxis);
    }
    Ok(f)
}

/// Converts a detuning voltage to μeV via the scale factor.
pub fn voltage_to_energy(delta_v: f64, factor_ev_per_v: f64) -> Result<f64> {
    if factor_ev_per_v <= 0.0 {
        return Err(Error::invalid("scale factor must be > 0"));
    }
    Ok(delta_v * factor_ev_per_v * 1e6)
}
