//! Current-noise budget of the readout chain.
//!
//! White voltage densities (Johnson, shot, amplifier input) refer to the
//! shunt resistor and convert to a current rms through the measurement
//! filter's equivalent noise bandwidth; 1/f charge noise is gate-referred
//! and needs a caller-supplied current sensitivity. Per-source broadenings
//! add in quadrature.
//!
//! The filter is a boxcar average of duration τ_m per segment, or the
//! difference of two adjacent boxcars for the subtract-reference
//! measurement. Closed forms: a boxcar's ENBW is 1/(2τ), a differential
//! pair's is 1/τ; the differential 1/f integral is scale-free,
//! `∫ (1/f) |H|² df = 4 ln 2`.

use serde::{Deserialize, Serialize};

use crate::consts::{E_CHARGE_SI, KB_SI};
use crate::error::{Error, Result};

/// Measurement filter shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterShape {
    /// Single boxcar average of duration τ_m.
    Boxcar,
    /// Difference of two adjacent boxcars of duration τ_m each
    /// (signal-minus-reference); rolls off at DC.
    DifferentialBoxcar,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub shape: FilterShape,
    /// Integration time per segment τ_m, μs.
    pub integration_time_us: f64,
    /// Low-frequency cutoff for 1/f integration, Hz. Required for the plain
    /// boxcar (its 1/f integral diverges at DC); defaults to the inverse of
    /// one pulse-sequence repetition when the caller has one.
    #[serde(default)]
    pub low_freq_cutoff_hz: Option<f64>,
    /// Overrides the shape-derived equivalent noise bandwidth for white
    /// sources; lets a known hardware ENBW be used directly.
    #[serde(default)]
    pub enbw_override_hz: Option<f64>,
}

impl FilterSpec {
    pub fn validate(&self) -> Result<()> {
        if self.integration_time_us <= 0.0 {
            return Err(Error::invalid("integration_time_us must be > 0"));
        }
        if let Some(f) = self.low_freq_cutoff_hz {
            if f <= 0.0 {
                return Err(Error::invalid("low_freq_cutoff_hz must be > 0"));
            }
        }
        if let Some(f) = self.enbw_override_hz {
            if f <= 0.0 {
                return Err(Error::invalid("enbw_override_hz must be > 0"));
            }
        }
        Ok(())
    }

    /// Equivalent noise bandwidth for white sources, Hz.
    pub fn enbw_hz(&self) -> f64 {
        if let Some(f) = self.enbw_override_hz {
            return f;
        }
        let tau_s = self.integration_time_us * 1e-6;
        match self.shape {
            FilterShape::Boxcar => 1.0 / (2.0 * tau_s),
            FilterShape::DifferentialBoxcar => 1.0 / tau_s,
        }
    }
}

/// Squared magnitude response |H(f)|² of the filter, unit signal gain at the
/// measurement (boxcar: DC; differential: per-segment contrast).
pub fn filter_power_response(shape: FilterShape, f_hz: f64, tau_s: f64) -> f64 {
    let x = std::f64::consts::PI * f_hz * tau_s;
    let sinc2 = if x.abs() < 1e-8 {
        1.0 - x * x / 3.0
    } else {
        (x.sin() / x).powi(2)
    };
    match shape {
        FilterShape::Boxcar => sinc2,
        FilterShape::DifferentialBoxcar => 4.0 * (x.sin() * x.sin()) * sinc2,
    }
}

/// One noise source of the readout chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSource {
    /// Thermal noise of the shunt resistor.
    Johnson { r_ohm: f64, t_k: f64 },
    /// Shot noise of the DC sensor current, voltage-referred across the shunt.
    Shot { i_dc_a: f64, r_ohm: f64 },
    /// Input-referred amplifier voltage noise.
    Amplifier { voltage_density_pv_rthz: f64 },
    /// Gate-referred 1/f charge noise; the density is quoted at 1 Hz and the
    /// sensitivity maps gate μV to sensor pA.
    OneOverF {
        gate_density_uv_rthz_at_1hz: f64,
        sensitivity_pa_per_uv: f64,
    },
}

impl NoiseSource {
    pub fn label(&self) -> &'static str {
        match self {
            NoiseSource::Johnson { .. } => "johnson",
            NoiseSource::Shot { .. } => "shot",
            NoiseSource::Amplifier { .. } => "amplifier",
            NoiseSource::OneOverF { .. } => "one_over_f",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            NoiseSource::Johnson { r_ohm, t_k } => r_ohm > 0.0 && t_k > 0.0,
            NoiseSource::Shot { i_dc_a, r_ohm } => i_dc_a >= 0.0 && r_ohm > 0.0,
            NoiseSource::Amplifier {
                voltage_density_pv_rthz,
            } => voltage_density_pv_rthz >= 0.0,
            NoiseSource::OneOverF {
                gate_density_uv_rthz_at_1hz,
                sensitivity_pa_per_uv,
            } => gate_density_uv_rthz_at_1hz >= 0.0 && sensitivity_pa_per_uv >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("noise source parameters out of range"))
        }
    }
}

/// Johnson voltage density `sqrt(4 k_B T R)`, pV/√Hz.
pub fn johnson_density_pv(r_ohm: f64, t_k: f64) -> f64 {
    (4.0 * KB_SI * t_k * r_ohm).sqrt() * 1e12
}

/// Shot-noise voltage density across the shunt, `sqrt(2 e I) R`, pV/√Hz.
pub fn shot_density_pv(i_dc_a: f64, r_ohm: f64) -> f64 {
    (2.0 * E_CHARGE_SI * i_dc_a).sqrt() * r_ohm * 1e12
}

/// Current-referred rms broadening of one source through the filter, pA.
///
/// White sources use the filter ENBW; 1/f integrates the spectral density
/// against |H(f)|² numerically (error if the plain boxcar has no
/// low-frequency cutoff).
pub fn integrate_broadening(source: &NoiseSource, filter: &FilterSpec, shunt_r_ohm: f64) -> Result<f64> {
    source.validate()?;
    filter.validate()?;
    if shunt_r_ohm <= 0.0 {
        return Err(Error::invalid("shunt resistance must be > 0"));
    }
    let density_pv = match *source {
        NoiseSource::Johnson { r_ohm, t_k } => johnson_density_pv(r_ohm, t_k),
        NoiseSource::Shot { i_dc_a, r_ohm } => shot_density_pv(i_dc_a, r_ohm),
        NoiseSource::Amplifier {
            voltage_density_pv_rthz,
        } => voltage_density_pv_rthz,
        NoiseSource::OneOverF {
            gate_density_uv_rthz_at_1hz,
            sensitivity_pa_per_uv,
        } => {
            let amp_pa_rthz = gate_density_uv_rthz_at_1hz * sensitivity_pa_per_uv;
            let integral = one_over_f_integral(filter)?;
            return Ok(amp_pa_rthz * integral.sqrt());
        }
    };
    // volts → amps through the shunt, then through the ENBW
    let rms_a = density_pv * 1e-12 / shunt_r_ohm * filter.enbw_hz().sqrt();
    Ok(rms_a * 1e12)
}

/// `∫ (1 Hz / f) |H(f)|² df` for the 1/f shape, dimensionless.
fn one_over_f_integral(filter: &FilterSpec) -> Result<f64> {
    let tau_s = filter.integration_time_us * 1e-6;
    match filter.shape {
        FilterShape::Boxcar => {
            let f_lo = filter.low_freq_cutoff_hz.ok_or(Error::MissingCutoff)?;
            Ok(integrate_over_f(FilterShape::Boxcar, tau_s, f_lo))
        }
        FilterShape::DifferentialBoxcar => {
            // Converges at DC; respect a cutoff when one is supplied.
            let f_lo = filter.low_freq_cutoff_hz.unwrap_or(0.0);
            Ok(integrate_over_f(FilterShape::DifferentialBoxcar, tau_s, f_lo))
        }
    }
}

/// Numerical `∫_{f_lo}^{∞} (1/f) |H|² df` by per-decade Simpson panels plus
/// an averaged-sinc tail.
fn integrate_over_f(shape: FilterShape, tau_s: f64, f_lo_hz: f64) -> f64 {
    let f_start = if f_lo_hz > 0.0 { f_lo_hz } else { 1e-9 / tau_s };
    let f_end = 2e3 / tau_s;
    let mut total = 0.0;
    let mut a = f_start;
    while a < f_end {
        let b = (a * 10.0).min(f_end);
        total += simpson(|f| filter_power_response(shape, f, tau_s) / f, a, b, 4000);
        a = b;
    }
    // Tail: |H|² averages to 1/(2(πfτ)²) (boxcar) or 2·that (differential).
    let avg = match shape {
        FilterShape::Boxcar => 0.5,
        FilterShape::DifferentialBoxcar => 1.0,
    };
    let c = avg / (std::f64::consts::PI * tau_s).powi(2);
    total += c / (2.0 * f_end * f_end);
    total
}

fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = if n % 2 == 0 { n } else { n + 1 };
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let x = a + i as f64 * h;
        s += f(x) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Per-source and total current broadening.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    /// (source label, rms pA) per source.
    pub per_source_pa: Vec<(String, f64)>,
    /// Quadrature total, pA.
    pub total_pa: f64,
}

impl BudgetReport {
    /// Quadrature combination of already-known component broadenings.
    pub fn from_components(components: &[(&str, f64)]) -> Self {
        let total = components.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        BudgetReport {
            per_source_pa: components
                .iter()
                .map(|(n, v)| (n.to_string(), *v))
                .collect(),
            total_pa: total,
        }
    }
}

/// Integrates every source through the shared filter and combines them in
/// quadrature.
pub fn total_budget(
    sources: &[NoiseSource],
    filter: &FilterSpec,
    shunt_r_ohm: f64,
) -> Result<BudgetReport> {
    if sources.is_empty() {
        return Err(Error::invalid("noise budget needs >= 1 source"));
    }
    let mut per_source = Vec::with_capacity(sources.len());
    for s in sources {
        let pa = integrate_broadening(s, filter, shunt_r_ohm)?;
        per_source.push((s.label().to_string(), pa));
    }
    let total = per_source.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
    Ok(BudgetReport {
        per_source_pa: per_source,
        total_pa: total,
    })
}
