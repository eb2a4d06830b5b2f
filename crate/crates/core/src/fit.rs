//! Histogram fit engine.
//!
//! Estimates [`ModelParams`] from a [`Histogram2D`] by weighted nonlinear
//! least squares against the two-branch intensity model, with per-parameter
//! free/fixed masking and covariance output. A free normalization amplitude
//! maps model intensity (in (0, 1]) to counts; positivity of the tunnel
//! couplings, broadening, and temperature is enforced by fitting their logs.
//!
//! Also provides the model-light branch-midpoint estimator: per-column
//! two-component mixture splits feed per-branch anticrossing fits whose
//! midpoint distance is a model-robust Δ_SB.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::{self, LmOptions};
use crate::mixture;
use crate::model::{self, ModelParams};
use crate::sim::Histogram2D;

/// Per-cell weights of the least-squares objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    Uniform,
    /// `w = 1 / max(counts, 1)`, the counting-statistics weight.
    #[default]
    Poisson,
}

/// Free/fixed flags over the model parameters. The populations are a single
/// degree of freedom (`p_triplet`, with `p_singlet = 1 - p_triplet`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreeMask {
    pub populations: bool,
    pub detuning_offset: bool,
    pub delta_sb: bool,
    pub tc_singlet: bool,
    pub tc_triplet: bool,
    pub current_offset: bool,
    pub current_slope: bool,
    pub current_amplitude: bool,
    /// Fixed by default: tc and T_e trade off against each other and
    /// histogram fits rarely resolve both.
    pub electron_temp_energy: bool,
    pub current_sigma: bool,
}

impl Default for FreeMask {
    fn default() -> Self {
        FreeMask {
            populations: true,
            detuning_offset: true,
            delta_sb: true,
            tc_singlet: true,
            tc_triplet: true,
            current_offset: true,
            current_slope: true,
            current_amplitude: true,
            electron_temp_energy: false,
            current_sigma: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitConfig {
    pub free: FreeMask,
    pub initial: ModelParams,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub step_tolerance: f64,
    pub weight_mode: WeightMode,
}

impl FitConfig {
    pub fn new(initial: ModelParams) -> Self {
        FitConfig {
            free: FreeMask::default(),
            initial,
            max_iterations: 200,
            gradient_tolerance: 1e-8,
            step_tolerance: 1e-9,
            weight_mode: WeightMode::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.initial.validate()?;
        if !(self.free.delta_sb && self.free.detuning_offset && self.free.current_offset) {
            return Err(Error::invalid(
                "delta_sb, detuning_offset, and current_offset must be free",
            ));
        }
        if self.gradient_tolerance <= 0.0 || self.step_tolerance <= 0.0 {
            return Err(Error::invalid("tolerances must be > 0"));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be >= 1"));
        }
        Ok(())
    }
}

/// Fit output: estimate, native-unit covariance over the free parameters
/// (order given by `free_names`), and convergence diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub estimate: ModelParams,
    /// Normalization amplitude A mapping intensity to counts.
    pub norm_amplitude: f64,
    pub free_names: Vec<String>,
    /// Covariance over `free_names`, squared native units.
    pub covariance: Vec<Vec<f64>>,
    /// `sqrt(SSR)` of the weighted objective.
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
    /// Weighted SSR after each accepted step (non-increasing).
    pub objective_trace: Vec<f64>,
}

impl FitResult {
    /// Variance of one fitted parameter by name, if free.
    pub fn variance_of(&self, name: &str) -> Option<f64> {
        let i = self.free_names.iter().position(|n| n == name)?;
        Some(self.covariance[i][i])
    }
}

/// Internal coordinate transforms keeping constrained parameters in range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Transform {
    Identity,
    /// θ = exp(x), for strictly positive parameters.
    Log,
    /// θ = 1/(1+exp(-x)), for probabilities.
    Logit,
}

impl Transform {
    fn to_internal(self, theta: f64) -> f64 {
        match self {
            Transform::Identity => theta,
            Transform::Log => theta.ln(),
            Transform::Logit => {
                let p = theta.clamp(1e-9, 1.0 - 1e-9);
                (p / (1.0 - p)).ln()
            }
        }
    }

    fn to_native(self, x: f64) -> f64 {
        match self {
            Transform::Identity => x,
            Transform::Log => x.exp(),
            Transform::Logit => 1.0 / (1.0 + (-x).exp()),
        }
    }

    /// dθ/dx, for covariance back-transformation.
    fn jacobian(self, x: f64) -> f64 {
        match self {
            Transform::Identity => 1.0,
            Transform::Log => x.exp(),
            Transform::Logit => {
                let p = 1.0 / (1.0 + (-x).exp());
                p * (1.0 - p)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ParamId {
    PTriplet,
    DetuningOffset,
    DeltaSb,
    TcSinglet,
    TcTriplet,
    CurrentOffset,
    CurrentSlope,
    CurrentAmplitude,
    ElectronTempEnergy,
    CurrentSigma,
    NormAmplitude,
}

impl ParamId {
    fn name(self) -> &'static str {
        match self {
            ParamId::PTriplet => "p_triplet",
            ParamId::DetuningOffset => "detuning_offset",
            ParamId::DeltaSb => "delta_sb",
            ParamId::TcSinglet => "tc_singlet",
            ParamId::TcTriplet => "tc_triplet",
            ParamId::CurrentOffset => "current_offset",
            ParamId::CurrentSlope => "current_slope",
            ParamId::CurrentAmplitude => "current_amplitude",
            ParamId::ElectronTempEnergy => "electron_temp_energy",
            ParamId::CurrentSigma => "current_sigma",
            ParamId::NormAmplitude => "norm_amplitude",
        }
    }

    fn transform(self) -> Transform {
        match self {
            ParamId::PTriplet => Transform::Logit,
            ParamId::TcSinglet
            | ParamId::TcTriplet
            | ParamId::ElectronTempEnergy
            | ParamId::CurrentSigma
            | ParamId::NormAmplitude => Transform::Log,
            _ => Transform::Identity,
        }
    }

    fn get(self, p: &ModelParams, norm: f64) -> f64 {
        match self {
            ParamId::PTriplet => p.p_triplet,
            ParamId::DetuningOffset => p.detuning_offset,
            ParamId::DeltaSb => p.delta_sb,
            ParamId::TcSinglet => p.tc_singlet,
            ParamId::TcTriplet => p.tc_triplet,
            ParamId::CurrentOffset => p.current_offset,
            ParamId::CurrentSlope => p.current_slope,
            ParamId::CurrentAmplitude => p.current_amplitude,
            ParamId::ElectronTempEnergy => p.electron_temp_energy,
            ParamId::CurrentSigma => p.current_sigma,
            ParamId::NormAmplitude => norm,
        }
    }

    fn set(self, p: &mut ModelParams, norm: &mut f64, v: f64) {
        match self {
            ParamId::PTriplet => {
                p.p_triplet = v;
                p.p_singlet = 1.0 - v;
            }
            ParamId::DetuningOffset => p.detuning_offset = v,
            ParamId::DeltaSb => p.delta_sb = v,
            ParamId::TcSinglet => p.tc_singlet = v,
            ParamId::TcTriplet => p.tc_triplet = v,
            ParamId::CurrentOffset => p.current_offset = v,
            ParamId::CurrentSlope => p.current_slope = v,
            ParamId::CurrentAmplitude => p.current_amplitude = v,
            ParamId::ElectronTempEnergy => p.electron_temp_energy = v,
            ParamId::CurrentSigma => p.current_sigma = v,
            ParamId::NormAmplitude => *norm = v,
        }
    }
}

fn free_ids(mask: &FreeMask) -> Vec<ParamId> {
    let mut ids = Vec::new();
    let mut push = |flag, id| {
        if flag {
            ids.push(id)
        }
    };
    push(mask.populations, ParamId::PTriplet);
    push(mask.detuning_offset, ParamId::DetuningOffset);
    push(mask.delta_sb, ParamId::DeltaSb);
    push(mask.tc_singlet, ParamId::TcSinglet);
    push(mask.tc_triplet, ParamId::TcTriplet);
    push(mask.current_offset, ParamId::CurrentOffset);
    push(mask.current_slope, ParamId::CurrentSlope);
    push(mask.current_amplitude, ParamId::CurrentAmplitude);
    push(mask.electron_temp_energy, ParamId::ElectronTempEnergy);
    push(mask.current_sigma, ParamId::CurrentSigma);
    ids.push(ParamId::NormAmplitude);
    ids
}

/// Unit string of a fitted parameter, for serialized reports.
pub fn unit_of(name: &str) -> &'static str {
    match name {
        "p_singlet" | "p_triplet" => "fraction",
        "detuning_offset" | "delta_sb" | "tc_singlet" | "tc_triplet" | "electron_temp_energy" => {
            "ueV"
        }
        "current_offset" | "current_amplitude" | "current_sigma" => "pA",
        "current_slope" => "pA/ueV",
        "norm_amplitude" => "counts",
        _ => "",
    }
}

/// Weighted Levenberg-Marquardt fit of the intensity model to a histogram.
///
/// Non-convergence within `max_iterations` is flagged on the result, not an
/// error; a singular Jacobian is an error naming the degenerate parameters.
pub fn fit(hist: &Histogram2D, config: &FitConfig) -> Result<FitResult> {
    hist.validate()?;
    config.validate()?;
    let total = hist.total_count();
    if total <= 0.0 {
        return Err(Error::invalid("histogram has no counts"));
    }

    let ids = free_ids(&config.free);
    let names: Vec<&str> = ids.iter().map(|id| id.name()).collect();

    let centers: Vec<f64> = (0..hist.n_bins()).map(|k| hist.bin_center(k)).collect();
    let weights: Vec<Vec<f64>> = hist
        .counts
        .iter()
        .map(|col| {
            col.iter()
                .map(|&n| match config.weight_mode {
                    WeightMode::Uniform => 1.0,
                    WeightMode::Poisson => 1.0 / n.max(1.0),
                })
                .collect()
        })
        .collect();

    // Initial normalization: match total model intensity to total counts.
    let mut z_total = 0.0;
    for (j, &eps) in hist.detuning_uev.iter().enumerate() {
        let _ = j;
        for &c in &centers {
            z_total += model::intensity(eps, c, &config.initial);
        }
    }
    let norm0 = (total / z_total.max(1e-12)).max(1e-12);

    let x0: Vec<f64> = ids
        .iter()
        .map(|id| id.transform().to_internal(id.get(&config.initial, norm0)))
        .collect();

    let base = config.initial.clone();
    let eval_params = |x: &[f64]| -> (ModelParams, f64) {
        let mut p = base.clone();
        let mut norm = norm0;
        for (id, &xi) in ids.iter().zip(x) {
            id.set(&mut p, &mut norm, id.transform().to_native(xi));
        }
        (p, norm)
    };

    let opts = LmOptions {
        max_iterations: config.max_iterations,
        gradient_tolerance: config.gradient_tolerance,
        step_tolerance: config.step_tolerance,
    };

    let outcome = lm::minimize(
        |x, r| {
            let (p, norm) = eval_params(x);
            r.clear();
            for (j, &eps) in hist.detuning_uev.iter().enumerate() {
                let base_cur = p.current_offset + p.current_slope * eps;
                let inv_two_s2 = 1.0 / (2.0 * p.current_sigma * p.current_sigma);
                for (k, &c) in centers.iter().enumerate() {
                    // inlined intensity to keep the hot loop allocation-free
                    let rc = c - base_cur;
                    let gs = model::branch_current(
                        eps - p.detuning_offset,
                        p.tc_singlet,
                        p.current_amplitude,
                        p.electron_temp_energy,
                    );
                    let gt = model::branch_current(
                        eps - p.detuning_offset - p.delta_sb,
                        p.tc_triplet,
                        p.current_amplitude,
                        p.electron_temp_energy,
                    );
                    let z = p.p_singlet * (-(rc - gs) * (rc - gs) * inv_two_s2).exp()
                        + p.p_triplet * (-(rc - gt) * (rc - gt) * inv_two_s2).exp();
                    r.push(weights[j][k].sqrt() * (norm * z - hist.counts[j][k]));
                }
            }
            Ok(())
        },
        &x0,
        &names,
        &opts,
    )?;

    let (estimate, norm_amplitude) = eval_params(&outcome.x);
    if !outcome.converged {
        // Result still returned; caller decides whether to treat as fatal.
    }

    // Covariance in native units via the transform Jacobian. Poisson
    // weights are inverse variances already, so their covariance is the
    // unscaled normal-equations inverse; uniform weights estimate the
    // residual variance from the fit.
    let cov_internal = match config.weight_mode {
        WeightMode::Poisson => outcome.covariance_unit.clone(),
        WeightMode::Uniform => outcome.covariance(),
    };
    let scale: Vec<f64> = ids
        .iter()
        .zip(&outcome.x)
        .map(|(id, &x)| id.transform().jacobian(x))
        .collect();
    let p = ids.len();
    let mut covariance = vec![vec![0.0; p]; p];
    for i in 0..p {
        for j in 0..p {
            covariance[i][j] = cov_internal[(i, j)] * scale[i] * scale[j];
        }
    }

    let mut warnings = Vec::new();
    if config.free.electron_temp_energy {
        for tc_name in ["tc_singlet", "tc_triplet"] {
            if let (Some(i), Some(j)) = (
                names.iter().position(|n| *n == tc_name),
                names.iter().position(|n| *n == "electron_temp_energy"),
            ) {
                let denom = (covariance[i][i] * covariance[j][j]).sqrt();
                if denom > 0.0 {
                    let corr = covariance[i][j] / denom;
                    if corr.abs() > 0.95 {
                        warnings.push(format!(
                            "degenerate parameters: corr({tc_name}, electron_temp_energy) = {corr:.3}"
                        ));
                    }
                }
            }
        }
    }
    if !outcome.converged {
        warnings.push(format!(
            "fit did not converge within {} iterations",
            config.max_iterations
        ));
    }

    Ok(FitResult {
        estimate,
        norm_amplitude,
        free_names: names.iter().map(|s| s.to_string()).collect(),
        covariance,
        residual_norm: outcome.ssr.sqrt(),
        iterations: outcome.iterations,
        converged: outcome.converged,
        warnings,
        objective_trace: outcome.objective_trace,
    })
}

// ---------------------------------------------------------------------------
// Initial guess
// ---------------------------------------------------------------------------

struct ColumnStats {
    /// Column order sorted by ascending detuning.
    order: Vec<usize>,
    eps: Vec<f64>,
    means: Vec<f64>,
    vars: Vec<f64>,
}

fn column_stats(hist: &Histogram2D) -> ColumnStats {
    let n = hist.n_columns();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| hist.detuning_uev[a].partial_cmp(&hist.detuning_uev[b]).unwrap());
    let eps: Vec<f64> = order.iter().map(|&j| hist.detuning_uev[j]).collect();
    let means: Vec<f64> = order.iter().map(|&j| hist.column_mean(j)).collect();
    let vars: Vec<f64> = order.iter().map(|&j| hist.column_variance(j)).collect();
    ColumnStats {
        order,
        eps,
        means,
        vars,
    }
}

/// Shared-slope regression through the two plateau regions: returns
/// (slope m, low-side intercept, high-side intercept, residual rms).
fn plateau_regression(eps: &[f64], means: &[f64], k: usize) -> (f64, f64, f64, f64) {
    let n = eps.len();
    // Normal equations for [m, c_lo, c_hi].
    let mut a = nalgebra::Matrix3::<f64>::zeros();
    let mut b = nalgebra::Vector3::<f64>::zeros();
    let mut add = |x: f64, y: f64, hi: bool| {
        let row = [x, if hi { 0.0 } else { 1.0 }, if hi { 1.0 } else { 0.0 }];
        for i in 0..3 {
            for j in 0..3 {
                a[(i, j)] += row[i] * row[j];
            }
            b[i] += row[i] * y;
        }
    };
    for j in 0..k {
        add(eps[j], means[j], false);
    }
    for j in (n - k)..n {
        add(eps[j], means[j], true);
    }
    let sol = a
        .lu()
        .solve(&b)
        .unwrap_or_else(|| nalgebra::Vector3::new(0.0, means[0], means[n - 1]));
    let (m, c_lo, c_hi) = (sol[0], sol[1], sol[2]);
    let mut ss = 0.0;
    for j in 0..k {
        let r = means[j] - (m * eps[j] + c_lo);
        ss += r * r;
    }
    for j in (n - k)..n {
        let r = means[j] - (m * eps[j] + c_hi);
        ss += r * r;
    }
    (m, c_lo, c_hi, (ss / (2 * k) as f64).sqrt())
}

/// Interpolated detunings where the normalized, detrended transition crosses
/// 10% and 90%.
pub(crate) fn ten_ninety_width(eps: &[f64], u: &[f64]) -> Option<(f64, f64)> {
    let cross = |level: f64, from_low: bool| -> Option<f64> {
        let n = eps.len();
        let idx: Box<dyn Iterator<Item = usize>> = if from_low {
            Box::new(0..n - 1)
        } else {
            Box::new((0..n - 1).rev())
        };
        for j in idx {
            let (u0, u1) = (u[j], u[j + 1]);
            if (u0 - level) * (u1 - level) <= 0.0 && u0 != u1 {
                let t = (level - u0) / (u1 - u0);
                return Some(eps[j] + t * (eps[j + 1] - eps[j]));
            }
        }
        None
    };
    let e10 = cross(0.1, true)?;
    let e90 = cross(0.9, false)?;
    if e90 > e10 {
        Some((e10, e90))
    } else {
        None
    }
}

/// Data-driven starting point for [`fit`].
///
/// Offsets and amplitude come from the asymptotic plateaus, ε0 from the
/// steepest column of the mean-current trace, σ_I from the plateau columns,
/// tc from the 10-90% transition width, and Δ_SB from the excess column
/// variance at mid-transition (total-variance method). Populations start at
/// ½; the electron temperature starts at tc/5 (it is fixed by default and
/// only anchors the tanh scale).
pub fn initial_guess(hist: &Histogram2D) -> Result<ModelParams> {
    hist.validate()?;
    let n = hist.n_columns();
    if n < 5 {
        return Err(Error::invalid("initial guess needs >= 5 detuning columns"));
    }
    let stats = column_stats(hist);
    let k = (n / 10).max(2);
    let (m, c_lo, c_hi, plateau_rms) = plateau_regression(&stats.eps, &stats.means, k);

    let sigma_i = {
        let mut plateau_sds: Vec<f64> = (0..k)
            .chain(n - k..n)
            .map(|j| stats.vars[j].max(0.0).sqrt())
            .collect();
        plateau_sds.sort_by(|a, b| a.partial_cmp(b).unwrap());
        plateau_sds[plateau_sds.len() / 2]
    };

    // Transition containment: the plateau swing must dominate both the
    // plateau regression scatter and the shot-noise floor of a column mean.
    let min_count = (0..n)
        .map(|j| hist.column_count(j))
        .fold(f64::INFINITY, f64::min)
        .max(1.0);
    let mean_se = sigma_i / min_count.sqrt();
    let swing = c_hi - c_lo;
    if swing.abs() < 6.0 * plateau_rms.max(mean_se).max(1e-12) {
        return Err(Error::TransitionNotContained(format!(
            "plateau swing {:.3e} below noise floor {:.3e}",
            swing.abs(),
            plateau_rms.max(mean_se)
        )));
    }

    // Normalized, detrended transition trace: 0 on the low-ε plateau, 1 on
    // the high-ε plateau.
    let u: Vec<f64> = stats
        .eps
        .iter()
        .zip(&stats.means)
        .map(|(&e, &mm)| (mm - (m * e + c_lo)) / swing)
        .collect();

    // Steepest column of the trace (interior only).
    let slope = |j: usize| ((u[j + 1] - u[j - 1]) / (stats.eps[j + 1] - stats.eps[j - 1])).abs();
    let mut j_star = None;
    let mut best = 0.0;
    for j in 1..n - 1 {
        let d = slope(j);
        if d > best {
            best = d;
            j_star = Some(j);
        }
    }
    let j_star = j_star.ok_or_else(|| {
        Error::TransitionNotContained("no interior slope maximum".to_string())
    })?;
    if j_star < k || j_star >= n - k {
        return Err(Error::TransitionNotContained(
            "steepest point inside the asymptotic margin".to_string(),
        ));
    }

    let grid_step = (stats.eps[n - 1] - stats.eps[0]) / (n - 1) as f64;
    let (e10, e90) = ten_ninety_width(&stats.eps, &u).ok_or_else(|| {
        Error::TransitionNotContained("10-90% crossings not found".to_string())
    })?;
    let width = e90 - e10;
    let i_amp = swing / 2.0;
    let i_offset = (c_hi + c_lo) / 2.0;

    // A second steep region well away from the first marks resolved
    // branches; its distance beats the total-variance splitting estimate.
    let mut j_second = None;
    let mut second_best = 0.0;
    for j in 1..n - 1 {
        if (stats.eps[j] - stats.eps[j_star]).abs() > width / 2.0 {
            let d = slope(j);
            if d > second_best {
                second_best = d;
                j_second = Some(j);
            }
        }
    }
    let two_transitions = j_second.filter(|_| second_best > 0.35 * best);

    let (e0, tc, delta_sb) = if let Some(j2) = two_transitions {
        let d = (stats.eps[j2] - stats.eps[j_star]).abs();
        let e0 = stats.eps[j_star.min(j2)];
        // total 10-90 width covers both branch transitions plus the split
        let tc = ((width - d) / 8.0).max(grid_step / 4.0);
        (e0, tc, d)
    } else {
        let e0 = stats.eps[j_star];
        let tc = (width / 4.0).max(grid_step / 4.0);
        // Total-variance estimate of the splitting at mid-transition.
        let kbte = (tc / 5.0).max(1e-3);
        let excess = stats.vars[j_star] - sigma_i * sigma_i;
        let lambda = (i_amp.abs() / (2.0 * tc)) * (tc / kbte).tanh();
        let delta_sb = if excess > 0.0 && lambda > 0.0 {
            (4.0 * excess).sqrt() / lambda
        } else {
            grid_step
        };
        (e0, tc, delta_sb)
    };
    let kbte = (tc / 5.0).max(1e-3);

    let params = ModelParams {
        p_singlet: 0.5,
        p_triplet: 0.5,
        detuning_offset: e0,
        delta_sb: delta_sb.clamp(grid_step / 10.0, (stats.eps[n - 1] - stats.eps[0]).abs()),
        tc_singlet: tc,
        tc_triplet: tc,
        current_offset: i_offset,
        current_slope: m,
        current_amplitude: i_amp,
        electron_temp_energy: kbte,
        current_sigma: sigma_i.max(1e-6 * i_amp.abs().max(1e-6)),
    };
    params.validate()?;
    Ok(params)
}

// ---------------------------------------------------------------------------
// Model-light branch midpoints
// ---------------------------------------------------------------------------

/// Midpoint detunings of the singlet and triplet branches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchMidpoints {
    /// Midpoint of the branch transitioning at smaller detuning (singlet by
    /// convention), μeV.
    pub epsilon_singlet: f64,
    pub epsilon_triplet: f64,
    /// Columns where the two current modes were resolvable.
    pub resolved_columns: usize,
}

impl BranchMidpoints {
    /// Model-robust splitting estimate.
    pub fn delta_sb(&self) -> f64 {
        self.epsilon_triplet - self.epsilon_singlet
    }
}

/// Splits each detuning column into two current modes, reconstructs the
/// per-branch mean-current traces, and fits each trace to a shifted
/// anticrossing curve. The midpoint distance estimates Δ_SB independently of
/// most lineshape details.
///
/// Fails with [`Error::BranchesUnresolved`] when no column shows two modes.
pub fn profile_midpoints(hist: &Histogram2D) -> Result<BranchMidpoints> {
    hist.validate()?;
    let n = hist.n_columns();
    if n < 5 {
        return Err(Error::invalid("midpoints need >= 5 detuning columns"));
    }
    let stats = column_stats(hist);
    let k = (n / 10).max(2);
    let a_lo: f64 = stats.means[..k].iter().sum::<f64>() / k as f64;
    let a_hi: f64 = stats.means[n - k..].iter().sum::<f64>() / k as f64;

    let centers: Vec<f64> = (0..hist.n_bins()).map(|b| hist.bin_center(b)).collect();
    let mut singlet_trace = stats.means.clone();
    let mut triplet_trace = stats.means.clone();
    let mut resolved_columns = 0;
    for (sorted_j, &col) in stats.order.iter().enumerate() {
        let fitres = mixture::fit_two_component(&centers, &hist.counts[col]);
        if let Ok(mx) = fitres {
            if mx.resolved(2.0) {
                resolved_columns += 1;
                // The branch that has already transitioned sits at the
                // (2,0)-side level a_hi; the other still at a_lo. The singlet
                // transitions first (at smaller ε).
                let (near_hi, near_lo) = if (mx.mean_hi - a_hi).abs() < (mx.mean_lo - a_hi).abs() {
                    (mx.mean_hi, mx.mean_lo)
                } else {
                    (mx.mean_lo, mx.mean_hi)
                };
                singlet_trace[sorted_j] = near_hi;
                triplet_trace[sorted_j] = near_lo;
            }
        }
    }
    if resolved_columns == 0 {
        return Err(Error::BranchesUnresolved);
    }

    let eps_s = fit_branch_midpoint(&stats.eps, &singlet_trace, a_lo, a_hi)?;
    let eps_t = fit_branch_midpoint(&stats.eps, &triplet_trace, a_lo, a_hi)?;
    let (epsilon_singlet, epsilon_triplet) = if eps_s <= eps_t {
        (eps_s, eps_t)
    } else {
        (eps_t, eps_s)
    };
    Ok(BranchMidpoints {
        epsilon_singlet,
        epsilon_triplet,
        resolved_columns,
    })
}

/// Fits a shifted anticrossing curve `c0 + a (x/E) tanh(E / 2 kT)`,
/// `x = ε - ε_mid`, `E = sqrt(x² + 4 t²)`, returning ε_mid. Width and
/// thermal scale are both free (they trade off against each other, but the
/// midpoint is fixed by the odd symmetry of the curve).
fn fit_branch_midpoint(eps: &[f64], trace: &[f64], a_lo: f64, a_hi: f64) -> Result<f64> {
    let n = eps.len();
    let swing = a_hi - a_lo;
    if swing.abs() < 1e-12 {
        return Err(Error::BranchesUnresolved);
    }
    // Steepest point of this trace as the midpoint start.
    let mut j_star = n / 2;
    let mut best = 0.0;
    for j in 1..n - 1 {
        let d = ((trace[j + 1] - trace[j - 1]) / (eps[j + 1] - eps[j - 1])).abs();
        if d > best {
            best = d;
            j_star = j;
        }
    }
    let u: Vec<f64> = trace.iter().map(|&t| (t - a_lo) / swing).collect();
    let width = ten_ninety_width(eps, &u)
        .map(|(e10, e90)| e90 - e10)
        .unwrap_or((eps[n - 1] - eps[0]).abs() / 4.0);
    let t0 = (width / 4.0).max(1e-6);
    let x0 = [
        (a_lo + a_hi) / 2.0,
        swing / 2.0,
        eps[j_star],
        t0.ln(),
        (t0 / 3.0).ln(),
    ];
    let out = lm::minimize(
        |x, r| {
            let (c0, a, mid, t, kbte) = (x[0], x[1], x[2], x[3].exp(), x[4].exp());
            r.clear();
            r.extend(eps.iter().zip(trace).map(|(&e, &y)| {
                let d = e - mid;
                let gap = (d * d + 4.0 * t * t).sqrt();
                c0 + a * (d / gap) * (gap / (2.0 * kbte)).tanh() - y
            }));
            Ok(())
        },
        &x0,
        &["offset", "amplitude", "midpoint", "ln_width", "ln_kbte"],
        &LmOptions::default(),
    )?;
    if !out.converged {
        return Err(Error::NonConvergence {
            iterations: out.iterations,
        });
    }
    Ok(out.x[2])
}
