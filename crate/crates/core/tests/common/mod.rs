//! Shared helpers for the integration tests.

#![allow(dead_code)]

use blockade_core::model::ModelParams;

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Fig. 2d-like regime: overlapping branches, splitting below the coupling.
pub fn fig2d_params(sigma_i: f64) -> ModelParams {
    ModelParams {
        p_singlet: 0.5,
        p_triplet: 0.5,
        detuning_offset: 0.0,
        delta_sb: 28.1,
        tc_singlet: 40.5,
        tc_triplet: 40.5,
        current_offset: 0.0,
        current_slope: 0.0,
        current_amplitude: 1.0,
        electron_temp_energy: 8.6,
        current_sigma: sigma_i,
    }
}

/// Well-separated regime: splitting far above the coupling.
pub fn separated_params() -> ModelParams {
    ModelParams {
        p_singlet: 0.5,
        p_triplet: 0.5,
        detuning_offset: 0.0,
        delta_sb: 150.0,
        tc_singlet: 10.0,
        tc_triplet: 10.0,
        current_offset: 0.0,
        current_slope: 0.0,
        current_amplitude: 1.0,
        electron_temp_energy: 8.6,
        current_sigma: 0.31,
    }
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut xs: Vec<f64> = a.to_vec();
    let mut ys: Vec<f64> = b.to_vec();
    xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
    ys.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let (n, m) = (xs.len(), ys.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < n && j < m {
        let v = xs[i].min(ys[j]);
        while i < n && xs[i] <= v {
            i += 1;
        }
        while j < m && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    d
}

/// Two-sample KS critical value at level alpha.
pub fn ks_critical(alpha: f64, n: usize, m: usize) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}
