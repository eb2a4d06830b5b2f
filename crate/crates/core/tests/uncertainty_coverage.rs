//! Coverage of the finite-statistics intervals on simulated Gaussian-mixture
//! datasets with known η, σ_I, and populations.

mod common;

use blockade_core::uncertainty::{self, ConfidenceSpec};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

/// Draws one N-sample mixture dataset and returns the total-variance
/// estimate of η.
fn estimate_eta(
    rng: &mut ChaCha12Rng,
    n: usize,
    eta: f64,
    sigma_i: f64,
    p_t: f64,
) -> f64 {
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let mean = if rng.gen::<f64>() < p_t { eta } else { 0.0 };
        let z: f64 = rng.sample(StandardNormal);
        samples.push(mean + sigma_i * z);
    }
    let m = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|s| (s - m) * (s - m)).sum::<f64>() / n as f64;
    uncertainty::eta_from_total_variance(var, sigma_i, 1.0 - p_t, p_t).unwrap()
}

#[test]
fn eta_estimator_coverage_tracks_confidence() {
    // 1000 datasets; the η estimate must fall inside the eta_confidence
    // band around the true η with empirical frequency C within 3 binomial
    // standard errors, for C ∈ {0.68, 0.95}. Regime: η < σ_I keeps the
    // mixture kurtosis near Gaussian, where the variance-interval
    // construction is calibrated.
    let (eta, sigma_i, p_t) = (0.8, 1.0, 0.5);
    let n_per = 1000usize;
    let trials = 1000usize;

    for &confidence in &[0.68, 0.95] {
        let spec = ConfidenceSpec {
            confidence,
            shots: n_per as u64,
        };
        let (lo_frac, hi_frac) =
            uncertainty::eta_confidence(eta, sigma_i, 1.0 - p_t, p_t, &spec).unwrap();
        let (lo, hi) = (eta * lo_frac, eta * hi_frac);

        let mut rng = ChaCha12Rng::seed_from_u64(0xC0FFEE ^ confidence.to_bits());
        let mut inside = 0usize;
        for _ in 0..trials {
            let est = estimate_eta(&mut rng, n_per, eta, sigma_i, p_t);
            if est >= lo && est <= hi {
                inside += 1;
            }
        }
        let freq = inside as f64 / trials as f64;
        let se = (confidence * (1.0 - confidence) / trials as f64).sqrt();
        assert!(
            (freq - confidence).abs() <= 3.0 * se,
            "C = {confidence}: empirical {freq:.4} vs band +/- {:.4}",
            3.0 * se
        );
    }
}

#[test]
fn fig2d_bracket_never_tighter_than_shot_noise() {
    // In the overlapping regime the broadening penalty can only widen the
    // bound: the bracket multiplying the pure shot-noise width is >= 1.
    let params = common::fig2d_params(0.12);
    let sep = blockade_core::model::branch_separation(&params);
    let eta = sep.eta_linear;
    for n in [100u64, 500, 2000, 10_000] {
        let spec = ConfidenceSpec {
            confidence: 0.95,
            shots: n,
        };
        let pure = uncertainty::delta_sb_interval(
            params.delta_sb,
            &{
                let mut p = params.clone();
                p.current_sigma = 1e-12;
                p
            },
            &spec,
        )
        .unwrap();
        let full = uncertainty::delta_sb_interval(params.delta_sb, &params, &spec).unwrap();
        assert!(full >= pure, "bracket must be >= 1 (N = {n})");
        let bracket = full / pure;
        let expect = 1.0 + params.current_sigma.powi(2) / (eta * eta * 0.25);
        assert!((bracket - expect).abs() < 1e-9);
    }
}
