//! Two-component 1D Gaussian mixture estimation (EM) on weighted samples.
//!
//! Used to split per-detuning current histograms into singlet/triplet modes
//! for the model-light midpoint estimator, and as a measurement oracle in
//! tests (e.g. checking the simulated peak separation at a fixed detuning).

use crate::error::{Error, Result};

/// Fitted two-component mixture, components ordered by mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureFit {
    pub mean_lo: f64,
    pub mean_hi: f64,
    pub sigma_lo: f64,
    pub sigma_hi: f64,
    /// Weight of the low-mean component, in (0, 1).
    pub weight_lo: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl MixtureFit {
    pub fn separation(&self) -> f64 {
        self.mean_hi - self.mean_lo
    }

    /// Whether EM found two genuinely distinct modes: separation above
    /// `min_sigmas` of the wider component and neither weight collapsed.
    pub fn resolved(&self, min_sigmas: f64) -> bool {
        let sig = self.sigma_lo.max(self.sigma_hi);
        self.separation() > min_sigmas * sig
            && self.weight_lo > 0.02
            && self.weight_lo < 0.98
    }
}

fn gauss(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// Weighted 2-component EM. `values` are sample positions (bin centers),
/// `weights` their counts; weights may be fractional but must be
/// non-negative with a positive sum.
pub fn fit_two_component(values: &[f64], weights: &[f64]) -> Result<MixtureFit> {
    if values.len() != weights.len() || values.is_empty() {
        return Err(Error::invalid("mixture fit needs matching, non-empty data"));
    }
    if weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
        return Err(Error::invalid("mixture weights must be finite and >= 0"));
    }
    let wsum: f64 = weights.iter().sum();
    if wsum <= 0.0 {
        return Err(Error::invalid("mixture weights sum to zero"));
    }

    let mean: f64 = values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / wsum;
    let var: f64 = values
        .iter()
        .zip(weights)
        .map(|(v, w)| w * (v - mean) * (v - mean))
        .sum::<f64>()
        / wsum;
    let spread = var.sqrt().max(1e-12);

    // Floor keeps a component from collapsing onto a single bin.
    let bin_floor = min_spacing(values).max(1e-12) / 4.0;

    let mut mu = [mean - spread, mean + spread];
    let mut sigma = [spread.max(bin_floor); 2];
    let mut pi = [0.5, 0.5];

    let mut iterations = 0;
    let mut converged = false;
    let mut resp = vec![0.0f64; values.len()];
    while iterations < 500 {
        iterations += 1;
        // E step: responsibility of the low component.
        for (i, &x) in values.iter().enumerate() {
            let a = pi[0] * gauss(x, mu[0], sigma[0]);
            let b = pi[1] * gauss(x, mu[1], sigma[1]);
            resp[i] = if a + b > 0.0 { a / (a + b) } else { 0.5 };
        }
        // M step.
        let mut n = [0.0f64; 2];
        let mut m = [0.0f64; 2];
        for (i, (&x, &w)) in values.iter().zip(weights).enumerate() {
            n[0] += w * resp[i];
            n[1] += w * (1.0 - resp[i]);
            m[0] += w * resp[i] * x;
            m[1] += w * (1.0 - resp[i]) * x;
        }
        if n[0] < 1e-12 * wsum || n[1] < 1e-12 * wsum {
            // One component starved: no second mode.
            break;
        }
        let new_mu = [m[0] / n[0], m[1] / n[1]];
        let mut s = [0.0f64; 2];
        for (i, (&x, &w)) in values.iter().zip(weights).enumerate() {
            s[0] += w * resp[i] * (x - new_mu[0]) * (x - new_mu[0]);
            s[1] += w * (1.0 - resp[i]) * (x - new_mu[1]) * (x - new_mu[1]);
        }
        let new_sigma = [
            (s[0] / n[0]).sqrt().max(bin_floor),
            (s[1] / n[1]).sqrt().max(bin_floor),
        ];
        let new_pi = [n[0] / wsum, n[1] / wsum];

        let delta = (new_mu[0] - mu[0]).abs().max((new_mu[1] - mu[1]).abs())
            / (1.0 + spread)
            + (new_sigma[0] - sigma[0]).abs().max((new_sigma[1] - sigma[1]).abs()) / (1.0 + spread);
        mu = new_mu;
        sigma = new_sigma;
        pi = new_pi;
        if delta < 1e-12 {
            converged = true;
            break;
        }
    }

    let (lo, hi) = if mu[0] <= mu[1] { (0, 1) } else { (1, 0) };
    Ok(MixtureFit {
        mean_lo: mu[lo],
        mean_hi: mu[hi],
        sigma_lo: sigma[lo],
        sigma_hi: sigma[hi],
        weight_lo: pi[lo],
        iterations,
        converged,
    })
}

fn min_spacing(values: &[f64]) -> f64 {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| *d > 0.0)
        .fold(f64::INFINITY, f64::min)
        .min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;
    use rand_distr::StandardNormal;

    fn histogram(samples: &[f64], bins: usize) -> (Vec<f64>, Vec<f64>) {
        let lo = samples.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w = (hi - lo) / bins as f64;
        let mut counts = vec![0.0; bins];
        for &s in samples {
            let k = (((s - lo) / w) as usize).min(bins - 1);
            counts[k] += 1.0;
        }
        let centers = (0..bins).map(|k| lo + (k as f64 + 0.5) * w).collect();
        (centers, counts)
    }

    #[test]
    fn splits_well_separated_modes() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let mut samples = Vec::new();
        for _ in 0..20_000 {
            let z: f64 = rng.sample(StandardNormal);
            if rng.gen_bool(0.4) {
                samples.push(-2.0 + z);
            } else {
                samples.push(3.0 + z);
            }
        }
        let (centers, counts) = histogram(&samples, 120);
        let fit = fit_two_component(&centers, &counts).unwrap();
        assert!(fit.resolved(2.0));
        assert!((fit.mean_lo + 2.0).abs() < 0.05, "mean_lo = {}", fit.mean_lo);
        assert!((fit.mean_hi - 3.0).abs() < 0.05, "mean_hi = {}", fit.mean_hi);
        assert!((fit.weight_lo - 0.4).abs() < 0.02);
    }

    #[test]
    fn single_mode_reports_unresolved() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let samples: Vec<f64> = (0..10_000)
            .map(|_| 1.5 + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let (centers, counts) = histogram(&samples, 80);
        let fit = fit_two_component(&centers, &counts).unwrap();
        assert!(!fit.resolved(2.0), "single Gaussian must not resolve: {fit:?}");
    }

    #[test]
    fn rejects_bad_input() {
        assert!(fit_two_component(&[], &[]).is_err());
        assert!(fit_two_component(&[1.0], &[-1.0]).is_err());
        assert!(fit_two_component(&[1.0, 2.0], &[0.0, 0.0]).is_err());
    }
}
