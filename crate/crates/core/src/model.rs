//! Two-branch anticrossing fit model.
//!
//! The measured intensity at (detuning ε, current I) is a population-weighted
//! sum of singlet and triplet branch profiles,
//!
//! ```text
//! z = P_S f(ε − ε0, I − (I0 + m ε), tcS) + P_T f(ε − ε0 − Δ_SB, I − (I0 + m ε), tcT)
//! f(ε, I, tc) = exp[-(I - g(ε, tc))² / (2 σ_I²)]
//! g(ε, tc)    = I_amp (ε/E) tanh(E / 2 k_B T_e),   E = sqrt(ε² + 4 tc²)
//! ```
//!
//! The triplet branch is the singlet branch translated by +Δ_SB in detuning.
//! Everything here is a pure function of value inputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Arguments of tanh beyond this are treated as saturated; avoids NaN from
/// inf/inf as the electron temperature goes to zero.
const TANH_SATURATION: f64 = 30.0;

fn tanh_guarded(x: f64) -> f64 {
    if x > TANH_SATURATION {
        1.0
    } else if x < -TANH_SATURATION {
        -1.0
    } else {
        x.tanh()
    }
}

/// Full parameter vector θ of the two-branch fit model.
///
/// Populations are carried as a normalized pair (`p_singlet + p_triplet = 1`);
/// the overall intensity scale is a separate normalization amplitude owned by
/// the fit engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Ground-singlet population P_S (fraction of shots).
    pub p_singlet: f64,
    /// Ground-triplet population P_T.
    pub p_triplet: f64,
    /// Detuning of the singlet charge transition ε0, μeV.
    pub detuning_offset: f64,
    /// Singlet-triplet splitting Δ_SB, μeV (≥ 0; the singlet branch sits at
    /// smaller detuning).
    pub delta_sb: f64,
    /// Singlet tunnel coupling tc^S, μeV.
    pub tc_singlet: f64,
    /// Triplet tunnel coupling tc^T, μeV.
    pub tc_triplet: f64,
    /// Constant current offset I0, pA.
    pub current_offset: f64,
    /// Linear current slope m, pA/μeV (sensor cross-capacitance).
    pub current_slope: f64,
    /// Current contrast amplitude I_amp, pA.
    pub current_amplitude: f64,
    /// Electron temperature as an energy, k_B·T_e, μeV.
    pub electron_temp_energy: f64,
    /// Per-branch current broadening σ_I, pA.
    pub current_sigma: f64,
}

impl ModelParams {
    /// Checks the invariants: populations form a probability pair and the
    /// strictly positive scales are positive.
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("p_singlet", self.p_singlet),
            ("p_triplet", self.p_triplet),
            ("detuning_offset", self.detuning_offset),
            ("delta_sb", self.delta_sb),
            ("tc_singlet", self.tc_singlet),
            ("tc_triplet", self.tc_triplet),
            ("current_offset", self.current_offset),
            ("current_slope", self.current_slope),
            ("current_amplitude", self.current_amplitude),
            ("electron_temp_energy", self.electron_temp_energy),
            ("current_sigma", self.current_sigma),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(Error::invalid(format!("{name} is not finite")));
            }
        }
        if self.p_singlet < 0.0 || self.p_triplet < 0.0 {
            return Err(Error::invalid("populations must be non-negative"));
        }
        if (self.p_singlet + self.p_triplet - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "p_singlet + p_triplet must be 1, got {}",
                self.p_singlet + self.p_triplet
            )));
        }
        if self.delta_sb < 0.0 {
            return Err(Error::invalid("delta_sb must be >= 0"));
        }
        for (name, v) in [
            ("tc_singlet", self.tc_singlet),
            ("tc_triplet", self.tc_triplet),
            ("electron_temp_energy", self.electron_temp_energy),
            ("current_sigma", self.current_sigma),
        ] {
            if v <= 0.0 {
                return Err(Error::invalid(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Energy gap E(ε, tc) = sqrt(ε² + 4 tc²) of the charge anticrossing; always
/// at least 2 tc.
pub fn energy_gap(epsilon: f64, tc: f64) -> f64 {
    (epsilon * epsilon + 4.0 * tc * tc).sqrt()
}

/// Mean sensor current contrast g(ε, tc) of one branch: odd in ε, bounded by
/// ±`i_amp`, saturating over a scale set by tc and the thermal energy.
pub fn branch_current(epsilon: f64, tc: f64, i_amp: f64, kbte: f64) -> f64 {
    let gap = energy_gap(epsilon, tc);
    i_amp * (epsilon / gap) * tanh_guarded(gap / (2.0 * kbte))
}

/// Ground-state (2,0) population weighted by the thermal excitation factor,
/// `½ [1 + ε/E] tanh(E / 2 k_B T_e)`.
///
/// This is the low-temperature form used by the fit-model derivation; it
/// satisfies `ground_p20(ε) + ground_p20(-ε) = tanh(E / 2 k_B T_e)` exactly.
/// The thermal-equilibrium population of the two-level system itself is
/// [`thermal_p20`]; the two agree as `E / k_B T_e → ∞`.
pub fn ground_p20(epsilon: f64, tc: f64, kbte: f64) -> f64 {
    let gap = energy_gap(epsilon, tc);
    0.5 * (1.0 + epsilon / gap) * tanh_guarded(gap / (2.0 * kbte))
}

/// (2,0) population of the Boltzmann mixture of the two charge eigenstates,
/// `½ [1 + (ε/E) tanh(E / 2 k_B T_e)]`.
///
/// Equals `(1 + g/I_amp)/2` with `g` from [`branch_current`], and is the
/// exact steady state of the thermalizing master equation with no charge
/// dephasing (see [`crate::lindblad::steady_state`]).
pub fn thermal_p20(epsilon: f64, tc: f64, kbte: f64) -> f64 {
    let gap = energy_gap(epsilon, tc);
    0.5 * (1.0 + (epsilon / gap) * tanh_guarded(gap / (2.0 * kbte)))
}

/// Single-branch intensity profile f: Gaussian in the current residual
/// against the branch mean. `current` is the current with offsets already
/// removed, as in the second argument of f in the model.
pub fn branch_profile(epsilon: f64, current: f64, tc: f64, params: &ModelParams) -> f64 {
    let r = current - branch_current(epsilon, tc, params.current_amplitude, params.electron_temp_energy);
    (-r * r / (2.0 * params.current_sigma * params.current_sigma)).exp()
}

/// Two-branch model intensity at raw (ε, I).
pub fn intensity(epsilon: f64, current: f64, params: &ModelParams) -> f64 {
    let base = current - (params.current_offset + params.current_slope * epsilon);
    params.p_singlet
        * branch_profile(
            epsilon - params.detuning_offset,
            base,
            params.tc_singlet,
            params,
        )
        + params.p_triplet
            * branch_profile(
                epsilon - params.detuning_offset - params.delta_sb,
                base,
                params.tc_triplet,
                params,
            )
}

/// Current-space separation of the singlet and triplet histogram peaks at
/// ε − ε0 = Δ_SB/2, exact and linearized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchSeparation {
    /// η from direct evaluation, `g(Δ/2) − g(−Δ/2)`, pA.
    pub eta_exact: f64,
    /// λ·Δ_SB, pA.
    pub eta_linear: f64,
    /// Slope λ = (I_amp / 2 tc) tanh(tc / k_B T_e), pA/μeV.
    pub lambda: f64,
}

/// Peak separation η and its linear expansion.
///
/// The linearized form assumes tc^S ≈ tc^T; the exact form uses tc^S.
pub fn branch_separation(params: &ModelParams) -> BranchSeparation {
    let tc = params.tc_singlet;
    let half = params.delta_sb / 2.0;
    let eta_exact = branch_current(half, tc, params.current_amplitude, params.electron_temp_energy)
        - branch_current(-half, tc, params.current_amplitude, params.electron_temp_energy);
    let lambda = params.current_amplitude / (2.0 * tc)
        * tanh_guarded(tc / params.electron_temp_energy);
    BranchSeparation {
        eta_exact,
        eta_linear: lambda * params.delta_sb,
        lambda,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    pub(crate) fn fig2d_params() -> ModelParams {
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
            current_sigma: 0.1138,
        }
    }

    #[test]
    fn gap_examples() {
        assert_abs_diff_eq!(energy_gap(0.0, 3.0), 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(energy_gap(3.0, 2.0), 5.0, epsilon = 1e-15);
        // high-precision asymptote: sqrt(1000^2 + 4)
        assert_abs_diff_eq!(energy_gap(1000.0, 1.0), 1000.001_999_998, epsilon = 1e-6);
        // always at least 2 tc
        for i in 0..200 {
            let eps = -50.0 + i as f64;
            assert!(energy_gap(eps, 7.0) >= 14.0);
        }
    }

    #[test]
    fn branch_current_examples() {
        assert_eq!(branch_current(0.0, 2.0, 1.3, 0.7), 0.0);
        // saturation to I_amp at large positive detuning
        assert_abs_diff_eq!(branch_current(1e9, 2.0, 1.3, 0.7), 1.3, epsilon = 1e-9);
        // Fig. 2d fit values at ε = Δ_SB/2, against an independent evaluation
        // of g (mpmath, 30 digits): 0.170880703101437920.
        assert_abs_diff_eq!(
            branch_current(14.05, 40.5, 1.0, 8.6),
            0.170_880_703_101_438,
            epsilon = 1e-12
        );
    }

    #[test]
    fn branch_current_is_odd_bounded_monotone() {
        let cases = [(2.0, 0.7), (40.5, 8.6), (10.0, 3.0), (0.5, 12.0)];
        for (tc, kbte) in cases {
            let mut prev = f64::NEG_INFINITY;
            for i in 0..=400 {
                let eps = -200.0 + i as f64;
                let v = branch_current(eps, tc, 1.0, kbte);
                assert_abs_diff_eq!(v, -branch_current(-eps, tc, 1.0, kbte), epsilon = 1e-15);
                assert!(v.abs() < 1.0, "|g| must stay below I_amp, got {v}");
                assert!(v >= prev - 1e-12, "g must be monotone in ε");
                prev = v;
            }
        }
    }

    #[test]
    fn ground_p20_examples_and_identity() {
        // fully (2,0) / fully (1,1) in the cold, far-detuned limits
        assert_abs_diff_eq!(ground_p20(1e8, 2.0, 1e-6), 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(ground_p20(-1e8, 2.0, 1e-6), 0.0, epsilon = 1e-8);
        // symmetric point
        assert_abs_diff_eq!(
            ground_p20(0.0, 3.0, 2.0),
            0.5 * (3.0f64 / 2.0).tanh(),
            epsilon = 1e-15
        );
        // P(ε) + P(-ε) = tanh(E/2kT) exactly (both branches share E)
        for i in 0..500 {
            let eps = -120.0 + 0.48 * i as f64;
            let (tc, kbte) = (5.0 + (i % 7) as f64, 1.0 + (i % 11) as f64);
            let sum = ground_p20(eps, tc, kbte) + ground_p20(-eps, tc, kbte);
            let expect = (energy_gap(eps, tc) / (2.0 * kbte)).tanh();
            assert_abs_diff_eq!(sum, expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn thermal_p20_matches_branch_current() {
        for i in 0..100 {
            let eps = -60.0 + 1.2 * i as f64;
            let p = thermal_p20(eps, 4.0, 3.0);
            let g = branch_current(eps, 4.0, 1.0, 3.0);
            assert_abs_diff_eq!(p, 0.5 * (1.0 + g), epsilon = 1e-15);
            assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn branch_profile_examples() {
        let p = fig2d_params();
        let g = branch_current(5.0, p.tc_singlet, p.current_amplitude, p.electron_temp_energy);
        assert_abs_diff_eq!(branch_profile(5.0, g, p.tc_singlet, &p), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            branch_profile(5.0, g + p.current_sigma, p.tc_singlet, &p),
            (-0.5f64).exp(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            branch_profile(5.0, g + 3.0 * p.current_sigma, p.tc_singlet, &p),
            (-4.5f64).exp(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn intensity_single_population_reduces_to_singlet_profile() {
        let mut p = fig2d_params();
        p.p_singlet = 1.0;
        p.p_triplet = 0.0;
        p.current_slope = 0.04;
        p.current_offset = 1.7;
        for i in 0..50 {
            let eps = -100.0 + 4.0 * i as f64;
            let cur = 1.5 + 0.05 * i as f64;
            let base = cur - (p.current_offset + p.current_slope * eps);
            let want = branch_profile(eps - p.detuning_offset, base, p.tc_singlet, &p);
            assert_abs_diff_eq!(intensity(eps, cur, &p), want, epsilon = 1e-15);
        }
    }

    #[test]
    fn intensity_degenerate_branches_collapse() {
        let mut p = fig2d_params();
        p.delta_sb = 0.0;
        for i in 0..50 {
            let eps = -100.0 + 4.0 * i as f64;
            let cur = -0.8 + 0.04 * i as f64;
            let base = cur - p.current_offset;
            let want = branch_profile(eps, base, p.tc_singlet, &p);
            assert_abs_diff_eq!(intensity(eps, cur, &p), want, epsilon = 1e-15);
        }
    }

    #[test]
    fn intensity_symmetric_mixture_midpoint() {
        // P_S = P_T = ½: at ε = ε0 + Δ/2 on the current baseline, the
        // intensity is the mean of the two profiles at ±Δ/2. Cross-checked
        // against an independent scalar evaluation of Eq-by-Eq pieces.
        let mut p = fig2d_params();
        p.current_offset = 0.3;
        p.current_slope = 0.002;
        let eps = p.detuning_offset + p.delta_sb / 2.0;
        let cur = p.current_offset + p.current_slope * eps;
        let direct = intensity(eps, cur, &p);
        let half = p.delta_sb / 2.0;
        let scalar = |x: f64| {
            let e = (x * x + 4.0 * p.tc_singlet * p.tc_singlet).sqrt();
            let g = p.current_amplitude * (x / e) * (e / (2.0 * p.electron_temp_energy)).tanh();
            (-(0.0 - g) * (0.0 - g) / (2.0 * p.current_sigma * p.current_sigma)).exp()
        };
        let expected = 0.5 * (scalar(half) + scalar(-half));
        assert_abs_diff_eq!(direct, expected, epsilon = 1e-15);
    }

    #[test]
    fn intensity_swap_symmetry() {
        // Swapping (P_S ↔ P_T, tcS ↔ tcT, ε0 → ε0 + Δ, Δ → -Δ) leaves the
        // surface unchanged. The swapped parameter set violates the Δ ≥ 0
        // convention, so it is built directly rather than validated.
        let mut p = fig2d_params();
        p.p_singlet = 0.3;
        p.p_triplet = 0.7;
        p.tc_triplet = 22.0;
        p.current_slope = 0.01;
        let mut q = p.clone();
        std::mem::swap(&mut q.p_singlet, &mut q.p_triplet);
        std::mem::swap(&mut q.tc_singlet, &mut q.tc_triplet);
        q.detuning_offset = p.detuning_offset + p.delta_sb;
        q.delta_sb = -p.delta_sb;
        for i in 0..60 {
            for j in 0..20 {
                let eps = -90.0 + 3.5 * i as f64;
                let cur = -1.1 + 0.11 * j as f64;
                assert_abs_diff_eq!(intensity(eps, cur, &p), intensity(eps, cur, &q), epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn branch_separation_fig2d() {
        let p = fig2d_params();
        let sep = branch_separation(&p);
        // λΔ with tanh(40.5/8.6) = 0.99983761; independent evaluation gives
        // 0.3468572466 (the exact form is 0.3417614062: linearization
        // overestimates by 1.5% at Δ_SB ~ 0.7 tc).
        assert_abs_diff_eq!(sep.eta_linear, 0.346_857_246_581_95, epsilon = 1e-10);
        assert_abs_diff_eq!(sep.eta_exact, 0.341_761_406_202_88, epsilon = 1e-10);
        assert_abs_diff_eq!(sep.lambda, 0.012_343_674_255_586, epsilon = 1e-12);
        assert!(sep.eta_linear > sep.eta_exact);
    }

    #[test]
    fn branch_separation_vanishes_at_zero_splitting() {
        let mut p = fig2d_params();
        p.delta_sb = 0.0;
        let sep = branch_separation(&p);
        assert_eq!(sep.eta_exact, 0.0);
        assert_eq!(sep.eta_linear, 0.0);
    }

    #[test]
    fn linearization_converges_for_small_splitting() {
        // η_linear/η_exact → 1 as Δ_SB/tc → 0; within 1% already at Δ = tc/100.
        let mut p = fig2d_params();
        p.delta_sb = p.tc_singlet / 100.0;
        let sep = branch_separation(&p);
        assert!((sep.eta_linear / sep.eta_exact - 1.0).abs() < 0.01);
        // and the ratio shrinks as Δ does
        p.delta_sb = p.tc_singlet / 1000.0;
        let sep2 = branch_separation(&p);
        assert!((sep2.eta_linear / sep2.eta_exact - 1.0).abs()
            < (sep.eta_linear / sep.eta_exact - 1.0).abs());
    }

    #[test]
    fn validate_rejects_bad_params() {
        let good = fig2d_params();
        assert!(good.validate().is_ok());
        let mut p = good.clone();
        p.p_triplet = 0.6;
        assert!(p.validate().is_err());
        let mut p = good.clone();
        p.tc_singlet = 0.0;
        assert!(p.validate().is_err());
        let mut p = good.clone();
        p.delta_sb = -1.0;
        assert!(p.validate().is_err());
        let mut p = good;
        p.current_sigma = -0.1;
        assert!(p.validate().is_err());
    }

    #[test]
    fn tanh_guard_handles_cold_limit() {
        // kT → 0 drives the tanh argument to infinity; the guard keeps g finite.
        let v = branch_current(3.0, 2.0, 1.0, 1e-300);
        assert_abs_diff_eq!(v, 3.0 / 5.0, epsilon = 1e-15);
    }
}
