//! Steady state of the two-level charge system under coherent tunneling,
//! thermalization, and charge dephasing.
//!
//! The density matrix in the charge basis {|g⟩₁₁, |g⟩₂₀} evolves under
//!
//! ```text
//! ρ̇ = -i/ħ [H, ρ] + L_thermal(ρ) + L_charge(ρ)
//! ```
//!
//! where the thermal generator drags the eigenstate populations toward the
//! equilibrium imbalance `⟨-|ρ|-⟩ - ⟨+|ρ|+⟩ = tanh(E/2k_B T_e)` at rate γ and
//! decays eigenbasis coherences at γ/2, and the charge generator decays
//! charge-basis coherences at κ/2. The steady state is the trace-normalized
//! null vector of the 4×4 Liouvillian (with the constant drive folded in via
//! the trace, which is exact on trace-one states).
//!
//! With κ = 0 the steady state is the Boltzmann mixture of the charge
//! eigenstates, whose (2,0) population is the closed form
//! [`model::thermal_p20`]. Strong charge dephasing flattens the transition:
//! an experimenter fitting the broadened profile with the anticrossing curve
//! extracts an inflated effective tunnel coupling.

use nalgebra::{Complex, Matrix2, Matrix4, Vector2, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::consts::HBAR_UEV_US;
use crate::error::{Error, Result};
use crate::fit::ten_ninety_width;
use crate::lm::{self, LmOptions};
use crate::model;

type C64 = Complex<f64>;

/// Two-level system plus bath rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LindbladParams {
    /// Detuning ε, μeV.
    pub epsilon: f64,
    /// Tunnel coupling t_c, μeV.
    pub tc: f64,
    /// Thermal energy k_B·T_e, μeV.
    pub kbte: f64,
    /// Thermalization rate γ, 1/μs.
    pub gamma: f64,
    /// Charge dephasing rate κ, 1/μs.
    pub kappa: f64,
}

impl LindbladParams {
    pub fn validate(&self) -> Result<()> {
        if !self.epsilon.is_finite() {
            return Err(Error::invalid("epsilon must be finite"));
        }
        if self.tc <= 0.0 || self.kbte <= 0.0 {
            return Err(Error::invalid("tc and kbte must be > 0"));
        }
        if self.gamma <= 0.0 {
            return Err(Error::invalid("gamma must be > 0"));
        }
        if self.kappa < 0.0 {
            return Err(Error::invalid("kappa must be >= 0"));
        }
        Ok(())
    }
}

/// 2×2 density matrix in the charge basis {|g⟩₁₁, |g⟩₂₀}.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(pub Matrix2<C64>);

impl DensityMatrix {
    /// (2,0) population ⟨g₂₀|ρ|g₂₀⟩.
    pub fn p20(&self) -> f64 {
        self.0[(1, 1)].re
    }

    /// (1,1) population.
    pub fn p11(&self) -> f64 {
        self.0[(0, 0)].re
    }

    pub fn trace(&self) -> C64 {
        self.0[(0, 0)] + self.0[(1, 1)]
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let half_tr = 0.5 * (self.0[(0, 0)].re + self.0[(1, 1)].re);
        let d = 0.5 * (self.0[(0, 0)].re - self.0[(1, 1)].re);
        let r = (d * d + self.0[(0, 1)].norm_sqr()).sqrt();
        (half_tr - r, half_tr + r)
    }

    /// Hermitian, unit trace within 1e-12, eigenvalues in [0, 1].
    pub fn validate(&self) -> Result<()> {
        let herm = (self.0[(0, 1)] - self.0[(1, 0)].conj()).norm()
            + self.0[(0, 0)].im.abs()
            + self.0[(1, 1)].im.abs();
        if herm > 1e-10 {
            return Err(Error::invalid(format!("not Hermitian (defect {herm:.2e})")));
        }
        if (self.trace().re - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("trace must be 1 within 1e-12"));
        }
        let (lo, hi) = self.eigenvalues();
        if lo < -1e-10 || hi > 1.0 + 1e-10 {
            return Err(Error::invalid(format!(
                "eigenvalues [{lo}, {hi}] outside [0, 1]"
            )));
        }
        Ok(())
    }
}

/// Charge-basis Hamiltonian: off-diagonals t_c, (2,0)-diagonal -ε.
pub fn hamiltonian(epsilon: f64, tc: f64) -> Matrix2<f64> {
    Matrix2::new(0.0, tc, tc, -epsilon)
}

/// Orthonormal ground/excited eigenvectors of [`hamiltonian`].
fn eigenbasis(epsilon: f64, tc: f64) -> (Vector2<f64>, Vector2<f64>) {
    let gap = model::energy_gap(epsilon, tc);
    let lam_minus = 0.5 * (-epsilon - gap);
    let lam_plus = 0.5 * (-epsilon + gap);
    // H [a, b]^T = λ [a, b]^T with first row t·b = λ·a gives [t, λ].
    let ground = Vector2::new(tc, lam_minus).normalize();
    let excited = Vector2::new(tc, lam_plus).normalize();
    (ground, excited)
}

fn vec4(m: &Matrix2<f64>) -> Vector4<f64> {
    // column-major: [m00, m10, m01, m11]
    Vector4::new(m[(0, 0)], m[(1, 0)], m[(0, 1)], m[(1, 1)])
}

/// 4×4 Liouvillian superoperator over column-major vec(ρ).
pub fn liouvillian(params: &LindbladParams) -> Matrix4<C64> {
    let h = hamiltonian(params.epsilon, params.tc);
    let gap = model::energy_gap(params.epsilon, params.tc);
    let tau = (gap / (2.0 * params.kbte)).tanh();
    let (ground, excited) = eigenbasis(params.epsilon, params.tc);

    let identity = Matrix2::<f64>::identity();
    let proj_diff = excited * excited.transpose() - ground * ground.transpose();
    let coh_pm = excited * ground.transpose(); // |+><-|
    let coh_mp = ground * excited.transpose();

    let mut l_real = Matrix4::<f64>::zeros();

    // Thermal drag toward ⟨+|ρ|+⟩ - ⟨-|ρ|-⟩ = -tanh(E/2kT); the constant
    // drive enters as tanh·P·Tr(ρ), exact on trace-one states.
    let v_p = vec4(&proj_diff);
    let v_i = vec4(&identity);
    l_real += -params.gamma * v_p * v_p.transpose();
    l_real += -params.gamma * tau * v_p * v_i.transpose();

    // Eigenbasis coherence decay at γ/2.
    let v_pm = vec4(&coh_pm);
    let v_mp = vec4(&coh_mp);
    l_real += -(params.gamma / 2.0) * v_pm * v_pm.transpose();
    l_real += -(params.gamma / 2.0) * v_mp * v_mp.transpose();

    // Charge dephasing: ρ01 and ρ10 decay at κ/2 (vec slots 2 and 1).
    l_real[(1, 1)] += -params.kappa / 2.0;
    l_real[(2, 2)] += -params.kappa / 2.0;

    let mut l = l_real.map(|v| C64::new(v, 0.0));

    // Coherent part -i/ħ (I⊗H - Hᵀ⊗I).
    let comm = identity.kronecker(&h) - h.transpose().kronecker(&identity);
    l += comm.map(|v| C64::new(0.0, -v / HBAR_UEV_US));
    l
}

/// Steady-state density matrix: the trace-normalized right singular vector of
/// the smallest singular value of the Liouvillian.
pub fn steady_state(params: &LindbladParams) -> Result<DensityMatrix> {
    params.validate()?;
    let l = liouvillian(params);
    let svd = nalgebra::SVD::new(l, false, true);
    let sv = &svd.singular_values;
    let mut idx: Vec<usize> = (0..4).collect();
    idx.sort_by(|&a, &b| sv[a].partial_cmp(&sv[b]).unwrap());
    let (smallest, second, largest) = (sv[idx[0]], sv[idx[1]], sv[idx[3]]);
    if second < 1e-8 * largest {
        return Err(Error::DegenerateSteadyState {
            gap: second / largest,
        });
    }
    let _ = smallest;
    let v_t = svd.v_t.as_ref().expect("svd computed with v_t");
    // Right singular vector = conjugated row of Vᴴ.
    let row = v_t.row(idx[0]);
    let v = Vector4::from_iterator((0..4).map(|i| row[i].conj()));

    let mut rho = Matrix2::new(v[0], v[2], v[1], v[3]);
    let trace = rho[(0, 0)] + rho[(1, 1)];
    if trace.norm() < 1e-14 {
        return Err(Error::DegenerateSteadyState { gap: 0.0 });
    }
    rho /= trace;
    // Symmetrize away the numerical anti-Hermitian residue.
    let herm = (rho + rho.adjoint()) * C64::new(0.5, 0.0);
    let dm = DensityMatrix(herm);
    dm.validate()?;
    Ok(dm)
}

/// Steady-state (2,0) population over a detuning grid; monotone
/// non-decreasing in ε.
pub fn broadened_profile(
    grid: &[f64],
    tc: f64,
    kbte: f64,
    gamma: f64,
    kappa: f64,
) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Err(Error::invalid("empty detuning grid"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("profile grid must be strictly increasing"));
    }
    grid.par_iter()
        .map(|&epsilon| {
            steady_state(&LindbladParams {
                epsilon,
                tc,
                kbte,
                gamma,
                kappa,
            })
            .map(|rho| rho.p20())
        })
        .collect()
}

/// Apparent tunnel coupling an experimenter would extract by fitting the
/// probability-rescaled anticrossing curve `c0 + c1 (ε/E) tanh(E/2k_B T_e)`
/// to a (possibly dephasing-broadened) profile, with the thermal energy held
/// fixed.
///
/// `i_amp` seeds the contrast: the probability-rescaled amplitude starts at
/// `i_amp / 2`.
pub fn effective_tc(grid: &[f64], profile: &[f64], i_amp: f64, kbte: f64) -> Result<f64> {
    if grid.len() != profile.len() || grid.len() < 8 {
        return Err(Error::invalid("profile needs >= 8 matching points"));
    }
    let (lo, hi) = profile
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| {
            (lo.min(p), hi.max(p))
        });
    if hi - lo < 1e-9 {
        return Err(Error::invalid("flat profile: no transition to fit"));
    }
    let u: Vec<f64> = profile.iter().map(|&p| (p - lo) / (hi - lo)).collect();
    let (e10, e90) = ten_ninety_width(grid, &u)
        .ok_or_else(|| Error::invalid("profile does not span both asymptotes"))?;
    let t0 = ((e90 - e10) / 4.0).max(1e-6);

    let out = lm::minimize(
        |x, r| {
            let (c0, c1, t) = (x[0], x[1], x[2].exp());
            r.clear();
            r.extend(grid.iter().zip(profile).map(|(&e, &p)| {
                let gap = model::energy_gap(e, t);
                c0 + c1 * (e / gap) * (gap / (2.0 * kbte)).tanh() - p
            }));
            Ok(())
        },
        &[0.5, (i_amp / 2.0).abs().max(1e-3), t0.ln()],
        &["offset", "contrast", "ln_tc"],
        &LmOptions::default(),
    )?;
    if !out.converged {
        return Err(Error::NonConvergence {
            iterations: out.iterations,
        });
    }
    Ok(out.x[2].exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params(epsilon: f64, tc: f64, kbte: f64, gamma: f64, kappa: f64) -> LindbladParams {
        LindbladParams {
            epsilon,
            tc,
            kbte,
            gamma,
            kappa,
        }
    }

    #[test]
    fn hamiltonian_examples() {
        let h = hamiltonian(0.0, 2.0);
        let eig = h.symmetric_eigenvalues();
        let (lo, hi) = (eig.min(), eig.max());
        assert_abs_diff_eq!(lo, -2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(hi, 2.0, epsilon = 1e-14);
        // gap consistency with the closed form
        let h = hamiltonian(3.0, 2.0);
        let eig = h.symmetric_eigenvalues();
        assert_abs_diff_eq!(eig.max() - eig.min(), model::energy_gap(3.0, 2.0), epsilon = 1e-13);
        // eigenvectors at ε = 0 are equal charge superpositions
        let (ground, excited) = eigenbasis(0.0, 2.0);
        assert_abs_diff_eq!(ground[0].abs(), ground[1].abs(), epsilon = 1e-14);
        assert_abs_diff_eq!(excited[0].abs(), excited[1].abs(), epsilon = 1e-14);
    }

    #[test]
    fn zero_dephasing_reduces_to_thermal_mixture() {
        for &(tc, kbte) in &[(1.0, 1.0), (5.0, 8.6), (40.5, 8.6), (2.0, 20.0)] {
            for i in 0..25 {
                let eps = -120.0 + 10.0 * i as f64;
                let rho = steady_state(&params(eps, tc, kbte, 1.0, 0.0)).unwrap();
                let expect = model::thermal_p20(eps, tc, kbte);
                assert_abs_diff_eq!(rho.p20(), expect, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn trace_preserving_left_null_covector() {
        let l = liouvillian(&params(7.0, 3.0, 5.0, 0.8, 12.0));
        // Tr(L(ρ)) = 0 for all ρ: [1, 0, 0, 1] is a left null covector.
        let scale = l.iter().map(|c| c.norm()).fold(0.0f64, f64::max);
        for col in 0..4 {
            let v = l[(0, col)] + l[(3, col)];
            assert!(v.norm() < 1e-12 * scale, "column {col}: {v}");
        }
    }

    #[test]
    fn steady_state_is_physical() {
        for &kappa in &[0.0, 0.5, 5.0, 150.0] {
            for i in 0..10 {
                let eps = -40.0 + 9.0 * i as f64;
                let rho = steady_state(&params(eps, 2.0, 4.0, 1.0, kappa)).unwrap();
                rho.validate().unwrap();
            }
        }
    }

    #[test]
    fn symmetric_point_is_half_for_all_dephasing() {
        for &kappa in &[0.0, 1.0, 1e5] {
            let rho = steady_state(&params(0.0, 2.0, 4.0, 1.0, kappa)).unwrap();
            assert_abs_diff_eq!(rho.p20(), 0.5, epsilon = 1e-3);
        }
    }

    #[test]
    fn charge_reflection_antisymmetry_at_zero_dephasing() {
        // The κ = 0 charge polarization is odd: P₂₀(ε) + P₂₀(-ε) = 1,
        // matching the oddness of the mean-current curve g.
        for i in 0..20 {
            let eps = 0.5 + 6.0 * i as f64;
            let a = steady_state(&params(eps, 3.0, 5.0, 1.0, 0.0)).unwrap().p20();
            let b = steady_state(&params(-eps, 3.0, 5.0, 1.0, 0.0)).unwrap().p20();
            assert_abs_diff_eq!(a + b, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn fast_thermalization_dominates_dephasing() {
        // γ ≫ κ and γ ≫ E/ħ: the drag pins the thermal populations.
        for i in 0..10 {
            let eps = -30.0 + 7.0 * i as f64;
            let rho = steady_state(&params(eps, 2.0, 4.0, 1e7, 1.0)).unwrap();
            assert_abs_diff_eq!(rho.p20(), model::thermal_p20(eps, 2.0, 4.0), epsilon = 1e-6);
        }
    }

    #[test]
    fn svd_null_vector_agrees_with_direct_solve() {
        // Second algebraic route: solve L x = 0 with the trace pinned via a
        // bordered linear system.
        use nalgebra::{DMatrix, DVector};
        let p = params(5.0, 2.0, 4.0, 0.3, 45.0);
        let l = liouvillian(&p);
        let rho_svd = steady_state(&p).unwrap();

        let mut a = DMatrix::<C64>::zeros(5, 4);
        for r in 0..4 {
            for c in 0..4 {
                a[(r, c)] = l[(r, c)];
            }
        }
        // trace row
        a[(4, 0)] = C64::new(1.0, 0.0);
        a[(4, 3)] = C64::new(1.0, 0.0);
        let mut b = DVector::<C64>::zeros(5);
        b[4] = C64::new(1.0, 0.0);
        let sol = (a.adjoint() * &a)
            .lu()
            .solve(&(a.adjoint() * b))
            .expect("bordered system solvable");
        assert_abs_diff_eq!(sol[3].re, rho_svd.p20(), epsilon = 1e-10);
        assert_abs_diff_eq!(sol[0].re, rho_svd.p11(), epsilon = 1e-10);
    }

    #[test]
    fn profile_reduces_and_stays_monotone() {
        let grid: Vec<f64> = (0..81).map(|i| -120.0 + 3.0 * i as f64).collect();
        let flat = broadened_profile(&grid, 2.0, 4.0, 0.1, 0.0).unwrap();
        for (i, &e) in grid.iter().enumerate() {
            assert_abs_diff_eq!(flat[i], model::thermal_p20(e, 2.0, 4.0), epsilon = 1e-10);
        }
        for &kappa in &[0.0, 1.0, 15.0] {
            let prof = broadened_profile(&grid, 2.0, 4.0, 0.1, kappa).unwrap();
            for w in prof.windows(2) {
                assert!(w[1] >= w[0] - 1e-10, "profile must be monotone: {w:?}");
            }
        }
    }

    #[test]
    fn effective_tc_recovers_true_tc_without_dephasing() {
        let grid: Vec<f64> = (0..121).map(|i| -180.0 + 3.0 * i as f64).collect();
        let prof = broadened_profile(&grid, 2.0, 4.0, 0.1, 0.0).unwrap();
        let t_eff = effective_tc(&grid, &prof, 1.0, 4.0).unwrap();
        assert!(
            (t_eff / 2.0 - 1.0).abs() < 0.01,
            "self-fit should recover tc: {t_eff}"
        );
    }

    #[test]
    fn rejects_invalid_params() {
        assert!(steady_state(&params(0.0, 0.0, 1.0, 1.0, 0.0)).is_err());
        assert!(steady_state(&params(0.0, 1.0, 0.0, 1.0, 0.0)).is_err());
        assert!(steady_state(&params(0.0, 1.0, 1.0, 0.0, 0.0)).is_err());
        assert!(steady_state(&params(0.0, 1.0, 1.0, 1.0, -1.0)).is_err());
    }
}
