//! Damped least-squares (Levenberg–Marquardt) minimizer.
//!
//! One implementation shared by the histogram fit engine, the lever-arm and
//! spin-funnel fits, and the effective-tunnel-coupling extraction. Solves
//! `min_x |r(x)|²` with a numerically differenced Jacobian and Marquardt
//! diagonal scaling. The objective over accepted steps is non-increasing by
//! construction.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct LmOptions {
    /// Maximum accepted steps.
    pub max_iterations: usize,
    /// Convergence when the scaled gradient infinity norm drops below this.
    pub gradient_tolerance: f64,
    /// Convergence when the relative step infinity norm drops below this.
    pub step_tolerance: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iterations: 200,
            gradient_tolerance: 1e-8,
            step_tolerance: 1e-9,
        }
    }
}

impl LmOptions {
    pub fn validate(&self) -> Result<()> {
        if self.gradient_tolerance <= 0.0 || self.step_tolerance <= 0.0 {
            return Err(Error::invalid("LM tolerances must be > 0"));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    /// Minimizer in the caller's (possibly transformed) coordinates.
    pub x: Vec<f64>,
    /// Final sum of squared residuals.
    pub ssr: f64,
    /// Accepted steps taken.
    pub iterations: usize,
    pub converged: bool,
    /// SSR after each accepted step, starting with the initial value.
    pub objective_trace: Vec<f64>,
    /// `(JᵀJ + λD)⁻¹` at the optimum, before residual-variance scaling.
    pub covariance_unit: DMatrix<f64>,
    pub n_residuals: usize,
}

impl LmOutcome {
    /// Parameter covariance, scaled by the residual variance `SSR / (m - p)`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let dof = self.n_residuals.saturating_sub(self.x.len()).max(1) as f64;
        &self.covariance_unit * (self.ssr / dof)
    }
}

/// Minimizes `|r(x)|²`.
///
/// `residuals` clears and fills the output vector; its length must be the
/// same on every call. An error or non-finite value at the starting point is
/// fatal, at a trial point it just rejects the step. `names` label
/// parameters in degeneracy errors.
pub fn minimize<F>(
    mut residuals: F,
    x0: &[f64],
    names: &[&str],
    opts: &LmOptions,
) -> Result<LmOutcome>
where
    F: FnMut(&[f64], &mut Vec<f64>) -> Result<()>,
{
    opts.validate()?;
    let p = x0.len();
    if p == 0 {
        return Err(Error::invalid("no free parameters"));
    }

    let mut x = x0.to_vec();
    let mut r = eval(&mut residuals, &x)?;
    let m = r.len();
    if m < p {
        return Err(Error::invalid(format!(
            "{m} residuals cannot determine {p} parameters"
        )));
    }
    let mut ssr = r.norm_squared();

    let mut trace = vec![ssr];
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let mut first_outer = true;

    while iterations < opts.max_iterations {
        let jac = jacobian(&mut residuals, &x, &r)?;
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &r;

        if scaled_gradient(&jac, &grad, ssr) < opts.gradient_tolerance {
            converged = true;
            break;
        }

        // A dead column at the starting point is a genuine degeneracy; a
        // transient one mid-iteration is floored and damped through.
        let diag = marquardt_diagonal(&jtj, names, first_outer)?;
        first_outer = false;

        // Inner loop: grow λ until a step reduces the objective.
        let mut accepted = false;
        for _ in 0..60 {
            let mut damped = jtj.clone();
            for i in 0..p {
                damped[(i, i)] += lambda * diag[i];
            }
            let mut step = match damped.cholesky() {
                Some(ch) => ch.solve(&(-&grad)),
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            // Cap the step in the transformed coordinates; log/logit
            // parameters otherwise overshoot into flat, degenerate regions.
            let amax = step.amax();
            if amax > MAX_INTERNAL_STEP {
                step *= MAX_INTERNAL_STEP / amax;
            }
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(xi, s)| xi + s).collect();
            let ssr_trial = match eval(&mut residuals, &trial) {
                Ok(v) => v.norm_squared(),
                Err(_) => f64::INFINITY,
            };
            if ssr_trial < ssr {
                let rel_step = step
                    .iter()
                    .zip(x.iter())
                    .map(|(s, xi)| s.abs() / (1.0 + xi.abs()))
                    .fold(0.0f64, f64::max);
                x = trial;
                r = eval(&mut residuals, &x)?;
                ssr = ssr_trial;
                trace.push(ssr);
                lambda = (lambda / 3.0).max(1e-14);
                iterations += 1;
                accepted = true;
                if rel_step < opts.step_tolerance {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e15 {
                break;
            }
        }

        if converged {
            break;
        }
        if !accepted {
            // No descent direction at any damping: the gradient is
            // numerically zero, so report convergence only if it is small.
            converged = scaled_gradient(&jac, &grad, ssr) < opts.gradient_tolerance.max(1e-3);
            break;
        }
    }

    // Covariance factor from the damped normal equations at the optimum.
    let jac = jacobian(&mut residuals, &x, &r)?;
    let jtj = jac.transpose() * &jac;
    let diag = marquardt_diagonal(&jtj, names, true)?;
    let lambda_cov = lambda.min(1e-10);
    let mut damped = jtj.clone();
    for i in 0..p {
        damped[(i, i)] += lambda_cov * diag[i];
    }
    let covariance_unit = invert_spd(&damped, &jtj, names)?;

    Ok(LmOutcome {
        x,
        ssr,
        iterations,
        converged,
        objective_trace: trace,
        covariance_unit,
        n_residuals: m,
    })
}

/// Scale-invariant gradient measure: the largest cosine between a Jacobian
/// column and the residual vector (MINPACK's gtol quantity). Zero residual
/// counts as converged.
fn scaled_gradient(jac: &DMatrix<f64>, grad: &DVector<f64>, ssr: f64) -> f64 {
    if ssr <= 0.0 {
        return 0.0;
    }
    let rnorm = ssr.sqrt();
    let mut worst = 0.0f64;
    for j in 0..jac.ncols() {
        let cnorm = jac.column(j).norm();
        if cnorm > 0.0 {
            worst = worst.max(grad[j].abs() / (cnorm * rnorm));
        }
    }
    worst
}

fn eval<F>(f: &mut F, x: &[f64]) -> Result<DVector<f64>>
where
    F: FnMut(&[f64], &mut Vec<f64>) -> Result<()>,
{
    let mut buf = Vec::new();
    f(x, &mut buf)?;
    if buf.is_empty() {
        return Err(Error::invalid("residual function produced no residuals"));
    }
    if buf.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite residual"));
    }
    Ok(DVector::from_vec(buf))
}

fn jacobian<F>(f: &mut F, x: &[f64], r0: &DVector<f64>) -> Result<DMatrix<f64>>
where
    F: FnMut(&[f64], &mut Vec<f64>) -> Result<()>,
{
    let p = x.len();
    let m = r0.len();
    let mut jac = DMatrix::zeros(m, p);
    let mut xh = x.to_vec();
    for i in 0..p {
        let h = f64::EPSILON.sqrt() * (1.0 + x[i].abs());
        xh[i] = x[i] + h;
        let rh = eval(f, &xh)?;
        if rh.len() != m {
            return Err(Error::invalid("residual count changed between calls"));
        }
        xh[i] = x[i];
        for j in 0..m {
            jac[(j, i)] = (rh[j] - r0[j]) / h;
        }
    }
    Ok(jac)
}

/// Largest allowed component of one step in the internal coordinates.
const MAX_INTERNAL_STEP: f64 = 5.0;

/// Marquardt scaling diagonal. A zero diagonal entry means the residuals do
/// not depend on that parameter at all; in strict mode that is an error, in
/// lenient mode (mid-iteration) the entry is floored so damping can still
/// regularize the solve.
fn marquardt_diagonal(jtj: &DMatrix<f64>, names: &[&str], strict: bool) -> Result<Vec<f64>> {
    let p = jtj.nrows();
    let d: Vec<f64> = (0..p).map(|i| jtj[(i, i)]).collect();
    let dmax = d.iter().cloned().fold(0.0f64, f64::max);
    if dmax == 0.0 {
        return Err(Error::SingularJacobian {
            parameters: all_names(names, p),
        });
    }
    if strict {
        let dead: Vec<String> = (0..p)
            .filter(|&i| d[i] < 1e-24 * dmax)
            .map(|i| name_of(names, i))
            .collect();
        if !dead.is_empty() {
            return Err(Error::SingularJacobian { parameters: dead });
        }
    }
    Ok(d.into_iter().map(|v| v.max(1e-12 * dmax)).collect())
}

fn invert_spd(damped: &DMatrix<f64>, jtj: &DMatrix<f64>, names: &[&str]) -> Result<DMatrix<f64>> {
    if let Some(ch) = damped.clone().cholesky() {
        return Ok(ch.inverse());
    }
    // Singular even with damping: report the near-null direction.
    let svd = jtj.clone().svd(true, true);
    let (imin, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
    let vt = svd.v_t.as_ref().expect("svd with v_t");
    let row = vt.row(imin);
    let parameters: Vec<String> = (0..row.len())
        .filter(|&i| row[i].abs() > 0.3)
        .map(|i| name_of(names, i))
        .collect();
    let parameters = if parameters.is_empty() {
        all_names(names, row.len())
    } else {
        parameters
    };
    Err(Error::SingularJacobian { parameters })
}

fn name_of(names: &[&str], i: usize) -> String {
    names
        .get(i)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("x{i}"))
}

fn all_names(names: &[&str], p: usize) -> Vec<String> {
    (0..p).map(|i| name_of(names, i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// y = a e^{-b t} + c sampled on a grid; recover (a, b, c).
    #[test]
    fn recovers_exponential_decay() {
        let truth = [2.5, 0.7, 0.3];
        let ts: Vec<f64> = (0..40).map(|i| i as f64 * 0.25).collect();
        let ys: Vec<f64> = ts.iter().map(|t| truth[0] * (-truth[1] * t).exp() + truth[2]).collect();
        let out = minimize(
            |x, r| {
                r.clear();
                r.extend(
                    ts.iter()
                        .zip(ys.iter())
                        .map(|(t, y)| x[0] * (-x[1] * t).exp() + x[2] - y),
                );
                Ok(())
            },
            &[1.0, 1.0, 0.0],
            &["a", "b", "c"],
            &LmOptions::default(),
        )
        .unwrap();
        assert!(out.converged);
        for (got, want) in out.x.iter().zip(truth.iter()) {
            assert_abs_diff_eq!(got, want, epsilon = 1e-7);
        }
        assert!(out.ssr < 1e-16);
    }

    #[test]
    fn objective_trace_is_non_increasing() {
        let ts: Vec<f64> = (0..30).map(|i| i as f64 * 0.3).collect();
        let ys: Vec<f64> = ts.iter().map(|t| 1.7 * (-0.4 * t).exp() + 0.1 * t.sin()).collect();
        let out = minimize(
            |x, r| {
                r.clear();
                r.extend(ts.iter().zip(ys.iter()).map(|(t, y)| x[0] * (-x[1] * t).exp() - y));
                Ok(())
            },
            &[0.5, 2.0],
            &["a", "b"],
            &LmOptions::default(),
        )
        .unwrap();
        for w in out.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-15, "objective increased: {:?}", w);
        }
    }

    #[test]
    fn reports_degenerate_parameter() {
        // The second parameter never enters the residuals.
        let err = minimize(
            |x, r| {
                r.clear();
                r.extend((0..10).map(|i| x[0] * i as f64 - 3.0));
                let _ = x[1];
                Ok(())
            },
            &[1.0, 1.0],
            &["slope", "ghost"],
            &LmOptions::default(),
        )
        .unwrap_err();
        match err {
            Error::SingularJacobian { parameters } => {
                assert!(parameters.contains(&"ghost".to_string()), "{parameters:?}");
            }
            other => panic!("expected SingularJacobian, got {other:?}"),
        }
    }

    #[test]
    fn covariance_matches_linear_regression() {
        // Linear model: covariance has the closed form s² (XᵀX)⁻¹.
        let xs: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| 2.0 * x + 1.0 + if x as usize % 2 == 0 { 0.1 } else { -0.1 }).collect();
        let out = minimize(
            |p, r| {
                r.clear();
                r.extend(xs.iter().zip(ys.iter()).map(|(x, y)| p[0] * x + p[1] - y));
                Ok(())
            },
            &[0.0, 0.0],
            &["slope", "intercept"],
            &LmOptions::default(),
        )
        .unwrap();
        let cov = out.covariance();
        let n = xs.len() as f64;
        let sx: f64 = xs.iter().sum();
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        let det = n * sxx - sx * sx;
        let s2 = out.ssr / (xs.len() - 2) as f64;
        assert_abs_diff_eq!(cov[(0, 0)], s2 * n / det, epsilon = 1e-10);
        assert_abs_diff_eq!(cov[(1, 1)], s2 * sxx / det, epsilon = 1e-9);
    }
}
