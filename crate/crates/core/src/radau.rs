//! Three-stage Radau IIA collocation (order 5, L-stable) with step-doubling
//! error control.
//!
//! Each attempt takes one step of size `h` and two steps of size `h/2` from
//! the same point; the difference of the two results, divided by
//! `2^5 - 1`, estimates the local error of the two-half-step solution,
//! which is the one returned. Stage equations are solved by simplified
//! Newton iteration with a finite-difference Jacobian that is shared by
//! all three sub-steps of an attempt.
//!
//! Linear invariants of the right-hand side (`c . f(y) = 0` for all `y`)
//! are preserved to rounding, because every Newton update lies in the
//! null space of `c`.

use nalgebra::{DMatrix, DVector};

/// A first-order system `y' = f(y)`.
pub trait OdeSystem {
    type Error: Clone;

    fn dim(&self) -> usize;

    fn rhs(&mut self, y: &[f64], dy: &mut [f64]) -> Result<(), Self::Error>;
}

/// Why an attempted step produced no result.
#[derive(Debug, Clone, PartialEq)]
pub enum StepFailure<E> {
    /// The right-hand side could not be evaluated at a stage value.
    Rhs(E),
    /// The simplified Newton iteration diverged or stalled.
    Newton,
    /// The iteration matrix is singular.
    Singular,
}

const SQRT6: f64 = 2.449_489_742_783_178;

/// Butcher coefficients of the 3-stage Radau IIA method.
const A: [[f64; 3]; 3] = [
    [(88.0 - 7.0 * SQRT6) / 360.0, (296.0 - 169.0 * SQRT6) / 1800.0, (-2.0 + 3.0 * SQRT6) / 225.0],
    [(296.0 + 169.0 * SQRT6) / 1800.0, (88.0 + 7.0 * SQRT6) / 360.0, (-2.0 - 3.0 * SQRT6) / 225.0],
    [(16.0 - SQRT6) / 36.0, (16.0 + SQRT6) / 36.0, 1.0 / 9.0],
];

/// Order of the underlying one-step method.
pub const ORDER: i32 = 5;

/// Result of one step-doubling attempt.
#[derive(Debug, Clone)]
pub struct DoubledStep {
    /// Solution after two half steps.
    pub y: Vec<f64>,
    /// Solution after the single full step.
    pub full: Vec<f64>,
    /// Weighted RMS norm of the local error estimate; accept when `<= 1`.
    pub error: f64,
}

#[derive(Debug, Clone)]
pub struct Radau5 {
    pub rtol: f64,
    /// Absolute tolerance per component.
    pub atol: Vec<f64>,
    pub max_newton: usize,
    /// Newton stopping threshold, as a fraction of the error weight.
    pub newton_tol: f64,
}

impl Radau5 {
    pub fn new(rtol: f64, atol: Vec<f64>) -> Self {
        Radau5 { rtol, atol, max_newton: 10, newton_tol: 1e-3 }
    }

    fn weights(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        a.iter()
            .zip(b)
            .zip(&self.atol)
            .map(|((x, y), at)| at + self.rtol * x.abs().max(y.abs()))
            .collect()
    }

    /// Weighted RMS norm of `v` with weights `w`.
    pub fn norm(v: &[f64], w: &[f64]) -> f64 {
        let n = v.len() as f64;
        (v.iter().zip(w).map(|(x, s)| (x / s).powi(2)).sum::<f64>() / n).sqrt()
    }

    /// Forward-difference Jacobian of `sys` at `y`, given `f0 = f(y)`.
    pub fn jacobian<S: OdeSystem>(
        &self,
        sys: &mut S,
        y: &[f64],
        f0: &[f64],
    ) -> Result<DMatrix<f64>, StepFailure<S::Error>> {
        let n = y.len();
        let mut jac = DMatrix::zeros(n, n);
        let mut yp = y.to_vec();
        let mut fp = vec![0.0; n];
        for k in 0..n {
            let delta = 1.5e-8 * y[k].abs().max(self.atol[k]).max(1e-300);
            yp[k] = y[k] + delta;
            let mut used = delta;
            if sys.rhs(&yp, &mut fp).is_err() {
                yp[k] = y[k] - delta;
                used = -delta;
                sys.rhs(&yp, &mut fp).map_err(StepFailure::Rhs)?;
            }
            for i in 0..n {
                jac[(i, k)] = (fp[i] - f0[i]) / used;
            }
            yp[k] = y[k];
        }
        Ok(jac)
    }

    /// One Radau IIA step of size `h` from `y0` using iteration Jacobian `jac`.
    pub fn step<S: OdeSystem>(
        &self,
        sys: &mut S,
        y0: &[f64],
        h: f64,
        jac: &DMatrix<f64>,
    ) -> Result<Vec<f64>, StepFailure<S::Error>> {
        let n = y0.len();
        let mut m = DMatrix::<f64>::identity(3 * n, 3 * n);
        for bi in 0..3 {
            for bk in 0..3 {
                let scale = h * A[bi][bk];
                for r in 0..n {
                    for c in 0..n {
                        m[(bi * n + r, bk * n + c)] -= scale * jac[(r, c)];
                    }
                }
            }
        }
        let lu = m.lu();
        let w = self.weights(y0, y0);
        let w3: Vec<f64> = w.iter().cycle().take(3 * n).copied().collect();

        let mut z = vec![0.0; 3 * n];
        let mut stage = vec![0.0; n];
        let mut fz = vec![0.0; 3 * n];
        let mut prev_norm = f64::INFINITY;
        for it in 0..self.max_newton {
            for k in 0..3 {
                for i in 0..n {
                    stage[i] = y0[i] + z[k * n + i];
                }
                sys.rhs(&stage, &mut fz[k * n..(k + 1) * n]).map_err(StepFailure::Rhs)?;
            }
            let mut residual = DVector::<f64>::zeros(3 * n);
            for bi in 0..3 {
                for i in 0..n {
                    let mut acc = -z[bi * n + i];
                    for bk in 0..3 {
                        acc += h * A[bi][bk] * fz[bk * n + i];
                    }
                    residual[bi * n + i] = acc;
                }
            }
            let dz = lu.solve(&residual).ok_or(StepFailure::Singular)?;
            for (zi, d) in z.iter_mut().zip(dz.iter()) {
                *zi += d;
            }
            let norm = Self::norm(dz.as_slice(), &w3);
            if !norm.is_finite() {
                return Err(StepFailure::Newton);
            }
            let converged = if it == 0 {
                norm <= self.newton_tol
            } else {
                let theta = norm / prev_norm;
                if theta >= 0.99 {
                    return Err(StepFailure::Newton);
                }
                theta / (1.0 - theta) * norm <= self.newton_tol
            };
            if converged || norm == 0.0 {
                return Ok((0..n).map(|i| y0[i] + z[2 * n + i]).collect());
            }
            prev_norm = norm;
        }
        Err(StepFailure::Newton)
    }

    /// Full step and two half steps from `y0`; returns the half-step result
    /// with its error estimate.
    pub fn doubled_step<S: OdeSystem>(
        &self,
        sys: &mut S,
        y0: &[f64],
        h: f64,
        jac: &DMatrix<f64>,
    ) -> Result<DoubledStep, StepFailure<S::Error>> {
        let full = self.step(sys, y0, h, jac)?;
        let half = self.step(sys, y0, 0.5 * h, jac)?;
        let two = self.step(sys, &half, 0.5 * h, jac)?;
        let scale = 1.0 / (2f64.powi(ORDER) - 1.0);
        let diff: Vec<f64> = two.iter().zip(&full).map(|(a, b)| (a - b) * scale).collect();
        let w = self.weights(y0, &two);
        let error = Self::norm(&diff, &w);
        Ok(DoubledStep { y: two, full, error })
    }

    /// Step-size factor after an attempt with the given error norm.
    pub fn step_factor(error: f64) -> f64 {
        if error == 0.0 {
            return 4.0;
        }
        (0.9 * error.powf(-1.0 / (ORDER as f64 + 1.0))).clamp(0.2, 4.0)
    }
}

/// Integrates `sys` from `y0` over `[0, t_end]` with step doubling; returns
/// the final state and the number of accepted steps. Used for testing the
/// scheme in isolation.
pub fn integrate<S: OdeSystem>(
    solver: &Radau5,
    sys: &mut S,
    y0: &[f64],
    t_end: f64,
    h0: f64,
) -> Result<(Vec<f64>, usize), StepFailure<S::Error>> {
    let mut y = y0.to_vec();
    let mut t = 0.0;
    let mut h = h0;
    let mut f0 = vec![0.0; y.len()];
    let mut accepted = 0;
    let mut failures = 0;
    while t < t_end {
        h = h.min(t_end - t);
        sys.rhs(&y, &mut f0).map_err(StepFailure::Rhs)?;
        let jac = solver.jacobian(sys, &y, &f0)?;
        match solver.doubled_step(sys, &y, h, &jac) {
            Ok(step) if step.error <= 1.0 => {
                t += h;
                y = step.y;
                accepted += 1;
                h *= Radau5::step_factor(step.error);
            }
            Ok(step) => h *= Radau5::step_factor(step.error).min(0.9),
            Err(e) => {
                failures += 1;
                if failures > 100 {
                    return Err(e);
                }
                h *= 0.25;
            }
        }
    }
    Ok((y, accepted))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Linear(Vec<Vec<f64>>);

    impl OdeSystem for Linear {
        type Error = ();
        fn dim(&self) -> usize {
            self.0.len()
        }
        fn rhs(&mut self, y: &[f64], dy: &mut [f64]) -> Result<(), ()> {
            for (i, row) in self.0.iter().enumerate() {
                dy[i] = row.iter().zip(y).map(|(a, b)| a * b).sum();
            }
            Ok(())
        }
    }

    #[test]
    fn stage_coefficients_are_consistent() {
        let c = [(4.0 - SQRT6) / 10.0, (4.0 + SQRT6) / 10.0, 1.0];
        for i in 0..3 {
            let row: f64 = A[i].iter().sum();
            assert!((row - c[i]).abs() < 1e-15);
        }
        // quadrature order conditions sum b_i c_i^(k-1) = 1/k, k = 1..5
        for k in 1..=5 {
            let s: f64 = (0..3).map(|i| A[2][i] * c[i].powi(k - 1)).sum();
            assert!((s - 1.0 / k as f64).abs() < 1e-14, "k = {k}");
        }
    }

    #[test]
    fn fifth_order_convergence_on_oscillator() {
        let mut sys = Linear(vec![vec![0.0, 1.0], vec![-1.0, 0.0]]);
        let solver = Radau5::new(1e-6, vec![1e-6; 2]);
        let err_at = |h: f64, sys: &mut Linear| {
            let mut y = vec![1.0, 0.0];
            let mut f0 = vec![0.0; 2];
            let steps = (1.0 / h).round() as usize;
            for _ in 0..steps {
                sys.rhs(&y, &mut f0).unwrap();
                let jac = solver.jacobian(sys, &y, &f0).unwrap();
                y = solver.step(sys, &y, h, &jac).unwrap();
            }
            ((y[0] - 1f64.cos()).powi(2) + (y[1] + 1f64.sin()).powi(2)).sqrt()
        };
        let coarse = err_at(0.2, &mut sys);
        let fine = err_at(0.1, &mut sys);
        let observed = (coarse / fine).log2();
        assert!(observed > 4.5, "observed order {observed}");
    }

    #[test]
    fn stiff_decay_is_damped() {
        // y1' = -1e6 (y1 - cos t) style stiffness without time dependence
        let mut sys = Linear(vec![vec![-1e6, 0.0], vec![1.0, -1.0]]);
        let solver = Radau5::new(1e-8, vec![1e-12; 2]);
        let (y, steps) = integrate(&solver, &mut sys, &[1.0, 1.0], 5.0, 1e-3).unwrap();
        assert!(y[0].abs() < 1e-12);
        assert!((y[1] - (-5f64).exp()).abs() < 1e-6, "{}", y[1]);
        assert!(steps < 200, "{steps} steps");
    }

    #[test]
    fn linear_invariant_is_preserved() {
        // mass-conserving chain A -> B -> C
        let mut sys = Linear(vec![vec![-3.0, 0.0, 0.0], vec![3.0, -50.0, 0.0], vec![0.0, 50.0, 0.0]]);
        let solver = Radau5::new(1e-6, vec![1e-9; 3]);
        let (y, _) = integrate(&solver, &mut sys, &[1.0, 0.0, 0.0], 10.0, 1e-4).unwrap();
        assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-13);
    }
}
