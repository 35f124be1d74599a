//! Scalar root finding: bracketed, safeguarded Newton iteration.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum RootError {
    #[error("no sign change on [{lo}, {hi}] (f(lo) = {f_lo}, f(hi) = {f_hi})")]
    NoBracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },
    #[error("function value not finite at x = {x}")]
    NonFinite { x: f64 },
    #[error("no convergence after {iterations} iterations")]
    MaxIterations { iterations: usize },
}

/// Stopping rule for [`safeguarded_newton`].
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    /// Accept when `|f(x)| <= ftol`.
    pub ftol: f64,
    /// Accept when the bracket is narrower than `xtol`.
    pub xtol: f64,
    pub max_iter: usize,
}

/// Finds a root of `f` inside `[lo, hi]`.
///
/// `f` returns the value and derivative. `f(lo)` and `f(hi)` must differ in
/// sign. Newton steps starting from `guess` are taken while they stay inside
/// the current bracket and shrink the residual quickly enough; otherwise the
/// iteration falls back to bisection, so convergence is guaranteed.
pub fn safeguarded_newton<F>(mut f: F, lo: f64, hi: f64, guess: f64, tol: Tolerance) -> Result<f64, RootError>
where
    F: FnMut(f64) -> (f64, f64),
{
    let (f_lo, _) = f(lo);
    let (f_hi, _) = f(hi);
    if !f_lo.is_finite() {
        return Err(RootError::NonFinite { x: lo });
    }
    if !f_hi.is_finite() {
        return Err(RootError::NonFinite { x: hi });
    }
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(RootError::NoBracket { lo, hi, f_lo, f_hi });
    }
    // orient so that f(a) < 0 < f(b)
    let (mut a, mut b) = if f_lo < 0.0 { (lo, hi) } else { (hi, lo) };

    let mut x = if guess.is_finite() && guess > lo.min(hi) && guess < lo.max(hi) {
        guess
    } else {
        0.5 * (lo + hi)
    };
    let mut last_fx = f64::INFINITY;
    for _ in 0..tol.max_iter {
        let (fx, dfx) = f(x);
        if !fx.is_finite() {
            return Err(RootError::NonFinite { x });
        }
        if fx.abs() <= tol.ftol {
            return Ok(x);
        }
        if fx < 0.0 {
            a = x;
        } else {
            b = x;
        }
        if (b - a).abs() <= tol.xtol {
            return Ok(x);
        }
        let newton = x - fx / dfx;
        let inside = newton.is_finite() && newton > a.min(b) && newton < a.max(b);
        x = if inside && fx.abs() <= 0.5 * last_fx { newton } else { 0.5 * (a + b) };
        last_fx = fx.abs();
    }
    Err(RootError::MaxIterations { iterations: tol.max_iter })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: Tolerance = Tolerance { ftol: 1e-14, xtol: 1e-15, max_iter: 200 };

    #[test]
    fn finds_sqrt_two() {
        let x = safeguarded_newton(|x| (x * x - 2.0, 2.0 * x), 0.0, 2.0, 1.0, TOL).unwrap();
        assert!((x - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn decreasing_function_and_reversed_bracket() {
        let x = safeguarded_newton(|x| (1.0 - x.exp(), -x.exp()), 3.0, -3.0, 2.9, TOL).unwrap();
        assert!(x.abs() < 1e-14);
    }

    #[test]
    fn survives_a_flat_derivative() {
        // Newton from 0 would divide by zero; bisection carries it.
        let x = safeguarded_newton(|x| (x * x * x - 0.001, 3.0 * x * x), -1.0, 1.0, 0.0, TOL).unwrap();
        assert!((x - 0.1).abs() < 1e-12);
    }

    #[test]
    fn reports_missing_bracket() {
        let err = safeguarded_newton(|x| (x * x + 1.0, 2.0 * x), -1.0, 1.0, 0.0, TOL).unwrap_err();
        assert!(matches!(err, RootError::NoBracket { .. }));
    }

    #[test]
    fn reports_non_finite_values() {
        let err = safeguarded_newton(|x| (if x > 0.5 { f64::NAN } else { x - 1.0 }, 1.0), 0.0, 2.0, 0.2, TOL)
            .unwrap_err();
        assert!(matches!(err, RootError::NonFinite { .. }));
    }
}
