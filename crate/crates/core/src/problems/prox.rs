//! Scalar building blocks of the log-regularizer and its proximal maps.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// `theta / log(1 + theta)`, the slope of the convex part of the log penalty.
pub fn eta(theta: f64) -> f64 {
    theta / theta.ln_1p()
}

/// `log(1 + theta |x|) / log(1 + theta)`.
pub fn r0(x: f64, theta: f64) -> f64 {
    (theta * x.abs()).ln_1p() / theta.ln_1p()
}

/// Concave-part remainder `eta |x| - r0(x)`; convex with Lipschitz derivative.
pub fn r0_minus(x: f64, theta: f64) -> f64 {
    eta(theta) * x.abs() - r0(x, theta)
}

/// Derivative of [`r0_minus`]: `sign(x) theta^2 |x| / (log(1+theta) (1 + theta |x|))`.
pub fn r0_minus_derivative(x: f64, theta: f64) -> f64 {
    let a = x.abs();
    x.signum() * theta * theta * a / (theta.ln_1p() * (1.0 + theta * a))
}

/// Subgradient of `r0` with the zero element chosen at the origin.
pub fn r0_subgradient(x: f64, theta: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.signum() * theta / (theta.ln_1p() * (1.0 + theta * x.abs()))
    }
}

/// Element-wise `sign(v) max(|v| - kappa, 0)`.
pub fn soft_threshold(v: &DVector<f64>, kappa: f64) -> DVector<f64> {
    v.map(|x| x.signum() * (x.abs() - kappa).max(0.0))
}

/// Element-wise clamp onto `[lower, upper]`.
pub fn box_project(v: &DVector<f64>, lower: f64, upper: f64) -> DVector<f64> {
    v.map(|x| x.clamp(lower, upper))
}

const ORACLE_MAX_ITERS: usize = 100_000;

/// Minimizes `q^T (x - center) + tau ||x - center||^2 + lambda_eta ||x||_1` over
/// the box `[lower, upper]^d` by bisection on each coordinate's (monotone)
/// right derivative. Independent of [`soft_threshold`] and [`box_project`].
pub fn oracle_prox_solve(
    q: &DVector<f64>,
    center: &DVector<f64>,
    tau: f64,
    lambda_eta: f64,
    lower: f64,
    upper: f64,
) -> Result<DVector<f64>> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
    }
    if q.len() != center.len() {
        return Err(Error::DimensionError("q and center lengths differ".into()));
    }
    let mut out = DVector::zeros(q.len());
    for k in 0..q.len() {
        out[k] = bisect_coordinate(q[k], center[k], tau, lambda_eta, lower, upper)?;
    }
    Ok(out)
}

fn bisect_coordinate(q: f64, c: f64, tau: f64, w: f64, lower: f64, upper: f64) -> Result<f64> {
    let right_derivative = |x: f64| q + 2.0 * tau * (x - c) + if x >= 0.0 { w } else { -w };
    // the minimizer of the unconstrained problem lies within this radius
    let radius = c.abs() + (q.abs() + w) / (2.0 * tau) + 1.0;
    let mut a = lower.max(-radius);
    let mut b = upper.min(radius);
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::SolverFailure("non-finite bracket".into()));
    }
    if a > b {
        // box lies entirely beyond the radius on one side
        return Ok(if lower > radius { lower } else { upper });
    }
    if right_derivative(a) >= 0.0 {
        return Ok(a);
    }
    if right_derivative(b) < 0.0 {
        return Ok(b);
    }
    for _ in 0..ORACLE_MAX_ITERS {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b || b - a <= 1e-15 * a.abs().max(b.abs()).max(1e-3) {
            return Ok(b);
        }
        if right_derivative(mid) >= 0.0 {
            b = mid;
        } else {
            a = mid;
        }
    }
    Err(Error::SolverFailure(format!("bisection did not converge in {ORACLE_MAX_ITERS} iterations")))
}
