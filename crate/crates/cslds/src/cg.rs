//! Conjugate gradient on the normal equations, operator form.

use nalgebra::DVector;

/// Outcome of a conjugate-gradient solve.
#[derive(Debug, Clone)]
pub struct CgReport {
    pub iterations: usize,
    pub converged: bool,
    /// Set when the iteration hit a non-positive or non-finite curvature.
    pub breakdown: bool,
    pub final_residual: f64,
}

/// Minimizes the quadratic `0.5 x' G x - b' x` for a symmetric positive
/// semi-definite operator `G` given only as a matvec closure. Starting from
/// `x0`, the objective is non-increasing across iterations, so a warm start
/// is never made worse.
///
/// Stops when `||b - G x|| <= tol * ||b||` or after `max_iters` iterations.
pub fn conjugate_gradient<F>(
    mut apply: F,
    b: &DVector<f64>,
    x0: DVector<f64>,
    tol: f64,
    max_iters: usize,
) -> (DVector<f64>, CgReport)
where
    F: FnMut(&DVector<f64>) -> DVector<f64>,
{
    let b_norm = b.norm();
    if b_norm == 0.0 {
        let n = b.len();
        return (
            DVector::zeros(n),
            CgReport {
                iterations: 0,
                converged: true,
                breakdown: false,
                final_residual: 0.0,
            },
        );
    }

    let mut x = x0;
    let mut r = b - apply(&x);
    let mut p = r.clone();
    let mut rs = r.norm_squared();
    let target = tol * b_norm;

    if rs.sqrt() <= target {
        return (
            x,
            CgReport {
                iterations: 0,
                converged: true,
                breakdown: false,
                final_residual: rs.sqrt(),
            },
        );
    }

    for iter in 1..=max_iters {
        let gp = apply(&p);
        let curvature = p.dot(&gp);
        if !(curvature.is_finite() && curvature > 0.0) {
            return (
                x,
                CgReport {
                    iterations: iter,
                    converged: false,
                    breakdown: true,
                    final_residual: rs.sqrt(),
                },
            );
        }
        let alpha = rs / curvature;
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &gp, 1.0);
        let rs_new = r.norm_squared();
        if rs_new.sqrt() <= target {
            return (
                x,
                CgReport {
                    iterations: iter,
                    converged: true,
                    breakdown: false,
                    final_residual: rs_new.sqrt(),
                },
            );
        }
        let beta = rs_new / rs;
        rs = rs_new;
        // p = r + beta p
        p *= beta;
        p += &r;
    }

    (
        x,
        CgReport {
            iterations: max_iters,
            converged: false,
            breakdown: false,
            final_residual: rs.sqrt(),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn spd_system(n: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        let g = &m * m.transpose() + DMatrix::identity(n, n) * 0.1;
        let b = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
        (g, b)
    }

    #[test]
    fn solves_spd_system() {
        let (g, b) = spd_system(20, 42);
        let (x, report) = conjugate_gradient(|v| &g * v, &b, DVector::zeros(20), 1e-12, 200);
        assert!(report.converged);
        assert!((&g * &x - &b).norm() < 1e-10 * b.norm());
    }

    #[test]
    fn warm_start_objective_never_increases() {
        let (g, b) = spd_system(15, 7);
        let objective = |x: &DVector<f64>| 0.5 * x.dot(&(&g * x)) - b.dot(x);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x0 = DVector::from_fn(15, |_, _| rng.random::<f64>() - 0.5);
        for cap in [0usize, 1, 2, 5, 50] {
            let (x, _) = conjugate_gradient(|v| &g * v, &b, x0.clone(), 1e-14, cap);
            assert!(objective(&x) <= objective(&x0) + 1e-12);
        }
    }

    #[test]
    fn zero_rhs_returns_zero() {
        let (g, _) = spd_system(5, 1);
        let b = DVector::zeros(5);
        let (x, report) = conjugate_gradient(|v| &g * v, &b, DVector::zeros(5), 1e-10, 10);
        assert!(report.converged);
        assert_eq!(x, DVector::zeros(5));
    }
}
