//! Linearized unicycle model and steady-state discrete LQR gain.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Matrix3x2, SMatrix, Vector3};
use thiserror::Error;

use crate::vehicle::{wrap_angle, Pose, Twist};

pub const DEFAULT_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LqrError {
    #[error("time step must be positive, got {0}")]
    InvalidTimeStep(f64),
    #[error("reference pose or twist is not finite")]
    NonFiniteReference,
    #[error("R + B'PB is not positive definite")]
    SingularControlWeight,
    #[error("Riccati iteration did not converge after {iterations} iterations (last change {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
}

/// Discrete error dynamics `x~_{k+1} = A_k x~_k + B_k u~_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearModel {
    pub a: Matrix3<f64>,
    pub b: Matrix3x2<f64>,
    pub dt: f64,
}

/// Quadratic cost weights. `q_f` is kept for completeness; the infinite
/// horizon gain does not use it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqrWeights {
    pub q: Matrix3<f64>,
    pub r: Matrix2<f64>,
    pub q_f: Matrix3<f64>,
}

impl LqrWeights {
    pub fn diagonal(q: [f64; 3], r: [f64; 2]) -> Self {
        let q = Matrix3::from_diagonal(&q.into());
        Self {
            q,
            r: Matrix2::from_diagonal(&r.into()),
            q_f: q,
        }
    }
}

impl Default for LqrWeights {
    fn default() -> Self {
        Self::diagonal([1.0, 1.0, 0.5], [0.1, 0.1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqrGain {
    pub k: Matrix2x3<f64>,
    pub p: Matrix3<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Linearizes the unicycle about `(ref_pose, ref_twist)` and discretizes with
/// forward Euler: `A_k = dt A + I`, `B_k = dt B`.
///
/// `B` carries the sampling period in its angular column, as in the model the
/// controller was designed around.
pub fn linearize(ref_pose: &Pose, ref_twist: &Twist, dt: f64) -> Result<LinearModel, LqrError> {
    if !(dt > 0.0) {
        return Err(LqrError::InvalidTimeStep(dt));
    }
    let finite = [ref_pose.x, ref_pose.y, ref_pose.theta, ref_twist.v, ref_twist.omega]
        .iter()
        .all(|v| v.is_finite());
    if !finite {
        return Err(LqrError::NonFiniteReference);
    }
    let (sin, cos) = ref_pose.theta.sin_cos();
    let v = ref_twist.v;
    #[rustfmt::skip]
    let a = Matrix3::new(
        0.0, 0.0, -v * sin,
        0.0, 0.0,  v * cos,
        0.0, 0.0,  0.0,
    );
    #[rustfmt::skip]
    let b = Matrix3x2::new(
        cos, -v * sin * dt,
        sin,  v * cos * dt,
        0.0,  1.0,
    );
    Ok(LinearModel {
        a: a * dt + Matrix3::identity(),
        b: b * dt,
        dt,
    })
}

/// Result of a Riccati fixed-point iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiccatiSolution<const N: usize, const M: usize> {
    pub p: SMatrix<f64, N, N>,
    pub k: SMatrix<f64, M, N>,
    pub iterations: usize,
    pub residual: f64,
}

/// Iterates `P <- Q + A'PA - A'PB (R + B'PB)^-1 B'PA` from `p0` until the
/// largest elementwise change is at most `tol`.
///
/// Each iterate is symmetrized. Divergence or `max_iter` exhaustion is
/// reported as [`LqrError::NonConvergence`].
pub fn riccati_iterate<const N: usize, const M: usize>(
    a: &SMatrix<f64, N, N>,
    b: &SMatrix<f64, N, M>,
    q: &SMatrix<f64, N, N>,
    r: &SMatrix<f64, M, M>,
    p0: &SMatrix<f64, N, N>,
    tol: f64,
    max_iter: usize,
) -> Result<RiccatiSolution<N, M>, LqrError> {
    let at = a.transpose();
    let bt = b.transpose();
    let mut p = *p0;
    let mut residual = f64::INFINITY;
    for iter in 1..=max_iter {
        let pa = p * a;
        let btpa = bt * pa;
        let chol = (r + bt * p * b)
            .cholesky()
            .ok_or(LqrError::SingularControlWeight)?;
        let gain = chol.solve(&btpa);
        let mut next = q + at * pa - btpa.transpose() * gain;
        next = (next + next.transpose()) * 0.5;
        residual = (next - p).amax();
        p = next;
        if !residual.is_finite() {
            break;
        }
        if residual <= tol {
            let k = gain_from(&p, a, b, r)?;
            return Ok(RiccatiSolution {
                p,
                k,
                iterations: iter,
                residual,
            });
        }
    }
    Err(LqrError::NonConvergence {
        iterations: max_iter,
        residual,
    })
}

/// `K = (R + B'PB)^-1 B'PA`.
pub fn gain_from<const N: usize, const M: usize>(
    p: &SMatrix<f64, N, N>,
    a: &SMatrix<f64, N, N>,
    b: &SMatrix<f64, N, M>,
    r: &SMatrix<f64, M, M>,
) -> Result<SMatrix<f64, M, N>, LqrError> {
    let bt = b.transpose();
    let chol = (r + bt * p * b)
        .cholesky()
        .ok_or(LqrError::SingularControlWeight)?;
    Ok(chol.solve(&(bt * p * a)))
}

/// Steady-state gain for `model`, iterating from `P_0 = Q`.
pub fn solve_dare(
    model: &LinearModel,
    w: &LqrWeights,
    tol: f64,
    max_iter: usize,
) -> Result<LqrGain, LqrError> {
    solve_dare_from(model, w, &w.q, tol, max_iter)
}

/// As [`solve_dare`], warm-started from `p0`.
pub fn solve_dare_from(
    model: &LinearModel,
    w: &LqrWeights,
    p0: &Matrix3<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<LqrGain, LqrError> {
    let sol = riccati_iterate(&model.a, &model.b, &w.q, &w.r, p0, tol, max_iter)?;
    Ok(LqrGain {
        k: sol.k,
        p: sol.p,
        iterations: sol.iterations,
        residual: sol.residual,
    })
}

/// State feedback `u_l = -K x~` with the heading error wrapped first.
pub fn feedback(gain: &LqrGain, x_tilde: &Vector3<f64>) -> Twist {
    let x = Vector3::new(x_tilde[0], x_tilde[1], wrap_angle(x_tilde[2]));
    let u = -(gain.k * x);
    Twist::new(u[0], u[1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::{SMatrix, Vector3};
    use std::f64::consts::PI;

    #[test]
    fn linearize_straight_reference() {
        let m = linearize(&Pose::new(0.0, 0.0, 0.0), &Twist::new(1.0, 0.0), 0.05).unwrap();
        #[rustfmt::skip]
        let a = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.05, 0.0, 0.0, 1.0);
        #[rustfmt::skip]
        let b = Matrix3x2::new(0.05, 0.0, 0.0, 0.0025, 0.0, 0.05);
        assert_abs_diff_eq!(m.a, a, epsilon = 1e-15);
        assert_abs_diff_eq!(m.b, b, epsilon = 1e-15);

        let m = linearize(&Pose::new(1.0, 2.0, 0.3), &Twist::new(0.0, 0.4), 0.05).unwrap();
        assert_eq!(m.a, Matrix3::identity());

        let m = linearize(&Pose::new(0.0, 0.0, PI / 2.0), &Twist::new(1.0, 0.0), 0.05).unwrap();
        assert_abs_diff_eq!(m.a[(0, 2)], -0.05, epsilon = 1e-15);
        assert_abs_diff_eq!(m.a[(1, 2)], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn linearize_rejects_bad_input() {
        let p = Pose::new(0.0, 0.0, 0.0);
        assert_eq!(
            linearize(&p, &Twist::new(1.0, 0.0), 0.0),
            Err(LqrError::InvalidTimeStep(0.0))
        );
        assert_eq!(
            linearize(&p, &Twist::new(f64::NAN, 0.0), 0.05),
            Err(LqrError::NonFiniteReference)
        );
    }

    #[test]
    fn scalar_golden_ratio() {
        let one = SMatrix::<f64, 1, 1>::new(1.0);
        let sol = riccati_iterate(&one, &one, &one, &one, &one, 1e-12, 1000).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert_abs_diff_eq!(sol.p[0], phi, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.k[0], phi / (1.0 + phi), epsilon = 1e-9);
        let g = LqrGain {
            k: Matrix2x3::new(sol.k[0], 0.0, 0.0, 0.0, 0.0, 0.0),
            p: Matrix3::zeros(),
            iterations: 0,
            residual: 0.0,
        };
        assert_abs_diff_eq!(feedback(&g, &Vector3::new(1.0, 0.0, 0.0)).v, -0.6180339887, epsilon = 1e-9);
    }

    #[test]
    fn zero_state_cost_gives_zero_gain() {
        let m = linearize(&Pose::new(0.0, 0.0, 0.2), &Twist::new(1.0, 0.0), 0.05).unwrap();
        let w = LqrWeights::diagonal([0.0; 3], [0.1, 0.1]);
        let g = solve_dare(&m, &w, DEFAULT_TOLERANCE, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(g.p, Matrix3::zeros());
        assert_eq!(g.k, Matrix2x3::zeros());
    }

    #[test]
    fn unstabilizable_system_does_not_converge() {
        // unstable mode with no actuation
        let a = Matrix3::from_diagonal(&Vector3::new(1.2, 0.5, 0.5));
        let b = Matrix3x2::new(0.0, 0.0, 1.0, 0.0, 0.0, 1.0);
        let m = LinearModel { a, b, dt: 0.05 };
        let err = solve_dare(&m, &LqrWeights::default(), 1e-10, 500).unwrap_err();
        assert!(matches!(err, LqrError::NonConvergence { .. }));
    }

    #[test]
    fn feedback_wraps_heading() {
        let m = linearize(&Pose::new(0.0, 0.0, 0.0), &Twist::new(1.0, 0.0), 0.05).unwrap();
        let g = solve_dare(&m, &LqrWeights::default(), DEFAULT_TOLERANCE, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(feedback(&g, &Vector3::zeros()), Twist::ZERO);
        let a = feedback(&g, &Vector3::new(0.1, -0.2, 2.0 * PI - 0.1));
        let b = feedback(&g, &Vector3::new(0.1, -0.2, -0.1));
        assert_abs_diff_eq!(a.v, b.v, epsilon = 1e-12);
        assert_abs_diff_eq!(a.omega, b.omega, epsilon = 1e-12);
    }

    #[test]
    fn nominal_gain_properties() {
        for theta in [0.0, 0.7, PI / 2.0, -2.5] {
            let m = linearize(&Pose::new(0.0, 0.0, theta), &Twist::new(1.0, 0.0), 0.05).unwrap();
            let w = LqrWeights::default();
            let g = solve_dare(&m, &w, DEFAULT_TOLERANCE, DEFAULT_MAX_ITER).unwrap();
            assert!(g.residual <= DEFAULT_TOLERANCE);
            assert!((g.p - g.p.transpose()).amax() <= 1e-9);
            // fixed point residual
            let again = riccati_iterate(&m.a, &m.b, &w.q, &w.r, &g.p, f64::INFINITY, 1).unwrap();
            assert!((again.p - g.p).amax() <= 10.0 * DEFAULT_TOLERANCE);
            let cl = m.a - m.b * g.k;
            let rho = cl
                .complex_eigenvalues()
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max);
            assert!(rho < 1.0, "spectral radius {rho}");
            let eig = g.p.symmetric_eigenvalues();
            assert!(eig.iter().all(|&l| l >= -1e-9));
        }
    }

    #[test]
    fn warm_start_agrees_with_cold_start() {
        let w = LqrWeights::default();
        let m0 = linearize(&Pose::new(0.0, 0.0, 0.0), &Twist::new(1.0, 0.0), 0.05).unwrap();
        let m1 = linearize(&Pose::new(0.0, 0.0, 0.05), &Twist::new(1.0, 0.0), 0.05).unwrap();
        let g0 = solve_dare(&m0, &w, 1e-12, DEFAULT_MAX_ITER).unwrap();
        let cold = solve_dare(&m1, &w, 1e-12, DEFAULT_MAX_ITER).unwrap();
        let warm = solve_dare_from(&m1, &w, &g0.p, 1e-12, DEFAULT_MAX_ITER).unwrap();
        assert!(warm.iterations < cold.iterations);
        assert!((warm.p - cold.p).amax() < 1e-8);
    }
}
