//! Dense primal-dual interior point method for small standard-form SDPs
//!
//! ```text
//! min <C, X>  s.t.  <A_i, X> = b_i,  X >= 0
//! max b^T y   s.t.  sum_i y_i A_i + S = C,  S >= 0
//! ```
//!
//! Infeasible-start path following with the HKM search direction. Meant for
//! problems with a handful of rows, where forming the Schur complement densely
//! is cheaper than anything clever.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::linalg::symmetrize;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SdpSettings {
    /// Relative duality-gap and residual tolerance.
    pub tol: f64,
    pub max_iter: usize,
    /// Centering parameter. The barrier target is at most this fraction of the current mu.
    pub sigma: f64,
    /// Fraction of the step to the boundary of the cone.
    pub step_fraction: f64,
}

impl Default for SdpSettings {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iter: 100,
            sigma: 0.5,
            step_fraction: 0.95,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SdpSolution {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub s: DMatrix<f64>,
    pub primal_obj: f64,
    pub dual_obj: f64,
    /// `|primal - dual| / (1 + |primal| + |dual|)`.
    pub rel_gap: f64,
    pub iterations: usize,
}

fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.dot(b)
}

/// Largest step in `[0, 1]` keeping `x + alpha dx` PSD, times `fraction`.
fn max_step(x: &DMatrix<f64>, dx: &DMatrix<f64>, fraction: f64) -> Option<f64> {
    let chol = x.clone().cholesky()?;
    let l = chol.l();
    let linv = l.clone().try_inverse()?;
    let m = symmetrize(&(&linv * dx * linv.transpose()));
    let lam_min = SymmetricEigen::new(m).eigenvalues.min();
    if lam_min >= 0.0 {
        Some(1.0)
    } else {
        Some((-fraction / lam_min).min(1.0))
    }
}

pub fn solve(
    c: &DMatrix<f64>,
    constraints: &[DMatrix<f64>],
    b: &DVector<f64>,
    settings: &SdpSettings,
) -> Result<SdpSolution> {
    let n = c.nrows();
    let m = constraints.len();
    if c.ncols() != n || b.len() != m || constraints.iter().any(|a| a.shape() != (n, n)) {
        return Err(Error::ShapeMismatch("SDP data dimensions disagree".into()));
    }

    let scale = 1.0
        + constraints
            .iter()
            .map(|a| a.norm())
            .fold(0.0, f64::max)
            .max(c.norm())
            .max(b.amax());
    let mut x = DMatrix::<f64>::identity(n, n) * scale.sqrt();
    let mut s = DMatrix::<f64>::identity(n, n) * scale.sqrt();
    let mut y = DVector::<f64>::zeros(m);
    let b_norm = 1.0 + b.norm();
    let c_norm = 1.0 + c.norm();

    for iter in 0..settings.max_iter {
        let ax = DVector::from_iterator(m, constraints.iter().map(|a| inner(a, &x)));
        let rp = b - &ax;
        let mut rd = c - &s;
        for (a, yi) in constraints.iter().zip(y.iter()) {
            rd -= a * *yi;
        }
        let primal_obj = inner(c, &x);
        let dual_obj = b.dot(&y);
        let rel_gap = (primal_obj - dual_obj).abs() / (1.0 + primal_obj.abs() + dual_obj.abs());
        let p_inf = rp.norm() / b_norm;
        let d_inf = rd.norm() / c_norm;
        if rel_gap < settings.tol && p_inf < settings.tol && d_inf < settings.tol {
            return Ok(SdpSolution {
                x,
                y,
                s,
                primal_obj,
                dual_obj,
                rel_gap,
                iterations: iter,
            });
        }
        if y.amax() > 1e12 || x.amax() > 1e12 {
            return Err(Error::Infeasible);
        }

        let mu = inner(&x, &s) / n as f64;
        let s_inv = s.clone().cholesky().ok_or(Error::Infeasible)?.inverse();
        let s_inv = symmetrize(&s_inv);

        // Schur complement M_ij = <A_i, X A_j S^-1>
        let xa_sinv: Vec<DMatrix<f64>> = constraints.iter().map(|a| &x * a * &s_inv).collect();
        let schur = DMatrix::from_fn(m, m, |i, j| inner(&constraints[i], &xa_sinv[j]));
        let schur = symmetrize(&schur);

        let direction = |sigma: f64| -> Option<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)> {
            let target = &s_inv * (sigma * mu) - &x - &x * &rd * &s_inv;
            let rhs = DVector::from_iterator(
                m,
                constraints
                    .iter()
                    .zip(rp.iter())
                    .map(|(a, r)| r - inner(a, &target)),
            );
            let dy = schur.clone().lu().solve(&rhs)?;
            let mut ds = rd.clone();
            for (a, d) in constraints.iter().zip(dy.iter()) {
                ds -= a * *d;
            }
            let dx = symmetrize(&(&s_inv * (sigma * mu) - &x - &x * &ds * &s_inv));
            Some((dx, dy, ds))
        };

        let (dx, dy, ds) = direction(settings.sigma).ok_or(Error::Infeasible)?;
        let ap = max_step(&x, &dx, settings.step_fraction).ok_or(Error::Infeasible)?;
        let ad = max_step(&s, &ds, settings.step_fraction).ok_or(Error::Infeasible)?;
        x = symmetrize(&(&x + &dx * ap));
        y += &dy * ad;
        s = symmetrize(&(&s + &ds * ad));
    }
    Err(Error::MaxIterations(settings.max_iter))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_row_slice(v))
    }

    #[test]
    fn linear_program_as_diagonal_sdp() {
        // min -x1 - 2 x2  s.t. x1 + x2 + s = 4, x1 + 3 x2 + t = 6  ->  x = (3, 1), value -5
        let c = diag(&[-1.0, -2.0, 0.0, 0.0]);
        let a = vec![diag(&[1.0, 1.0, 1.0, 0.0]), diag(&[1.0, 3.0, 0.0, 1.0])];
        let b = DVector::from_row_slice(&[4.0, 6.0]);
        let sol = solve(&c, &a, &b, &SdpSettings::default()).unwrap();
        assert!((sol.primal_obj + 5.0).abs() < 1e-6, "{}", sol.primal_obj);
        assert!((sol.x[(0, 0)] - 3.0).abs() < 1e-5 && (sol.x[(1, 1)] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn max_eigenvalue_problem() {
        // max <C, X> s.t. tr X = 1 equals lambda_max(C)
        let cm = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, -1.0]);
        let lam = SymmetricEigen::new(cm.clone()).eigenvalues.max();
        let sol = solve(
            &(-&cm),
            &[DMatrix::identity(3, 3)],
            &DVector::from_element(1, 1.0),
            &SdpSettings::default(),
        )
        .unwrap();
        assert!((-sol.primal_obj - lam).abs() < 1e-6);
        assert!((-sol.dual_obj - lam).abs() < 1e-6);
    }

    #[test]
    fn infeasible_problem_is_reported() {
        // tr X = -1 has no PSD solution
        let r = solve(
            &DMatrix::identity(2, 2),
            &[DMatrix::identity(2, 2)],
            &DVector::from_element(1, -1.0),
            &SdpSettings::default(),
        );
        assert!(matches!(
            r,
            Err(Error::Infeasible) | Err(Error::MaxIterations(_))
        ));
    }
}
