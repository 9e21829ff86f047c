//! Gaussian randomization over the reduced space `x = (nu_x, nu_y, omega_z)`.
//!
//! Every inequality of the QCQP is an ellipsoidal cylinder `|A x - w|^2 <= r^2`
//! in this space, which makes projection and bisection cheap.

use nalgebra::{DMatrix, DVector, Matrix4, SymmetricEigen, Vector3, Vector4, Vector6};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{upa_selector, ConstraintSet, QcqpInstance, FREE_INDICES};
use crate::error::{Error, Result};

const BISECTION_STEPS: usize = 20;
const DYKSTRA_SWEEPS: usize = 400;
/// Relative feasibility slack accepted for returned twists.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Rounding slack when accepting candidates that sit on a boundary.
const ACCEPT_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Family {
    pub a: DMatrix<f64>,
    pub w: DVector<f64>,
    pub r: f64,
}

impl Family {
    fn residual(&self, x: &Vector3<f64>) -> f64 {
        (&self.a * DVector::from_column_slice(x.as_slice()) - &self.w).norm()
    }

    pub fn contains(&self, x: &Vector3<f64>, tol: f64) -> bool {
        self.residual(x) <= self.r * (1.0 + tol)
    }

    /// Euclidean projection onto the family, shrunk by a relative margin.
    fn project(&self, p: &Vector3<f64>, margin: f64) -> Vector3<f64> {
        let r = self.r * (1.0 - margin);
        if self.residual(p) <= r {
            return *p;
        }
        let ata = self.a.tr_mul(&self.a);
        let atw = self.a.tr_mul(&self.w);
        let pd = DVector::from_column_slice(p.as_slice());
        let at = |lam: f64| -> Vector3<f64> {
            let m = DMatrix::identity(3, 3) + &ata * lam;
            let rhs = &pd + &atw * lam;
            let sol = m.lu().solve(&rhs).unwrap_or(rhs);
            Vector3::new(sol[0], sol[1], sol[2])
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        while self.residual(&at(hi)) > r && hi < 1e12 {
            lo = hi;
            hi *= 4.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.residual(&at(mid)) > r {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        at(hi)
    }
}

/// Intersection of the five inequality families in the reduced space.
#[derive(Clone, Debug, PartialEq)]
pub struct FeasibleRegion {
    pub families: Vec<Family>,
    prev: Vector3<f64>,
}

impl FeasibleRegion {
    pub fn from_constraints(cons: &ConstraintSet) -> Self {
        let l = &cons.limits;
        let p = cons.prev.0;
        let horiz = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let yaw = DMatrix::from_row_slice(1, 3, &[0.0, 0.0, 1.0]);
        let s = upa_selector(&cons.s);
        let reduce_cols =
            DMatrix::from_fn(6, 3, |r, c| if r == FREE_INDICES[c] { 1.0 } else { 0.0 });
        let world = DMatrix::from_column_slice(3, 6, (cons.r1 * s).as_slice()) * reduce_cols;
        let target = cons.r2 * s * p;
        let families = vec![
            Family {
                a: horiz.clone(),
                w: DVector::zeros(2),
                r: l.v_l,
            },
            Family {
                a: yaw.clone(),
                w: DVector::zeros(1),
                r: l.v_a,
            },
            Family {
                a: horiz,
                w: DVector::from_row_slice(&[p[0], p[1]]),
                r: l.a_l,
            },
            Family {
                a: yaw,
                w: DVector::from_element(1, p[5]),
                r: l.a_a,
            },
            Family {
                a: world,
                w: DVector::from_column_slice(target.as_slice()),
                r: l.v,
            },
        ];
        Self {
            families,
            prev: Vector3::new(p[0], p[1], p[5]),
        }
    }

    pub fn reduce(&self, xi: &Vector6<f64>) -> Vector3<f64> {
        Vector3::new(
            xi[FREE_INDICES[0]],
            xi[FREE_INDICES[1]],
            xi[FREE_INDICES[2]],
        )
    }

    pub fn embed(&self, x: &Vector3<f64>) -> Vector6<f64> {
        let mut xi = Vector6::zeros();
        for (k, &i) in FREE_INDICES.iter().enumerate() {
            xi[i] = x[k];
        }
        xi
    }

    pub fn contains(&self, x: &Vector3<f64>, tol: f64) -> bool {
        self.families.iter().all(|f| f.contains(x, tol))
    }

    /// A strictly feasible point near the previous twist (Dykstra's alternating projections).
    pub fn anchor(&self) -> Option<Vector3<f64>> {
        if self.contains(&self.prev, 0.0) {
            return Some(self.prev);
        }
        let margin = 1e-6;
        let mut x = self.prev;
        let mut incr = vec![Vector3::zeros(); self.families.len()];
        for _ in 0..DYKSTRA_SWEEPS {
            for (f, inc) in self.families.iter().zip(incr.iter_mut()) {
                let y = f.project(&(x + *inc), margin);
                *inc += x - y;
                x = y;
            }
            if self.contains(&x, 0.0) {
                return Some(x);
            }
        }
        None
    }

    /// Largest step from `anchor` towards `x` that stays feasible, per family then overall.
    pub fn pull_back(&self, anchor: &Vector3<f64>, x: &Vector3<f64>) -> Vector3<f64> {
        let mut alpha: f64 = 1.0;
        for f in &self.families {
            if f.contains(x, ACCEPT_TOL) {
                continue;
            }
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..BISECTION_STEPS {
                let mid = 0.5 * (lo + hi);
                if f.contains(&(anchor + (x - anchor) * mid), 0.0) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            alpha = alpha.min(lo);
        }
        anchor + (x - anchor) * alpha
    }
}

/// Draws samples from `N(0, Z)` on the lifted reduced space, rescales the
/// homogeneous coordinate to one and pulls each candidate back into the
/// feasible region. Returns the best candidate for the QCQP objective.
pub fn randomize_extract<R: Rng + ?Sized>(
    z_reduced: &Matrix4<f64>,
    q: &QcqpInstance,
    region: &FeasibleRegion,
    n_samples: usize,
    rng: &mut R,
) -> Result<Vector3<f64>> {
    let anchor = region.anchor().ok_or(Error::NoFeasibleSample)?;
    let eig = SymmetricEigen::new(crate::linalg::symmetrize(z_reduced));
    // eigenvalues at rounding level would otherwise inject ~1e-8 noise through the square root
    let floor = 1e-12 * eig.eigenvalues.amax();
    let sqrt_vals = eig
        .eigenvalues
        .map(|l| if l > floor { l.sqrt() } else { 0.0 });
    let root = eig.eigenvectors * Matrix4::from_diagonal(&sqrt_vals);

    let objective = |x: &Vector3<f64>| q.objective(&region.embed(x));
    let mut best = anchor;
    let mut best_val = objective(&anchor);
    let consider = |lifted: &Vector4<f64>, best: &mut Vector3<f64>, best_val: &mut f64| {
        let t = lifted[3];
        if t.abs() < 1e-12 {
            return;
        }
        let x = Vector3::new(lifted[0] / t, lifted[1] / t, lifted[2] / t);
        if !x.iter().all(|v| v.is_finite()) {
            return;
        }
        let cand = region.pull_back(&anchor, &x);
        let val = objective(&cand);
        if val > *best_val && region.contains(&cand, ACCEPT_TOL) {
            *best = cand;
            *best_val = val;
        }
    };

    let imax = eig.eigenvalues.imax();
    let principal: Vector4<f64> = eig.eigenvectors.column(imax).into_owned() * sqrt_vals[imax];
    consider(&principal, &mut best, &mut best_val);
    for _ in 0..n_samples {
        let g = Vector4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        consider(&(root * g), &mut best, &mut best_val);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{assemble_qcqp, MotionLimits, QuadraticForm};
    use crate::jacobians::Matrix4x6;
    use crate::lie::{so3_exp, Twist};
    use nalgebra::{Matrix3, Matrix6};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cons(prev: Twist) -> ConstraintSet {
        let flip = Matrix3::from_diagonal(&Vector3::new(-1.0, 1.0, -1.0));
        ConstraintSet {
            limits: MotionLimits::default(),
            prev,
            s: Vector3::new(0.2, 0.3, 0.1),
            r1: so3_exp(&Vector3::new(0.0, 0.0, 0.31)) * flip,
            r2: so3_exp(&Vector3::new(0.0, 0.0, 0.3)) * flip,
        }
    }

    fn qcqp(c: &ConstraintSet, p_bar: Matrix6<f64>, lin: Vector6<f64>) -> QcqpInstance {
        assemble_qcqp(
            &QuadraticForm {
                p_bar,
                c: lin,
                c0: 1.0,
                g: Matrix4::identity(),
                a_bar: Matrix3::identity(),
                a: Vector3::zeros(),
                a0: 1.0,
                k: Matrix4x6::zeros(),
                p_tilde: Matrix6::zeros(),
            },
            c,
        )
    }

    #[test]
    fn rank_one_lift_is_recovered() {
        let c = cons(Twist::from_slice(&[1.0, 2.0, 0.0, 0.0, 0.0, 0.02]));
        let region = FeasibleRegion::from_constraints(&c);
        let anchor = region.anchor().unwrap();
        let target = region.pull_back(&anchor, &(anchor + Vector3::new(0.3, -0.2, 0.01)));
        assert!(region.contains(&target, 0.0));
        let lifted = Vector4::new(target[0], target[1], target[2], 1.0);
        let z = lifted * lifted.transpose();
        // concave objective peaked at the target: every sample collapses onto it
        let q = qcqp(&c, -Matrix6::identity(), region.embed(&target));
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let x = randomize_extract(&z, &q, &region, 50, &mut rng).unwrap();
        assert!((x - target).norm() < 1e-9, "{x} vs {target}");
    }

    #[test]
    fn extracted_twists_are_always_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(72);
        for _ in 0..1000 {
            let prev = Twist::from_slice(&[
                rng.random_range(-4.0..4.0),
                rng.random_range(-4.0..4.0),
                0.0,
                0.0,
                0.0,
                rng.random_range(-0.14..0.14),
            ]);
            let c = cons(prev);
            let region = FeasibleRegion::from_constraints(&c);
            let a = Matrix6::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let q = qcqp(
                &c,
                a + a.transpose(),
                Vector6::from_fn(|_, _| rng.random_range(-1.0..1.0)),
            );
            let m = Matrix4::from_fn(|_, _| rng.random_range(-2.0..2.0));
            let z = m * m.transpose();
            let x = randomize_extract(&z, &q, &region, 20, &mut rng).unwrap();
            assert!(q.is_feasible(&region.embed(&x), FEASIBILITY_TOL));
        }
    }

    #[test]
    fn projection_lands_on_the_boundary() {
        let f = Family {
            a: DMatrix::from_row_slice(1, 3, &[0.0, 0.0, 2.0]),
            w: DVector::from_element(1, 1.0),
            r: 0.5,
        };
        let p = f.project(&Vector3::new(3.0, 4.0, 5.0), 0.0);
        assert!((p - Vector3::new(3.0, 4.0, 0.75)).norm() < 1e-9);
    }

    #[test]
    fn deterministic_under_seed() {
        let c = cons(Twist::from_slice(&[0.0, 1.0, 0.0, 0.0, 0.0, 0.0]));
        let region = FeasibleRegion::from_constraints(&c);
        let q = qcqp(&c, Matrix6::identity(), Vector6::zeros());
        let z = Matrix4::identity();
        let a = randomize_extract(&z, &q, &region, 100, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = randomize_extract(&z, &q, &region, 100, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }
}
