//! Recursive conditional PCRB for the relative pose and the radar parameters.

use nalgebra::{DMatrix, Matrix4, Matrix6};

use crate::error::Result;
use crate::jacobians::Matrix4x6;
use crate::linalg::{spd_inverse, symmetrize};

/// Inverses with a larger condition number are rejected.
pub const MAX_FIM_COND: f64 = 1e14;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FimState {
    pub info: Matrix6<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FimStep {
    pub next: FimState,
    /// Prior information `(C_w' + F I^-1 F^T)^-1`.
    pub prior: Matrix6<f64>,
}

/// `C_w' = dt^2 Ad^-1 Xi_w Ad^-T + C_w`.
pub fn process_noise_prime(
    xi_w: &Matrix6<f64>,
    c_w: &Matrix6<f64>,
    ad_inv: &Matrix6<f64>,
    dt: f64,
) -> Matrix6<f64> {
    symmetrize(&(ad_inv * xi_w * ad_inv.transpose() * (dt * dt) + c_w))
}

/// Prior information carried into the next epoch.
pub fn prior_information(
    prev: &FimState,
    f: &Matrix6<f64>,
    c_w_prime: &Matrix6<f64>,
) -> Result<Matrix6<f64>> {
    let prev_inv = spd_inverse(&prev.info, "previous FIM", MAX_FIM_COND)?;
    spd_inverse(
        &(c_w_prime + f * prev_inv * f.transpose()),
        "prior information",
        MAX_FIM_COND,
    )
}

/// Measurement information `H^T C^-1 H` for an isotropic augmented noise `meas_var * I`.
pub fn measurement_information(h: &DMatrix<f64>, meas_var: f64) -> Matrix6<f64> {
    let hth = h.tr_mul(h) / meas_var;
    symmetrize(&Matrix6::from_iterator(hth.iter().copied()))
}

pub fn fim_step(
    prev: &FimState,
    f: &Matrix6<f64>,
    h: &DMatrix<f64>,
    c_w_prime: &Matrix6<f64>,
    meas_var: f64,
) -> Result<FimStep> {
    let prior = prior_information(prev, f, c_w_prime)?;
    Ok(FimStep {
        next: FimState {
            info: symmetrize(&(measurement_information(h, meas_var) + prior)),
        },
        prior,
    })
}

pub fn cpcrb_pose(fim: &FimState) -> Result<Matrix6<f64>> {
    spd_inverse(&fim.info, "pose FIM", MAX_FIM_COND)
}

pub fn cpcrb_params(fim: &FimState, psi: &Matrix4x6) -> Result<Matrix4<f64>> {
    Ok(symmetrize(&(psi * cpcrb_pose(fim)? * psi.transpose())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd<R: Rng>(rng: &mut R, scale: f64) -> Matrix6<f64> {
        let a = Matrix6::from_fn(|_, _| rng.random_range(-1.0..1.0));
        (a * a.transpose() + Matrix6::identity() * 0.2) * scale
    }

    fn min_eig(m: &Matrix6<f64>) -> f64 {
        SymmetricEigen::new(*m).eigenvalues.min()
    }

    #[test]
    fn noise_prime_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let c_w = random_spd(&mut rng, 1e-3);
        let xi_w = random_spd(&mut rng, 1e-2);
        let ad = Matrix6::from_fn(|_, _| rng.random_range(-1.0..1.0));
        assert_eq!(process_noise_prime(&Matrix6::zeros(), &c_w, &ad, 0.25), c_w);
        let plain = process_noise_prime(&xi_w, &c_w, &Matrix6::identity(), 0.25);
        assert!((plain - (xi_w * 0.0625 + c_w)).norm() < 1e-15);
        assert!(min_eig(&process_noise_prime(&xi_w, &c_w, &ad, 0.25)) > 0.0);
    }

    #[test]
    fn recursion_cases() {
        let prev = FimState {
            info: Matrix6::identity(),
        };
        let h = DMatrix::zeros(8, 6);
        let step = fim_step(&prev, &Matrix6::identity(), &h, &Matrix6::identity(), 1.0).unwrap();
        assert!((step.next.info - Matrix6::identity() * 0.5).norm() < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(52);
        for _ in 0..50 {
            let prev = FimState {
                info: random_spd(&mut rng, 3.0),
            };
            let f =
                Matrix6::from_fn(|_, _| rng.random_range(-1.0..1.0)) + Matrix6::identity() * 2.0;
            let cw = random_spd(&mut rng, 0.1);
            let h = DMatrix::from_fn(12, 6, |_, _| rng.random_range(-1.0..1.0));
            let var = rng.random_range(0.1..2.0);
            let step = fim_step(&prev, &f, &h, &cw, var).unwrap();

            // textbook D-matrix form of the same recursion
            let cw_inv = cw.try_inverse().unwrap();
            let d11 = f.transpose() * cw_inv * f;
            let d12 = f.transpose() * cw_inv;
            let d22 = cw_inv + measurement_information(&h, var);
            let reference = d22 - d12.transpose() * (prev.info + d11).try_inverse().unwrap() * d12;
            assert!((step.next.info - reference).norm() / reference.norm() < 1e-9);

            assert!(min_eig(&(step.next.info - step.prior)) > -1e-10);
            let bound = cpcrb_pose(&step.next).unwrap();
            let prior_bound = step.prior.try_inverse().unwrap();
            assert!(min_eig(&(prior_bound - bound)) > -1e-10);
        }
    }

    #[test]
    fn bound_cases() {
        let fim = FimState {
            info: Matrix6::identity() * 4.0,
        };
        assert!((cpcrb_pose(&fim).unwrap() - Matrix6::identity() * 0.25).norm() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(53);
        for _ in 0..20 {
            let fim = FimState {
                info: random_spd(&mut rng, 1.0),
            };
            let psi = Matrix4x6::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let b = cpcrb_params(&fim, &psi).unwrap();
            assert!(SymmetricEigen::new(b).eigenvalues.min() > -1e-12);

            // doubling pilot power quadruples H^T H / sigma^2 and can only shrink the bound
            let prev = FimState {
                info: random_spd(&mut rng, 1.0),
            };
            let f = Matrix6::identity();
            let cw = random_spd(&mut rng, 0.1);
            let h = DMatrix::from_fn(10, 6, |_, _| rng.random_range(-1.0..1.0));
            let lo = fim_step(&prev, &f, &h, &cw, 1.0).unwrap().next;
            let hi = fim_step(&prev, &f, &(&h * 2.0f64.sqrt()), &cw, 1.0)
                .unwrap()
                .next;
            let ld = |s: &FimState| cpcrb_pose(s).unwrap().determinant().ln();
            assert!(ld(&hi) < ld(&lo));
        }
    }

    #[test]
    fn static_recursion_converges() {
        let mut rng = ChaCha8Rng::seed_from_u64(54);
        let f = Matrix6::identity();
        let cw = random_spd(&mut rng, 1e-3);
        let h = DMatrix::from_fn(16, 6, |_, _| rng.random_range(-1.0..1.0));
        let mut s = FimState {
            info: Matrix6::identity(),
        };
        let mut prev = s;
        for _ in 0..500 {
            prev = s;
            s = fim_step(&s, &f, &h, &cw, 1.0).unwrap().next;
        }
        assert!((s.info - prev.info).norm() / s.info.norm() < 1e-6);
    }
}
