//! Small symmetric-matrix helpers shared by the filter, the bound and the controller.

use nalgebra::{allocator::Allocator, DefaultAllocator, Dim, OMatrix, SymmetricEigen};

use crate::error::{Error, Result};

pub fn symmetrize<D: Dim>(m: &OMatrix<f64, D, D>) -> OMatrix<f64, D, D>
where
    DefaultAllocator: Allocator<D, D>,
{
    (m + m.transpose()) * 0.5
}

/// Symmetrizes and clips negative eigenvalues to zero.
pub fn project_psd<D>(m: &OMatrix<f64, D, D>) -> OMatrix<f64, D, D>
where
    D: nalgebra::DimSub<nalgebra::U1>,
    DefaultAllocator:
        Allocator<D, D> + Allocator<D> + Allocator<<D as nalgebra::DimSub<nalgebra::U1>>::Output>,
{
    let s = symmetrize(m);
    let eig = SymmetricEigen::new(s.clone());
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return s;
    }
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let v = &eig.eigenvectors;
    symmetrize(&(v * OMatrix::<f64, D, D>::from_diagonal(&clipped) * v.transpose()))
}

/// Spectral condition number of a symmetric matrix (infinite if not PD).
pub fn sym_condition<D>(m: &OMatrix<f64, D, D>) -> f64
where
    D: nalgebra::DimSub<nalgebra::U1>,
    DefaultAllocator:
        Allocator<D, D> + Allocator<D> + Allocator<<D as nalgebra::DimSub<nalgebra::U1>>::Output>,
{
    let eig = SymmetricEigen::new(symmetrize(m));
    let (lo, hi) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &l| {
            (lo.min(l), hi.max(l.abs()))
        });
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Inverse of a symmetric PD matrix via Cholesky, guarded by a condition-number limit.
///
/// The matrix is first equilibrated to unit diagonal, so the limit applies to the
/// scale-free condition number. Parameters in mixed units (seconds next to radians)
/// would otherwise look singular when they are not.
pub fn spd_inverse<D>(
    m: &OMatrix<f64, D, D>,
    what: &'static str,
    max_cond: f64,
) -> Result<OMatrix<f64, D, D>>
where
    D: nalgebra::DimSub<nalgebra::U1>,
    DefaultAllocator:
        Allocator<D, D> + Allocator<D> + Allocator<<D as nalgebra::DimSub<nalgebra::U1>>::Output>,
{
    let s = symmetrize(m);
    if !s.diagonal().iter().all(|&d| d > 0.0 && d.is_finite()) {
        return Err(Error::IllConditioned {
            what,
            cond: f64::INFINITY,
        });
    }
    let scale = s.diagonal().map(|d| 1.0 / d.sqrt());
    let scaled = symmetrize(&OMatrix::<f64, D, D>::from_fn_generic(
        s.shape_generic().0,
        s.shape_generic().1,
        |i, j| s[(i, j)] * scale[i] * scale[j],
    ));
    let cond = sym_condition(&scaled);
    if !(cond <= max_cond) {
        return Err(Error::IllConditioned { what, cond });
    }
    let inv = scaled
        .cholesky()
        .ok_or(Error::IllConditioned { what, cond })?
        .inverse();
    Ok(symmetrize(&OMatrix::<f64, D, D>::from_fn_generic(
        s.shape_generic().0,
        s.shape_generic().1,
        |i, j| inv[(i, j)] * scale[i] * scale[j],
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix3, Matrix6};

    #[test]
    fn projection_and_inverse() {
        let m = Matrix3::new(2.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0);
        let p = project_psd(&m);
        assert_eq!(p, Matrix3::new(2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0));
        assert_eq!(sym_condition(&m), f64::INFINITY);

        let a = Matrix6::from_fn(|i, j| if i == j { 2.0 + i as f64 } else { 0.1 });
        let inv = spd_inverse(&a, "test", 1e14).unwrap();
        assert!((inv * a - Matrix6::identity()).norm() < 1e-13);
        // nearly collinear rows are rejected, pure unit disparity is not
        let bad = Matrix6::from_fn(|i, j| {
            if i == j {
                1.0
            } else if i < 2 && j < 2 {
                1.0 - 1e-15
            } else {
                0.0
            }
        });
        assert!(matches!(
            spd_inverse(&bad, "test", 1e14),
            Err(Error::IllConditioned { .. })
        ));
        let units =
            Matrix6::from_diagonal(&nalgebra::Vector6::new(1e-18, 1.0, 1e12, 1.0, 1.0, 1.0))
                + Matrix6::from_fn(|i, j| {
                    if (i, j) == (1, 3) || (i, j) == (3, 1) {
                        0.5
                    } else {
                        0.0
                    }
                });
        let inv = spd_inverse(&units, "test", 1e14).unwrap();
        assert!((inv * units - Matrix6::identity()).norm() < 1e-12);
    }
}
