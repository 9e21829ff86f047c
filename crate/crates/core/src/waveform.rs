//! UPA steering vectors, the OFDM resource-element grid and the stacked
//! single-path radar channel `h = b * omega (x) conj(a_T) (x) a_R`.
//!
//! Index layout of `h`: `((m * N_T) + t) * N_R + r`, with the transmit index
//! `t = ty * nt_x + tx` and the receive index `r = ry * nr_x + rx`.

use std::collections::HashSet;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Vector4};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Ranges below this are treated as degenerate.
pub const MIN_RANGE: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UpaConfig {
    pub nt_x: usize,
    pub nt_y: usize,
    pub nr_x: usize,
    pub nr_y: usize,
}

impl Default for UpaConfig {
    fn default() -> Self {
        Self {
            nt_x: 2,
            nt_y: 2,
            nr_x: 2,
            nr_y: 2,
        }
    }
}

impl UpaConfig {
    pub fn n_t(&self) -> usize {
        self.nt_x * self.nt_y
    }

    pub fn n_r(&self) -> usize {
        self.nr_x * self.nr_y
    }

    pub fn validate(&self) -> Result<()> {
        if [self.nt_x, self.nt_y, self.nr_x, self.nr_y].contains(&0)
        {
            return Err(Error::Config("antenna counts must be >= 1".into()));
        }
        Ok(())
    }
}

/// Resource elements `(subcarrier, symbol)` used for sensing plus the OFDM numerology.
#[derive(Clone, Debug, PartialEq)]
pub struct ReGrid {
    res: Vec<(u32, u32)>,
    /// Subcarrier spacing (Hz).
    pub f0: f64,
    /// OFDM symbol duration including the cyclic prefix (s).
    pub ts: f64,
    /// Carrier frequency (Hz).
    pub fc: f64,
}

impl ReGrid {
    pub fn new(res: Vec<(u32, u32)>, f0: f64, ts: f64, fc: f64) -> Result<Self> {
        if res.is_empty() {
            return Err(Error::Config("resource grid needs at least one RE".into()));
        }
        let distinct: HashSet<_> = res.iter().collect();
        if distinct.len() != res.len() {
            return Err(Error::Config("resource elements must be distinct".into()));
        }
        if !(f0 > 0.0) || !(ts > 1.0 / f0) || !(fc > 0.0) {
            return Err(Error::Config(format!(
                "invalid numerology: f0 = {f0}, ts = {ts}, fc = {fc} (need ts > 1/f0)"
            )));
        }
        Ok(Self { res, f0, ts, fc })
    }

    /// `n_re` elements on a wrapped diagonal of the `n_sub x n_sym` grid.
    ///
    /// `guard_fraction` is the cyclic-prefix share of the full symbol, so
    /// `ts = 1 / (f0 (1 - guard_fraction))`.
    pub fn diagonal(
        n_sub: u32,
        n_sym: u32,
        n_re: u32,
        f0: f64,
        guard_fraction: f64,
        fc: f64,
    ) -> Result<Self> {
        if n_sub == 0 || n_sym == 0 || n_re == 0 || n_re > n_sub * n_sym {
            return Err(Error::Config(format!(
                "cannot place {n_re} REs on a {n_sub}x{n_sym} grid"
            )));
        }
        if !(0.0..1.0).contains(&guard_fraction) {
            return Err(Error::Config("guard fraction must lie in [0, 1)".into()));
        }
        let res = (0..n_re)
            .map(|m| (m % n_sub, (m + m / n_sub) % n_sym))
            .collect();
        Self::new(res, f0, 1.0 / (f0 * (1.0 - guard_fraction)), fc)
    }

    pub fn len(&self) -> usize {
        self.res.len()
    }

    pub fn is_empty(&self) -> bool {
        self.res.is_empty()
    }

    pub fn elements(&self) -> &[(u32, u32)] {
        &self.res
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.fc
    }
}

/// Radar-visible parameters `zeta = [tau, phi, theta, mu]` plus the complex gain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysicalParams {
    pub tau: f64,
    pub phi: f64,
    pub theta: f64,
    pub mu: f64,
    pub b: Complex64,
}

impl PhysicalParams {
    pub fn zeta(&self) -> Vector4<f64> {
        Vector4::new(self.tau, self.phi, self.theta, self.mu)
    }
}

/// Per-RE pilot vectors, one row of length `N_T` per resource element.
#[derive(Clone, Debug, PartialEq)]
pub struct PilotMatrix {
    pub rows: DMatrix<Complex64>,
    pub power: f64,
}

impl PilotMatrix {
    pub fn n_re(&self) -> usize {
        self.rows.nrows()
    }

    pub fn n_t(&self) -> usize {
        self.rows.ncols()
    }
}

fn axis_response(n: usize, phase: f64) -> Vec<Complex64> {
    let norm = 1.0 / (n as f64).sqrt();
    (0..n)
        .map(|i| {
            if i == 0 {
                Complex64::new(norm, 0.0)
            } else {
                -Complex64::from_polar(norm, PI * i as f64 * phase)
            }
        })
        .collect()
}

/// UPA response `a_y (x) a_x`. Every entry after the first carries a minus sign.
pub fn steering_vector(theta: f64, phi: f64, nx: usize, ny: usize) -> DVector<Complex64> {
    let ax = axis_response(nx, theta.sin() * phi.cos());
    let ay = axis_response(ny, theta.sin() * phi.sin());
    DVector::from_fn(nx * ny, |i, _| ay[i / nx] * ax[i % nx])
}

pub fn omega_vector(tau: f64, mu: f64, grid: &ReGrid) -> DVector<Complex64> {
    DVector::from_iterator(
        grid.len(),
        grid.res.iter().map(|&(l, k)| {
            let phase = -2.0 * PI * l as f64 * grid.f0 * tau + 2.0 * PI * mu * k as f64 * grid.ts;
            Complex64::from_polar(1.0, phase)
        }),
    )
}

/// Radar-equation amplitude constant `sqrt(lambda^2 sigma_rcs / (4 pi)^3)`.
pub fn radar_constant(fc: f64, sigma_rcs: f64) -> f64 {
    let lambda = SPEED_OF_LIGHT / fc;
    (lambda * lambda * sigma_rcs / (4.0 * PI).powi(3)).sqrt()
}

pub fn channel_gain(rho: f64, phase: f64, a_const: f64) -> Result<Complex64> {
    if !(rho >= MIN_RANGE) {
        return Err(Error::DegenerateRange { range: rho });
    }
    Ok(Complex64::from_polar(a_const / (rho * rho), phase))
}

/// Unit-gain structure `omega (x) conj(a_T) (x) a_R` shared by `h` and its Jacobian.
pub fn channel_structure(
    zeta: &PhysicalParams,
    upa: &UpaConfig,
    grid: &ReGrid,
) -> DVector<Complex64> {
    let w = omega_vector(zeta.tau, zeta.mu, grid);
    let at = steering_vector(zeta.theta, zeta.phi, upa.nt_x, upa.nt_y);
    let ar = steering_vector(zeta.theta, zeta.phi, upa.nr_x, upa.nr_y);
    let (nt, nr) = (at.len(), ar.len());
    DVector::from_fn(w.len() * nt * nr, |i, _| {
        let m = i / (nt * nr);
        let t = (i / nr) % nt;
        let r = i % nr;
        w[m] * at[t].conj() * ar[r]
    })
}

pub fn channel_vector(zeta: &PhysicalParams, upa: &UpaConfig, grid: &ReGrid) -> DVector<Complex64> {
    channel_structure(zeta, upa, grid) * zeta.b
}

/// Applies `(X (x) I_{N_R})` to a stacked channel or channel Jacobian column.
pub fn apply_pilots(h: &DVector<Complex64>, x: &PilotMatrix) -> Result<DVector<Complex64>> {
    let (m, nt) = (x.n_re(), x.n_t());
    if m == 0 || nt == 0 || !h.len().is_multiple_of(m * nt) {
        return Err(Error::ShapeMismatch(format!(
            "channel of length {} vs pilots {m}x{nt}",
            h.len()
        )));
    }
    let nr = h.len() / (m * nt);
    Ok(DVector::from_fn(m * nr, |i, _| {
        let (mm, r) = (i / nr, i % nr);
        (0..nt)
            .map(|t| x.rows[(mm, t)] * h[(mm * nt + t) * nr + r])
            .sum()
    }))
}

/// `y = (X (x) I) h + z` with `z ~ CN(0, sigma_z^2 I)`.
pub fn synthesize_measurement<R: Rng + ?Sized>(
    h: &DVector<Complex64>,
    x: &PilotMatrix,
    sigma_z: f64,
    rng: &mut R,
) -> Result<DVector<Complex64>> {
    let mut y = apply_pilots(h, x)?;
    if sigma_z > 0.0 {
        let s = sigma_z / std::f64::consts::SQRT_2;
        for v in y.iter_mut() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *v += Complex64::new(re * s, im * s);
        }
    }
    Ok(y)
}

/// Real augmentation `[Re(y); Im(y)]`.
pub fn augment(y: &DVector<Complex64>) -> DVector<f64> {
    let n = y.len();
    DVector::from_fn(2 * n, |i, _| if i < n { y[i].re } else { y[i - n].im })
}

/// Row-wise real augmentation of a complex matrix.
pub fn augment_matrix(m: &DMatrix<Complex64>) -> DMatrix<f64> {
    let n = m.nrows();
    DMatrix::from_fn(2 * n, m.ncols(), |i, j| {
        if i < n {
            m[(i, j)].re
        } else {
            m[(i - n, j)].im
        }
    })
}

/// Random per-RE pilots, uniform on the complex sphere of radius `sqrt(power)`.
pub fn build_pilot_matrix<R: Rng + ?Sized>(
    upa: &UpaConfig,
    grid: &ReGrid,
    power: f64,
    rng: &mut R,
) -> Result<PilotMatrix> {
    if !(power > 0.0) {
        return Err(Error::Config(format!(
            "pilot power must be positive, got {power}"
        )));
    }
    let (m, nt) = (grid.len(), upa.n_t());
    let mut rows = DMatrix::zeros(m, nt);
    for i in 0..m {
        let mut row: Vec<Complex64> = (0..nt)
            .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        let norm = row.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        for (j, c) in row.iter_mut().enumerate() {
            rows[(i, j)] = *c * (power.sqrt() / norm);
        }
    }
    Ok(PilotMatrix { rows, power })
}
