//! Spectral operators: Fourier multipliers, fractional Laplacians, Riesz
//! velocity, gradients, and 2/3-rule dealiasing.
//!
//! Every operator is a pure function from fields to fields acting diagonally
//! on the mass-form coefficients. Conventions:
//!
//! * `fractional_laplacian(f, s)` applies the symbol |k|^s, so s = alpha gives
//!   the half-order operator (-Delta)^(alpha/2) driving the dissipation and
//!   s = alpha/2 gives (-Delta)^(alpha/4);
//! * negative s inverts the symbol away from k = 0; the zero mode is projected
//!   out, which is only legitimate on (numerically) mean-zero fields — callers
//!   must either pass one or ask for the projection explicitly;
//! * symbols odd in a wavenumber component (gradients, Riesz transforms) are
//!   zeroed on that component's Nyquist plane, where the unpaired mode has no
//!   conjugate partner and would otherwise break realness.

use crate::error::{Error, Result};
use crate::field::Field;
#[cfg(test)]
use crate::grid::GridSpec;
use ndarray::Array2;
use num_complex::Complex64;

/// Mode descriptor handed to multiplier closures.
#[derive(Debug, Clone, Copy)]
pub struct Mode {
    /// Signed integer mode numbers.
    pub m1: i64,
    pub m2: i64,
    /// Wavenumbers 2 pi m / L.
    pub k1: f64,
    pub k2: f64,
    /// Whether the index sits on the unpaired Nyquist plane of each axis.
    pub nyq1: bool,
    pub nyq2: bool,
}

impl Mode {
    pub fn k_sq(&self) -> f64 {
        self.k1 * self.k1 + self.k2 * self.k2
    }

    pub fn k_abs(&self) -> f64 {
        self.k_sq().sqrt()
    }
}

/// Applies a diagonal symbol to the spectral coefficients, returning a field
/// holding only the new spectral representation.
pub fn apply_multiplier(f: &Field, symbol: impl Fn(Mode) -> Complex64) -> Field {
    let f = f.to_spectral();
    let grid = f.grid();
    let n = grid.n();
    let k0 = grid.k_fundamental();
    let half = (n / 2) as i64;
    let spec = f.spec();
    let mut out = Array2::<Complex64>::default((n, n));
    for ((i, j), v) in out.indexed_iter_mut() {
        let m1 = grid.mode(i);
        let m2 = grid.mode(j);
        let mode = Mode {
            m1,
            m2,
            k1: k0 * m1 as f64,
            k2: k0 * m2 as f64,
            nyq1: m1 == -half,
            nyq2: m2 == -half,
        };
        *v = symbol(mode) * spec[(i, j)];
    }
    Field::from_spec(grid, out).expect("shape preserved")
}

/// |k|^s as a multiplier with the zero mode sent to 0 (s != 0) or 1 (s = 0).
fn power_symbol(mode: Mode, s: f64) -> f64 {
    if mode.m1 == 0 && mode.m2 == 0 {
        if s == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        mode.k_abs().powf(s)
    }
}

/// (-Delta)^(s/2) in the half-order convention: applies |k|^s.
///
/// For s < 0 the field must be numerically mean-free (|mean| <= 1e-13 ||f||_inf);
/// use [`fractional_laplacian_projected`] to discard the mean instead.
pub fn fractional_laplacian(f: &Field, s: f64) -> Result<Field> {
    if s < 0.0 {
        let fp = f.to_physical();
        let mean = fp.mean();
        let scale = fp.linf();
        if mean.abs() > 1e-13 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::NonzeroMean { mean });
        }
    }
    Ok(apply_multiplier(f, |m| {
        Complex64::new(power_symbol(m, s), 0.0)
    }))
}

/// (-Delta)^(s/2) with the mean unconditionally projected out for s < 0.
pub fn fractional_laplacian_projected(f: &Field, s: f64) -> Field {
    apply_multiplier(f, |m| Complex64::new(power_symbol(m, s), 0.0))
}

/// Gradient (d_1 f, d_2 f) via the symbols i k_j, Nyquist planes zeroed.
pub fn gradient(f: &Field) -> (Field, Field) {
    let fs = f.to_spectral();
    let d1 = apply_multiplier(&fs, |m| {
        if m.nyq1 {
            Complex64::default()
        } else {
            Complex64::new(0.0, m.k1)
        }
    });
    let d2 = apply_multiplier(&fs, |m| {
        if m.nyq2 {
            Complex64::default()
        } else {
            Complex64::new(0.0, m.k2)
        }
    });
    (d1, d2)
}

/// Perpendicular gradient (-d_2 f, d_1 f).
pub fn perp_gradient(f: &Field) -> (Field, Field) {
    let (d1, d2) = gradient(f);
    let n1 = apply_multiplier(&d2, |_| Complex64::new(-1.0, 0.0));
    (n1, d1)
}

/// Velocity u = perp-grad (-Delta)^(-1/2) theta = (-R_2 theta, R_1 theta)
/// with the Riesz symbols i k_j / |k|; zero mode and odd-axis Nyquist planes
/// are zeroed. The result is divergence-free mode by mode.
pub fn riesz_velocity(theta: &Field) -> (Field, Field) {
    let ts = theta.to_spectral();
    let u1 = apply_multiplier(&ts, |m| {
        if (m.m1 == 0 && m.m2 == 0) || m.nyq2 {
            Complex64::default()
        } else {
            Complex64::new(0.0, -m.k2 / m.k_abs())
        }
    });
    let u2 = apply_multiplier(&ts, |m| {
        if (m.m1 == 0 && m.m2 == 0) || m.nyq1 {
            Complex64::default()
        } else {
            Complex64::new(0.0, m.k1 / m.k_abs())
        }
    });
    (u1, u2)
}

/// 2/3-rule dealiasing: zeroes modes with max(|m1|, |m2|) > floor(n/3).
pub fn dealias(f: &Field) -> Field {
    let cutoff = f.grid().dealias_mode_cutoff();
    apply_multiplier(f, |m| {
        if m.m1.abs() > cutoff || m.m2.abs() > cutoff {
            Complex64::default()
        } else {
            Complex64::new(1.0, 0.0)
        }
    })
}

/// Spectral divergence d_1 u1 + d_2 u2 under the same Nyquist-zeroing
/// derivative convention as [`gradient`], for the incompressibility checks.
pub fn divergence(u1: &Field, u2: &Field) -> Field {
    let (d1, _) = gradient(u1);
    let (_, d2) = gradient(u2);
    let grid = d1.grid();
    let n = grid.n();
    let mut out = Array2::<Complex64>::default((n, n));
    for ((i, j), v) in out.indexed_iter_mut() {
        *v = d1.spec()[(i, j)] + d2.spec()[(i, j)];
    }
    Field::from_spec(grid, out).expect("shape preserved")
}
