//! 2D complex FFT built on rustfft, with the centered-box phase convention.
//!
//! Spectral arrays in this crate hold mass-form Fourier coefficients
//!
//! ```text
//! f_hat(k) = h^2 sum_j f(x_j) exp(-i k . x_j),
//! ```
//!
//! the Riemann sum of the continuum transform without a 2 pi prefactor, so
//! f_hat(0) is the discrete mass and synthesizing a kernel means writing its
//! continuum transform (e.g. exp(-t |k|^alpha)) directly into the array. The
//! inverse is f(x_j) = L^{-2} sum_k f_hat(k) exp(i k . x_j).
//!
//! Because the coordinate origin sits exactly at index n/2, the centering
//! phase exp(i k L / 2) per axis reduces to (-1)^(i1 + i2) on FFT indices
//! (n even), applied symmetrically in both directions.

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

#[derive(Clone)]
struct Plans {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

fn plans_for(n: usize) -> Plans {
    static CACHE: OnceLock<Mutex<HashMap<usize, Plans>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    guard
        .entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            Plans {
                fwd: planner.plan_fft_forward(n),
                inv: planner.plan_fft_inverse(n),
            }
        })
        .clone()
}

fn transpose_square(a: &mut Array2<Complex64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let tmp = a[(i, j)];
            a[(i, j)] = a[(j, i)];
            a[(j, i)] = tmp;
        }
    }
}

fn fft2_in_place(a: &mut Array2<Complex64>, plan: &Arc<dyn Fft<f64>>) {
    let n = a.nrows();
    let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
    {
        let slice = a.as_slice_mut().expect("fft2: array must be contiguous");
        for row in slice.chunks_exact_mut(n) {
            plan.process_with_scratch(row, &mut scratch);
        }
    }
    transpose_square(a);
    {
        let slice = a.as_slice_mut().expect("fft2: array must be contiguous");
        for row in slice.chunks_exact_mut(n) {
            plan.process_with_scratch(row, &mut scratch);
        }
    }
    transpose_square(a);
}

/// Applies the (-1)^(i1+i2) checkerboard that recenters the origin, times a
/// uniform scale.
fn checkerboard_scale(a: &mut Array2<Complex64>, scale: f64) {
    for ((i, j), v) in a.indexed_iter_mut() {
        let sign = if (i + j) % 2 == 0 { scale } else { -scale };
        *v *= sign;
    }
}

/// Physical samples (as complex) -> mass-form coefficients, in place.
pub fn forward_mass_form(a: &mut Array2<Complex64>, box_length: f64) {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let h = box_length / n as f64;
    fft2_in_place(a, &plans_for(n).fwd);
    checkerboard_scale(a, h * h);
}

/// Mass-form coefficients -> physical samples (complex), in place.
pub fn inverse_mass_form(a: &mut Array2<Complex64>, box_length: f64) {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    checkerboard_scale(a, 1.0 / (box_length * box_length));
    fft2_in_place(a, &plans_for(n).inv);
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn round_trip_is_identity() {
        let n = 64;
        let mut a = Array2::from_shape_fn((n, n), |(i, j)| {
            Complex64::new((i as f64 * 0.7).sin() + j as f64 * 0.01, 0.0)
        });
        let orig = a.clone();
        forward_mass_form(&mut a, 16.0);
        inverse_mass_form(&mut a, 16.0);
        let mut worst = 0.0f64;
        for (x, y) in a.iter().zip(orig.iter()) {
            worst = worst.max((x - y).norm());
        }
        assert!(worst < 1e-12, "round trip error {worst}");
    }

    #[test]
    fn plane_wave_lands_on_its_mode() {
        // f(x) = exp(i k x_1) with k = 2 pi m / L has f_hat = L^2 at that mode.
        let n = 32;
        let box_length = 8.0;
        let h = box_length / n as f64;
        let m = 3usize;
        let k = 2.0 * std::f64::consts::PI * m as f64 / box_length;
        let mut a = Array2::from_shape_fn((n, n), |(i, _)| {
            let x = -box_length / 2.0 + i as f64 * h;
            Complex64::new(0.0, k * x).exp()
        });
        forward_mass_form(&mut a, box_length);
        let expect = box_length * box_length;
        assert!((a[(m, 0)] - Complex64::new(expect, 0.0)).norm() < 1e-9 * expect);
        // everything else vanishes
        a[(m, 0)] = Complex64::default();
        let worst = a.iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(worst < 1e-9 * expect);
    }
}
