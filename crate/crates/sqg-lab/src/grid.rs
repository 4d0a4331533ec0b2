//! Uniform periodic grids on the centered square box [-L/2, L/2)^2.
//!
//! The grid fixes all discrete conventions used by the rest of the crate:
//!
//! * physical points x_i = -L/2 + i h with h = L/n, index 0 at the lower-left
//!   corner, row-major storage with the first axis as x_1;
//! * wavenumbers k_m = 2 pi m / L in the standard symmetric FFT layout
//!   m = 0, 1, ..., n/2 - 1, -n/2, ..., -1;
//! * the 2/3-rule dealiasing cutoff keeps integer modes with
//!   max(|m_1|, |m_2|) <= floor(n/3).
//!
//! n must be a power of two and at least 32 so every grid admits the box
//! doubling used by the long-time rescaling strategy.

use crate::error::{Error, Result};
use ndarray::Array1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    n: usize,
    box_length: f64,
}

impl GridSpec {
    /// Validates and builds a grid; `n` a power of two >= 32, `box_length` > 0.
    pub fn new(n: usize, box_length: f64) -> Result<Self> {
        if n < 32 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "n = {n} must be a power of two and at least 32"
            )));
        }
        if !(box_length > 0.0) || !box_length.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "box length {box_length} must be positive and finite"
            )));
        }
        Ok(GridSpec { n, box_length })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn box_length(&self) -> f64 {
        self.box_length
    }

    /// Grid spacing h = L/n.
    pub fn h(&self) -> f64 {
        self.box_length / self.n as f64
    }

    /// Cell area h^2, the weight of the discrete integral.
    pub fn cell_area(&self) -> f64 {
        let h = self.h();
        h * h
    }

    /// Smallest positive wavenumber 2 pi / L.
    pub fn k_fundamental(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.box_length
    }

    /// Largest resolved wavenumber magnitude per axis, pi n / L.
    pub fn k_max(&self) -> f64 {
        std::f64::consts::PI * self.n as f64 / self.box_length
    }

    /// Physical coordinates along one axis, x_i = -L/2 + i h.
    pub fn coords(&self) -> Array1<f64> {
        let h = self.h();
        let half = self.box_length / 2.0;
        Array1::from_iter((0..self.n).map(|i| -half + i as f64 * h))
    }

    /// Signed integer mode number for FFT index i: 0..n/2-1, then -n/2..-1.
    pub fn mode(&self, i: usize) -> i64 {
        debug_assert!(i < self.n);
        if i < self.n / 2 {
            i as i64
        } else {
            i as i64 - self.n as i64
        }
    }

    /// Wavenumbers along one axis in FFT layout.
    pub fn wavenumbers(&self) -> Array1<f64> {
        let k0 = self.k_fundamental();
        Array1::from_iter((0..self.n).map(|i| k0 * self.mode(i) as f64))
    }

    /// Integer dealiasing cutoff: modes with max(|m_1|,|m_2|) above this are
    /// zeroed by the 2/3 rule.
    pub fn dealias_mode_cutoff(&self) -> i64 {
        (self.n / 3) as i64
    }

    /// The doubled box used by the long-time rescaling strategy: same n,
    /// twice the side length.
    pub fn doubled(&self) -> GridSpec {
        GridSpec {
            n: self.n,
            box_length: 2.0 * self.box_length,
        }
    }

    /// Checks the kernel resolution window: the kernel width t^{1/alpha} must
    /// span at least 4 grid cells and fit 16 times into the box.
    pub fn check_kernel_window(&self, alpha: f64, t: f64) -> Result<()> {
        let width = t.powf(1.0 / alpha);
        let h = self.h();
        if width < 4.0 * h {
            return Err(Error::ResolutionWindow(format!(
                "kernel width t^(1/alpha) = {width:.4e} under-resolved: needs >= 4h = {:.4e}",
                4.0 * h
            )));
        }
        if self.box_length < 16.0 * width {
            return Err(Error::ResolutionWindow(format!(
                "box L = {} too small for kernel width {width:.4e}: needs L >= 16 t^(1/alpha) = {:.4e}",
                self.box_length,
                16.0 * width
            )));
        }
        Ok(())
    }
}
