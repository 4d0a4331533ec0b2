//! Scalar fields on a periodic grid with dual physical/spectral storage.
//!
//! A `Field` is immutable after construction and may carry the physical
//! samples, the mass-form spectral coefficients (see `fft`), or both.
//! `to_spectral` / `to_physical` return a new field with the missing
//! representation filled in; when both are present they agree to round-off by
//! construction, which is what the transform round-trip tests pin down.

use crate::error::{Error, Result};
use crate::fft;
use crate::grid::GridSpec;
use ndarray::Array2;
use num_complex::Complex64;

#[derive(Debug, Clone)]
pub struct Field {
    grid: GridSpec,
    phys: Option<Array2<f64>>,
    spec: Option<Array2<Complex64>>,
}

impl Field {
    /// Wraps physical samples; shape must be n x n.
    pub fn from_phys(grid: GridSpec, phys: Array2<f64>) -> Result<Self> {
        if phys.dim() != (grid.n(), grid.n()) {
            return Err(Error::InvalidGrid(format!(
                "field shape {:?} does not match grid n = {}",
                phys.dim(),
                grid.n()
            )));
        }
        Ok(Field {
            grid,
            phys: Some(phys),
            spec: None,
        })
    }

    /// Wraps mass-form spectral coefficients; shape must be n x n.
    pub fn from_spec(grid: GridSpec, spec: Array2<Complex64>) -> Result<Self> {
        if spec.dim() != (grid.n(), grid.n()) {
            return Err(Error::InvalidGrid(format!(
                "field shape {:?} does not match grid n = {}",
                spec.dim(),
                grid.n()
            )));
        }
        Ok(Field {
            grid,
            phys: None,
            spec: Some(spec),
        })
    }

    /// Builds a field by evaluating `f(x1, x2)` at the grid points.
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let x = grid.coords();
        let phys = Array2::from_shape_fn((grid.n(), grid.n()), |(i, j)| f(x[i], x[j]));
        Field {
            grid,
            phys: Some(phys),
            spec: None,
        }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Field {
            grid,
            phys: Some(Array2::zeros((grid.n(), grid.n()))),
            spec: Some(Array2::default((grid.n(), grid.n()))),
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn has_phys(&self) -> bool {
        self.phys.is_some()
    }

    pub fn has_spec(&self) -> bool {
        self.spec.is_some()
    }

    /// Physical samples; call `to_physical` first if only spectral data is held.
    pub fn phys(&self) -> &Array2<f64> {
        self.phys
            .as_ref()
            .expect("field holds no physical representation; call to_physical() first")
    }

    /// Spectral coefficients; call `to_spectral` first if only physical data is held.
    pub fn spec(&self) -> &Array2<Complex64> {
        self.spec
            .as_ref()
            .expect("field holds no spectral representation; call to_spectral() first")
    }

    /// Returns a field that additionally holds the spectral representation.
    pub fn to_spectral(&self) -> Field {
        if self.spec.is_some() {
            return self.clone();
        }
        let phys = self.phys().clone();
        let mut a = phys.mapv(|v| Complex64::new(v, 0.0));
        fft::forward_mass_form(&mut a, self.grid.box_length());
        Field {
            grid: self.grid,
            phys: Some(phys),
            spec: Some(a),
        }
    }

    /// Returns a field that additionally holds the physical representation
    /// (real part of the inverse transform).
    pub fn to_physical(&self) -> Field {
        if self.phys.is_some() {
            return self.clone();
        }
        let (phys, _) = self.inverse_with_imag();
        Field {
            grid: self.grid,
            phys: Some(phys),
            spec: self.spec.clone(),
        }
    }

    /// Inverse transform returning the real part together with the largest
    /// imaginary residue relative to the field scale — the realness gauge for
    /// conjugate-symmetric multipliers.
    pub fn inverse_with_imag(&self) -> (Array2<f64>, f64) {
        let mut a = self.spec().clone();
        fft::inverse_mass_form(&mut a, self.grid.box_length());
        let mut max_abs = 0.0f64;
        let mut max_imag = 0.0f64;
        for v in a.iter() {
            max_abs = max_abs.max(v.re.abs());
            max_imag = max_imag.max(v.im.abs());
        }
        let ratio = if max_abs > 0.0 { max_imag / max_abs } else { max_imag };
        (a.mapv(|v| v.re), ratio)
    }

    /// Discrete mass h^2 sum theta, which equals the k = 0 coefficient.
    pub fn mass(&self) -> f64 {
        match &self.phys {
            Some(p) => self.grid.cell_area() * p.sum(),
            None => self.spec()[(0, 0)].re,
        }
    }

    /// Mean value over the box.
    pub fn mean(&self) -> f64 {
        let l = self.grid.box_length();
        self.mass() / (l * l)
    }

    pub fn linf(&self) -> f64 {
        self.phys().iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.phys().iter().fold(f64::INFINITY, |m, v| m.min(*v))
    }

    /// L^p norm by the grid Riemann sum; `p` >= 1, or infinity for the sup.
    pub fn lp_norm(&self, p: f64) -> f64 {
        if p.is_infinite() {
            return self.linf();
        }
        assert!(p >= 1.0, "lp_norm requires p >= 1, got {p}");
        let sum: f64 = self.phys().iter().map(|v| v.abs().powf(p)).sum();
        (self.grid.cell_area() * sum).powf(1.0 / p)
    }

    pub fn l2_norm(&self) -> f64 {
        let sum: f64 = self.phys().iter().map(|v| v * v).sum();
        (self.grid.cell_area() * sum).sqrt()
    }

    /// L^2 norm computed on the spectral side (Parseval partner of `l2_norm`).
    pub fn l2_norm_spectral(&self) -> f64 {
        let l = self.grid.box_length();
        let sum: f64 = self.spec().iter().map(|v| v.norm_sqr()).sum();
        (sum / (l * l)).sqrt()
    }

    /// Largest |f| over grid points with |x|_inf > 3L/8, relative to the
    /// global maximum: the wrap-contamination gauge for torus-as-plane runs.
    pub fn contamination_index(&self) -> f64 {
        let p = self.phys();
        let x = self.grid.coords();
        let gate = 3.0 * self.grid.box_length() / 8.0;
        let mut outer = 0.0f64;
        let mut global = 0.0f64;
        for ((i, j), v) in p.indexed_iter() {
            let a = v.abs();
            global = global.max(a);
            if x[i].abs() > gate || x[j].abs() > gate {
                outer = outer.max(a);
            }
        }
        if global > 0.0 {
            outer / global
        } else {
            0.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec::new(64, 16.0).unwrap()
    }

    #[test]
    fn representations_agree_after_round_trip() {
        let f = Field::from_fn(grid(), |x, y| (-(x * x + y * y)).exp());
        let g = f.to_spectral().to_physical();
        let mut worst = 0.0f64;
        for (a, b) in f.phys().iter().zip(g.phys().iter()) {
            worst = worst.max((a - b).abs());
        }
        assert!(worst < 1e-12 * f.linf(), "round trip drift {worst}");
    }

    #[test]
    fn mass_matches_zero_mode() {
        let f = Field::from_fn(grid(), |x, y| (-(x * x + y * y) / 2.0).exp());
        let s = f.to_spectral();
        assert!((f.mass() - s.spec()[(0, 0)].re).abs() < 1e-12 * f.mass().abs());
    }

    #[test]
    fn parseval_holds() {
        let f = Field::from_fn(grid(), |x, y| (0.7 * x).sin() * (-(y * y) / 3.0).exp());
        let s = f.to_spectral();
        let phys_side = s.l2_norm();
        let spec_side = s.l2_norm_spectral();
        assert!(
            (phys_side - spec_side).abs() < 1e-12 * phys_side,
            "Parseval mismatch: {phys_side} vs {spec_side}"
        );
    }

    #[test]
    fn gaussian_mass_is_pi_w_squared() {
        // int exp(-r^2/w^2) = pi w^2; periodization and sampling corrections
        // are exponentially small at w = 1, L = 16.
        let w = 1.0;
        let f = Field::from_fn(grid(), move |x, y| (-(x * x + y * y) / (w * w)).exp());
        let expect = std::f64::consts::PI * w * w;
        assert!((f.mass() - expect).abs() < 1e-10 * expect);
    }
}
