//! Least-squares rate extraction for decay diagnostics.
//!
//! Everything here reduces to a straight-line fit after a change of
//! variables: `power_fit` works in (ln t, ln v) and `log_power_fit` in
//! (ln ln(2+t), ln v). Fits demand at least [`MIN_SAMPLES`] points spanning
//! at least a decade in `t` so a quoted exponent always rests on a real
//! sample window, never on two points.

use crate::error::{Error, Result};

/// Minimum number of samples for any rate fit.
pub const MIN_SAMPLES: usize = 8;

/// Minimum ratio `t_last / t_first` for any rate fit (one decade).
pub const MIN_SPAN_RATIO: f64 = 10.0;

/// Result of a straight-line least-squares fit `y ≈ slope · x + intercept`.
#[derive(Debug, Clone, Copy)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Largest absolute deviation of a sample from the fitted line.
    pub max_residual: f64,
}

impl LineFit {
    /// Prefactor `e^intercept` for fits performed in log variables.
    pub fn prefactor(&self) -> f64 {
        self.intercept.exp()
    }
}

/// Plain least squares on raw coordinates. Errors unless there are at least
/// two distinct abscissae and all inputs are finite.
pub fn line_fit(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.len() != ys.len() {
        return Err(Error::param("samples", "x and y lengths differ"));
    }
    if xs.len() < 2 {
        return Err(Error::FitSpan("need at least two samples".into()));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::param("samples", "non-finite sample in fit input"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx <= 0.0 {
        return Err(Error::FitSpan("degenerate abscissae: no spread to fit against".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_residual = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| (y - slope * x - intercept).abs())
        .fold(0.0, f64::max);
    Ok(LineFit {
        slope,
        intercept,
        max_residual,
    })
}

fn check_window(ts: &[f64], vs: &[f64]) -> Result<()> {
    if ts.len() != vs.len() {
        return Err(Error::param("samples", "t and v lengths differ"));
    }
    if ts.len() < MIN_SAMPLES {
        return Err(Error::FitSpan(format!(
            "need at least {MIN_SAMPLES} samples, got {}",
            ts.len()
        )));
    }
    if ts.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::param("samples", "fit times must be positive"));
    }
    if ts.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("samples", "fit times must be increasing"));
    }
    if ts[ts.len() - 1] / ts[0] < MIN_SPAN_RATIO {
        return Err(Error::FitSpan(format!(
            "sample span ratio {:.2} is under a decade",
            ts[ts.len() - 1] / ts[0]
        )));
    }
    if vs.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::param("samples", "fit values must be positive and finite"));
    }
    Ok(())
}

/// Fit `v ≈ C t^p` over the window; returns `slope = p`,
/// `intercept = ln C`, and the max residual in ln v.
pub fn power_fit(ts: &[f64], vs: &[f64]) -> Result<LineFit> {
    check_window(ts, vs)?;
    let xs: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = vs.iter().map(|v| v.ln()).collect();
    line_fit(&xs, &ys)
}

/// Fit `v ≈ C (log(2 + t))^p` over the window; returns `slope = p`,
/// `intercept = ln C`, and the max residual in ln v.
pub fn log_power_fit(ts: &[f64], vs: &[f64]) -> Result<LineFit> {
    check_window(ts, vs)?;
    let xs: Vec<f64> = ts.iter().map(|t| (2.0 + t).ln().ln()).collect();
    let ys: Vec<f64> = vs.iter().map(|v| v.ln()).collect();
    line_fit(&xs, &ys)
}

/// Geometric sample times `t0 · ratio^j`, handy for building fit windows.
pub fn geometric_times(t0: f64, ratio: f64, count: usize) -> Vec<f64> {
    (0..count).map(|j| t0 * ratio.powi(j as i32)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_line() {
        let xs = [0.0, 1.0, 2.0, 5.0];
        let ys: Vec<f64> = xs.iter().map(|x| 3.5 * x - 1.25).collect();
        let fit = line_fit(&xs, &ys).unwrap();
        assert!((fit.slope - 3.5).abs() < 1e-12);
        assert!((fit.intercept + 1.25).abs() < 1e-12);
        assert!(fit.max_residual < 1e-12);
    }

    #[test]
    fn power_fit_inverts_synthetic_decay() {
        let ts = geometric_times(1.0, 1.5, 14);
        let vs: Vec<f64> = ts.iter().map(|t| 3.0 * t.powf(-2.0)).collect();
        let fit = power_fit(&ts, &vs).unwrap();
        assert!((fit.slope + 2.0).abs() < 1e-10, "slope {}", fit.slope);
        assert!((fit.prefactor() - 3.0).abs() < 1e-10);
        assert!(fit.max_residual < 1e-10);
    }

    #[test]
    fn power_fit_tolerates_small_noise() {
        let ts = geometric_times(1.0, 1.4, 16);
        let vs: Vec<f64> = ts
            .iter()
            .enumerate()
            .map(|(i, t)| t.powf(-0.5) * (1.0 + 0.01 * ((i as f64) * 2.1).sin()))
            .collect();
        let fit = power_fit(&ts, &vs).unwrap();
        assert!((fit.slope + 0.5).abs() < 0.01, "slope {}", fit.slope);
    }

    #[test]
    fn log_power_fit_inverts_synthetic_growth() {
        let ts = geometric_times(1.0, 2.0, 14);
        let vs: Vec<f64> = ts.iter().map(|t| 2.0 * (2.0 + t).ln().powf(1.5)).collect();
        let fit = log_power_fit(&ts, &vs).unwrap();
        assert!((fit.slope - 1.5).abs() < 1e-10, "slope {}", fit.slope);
        assert!((fit.prefactor() - 2.0).abs() < 1e-10);
    }

    #[test]
    fn rejects_short_windows() {
        let ts = geometric_times(1.0, 2.0, 5);
        let vs = vec![1.0; 5];
        assert!(matches!(power_fit(&ts, &vs), Err(Error::FitSpan(_))));
        // Eight samples but under a decade of span.
        let ts = geometric_times(1.0, 1.1, 8);
        let vs = vec![1.0; 8];
        assert!(matches!(power_fit(&ts, &vs), Err(Error::FitSpan(_))));
    }

    #[test]
    fn rejects_nonpositive_values() {
        let ts = geometric_times(1.0, 2.0, 8);
        let mut vs = vec![1.0; 8];
        vs[3] = 0.0;
        assert!(power_fit(&ts, &vs).is_err());
    }
}
