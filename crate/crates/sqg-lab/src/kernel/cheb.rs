//! Chebyshev interpolation on an interval.

use std::f64::consts::PI;

/// Chebyshev interpolant of a smooth function on [a, b].
#[derive(Debug, Clone)]
pub struct Cheb {
    a: f64,
    b: f64,
    coef: Vec<f64>,
}

impl Cheb {
    /// Fit through n+1 Chebyshev–Lobatto nodes.
    pub fn fit(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> Self {
        assert!(b > a && n >= 2);
        let nodes: Vec<f64> = (0..=n)
            .map(|k| {
                let u = (PI * k as f64 / n as f64).cos();
                0.5 * (a + b) + 0.5 * (b - a) * u
            })
            .collect();
        let vals: Vec<f64> = nodes.iter().map(|&x| f(x)).collect();
        let mut coef = vec![0.0; n + 1];
        for (j, c) in coef.iter_mut().enumerate() {
            let mut acc = 0.5 * (vals[0] + if j % 2 == 0 { vals[n] } else { -vals[n] });
            for (k, v) in vals.iter().enumerate().take(n).skip(1) {
                acc += v * (PI * (j * k) as f64 / n as f64).cos();
            }
            *c = 2.0 * acc / n as f64;
        }
        Cheb { a, b, coef }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.a && x <= self.b
    }

    /// Clenshaw evaluation.
    pub fn eval(&self, x: f64) -> f64 {
        let u = (2.0 * x - self.a - self.b) / (self.b - self.a);
        let mut b1 = 0.0;
        let mut b2 = 0.0;
        for j in (1..self.coef.len()).rev() {
            let t = 2.0 * u * b1 - b2 + self.coef[j];
            b2 = b1;
            b1 = t;
        }
        u * b1 - b2 + 0.5 * self.coef[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_smooth_functions() {
        let c = Cheb::fit(0.0, 2.0, 24, |x| x.exp());
        for x in [0.0, 0.3, 1.0, 1.7, 2.0] {
            assert!((c.eval(x) - x.exp()).abs() < 1e-13 * x.exp());
        }
        let c = Cheb::fit(1.0, 5.0, 32, |x| (3.0 * x).cos() / x);
        for x in [1.0f64, 2.2, 4.9] {
            let exact = (3.0 * x).cos() / x;
            assert!((c.eval(x) - exact).abs() < 1e-12, "x={x}");
        }
    }
}
