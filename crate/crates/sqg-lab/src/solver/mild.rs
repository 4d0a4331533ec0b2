//! Mild-solution checks: Duhamel residuals and Picard iterates.
//!
//! A solution of the dissipative SQG equation satisfies the Duhamel identity
//!
//! ```text
//! theta(t) = E(t) theta_0 + int_0^t E(t - s) N(theta(s)) ds,
//! ```
//!
//! with E the dissipative semigroup and N the (dealiased) transport term.
//! `duhamel_residual` measures how well a time-stepped trajectory satisfies
//! this identity when the integral is evaluated by Gauss–Legendre quadrature
//! on a mesh graded toward s = t, where the integrand develops a boundary
//! layer at high wavenumbers. The run lands exactly on every quadrature node,
//! so the residual isolates time-integration error from interpolation error.
//!
//! `picard_iterate` builds the textbook fixed-point sequence for the same
//! identity on a uniform grid and is the independent cross-check: for small
//! data its iterates contract geometrically toward the solver's answer.

use super::{drive, lambda_array, linear_evolve, make_initial_data, nonlinear_term, SimConfig};
use crate::error::{Error, Result};
use crate::field::Field;
use gauss_quad::GaussLegendre;
use ndarray::{Array2, Zip};
use num_complex::Complex64;
use std::sync::OnceLock;

/// Nodes of the uniform Picard grid (s_i = i t / PICARD_NODES).
const PICARD_NODES: usize = 16;

fn gl4() -> &'static Vec<(f64, f64)> {
    static NODES: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    NODES.get_or_init(|| {
        GaussLegendre::new(4)
            .expect("degree-4 Gauss-Legendre rule")
            .as_node_weight_pairs()
            .iter()
            .map(|&(x, w)| (x, w))
            .collect()
    })
}

/// Panel edges of the graded mesh on [0, t]: widths halve toward s = t.
fn panel_edges(t: f64, panels: usize) -> Vec<(f64, f64)> {
    let mut edges = Vec::with_capacity(panels);
    for j in 0..panels {
        let a = t * (1.0 - 2f64.powi(-(j as i32)));
        let b = if j + 1 == panels {
            t
        } else {
            t * (1.0 - 2f64.powi(-(j as i32 + 1)))
        };
        edges.push((a, b));
    }
    edges
}

/// Quadrature nodes and weights for int_0^t, as (s, w) pairs.
fn quadrature_nodes(t: f64, panels: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(4 * panels);
    for (a, b) in panel_edges(t, panels) {
        let c = 0.5 * (b - a);
        let m = 0.5 * (a + b);
        for &(x, w) in gl4() {
            out.push((m + c * x, w * c));
        }
    }
    out
}

/// Residual of the Duhamel identity along one trajectory.
#[derive(Clone, Debug)]
pub struct DuhamelReport {
    /// (t, relative L^2 residual) for each requested evaluation time.
    pub per_time: Vec<(f64, f64)>,
    pub worst: f64,
}

/// Runs the configured problem once, landing exactly on every quadrature node
/// of every evaluation time, and measures the relative L^2 defect of the
/// Duhamel identity there. Box doubling is disabled for the run so all states
/// share one grid.
pub fn duhamel_residual(
    cfg: &SimConfig,
    eval_times: &[f64],
    panels: usize,
) -> Result<DuhamelReport> {
    cfg.validate()?;
    if eval_times.is_empty() {
        return Err(Error::param("eval_times", "must not be empty"));
    }
    for &t in eval_times {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::param("eval_times", format!("{t} not in (0, inf)")));
        }
    }
    if !(2..=40).contains(&panels) {
        return Err(Error::param("panels", format!("{panels} outside 2..=40")));
    }
    let mut evals = eval_times.to_vec();
    evals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    evals.dedup();

    // One stop per distinct node or evaluation time. Nodes from different
    // evaluation times can land within round-off of each other, so nearly
    // coincident stops are merged and looked up by nearest match later. A
    // linear-only run solves the pure heat flow, whose Duhamel identity has
    // no integral: no nodes are needed.
    let mut stops: Vec<f64> = Vec::new();
    for &te in &evals {
        if !cfg.linear_only {
            stops.extend(quadrature_nodes(te, panels).iter().map(|&(s, _)| s));
        }
        stops.push(te);
    }
    stops.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let horizon = *stops.last().unwrap();
    let min_gap = 1e-12 * (1.0 + horizon);
    stops.dedup_by(|a, b| (*a - *b).abs() <= min_gap);

    let grid = cfg.grid()?;
    let theta0 = make_initial_data(&cfg.initial_data, cfg.resolved_amplitude(), grid)?;
    let th0 = theta0.to_spectral();
    let out = drive(cfg, theta0.clone(), &stops, false)?;

    let lookup = |s: f64| -> &Field {
        let i = match stops.binary_search_by(|v| v.partial_cmp(&s).unwrap()) {
            Ok(i) => i,
            Err(i) => {
                // nearest of the two neighbours; must be within the merge gap
                let lo = i.checked_sub(1);
                let hi = if i < stops.len() { Some(i) } else { None };
                let best = [lo, hi]
                    .into_iter()
                    .flatten()
                    .min_by(|&a, &b| {
                        (stops[a] - s)
                            .abs()
                            .partial_cmp(&(stops[b] - s).abs())
                            .unwrap()
                    })
                    .expect("stop neighbourhood");
                assert!(
                    (stops[best] - s).abs() <= 2.0 * min_gap,
                    "node {s} missing from the stop list"
                );
                best
            }
        };
        &out.samples[i + 1].theta
    };

    let lam = lambda_array(grid, cfg.alpha);
    // transport term cached per stop; each node is visited once per eval time
    let mut rhs_cache: Vec<Option<Array2<Complex64>>> = vec![None; stops.len()];
    let cache_index = |s: f64| -> usize {
        let mut best = 0;
        let mut dist = f64::INFINITY;
        for (i, &v) in stops.iter().enumerate() {
            let d = (v - s).abs();
            if d < dist {
                dist = d;
                best = i;
            }
        }
        best
    };

    let mut per_time = Vec::with_capacity(evals.len());
    for &te in &evals {
        let th_te = lookup(te).to_spectral();
        let mut defect = th_te.spec().clone();
        // subtract the free evolution
        Zip::from(&mut defect)
            .and(th0.spec())
            .and(&lam)
            .for_each(|o, &v, &l| *o -= v * (-te * l).exp());
        // subtract the quadrature of the Duhamel integral
        for (s, w) in if cfg.linear_only {
            Vec::new()
        } else {
            quadrature_nodes(te, panels)
        } {
            let idx = cache_index(s);
            if rhs_cache[idx].is_none() {
                let (nf, _) = nonlinear_term(lookup(s));
                rhs_cache[idx] = Some(nf.spec().clone());
            }
            let nspec = rhs_cache[idx].as_ref().unwrap();
            let tau = te - s;
            Zip::from(&mut defect)
                .and(nspec)
                .and(&lam)
                .for_each(|o, &v, &l| *o -= v * (w * (-tau * l).exp()));
        }
        let num: f64 = defect.iter().map(|v| v.norm_sqr()).sum();
        let den: f64 = th_te.spec().iter().map(|v| v.norm_sqr()).sum();
        let rel = if den > 0.0 {
            (num / den).sqrt()
        } else {
            num.sqrt()
        };
        per_time.push((te, rel));
    }
    let worst = per_time.iter().map(|&(_, r)| r).fold(0.0, f64::max);
    Ok(DuhamelReport { per_time, worst })
}

/// `iterations` Picard steps for the Duhamel fixed point on a uniform
/// time grid, returning the iterate at time `t`. Zero iterations reproduce
/// the free evolution exactly; divergence of the successive differences is
/// reported as `Error::PicardDiverged`.
pub fn picard_iterate(theta0: &Field, alpha: f64, t: f64, iterations: usize) -> Result<Field> {
    picard_run(theta0, alpha, t, iterations).map(|(f, _)| f)
}

/// Successive-difference norms of the Picard iteration, relative to the
/// spectral norm of the data: d_k = max over nodes of the l2 distance of
/// iterates k and k-1, for k = 1..=iterations. Geometric decay of these is
/// the contraction diagnostic; values at the rounding floor mean the fixed
/// point was reached (for radial data the first correction already vanishes).
pub fn picard_differences(
    theta0: &Field,
    alpha: f64,
    t: f64,
    iterations: usize,
) -> Result<Vec<f64>> {
    picard_run(theta0, alpha, t, iterations).map(|(_, d)| d)
}

fn picard_run(theta0: &Field, alpha: f64, t: f64, iterations: usize) -> Result<(Field, Vec<f64>)> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::param("alpha", format!("{alpha} outside (0, 2]")));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::param("t", format!("{t} not in (0, inf)")));
    }
    if iterations > 64 {
        return Err(Error::param("iterations", "more than 64 is never useful"));
    }
    let grid = theta0.grid();
    let m = PICARD_NODES;
    let delta = t / m as f64;
    let lam = lambda_array(grid, alpha);
    let th0 = theta0.to_spectral();

    // free evolution at every node
    let linear: Vec<Array2<Complex64>> = (0..=m)
        .map(|i| {
            let s = i as f64 * delta;
            let mut a = th0.spec().clone();
            Zip::from(&mut a).and(&lam).for_each(|o, &l| *o *= (-s * l).exp());
            a
        })
        .collect();

    let scale: f64 = th0.spec().iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let mut cur = linear.clone();
    let mut prev_diff: Option<f64> = None;
    let mut diffs = Vec::with_capacity(iterations);
    for iter in 1..=iterations {
        // transport term at every node of the current iterate
        let rhs: Vec<Array2<Complex64>> = cur
            .iter()
            .map(|a| {
                let f = Field::from_spec(grid, a.clone()).expect("shape");
                let (nf, _) = nonlinear_term(&f);
                nf.spec().clone()
            })
            .collect();
        let mut next = Vec::with_capacity(m + 1);
        for i in 0..=m {
            let s_i = i as f64 * delta;
            let mut acc = linear[i].clone();
            let weights = composite_weights(i, delta);
            for (j, &w) in weights.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let tau = s_i - j as f64 * delta;
                Zip::from(&mut acc)
                    .and(&rhs[j])
                    .and(&lam)
                    .for_each(|o, &v, &l| *o += v * (w * (-tau * l).exp()));
            }
            next.push(acc);
        }
        let diff = cur
            .iter()
            .zip(next.iter())
            .map(|(a, b)| {
                a.iter()
                    .zip(b.iter())
                    .map(|(x, y)| (x - y).norm_sqr())
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max);
        if let Some(prev) = prev_diff {
            if diff > 1.05 * prev && diff > 1e-14 * scale {
                return Err(Error::PicardDiverged {
                    iterate: iter,
                    ratio: diff / prev,
                });
            }
        }
        prev_diff = Some(diff);
        diffs.push(diff / scale.max(f64::MIN_POSITIVE));
        cur = next;
    }
    Ok((Field::from_spec(grid, cur[m].clone())?, diffs))
}

/// Newton–Cotes weights for int_0^{i delta} over nodes 0..=i with uniform
/// spacing: trapezoid for one interval, composite Simpson for an even count,
/// and Simpson plus a 3/8 closing rule for an odd count.
fn composite_weights(i: usize, delta: f64) -> Vec<f64> {
    match i {
        0 => vec![0.0],
        1 => vec![0.5 * delta, 0.5 * delta],
        _ if i % 2 == 0 => simpson_weights(i, delta),
        _ => {
            let mut w = simpson_weights(i - 3, delta);
            w.resize(i + 1, 0.0);
            let c = 3.0 * delta / 8.0;
            w[i - 3] += c;
            w[i - 2] += 3.0 * c;
            w[i - 1] += 3.0 * c;
            w[i] += c;
            w
        }
    }
}

/// Composite Simpson weights over an even number of intervals (0 included).
fn simpson_weights(i: usize, delta: f64) -> Vec<f64> {
    debug_assert!(i % 2 == 0);
    if i == 0 {
        return vec![0.0];
    }
    let c = delta / 3.0;
    let mut w = vec![0.0; i + 1];
    w[0] = c;
    w[i] = c;
    for (j, v) in w.iter_mut().enumerate().take(i).skip(1) {
        *v = if j % 2 == 1 { 4.0 * c } else { 2.0 * c };
    }
    w
}

/// Free evolution on the Picard grid, for oracle cross-checks: equals
/// `picard_iterate` with zero iterations bit for bit.
pub fn free_evolution(theta0: &Field, alpha: f64, t: f64) -> Field {
    linear_evolve(theta0, alpha, t)
}
