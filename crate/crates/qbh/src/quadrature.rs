//! Brillouin-zone quadrature.
//!
//! Two integrators cover the needs of the covariance pipelines:
//!
//! - a periodic midpoint rule with automatic grid doubling (spectrally
//!   accurate for analytic integrands; the midpoint offset keeps singular
//!   momenta of gapless models off the nodes);
//! - an adaptive Gauss pair (G7 inside G15, Legendre nodes generated at
//!   startup) with panel splits at user-supplied singular momenta, for
//!   integrable inverse-square-root singularities near criticality.

use std::f64::consts::PI;
use std::sync::OnceLock;

#[derive(Debug, Clone, Copy)]
pub struct QuadOutcome {
    pub value: f64,
    pub error: f64,
    pub converged: bool,
    pub points: usize,
}

/// Mean of `f` over one period of `[-pi, pi)` on an `n`-point midpoint grid.
pub fn periodic_mean(f: &mut impl FnMut(f64) -> f64, n: usize) -> f64 {
    let mut acc = 0.0;
    for j in 0..n {
        let k = -PI + 2.0 * PI * (j as f64 + 0.5) / n as f64;
        acc += f(k);
    }
    acc / n as f64
}

/// Vector-valued periodic mean with grid doubling until every component
/// changes by less than `tol`, or `max_points` is reached. Returns values,
/// per-component error estimates, and the convergence flag.
pub fn periodic_mean_vec_doubling(
    f: &mut impl FnMut(f64, &mut [f64]),
    dim: usize,
    tol: f64,
    start_points: usize,
    max_points: usize,
) -> (Vec<f64>, Vec<f64>, bool, usize) {
    let mut n = start_points.max(8);
    let mut prev = eval_mean_vec(f, dim, n);
    loop {
        let n2 = n * 2;
        let cur = eval_mean_vec(f, dim, n2);
        let errs: Vec<f64> = cur
            .iter()
            .zip(prev.iter())
            .map(|(a, b)| (a - b).abs())
            .collect();
        let worst = errs.iter().cloned().fold(0.0, f64::max);
        if worst <= tol || n2 >= max_points {
            return (cur, errs, worst <= tol, n2);
        }
        n = n2;
        prev = cur;
    }
}

fn eval_mean_vec(f: &mut impl FnMut(f64, &mut [f64]), dim: usize, n: usize) -> Vec<f64> {
    let mut acc = vec![0.0; dim];
    let mut buf = vec![0.0; dim];
    for j in 0..n {
        let k = -PI + 2.0 * PI * (j as f64 + 0.5) / n as f64;
        buf.iter_mut().for_each(|x| *x = 0.0);
        f(k, &mut buf);
        for (a, b) in acc.iter_mut().zip(buf.iter()) {
            *a += b;
        }
    }
    for a in acc.iter_mut() {
        *a /= n as f64;
    }
    acc
}

// ---------------------------------------------------------------------------
// Gauss-Legendre pair
// ---------------------------------------------------------------------------

fn legendre_p_dp(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for m in 2..=n {
        let m = m as f64;
        let p2 = ((2.0 * m - 1.0) * x * p1 - (m - 1.0) * p0) / m;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

fn gauss_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Chebyshev initial guess, Newton refinement.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_p_dp(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_p_dp(n, x);
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn rule_7() -> &'static (Vec<f64>, Vec<f64>) {
    static R: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    R.get_or_init(|| gauss_rule(7))
}

fn rule_15() -> &'static (Vec<f64>, Vec<f64>) {
    static R: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    R.get_or_init(|| gauss_rule(15))
}

fn gauss_panel(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let mid = 0.5 * (a + b);
    let hw = 0.5 * (b - a);
    let (n7, w7) = rule_7();
    let (n15, w15) = rule_15();
    let mut g15 = 0.0;
    for (x, w) in n15.iter().zip(w15.iter()) {
        g15 += w * f(mid + hw * x);
    }
    g15 *= hw;
    let mut g7 = 0.0;
    for (x, w) in n7.iter().zip(w7.iter()) {
        g7 += w * f(mid + hw * x);
    }
    g7 *= hw;
    (g15, (g15 - g7).abs())
}

/// Adaptive integration of `f` over `[a, b]` to absolute tolerance `abs_tol`,
/// bisecting the worst panel first. `splits` lists interior points (singular
/// momenta) used as initial panel boundaries; nodes are strictly interior, so
/// integrable endpoint singularities are never evaluated.
pub fn adaptive_gauss(
    f: &mut impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    splits: &[f64],
    abs_tol: f64,
    max_panels: usize,
) -> QuadOutcome {
    let mut bounds: Vec<f64> = vec![a];
    let mut interior: Vec<f64> = splits
        .iter()
        .cloned()
        .filter(|&x| x > a + 1e-14 && x < b - 1e-14)
        .collect();
    interior.sort_by(|x, y| x.partial_cmp(y).unwrap());
    interior.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
    bounds.extend(interior);
    bounds.push(b);

    // (a, b, value, error, splittable)
    let mut panels: Vec<(f64, f64, f64, f64, bool)> = Vec::new();
    let mut points = 0usize;
    for w in bounds.windows(2) {
        let (v, e) = gauss_panel(f, w[0], w[1]);
        points += 22;
        panels.push((w[0], w[1], v, e, true));
    }

    let min_width = (b - a) * 1e-14;
    loop {
        let total_err: f64 = panels.iter().map(|p| p.3).sum();
        let worst = panels
            .iter()
            .enumerate()
            .filter(|(_, p)| p.4 && p.1 - p.0 > min_width)
            .max_by(|(_, x), (_, y)| x.3.partial_cmp(&y.3).unwrap());
        let stop = total_err <= abs_tol || panels.len() >= max_panels || worst.is_none();
        if stop {
            let value: f64 = panels.iter().map(|p| p.2).sum();
            return QuadOutcome {
                value,
                error: total_err,
                converged: total_err <= abs_tol,
                points,
            };
        }
        let (i, _) = worst.unwrap();
        let (pa, pb, _, _, _) = panels[i];
        let mid = 0.5 * (pa + pb);
        let (v1, e1) = gauss_panel(f, pa, mid);
        let (v2, e2) = gauss_panel(f, mid, pb);
        points += 44;
        panels[i] = (pa, mid, v1, e1, true);
        panels.push((mid, pb, v2, e2, true));
    }
}
