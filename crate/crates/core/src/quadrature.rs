//! Composite Gauss-Legendre quadrature with panel doubling and tail
//! truncation, plus composite Simpson on uniform samples.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Gauss-Legendre order used on every panel.
pub const GAUSS_POINTS: usize = 15;

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`,
/// from Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

fn rule15() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(GAUSS_POINTS))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureConfig {
    /// Converged when successive panel doublings agree to `tol * max(1, |I|)`.
    pub tol: f64,
    pub initial_panels: usize,
    pub max_doublings: usize,
    /// Infinite ends are cut where the weight falls below `tail_ratio * max`.
    pub tail_ratio: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            tol: 1e-13,
            initial_panels: 4,
            max_doublings: 14,
            tail_ratio: 1e-16,
        }
    }
}

fn panels_sum(f: &impl Fn(f64) -> Result<Vec<f64>>, a: f64, b: f64, panels: usize, width: usize) -> Result<Vec<f64>> {
    let (nodes, weights) = rule15();
    let h = (b - a) / panels as f64;
    let mut acc = vec![0.0; width];
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + 0.5 * h;
        for (x, w) in nodes.iter().zip(weights) {
            let y = f(mid + 0.5 * h * x)?;
            for (a, v) in acc.iter_mut().zip(y) {
                *a += 0.5 * h * w * v;
            }
        }
    }
    Ok(acc)
}

/// Integrates a vector-valued `f` over the finite `[a, b]`, doubling the
/// number of panels until every component has converged.
pub fn integrate_vec(
    f: impl Fn(f64) -> Result<Vec<f64>>,
    a: f64,
    b: f64,
    width: usize,
    config: &QuadratureConfig,
) -> Result<Vec<f64>> {
    if !(a.is_finite() && b.is_finite()) || a > b {
        return Err(Error::InvalidArgument(format!("bad integration interval [{a}, {b}]")));
    }
    let mut panels = config.initial_panels.max(1);
    let mut prev = panels_sum(&f, a, b, panels, width)?;
    let mut change = f64::INFINITY;
    for _ in 0..config.max_doublings {
        panels *= 2;
        let next = panels_sum(&f, a, b, panels, width)?;
        change = prev
            .iter()
            .zip(&next)
            .map(|(p, n)| (p - n).abs() / n.abs().max(1.0))
            .fold(0.0, f64::max);
        prev = next;
        if change <= config.tol {
            return Ok(prev);
        }
    }
    Err(Error::QuadratureNotConverged {
        change,
        tolerance: config.tol,
    })
}

pub fn integrate(f: impl Fn(f64) -> Result<f64>, a: f64, b: f64, config: &QuadratureConfig) -> Result<f64> {
    integrate_vec(|x| Ok(vec![f(x)?]), a, b, 1, config).map(|v| v[0])
}

/// Finite interval carrying all but a negligible part of the weight `w`
/// on `(lo, hi)`. Infinite ends are pushed outward by doubling until `w`
/// drops below `tail_ratio` times the largest value seen.
pub fn truncate_support(w: impl Fn(f64) -> f64, lo: f64, hi: f64, tail_ratio: f64) -> Result<(f64, f64)> {
    if lo >= hi {
        return Err(Error::InvalidArgument(format!("empty support ({lo}, {hi})")));
    }
    let anchor = match (lo.is_finite(), hi.is_finite()) {
        (true, true) => return Ok((lo, hi)),
        (true, false) => lo,
        (false, true) => hi,
        (false, false) => 0.0,
    };
    // sample the region around the anchor for a reference maximum
    let mut peak = 0.0f64;
    let probe = |x: f64, peak: &mut f64| {
        let y = w(x).abs();
        if y.is_finite() {
            *peak = peak.max(y);
        }
        y
    };
    for i in 0..=64 {
        let s = i as f64 / 8.0;
        if hi.is_infinite() {
            probe(anchor + s, &mut peak);
        }
        if lo.is_infinite() {
            probe(anchor - s, &mut peak);
        }
    }
    let reach = |dir: f64, peak: &mut f64| -> Result<f64> {
        let mut d = 1.0;
        for _ in 0..60 {
            let x = anchor + dir * d;
            let y = probe(x, peak);
            if *peak > 0.0 && y < tail_ratio * *peak && d >= 8.0 {
                return Ok(x);
            }
            d *= 2.0;
        }
        Err(Error::InvalidArgument("weight does not decay in the tails".into()))
    };
    let b = if hi.is_infinite() { reach(1.0, &mut peak)? } else { hi };
    let a = if lo.is_infinite() { reach(-1.0, &mut peak)? } else { lo };
    // the upper cut may have been fixed before the lower scan raised the peak
    let b = if hi.is_infinite() && w(b).abs() >= tail_ratio * peak {
        reach(1.0, &mut peak)?
    } else {
        b
    };
    Ok((a, b))
}

/// Composite Simpson on uniformly spaced samples; an odd number of
/// intervals finishes with Simpson's 3/8 rule on the last three.
pub fn simpson(values: &[f64], dx: f64) -> f64 {
    let intervals = values.len().saturating_sub(1);
    match intervals {
        0 => 0.0,
        1 => 0.5 * dx * (values[0] + values[1]),
        2 => dx / 3.0 * (values[0] + 4.0 * values[1] + values[2]),
        3 => 3.0 * dx / 8.0 * (values[0] + 3.0 * values[1] + 3.0 * values[2] + values[3]),
        _ => {
            let even = if intervals % 2 == 0 { intervals } else { intervals - 3 };
            let mut s = values[0] + values[even];
            for (i, v) in values[1..even].iter().enumerate() {
                s += if i % 2 == 0 { 4.0 * v } else { 2.0 * v };
            }
            let head = dx / 3.0 * s;
            if even == intervals {
                head
            } else {
                head + simpson(&values[even..], dx)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rule_is_exact_for_degree_29() {
        let (x, w) = gauss_legendre(15);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(28)).sum();
        assert!((integral - 2.0 / 29.0).abs() < 1e-14);
        let odd: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(29)).sum();
        assert!(odd.abs() < 1e-14);
    }

    #[test]
    fn integrates_exponential_tail() {
        let cfg = QuadratureConfig::default();
        let (a, b) = truncate_support(|x| (-x).exp(), 0.0, f64::INFINITY, cfg.tail_ratio).unwrap();
        let v = integrate(|x| Ok((-x).exp()), a, b, &cfg).unwrap();
        assert!((v - 1.0).abs() < 1e-14);
    }

    #[test]
    fn integrates_offset_gaussian_on_real_line() {
        let cfg = QuadratureConfig::default();
        let w = |x: f64| (-(x - 5.0) * (x - 5.0) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let (a, b) = truncate_support(w, f64::NEG_INFINITY, f64::INFINITY, cfg.tail_ratio).unwrap();
        assert!(a < -3.0 && b > 13.0, "{a} {b}");
        let v = integrate(|x| Ok(w(x)), a, b, &cfg).unwrap();
        assert!((v - 1.0).abs() < 1e-13);
    }

    #[test]
    fn simpson_exact_on_cubics() {
        let f = |t: f64| 1.0 + t - 3.0 * t * t + 2.0 * t * t * t;
        let exact = 1.0 + 0.5 - 1.0 + 0.5;
        for n in [2, 3, 4, 5, 7, 10] {
            let vals: Vec<f64> = (0..=n).map(|i| f(i as f64 / n as f64)).collect();
            assert!((simpson(&vals, 1.0 / n as f64) - exact).abs() < 1e-14, "n = {n}");
        }
    }

    #[test]
    fn non_convergence_is_reported() {
        let cfg = QuadratureConfig {
            max_doublings: 1,
            initial_panels: 1,
            ..QuadratureConfig::default()
        };
        let r = integrate(|x| Ok((50.0 * x).sin().abs()), 0.0, 10.0, &cfg);
        assert!(matches!(r, Err(Error::QuadratureNotConverged { .. })));
    }
}
