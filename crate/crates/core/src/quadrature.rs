//! Composite Gauss-Legendre quadrature with panel doubling.

use crate::error::{Error, Result};

/// Settings for the composite rule used by every coefficient integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureConfig {
    /// Gauss-Legendre points per panel.
    pub order: usize,
    /// Initial panel count per segment; doubled until converged.
    pub panels: usize,
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Panel count per segment at which doubling gives up.
    pub max_panels: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            order: 10,
            panels: 16,
            abs_tol: 1e-300,
            rel_tol: 1e-13,
            max_panels: 1 << 16,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.panels < 16 {
            return Err(Error::Config(format!("panels must be >= 16, got {}", self.panels)));
        }
        if !(self.abs_tol > 0.0) || !(self.rel_tol >= 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if self.order < 2 || self.order > 64 {
            return Err(Error::Config(format!("order must be in [2, 64], got {}", self.order)));
        }
        if self.max_panels < self.panels {
            return Err(Error::Config("max_panels below panels".into()));
        }
        Ok(())
    }
}

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// A frozen composite rule: integrate by a plain weighted sum.
#[derive(Debug, Clone)]
pub struct CompositeRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl CompositeRule {
    pub fn new(breaks: &[f64], panels: usize, order: usize) -> Self {
        let (gx, gw) = gauss_legendre(order);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for seg in breaks.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            if b <= a {
                continue;
            }
            let width = (b - a) / panels as f64;
            for p in 0..panels {
                let lo = a + p as f64 * width;
                let mid = lo + 0.5 * width;
                for (x, w) in gx.iter().zip(&gw) {
                    nodes.push(mid + 0.5 * width * x);
                    weights.push(0.5 * width * w);
                }
            }
        }
        Self { nodes, weights }
    }

    pub fn apply<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Integrate `f` over the segments delimited by `breaks`, doubling the panel
/// count until two successive estimates agree. Returns the value and the
/// converged rule.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(
    f: F,
    breaks: &[f64],
    cfg: &QuadratureConfig,
) -> Result<(f64, CompositeRule)> {
    cfg.validate()?;
    let a = breaks[0];
    let b = *breaks.last().unwrap();
    let mut panels = cfg.panels;
    let mut prev = CompositeRule::new(breaks, panels, cfg.order).apply(&f);
    loop {
        panels *= 2;
        let next_rule = CompositeRule::new(breaks, panels, cfg.order);
        let next = next_rule.apply(&f);
        let change = (next - prev).abs();
        if !next.is_finite() {
            return Err(Error::QuadratureNonConvergence { a, b, estimate: next, change });
        }
        if change <= cfg.abs_tol.max(cfg.rel_tol * next.abs()) {
            return Ok((next, next_rule));
        }
        if panels >= cfg.max_panels {
            return Err(Error::QuadratureNonConvergence { a, b, estimate: next, change });
        }
        prev = next;
    }
}

/// Convenience wrapper returning only the value.
pub fn integrate<F: Fn(f64) -> f64>(f: F, breaks: &[f64], cfg: &QuadratureConfig) -> Result<f64> {
    integrate_adaptive(f, breaks, cfg).map(|(v, _)| v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_is_exact_for_polynomials() {
        for n in [2usize, 5, 10, 20] {
            let (x, w) = gauss_legendre(n);
            for deg in 0..(2 * n) {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "n={n} deg={deg} q={q}");
            }
        }
    }

    #[test]
    fn adaptive_integrates_peaked_gaussian() {
        let cfg = QuadratureConfig::default();
        let s: f64 = 1e-3;
        let v = integrate(|x| (-(x - 0.3) * (x - 0.3) / (2.0 * s * s)).exp(), &[0.0, 0.3, 1.0], &cfg)
            .unwrap();
        let exact = s * (2.0 * std::f64::consts::PI).sqrt();
        assert!((v - exact).abs() / exact < 1e-12);
    }

    #[test]
    fn rejects_too_few_panels() {
        let cfg = QuadratureConfig { panels: 8, ..Default::default() };
        assert!(matches!(integrate(|x| x, &[0.0, 1.0], &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn reports_non_convergence() {
        let cfg = QuadratureConfig { max_panels: 32, ..Default::default() };
        let r = integrate(|x: f64| (1e4 * x).sin().abs(), &[0.0, 1.0], &cfg);
        assert!(matches!(r, Err(Error::QuadratureNonConvergence { .. })));
    }
}
