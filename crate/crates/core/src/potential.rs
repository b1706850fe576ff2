//! Lennard-Jones trap potential and the homogenized trap coefficients.
//!
//! The trap acts on the scaled coordinate `xi = 1 + x / epsilon`, with the
//! well minimum at `xi = 1` and the potential switched off beyond `xi = L + 1`:
//!
//! ```text
//! U(xi) = phi * (xi^-12 - 2 xi^-6)      0 < xi <= L + 1
//! U(xi) = 0                             xi > L + 1
//! ```
//!
//! Every coefficient of the reduced boundary model is an integral of the
//! Boltzmann factor `f = exp(-U)` over `[0, L + 1]`:
//!
//! ```text
//! I_L(phi)      = int f dxi                         M      = epsilon * I_L(phi)
//! I_L(phi, c)   = int f / (1 - c + c f) dxi         M(c)   = epsilon * I_L(phi, c)
//! M_k           = int f (1 - f)^k dxi
//! ```

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::quadrature::{integrate, integrate_adaptive, CompositeRule, QuadratureConfig};

/// Potential height (in units of k_B T) at which the repulsive core is treated
/// as an impermeable wall. Below `exp(-WALL_POTENTIAL)` relative occupancy
/// nothing is resolved.
pub const WALL_POTENTIAL: f64 = 30.0;

/// Dimensionless trap description: well depth `phi = E / (k_B T)`, range
/// `epsilon` and cutoff multiplier `cutoff` (the support is `[0, cutoff + 1]`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialSpec {
    pub phi: f64,
    pub epsilon: f64,
    pub cutoff: f64,
}

impl PotentialSpec {
    pub fn new(phi: f64, epsilon: f64, cutoff: f64) -> Result<Self> {
        if !(phi >= 0.0) || !phi.is_finite() {
            return Err(Error::Domain(format!("phi must be >= 0, got {phi}")));
        }
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::Domain(format!("epsilon must be > 0, got {epsilon}")));
        }
        if !(cutoff >= 1.0) || !cutoff.is_finite() {
            return Err(Error::Domain(format!("L must be >= 1, got {cutoff}")));
        }
        Ok(Self { phi, epsilon, cutoff })
    }

    /// Right end of the potential support in the scaled coordinate.
    pub fn support(&self) -> f64 {
        self.cutoff + 1.0
    }

    /// Scaled coordinate of a physical position measured from the well minimum.
    pub fn xi_of(&self, x: f64) -> f64 {
        1.0 + x / self.epsilon
    }
}

/// Uncut Lennard-Jones form. Written as `s (s - 2)` with `s = xi^-6` so that it
/// saturates to `+inf` instead of producing `inf - inf`.
pub fn lennard_jones(phi: f64, xi: f64) -> f64 {
    if phi == 0.0 {
        return 0.0;
    }
    let s = xi.powi(-6);
    phi * s * (s - 2.0)
}

fn lennard_jones_prime(phi: f64, xi: f64) -> f64 {
    if phi == 0.0 {
        return 0.0;
    }
    let s = xi.powi(-6);
    12.0 * phi / xi * s * (1.0 - s)
}

pub fn eval_u(spec: &PotentialSpec, xi: f64) -> Result<f64> {
    if !(xi > 0.0) {
        return Err(Error::Domain(format!("U is singular at xi = {xi} <= 0")));
    }
    if xi > spec.support() {
        return Ok(0.0);
    }
    Ok(lennard_jones(spec.phi, xi))
}

pub fn eval_u_prime(spec: &PotentialSpec, xi: f64) -> Result<f64> {
    if !(xi > 0.0) {
        return Err(Error::Domain(format!("U' is singular at xi = {xi} <= 0")));
    }
    if xi > spec.support() {
        return Ok(0.0);
    }
    Ok(lennard_jones_prime(spec.phi, xi))
}

/// `U` with the cutoff applied, defined for every real `xi` (`+inf` at and
/// below the core). Used by the solvers, which sample the potential on grids.
pub fn potential_or_inf(spec: &PotentialSpec, xi: f64) -> f64 {
    if xi <= 0.0 {
        f64::INFINITY
    } else if xi > spec.support() {
        0.0
    } else {
        lennard_jones(spec.phi, xi)
    }
}

/// Boltzmann factor `exp(-U)` with the cutoff applied; zero inside the core.
pub fn boltzmann(phi: f64, cutoff: f64, xi: f64) -> f64 {
    if xi <= 0.0 {
        0.0
    } else if xi > cutoff + 1.0 || phi == 0.0 {
        1.0
    } else {
        (-lennard_jones(phi, xi)).exp()
    }
}

fn capacity_breaks(cutoff: f64) -> Vec<f64> {
    let top = cutoff + 1.0;
    let mut breaks = vec![0.0, 0.75, 1.0, 1.25];
    if top > 2.0 {
        breaks.push(2.0);
    }
    breaks.retain(|&b| b < top);
    breaks.push(top);
    breaks
}

fn check_phi_cutoff(phi: f64, cutoff: f64) -> Result<()> {
    if !(phi >= 0.0) {
        return Err(Error::Domain(format!("phi must be >= 0, got {phi}")));
    }
    if !(cutoff >= 1.0) {
        return Err(Error::Domain(format!("L must be >= 1, got {cutoff}")));
    }
    Ok(())
}

/// `I_L(phi) = int_0^{L+1} exp(-U) dxi`.
pub fn trap_capacity_i(phi: f64, cutoff: f64, quad: &QuadratureConfig) -> Result<f64> {
    check_phi_cutoff(phi, cutoff)?;
    if phi == 0.0 {
        return Ok(cutoff + 1.0);
    }
    integrate(|xi| boltzmann(phi, cutoff, xi), &capacity_breaks(cutoff), quad)
}

/// Dilute trap capacity `M = epsilon * I_L(phi)`.
pub fn trap_coefficient_m(spec: &PotentialSpec, quad: &QuadratureConfig) -> Result<f64> {
    Ok(spec.epsilon * trap_capacity_i(spec.phi, spec.cutoff, quad)?)
}

/// Well depth that gives capacity `m_target` at range `epsilon`.
///
/// `I_L` is strictly increasing in `phi`, so the root is unique. The bracket is
/// grown geometrically and then refined by bisection on `ln I_L`.
pub fn solve_phi_for_m(
    m_target: f64,
    epsilon: f64,
    cutoff: f64,
    tol: f64,
    quad: &QuadratureConfig,
) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::Domain(format!("epsilon must be > 0, got {epsilon}")));
    }
    let target = m_target / epsilon;
    let minimum = cutoff + 1.0;
    if !(target >= minimum * (1.0 - 1e-14)) {
        return Err(Error::InfeasibleCapacity { ratio: target, minimum });
    }
    if target <= minimum * (1.0 + 1e-14) {
        return Ok(0.0);
    }
    let residual = |phi: f64| -> Result<f64> { Ok(trap_capacity_i(phi, cutoff, quad)?.ln() - target.ln()) };
    let mut lo = 0.0;
    let mut hi = 1.0;
    while residual(hi)? < 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 700.0 {
            return Err(Error::Bracket(format!("no phi below 700 reaches I = {target:e}")));
        }
    }
    let mut phi = 0.5 * (lo + hi);
    for _ in 0..200 {
        phi = 0.5 * (lo + hi);
        let r = residual(phi)?;
        if r.abs() <= 0.1 * tol || hi - lo <= 1e-15 * hi.max(1.0) {
            break;
        }
        if r < 0.0 {
            lo = phi;
        } else {
            hi = phi;
        }
    }
    let achieved = trap_capacity_i(phi, cutoff, quad)?;
    if (achieved - target).abs() > tol * target {
        return Err(Error::Bracket(format!(
            "bisection stalled: I({phi}) = {achieved:e} vs target {target:e}"
        )));
    }
    Ok(phi)
}

fn check_c_b(c_b: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&c_b) {
        return Err(Error::Domain(format!("c_B must lie in [0, 1], got {c_b}")));
    }
    Ok(())
}

/// Saturated integrand `f / (1 - c + c f)`, written so that `f = 0` gives 0
/// rather than `0 / 0`.
#[inline]
fn saturated_integrand(f: f64, c_b: f64) -> f64 {
    if f == 0.0 {
        return 0.0;
    }
    1.0 / ((1.0 - c_b) / f + c_b)
}

/// `I_L(phi, c_B) = M(c_B) / epsilon`.
pub fn saturated_capacity_i(phi: f64, cutoff: f64, c_b: f64, quad: &QuadratureConfig) -> Result<f64> {
    check_phi_cutoff(phi, cutoff)?;
    check_c_b(c_b)?;
    if c_b == 1.0 || phi == 0.0 {
        return Ok(cutoff + 1.0);
    }
    integrate(
        |xi| saturated_integrand(boltzmann(phi, cutoff, xi), c_b),
        &capacity_breaks(cutoff),
        quad,
    )
}

pub fn saturated_m(spec: &PotentialSpec, c_b: f64, quad: &QuadratureConfig) -> Result<f64> {
    Ok(spec.epsilon * saturated_capacity_i(spec.phi, spec.cutoff, c_b, quad)?)
}

/// Taylor coefficient `M_k = int f (1 - f)^k dxi` of `M(c_B) / epsilon`.
pub fn taylor_coefficient_mk(spec: &PotentialSpec, k: u32, quad: &QuadratureConfig) -> Result<f64> {
    let (phi, cutoff) = (spec.phi, spec.cutoff);
    if phi == 0.0 {
        return Ok(if k == 0 { cutoff + 1.0 } else { 0.0 });
    }
    integrate(
        |xi| {
            let f = boltzmann(phi, cutoff, xi);
            f * (1.0 - f).powi(k as i32)
        },
        &capacity_breaks(cutoff),
        quad,
    )
}

/// Truncated power series `epsilon * sum_{k <= order} c^k M_k`.
pub fn taylor_series_m(spec: &PotentialSpec, c_b: f64, order: u32, quad: &QuadratureConfig) -> Result<f64> {
    let mut sum = 0.0;
    for k in 0..=order {
        sum += c_b.powi(k as i32) * taylor_coefficient_mk(spec, k, quad)?;
    }
    Ok(spec.epsilon * sum)
}

/// Fast evaluator for `M(c)` on a frozen quadrature rule, used inside time
/// loops where the adaptive integrator would be too slow.
#[derive(Debug, Clone)]
pub struct CapacityEvaluator {
    spec: PotentialSpec,
    weights: Vec<f64>,
    factors: Vec<f64>,
    // contribution of the part of the support where f == 1 exactly
    flat: f64,
}

impl CapacityEvaluator {
    pub fn new(spec: &PotentialSpec, quad: &QuadratureConfig) -> Result<Self> {
        let (phi, cutoff) = (spec.phi, spec.cutoff);
        if phi == 0.0 {
            return Ok(Self { spec: *spec, weights: vec![], factors: vec![], flat: cutoff + 1.0 });
        }
        let breaks = capacity_breaks(cutoff);
        // The dilute integrand is the most sharply peaked; a rule converged on
        // it also resolves every saturated integrand.
        let (_, rule) = integrate_adaptive(|xi| boltzmann(phi, cutoff, xi), &breaks, quad)?;
        let CompositeRule { nodes, weights } = rule;
        let factors = nodes.iter().map(|&xi| boltzmann(phi, cutoff, xi)).collect();
        Ok(Self { spec: *spec, weights, factors, flat: 0.0 })
    }

    pub fn spec(&self) -> &PotentialSpec {
        &self.spec
    }

    /// `I_L(phi, c)`.
    pub fn amplification(&self, c: f64) -> f64 {
        if c >= 1.0 {
            return self.spec.support();
        }
        let c = c.max(0.0);
        self.flat
            + self
                .weights
                .iter()
                .zip(&self.factors)
                .map(|(w, &f)| w * saturated_integrand(f, c))
                .sum::<f64>()
    }

    pub fn capacity(&self, c: f64) -> f64 {
        self.spec.epsilon * self.amplification(c)
    }

    /// Trapped density `C(c) = M(c) c`.
    pub fn trapped(&self, c: f64) -> f64 {
        self.capacity(c) * c
    }

    /// `dC/dc = epsilon * int f (1 - c + c f)^-2 dxi`, the derivative of `c * I(c)`.
    pub fn trapped_slope(&self, c: f64) -> f64 {
        if self.flat > 0.0 {
            return self.spec.epsilon * self.flat;
        }
        // the one-sided slope at c = 1 diverges where f vanishes
        let c = c.clamp(0.0, 1.0 - 1e-12);
        self.spec.epsilon
            * self
                .weights
                .iter()
                .zip(&self.factors)
                .map(|(w, &f)| {
                    if f == 0.0 {
                        0.0
                    } else {
                        let d = 1.0 - c + c * f;
                        w * f / d / d
                    }
                })
                .sum::<f64>()
    }

    /// Physical ceiling of the trapped density, `epsilon (L + 1)`.
    pub fn max_trapped(&self) -> f64 {
        self.spec.epsilon * self.spec.support()
    }

    /// In-well peak concentration estimate `c I_L(phi, c)`.
    pub fn in_well_max(&self, c: f64) -> f64 {
        c * self.amplification(c)
    }

    /// Invert `C = M(c) c` for `c` in `[0, 1]` by bisection to `tol`.
    pub fn invert(&self, trapped: f64, tol: f64) -> Result<f64> {
        let cap = self.max_trapped();
        if trapped < 0.0 {
            return Err(Error::Domain(format!("negative trapped density {trapped:e}")));
        }
        if trapped > cap * (1.0 + 1e-12) {
            return Err(Error::SaturationOverflow { trapped, capacity: cap });
        }
        if trapped == 0.0 {
            return Ok(0.0);
        }
        // Newton from the dilute guess, safeguarded by a bisection bracket.
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        let mut c = (trapped / self.capacity(0.0)).min(1.0);
        for _ in 0..200 {
            let r = self.trapped(c) - trapped;
            if r > 0.0 {
                hi = c;
            } else {
                lo = c;
            }
            if hi - lo <= tol * hi.max(1e-300) || r == 0.0 {
                break;
            }
            let step = r / self.trapped_slope(c);
            let next = c - step;
            c = if next > lo && next < hi && step.is_finite() { next } else { 0.5 * (lo + hi) };
            if step.abs() <= tol * c {
                break;
            }
        }
        Ok(c)
    }

    /// Numerically confirm that `c -> M(c) c` is strictly increasing on a
    /// sample grid, which is what makes the inversion well posed.
    pub fn check_monotone(&self, samples: usize) -> Result<()> {
        let mut prev = -1.0;
        for i in 0..=samples {
            let c = (i as f64 / samples as f64).powi(3);
            let slope = self.trapped_slope(c);
            let val = self.trapped(c);
            if !(slope > 0.0) || val <= prev {
                return Err(Error::Domain(format!("trapped density not increasing at c = {c}")));
            }
            prev = val;
        }
        Ok(())
    }
}

const SK_ITERATIONS: usize = 12;

/// Largest tabulated concentration.
pub const TABLE_TOP: f64 = 0.999;

/// Sampled saturated capacity `M(c_B)` on `[0, 1]`.
#[derive(Debug, Clone)]
pub struct CapacityTable {
    pub spec: PotentialSpec,
    pub c_b_samples: Vec<f64>,
    pub m_values: Vec<f64>,
}

impl CapacityTable {
    /// Build a table on `0` plus log-spaced samples from `c_min` to
    /// `TABLE_TOP`.
    ///
    /// `c_B = 1` itself is left out: as the core fills, `M(c_B)` climbs back to
    /// `epsilon (L + 1)` only logarithmically, a feature no low-degree rational
    /// follows.
    pub fn build(spec: &PotentialSpec, samples: usize, c_min: f64, quad: &QuadratureConfig) -> Result<Self> {
        if samples < 2 || !(c_min > 0.0 && c_min < TABLE_TOP) {
            return Err(Error::Config(format!("table needs >= 2 samples and 0 < c_min < {TABLE_TOP}")));
        }
        let mut c_b_samples = vec![0.0];
        let (l0, l1) = (c_min.ln(), TABLE_TOP.ln());
        for i in 0..samples {
            let t = i as f64 / (samples - 1) as f64;
            c_b_samples.push((l0 + t * (l1 - l0)).exp());
        }
        let m_values = c_b_samples
            .iter()
            .map(|&c| saturated_m(spec, c, quad))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { spec: *spec, c_b_samples, m_values })
    }
}

/// Rational approximation `R(c) = P(c / scale) / Q(c / scale)` of
/// `M(c) / epsilon`, with `Q(0) = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalFit {
    pub numerator: Vec<f64>,
    pub denominator: Vec<f64>,
    pub scale: f64,
    /// Largest relative deviation from the table samples.
    pub max_rel_error: f64,
    pub condition: f64,
}

fn horner(coeffs: &[f64], s: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &a| acc * s + a)
}

impl RationalFit {
    pub fn eval(&self, c: f64) -> f64 {
        let s = c / self.scale;
        horner(&self.numerator, s) / horner(&self.denominator, s)
    }

    fn denominator_at(&self, c: f64) -> f64 {
        horner(&self.denominator, c / self.scale)
    }
}

/// Least-squares rational fit of degree `(p, q)` to `M(c_B) / epsilon`.
///
/// The linearized problem `P(s) - y Q(s) = 0`, weighted by `1 / y` so that the
/// residual is relative, is solved by SVD; one Gauss-Newton step on the true
/// relative residual follows and is kept only if it lowers the error.
pub fn rational_fit(table: &CapacityTable, p: usize, q: usize) -> Result<RationalFit> {
    let eps = table.spec.epsilon;
    let xs = &table.c_b_samples;
    let ys: Vec<f64> = table.m_values.iter().map(|m| m / eps).collect();
    let n_unknowns = p + 1 + q;
    if xs.len() < n_unknowns {
        return Err(Error::Config(format!("{} samples cannot fix {n_unknowns} coefficients", xs.len())));
    }
    let y0 = ys[0];
    if ys.iter().all(|&y| (y - y0).abs() <= 1e-14 * y0.abs()) {
        let mut numerator = vec![0.0; p + 1];
        numerator[0] = y0;
        let mut denominator = vec![0.0; q + 1];
        denominator[0] = 1.0;
        return Ok(RationalFit { numerator, denominator, scale: 1.0, max_rel_error: 0.0, condition: 1.0 });
    }
    // natural scale: the dilute amplification sets where M(c) starts to bend
    let scale = if y0 > 0.0 { (1.0 / y0).min(1.0) } else { 1.0 };

    let rows = xs.len();
    let mut fit: Option<RationalFit> = None;
    let mut condition = 0.0;
    // Sanathanan-Koerner reweighting: divide each row by the previous
    // denominator so the linearized residual approaches the relative one.
    for _ in 0..SK_ITERATIONS {
        let mut a = DMatrix::<f64>::zeros(rows, n_unknowns);
        let mut rhs = DVector::<f64>::zeros(rows);
        for (r, (&c, &y)) in xs.iter().zip(&ys).enumerate() {
            let s = c / scale;
            let w = fit.as_ref().map_or(1.0, |f| 1.0 / f.denominator_at(c).abs());
            for k in 0..=p {
                a[(r, k)] = w * s.powi(k as i32) / y;
            }
            for k in 1..=q {
                a[(r, p + k)] = -w * s.powi(k as i32);
            }
            rhs[r] = w;
        }
        let (coef, cond) = scaled_lstsq(&a, &rhs)?;
        condition = cond;
        let mut next = RationalFit {
            numerator: coef.iter().take(p + 1).copied().collect(),
            denominator: std::iter::once(1.0).chain(coef.iter().skip(p + 1).copied()).collect(),
            scale,
            max_rel_error: 0.0,
            condition,
        };
        next.max_rel_error = max_rel_error(&next, xs, &ys);
        let keep = fit.as_ref().map_or(true, |f| next.max_rel_error < f.max_rel_error);
        if !denominator_positive(&next) && fit.is_some() {
            break;
        }
        if keep {
            fit = Some(next);
        }
    }
    let mut fit = fit.expect("at least one reweighting pass");

    // Gauss-Newton refinement on r_i = P / (Q y) - 1
    let mut jac = DMatrix::<f64>::zeros(rows, n_unknowns);
    let mut res = DVector::<f64>::zeros(rows);
    for (r, (&c, &y)) in xs.iter().zip(&ys).enumerate() {
        let s = c / scale;
        let pv = horner(&fit.numerator, s);
        let qv = horner(&fit.denominator, s);
        res[r] = -(pv / (qv * y) - 1.0);
        for k in 0..=p {
            jac[(r, k)] = s.powi(k as i32) / (qv * y);
        }
        for k in 1..=q {
            jac[(r, p + k)] = -pv * s.powi(k as i32) / (qv * qv * y);
        }
    }
    if let Ok((delta, _)) = scaled_lstsq(&jac, &res) {
        let mut refined = fit.clone();
        for k in 0..=p {
            refined.numerator[k] += delta[k];
        }
        for k in 1..=q {
            refined.denominator[k] += delta[p + k];
        }
        refined.max_rel_error = max_rel_error(&refined, xs, &ys);
        if refined.max_rel_error < fit.max_rel_error && denominator_positive(&refined) {
            fit = refined;
        }
    }
    if !denominator_positive(&fit) {
        return Err(Error::IllConditionedFit {
            condition,
            reason: "denominator has a root in [0, 1]".into(),
        });
    }
    Ok(fit)
}

fn denominator_positive(fit: &RationalFit) -> bool {
    (0..=4000).all(|i| {
        let c = if i <= 2000 { 1e-9 * (1e9f64).powf(i as f64 / 2000.0) } else { (i - 2000) as f64 / 2000.0 };
        fit.denominator_at(c) > 0.0
    }) && fit.denominator_at(0.0) > 0.0
}

fn max_rel_error(fit: &RationalFit, xs: &[f64], ys: &[f64]) -> f64 {
    xs.iter()
        .zip(ys)
        .map(|(&c, &y)| ((fit.eval(c) - y) / y).abs())
        .fold(0.0, f64::max)
}

/// Column-equilibrated SVD least squares; refuses condition numbers past 1e14.
fn scaled_lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<(Vec<f64>, f64)> {
    let mut scaled = a.clone();
    let mut norms = vec![1.0; a.ncols()];
    for (j, norm) in norms.iter_mut().enumerate() {
        let n = a.column(j).norm();
        if n > 0.0 {
            *norm = n;
            scaled.column_mut(j).scale_mut(1.0 / n);
        }
    }
    let svd = scaled.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition < 1e14) {
        return Err(Error::IllConditionedFit { condition, reason: "normal system is numerically singular".into() });
    }
    let x = svd
        .solve(b, 0.0)
        .map_err(|e| Error::IllConditionedFit { condition, reason: e.to_string() })?;
    Ok((x.iter().zip(&norms).map(|(v, n)| v / n).collect(), condition))
}

/// Magnitude of the Lennard-Jones tail beyond the cutoff relative to the
/// whole integral from `xi_min`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailRatio {
    pub ratio: f64,
    /// Set when `phi = 0` makes both integrals vanish.
    pub degenerate: bool,
}

/// `|int_{L+1}^X U| / |int_{xi_min}^X U|` for the uncut potential, with the
/// upper truncation `X = 4 (L + 1)` leaving out under 1e-3 of the tail.
pub fn tail_ratio(phi: f64, cutoff: f64, quad: &QuadratureConfig, xi_min: f64) -> Result<TailRatio> {
    check_phi_cutoff(phi, cutoff)?;
    if !(xi_min > 0.0) || xi_min >= cutoff + 1.0 {
        return Err(Error::Domain(format!("xi_min must lie in (0, L + 1), got {xi_min}")));
    }
    if phi == 0.0 {
        return Ok(TailRatio { ratio: 0.0, degenerate: true });
    }
    let top = cutoff + 1.0;
    let upper = 4.0 * top;
    let u = |xi: f64| lennard_jones(phi, xi);
    let tail = integrate(u, &[top, upper], quad)?;
    let mut breaks = vec![xi_min];
    if xi_min < 1.0 {
        breaks.push(1.0);
    }
    breaks.push(top);
    let head = integrate(u, &breaks, quad)?;
    Ok(TailRatio { ratio: (tail / (head + tail)).abs(), degenerate: false })
}

/// Sutherland constant of the dilute linear isotherm, `K = 1 / M`.
pub fn sutherland_constant(spec: &PotentialSpec, quad: &QuadratureConfig) -> Result<f64> {
    let m = trap_coefficient_m(spec, quad)?;
    if !(m > 0.0) {
        return Err(Error::Domain("trap capacity must be positive".into()));
    }
    Ok(1.0 / m)
}

/// Scaled coordinate of the impermeable core wall, where `U = WALL_POTENTIAL`.
/// Zero for a flat potential.
pub fn core_wall_xi(phi: f64) -> f64 {
    if phi == 0.0 || lennard_jones(phi, 1.0) >= WALL_POTENTIAL {
        return 0.0;
    }
    // U is decreasing on (0, 1)
    let (mut lo, mut hi) = (1e-3_f64, 1.0_f64);
    while lennard_jones(phi, lo) < WALL_POTENTIAL {
        lo *= 0.5;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if lennard_jones(phi, mid) > WALL_POTENTIAL {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Mesh Peclet number `max |dU/dx| h = max |U'(xi)| h / epsilon` over the
/// accessible part of the support, `[core_wall_xi, L + 1]`.
pub fn peclet_number(spec: &PotentialSpec, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::Domain(format!("h must be > 0, got {h}")));
    }
    if spec.phi == 0.0 {
        return Ok(0.0);
    }
    let wall = core_wall_xi(spec.phi);
    // |U'| is decreasing from the wall to the minimum, so the candidates are
    // the wall itself and the interior maximum on the attractive side at
    // xi = (13/7)^(1/6), clipped to the support.
    let attractive_peak = (13.0_f64 / 7.0).powf(1.0 / 6.0).min(spec.support());
    let max_slope = lennard_jones_prime(spec.phi, wall)
        .abs()
        .max(lennard_jones_prime(spec.phi, attractive_peak).abs());
    Ok(max_slope * h / spec.epsilon)
}

pub fn peclet_stable(peclet: f64) -> bool {
    peclet < 2.0
}
