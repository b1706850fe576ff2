//! Model-versus-model comparisons, equilibrium oracles and the cost estimate
//! for resolving the trap layer directly.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::potential::{solve_phi_for_m, trap_coefficient_m, CapacityEvaluator, PotentialSpec};
use crate::quadrature::QuadratureConfig;
use crate::solver_full::{step_plan, DriftScheme, FullConfig1D, FullSolver1D, GaussianIC, InitialProfile, Mobility};
use crate::solver_multiscale::{MultiscaleConfig1D, MultiscaleSolver1D, TrapModel};

/// A matched pair of 1D runs: the full model with range `epsilon` and the
/// reduced model with the same capacity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonSetup {
    pub d: f64,
    /// Dilute capacity `M`; the well depth is solved from it.
    pub m: f64,
    pub epsilon: f64,
    pub cutoff: f64,
    pub dx: f64,
    pub dt: f64,
    pub t_final: f64,
    pub ic: GaussianIC,
    pub saturated: bool,
    /// Initial layout of the full model.
    pub initial: InitialProfile,
}

impl ComparisonSetup {
    /// `D = 1`, `L = 2`, `dt = dx`, linear trap, full model started in
    /// local equilibrium with the trap.
    pub fn new(m: f64, epsilon: f64, dx: f64, t_final: f64, ic: GaussianIC) -> Self {
        Self { d: 1.0, m, epsilon, cutoff: 2.0, dx, dt: dx, t_final, ic, saturated: false, initial: InitialProfile::Boltzmann }
    }

    pub fn spec(&self) -> Result<PotentialSpec> {
        let quad = QuadratureConfig::default();
        let phi = solve_phi_for_m(self.m, self.epsilon, self.cutoff, 1e-12, &quad)?;
        PotentialSpec::new(phi, self.epsilon, self.cutoff)
    }

    pub fn full_config(&self) -> Result<FullConfig1D> {
        let mut cfg = FullConfig1D::new(self.spec()?, self.dx, self.t_final, self.ic);
        cfg.d = self.d;
        cfg.dt = self.dt;
        cfg.initial = self.initial;
        if self.saturated {
            cfg.mobility = Mobility::Saturating;
            cfg.scheme = DriftScheme::default_for(Mobility::Saturating);
        }
        Ok(cfg)
    }

    pub fn multiscale_config(&self) -> Result<MultiscaleConfig1D> {
        let spec = self.spec()?;
        let trap = if self.saturated {
            TrapModel::Saturated { spec }
        } else {
            TrapModel::Linear { m: trap_coefficient_m(&spec, &QuadratureConfig::default())? }
        };
        let mut cfg = MultiscaleConfig1D::new(trap, self.dx, self.t_final, self.ic);
        cfg.d = self.d;
        cfg.dt = self.dt;
        Ok(cfg)
    }

    /// Whether the full grid resolves the trap layer (`dx <= epsilon / 10`).
    pub fn resolved(&self) -> bool {
        self.dx <= self.epsilon / 10.0
    }
}

/// Discrepancy between the two models over time.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub times: Vec<f64>,
    /// Surface discrepancy, normalized by `v0`.
    pub e_s: Vec<f64>,
    /// Bulk L1 discrepancy on `[L epsilon, 1]`, normalized by `v0`.
    pub e_b: Vec<f64>,
    /// Relative final trapped-mass error.
    pub final_error: f64,
    pub epsilon: f64,
    pub dx: f64,
    pub dt: f64,
    pub m: f64,
    pub ic: GaussianIC,
    pub resolved: bool,
}

impl ErrorReport {
    pub fn final_e_s(&self) -> f64 {
        *self.e_s.last().unwrap_or(&0.0)
    }

    pub fn final_e_b(&self) -> f64 {
        *self.e_b.last().unwrap_or(&0.0)
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("t,e_s,e_b\n");
        for ((t, s), b) in self.times.iter().zip(&self.e_s).zip(&self.e_b) {
            let _ = writeln!(out, "{t:.16e},{s:.16e},{b:.16e}");
        }
        out
    }
}

/// Cell averages of the full-model field over each reduced cell, restricted
/// to `[lower, 1]`. Returns `(average, covered length)` per reduced cell.
fn restrict(full: &FullSolver1D, reduced: &MultiscaleSolver1D, lower: f64) -> Vec<(f64, f64)> {
    let c = full.concentration();
    let fg = &full.grid;
    let rg = &reduced.grid;
    (0..rg.n_cells)
        .map(|j| {
            let a = rg.face(j).max(lower);
            let b = rg.face(j + 1);
            if b <= a {
                return (0.0, 0.0);
            }
            let first = (((a - fg.x_left) / fg.h).floor().max(0.0) as usize).min(fg.n_cells - 1);
            let mut mass = 0.0;
            let mut i = first;
            while i < fg.n_cells && fg.face(i) < b {
                let overlap = fg.face(i + 1).min(b) - fg.face(i).max(a);
                if overlap > 0.0 {
                    mass += c[i] * overlap;
                }
                i += 1;
            }
            (mass / (b - a), b - a)
        })
        .collect()
}

/// Run both models of `setup` side by side on the same time grid and
/// evaluate the discrepancies after every step.
pub fn compare_models_1d(setup: &ComparisonSetup) -> Result<ErrorReport> {
    let full_cfg = setup.full_config()?;
    let ms_cfg = setup.multiscale_config()?;
    compare_runs_1d(full_cfg, ms_cfg)
}

/// As `compare_models_1d`, for explicitly configured runs.
pub fn compare_runs_1d(full_cfg: FullConfig1D, ms_cfg: MultiscaleConfig1D) -> Result<ErrorReport> {
    let plan = step_plan(full_cfg.t_final, full_cfg.dt);
    if plan != step_plan(ms_cfg.t_final, ms_cfg.dt) {
        return Err(Error::Alignment(format!(
            "full run takes {} steps of {}, reduced run {:?}",
            plan.0,
            plan.1,
            step_plan(ms_cfg.t_final, ms_cfg.dt)
        )));
    }
    if full_cfg.ic != ms_cfg.ic || full_cfg.d != ms_cfg.d {
        return Err(Error::Alignment("runs differ in initial datum or diffusion coefficient".into()));
    }
    let spec = full_cfg.spec;
    let v0 = full_cfg.ic.v0;
    let lower = spec.cutoff * spec.epsilon;
    let mut full = FullSolver1D::new(full_cfg)?;
    let mut reduced = MultiscaleSolver1D::new(ms_cfg)?;
    let mut times = Vec::with_capacity(plan.0 + 1);
    let mut e_s = Vec::with_capacity(plan.0 + 1);
    let mut e_b = Vec::with_capacity(plan.0 + 1);
    let mut record = |full: &FullSolver1D, reduced: &MultiscaleSolver1D| {
        times.push(full.t);
        e_s.push((full.entrapped_mass() - reduced.trapped_total()).abs() / v0);
        let c0 = reduced.concentration();
        let bulk: f64 = restrict(full, reduced, lower)
            .iter()
            .zip(&c0)
            .map(|(&(avg, len), c)| (avg - c).abs() * len)
            .sum();
        e_b.push(bulk / v0);
    };
    record(&full, &reduced);
    for _ in 0..plan.0 {
        full.step(plan.1)?;
        reduced.step(plan.1)?;
        record(&full, &reduced);
    }
    let trapped = reduced.trapped_total();
    let final_error = (full.entrapped_mass() - trapped).abs() / trapped.abs();
    let m = match ms_cfg.trap {
        TrapModel::Linear { m } => m,
        TrapModel::Saturated { spec } => trap_coefficient_m(&spec, &QuadratureConfig::default())?,
    };
    Ok(ErrorReport {
        times,
        e_s,
        e_b,
        final_error,
        epsilon: spec.epsilon,
        dx: full_cfg.dx,
        dt: plan.1,
        m,
        ic: full_cfg.ic,
        resolved: full_cfg.dx <= spec.epsilon / 10.0,
    })
}

/// One comparison per range, run in parallel.
pub fn epsilon_sweep(base: &ComparisonSetup, epsilons: &[f64]) -> Result<Vec<ErrorReport>> {
    epsilons
        .par_iter()
        .map(|&epsilon| compare_models_1d(&ComparisonSetup { epsilon, ..*base }))
        .collect()
}

pub fn epsilon_sweep_csv(reports: &[ErrorReport]) -> String {
    let mut out = String::from("epsilon,e_s,e_b,final_error\n");
    for r in reports {
        let _ = writeln!(out, "{:.16e},{:.16e},{:.16e},{:.16e}", r.epsilon, r.final_e_s(), r.final_e_b(), r.final_error);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DxCell {
    pub epsilon: f64,
    pub dx: f64,
    /// `None` when the grid does not resolve the layer.
    pub final_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DxStudy {
    pub cells: Vec<DxCell>,
}

impl DxStudy {
    /// `max / min` of the final error over the resolved cells at `epsilon`.
    pub fn spread(&self, epsilon: f64) -> Option<f64> {
        let errs: Vec<f64> = self
            .cells
            .iter()
            .filter(|c| c.epsilon == epsilon)
            .filter_map(|c| c.final_error)
            .collect();
        if errs.is_empty() {
            return None;
        }
        let max = errs.iter().cloned().fold(f64::MIN, f64::max);
        let min = errs.iter().cloned().fold(f64::MAX, f64::min);
        Some(max / min)
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("epsilon,dx,final_error,resolved\n");
        for c in &self.cells {
            let e = c.final_error.map(|e| format!("{e:.16e}")).unwrap_or_default();
            let _ = writeln!(out, "{:.16e},{:.16e},{e},{}", c.epsilon, c.dx, c.final_error.is_some());
        }
        out
    }
}

/// Final error for every `(epsilon, dx)` pair, with `dt = dx`. Pairs whose
/// grid does not resolve the layer are flagged rather than run.
pub fn dx_independence_study(base: &ComparisonSetup, dxs: &[f64], epsilons: &[f64]) -> Result<DxStudy> {
    let pairs: Vec<(f64, f64)> = epsilons.iter().flat_map(|&e| dxs.iter().map(move |&d| (e, d))).collect();
    let cells = pairs
        .par_iter()
        .map(|&(epsilon, dx)| {
            let setup = ComparisonSetup { epsilon, dx, dt: dx, ..*base };
            let final_error = if setup.resolved() { Some(compare_models_1d(&setup)?.final_error) } else { None };
            Ok(DxCell { epsilon, dx, final_error })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DxStudy { cells })
}

/// `(t, trapped / v0)` along a reduced run.
pub fn multiscale_fraction_series(cfg: MultiscaleConfig1D) -> Result<Vec<(f64, f64)>> {
    let v0 = cfg.ic.v0;
    let mut solver = MultiscaleSolver1D::new(cfg)?;
    let mut out = Vec::new();
    solver.run(|s| out.push((s.t(), s.trapped_total() / v0)))?;
    Ok(out)
}

/// `(t, entrapped / v0)` along a full run.
pub fn full_fraction_series(cfg: FullConfig1D) -> Result<Vec<(f64, f64)>> {
    let v0 = cfg.ic.v0;
    let mut solver = FullSolver1D::new(cfg)?;
    let mut out = Vec::new();
    solver.run(|s| out.push((s.t, s.entrapped_mass() / v0)))?;
    Ok(out)
}

pub fn fraction_csv(series: &[(f64, f64)]) -> String {
    let mut out = String::from("t,fraction\n");
    for (t, f) in series {
        let _ = writeln!(out, "{t:.16e},{f:.16e}");
    }
    out
}

/// First time the series reaches `level`, by linear interpolation.
pub fn threshold_crossing(series: &[(f64, f64)], level: f64) -> Option<f64> {
    if series.first().is_some_and(|&(_, f)| f >= level) {
        return series.first().map(|&(t, _)| t);
    }
    series.windows(2).find_map(|w| {
        let ((t0, f0), (t1, f1)) = (w[0], w[1]);
        (f0 < level && f1 >= level).then(|| t0 + (level - f0) / (f1 - f0) * (t1 - t0))
    })
}

/// Equilibrium predicted from conservation: uniform bulk value `c` with
/// `mass = c |bulk| + trap_measure C(c)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equilibrium {
    pub bulk_value: f64,
    pub trapped_fraction: f64,
}

/// Storage law of the oracle.
#[derive(Debug, Clone)]
pub enum OracleTrap {
    Linear(f64),
    Saturated(Box<CapacityEvaluator>),
}

pub fn steady_state_oracle(mass: f64, bulk_measure: f64, trap_measure: f64, trap: &OracleTrap) -> Result<Equilibrium> {
    if !(mass >= 0.0) || !(bulk_measure > 0.0) || !(trap_measure >= 0.0) {
        return Err(Error::Domain("oracle needs mass >= 0, |bulk| > 0 and trap measure >= 0".into()));
    }
    let c = match trap {
        OracleTrap::Linear(m) => mass / (bulk_measure + trap_measure * m),
        OracleTrap::Saturated(ev) => {
            let total = |c: f64| c * bulk_measure + trap_measure * ev.trapped(c);
            if total(1.0) < mass {
                return Err(Error::SaturationOverflow { trapped: mass, capacity: total(1.0) });
            }
            let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if total(mid) < mass {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-15 * hi {
                    break;
                }
            }
            0.5 * (lo + hi)
        }
    };
    let trapped = mass - c * bulk_measure;
    Ok(Equilibrium { bulk_value: c, trapped_fraction: if mass > 0.0 { trapped / mass } else { 0.0 } })
}

/// Unknown counts for resolving the layer with local refinement versus the
/// reduced model, on a unit cube.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DofEstimate {
    pub d: u32,
    pub n: f64,
    pub big_n: f64,
    pub eps_tilde: f64,
    pub dof_amr: f64,
    pub dof_multiscale: f64,
}

pub fn dof_estimate(d: u32, n: f64, big_n: f64, eps_tilde: f64) -> Result<DofEstimate> {
    if !(n > 0.0) || !(big_n > 0.0) || !(eps_tilde > 0.0) {
        return Err(Error::Domain("dof estimate needs positive n, N and eps_tilde".into()));
    }
    let (dof_amr, dof_multiscale) = match d {
        1 => (n + big_n, 1.0 + big_n),
        2 => (n * n / eps_tilde + big_n * big_n, big_n + big_n * big_n),
        3 => (n.powi(3) / (eps_tilde * eps_tilde) + big_n.powi(3), big_n * big_n + big_n.powi(3)),
        _ => return Err(Error::Domain(format!("dimension must be 1, 2 or 3, got {d}"))),
    };
    Ok(DofEstimate { d, n, big_n, eps_tilde, dof_amr, dof_multiscale })
}

pub fn dof_table_csv(rows: &[DofEstimate]) -> String {
    let mut out = String::from("d,n,N,eps_tilde,dof_amr,dof_multiscale\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{:e},{:e},{:e}", r.d, r.n, r.big_n, r.eps_tilde, r.dof_amr, r.dof_multiscale);
    }
    out
}

/// Least-squares fit of `y = a x^p` on log-log data; returns `(a, p)`.
pub fn power_law_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Domain("power-law fit needs at least two paired points".into()));
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0)) {
        return Err(Error::Domain("power-law fit needs positive data".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("power-law fit needs distinct abscissae".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let p = sxy / sxx;
    Ok(((my - p * mx).exp(), p))
}

/// Observed orders `log2(e_k / e_{k+1})` for errors under successive halving.
pub fn observed_orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dof_rows() {
        let d1 = dof_estimate(1, 10.0, 100.0, 1e-6).unwrap();
        assert_eq!((d1.dof_amr, d1.dof_multiscale), (110.0, 101.0));
        let d3 = dof_estimate(3, 10.0, 100.0, 1e-6).unwrap();
        assert!((d3.dof_amr / 1e15 - 1.0).abs() < 1e-3);
        assert!(dof_estimate(4, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn oracle_values() {
        let e = steady_state_oracle(1e-6, 1.0, 1.0, &OracleTrap::Linear(3.0)).unwrap();
        assert!((e.trapped_fraction - 0.75).abs() < 1e-15);
        assert!((e.bulk_value - 0.25e-6).abs() < 1e-21);
        assert_eq!(steady_state_oracle(1.0, 1.0, 1.0, &OracleTrap::Linear(0.0)).unwrap().trapped_fraction, 0.0);
    }

    #[test]
    fn saturated_oracle_matches_linear_when_dilute() {
        let spec = PotentialSpec::new(8.0, 1e-3, 2.0).unwrap();
        let ev = CapacityEvaluator::new(&spec, &QuadratureConfig::default()).unwrap();
        let m = ev.capacity(0.0);
        let lin = steady_state_oracle(1e-9, 1.0, 1.0, &OracleTrap::Linear(m)).unwrap();
        let sat = steady_state_oracle(1e-9, 1.0, 1.0, &OracleTrap::Saturated(Box::new(ev.clone()))).unwrap();
        assert!((lin.trapped_fraction - sat.trapped_fraction).abs() < 1e-6);
        let dense = steady_state_oracle(0.5, 1.0, 1.0, &OracleTrap::Saturated(Box::new(ev.clone()))).unwrap();
        let c = dense.bulk_value;
        assert!((c + ev.trapped(c) - 0.5).abs() < 1e-13);
        assert!(dense.trapped_fraction < m / (1.0 + m));
    }

    #[test]
    fn power_law_recovers_exponent() {
        let xs = [1e-3, 2e-3, 4e-3, 8e-3];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 5.0 * x.powf(1.3)).collect();
        let (a, p) = power_law_fit(&xs, &ys).unwrap();
        assert!((p - 1.3).abs() < 1e-12 && (a - 5.0).abs() < 1e-10);
        assert_eq!(observed_orders(&[4.0, 1.0, 0.25]), vec![2.0, 2.0]);
    }

    #[test]
    fn crossing_interpolates() {
        let s = [(0.0, 0.0), (1.0, 0.5), (2.0, 1.0)];
        assert_eq!(threshold_crossing(&s, 0.75), Some(1.5));
        assert_eq!(threshold_crossing(&s, 2.0), None);
    }

    #[test]
    fn misaligned_runs_are_rejected() {
        let ic = GaussianIC { v0: 1e-6, sigma: 0.1, x_m: 0.5, y_m: 0.0 };
        let setup = ComparisonSetup::new(3.0, 0.05, 5e-3, 0.01, ic);
        let full = setup.full_config().unwrap();
        let mut ms = setup.multiscale_config().unwrap();
        ms.dt = 2e-3;
        assert!(matches!(compare_runs_1d(full, ms), Err(Error::Alignment(_))));
    }

    #[test]
    fn small_comparison_is_consistent() {
        let ic = GaussianIC { v0: 1e-6, sigma: 0.1, x_m: 0.5, y_m: 0.0 };
        let setup = ComparisonSetup::new(3.0, 0.02, 1e-3, 0.02, ic);
        let r = compare_models_1d(&setup).unwrap();
        assert_eq!(r.times.len(), 21);
        assert!(r.e_s.iter().chain(&r.e_b).all(|&e| e >= 0.0 && e.is_finite()));
        assert!(r.e_s[0] < 1e-4, "{}", r.e_s[0]);
        assert!(r.final_error > 0.0 && r.final_error < 0.5);
    }
}
