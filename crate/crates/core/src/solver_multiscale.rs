//! Reduced model: pure diffusion in the bulk, with the trap layer collapsed
//! into a dynamic boundary condition carrying the capacity `M`.
//!
//! Both dimensions share one discretization. The unknowns are bulk cell
//! values plus a set of surface nodes that carry the boundary concentration.
//! Every exchange (cell to cell, cell to node, node to node along the
//! surface) is a symmetric conductance, so the semi-discrete system reads
//!
//! ```text
//! w_i dc_i/dt        = -(L c)_i          bulk cells, w_i = cell area
//! s_f dC_f/dt        = -(L c)_f          surface nodes, C_f = M(c_f) c_f
//! ```
//!
//! with `L` a weighted graph Laplacian. Node-to-node conductances are scaled
//! by the capacity, which gives the `M D` surface diffusion term. The
//! conserved quantity is `sum w_i c_i + sum s_f C_f`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::{classify, segment_circle_crossings, CartesianGrid2D, CellLabel, CircleLevelSet, Interval1D};
use crate::linalg::{pcg, CsrMatrix, Preconditioner, Tridiagonal};
use crate::potential::{CapacityEvaluator, PotentialSpec};
use crate::quadrature::QuadratureConfig;
use crate::solver_full::{step_plan, GaussianIC};

const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX: usize = 30;
const CG_TOL: f64 = 1e-12;
const CG_MAX: usize = 50_000;
const INVERT_TOL: f64 = 1e-14;

/// How the boundary stores particles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrapModel {
    /// `C = m c`.
    Linear { m: f64 },
    /// `C = M(c) c` with the saturated capacity of `spec`.
    Saturated { spec: PotentialSpec },
}

impl TrapModel {
    fn build(&self) -> Result<TrapLaw> {
        match *self {
            TrapModel::Linear { m } => {
                if !(m >= 0.0) || !m.is_finite() {
                    return Err(Error::Config(format!("trap capacity M must be >= 0, got {m}")));
                }
                Ok(TrapLaw::Linear(m))
            }
            TrapModel::Saturated { spec } => {
                let quad = QuadratureConfig { rel_tol: 1e-12, ..QuadratureConfig::default() };
                let ev = CapacityEvaluator::new(&spec, &quad)?;
                ev.check_monotone(200)?;
                Ok(TrapLaw::Saturated(Box::new(ev)))
            }
        }
    }
}

#[derive(Debug, Clone)]
enum TrapLaw {
    Linear(f64),
    Saturated(Box<CapacityEvaluator>),
}

impl TrapLaw {
    fn capacity(&self, c: f64) -> f64 {
        match self {
            TrapLaw::Linear(m) => *m,
            TrapLaw::Saturated(ev) => ev.capacity(c),
        }
    }

    fn trapped(&self, c: f64) -> f64 {
        match self {
            TrapLaw::Linear(m) => m * c,
            TrapLaw::Saturated(ev) => ev.trapped(c),
        }
    }

    fn slope(&self, c: f64) -> f64 {
        match self {
            TrapLaw::Linear(m) => *m,
            TrapLaw::Saturated(ev) => ev.trapped_slope(c),
        }
    }
}

/// Conductance graph plus state. Shared by the 1D and 2D solvers.
#[derive(Debug, Clone)]
struct Network {
    law: TrapLaw,
    /// Cell area per unknown, zero for surface nodes.
    weight: Vec<f64>,
    /// Unknown index of each surface node.
    nodes: Vec<usize>,
    node_weight: Vec<f64>,
    edges: Vec<(usize, usize, f64)>,
    /// Node-local pairs with the conductance before scaling by the capacity.
    surface: Vec<(usize, usize, f64)>,
    banded: bool,
    c: Vec<f64>,
    trapped: Vec<f64>,
    t: f64,
    steps: usize,
    cg_iterations: usize,
    pattern: Option<Pattern>,
    /// State one step back, for the extrapolated initial guess.
    previous: Option<Vec<f64>>,
}

/// Sparsity pattern of `diag + s L`, built once and refilled per solve.
#[derive(Debug, Clone)]
struct Pattern {
    matrix: CsrMatrix,
    diag: Vec<usize>,
    // (a,a), (b,b), (a,b), (b,a) for every conductance, in `conductances` order
    edges: Vec<[usize; 4]>,
}

impl Pattern {
    fn new(n: usize, cond: &[(usize, usize, f64)]) -> Self {
        let mut trip: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, i, 0.0)).collect();
        for &(a, b, _) in cond {
            trip.push((a, b, 0.0));
            trip.push((b, a, 0.0));
        }
        let matrix = CsrMatrix::from_triplets(n, trip);
        let at = |r, c| matrix.position(r, c).expect("entry in pattern");
        let diag = (0..n).map(|i| at(i, i)).collect();
        let edges = cond.iter().map(|&(a, b, _)| [at(a, a), at(b, b), at(a, b), at(b, a)]).collect();
        Self { matrix, diag, edges }
    }
}

impl Network {
    fn len(&self) -> usize {
        self.weight.len()
    }

    fn sync_trapped(&mut self) {
        self.trapped = self.nodes.iter().map(|&k| self.law.trapped(self.c[k])).collect();
    }

    fn bulk_mass(&self) -> f64 {
        self.weight.iter().zip(&self.c).map(|(w, c)| w * c).sum()
    }

    fn trapped_total(&self) -> f64 {
        self.node_weight.iter().zip(&self.trapped).map(|(s, c)| s * c).sum()
    }

    fn conductances(&self, mid: &[f64]) -> Vec<(usize, usize, f64)> {
        let mut all = self.edges.clone();
        for &(a, b, g) in &self.surface {
            let (ka, kb) = (self.nodes[a], self.nodes[b]);
            let m = match &self.law {
                TrapLaw::Linear(m) => *m,
                law => 0.5 * (law.capacity(mid[ka]) + law.capacity(mid[kb])),
            };
            all.push((ka, kb, m * g));
        }
        all
    }

    fn laplacian(n: usize, cond: &[(usize, usize, f64)], u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for &(a, b, g) in cond {
            let f = g * (u[a] - u[b]);
            out[a] += f;
            out[b] -= f;
        }
        out
    }

    /// `(diag + s L) x = rhs`, warm-started from `guess`.
    fn solve(&mut self, diag: &[f64], s: f64, cond: &[(usize, usize, f64)], rhs: &[f64], guess: &[f64]) -> Result<Vec<f64>> {
        let n = self.len();
        if self.banded {
            let mut m = Tridiagonal::zeros(n);
            m.diag.copy_from_slice(diag);
            for &(a, b, g) in cond {
                let (lo, hi) = (a.min(b), a.max(b));
                if hi != lo + 1 {
                    return Err(Error::LinearSolve(format!("edge ({a}, {b}) breaks the band")));
                }
                m.diag[lo] += s * g;
                m.diag[hi] += s * g;
                m.upper[lo] -= s * g;
                m.lower[hi] -= s * g;
            }
            return m.solve(rhs);
        }
        let pattern = self.pattern.get_or_insert_with(|| Pattern::new(n, cond));
        let Pattern { matrix, diag: dpos, edges } = pattern;
        matrix.vals.iter_mut().for_each(|v| *v = 0.0);
        for (i, &d) in diag.iter().enumerate() {
            matrix.vals[dpos[i]] += d;
        }
        for (&(_, _, g), pos) in cond.iter().zip(edges.iter()) {
            matrix.vals[pos[0]] += s * g;
            matrix.vals[pos[1]] += s * g;
            matrix.vals[pos[2]] -= s * g;
            matrix.vals[pos[3]] -= s * g;
        }
        let mut x = guess.to_vec();
        let out = pcg(matrix, rhs, &mut x, CG_TOL, CG_MAX, Preconditioner::Mic { omega: 1.0 })?;
        self.cg_iterations += out.iterations;
        Ok(x)
    }

    /// One theta step; Newton on the node storage law.
    fn advance(&mut self, dt: f64, theta: f64, guess: Option<Vec<f64>>) -> Result<()> {
        let n = self.len();
        let old = self.c.clone();
        let old_trapped = self.trapped.clone();
        let linear = matches!(self.law, TrapLaw::Linear(_));
        let mut iterate = guess.unwrap_or_else(|| old.clone());
        let mut cond = Vec::new();
        let mut lap_old = Vec::new();
        let mut converged = false;
        let mut change = f64::INFINITY;
        for it in 0..NEWTON_MAX {
            let mid: Vec<f64> = old.iter().zip(&iterate).map(|(a, b)| (1.0 - theta) * a + theta * b).collect();
            if it == 0 || !linear {
                cond = self.conductances(&mid);
                lap_old = Self::laplacian(n, &cond, &old);
            }
            let mut diag = self.weight.clone();
            let mut rhs: Vec<f64> = (0..n).map(|i| self.weight[i] * old[i] - (1.0 - theta) * dt * lap_old[i]).collect();
            for (f, &k) in self.nodes.iter().enumerate() {
                let s = self.node_weight[f];
                let ck = iterate[k];
                let slope = self.law.slope(ck);
                diag[k] = s * slope;
                rhs[k] += s * (old_trapped[f] - self.law.trapped(ck) + slope * ck);
            }
            let next = self.solve(&diag, theta * dt, &cond, &rhs, &iterate)?;
            change = relative_change(&next, &iterate);
            iterate = next;
            if linear || change <= NEWTON_TOL {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Picard { iterations: NEWTON_MAX, change });
        }
        // Conservative finalization: every cell takes exactly the flux it
        // exchanged, so the mass budget closes to rounding.
        let lap_new = Self::laplacian(n, &cond, &iterate);
        let flux: Vec<f64> = (0..n).map(|i| theta * lap_new[i] + (1.0 - theta) * lap_old[i]).collect();
        let mut c = iterate.clone();
        for i in 0..n {
            if self.weight[i] > 0.0 {
                c[i] = old[i] - dt * flux[i] / self.weight[i];
            }
        }
        match &self.law {
            TrapLaw::Linear(_) => {
                self.c = c;
                self.sync_trapped();
            }
            TrapLaw::Saturated(ev) => {
                let mut trapped = old_trapped;
                for (f, &k) in self.nodes.iter().enumerate() {
                    let s = self.node_weight[f];
                    trapped[f] -= dt * flux[k] / s;
                    if trapped[f] < 0.0 {
                        return Err(Error::Bounds(trapped[f]));
                    }
                    c[k] = ev.invert(trapped[f], INVERT_TOL)?;
                }
                self.c = c;
                self.trapped = trapped;
            }
        }
        Ok(())
    }

    /// The first step is two implicit Euler half-steps, later steps are
    /// Crank-Nicolson.
    fn step(&mut self, dt: f64) -> Result<()> {
        let before = self.c.clone();
        if self.steps == 0 {
            self.advance(0.5 * dt, 1.0, None)?;
            self.advance(0.5 * dt, 1.0, None)?;
        } else {
            let guess = self.previous.as_ref().map(|p| before.iter().zip(p).map(|(c, p)| 2.0 * c - p).collect());
            self.advance(dt, 0.5, guess)?;
        }
        self.previous = Some(before);
        self.t += dt;
        self.steps += 1;
        Ok(())
    }

    fn in_well_max(&self) -> Option<f64> {
        match &self.law {
            TrapLaw::Linear(_) => None,
            TrapLaw::Saturated(ev) => Some(self.nodes.iter().map(|&k| ev.in_well_max(self.c[k])).fold(0.0, f64::max)),
        }
    }

    fn check_initial(&self) -> Result<()> {
        if matches!(self.law, TrapLaw::Saturated(_)) {
            if let Some(&c) = self.c.iter().find(|&&c| c > 1.0) {
                return Err(Error::Config(format!("saturated trap needs c <= 1, initial value {c}")));
            }
        }
        Ok(())
    }
}

fn relative_change(next: &[f64], prev: &[f64]) -> f64 {
    let scale = next.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    next.iter().zip(prev).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale
}

fn check_numerics(d: f64, dx: f64, dt: f64) -> Result<()> {
    if !(d > 0.0) {
        return Err(Error::Config(format!("diffusion coefficient must be > 0, got {d}")));
    }
    if !(dx > 0.0) || !(dt > 0.0) {
        return Err(Error::Config(format!("need dx > 0 and dt > 0, got {dx} and {dt}")));
    }
    Ok(())
}

/// Time-series sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassPoint {
    pub t: f64,
    pub bulk: f64,
    pub trapped: f64,
    /// Trapped mass over the initial total.
    pub fraction: f64,
}

pub fn mass_series_csv(series: &[MassPoint]) -> String {
    let mut out = String::from("t,bulk_mass,trapped_mass,trapped_fraction\n");
    for p in series {
        let _ = writeln!(out, "{:.16e},{:.16e},{:.16e},{:.16e}", p.t, p.bulk, p.trapped, p.fraction);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiscaleConfig1D {
    pub d: f64,
    pub trap: TrapModel,
    pub dx: f64,
    pub dt: f64,
    pub t_final: f64,
    pub ic: GaussianIC,
}

impl MultiscaleConfig1D {
    /// `D = 1`, `dt = dx`.
    pub fn new(trap: TrapModel, dx: f64, t_final: f64, ic: GaussianIC) -> Self {
        Self { d: 1.0, trap, dx, dt: dx, t_final, ic }
    }
}

/// Diffusion on `[0, 1]`, trap at `x = 0`, zero flux at `x = 1`.
///
/// The boundary unknown is `c_B = (c_0 + c_1) / 2`, the mean of the ghost and
/// first cell values, and obeys `M dc_B/dt = D (c_1 - c_0) / h`.
#[derive(Debug, Clone)]
pub struct MultiscaleSolver1D {
    pub config: MultiscaleConfig1D,
    pub grid: Interval1D,
    net: Network,
    initial_mass: f64,
}

impl MultiscaleSolver1D {
    pub fn new(config: MultiscaleConfig1D) -> Result<Self> {
        check_numerics(config.d, config.dx, config.dt)?;
        config.ic.validate()?;
        let grid = Interval1D::with_spacing(0.0, 1.0, config.dx)?;
        let (n, h, d) = (grid.n_cells, grid.h, config.d);
        let mut weight = vec![h; n + 1];
        weight[0] = 0.0;
        let mut edges = vec![(0, 1, 2.0 * d / h)];
        edges.extend((1..n).map(|i| (i, i + 1, d / h)));
        let mut net = Network {
            law: config.trap.build()?,
            weight,
            nodes: vec![0],
            node_weight: vec![1.0],
            edges,
            surface: vec![],
            banded: true,
            c: vec![0.0; n + 1],
            trapped: vec![0.0],
            t: 0.0,
            steps: 0,
            cg_iterations: 0,
            pattern: None,
            previous: None,
        };
        net.c[0] = config.ic.eval_1d(0.0);
        for i in 0..n {
            net.c[i + 1] = config.ic.eval_1d(grid.center(i));
        }
        net.check_initial()?;
        net.sync_trapped();
        let initial_mass = net.bulk_mass() + net.trapped_total();
        Ok(Self { config, grid, net, initial_mass })
    }

    /// Replace the state by cell values `c` and boundary value `c_b`.
    pub fn set_state(&mut self, c: &[f64], c_b: f64) -> Result<()> {
        if c.len() != self.grid.n_cells {
            return Err(Error::Config("concentration vector has the wrong length".into()));
        }
        self.net.c[0] = c_b;
        self.net.c[1..].copy_from_slice(c);
        self.net.check_initial()?;
        self.net.sync_trapped();
        self.initial_mass = self.total_mass();
        self.net.t = 0.0;
        self.net.previous = None;
        self.net.steps = 0;
        Ok(())
    }

    pub fn t(&self) -> f64 {
        self.net.t
    }

    pub fn steps(&self) -> usize {
        self.net.steps
    }

    pub fn centers(&self) -> Vec<f64> {
        self.grid.centers()
    }

    pub fn concentration(&self) -> Vec<f64> {
        self.net.c[1..].to_vec()
    }

    pub fn boundary_value(&self) -> f64 {
        self.net.c[0]
    }

    /// Ghost value `c_0 = 2 c_B - c_1`.
    pub fn ghost_value(&self) -> f64 {
        2.0 * self.net.c[0] - self.net.c[1]
    }

    /// Trapped line density `C_B`.
    pub fn trapped_density(&self) -> f64 {
        self.net.trapped[0]
    }

    pub fn trapped_total(&self) -> f64 {
        self.net.trapped_total()
    }

    pub fn bulk_mass(&self) -> f64 {
        self.net.bulk_mass()
    }

    pub fn total_mass(&self) -> f64 {
        self.bulk_mass() + self.trapped_total()
    }

    pub fn initial_mass(&self) -> f64 {
        self.initial_mass
    }

    /// Linear interpolation through `(0, c_B)` and the cell centers.
    pub fn sample(&self, x: f64) -> f64 {
        let h = self.grid.h;
        let n = self.grid.n_cells;
        let c = &self.net.c;
        if x <= 0.0 {
            return c[0];
        }
        if x < 0.5 * h {
            let w = x / (0.5 * h);
            return (1.0 - w) * c[0] + w * c[1];
        }
        let s = x / h - 0.5;
        let i = (s.floor() as usize).min(n - 1);
        if i + 1 >= n {
            return c[n];
        }
        let w = s - i as f64;
        (1.0 - w) * c[i + 1] + w * c[i + 2]
    }

    /// Largest in-well concentration `c_B I_L(phi, c_B)`; `None` for a linear trap.
    pub fn in_well_max(&self) -> Option<f64> {
        self.net.in_well_max()
    }

    pub fn step(&mut self, dt: f64) -> Result<()> {
        self.net.step(dt)
    }

    pub fn run(&mut self, mut observe: impl FnMut(&Self)) -> Result<()> {
        let (n, dt) = step_plan(self.config.t_final, self.config.dt);
        observe(self);
        for _ in 0..n {
            self.step(dt)?;
            observe(self);
        }
        Ok(())
    }

    pub fn mass_point(&self) -> MassPoint {
        let trapped = self.trapped_total();
        MassPoint { t: self.net.t, bulk: self.bulk_mass(), trapped, fraction: trapped / self.initial_mass }
    }

    /// `x,c` rows, starting with the boundary value at `x = 0`.
    pub fn snapshot_csv(&self) -> String {
        let mut out = String::from("x,c\n");
        let _ = writeln!(out, "{:.16e},{:.16e}", 0.0, self.net.c[0]);
        for (i, x) in self.centers().iter().enumerate() {
            let _ = writeln!(out, "{x:.16e},{:.16e}", self.net.c[i + 1]);
        }
        out
    }
}

/// Geometry of a 2D reduced run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MultiscaleGeometry2D {
    /// Box `[-a, a]^2` around a bubble of radius `R` centered at the origin.
    Bubble { half_width: f64, radius: f64 },
    /// `[0, 1]^2` with the trap on `x = 0`.
    Slab { dy: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiscaleConfig2D {
    pub d: f64,
    pub trap: TrapModel,
    pub geometry: MultiscaleGeometry2D,
    pub dx: f64,
    pub dt: f64,
    pub t_final: f64,
    pub ic: GaussianIC,
}

impl MultiscaleConfig2D {
    pub fn new(trap: TrapModel, geometry: MultiscaleGeometry2D, dx: f64, t_final: f64, ic: GaussianIC) -> Self {
        Self { d: 1.0, trap, geometry, dx, dt: dx, t_final, ic }
    }
}

/// One surface node of the 2D solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceNode {
    /// Angle on the bubble, or `y` on the slab wall.
    pub coord: f64,
    pub point: (f64, f64),
    /// Bulk unknown the node exchanges with.
    pub cell: usize,
    /// Distance from that cell center to the node.
    pub delta: f64,
}

/// One row of the boundary profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfilePoint {
    pub coord: f64,
    pub c: f64,
    pub trapped: f64,
    /// One-sided normal derivative into the fluid.
    pub dcdn: f64,
}

/// Bulk cells on a Cartesian grid coupled to surface nodes.
///
/// On the bubble, one node sits where each segment joining a fluid cell
/// center to a neighboring in-bubble center crosses the circle. Nodes are
/// ordered by angle and joined periodically along the circle.
#[derive(Debug, Clone)]
pub struct MultiscaleSolver2D {
    pub config: MultiscaleConfig2D,
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
    pub x0: f64,
    pub y0: f64,
    /// Grid index (`j nx + i`) of each bulk unknown.
    pub cells: Vec<usize>,
    pub surface: Vec<SurfaceNode>,
    net: Network,
    initial_mass: f64,
}

impl MultiscaleSolver2D {
    pub fn new(config: MultiscaleConfig2D) -> Result<Self> {
        check_numerics(config.d, config.dx, config.dt)?;
        config.ic.validate()?;
        let law = config.trap.build()?;
        let d = config.d;
        let (nx, ny, hx, hy, x0, y0, cells, surface, mut edges, surf_edges, node_weight) = match config.geometry {
            MultiscaleGeometry2D::Slab { dy } => {
                if !(dy > 0.0) {
                    return Err(Error::Config(format!("dy must be > 0, got {dy}")));
                }
                let ix = Interval1D::with_spacing(0.0, 1.0, config.dx)?;
                let iy = Interval1D::with_spacing(0.0, 1.0, dy)?;
                let (nx, ny, hx, hy) = (ix.n_cells, iy.n_cells, ix.h, iy.h);
                let cells: Vec<usize> = (0..nx * ny).collect();
                let mut edges = Vec::new();
                let surface: Vec<SurfaceNode> = (0..ny)
                    .map(|j| SurfaceNode { coord: iy.center(j), point: (0.0, iy.center(j)), cell: j * nx, delta: 0.5 * hx })
                    .collect();
                for (f, node) in surface.iter().enumerate() {
                    edges.push((nx * ny + f, node.cell, d * hy / node.delta));
                }
                let surf_edges = (0..ny.saturating_sub(1)).map(|j| (j, j + 1, d / hy)).collect();
                (nx, ny, hx, hy, 0.0, 0.0, cells, surface, edges, surf_edges, vec![hy; ny])
            }
            MultiscaleGeometry2D::Bubble { half_width, radius } => {
                let n = (2.0 * half_width / config.dx).round().max(1.0) as usize;
                let grid = CartesianGrid2D::new(half_width, n)?;
                let circle = CircleLevelSet::new((0.0, 0.0), radius)?;
                let cls = classify(&grid, &circle)?;
                let h = grid.h;
                let mut slot = vec![usize::MAX; grid.len()];
                let mut cells = Vec::new();
                for k in 0..grid.len() {
                    if cls.labels[k] == CellLabel::Inside {
                        slot[k] = cells.len();
                        cells.push(k);
                    }
                }
                let mut raw = Vec::new();
                for &k in &cells {
                    let (i, j) = (k % n, k / n);
                    let p = grid.center(i, j);
                    for (a, b) in grid.neighbors(i, j) {
                        let q = grid.center(a, b);
                        let t = *segment_circle_crossings(p, q, radius).first().unwrap_or(&1.0);
                        if cls.label(a, b) != CellLabel::Inside {
                            let point = (p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1));
                            let coord = point.1.atan2(point.0).rem_euclid(2.0 * PI);
                            let delta = (t * h).max(0.01 * h);
                            raw.push(SurfaceNode { coord, point, cell: slot[k], delta });
                        }
                    }
                }
                raw.sort_by(|a, b| a.coord.total_cmp(&b.coord));
                let nc = cells.len();
                let mut edges = Vec::new();
                for (f, node) in raw.iter().enumerate() {
                    edges.push((nc + f, node.cell, d * h / node.delta));
                }
                let nf = raw.len();
                let min_gap = 1e-3 * h / radius;
                let gap = |f: usize| {
                    let next = if f + 1 < nf { raw[f + 1].coord } else { raw[0].coord + 2.0 * PI };
                    (next - raw[f].coord).max(min_gap)
                };
                let mut surf_edges = Vec::new();
                let mut node_weight = vec![0.0; nf];
                if nf > 1 {
                    for f in 0..nf {
                        let g = gap(f);
                        surf_edges.push((f, (f + 1) % nf, d / (radius * g)));
                        node_weight[f] += 0.5 * radius * g;
                        node_weight[(f + 1) % nf] += 0.5 * radius * g;
                    }
                }
                (n, n, h, h, -half_width, -half_width, cells, raw, edges, surf_edges, node_weight)
            }
        };
        let nc = cells.len();
        let nf = surface.len();
        let col = |k: usize| k % nx;
        let mut slot = vec![usize::MAX; nx * ny];
        for (u, &k) in cells.iter().enumerate() {
            slot[k] = u;
        }
        for (u, &k) in cells.iter().enumerate() {
            if col(k) + 1 < nx && slot[k + 1] != usize::MAX {
                edges.push((u, slot[k + 1], d * hy / hx));
            }
            if k + nx < nx * ny && slot[k + nx] != usize::MAX {
                edges.push((u, slot[k + nx], d * hx / hy));
            }
        }
        let mut weight = vec![hx * hy; nc];
        weight.extend(std::iter::repeat(0.0).take(nf));
        let mut net = Network {
            law,
            weight,
            nodes: (nc..nc + nf).collect(),
            node_weight,
            edges,
            surface: surf_edges,
            banded: false,
            c: vec![0.0; nc + nf],
            trapped: vec![0.0; nf],
            t: 0.0,
            steps: 0,
            cg_iterations: 0,
            pattern: None,
            previous: None,
        };
        for (u, &k) in cells.iter().enumerate() {
            let (x, y) = (x0 + ((k % nx) as f64 + 0.5) * hx, y0 + ((k / nx) as f64 + 0.5) * hy);
            net.c[u] = config.ic.eval_2d(x, y);
        }
        for (f, node) in surface.iter().enumerate() {
            net.c[nc + f] = config.ic.eval_2d(node.point.0, node.point.1);
        }
        net.check_initial()?;
        net.sync_trapped();
        let initial_mass = net.bulk_mass() + net.trapped_total();
        Ok(Self { config, nx, ny, hx, hy, x0, y0, cells, surface, net, initial_mass })
    }

    pub fn t(&self) -> f64 {
        self.net.t
    }

    pub fn steps(&self) -> usize {
        self.net.steps
    }

    /// Total conjugate-gradient iterations so far.
    pub fn cg_iterations(&self) -> usize {
        self.net.cg_iterations
    }

    pub fn center_of(&self, cell: usize) -> (f64, f64) {
        let k = self.cells[cell];
        (self.x0 + ((k % self.nx) as f64 + 0.5) * self.hx, self.y0 + ((k / self.nx) as f64 + 0.5) * self.hy)
    }

    /// Values on the bulk unknowns, in the order of `cells`.
    pub fn bulk_values(&self) -> &[f64] {
        &self.net.c[..self.cells.len()]
    }

    /// Boundary concentration at each surface node.
    pub fn surface_values(&self) -> &[f64] {
        &self.net.c[self.cells.len()..]
    }

    pub fn surface_weights(&self) -> &[f64] {
        &self.net.node_weight
    }

    pub fn bulk_mass(&self) -> f64 {
        self.net.bulk_mass()
    }

    pub fn trapped_total(&self) -> f64 {
        self.net.trapped_total()
    }

    pub fn total_mass(&self) -> f64 {
        self.bulk_mass() + self.trapped_total()
    }

    pub fn initial_mass(&self) -> f64 {
        self.initial_mass
    }

    /// Ratio `epsilon / R` of the dropped curvature term; `None` on the slab.
    pub fn curvature_ratio(&self, epsilon: f64) -> Option<f64> {
        match self.config.geometry {
            MultiscaleGeometry2D::Bubble { radius, .. } => Some(epsilon / radius),
            MultiscaleGeometry2D::Slab { .. } => None,
        }
    }

    pub fn in_well_max(&self) -> Option<f64> {
        self.net.in_well_max()
    }

    pub fn profile(&self) -> Vec<ProfilePoint> {
        let nc = self.cells.len();
        self.surface
            .iter()
            .enumerate()
            .map(|(f, node)| {
                let c = self.net.c[nc + f];
                ProfilePoint {
                    coord: node.coord,
                    c,
                    trapped: self.net.trapped[f],
                    dcdn: (self.net.c[node.cell] - c) / node.delta,
                }
            })
            .collect()
    }

    /// `theta,c_gamma,trapped,dcdn` rows (`y` instead of `theta` on the slab).
    pub fn profile_csv(&self) -> String {
        let coord = match self.config.geometry {
            MultiscaleGeometry2D::Bubble { .. } => "theta",
            MultiscaleGeometry2D::Slab { .. } => "y",
        };
        let mut out = format!("{coord},c_gamma,trapped,dcdn\n");
        for p in self.profile() {
            let _ = writeln!(out, "{:.16e},{:.16e},{:.16e},{:.16e}", p.coord, p.c, p.trapped, p.dcdn);
        }
        out
    }

    /// `x,y,c` rows over the fluid cells.
    pub fn snapshot_csv(&self) -> String {
        let mut out = String::from("x,y,c\n");
        for (u, c) in self.bulk_values().iter().enumerate() {
            let (x, y) = self.center_of(u);
            let _ = writeln!(out, "{x:.16e},{y:.16e},{c:.16e}");
        }
        out
    }

    pub fn step(&mut self, dt: f64) -> Result<()> {
        self.net.step(dt)
    }

    pub fn run(&mut self, mut observe: impl FnMut(&Self)) -> Result<()> {
        let (n, dt) = step_plan(self.config.t_final, self.config.dt);
        observe(self);
        for _ in 0..n {
            self.step(dt)?;
            observe(self);
        }
        Ok(())
    }

    pub fn mass_point(&self) -> MassPoint {
        let trapped = self.trapped_total();
        MassPoint { t: self.net.t, bulk: self.bulk_mass(), trapped, fraction: trapped / self.initial_mass }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ic() -> GaussianIC {
        GaussianIC { v0: 1e-6, sigma: 0.1, x_m: 0.5, y_m: 0.5 }
    }

    #[test]
    fn one_d_conserves_and_reaches_equilibrium() {
        let mut cfg = MultiscaleConfig1D::new(TrapModel::Linear { m: 3.0 }, 1e-2, 20.0, ic());
        cfg.dt = 0.05;
        let mut s = MultiscaleSolver1D::new(cfg).unwrap();
        let m0 = s.total_mass();
        let mut drift = 0.0_f64;
        s.run(|s| drift = drift.max((s.total_mass() - m0).abs() / m0)).unwrap();
        assert!(drift < 1e-13, "drift {drift}");
        let frac = s.trapped_total() / m0;
        assert!((frac - 0.75).abs() < 1e-6, "fraction {frac}");
    }

    #[test]
    fn uniform_state_is_fixed() {
        let mut s = MultiscaleSolver1D::new(MultiscaleConfig1D::new(TrapModel::Linear { m: 2.0 }, 0.02, 0.2, ic())).unwrap();
        let n = s.grid.n_cells;
        s.set_state(&vec![0.3; n], 0.3).unwrap();
        s.run(|_| {}).unwrap();
        assert!(s.concentration().iter().all(|c| (c - 0.3).abs() < 1e-14));
        assert!((s.boundary_value() - 0.3).abs() < 1e-14);
        assert!((s.ghost_value() - 0.3).abs() < 1e-14);
    }

    #[test]
    fn zero_capacity_is_reflecting() {
        let mut s = MultiscaleSolver1D::new(MultiscaleConfig1D::new(TrapModel::Linear { m: 0.0 }, 0.01, 0.1, ic())).unwrap();
        let m0 = s.total_mass();
        s.run(|_| {}).unwrap();
        assert!((s.bulk_mass() - m0).abs() < 1e-15 * m0.max(1.0));
        assert_eq!(s.trapped_total(), 0.0);
    }

    #[test]
    fn sample_interpolates_linear_data() {
        let mut s = MultiscaleSolver1D::new(MultiscaleConfig1D::new(TrapModel::Linear { m: 1.0 }, 0.1, 0.1, ic())).unwrap();
        let c: Vec<f64> = s.centers().iter().map(|x| 2.0 + x).collect();
        s.set_state(&c, 2.0).unwrap();
        for x in [0.0, 0.03, 0.2, 0.51, 0.95] {
            assert!((s.sample(x) - (2.0 + x)).abs() < 1e-14, "x = {x}");
        }
    }

    #[test]
    fn saturated_dilute_matches_linear_and_conserves() {
        let spec = PotentialSpec::new(6.0, 1e-2, 4.0).unwrap();
        let m = CapacityEvaluator::new(&spec, &QuadratureConfig::default()).unwrap().capacity(0.0);
        let tiny = GaussianIC { v0: 1e-9, ..ic() };
        let mut lin = MultiscaleSolver1D::new(MultiscaleConfig1D::new(TrapModel::Linear { m }, 0.01, 0.05, tiny)).unwrap();
        let mut sat = MultiscaleSolver1D::new(MultiscaleConfig1D::new(TrapModel::Saturated { spec }, 0.01, 0.05, tiny)).unwrap();
        lin.run(|_| {}).unwrap();
        let m0 = sat.total_mass();
        sat.run(|_| {}).unwrap();
        assert!((sat.total_mass() - m0).abs() < 1e-13 * m0);
        let rel = (sat.trapped_total() - lin.trapped_total()).abs() / lin.trapped_total();
        assert!(rel < 1e-6, "rel {rel}");
        assert!(sat.in_well_max().unwrap() < 1.0);
    }

    #[test]
    fn slab_matches_one_d_for_y_independent_data() {
        let ic1 = GaussianIC { v0: 1.0, sigma: 0.1, x_m: 0.3, y_m: 0.5 };
        let mut one = MultiscaleSolver1D::new(MultiscaleConfig1D::new(TrapModel::Linear { m: 0.5 }, 0.05, 0.1, ic1)).unwrap();
        let mut two = MultiscaleSolver2D::new(MultiscaleConfig2D::new(
            TrapModel::Linear { m: 0.5 },
            MultiscaleGeometry2D::Slab { dy: 0.1 },
            0.05,
            0.1,
            ic1,
        ))
        .unwrap();
        let n = one.grid.n_cells;
        let c: Vec<f64> = one.centers().iter().map(|&x| ic1.eval_1d(x)).collect();
        one.set_state(&c, c[0]).unwrap();
        for u in 0..two.cells.len() {
            two.net.c[u] = c[u % n];
        }
        let nc = two.cells.len();
        for f in 0..two.surface.len() {
            two.net.c[nc + f] = c[0];
        }
        two.net.sync_trapped();
        one.run(|_| {}).unwrap();
        two.run(|_| {}).unwrap();
        let c1 = one.concentration();
        for (u, v) in two.bulk_values().iter().enumerate() {
            assert!((v - c1[u % n]).abs() < 1e-10 * c1[u % n].abs().max(1.0), "cell {u}");
        }
        for v in two.surface_values() {
            assert!((v - one.boundary_value()).abs() < 1e-10 * one.boundary_value().abs().max(1.0));
        }
    }

    #[test]
    fn bubble_conserves_and_orders_nodes() {
        let bic = GaussianIC { v0: 1e-3, sigma: 0.1, x_m: 0.7, y_m: 0.0 };
        let cfg = MultiscaleConfig2D::new(
            TrapModel::Linear { m: 0.1 },
            MultiscaleGeometry2D::Bubble { half_width: 1.0, radius: 0.4 },
            0.04,
            0.04,
            bic,
        );
        let mut s = MultiscaleSolver2D::new(cfg).unwrap();
        assert!(s.surface.windows(2).all(|w| w[0].coord <= w[1].coord));
        let perimeter: f64 = s.surface_weights().iter().sum();
        assert!((perimeter - 2.0 * PI * 0.4).abs() < 1e-12);
        for node in &s.surface {
            assert!((node.point.0.hypot(node.point.1) - 0.4).abs() < 1e-12);
        }
        let m0 = s.total_mass();
        s.run(|_| {}).unwrap();
        assert!((s.total_mass() - m0).abs() < 1e-12 * m0);
        assert!(s.trapped_total() > 0.0);
        let p = s.profile();
        let peak = p.iter().max_by(|a, b| a.c.total_cmp(&b.c)).unwrap();
        assert!(peak.coord < 0.5 || peak.coord > 2.0 * PI - 0.5);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            MultiscaleSolver1D::new(MultiscaleConfig1D::new(TrapModel::Linear { m: -1.0 }, 0.01, 0.1, ic())),
            Err(Error::Config(_))
        ));
        let spec = PotentialSpec::new(6.0, 1e-2, 4.0).unwrap();
        let hot = GaussianIC { v0: 10.0, ..ic() };
        assert!(matches!(
            MultiscaleSolver1D::new(MultiscaleConfig1D::new(TrapModel::Saturated { spec }, 0.01, 0.1, hot)),
            Err(Error::Config(_))
        ));
    }
}
