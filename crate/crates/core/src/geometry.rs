//! Grids and the implicit circular bubble.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Uniform cell-centered partition of `[x_left, x_right]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval1D {
    pub x_left: f64,
    pub x_right: f64,
    pub n_cells: usize,
    pub h: f64,
}

impl Interval1D {
    pub fn new(x_left: f64, x_right: f64, n_cells: usize) -> Result<Self> {
        if n_cells == 0 || !(x_right > x_left) {
            return Err(Error::Config(format!(
                "interval [{x_left}, {x_right}] with {n_cells} cells is empty"
            )));
        }
        Ok(Self { x_left, x_right, n_cells, h: (x_right - x_left) / n_cells as f64 })
    }

    /// Interval with spacing as close to `h` as an integer cell count allows.
    pub fn with_spacing(x_left: f64, x_right: f64, h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::Config(format!("cell width must be > 0, got {h}")));
        }
        let n = ((x_right - x_left) / h).round().max(1.0) as usize;
        Self::new(x_left, x_right, n)
    }

    /// Center of cell `i`, zero-based.
    pub fn center(&self, i: usize) -> f64 {
        self.x_left + (i as f64 + 0.5) * self.h
    }

    pub fn face(&self, i: usize) -> f64 {
        self.x_left + i as f64 * self.h
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_cells).map(|i| self.center(i)).collect()
    }

    pub fn length(&self) -> f64 {
        self.x_right - self.x_left
    }
}

/// Square `[-a, a]^2` split into `N x N` cells of width `h = 2a / N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartesianGrid2D {
    pub half_width: f64,
    pub n: usize,
    pub h: f64,
}

impl CartesianGrid2D {
    pub fn new(half_width: f64, n: usize) -> Result<Self> {
        if n == 0 || !(half_width > 0.0) {
            return Err(Error::Config(format!("grid needs a > 0 and N > 0, got a={half_width}, N={n}")));
        }
        Ok(Self { half_width, n, h: 2.0 * half_width / n as f64 })
    }

    pub fn center(&self, i: usize, j: usize) -> (f64, f64) {
        let a = self.half_width;
        (-a + (i as f64 + 0.5) * self.h, -a + (j as f64 + 0.5) * self.h)
    }

    /// Row-major linear index, `i` along x.
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.n + i
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// The four edge neighbors that exist, as `(i, j)`.
    pub fn neighbors(&self, i: usize, j: usize) -> impl Iterator<Item = (usize, usize)> {
        let n = self.n as isize;
        let (ii, jj) = (i as isize, j as isize);
        [(ii - 1, jj), (ii + 1, jj), (ii, jj - 1), (ii, jj + 1)]
            .into_iter()
            .filter(move |&(a, b)| a >= 0 && b >= 0 && a < n && b < n)
            .map(|(a, b)| (a as usize, b as usize))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleLevelSet {
    pub center: (f64, f64),
    pub radius: f64,
}

impl CircleLevelSet {
    pub fn new(center: (f64, f64), radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::Config(format!("bubble radius must be > 0, got {radius}")));
        }
        Ok(Self { center, radius })
    }

    /// Signed distance: negative inside the bubble.
    pub fn phi(&self, x: f64, y: f64) -> f64 {
        (x - self.center.0).hypot(y - self.center.1) - self.radius
    }

    pub fn curvature(&self) -> f64 {
        1.0 / self.radius
    }

    pub fn point_at(&self, theta: f64) -> (f64, f64) {
        (self.center.0 + self.radius * theta.cos(), self.center.1 + self.radius * theta.sin())
    }

    pub fn perimeter(&self) -> f64 {
        2.0 * PI * self.radius
    }
}

/// Orthogonal projection onto the circle and the local frame there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub point: (f64, f64),
    /// Unit normal pointing from the bubble into the fluid.
    pub normal: (f64, f64),
    /// Angle in `[0, 2 pi)`.
    pub theta: f64,
    pub curvature: f64,
}

pub fn project_to_boundary(ls: &CircleLevelSet, point: (f64, f64)) -> Result<Projection> {
    let (dx, dy) = (point.0 - ls.center.0, point.1 - ls.center.1);
    let r = dx.hypot(dy);
    if r == 0.0 {
        return Err(Error::Domain("projection of the bubble center is undefined".into()));
    }
    let normal = (dx / r, dy / r);
    let theta = dy.atan2(dx).rem_euclid(2.0 * PI);
    Ok(Projection {
        point: (ls.center.0 + ls.radius * normal.0, ls.center.1 + ls.radius * normal.1),
        normal,
        theta,
        curvature: ls.curvature(),
    })
}

/// Parameters in `(0, 1)` where the segment `p -> q` meets the origin-centered
/// circle of radius `rho`.
pub fn segment_circle_crossings(p: (f64, f64), q: (f64, f64), rho: f64) -> Vec<f64> {
    let (dx, dy) = (q.0 - p.0, q.1 - p.1);
    let a = dx * dx + dy * dy;
    let b = 2.0 * (p.0 * dx + p.1 * dy);
    let c = p.0 * p.0 + p.1 * p.1 - rho * rho;
    let disc = b * b - 4.0 * a * c;
    if a == 0.0 || disc <= 0.0 {
        return vec![];
    }
    let sq = disc.sqrt();
    [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)]
        .into_iter()
        .filter(|&t| t > 1e-12 && t < 1.0 - 1e-12)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellLabel {
    Inside,
    Ghost,
    Inactive,
}

impl CellLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            CellLabel::Inside => "inside",
            CellLabel::Ghost => "ghost",
            CellLabel::Inactive => "inactive",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GhostPoint {
    pub i: usize,
    pub j: usize,
    pub projection: Projection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointClassification {
    pub grid: CartesianGrid2D,
    pub level_set: CircleLevelSet,
    pub labels: Vec<CellLabel>,
    pub ghosts: Vec<GhostPoint>,
}

impl PointClassification {
    pub fn label(&self, i: usize, j: usize) -> CellLabel {
        self.labels[self.grid.index(i, j)]
    }

    pub fn count(&self, label: CellLabel) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Largest angular gap between consecutive ghost projections.
    pub fn max_angle_gap(&self) -> f64 {
        let mut angles: Vec<f64> = self.ghosts.iter().map(|g| g.projection.theta).collect();
        if angles.is_empty() {
            return 2.0 * PI;
        }
        angles.sort_by(f64::total_cmp);
        let wrap = angles[0] + 2.0 * PI - angles[angles.len() - 1];
        angles.windows(2).map(|w| w[1] - w[0]).fold(wrap, f64::max)
    }

    /// One row per cell: `i,j,x,y,label,theta_proj` (empty angle off the ghost set).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,j,x,y,label,theta_proj\n");
        let mut theta = vec![None; self.grid.len()];
        for g in &self.ghosts {
            theta[self.grid.index(g.i, g.j)] = Some(g.projection.theta);
        }
        for j in 0..self.grid.n {
            for i in 0..self.grid.n {
                let (x, y) = self.grid.center(i, j);
                let k = self.grid.index(i, j);
                let t = theta[k].map(|t| format!("{t:.16e}")).unwrap_or_default();
                let _ = writeln!(out, "{i},{j},{x:.16e},{y:.16e},{},{t}", self.labels[k].as_str());
            }
        }
        out
    }
}

/// Label every cell as fluid (`Inside`), `Ghost` or `Inactive`.
///
/// A bubble too small to contain any cell center leaves the grid entirely
/// fluid. Otherwise the circle must satisfy `h < R / 4` and `R + 4h < a`.
pub fn classify(grid: &CartesianGrid2D, ls: &CircleLevelSet) -> Result<PointClassification> {
    let n = grid.n;
    let in_bubble: Vec<bool> = (0..grid.len())
        .map(|k| {
            let (x, y) = grid.center(k % n, k / n);
            ls.phi(x, y) < 0.0
        })
        .collect();
    if in_bubble.iter().any(|&b| b) {
        if !(grid.h < ls.radius / 4.0) {
            return Err(Error::Config(format!(
                "grid spacing {} does not resolve bubble radius {} (need h < R/4)",
                grid.h, ls.radius
            )));
        }
        let reach = ls.radius + 4.0 * grid.h;
        let (cx, cy) = ls.center;
        let a = grid.half_width;
        if cx - reach < -a || cx + reach > a || cy - reach < -a || cy + reach > a {
            return Err(Error::Config(format!(
                "bubble plus a 4h margin leaves the box (R + 4h = {reach}, a = {a})"
            )));
        }
    }
    let mut labels = vec![CellLabel::Inside; grid.len()];
    let mut ghosts = Vec::new();
    for j in 0..n {
        for i in 0..n {
            let k = grid.index(i, j);
            if !in_bubble[k] {
                continue;
            }
            let touches_fluid = grid.neighbors(i, j).any(|(a, b)| !in_bubble[grid.index(a, b)]);
            if touches_fluid {
                labels[k] = CellLabel::Ghost;
                let projection = project_to_boundary(ls, grid.center(i, j))?;
                ghosts.push(GhostPoint { i, j, projection });
            } else {
                labels[k] = CellLabel::Inactive;
            }
        }
    }
    Ok(PointClassification { grid: *grid, level_set: *ls, labels, ghosts })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StencilOrder {
    Biquadratic,
    Bilinear,
}

/// Interpolation template at a ghost projection: cell indices with weights
/// giving the value and the normal derivative there.
#[derive(Debug, Clone, PartialEq)]
pub struct GhostStencil {
    pub points: Vec<(usize, usize)>,
    pub value_weights: Vec<f64>,
    pub normal_weights: Vec<f64>,
    pub order: StencilOrder,
}

impl GhostStencil {
    pub fn value(&self, field: impl Fn(usize, usize) -> f64) -> f64 {
        self.points.iter().zip(&self.value_weights).map(|(&(i, j), w)| w * field(i, j)).sum()
    }

    pub fn normal_derivative(&self, field: impl Fn(usize, usize) -> f64) -> f64 {
        self.points.iter().zip(&self.normal_weights).map(|(&(i, j), w)| w * field(i, j)).sum()
    }
}

/// Lagrange weights and their derivatives at `x` for the nodes `xs`.
fn lagrange(xs: &[f64], x: f64) -> (Vec<f64>, Vec<f64>) {
    let m = xs.len();
    let mut w = vec![0.0; m];
    let mut dw = vec![0.0; m];
    for k in 0..m {
        let mut val = 1.0;
        let mut der = 0.0;
        for l in 0..m {
            if l == k {
                continue;
            }
            let denom = xs[k] - xs[l];
            // product rule, accumulated factor by factor
            der = der * (x - xs[l]) / denom + val / denom;
            val *= (x - xs[l]) / denom;
        }
        w[k] = val;
        dw[k] = der;
    }
    (w, dw)
}

/// Start offsets to try along one axis for a patch of `width` cells, the
/// upwind (fluid-side) choice first.
fn axis_starts(idx: usize, normal: f64, width: usize, n: usize) -> Vec<usize> {
    let idx = idx as isize;
    let w = width as isize;
    let mut starts: Vec<isize> = if width == 3 {
        if normal.abs() < 0.38 {
            vec![idx - 1, if normal >= 0.0 { idx } else { idx - 2 }, if normal >= 0.0 { idx - 2 } else { idx }]
        } else if normal > 0.0 {
            vec![idx, idx - 1, idx - 2]
        } else {
            vec![idx - 2, idx - 1, idx]
        }
    } else if normal >= 0.0 {
        vec![idx, idx - 1]
    } else {
        vec![idx - 1, idx]
    };
    starts.retain(|&s| s >= 0 && s + w <= n as isize);
    starts.dedup();
    starts.into_iter().map(|s| s as usize).collect()
}

fn build_stencil(
    cls: &PointClassification,
    g: &GhostPoint,
    width: usize,
) -> Option<GhostStencil> {
    let grid = &cls.grid;
    let p = g.projection;
    for si in axis_starts(g.i, p.normal.0, width, grid.n) {
        for sj in axis_starts(g.j, p.normal.1, width, grid.n) {
            let blocked = (0..width).any(|a| {
                (0..width).any(|b| cls.label(si + a, sj + b) == CellLabel::Inactive)
            });
            if blocked {
                continue;
            }
            let xs: Vec<f64> = (0..width).map(|a| grid.center(si + a, 0).0).collect();
            let ys: Vec<f64> = (0..width).map(|b| grid.center(0, sj + b).1).collect();
            let (wx, dwx) = lagrange(&xs, p.point.0);
            let (wy, dwy) = lagrange(&ys, p.point.1);
            let mut points = Vec::with_capacity(width * width);
            let mut value_weights = Vec::with_capacity(width * width);
            let mut normal_weights = Vec::with_capacity(width * width);
            for b in 0..width {
                for a in 0..width {
                    points.push((si + a, sj + b));
                    value_weights.push(wx[a] * wy[b]);
                    normal_weights.push(p.normal.0 * dwx[a] * wy[b] + p.normal.1 * wx[a] * dwy[b]);
                }
            }
            let order = if width == 3 { StencilOrder::Biquadratic } else { StencilOrder::Bilinear };
            return Some(GhostStencil { points, value_weights, normal_weights, order });
        }
    }
    None
}

/// Biquadratic 3x3 stencil for value and normal derivative at the projection
/// of ghost `ghost_index`, avoiding inactive cells. Falls back to a bilinear
/// 2x2 patch (flagged by `order`) when no clean 3x3 patch exists.
pub fn ghost_interpolation_stencil(cls: &PointClassification, ghost_index: usize) -> Result<GhostStencil> {
    let g = cls
        .ghosts
        .get(ghost_index)
        .ok_or_else(|| Error::Domain(format!("ghost index {ghost_index} out of range")))?;
    if let Some(s) = build_stencil(cls, g, 3) {
        return Ok(s);
    }
    build_stencil(cls, g, 2).ok_or_else(|| Error::StencilDegraded {
        ghost: ghost_index,
        reason: "neither a 3x3 nor a 2x2 patch avoids inactive cells".into(),
    })
}
