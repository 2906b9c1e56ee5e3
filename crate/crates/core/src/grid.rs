//! Staggered (MAC) grid on a rectangle `[0, lx] x [0, ly]`.
//!
//! Scalars live at cell centres, the x-velocity on vertical faces and the
//! y-velocity on horizontal faces. Cell `(i, j)` has centre
//! `((i + 1/2) hx, (j + 1/2) hy)`; x-face `(a, j)` sits at `(a hx, (j + 1/2) hy)`
//! for `a = 0..=nx`; y-face `(i, b)` at `((i + 1/2) hx, b hy)` for `b = 0..=ny`.
//! All storage is row-major with `x` fastest.
//!
//! An *admissible* vector field has zero normal component on every wall face
//! (`a = 0, nx` for `u`, `b = 0, ny` for `v`); the wall condition `v . n = 0`
//! is therefore imposed exactly, as a pinned degree of freedom.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::{powf, sqrt};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub hx: f64,
    pub hy: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 4 || ny < 4 || !(lx > 0.0) || !(ly > 0.0) {
            return Err(Error::InvalidParams(vec![alloc::format!(
                "grid needs nx, ny >= 4 and positive extents (got {nx}x{ny} on {lx}x{ly})"
            )]));
        }
        Ok(Grid { nx, ny, lx, ly, hx: lx / nx as f64, hy: ly / ny as f64 })
    }

    pub fn unit_square(n: usize) -> Self {
        Grid::new(n, n, 1.0, 1.0).expect("n >= 4")
    }

    pub fn from_params(p: &crate::Params) -> Result<Self> {
        Grid::new(p.nx, p.ny, p.domain_lx, p.domain_ly)
    }

    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }

    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn n_u(&self) -> usize {
        (self.nx + 1) * self.ny
    }

    #[inline]
    pub fn n_v(&self) -> usize {
        self.nx * (self.ny + 1)
    }

    #[inline]
    pub fn cell(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn uidx(&self, a: usize, j: usize) -> usize {
        j * (self.nx + 1) + a
    }

    #[inline]
    pub fn vidx(&self, i: usize, b: usize) -> usize {
        b * self.nx + i
    }

    #[inline]
    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.hx, (j as f64 + 0.5) * self.hy)
    }

    #[inline]
    pub fn u_pos(&self, a: usize, j: usize) -> (f64, f64) {
        (a as f64 * self.hx, (j as f64 + 0.5) * self.hy)
    }

    #[inline]
    pub fn v_pos(&self, i: usize, b: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.hx, b as f64 * self.hy)
    }
}

/// Cell-centred scalar: density, pressure, potentials, effective flux.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid) -> Self {
        ScalarField { values: vec![0.0; grid.n_cells()], grid }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        ScalarField { values: vec![c; grid.n_cells()], grid }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::GridMismatch);
        }
        Ok(ScalarField { grid, values })
    }

    /// Samples `f(x, y)` at cell centres.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.n_cells());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let (x, y) = grid.cell_center(i, j);
                values.push(f(x, y));
            }
        }
        ScalarField { grid, values }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.cell(i, j)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ScalarField { grid: self.grid, values: self.values.iter().map(|&x| f(x)).collect() }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        same_grid(&self.grid, &other.grid)?;
        Ok(ScalarField {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Midpoint-rule integral over the domain.
    pub fn integrate(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_area()
    }

    /// Cell-weighted inner product.
    pub fn inner(&self, other: &ScalarField) -> Result<f64> {
        same_grid(&self.grid, &other.grid)?;
        Ok(dot(&self.values, &other.values) * self.grid.cell_area())
    }

    /// Discrete `L^q` norm; `q = f64::INFINITY` gives the max magnitude.
    pub fn lp_norm(&self, q: f64) -> Result<f64> {
        if !(q >= 1.0) {
            return Err(Error::BadExponent(q));
        }
        if q == f64::INFINITY {
            return Ok(self.values.iter().fold(0.0, |m, x| m.max(x.abs())));
        }
        let s: f64 = if q == 2.0 {
            self.values.iter().map(|x| x * x).sum()
        } else if q == 1.0 {
            self.values.iter().map(|x| x.abs()).sum()
        } else {
            self.values.iter().map(|x| powf(x.abs(), q)).sum()
        };
        let s = s * self.grid.cell_area();
        Ok(if q == 2.0 { sqrt(s) } else if q == 1.0 { s } else { powf(s, 1.0 / q) })
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }
}

/// Face-staggered vector field.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub grid: Grid,
    /// x-component on vertical faces, `(nx + 1) * ny` values.
    pub u: Vec<f64>,
    /// y-component on horizontal faces, `nx * (ny + 1)` values.
    pub v: Vec<f64>,
}

impl VectorField {
    pub fn zeros(grid: Grid) -> Self {
        VectorField { u: vec![0.0; grid.n_u()], v: vec![0.0; grid.n_v()], grid }
    }

    pub fn from_values(grid: Grid, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if u.len() != grid.n_u() || v.len() != grid.n_v() {
            return Err(Error::GridMismatch);
        }
        Ok(VectorField { grid, u, v })
    }

    /// Samples `(fu, fv)` at the face positions, wall faces included.
    pub fn from_fn_raw(grid: Grid, fu: impl Fn(f64, f64) -> f64, fv: impl Fn(f64, f64) -> f64) -> Self {
        let mut out = VectorField::zeros(grid);
        for j in 0..grid.ny {
            for a in 0..=grid.nx {
                let (x, y) = grid.u_pos(a, j);
                out.u[grid.uidx(a, j)] = fu(x, y);
            }
        }
        for b in 0..=grid.ny {
            for i in 0..grid.nx {
                let (x, y) = grid.v_pos(i, b);
                out.v[grid.vidx(i, b)] = fv(x, y);
            }
        }
        out
    }

    /// Samples at interior faces and pins the wall-normal components to zero.
    pub fn from_fn(grid: Grid, fu: impl Fn(f64, f64) -> f64, fv: impl Fn(f64, f64) -> f64) -> Self {
        let mut out = Self::from_fn_raw(grid, fu, fv);
        out.project_admissible();
        out
    }

    /// Zeroes the normal component on every wall face.
    pub fn project_admissible(&mut self) {
        let g = self.grid;
        for j in 0..g.ny {
            self.u[g.uidx(0, j)] = 0.0;
            self.u[g.uidx(g.nx, j)] = 0.0;
        }
        for i in 0..g.nx {
            self.v[g.vidx(i, 0)] = 0.0;
            self.v[g.vidx(i, g.ny)] = 0.0;
        }
    }

    pub fn is_admissible(&self) -> bool {
        let g = self.grid;
        (0..g.ny).all(|j| self.u[g.uidx(0, j)] == 0.0 && self.u[g.uidx(g.nx, j)] == 0.0)
            && (0..g.nx).all(|i| self.v[g.vidx(i, 0)] == 0.0 && self.v[g.vidx(i, g.ny)] == 0.0)
    }

    /// Face-weighted inner product (each face carries one cell area).
    pub fn inner(&self, other: &VectorField) -> Result<f64> {
        same_grid(&self.grid, &other.grid)?;
        Ok((dot(&self.u, &other.u) + dot(&self.v, &other.v)) * self.grid.cell_area())
    }

    pub fn l2_norm(&self) -> f64 {
        sqrt(dot(&self.u, &self.u) + dot(&self.v, &self.v)) * sqrt(self.grid.cell_area())
    }

    pub fn scaled(&self, s: f64) -> Self {
        VectorField {
            grid: self.grid,
            u: self.u.iter().map(|x| x * s).collect(),
            v: self.v.iter().map(|x| x * s).collect(),
        }
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &VectorField) -> Result<Self> {
        same_grid(&self.grid, &other.grid)?;
        Ok(VectorField {
            grid: self.grid,
            u: self.u.iter().zip(&other.u).map(|(a, b)| a + s * b).collect(),
            v: self.v.iter().zip(&other.v).map(|(a, b)| a + s * b).collect(),
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.u.iter().chain(&self.v).fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|x| x.is_finite())
    }
}

pub(crate) fn same_grid(a: &Grid, b: &Grid) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

/// Sequential dot product; fixed summation order keeps results reproducible.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cell-centred divergence. Uses every face value as given, so it is exact
/// for linear fields whether or not they are admissible.
pub fn divergence(v: &VectorField) -> ScalarField {
    let g = v.grid;
    let mut out = ScalarField::zeros(g);
    for j in 0..g.ny {
        for i in 0..g.nx {
            let dudx = (v.u[g.uidx(i + 1, j)] - v.u[g.uidx(i, j)]) / g.hx;
            let dvdy = (v.v[g.vidx(i, j + 1)] - v.v[g.vidx(i, j)]) / g.hy;
            out.values[g.cell(i, j)] = dudx + dvdy;
        }
    }
    out
}

/// Face gradient on interior faces; wall faces are left at zero so the result
/// is admissible and `<grad p, v> = -<p, div v>` for admissible `v`.
pub fn gradient(p: &ScalarField) -> VectorField {
    let g = p.grid;
    let mut out = VectorField::zeros(g);
    for j in 0..g.ny {
        for a in 1..g.nx {
            out.u[g.uidx(a, j)] = (p.at(a, j) - p.at(a - 1, j)) / g.hx;
        }
    }
    for b in 1..g.ny {
        for i in 0..g.nx {
            out.v[g.vidx(i, b)] = (p.at(i, b) - p.at(i, b - 1)) / g.hy;
        }
    }
    out
}

/// `int |D(v)|^2` with the normal strains at cell centres and the shear strain
/// at interior cell corners. Wall corners carry no shear: there the shear is
/// fixed by the wall condition, not by the field.
pub fn sym_grad_energy(v: &VectorField) -> f64 {
    let g = v.grid;
    let mut normal = 0.0;
    for j in 0..g.ny {
        for i in 0..g.nx {
            let dudx = (v.u[g.uidx(i + 1, j)] - v.u[g.uidx(i, j)]) / g.hx;
            let dvdy = (v.v[g.vidx(i, j + 1)] - v.v[g.vidx(i, j)]) / g.hy;
            normal += dudx * dudx + dvdy * dvdy;
        }
    }
    let mut shear = 0.0;
    for b in 1..g.ny {
        for a in 1..g.nx {
            let s = shear_rate(v, a, b);
            shear += s * s;
        }
    }
    (normal + 0.5 * shear) * g.cell_area()
}

/// `du/dy + dv/dx` at interior corner `(a, b)`.
#[inline]
fn shear_rate(v: &VectorField, a: usize, b: usize) -> f64 {
    let g = v.grid;
    let dudy = (v.u[g.uidx(a, b)] - v.u[g.uidx(a, b - 1)]) / g.hy;
    let dvdx = (v.v[g.vidx(a, b)] - v.v[g.vidx(a - 1, b)]) / g.hx;
    dudy + dvdx
}

/// Vorticity `dv/dx - du/dy` at all `(nx+1)(ny+1)` corners, row-major.
/// Wall corners take the flat-wall free-slip value 0.
pub fn rot_corners(v: &VectorField) -> Vec<f64> {
    let g = v.grid;
    let mut w = vec![0.0; (g.nx + 1) * (g.ny + 1)];
    for b in 1..g.ny {
        for a in 1..g.nx {
            let dudy = (v.u[g.uidx(a, b)] - v.u[g.uidx(a, b - 1)]) / g.hy;
            let dvdx = (v.v[g.vidx(a, b)] - v.v[g.vidx(a - 1, b)]) / g.hx;
            w[b * (g.nx + 1) + a] = dvdx - dudy;
        }
    }
    w
}

/// Vorticity averaged from the four corners of each cell.
pub fn rot(v: &VectorField) -> ScalarField {
    let g = v.grid;
    let w = rot_corners(v);
    let c = |a: usize, b: usize| w[b * (g.nx + 1) + a];
    let mut out = ScalarField::zeros(g);
    for j in 0..g.ny {
        for i in 0..g.nx {
            out.values[g.cell(i, j)] = 0.25 * (c(i, j) + c(i + 1, j) + c(i, j + 1) + c(i + 1, j + 1));
        }
    }
    out
}

/// `grad-perp A = (-dA/dy, dA/dx)` for a corner field `A` (row-major,
/// `(nx+1)(ny+1)` values). The result is admissible whenever `A` is constant
/// along each wall.
pub fn perp_gradient_from_corners(grid: Grid, a_corner: &[f64]) -> VectorField {
    let g = grid;
    let c = |a: usize, b: usize| a_corner[b * (g.nx + 1) + a];
    let mut out = VectorField::zeros(g);
    for j in 0..g.ny {
        for a in 0..=g.nx {
            out.u[g.uidx(a, j)] = -(c(a, j + 1) - c(a, j)) / g.hy;
        }
    }
    for b in 0..=g.ny {
        for i in 0..g.nx {
            out.v[g.vidx(i, b)] = (c(i + 1, b) - c(i, b)) / g.hx;
        }
    }
    out
}

/// Wall of the rectangle, listed counter-clockwise starting at `y = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Wall {
    Bottom,
    Right,
    Top,
    Left,
}

impl Wall {
    pub const ALL: [Wall; 4] = [Wall::Bottom, Wall::Right, Wall::Top, Wall::Left];
}

/// One sample of the tangential wall velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample {
    /// Position along the wall.
    pub s: f64,
    /// Arc-length weight of the sample in boundary integrals.
    pub weight: f64,
    /// `v . tau` with `tau` oriented counter-clockwise.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTrace {
    pub walls: [(Wall, Vec<TraceSample>); 4],
}

impl BoundaryTrace {
    /// `int_{dOmega} (v . tau)^2 dS`.
    pub fn integral_sq(&self) -> f64 {
        self.walls.iter().flat_map(|(_, s)| s).map(|s| s.weight * s.value * s.value).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.walls.iter().flat_map(|(_, s)| s).fold(0.0, |m, s| m.max(s.value.abs()))
    }

    pub fn samples(&self, wall: Wall) -> &[TraceSample] {
        &self.walls.iter().find(|(w, _)| *w == wall).expect("all walls present").1
    }
}

/// Ghost-cell reduction factor for the wall trace: the Robin condition
/// `mu d(v.tau)/dn + f v.tau = 0` with a ghost value half a cell outside gives
/// `trace = v_near / (1 + (f/mu) h / 2)`.
#[inline]
pub fn robin_trace_factor(f_over_mu: f64, h_normal: f64) -> f64 {
    1.0 / (1.0 + 0.5 * f_over_mu * h_normal)
}

/// Tangential velocity on the walls, sampled where the tangential faces meet
/// the wall (interior face positions; corners carry no mass) and extrapolated
/// through the Robin ghost value for friction ratio `f/mu`. With `f/mu = 0`
/// this is the nearest interior value.
pub fn boundary_tangential_trace(v: &VectorField, f_over_mu: f64) -> BoundaryTrace {
    let g = v.grid;
    let cy = robin_trace_factor(f_over_mu, g.hy);
    let cx = robin_trace_factor(f_over_mu, g.hx);
    let bottom = (1..g.nx)
        .map(|a| TraceSample { s: a as f64 * g.hx, weight: g.hx, value: cy * v.u[g.uidx(a, 0)] })
        .collect();
    let top = (1..g.nx)
        .map(|a| TraceSample { s: a as f64 * g.hx, weight: g.hx, value: -cy * v.u[g.uidx(a, g.ny - 1)] })
        .collect();
    let left = (1..g.ny)
        .map(|b| TraceSample { s: b as f64 * g.hy, weight: g.hy, value: -cx * v.v[g.vidx(0, b)] })
        .collect();
    let right = (1..g.ny)
        .map(|b| TraceSample { s: b as f64 * g.hy, weight: g.hy, value: cx * v.v[g.vidx(g.nx - 1, b)] })
        .collect();
    BoundaryTrace {
        walls: [(Wall::Bottom, bottom), (Wall::Right, right), (Wall::Top, top), (Wall::Left, left)],
    }
}
