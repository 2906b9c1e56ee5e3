//! Momentum balance on the dual (face-centred) cells and the Lamé sub-solver.
//!
//! Every interior face carries a dual cell of area `hx hy` spanning the two
//! adjacent cell halves. Its mass fluxes are averages of the continuity
//! fluxes, so the dual cells satisfy their own discrete mass balance. The
//! convective momentum flux upwinds the transported velocity with the
//! convective part of those fluxes; the `eps grad rho . grad v` term is the
//! matching non-conservative form built from the diffusive part. With these
//! choices multiplying by the velocity reproduces the kinetic energy balance
//! with nonnegative numerical dissipation.
//!
//! The Lamé operator `-mu lap - (mu+nu) grad div` uses pinned normal faces,
//! zero tangential shear at the walls and a Robin ghost value for friction.
//! All operator values are per unit area.

use alloc::vec;
use alloc::vec::Vec;

use crate::continuity::{cutoff_field, primal_fluxes, PrimalFluxes};
use crate::grid::{divergence, gradient, robin_trace_factor, same_grid, Grid, ScalarField, VectorField};
use crate::linsolve::{solve_spd, SolveOptions, SolveStats, SparseBuilder, SparseOperator};
use crate::{Params, Result};

#[derive(Debug, Clone, Copy)]
pub struct MomentumProblem<'a> {
    pub rho: &'a ScalarField,
    /// Current iterate; transported velocity and, for lagged friction, the wall data.
    pub v: &'a VectorField,
    pub h: &'a ScalarField,
    pub g: &'a VectorField,
    pub params: &'a Params,
}

/// How the wall friction enters the Lamé solve.
#[derive(Debug, Clone, Copy)]
pub enum FrictionMode<'a> {
    /// `f v_tau` with `v` the unknown itself; the operator stays SPD.
    Implicit,
    /// `f v_tau` taken from a given field and moved to the right-hand side.
    Lagged(&'a VectorField),
}

/// Arithmetic face average of a cell field; wall faces are zero.
pub fn face_average(p: &ScalarField) -> VectorField {
    let g = p.grid;
    let mut out = VectorField::zeros(g);
    for j in 0..g.ny {
        for a in 1..g.nx {
            out.u[g.uidx(a, j)] = 0.5 * (p.at(a - 1, j) + p.at(a, j));
        }
    }
    for b in 1..g.ny {
        for i in 0..g.nx {
            out.v[g.vidx(i, b)] = 0.5 * (p.at(i, b - 1) + p.at(i, b));
        }
    }
    out
}

/// One edge of a dual cell: outward convective and diffusive mass flux, and
/// the neighbouring face (`None` when it is a pinned wall face).
#[derive(Debug, Clone, Copy)]
struct DualEdge {
    conv: f64,
    diff: f64,
    nb: Option<usize>,
}

fn u_cell_edges(g: &Grid, f: &PrimalFluxes, a: usize, j: usize) -> [DualEdge; 4] {
    let half = |x: f64, y: f64| 0.5 * (x + y);
    let (w, c, e) = (g.uidx(a - 1, j), g.uidx(a, j), g.uidx(a + 1, j));
    let (sl, sr, nl, nr) = (g.vidx(a - 1, j), g.vidx(a, j), g.vidx(a - 1, j + 1), g.vidx(a, j + 1));
    [
        DualEdge {
            conv: half(f.conv_x[c], f.conv_x[e]),
            diff: half(f.diff_x[c], f.diff_x[e]),
            nb: (a + 1 < g.nx).then_some(e),
        },
        DualEdge { conv: -half(f.conv_x[w], f.conv_x[c]), diff: -half(f.diff_x[w], f.diff_x[c]), nb: (a > 1).then_some(w) },
        DualEdge {
            conv: half(f.conv_y[nl], f.conv_y[nr]),
            diff: half(f.diff_y[nl], f.diff_y[nr]),
            nb: (j + 1 < g.ny).then(|| g.uidx(a, j + 1)),
        },
        DualEdge {
            conv: -half(f.conv_y[sl], f.conv_y[sr]),
            diff: -half(f.diff_y[sl], f.diff_y[sr]),
            nb: (j > 0).then(|| g.uidx(a, j - 1)),
        },
    ]
}

fn v_cell_edges(g: &Grid, f: &PrimalFluxes, i: usize, b: usize) -> [DualEdge; 4] {
    let half = |x: f64, y: f64| 0.5 * (x + y);
    let (s, c, n) = (g.vidx(i, b - 1), g.vidx(i, b), g.vidx(i, b + 1));
    let (wl, wh, el, eh) = (g.uidx(i, b - 1), g.uidx(i, b), g.uidx(i + 1, b - 1), g.uidx(i + 1, b));
    [
        DualEdge {
            conv: half(f.conv_y[c], f.conv_y[n]),
            diff: half(f.diff_y[c], f.diff_y[n]),
            nb: (b + 1 < g.ny).then_some(n),
        },
        DualEdge { conv: -half(f.conv_y[s], f.conv_y[c]), diff: -half(f.diff_y[s], f.diff_y[c]), nb: (b > 1).then_some(s) },
        DualEdge {
            conv: half(f.conv_x[el], f.conv_x[eh]),
            diff: half(f.diff_x[el], f.diff_x[eh]),
            nb: (i + 1 < g.nx).then(|| g.vidx(i + 1, b)),
        },
        DualEdge {
            conv: -half(f.conv_x[wl], f.conv_x[wh]),
            diff: -half(f.diff_x[wl], f.diff_x[wh]),
            nb: (i > 0).then(|| g.vidx(i - 1, b)),
        },
    ]
}

/// Net outward mass flux of every dual cell (convective + diffusive).
pub fn dual_flux_divergence(f: &PrimalFluxes, g: &Grid) -> VectorField {
    let mut out = VectorField::zeros(*g);
    for j in 0..g.ny {
        for a in 1..g.nx {
            out.u[g.uidx(a, j)] = u_cell_edges(g, f, a, j).iter().map(|e| e.conv + e.diff).sum();
        }
    }
    for b in 1..g.ny {
        for i in 0..g.nx {
            out.v[g.vidx(i, b)] = v_cell_edges(g, f, i, b).iter().map(|e| e.conv + e.diff).sum();
        }
    }
    out
}

/// Convective term `div(K rho v (x) v)` and the `eps grad rho . grad v` term,
/// both per unit area, for transported velocity `v` and fluxes `f`.
pub fn transport_terms(f: &PrimalFluxes, v: &VectorField) -> (VectorField, VectorField) {
    let g = v.grid;
    let area = g.cell_area();
    let mut conv = VectorField::zeros(g);
    let mut eps_term = VectorField::zeros(g);
    let one = |edges: [DualEdge; 4], field: &[f64], me: usize| {
        let here = field[me];
        let mut c = 0.0;
        let mut n = 0.0;
        for e in edges {
            let there = e.nb.map_or(0.0, |k| field[k]);
            c += e.conv * if e.conv > 0.0 { here } else { there };
            n -= 0.5 * e.diff * (there - here);
        }
        (c / area, n / area)
    };
    for j in 0..g.ny {
        for a in 1..g.nx {
            let k = g.uidx(a, j);
            let (c, n) = one(u_cell_edges(&g, f, a, j), &v.u, k);
            conv.u[k] = c;
            eps_term.u[k] = n;
        }
    }
    for b in 1..g.ny {
        for i in 0..g.nx {
            let k = g.vidx(i, b);
            let (c, n) = one(v_cell_edges(&g, f, i, b), &v.v, k);
            conv.v[k] = c;
            eps_term.v[k] = n;
        }
    }
    (conv, eps_term)
}

/// The five terms of the momentum forcing, per unit area on the faces.
#[derive(Debug, Clone, PartialEq)]
pub struct Forcing {
    /// `alpha h g`.
    pub inertia_prev: VectorField,
    /// `alpha rho v`.
    pub inertia: VectorField,
    /// `div(K(rho) rho v (x) v)`.
    pub convection: VectorField,
    /// `grad P(rho)`.
    pub pressure: VectorField,
    /// `eps grad rho . grad v`.
    pub eps_term: VectorField,
}

impl Forcing {
    /// `alpha h g - alpha rho v - convection - grad P - eps term`.
    pub fn total(&self) -> VectorField {
        let mut out = self.explicit_part();
        for (o, x) in out.u.iter_mut().zip(&self.inertia.u) {
            *o -= x;
        }
        for (o, x) in out.v.iter_mut().zip(&self.inertia.v) {
            *o -= x;
        }
        out
    }

    /// The forcing with the `alpha rho v` term left out, for solves that keep
    /// it on the operator side.
    pub fn explicit_part(&self) -> VectorField {
        let mut out = self.inertia_prev.clone();
        for part in [&self.convection, &self.pressure, &self.eps_term] {
            for (o, x) in out.u.iter_mut().zip(&part.u) {
                *o -= x;
            }
            for (o, x) in out.v.iter_mut().zip(&part.v) {
                *o -= x;
            }
        }
        out
    }
}

fn scale_by(c: &VectorField, s: f64, w: &VectorField) -> VectorField {
    let mut out = c.clone();
    for (o, x) in out.u.iter_mut().zip(&w.u) {
        *o *= s * x;
    }
    for (o, x) in out.v.iter_mut().zip(&w.v) {
        *o *= s * x;
    }
    out
}

pub fn assemble_forcing(prob: &MomentumProblem<'_>) -> Result<Forcing> {
    let p = prob.params;
    let grid = prob.rho.grid;
    for other in [&prob.v.grid, &prob.h.grid, &prob.g.grid] {
        same_grid(&grid, other)?;
    }
    let alpha = p.alpha();
    let kt = cutoff_field(prob.rho, p);
    let fluxes = primal_fluxes(prob.rho, &kt, prob.v, p.eps);
    let (convection, eps_term) = transport_terms(&fluxes, prob.v);
    let pr = prob.rho.map(|r| p.modified_pressure_unchecked(r));
    Ok(Forcing {
        inertia_prev: scale_by(&face_average(prob.h), alpha, prob.g),
        inertia: scale_by(&face_average(prob.rho), alpha, prob.v),
        convection,
        pressure: gradient(&pr),
        eps_term,
    })
}

/// Friction coefficients `f c / h_normal` of the near-wall rows, where `c` is
/// the Robin ghost factor. Zero elsewhere.
pub fn friction_coefficients(grid: &Grid, params: &Params) -> VectorField {
    let g = *grid;
    let mut out = VectorField::zeros(g);
    if params.friction == 0.0 {
        return out;
    }
    let f_mu = params.friction / params.mu;
    let ky = params.friction * robin_trace_factor(f_mu, g.hy) / g.hy;
    let kx = params.friction * robin_trace_factor(f_mu, g.hx) / g.hx;
    for a in 1..g.nx {
        out.u[g.uidx(a, 0)] += ky;
        out.u[g.uidx(a, g.ny - 1)] += ky;
    }
    for b in 1..g.ny {
        out.v[g.vidx(0, b)] += kx;
        out.v[g.vidx(g.nx - 1, b)] += kx;
    }
    out
}

/// Matrix-free Lamé operator `-mu lap w - (mu+nu) grad div w`, plus the
/// implicit friction rows when `with_friction` is set. Built from the grid
/// operators rather than the assembled stencil.
pub fn apply_lame(w: &VectorField, params: &Params, with_friction: bool) -> VectorField {
    let g = w.grid;
    let mu = params.mu;
    let mut out = gradient(&divergence(w)).scaled(-(mu + params.nu));
    // -mu lap: x-second differences against pinned wall faces, y-second
    // differences with zero shear at the walls (and the mirror for v).
    for j in 0..g.ny {
        for a in 1..g.nx {
            let c = w.u[g.uidx(a, j)];
            let mut lap = (w.u[g.uidx(a + 1, j)] - 2.0 * c + w.u[g.uidx(a - 1, j)]) / (g.hx * g.hx);
            if j + 1 < g.ny {
                lap += (w.u[g.uidx(a, j + 1)] - c) / (g.hy * g.hy);
            }
            if j > 0 {
                lap += (w.u[g.uidx(a, j - 1)] - c) / (g.hy * g.hy);
            }
            out.u[g.uidx(a, j)] -= mu * lap;
        }
    }
    for b in 1..g.ny {
        for i in 0..g.nx {
            let c = w.v[g.vidx(i, b)];
            let mut lap = (w.v[g.vidx(i, b + 1)] - 2.0 * c + w.v[g.vidx(i, b - 1)]) / (g.hy * g.hy);
            if i + 1 < g.nx {
                lap += (w.v[g.vidx(i + 1, b)] - c) / (g.hx * g.hx);
            }
            if i > 0 {
                lap += (w.v[g.vidx(i - 1, b)] - c) / (g.hx * g.hx);
            }
            out.v[g.vidx(i, b)] -= mu * lap;
        }
    }
    if with_friction {
        let k = friction_coefficients(&g, params);
        for (o, (kk, x)) in out.u.iter_mut().zip(k.u.iter().zip(&w.u)) {
            *o += kk * x;
        }
        for (o, (kk, x)) in out.v.iter_mut().zip(k.v.iter().zip(&w.v)) {
            *o += kk * x;
        }
    }
    out
}

/// Packing of the interior (unpinned) faces into a solver vector: all
/// interior `u` faces row by row, then all interior `v` faces.
#[derive(Debug, Clone, Copy)]
pub struct FaceIndex {
    grid: Grid,
}

impl FaceIndex {
    pub fn new(grid: Grid) -> Self {
        FaceIndex { grid }
    }

    pub fn n_u(&self) -> usize {
        (self.grid.nx - 1) * self.grid.ny
    }

    pub fn len(&self) -> usize {
        self.n_u() + self.grid.nx * (self.grid.ny - 1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn u(&self, a: usize, j: usize) -> usize {
        j * (self.grid.nx - 1) + a - 1
    }

    #[inline]
    pub fn v(&self, i: usize, b: usize) -> usize {
        self.n_u() + (b - 1) * self.grid.nx + i
    }

    pub fn pack(&self, w: &VectorField) -> Vec<f64> {
        let g = self.grid;
        let mut out = vec![0.0; self.len()];
        for j in 0..g.ny {
            for a in 1..g.nx {
                out[self.u(a, j)] = w.u[g.uidx(a, j)];
            }
        }
        for b in 1..g.ny {
            for i in 0..g.nx {
                out[self.v(i, b)] = w.v[g.vidx(i, b)];
            }
        }
        out
    }

    pub fn unpack(&self, x: &[f64]) -> VectorField {
        let g = self.grid;
        let mut out = VectorField::zeros(g);
        for j in 0..g.ny {
            for a in 1..g.nx {
                out.u[g.uidx(a, j)] = x[self.u(a, j)];
            }
        }
        for b in 1..g.ny {
            for i in 0..g.nx {
                out.v[g.vidx(i, b)] = x[self.v(i, b)];
            }
        }
        out
    }
}

/// Assembled `diag(shift) + Lamé (+ friction)` on the interior faces.
/// `shift` is a face field (e.g. `alpha rho_D`); wall entries are ignored.
pub fn assemble_lame(grid: &Grid, params: &Params, shift: Option<&VectorField>, with_friction: bool) -> SparseOperator {
    let g = *grid;
    let ix = FaceIndex::new(g);
    let mu = params.mu;
    let lam = params.mu + params.nu;
    let (hx2, hy2, hxy) = (g.hx * g.hx, g.hy * g.hy, g.hx * g.hy);
    let fric = if with_friction { Some(friction_coefficients(&g, params)) } else { None };
    let mut b = SparseBuilder::with_capacity(ix.len(), 9 * ix.len());
    for j in 0..g.ny {
        for a in 1..g.nx {
            let k = g.uidx(a, j);
            let mut diag = 2.0 * (mu + lam) / hx2;
            if a + 1 < g.nx {
                b.add(ix.u(a + 1, j), -(mu + lam) / hx2);
            }
            if a > 1 {
                b.add(ix.u(a - 1, j), -(mu + lam) / hx2);
            }
            if j + 1 < g.ny {
                b.add(ix.u(a, j + 1), -mu / hy2);
                diag += mu / hy2;
                b.add(ix.v(a, j + 1), -lam / hxy);
                b.add(ix.v(a - 1, j + 1), lam / hxy);
            }
            if j > 0 {
                b.add(ix.u(a, j - 1), -mu / hy2);
                diag += mu / hy2;
                b.add(ix.v(a, j), lam / hxy);
                b.add(ix.v(a - 1, j), -lam / hxy);
            }
            if let Some(s) = shift {
                diag += s.u[k];
            }
            if let Some(fr) = &fric {
                diag += fr.u[k];
            }
            b.add(ix.u(a, j), diag);
            b.finish_row();
        }
    }
    for bb in 1..g.ny {
        for i in 0..g.nx {
            let k = g.vidx(i, bb);
            let mut diag = 2.0 * (mu + lam) / hy2;
            if bb + 1 < g.ny {
                b.add(ix.v(i, bb + 1), -(mu + lam) / hy2);
            }
            if bb > 1 {
                b.add(ix.v(i, bb - 1), -(mu + lam) / hy2);
            }
            if i + 1 < g.nx {
                b.add(ix.v(i + 1, bb), -mu / hx2);
                diag += mu / hx2;
                b.add(ix.u(i + 1, bb), -lam / hxy);
                b.add(ix.u(i + 1, bb - 1), lam / hxy);
            }
            if i > 0 {
                b.add(ix.v(i - 1, bb), -mu / hx2);
                diag += mu / hx2;
                b.add(ix.u(i, bb), lam / hxy);
                b.add(ix.u(i, bb - 1), -lam / hxy);
            }
            if let Some(s) = shift {
                diag += s.v[k];
            }
            if let Some(fr) = &fric {
                diag += fr.v[k];
            }
            b.add(ix.v(i, bb), diag);
            b.finish_row();
        }
    }
    b.build(true)
}

/// Solves `(diag(shift) + Lamé) w = forcing` with the given friction mode.
pub fn solve_momentum(
    forcing: &VectorField,
    shift: Option<&VectorField>,
    friction: FrictionMode<'_>,
    params: &Params,
    guess: Option<&VectorField>,
) -> Result<(VectorField, SolveStats)> {
    let g = forcing.grid;
    let ix = FaceIndex::new(g);
    let mut rhs = ix.pack(forcing);
    let implicit = match friction {
        FrictionMode::Implicit => true,
        FrictionMode::Lagged(vbc) => {
            same_grid(&g, &vbc.grid)?;
            let k = friction_coefficients(&g, params);
            let kv = ix.pack(&VectorField {
                grid: g,
                u: k.u.iter().zip(&vbc.u).map(|(a, b)| a * b).collect(),
                v: k.v.iter().zip(&vbc.v).map(|(a, b)| a * b).collect(),
            });
            for (r, x) in rhs.iter_mut().zip(&kv) {
                *r -= x;
            }
            false
        }
    };
    let op = assemble_lame(&g, params, shift, implicit);
    let x0 = guess.map(|w| ix.pack(w));
    let (x, stats) = solve_spd(&op, &rhs, x0.as_deref(), SolveOptions::with_tol(params.lin_tol))?;
    Ok((ix.unpack(&x), stats))
}

/// The Lamé solve `T`: `-mu lap w - (mu+nu) grad div w = forcing` with normal
/// faces pinned and the wall friction taken from `v_bc`.
pub fn solve_lame(forcing: &VectorField, v_bc: &VectorField, params: &Params) -> Result<(VectorField, SolveStats)> {
    solve_momentum(forcing, None, FrictionMode::Lagged(v_bc), params, None)
}

/// Momentum residual per unit area of the fully coupled equations at
/// `(rho, v)`: `alpha (rho_D v - h_D g) + convection + eps term + grad P + Lamé v`
/// with implicit friction.
pub fn momentum_residual(rho: &ScalarField, v: &VectorField, h: &ScalarField, g: &VectorField, params: &Params) -> Result<VectorField> {
    let f = assemble_forcing(&MomentumProblem { rho, v, h, g, params })?;
    let lame = apply_lame(v, params, true);
    let total = f.total();
    let mut out = lame;
    for (o, x) in out.u.iter_mut().zip(&total.u) {
        *o -= x;
    }
    for (o, x) in out.v.iter_mut().zip(&total.v) {
        *o -= x;
    }
    Ok(out)
}
