//! Functionals over solver states: energy and entropy balances, the
//! Helmholtz split, the effective viscous flux, super-level sets, time
//! interpolants and difference norms, and weak-form residuals.

use alloc::vec;
use alloc::vec::Vec;

use crate::continuity::{continuity_residual, cutoff_field};
use crate::grid::{
    boundary_tangential_trace, divergence, dot, gradient, perp_gradient_from_corners, rot_corners, same_grid, sym_grad_energy,
    Grid, ScalarField, VectorField,
};
use crate::linsolve::{solve_spd, SolveOptions, SparseBuilder};
use crate::math::{powf, sqrt, xlnx};
use crate::momentum::{apply_lame, assemble_forcing, face_average, friction_coefficients, MomentumProblem};
use crate::stepper::State;
use crate::{Error, Params, Result};

/// `1/2 sum_D |D| rho_D |v_D|^2` over the interior faces.
pub fn kinetic_energy(rho: &ScalarField, v: &VectorField) -> f64 {
    let rd = face_average(rho);
    let s: f64 = rd.u.iter().zip(&v.u).map(|(r, x)| r * x * x).sum::<f64>() + rd.v.iter().zip(&v.v).map(|(r, x)| r * x * x).sum::<f64>();
    0.5 * s * rho.grid.cell_area()
}

/// `1/(gamma-1) int rho^gamma`.
pub fn elastic_energy(rho: &ScalarField, gamma: f64) -> f64 {
    rho.values.iter().map(|&r| powf(r.max(0.0), gamma)).sum::<f64>() * rho.grid.cell_area() / (gamma - 1.0)
}

pub fn total_energy(rho: &ScalarField, v: &VectorField, gamma: f64) -> f64 {
    kinetic_energy(rho, v) + elastic_energy(rho, gamma)
}

/// `int rho ln rho` with `0 ln 0 = 0`.
pub fn entropy(rho: &ScalarField) -> f64 {
    rho.values.iter().map(|&r| xlnx(r.max(0.0))).sum::<f64>() * rho.grid.cell_area()
}

/// `dt (2 mu int |D v|^2 + nu int (div v)^2)`.
pub fn dissipation(v: &VectorField, params: &Params) -> f64 {
    let d = divergence(v).lp_norm(2.0).unwrap_or(0.0);
    params.dt * (2.0 * params.mu * sym_grad_energy(v) + params.nu * d * d)
}

/// `dt f int (v.tau)^2 dS` with the Robin wall trace.
pub fn friction_work(v: &VectorField, params: &Params) -> f64 {
    if params.friction == 0.0 {
        return 0.0;
    }
    params.dt * params.friction * boundary_tangential_trace(v, params.friction / params.mu).integral_sq()
}

/// Terms of the per-step energy balance, all multiplied by `dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyStep {
    pub kinetic_prev: f64,
    pub elastic_prev: f64,
    pub kinetic: f64,
    pub elastic: f64,
    pub dissipation: f64,
    pub friction: f64,
    /// `int [(gamma-1) rho^gamma + h^gamma - gamma rho^(gamma-1) K(rho) h] / (gamma-1)`.
    pub remainder: f64,
    /// `1/2 int h |v - g|^2`.
    pub velocity_jump: f64,
    /// Slack: energy drop minus every nonnegative loss term.
    pub margin: f64,
}

impl EnergyStep {
    pub fn passes(&self, e0: f64) -> bool {
        self.margin >= -1e-6 * e0
    }

    pub fn losses(&self) -> f64 {
        self.dissipation + self.friction + self.remainder + self.velocity_jump
    }
}

pub fn energy_inequality_check(prev: &State, cur: &State, params: &Params) -> Result<EnergyStep> {
    same_grid(&prev.rho.grid, &cur.rho.grid)?;
    let g = cur.rho.grid;
    let gamma = params.gamma;
    let kinetic_prev = kinetic_energy(&prev.rho, &prev.v);
    let elastic_prev = elastic_energy(&prev.rho, gamma);
    let kinetic = kinetic_energy(&cur.rho, &cur.v);
    let elastic = elastic_energy(&cur.rho, gamma);
    let remainder = cur
        .rho
        .values
        .iter()
        .zip(&prev.rho.values)
        .map(|(&r, &h)| params.energy_remainder(r, h))
        .sum::<f64>()
        * g.cell_area()
        / (gamma - 1.0);
    let diff = cur.v.axpy(-1.0, &prev.v)?;
    let velocity_jump = kinetic_energy(&prev.rho, &diff);
    let dissipation = dissipation(&cur.v, params);
    let friction = friction_work(&cur.v, params);
    let margin = (kinetic_prev + elastic_prev) - (kinetic + elastic) - dissipation - friction - remainder - velocity_jump;
    Ok(EnergyStep { kinetic_prev, elastic_prev, kinetic, elastic, dissipation, friction, remainder, velocity_jump, margin })
}

/// Terms of the per-step entropy inequality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyStep {
    pub entropy_prev: f64,
    pub entropy: f64,
    /// `int rho div v` at the new level.
    pub rho_div: f64,
    /// `-[(1/dt) int (rho ln rho - h ln h) + int rho div v]`.
    pub margin: f64,
}

impl EntropyStep {
    /// Pass iff `margin >= -1e-6 |rho0|_inf |Omega| / dt`.
    pub fn passes(&self, rho0_max: f64, area: f64, dt: f64) -> bool {
        self.margin >= -1e-6 * rho0_max * area / dt
    }
}

pub fn entropy_step_check(prev: &State, cur: &State, params: &Params) -> Result<EntropyStep> {
    same_grid(&prev.rho.grid, &cur.rho.grid)?;
    let entropy_prev = entropy(&prev.rho);
    let ent = entropy(&cur.rho);
    let rho_div = cur.rho.inner(&divergence(&cur.v))?;
    let margin = -((ent - entropy_prev) / params.dt + rho_div);
    Ok(EntropyStep { entropy_prev, entropy: ent, rho_div, margin })
}

/// One row of the run ledger. Step 0 is the initial level with zero step terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedgerRow {
    pub step: usize,
    pub time: f64,
    pub mass: f64,
    pub min_rho: f64,
    pub max_rho: f64,
    pub kinetic: f64,
    pub elastic: f64,
    pub dissipation: f64,
    pub friction: f64,
    pub remainder: f64,
    pub velocity_jump: f64,
    pub energy_margin: f64,
    pub entropy: f64,
    /// `dt int rho div v`.
    pub rho_div_dt: f64,
    pub entropy_margin: f64,
    pub cum_dissipation: f64,
    pub cum_friction: f64,
    pub cum_remainder: f64,
    pub cum_velocity_jump: f64,
    /// `E0 - E_n - accumulated losses`.
    pub telescoped_margin: f64,
    /// `S0 - S_n - sum dt int rho div v`.
    pub entropy_telescoped_margin: f64,
    pub mass_ok: bool,
    pub bounds_ok: bool,
    pub energy_ok: bool,
    pub entropy_ok: bool,
    pub telescoped_ok: bool,
}

impl LedgerRow {
    pub fn all_ok(&self) -> bool {
        self.mass_ok && self.bounds_ok && self.energy_ok && self.entropy_ok && self.telescoped_ok
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyLedger {
    pub e0: f64,
    pub entropy0: f64,
    pub rows: Vec<LedgerRow>,
}

impl EnergyLedger {
    /// Evaluates every balance over consecutive states of one run.
    pub fn from_states(states: &[State], params: &Params) -> Result<Self> {
        let first = states.first().ok_or(Error::Insufficient("no states"))?;
        let area = first.rho.grid.area();
        let mass0 = first.rho.integrate();
        let rho0_max = first.rho.max();
        let e0 = total_energy(&first.rho, &first.v, params.gamma);
        let s0 = entropy(&first.rho);
        let ent_tol = 1e-6 * rho0_max * area;
        let bounds = |r: &ScalarField| r.min() >= -1e-12 * params.m2 && r.max() <= params.m2 + 1e-8;
        let mut rows = Vec::with_capacity(states.len());
        rows.push(LedgerRow {
            step: first.step_index,
            time: 0.0,
            mass: mass0,
            min_rho: first.rho.min(),
            max_rho: first.rho.max(),
            kinetic: kinetic_energy(&first.rho, &first.v),
            elastic: elastic_energy(&first.rho, params.gamma),
            dissipation: 0.0,
            friction: 0.0,
            remainder: 0.0,
            velocity_jump: 0.0,
            energy_margin: 0.0,
            entropy: s0,
            rho_div_dt: 0.0,
            entropy_margin: 0.0,
            cum_dissipation: 0.0,
            cum_friction: 0.0,
            cum_remainder: 0.0,
            cum_velocity_jump: 0.0,
            telescoped_margin: 0.0,
            entropy_telescoped_margin: 0.0,
            mass_ok: true,
            bounds_ok: bounds(&first.rho),
            energy_ok: true,
            entropy_ok: true,
            telescoped_ok: true,
        });
        for (k, pair) in states.windows(2).enumerate() {
            let (prev, cur) = (&pair[0], &pair[1]);
            let e = energy_inequality_check(prev, cur, params)?;
            let s = entropy_step_check(prev, cur, params)?;
            let last = *rows.last().expect("nonempty");
            let mass = cur.rho.integrate();
            let dm = mass - last.mass;
            let mass_ok = dm <= 1e-8 && (cur.rho.max() >= params.m1 || dm.abs() <= 1e-8 * mass0);
            let cum_dissipation = last.cum_dissipation + e.dissipation;
            let cum_friction = last.cum_friction + e.friction;
            let cum_remainder = last.cum_remainder + e.remainder;
            let cum_velocity_jump = last.cum_velocity_jump + e.velocity_jump;
            let telescoped_margin = e0 - (e.kinetic + e.elastic) - cum_dissipation - cum_friction - cum_remainder - cum_velocity_jump;
            let rho_div_dt = params.dt * s.rho_div;
            let entropy_telescoped_margin = last.entropy_telescoped_margin + params.dt * s.margin;
            rows.push(LedgerRow {
                step: cur.step_index,
                time: (k + 1) as f64 * params.dt,
                mass,
                min_rho: cur.rho.min(),
                max_rho: cur.rho.max(),
                kinetic: e.kinetic,
                elastic: e.elastic,
                dissipation: e.dissipation,
                friction: e.friction,
                remainder: e.remainder,
                velocity_jump: e.velocity_jump,
                energy_margin: e.margin,
                entropy: s.entropy,
                rho_div_dt,
                entropy_margin: s.margin,
                cum_dissipation,
                cum_friction,
                cum_remainder,
                cum_velocity_jump,
                telescoped_margin,
                entropy_telescoped_margin,
                mass_ok,
                bounds_ok: bounds(&cur.rho),
                energy_ok: e.passes(e0),
                entropy_ok: s.passes(rho0_max, area, params.dt),
                telescoped_ok: telescoped_margin >= -1e-6 * e0 && entropy_telescoped_margin >= -ent_tol,
            });
        }
        Ok(EnergyLedger { e0, entropy0: s0, rows })
    }

    pub fn all_ok(&self) -> bool {
        self.rows.iter().all(LedgerRow::all_ok)
    }
}

/// Output of [`helmholtz`].
#[derive(Debug, Clone, PartialEq)]
pub struct Helmholtz {
    /// Mean-zero potential at the cells.
    pub phi: ScalarField,
    /// Stream function at the `(nx+1)(ny+1)` corners, zero on the walls.
    pub a_corners: Vec<f64>,
    /// Corner average of `A` per cell.
    pub a: ScalarField,
    pub grad_phi: VectorField,
    pub perp_a: VectorField,
    /// `|v - grad phi - grad-perp A|_2 / |v|_2`.
    pub reconstruction_error: f64,
    /// `<grad phi, grad-perp A>`.
    pub orthogonality: f64,
}

/// Splits an admissible `v` into `grad phi + grad-perp A` with
/// `div grad phi = div v` (zero-flux walls, mean-zero gauge) and
/// `lap A = rot v` (`A = 0` on the walls).
pub fn helmholtz(v: &VectorField, lin_tol: f64) -> Result<Helmholtz> {
    let g = v.grid;
    let opts = SolveOptions::with_tol(lin_tol);
    // Neumann problem for phi: (-div grad) phi = -div v, rows scaled by |K|.
    let (cx, cy) = (g.hy / g.hx, g.hx / g.hy);
    let mut b = SparseBuilder::with_capacity(g.n_cells(), 5 * g.n_cells());
    for j in 0..g.ny {
        for i in 0..g.nx {
            let mut d = 0.0;
            let mut nb = |c: usize, w: f64, b: &mut SparseBuilder| {
                b.add(c, -w);
                d += w;
            };
            if i > 0 {
                nb(g.cell(i - 1, j), cx, &mut b);
            }
            if i + 1 < g.nx {
                nb(g.cell(i + 1, j), cx, &mut b);
            }
            if j > 0 {
                nb(g.cell(i, j - 1), cy, &mut b);
            }
            if j + 1 < g.ny {
                nb(g.cell(i, j + 1), cy, &mut b);
            }
            b.add(g.cell(i, j), d);
            b.finish_row();
        }
    }
    let op = b.build(true);
    let div = divergence(v);
    let mean = div.integrate() / g.area();
    let rhs: Vec<f64> = div.values.iter().map(|d| -(d - mean) * g.cell_area()).collect();
    let (mut phi_v, _) = solve_spd(&op, &rhs, None, opts)?;
    let m = phi_v.iter().sum::<f64>() / phi_v.len() as f64;
    phi_v.iter_mut().for_each(|x| *x -= m);
    let phi = ScalarField::from_values(g, phi_v)?;
    // Dirichlet problem for A on the interior corners.
    let (mx, my) = (g.nx - 1, g.ny - 1);
    let cid = |a: usize, b: usize| (b - 1) * mx + (a - 1);
    let mut b = SparseBuilder::with_capacity(mx * my, 5 * mx * my);
    for bb in 1..g.ny {
        for a in 1..g.nx {
            let d = 2.0 * (cx + cy);
            if a > 1 {
                b.add(cid(a - 1, bb), -cx);
            }
            if a + 1 < g.nx {
                b.add(cid(a + 1, bb), -cx);
            }
            if bb > 1 {
                b.add(cid(a, bb - 1), -cy);
            }
            if bb + 1 < g.ny {
                b.add(cid(a, bb + 1), -cy);
            }
            b.add(cid(a, bb), d);
            b.finish_row();
        }
    }
    let op_a = b.build(true);
    let w = rot_corners(v);
    let rhs_a: Vec<f64> = (1..g.ny)
        .flat_map(|bb| (1..g.nx).map(move |a| (a, bb)))
        .map(|(a, bb)| -w[bb * (g.nx + 1) + a] * g.cell_area())
        .collect();
    let (a_int, _) = solve_spd(&op_a, &rhs_a, None, opts)?;
    let mut a_corners = vec![0.0; (g.nx + 1) * (g.ny + 1)];
    for bb in 1..g.ny {
        for a in 1..g.nx {
            a_corners[bb * (g.nx + 1) + a] = a_int[cid(a, bb)];
        }
    }
    let c = |a: usize, b: usize| a_corners[b * (g.nx + 1) + a];
    let a_cells = ScalarField::from_fn(g, |_, _| 0.0);
    let a_cells = ScalarField::from_values(
        g,
        (0..g.ny)
            .flat_map(|j| (0..g.nx).map(move |i| (i, j)))
            .map(|(i, j)| 0.25 * (c(i, j) + c(i + 1, j) + c(i, j + 1) + c(i + 1, j + 1)))
            .collect(),
    )
    .unwrap_or(a_cells);
    let grad_phi = gradient(&phi);
    let perp_a = perp_gradient_from_corners(g, &a_corners);
    let rest = v.axpy(-1.0, &grad_phi)?.axpy(-1.0, &perp_a)?;
    let vn = v.l2_norm();
    let reconstruction_error = if vn > 0.0 { rest.l2_norm() / vn } else { rest.l2_norm() };
    let orthogonality = grad_phi.inner(&perp_a)?;
    Ok(Helmholtz { phi, a_corners, a: a_cells, grad_phi, perp_a, reconstruction_error, orthogonality })
}

/// `G = P(rho) - (2 mu + nu) div v`, shifted so that `int G = int P(rho)`.
pub fn effective_flux(rho: &ScalarField, v: &VectorField, params: &Params) -> Result<ScalarField> {
    same_grid(&rho.grid, &v.grid)?;
    let pr = rho.map(|r| params.modified_pressure_unchecked(r.max(0.0)));
    let c = 2.0 * params.mu + params.nu;
    let mut gf = pr.zip_map(&divergence(v), |p, d| p - c * d)?;
    let shift = (pr.integrate() - gf.integrate()) / rho.grid.area();
    gf.values.iter_mut().for_each(|x| *x += shift);
    Ok(gf)
}

/// `|{rho > m}|`.
pub fn superlevel_measure(rho: &ScalarField, m: f64) -> f64 {
    rho.values.iter().filter(|&&r| r > m).count() as f64 * rho.grid.cell_area()
}

/// The states of a run with their step length; index `k` is time `k dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub dt: f64,
    pub rho: Vec<ScalarField>,
    pub v: Vec<VectorField>,
}

impl TimeSeries {
    pub fn from_states(dt: f64, states: &[State]) -> Self {
        TimeSeries { dt, rho: states.iter().map(|s| s.rho.clone()).collect(), v: states.iter().map(|s| s.v.clone()).collect() }
    }

    pub fn steps(&self) -> usize {
        self.rho.len().saturating_sub(1)
    }

    pub fn final_time(&self) -> f64 {
        self.steps() as f64 * self.dt
    }

    fn level(&self, t: f64) -> (usize, f64) {
        let m = self.steps();
        if t <= 0.0 {
            return (0, 0.0);
        }
        let x = t / self.dt;
        // floor with a guard against roundoff at the breakpoints
        let mut k = x as usize;
        if ((k + 1) as f64 - x).abs() < 1e-9 {
            k += 1;
        }
        if k >= m {
            (m, 0.0)
        } else {
            (k, t - k as f64 * self.dt)
        }
    }

    /// Piecewise-constant interpolant: `rho^k` on `[k dt, (k+1) dt)`.
    pub fn rho_hat(&self, t: f64) -> &ScalarField {
        &self.rho[self.level(t).0]
    }

    pub fn v_hat(&self, t: f64) -> &VectorField {
        &self.v[self.level(t).0]
    }

    /// Piecewise-linear interpolant between `rho^k` and `rho^(k+1)`.
    pub fn rho_tilde(&self, t: f64) -> ScalarField {
        let (k, s) = self.level(t);
        if k >= self.steps() {
            return self.rho[k].clone();
        }
        let w = s / self.dt;
        self.rho[k].zip_map(&self.rho[k + 1], |a, b| a + w * (b - a)).expect("same grid")
    }
}

/// The time-difference quantities of one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtNorms {
    /// `sum_{k=1}^M dt |rho^k|_{gamma+1}^{gamma+1}`.
    pub pressure_sum: f64,
    /// `|rho_hat - rho_hat(. - dt)|^gamma` in `L_gamma(L_gamma)` over `(0, T)`.
    pub density_increment: f64,
    /// `|rho_hat |v_hat - v_hat(. - dt)|^2|` in `L_1(L_1)` over `(0, T)`.
    pub velocity_increment: f64,
}

pub fn dt_difference_norms(ts: &TimeSeries, gamma: f64) -> Result<DtNorms> {
    let m = ts.steps();
    if m < 2 {
        return Err(Error::Insufficient("time-difference norms need at least two steps"));
    }
    let pressure_sum = (1..=m).map(|k| powf(ts.rho[k].lp_norm(gamma + 1.0).unwrap_or(0.0), gamma + 1.0)).sum::<f64>() * ts.dt;
    // On [k dt, (k+1) dt) the shifted interpolant is rho^(k-1); the first
    // interval has no predecessor and contributes nothing.
    let mut density_increment = 0.0;
    let mut velocity_increment = 0.0;
    for k in 1..m {
        let d = ts.rho[k].zip_map(&ts.rho[k - 1], |a, b| a - b)?;
        density_increment += ts.dt * powf(d.lp_norm(gamma)?, gamma);
        let dv = ts.v[k].axpy(-1.0, &ts.v[k - 1])?;
        velocity_increment += ts.dt * 2.0 * kinetic_energy(&ts.rho[k], &dv);
    }
    Ok(DtNorms { pressure_sum, density_increment, velocity_increment })
}

/// `|rho_hat_a - rho_hat_b|` in `L_gamma(0, T; L_gamma)` for two runs over the
/// same final time (e.g. `dt` and `dt/2`).
pub fn hat_distance(a: &TimeSeries, b: &TimeSeries, gamma: f64) -> Result<f64> {
    let t_end = a.final_time().min(b.final_time());
    let mut cuts: Vec<f64> = (0..=a.steps()).map(|k| k as f64 * a.dt).chain((0..=b.steps()).map(|k| k as f64 * b.dt)).collect();
    cuts.retain(|&t| t <= t_end + 1e-12);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
    let mut acc = 0.0;
    for w in cuts.windows(2) {
        let len = w[1] - w[0];
        if len <= 0.0 {
            continue;
        }
        let mid = 0.5 * (w[0] + w[1]);
        let d = a.rho_hat(mid).zip_map(b.rho_hat(mid), |x, y| x - y)?;
        acc += len * powf(d.lp_norm(gamma)?, gamma);
    }
    Ok(powf(acc, 1.0 / gamma))
}

/// Energy inequality on the interpolants: for `t` in `[0, T]`,
/// `E(rho_hat, v_hat)(t) + int_0^t (2 mu |D v_hat|^2 + nu (div v_hat)^2 + f int (v_hat.tau)^2) <= E0`.
/// Returns the smallest slack over all `t` (attained at the right ends of the
/// intervals).
pub fn interpolant_energy_margin(ts: &TimeSeries, params: &Params) -> Result<f64> {
    if ts.rho.is_empty() {
        return Err(Error::Insufficient("empty time series"));
    }
    let p = Params { dt: ts.dt, ..params.clone() };
    let e0 = total_energy(&ts.rho[0], &ts.v[0], p.gamma);
    let mut acc = 0.0;
    let mut worst = 0.0f64;
    for k in 0..ts.steps() {
        acc += dissipation(&ts.v[k], &p) + friction_work(&ts.v[k], &p);
        let e = total_energy(&ts.rho[k], &ts.v[k], p.gamma);
        worst = worst.min(e0 - e - acc);
    }
    let last = ts.steps();
    let e = total_energy(&ts.rho[last], &ts.v[last], p.gamma);
    worst = worst.min(e0 - e - acc);
    Ok(worst)
}

/// Definition-1 continuity residual for one step and a cell test function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuityWeakResidual {
    /// With the solver's upwind and `eps` fluxes.
    pub upwind: f64,
    /// With centred fluxes and no `eps` term (the physical weak form).
    pub centered: f64,
    /// `alpha |K| max(|h|, |rho|) |psi|`: the Cauchy-Schwarz bound of the
    /// time term, against which the solver tolerance is measured.
    pub scale: f64,
}

/// `int rho v . grad psi - (1/dt) int (rho - h) psi`, evaluated two ways.
pub fn weak_residual_continuity(prev: &State, cur: &State, test: &ScalarField, params: &Params) -> Result<ContinuityWeakResidual> {
    let g = cur.rho.grid;
    same_grid(&g, &prev.rho.grid)?;
    same_grid(&g, &test.grid)?;
    let kt = cutoff_field(&cur.rho, params);
    let r = continuity_residual(&cur.rho, &prev.rho, &cur.v, &kt, params);
    let upwind = -dot(&r, &test.values);
    let am = params.alpha() * g.cell_area();
    let n2 = |x: &[f64]| sqrt(dot(x, x));
    let scale = am * n2(&prev.rho.values).max(n2(&cur.rho.values)) * n2(&test.values);
    let mut centered = 0.0;
    for c in 0..g.n_cells() {
        centered -= am * (cur.rho.values[c] - prev.rho.values[c]) * test.values[c];
    }
    for j in 0..g.ny {
        for a in 1..g.nx {
            let k = g.uidx(a, j);
            let dpsi = test.at(a, j) - test.at(a - 1, j);
            let c = g.hy * cur.v.u[k] * 0.5 * (cur.rho.at(a - 1, j) + cur.rho.at(a, j));
            centered += c * dpsi;
        }
    }
    for b in 1..g.ny {
        for i in 0..g.nx {
            let k = g.vidx(i, b);
            let dpsi = test.at(i, b) - test.at(i, b - 1);
            let c = g.hx * cur.v.v[k] * 0.5 * (cur.rho.at(i, b - 1) + cur.rho.at(i, b));
            centered += c * dpsi;
        }
    }
    Ok(ContinuityWeakResidual { upwind, centered, scale })
}

/// Definition-1 momentum residual for one step and an admissible test field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentumWeakResidual {
    pub time: f64,
    pub convection: f64,
    pub pressure: f64,
    pub viscous: f64,
    pub friction: f64,
    /// The `eps grad rho . grad v` term (zero in the physical weak form).
    pub eps_term: f64,
    /// Sum of all terms: zero at a solution of the discrete equations.
    pub total: f64,
    /// `total - eps_term`, with `P` in place of `pi`.
    pub physical: f64,
    /// Largest term norm times `|phi|`, matching the solver's residual scaling.
    pub scale: f64,
}

pub fn weak_residual_momentum(prev: &State, cur: &State, test: &VectorField, params: &Params) -> Result<MomentumWeakResidual> {
    let g = cur.rho.grid;
    same_grid(&g, &prev.rho.grid)?;
    same_grid(&g, &test.grid)?;
    let f = assemble_forcing(&MomentumProblem { rho: &cur.rho, v: &cur.v, h: &prev.rho, g: &prev.v, params })?;
    let ip = |x: &VectorField| x.inner(test).expect("same grid");
    let time = ip(&f.inertia) - ip(&f.inertia_prev);
    let convection = ip(&f.convection);
    let pressure = ip(&f.pressure);
    let eps_term = ip(&f.eps_term);
    let viscous = ip(&apply_lame(&cur.v, params, false));
    let k = friction_coefficients(&g, params);
    let fr = VectorField {
        grid: g,
        u: k.u.iter().zip(&cur.v.u).map(|(a, b)| a * b).collect(),
        v: k.v.iter().zip(&cur.v.v).map(|(a, b)| a * b).collect(),
    };
    let friction = ip(&fr);
    let total = time + convection + pressure + viscous + friction + eps_term;
    let lame = apply_lame(&cur.v, params, true);
    let scale = [&f.inertia_prev, &f.inertia, &f.convection, &f.pressure, &f.eps_term, &lame]
        .iter()
        .map(|x| x.l2_norm())
        .fold(0.0, f64::max)
        * test.l2_norm();
    Ok(MomentumWeakResidual { time, convection, pressure, viscous, friction, eps_term, total, physical: total - eps_term, scale })
}

/// Time-integrated momentum residual: the per-step residuals weighted by
/// `dt psi(t_k)`. For `psi` vanishing at `0` and `T` this is the discrete
/// counterpart of the space-time weak form (summation by parts moves the
/// difference quotient onto `psi`).
pub fn weak_residual_momentum_time(
    ts: &TimeSeries,
    test: &VectorField,
    psi: impl Fn(f64) -> f64,
    params: &Params,
) -> Result<MomentumWeakResidual> {
    if ts.steps() < 1 {
        return Err(Error::Insufficient("time-integrated residual needs at least one step"));
    }
    let p = Params { dt: ts.dt, ..params.clone() };
    let mut acc = MomentumWeakResidual {
        time: 0.0,
        convection: 0.0,
        pressure: 0.0,
        viscous: 0.0,
        friction: 0.0,
        eps_term: 0.0,
        total: 0.0,
        physical: 0.0,
        scale: 0.0,
    };
    let wrap = |k: usize| State {
        rho: ts.rho[k].clone(),
        v: ts.v[k].clone(),
        step_index: k,
        eps_used: p.eps,
        report: Default::default(),
    };
    for k in 1..=ts.steps() {
        let w = ts.dt * psi(k as f64 * ts.dt);
        let r = weak_residual_momentum(&wrap(k - 1), &wrap(k), test, &p)?;
        acc.time += w * r.time;
        acc.convection += w * r.convection;
        acc.pressure += w * r.pressure;
        acc.viscous += w * r.viscous;
        acc.friction += w * r.friction;
        acc.eps_term += w * r.eps_term;
        acc.total += w * r.total;
        acc.physical += w * r.physical;
        acc.scale += w.abs() * r.scale;
    }
    Ok(acc)
}

/// Wall vorticity against the flat-wall relation `omega = -(f/mu) v.tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VorticityTrace {
    pub max_gap: f64,
    /// Root-mean-square gap over the wall samples (arc-length weighted).
    pub rms_gap: f64,
    pub max_vorticity: f64,
}

/// Extrapolates the corner vorticity linearly from the first two interior
/// corner rows to each wall and compares with `-(f/mu)` times the wall trace.
pub fn vorticity_trace_check(state: &State, params: &Params) -> VorticityTrace {
    let g = state.v.grid;
    let w = rot_corners(&state.v);
    let at = |a: usize, b: usize| w[b * (g.nx + 1) + a];
    let fm = params.friction / params.mu;
    let tr = boundary_tangential_trace(&state.v, fm);
    let mut max_gap: f64 = 0.0;
    let mut sq = 0.0;
    let mut len = 0.0;
    let mut max_vort: f64 = 0.0;
    let mut record = |omega: f64, vt: f64, weight: f64| {
        let gap = (omega + fm * vt).abs();
        max_gap = max_gap.max(gap);
        max_vort = max_vort.max(omega.abs());
        sq += weight * gap * gap;
        len += weight;
    };
    use crate::grid::Wall;
    for (n, s) in tr.samples(Wall::Bottom).iter().enumerate() {
        let a = n + 1;
        record(2.0 * at(a, 1) - at(a, 2), s.value, s.weight);
    }
    for (n, s) in tr.samples(Wall::Top).iter().enumerate() {
        let a = n + 1;
        record(2.0 * at(a, g.ny - 1) - at(a, g.ny - 2), s.value, s.weight);
    }
    for (n, s) in tr.samples(Wall::Left).iter().enumerate() {
        let b = n + 1;
        record(2.0 * at(1, b) - at(2, b), s.value, s.weight);
    }
    for (n, s) in tr.samples(Wall::Right).iter().enumerate() {
        let b = n + 1;
        record(2.0 * at(g.nx - 1, b) - at(g.nx - 2, b), s.value, s.weight);
    }
    VorticityTrace { max_gap, rms_gap: if len > 0.0 { sqrt(sq / len) } else { 0.0 }, max_vorticity: max_vort }
}

/// Dense scan of the energy remainder over `[0, m2]^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RemainderScan {
    pub points: usize,
    pub min_value: f64,
    /// Largest `delta` with `delta |rho - h|^gamma <= remainder` on the scan.
    pub delta: f64,
}

impl RemainderScan {
    pub fn nonnegative(&self) -> bool {
        self.min_value >= -1e-12
    }
}

pub fn remainder_scan(params: &Params, step: f64) -> RemainderScan {
    let n = libm::round(params.m2 / step) as usize;
    let mut min_value = f64::INFINITY;
    let mut delta = f64::INFINITY;
    for i in 0..=n {
        let rho = params.m2 * i as f64 / n as f64;
        for j in 0..=n {
            let h = params.m2 * j as f64 / n as f64;
            let r = params.energy_remainder(rho, h);
            min_value = min_value.min(r);
            if i != j {
                delta = delta.min(r / powf((rho - h).abs(), params.gamma));
            }
        }
    }
    RemainderScan { points: (n + 1) * (n + 1), min_value, delta }
}

/// `dt^(3/(1-gamma))`, the L-infinity density bound in terms of the step.
pub fn linf_dt_bound(dt: f64, gamma: f64) -> f64 {
    powf(dt, 3.0 / (1.0 - gamma))
}

/// Discrete `H^1` seminorm `|grad rho|_2`.
pub fn grad_norm(rho: &ScalarField) -> f64 {
    gradient(rho).l2_norm()
}

/// Grid for a run described by `params`.
pub fn grid_of(params: &Params) -> Result<Grid> {
    Grid::from_params(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{cos, exp, sin};
    use crate::stepper::{advance_step, run};
    use crate::testfn::{random_scalar, random_vector, SeededRng};
    use core::f64::consts::PI;

    fn params(n: usize) -> Params {
        let h = 1.0 / n as f64;
        Params { nx: n, ny: n, eps: h * h, ..Params::default() }
    }

    fn bump_state(p: &Params) -> State {
        let g = Grid::from_params(p).unwrap();
        let rho = ScalarField::from_fn(g, |x, y| 1.0 + 0.8 * exp(-((x - 0.45) * (x - 0.45) + (y - 0.5) * (y - 0.5)) / 0.03));
        State::initial(rho, VectorField::zeros(g), p).unwrap()
    }

    #[test]
    fn equilibrium_pair_has_zero_margins() {
        let p = params(8);
        let g = Grid::from_params(&p).unwrap();
        let s = State::initial(ScalarField::constant(g, 1.5), VectorField::zeros(g), &p).unwrap();
        let e = energy_inequality_check(&s, &s, &p).unwrap();
        assert!(e.margin.abs() <= 1e-15, "{e:?}");
        let h = entropy_step_check(&s, &s, &p).unwrap();
        assert_eq!(h.margin, 0.0);
    }

    #[test]
    fn solver_steps_satisfy_energy_and_entropy_inequalities() {
        let mut p = params(16);
        p.friction = 1.0;
        let s0 = bump_state(&p);
        let out = run(s0, 3, &p);
        assert!(out.failure.is_none(), "{:?}", out.failure);
        let ledger = EnergyLedger::from_states(&out.states, &p).unwrap();
        for r in &ledger.rows {
            assert!(r.all_ok(), "{r:?}");
            assert!(r.energy_margin >= -1e-12, "{}", r.energy_margin);
        }
        // corrupt the last state: doubling the velocity injects energy
        let mut bad = out.states[3].clone();
        bad.v = bad.v.scaled(2.0);
        let e = energy_inequality_check(&out.states[2], &bad, &p).unwrap();
        assert!(!e.passes(ledger.e0));
    }

    #[test]
    fn helmholtz_split_of_gradient_and_rotational_fields() {
        let g = Grid::unit_square(32);
        let pot = ScalarField::from_fn(g, |x, y| cos(PI * x) * cos(PI * y));
        let v = gradient(&pot);
        let hz = helmholtz(&v, 1e-12).unwrap();
        let total = v.l2_norm().powi(2);
        assert!(hz.perp_a.l2_norm().powi(2) <= 1e-8 * total);
        let mean = pot.integrate();
        let d = hz.phi.zip_map(&pot, |a, b| a - (b - mean)).unwrap();
        assert!(d.max() - d.min() <= 1e-8);
        // stream-function field
        let a: Vec<f64> = (0..=g.ny)
            .flat_map(|b| (0..=g.nx).map(move |a| (a, b)))
            .map(|(a, b)| if a % g.nx == 0 || b % g.ny == 0 { 0.0 } else { sin(PI * a as f64 * g.hx) * sin(PI * b as f64 * g.hy) })
            .collect();
        let v = perp_gradient_from_corners(g, &a);
        assert!(v.is_admissible());
        let hz = helmholtz(&v, 1e-12).unwrap();
        assert!(hz.grad_phi.l2_norm().powi(2) <= 1e-8 * v.l2_norm().powi(2));
    }

    #[test]
    fn helmholtz_reconstructs_random_fields() {
        let mut rng = SeededRng::new(77);
        for n in [8, 16, 32] {
            let g = Grid::unit_square(n);
            let v = random_vector(g, &mut rng);
            let hz = helmholtz(&v, 1e-12).unwrap();
            assert!(hz.reconstruction_error <= 1e-9, "{}", hz.reconstruction_error);
            assert!(hz.orthogonality.abs() <= 1e-8 * v.l2_norm().powi(2));
        }
    }

    #[test]
    fn effective_flux_identities() {
        let p = params(12);
        let g = Grid::from_params(&p).unwrap();
        let c = ScalarField::constant(g, 1.2);
        let gf = effective_flux(&c, &VectorField::zeros(g), &p).unwrap();
        for x in &gf.values {
            assert!((x - 1.2f64.powi(3)).abs() <= 1e-12);
        }
        let v = random_vector(g, &mut SeededRng::new(5));
        let gz = effective_flux(&ScalarField::zeros(g), &v, &p).unwrap();
        let expect = divergence(&v).map(|d| -2.0 * d);
        for (a, b) in gz.values.iter().zip(&expect.values) {
            assert!((a - b).abs() <= 1e-12);
        }
        assert!(gz.integrate().abs() <= 1e-12);
        let rho = random_scalar(g, &mut SeededRng::new(6)).map(|x| 1.5 + 0.5 * x);
        let gf = effective_flux(&rho, &v, &p).unwrap();
        let pint = rho.map(|r| p.modified_pressure(r).unwrap()).integrate();
        assert!((gf.integrate() - pint).abs() <= 1e-12 * pint.max(1.0));
    }

    #[test]
    fn superlevel_examples() {
        let p = params(8);
        let g = Grid::from_params(&p).unwrap();
        assert_eq!(superlevel_measure(&ScalarField::constant(g, p.m1 - 0.1), p.m1), 0.0);
        let half = ScalarField::from_fn(g, |x, _| if x < 0.5 { p.m2 } else { 1.0 });
        assert!((superlevel_measure(&half, p.m1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn dt_norms_of_a_constant_run() {
        let p = params(8);
        let g = Grid::from_params(&p).unwrap();
        let c = 1.4;
        let s = State::initial(ScalarField::constant(g, c), VectorField::zeros(g), &p).unwrap();
        let ts = TimeSeries::from_states(p.dt, &[s.clone(), s.clone(), s.clone(), s]);
        let d = dt_difference_norms(&ts, p.gamma).unwrap();
        let t = 3.0 * p.dt;
        assert!((d.pressure_sum - t * powf(c, p.gamma + 1.0)).abs() <= 1e-12);
        assert_eq!(d.density_increment, 0.0);
        assert_eq!(d.velocity_increment, 0.0);
        let short = TimeSeries { dt: p.dt, rho: ts.rho[..2].to_vec(), v: ts.v[..2].to_vec() };
        assert!(dt_difference_norms(&short, p.gamma).is_err());
    }

    #[test]
    fn interpolants_follow_definitions() {
        let g = Grid::unit_square(4);
        let r = |c: f64| ScalarField::constant(g, c);
        let ts = TimeSeries { dt: 0.5, rho: vec![r(1.0), r(2.0), r(4.0)], v: vec![VectorField::zeros(g); 3] };
        assert_eq!(ts.rho_hat(0.0).values[0], 1.0);
        assert_eq!(ts.rho_hat(0.49).values[0], 1.0);
        assert_eq!(ts.rho_hat(0.5).values[0], 2.0);
        assert_eq!(ts.rho_hat(1.0).values[0], 4.0);
        assert!((ts.rho_tilde(0.25).values[0] - 1.5).abs() < 1e-15);
        assert!((ts.rho_tilde(0.75).values[0] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn weak_residuals_vanish_on_solver_output() {
        let p = params(16);
        let s0 = bump_state(&p);
        let s1 = advance_step(&s0, &p).unwrap();
        let g = s0.rho.grid;
        let z = State::initial(ScalarField::zeros(g), VectorField::zeros(g), &p).unwrap();
        let one = ScalarField::constant(g, 1.0);
        assert_eq!(weak_residual_continuity(&z, &z, &one, &p).unwrap().upwind, 0.0);
        assert_eq!(weak_residual_momentum(&z, &z, &random_vector(g, &mut SeededRng::new(1)), &p).unwrap().total, 0.0);
        let r1 = weak_residual_continuity(&s0, &s1, &one, &p).unwrap();
        assert!(r1.centered.abs() <= 1e-8 * s0.rho.integrate() / p.dt);
        let mut rng = SeededRng::new(2024);
        for _ in 0..5 {
            let c = weak_residual_continuity(&s0, &s1, &random_scalar(g, &mut rng), &p).unwrap();
            assert!(c.upwind.abs() <= 10.0 * p.lin_tol * c.scale, "{c:?}");
            let m = weak_residual_momentum(&s0, &s1, &random_vector(g, &mut rng), &p).unwrap();
            assert!(m.total.abs() <= 10.0 * p.lin_tol * m.scale, "{m:?}");
        }
    }

    #[test]
    fn time_integrated_residual_at_equilibrium() {
        let mut p = params(8);
        p.friction = 2.0;
        let g = Grid::from_params(&p).unwrap();
        let s = State::initial(ScalarField::constant(g, 1.0), VectorField::zeros(g), &p).unwrap();
        let out = run(s, 4, &p);
        let ts = TimeSeries::from_states(p.dt, &out.states);
        let test = VectorField::from_fn(g, |_, _| 1.0, |_, _| 0.0);
        let t_end = ts.final_time();
        let r = weak_residual_momentum_time(&ts, &test, |t| sin(PI * t / t_end), &p).unwrap();
        assert_eq!(r.friction, 0.0);
        assert_eq!(r.total, 0.0);
    }

    #[test]
    fn vorticity_trace_of_rest_is_zero() {
        let p = params(8);
        let g = Grid::from_params(&p).unwrap();
        let s = State::initial(ScalarField::constant(g, 1.0), VectorField::zeros(g), &p).unwrap();
        let v = vorticity_trace_check(&s, &p);
        assert_eq!(v.max_gap, 0.0);
    }

    #[test]
    fn remainder_is_nonnegative_with_positive_delta() {
        let p = Params::default();
        let scan = remainder_scan(&p, 0.05);
        assert!(scan.nonnegative(), "{scan:?}");
        assert!(scan.delta > 0.0);
    }
}
