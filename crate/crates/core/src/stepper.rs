//! One implicit time step as the fixed point `v = T(S(v), v)`, the time loop,
//! and continuation in `eps`.
//!
//! The Picard map keeps `alpha rho w` and the wall friction on the operator
//! side, so every iterate solves an SPD system; only convection, the `eps`
//! term and the pressure are lagged. The iterate is damped with `theta`.

use alloc::vec::Vec;

use crate::continuity::{continuity_residual, cutoff_field, density_bounds_report, ContinuityProblem, DensityBounds};
use crate::diagnostics::{effective_flux, superlevel_measure};
use crate::grid::{dot, gradient, same_grid, ScalarField, VectorField};
use crate::linsolve::SolveStats;
use crate::math::sqrt;
use crate::momentum::{apply_lame, assemble_forcing, face_average, solve_momentum, FrictionMode, MomentumProblem};
use crate::{continuity, Error, Params, Result};

/// Trace of one coupled step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepReport {
    pub picard_iterations: usize,
    pub rho_updates: Vec<f64>,
    pub v_updates: Vec<f64>,
    /// Relative residual of the momentum equations at the returned state.
    pub momentum_residual: f64,
    /// Relative residual of the continuity equations at the returned state.
    pub continuity_residual: f64,
    pub bounds: Option<DensityBounds>,
    pub converged: bool,
    pub density_linear_iterations: usize,
    pub lame_linear_iterations: usize,
    /// Largest final relative residual among all linear solves of the step.
    pub worst_linear_residual: f64,
}

impl StepReport {
    fn absorb(&mut self, s: &SolveStats, density: bool) {
        if density {
            self.density_linear_iterations += s.iterations;
        } else {
            self.lame_linear_iterations += s.iterations;
        }
        self.worst_linear_residual = self.worst_linear_residual.max(s.residual);
    }

    pub fn invariants_ok(&self) -> bool {
        self.bounds.is_some_and(|b| b.all_ok())
    }
}

/// One time level.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub rho: ScalarField,
    pub v: VectorField,
    pub step_index: usize,
    pub eps_used: f64,
    pub report: StepReport,
}

impl State {
    /// Initial level; the velocity is projected to admissibility.
    pub fn initial(rho: ScalarField, mut v: VectorField, params: &Params) -> Result<Self> {
        same_grid(&rho.grid, &v.grid)?;
        v.project_admissible();
        Ok(State { rho, v, step_index: 0, eps_used: params.eps, report: StepReport { converged: true, ..Default::default() } })
    }
}

fn rel_change(new: &[f64], old: &[f64]) -> f64 {
    let d: f64 = new.iter().zip(old).map(|(a, b)| (a - b) * (a - b)).sum();
    let scale = dot(new, new);
    if scale > 0.0 {
        sqrt(d / scale)
    } else {
        sqrt(d)
    }
}

fn l2(v: &VectorField) -> f64 {
    sqrt(dot(&v.u, &v.u) + dot(&v.v, &v.v))
}

/// Relative residuals `(momentum, continuity)` of the coupled equations at
/// `(rho, v)` given the previous level `(h, g)`. Each is scaled by the
/// largest of its terms.
pub fn coupled_residuals(rho: &ScalarField, v: &VectorField, h: &ScalarField, g: &VectorField, params: &Params) -> Result<(f64, f64)> {
    let f = assemble_forcing(&MomentumProblem { rho, v, h, g, params })?;
    let lame = apply_lame(v, params, true);
    let total = f.total();
    let r = lame.axpy(-1.0, &total)?;
    let scale = [&f.inertia_prev, &f.inertia, &f.convection, &f.pressure, &f.eps_term, &lame]
        .iter()
        .map(|x| l2(x))
        .fold(0.0, f64::max);
    let m = if scale > 0.0 { l2(&r) / scale } else { l2(&r) };
    let kt = cutoff_field(rho, params);
    let rc = continuity_residual(rho, h, v, &kt, params);
    let am = params.alpha() * rho.grid.cell_area();
    let cscale = am * sqrt(dot(&h.values, &h.values)).max(sqrt(dot(&rho.values, &rho.values)));
    let c = if cscale > 0.0 { sqrt(dot(&rc, &rc)) / cscale } else { sqrt(dot(&rc, &rc)) };
    Ok((m, c))
}

/// Advances `prev` by one step.
pub fn advance_step(prev: &State, params: &Params) -> Result<State> {
    advance_step_from(prev, params, None)
}

/// [`advance_step`] with an explicit starting iterate for `(rho, v)`.
pub fn advance_step_from(prev: &State, params: &Params, start: Option<(&ScalarField, &VectorField)>) -> Result<State> {
    params.validate()?;
    let h = &prev.rho;
    let g = &prev.v;
    same_grid(&h.grid, &g.grid)?;
    let theta = params.damping;
    let alpha = params.alpha();
    let mut report = StepReport::default();
    let (mut rho, mut v) = match start {
        Some((r, w)) => (r.clone(), w.clone()),
        None => (h.clone(), g.clone()),
    };
    let gnorm = l2(g);
    for it in 1..=params.fp_max_iter {
        let mut cp = ContinuityProblem::new(&v, h, params);
        cp.guess = Some(&rho);
        let (rho_new, ds) = continuity::solve_density(&cp)?;
        report.absorb(&ds, true);
        let forcing = assemble_forcing(&MomentumProblem { rho: &rho_new, v: &v, h, g, params })?;
        let shift = face_average(&rho_new).scaled(alpha);
        let (w, ms) = solve_momentum(&forcing.explicit_part(), Some(&shift), FrictionMode::Implicit, params, Some(&v))?;
        report.absorb(&ms, false);
        let mut v_new = v.clone();
        for (o, x) in v_new.u.iter_mut().zip(&w.u) {
            *o += theta * (x - *o);
        }
        for (o, x) in v_new.v.iter_mut().zip(&w.v) {
            *o += theta * (x - *o);
        }
        let dr = rel_change(&rho_new.values, &rho.values);
        let dv = {
            let mut num = 0.0;
            for (a, b) in v_new.u.iter().zip(&v.u).chain(v_new.v.iter().zip(&v.v)) {
                num += (a - b) * (a - b);
            }
            let scale = l2(&v_new).max(gnorm);
            if scale > 0.0 {
                sqrt(num) / scale
            } else {
                sqrt(num)
            }
        };
        report.picard_iterations = it;
        report.rho_updates.push(dr);
        report.v_updates.push(dv);
        rho = rho_new;
        v = v_new;
        if dr.max(dv) <= params.fp_tol {
            let mut cp = ContinuityProblem::new(&v, h, params);
            cp.guess = Some(&rho);
            let (rho_fin, ds) = continuity::solve_density(&cp)?;
            report.absorb(&ds, true);
            let (m, c) = coupled_residuals(&rho_fin, &v, h, g, params)?;
            rho = rho_fin;
            report.momentum_residual = m;
            report.continuity_residual = c;
            if m <= 10.0 * params.lin_tol && c <= 10.0 * params.lin_tol {
                report.converged = true;
                report.bounds = Some(density_bounds_report(&rho, h, params)?);
                return Ok(State { rho, v, step_index: prev.step_index + 1, eps_used: params.eps, report });
            }
        }
    }
    let (m, c) = coupled_residuals(&rho, &v, h, g, params)?;
    report.momentum_residual = m;
    report.continuity_residual = c;
    report.bounds = density_bounds_report(&rho, h, params).ok();
    Err(Error::StepPicard { step: prev.step_index + 1, report: alloc::boxed::Box::new(report) })
}

/// States of a run, starting with the initial level, and the failure that
/// stopped it early, if any.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub states: Vec<State>,
    pub failure: Option<(usize, Error)>,
}

/// `num_steps` steps from `initial`, each warm-started from the previous level.
pub fn run(initial: State, num_steps: usize, params: &Params) -> RunOutcome {
    run_with(initial, num_steps, params, |_| {})
}

/// [`run`] with a callback after every accepted step.
pub fn run_with(initial: State, num_steps: usize, params: &Params, mut on_step: impl FnMut(&State)) -> RunOutcome {
    let mut states = Vec::with_capacity(num_steps + 1);
    states.push(initial);
    for _ in 0..num_steps {
        let prev = states.last().expect("nonempty");
        match advance_step(prev, params) {
            Ok(s) => {
                on_step(&s);
                states.push(s);
            }
            Err(e) => {
                let k = prev.step_index + 1;
                return RunOutcome { states, failure: Some((k, e)) };
            }
        }
    }
    RunOutcome { states, failure: None }
}

/// Per-`eps` record of a continuation.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsPoint {
    pub eps: f64,
    /// `|grad rho_eps|_2`.
    pub grad_norm: f64,
    /// `|P(rho_eps)|_2`.
    pub pressure_norm: f64,
    pub max_rho: f64,
    /// `(m, |{rho_eps > m}|)` for each configured level.
    pub superlevel: Vec<(f64, f64)>,
    /// `|G_eps - G_finest|_2`.
    pub g_gap_to_finest: f64,
    /// `|G_eps - G_next|_2` against the next (smaller) `eps`; 0 for the last.
    pub g_gap_to_next: f64,
    pub state: Option<State>,
    pub error: Option<Error>,
}

impl EpsPoint {
    pub fn sqrt_eps_grad(&self) -> f64 {
        sqrt(self.eps) * self.grad_norm
    }

    pub fn eps_grad(&self) -> f64 {
        self.eps * self.grad_norm
    }
}

/// Re-solves the step from `prev` at each `eps` in the strictly decreasing
/// sequence, warm-starting from the previous answer.
pub fn epsilon_continuation(prev: &State, params: &Params, eps_sequence: &[f64], levels: &[f64]) -> Result<Vec<EpsPoint>> {
    if eps_sequence.is_empty() {
        return Err(Error::Insufficient("empty eps sequence"));
    }
    if eps_sequence.windows(2).any(|w| !(w[1] < w[0])) || eps_sequence.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::InvalidParams(alloc::vec![alloc::string::String::from(
            "eps sequence must be positive and strictly decreasing"
        )]));
    }
    let mut points: Vec<EpsPoint> = Vec::with_capacity(eps_sequence.len());
    let mut gs: Vec<Option<ScalarField>> = Vec::with_capacity(eps_sequence.len());
    let mut warm: Option<(ScalarField, VectorField)> = None;
    for &eps in eps_sequence {
        let p = Params { eps, ..params.clone() };
        let start = warm.as_ref().map(|(r, v)| (r, v));
        match advance_step_from(prev, &p, start) {
            Ok(state) => {
                let grad_norm = gradient(&state.rho).l2_norm();
                let pr = state.rho.map(|r| p.modified_pressure_unchecked(r));
                let superlevel = levels.iter().map(|&m| (m, superlevel_measure(&state.rho, m))).collect();
                gs.push(Some(effective_flux(&state.rho, &state.v, &p)?));
                warm = Some((state.rho.clone(), state.v.clone()));
                points.push(EpsPoint {
                    eps,
                    grad_norm,
                    pressure_norm: pr.lp_norm(2.0)?,
                    max_rho: state.rho.max(),
                    superlevel,
                    g_gap_to_finest: 0.0,
                    g_gap_to_next: 0.0,
                    state: Some(state),
                    error: None,
                });
            }
            Err(e) => {
                gs.push(None);
                points.push(EpsPoint {
                    eps,
                    grad_norm: f64::NAN,
                    pressure_norm: f64::NAN,
                    max_rho: f64::NAN,
                    superlevel: Vec::new(),
                    g_gap_to_finest: f64::NAN,
                    g_gap_to_next: f64::NAN,
                    state: None,
                    error: Some(e),
                });
            }
        }
    }
    let gap = |a: &Option<ScalarField>, b: &Option<ScalarField>| -> f64 {
        match (a, b) {
            (Some(a), Some(b)) => a.zip_map(b, |x, y| x - y).and_then(|d| d.lp_norm(2.0)).unwrap_or(f64::NAN),
            _ => f64::NAN,
        }
    };
    let last = gs.len() - 1;
    for k in 0..gs.len() {
        points[k].g_gap_to_finest = gap(&gs[k], &gs[last]);
        points[k].g_gap_to_next = if k < last { gap(&gs[k], &gs[k + 1]) } else { 0.0 };
    }
    Ok(points)
}
