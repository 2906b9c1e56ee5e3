//! Single runs, sweeps, verification and plot data.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use navslip_core::diagnostics::{
    dt_difference_norms, effective_flux, grad_norm, hat_distance, interpolant_energy_margin, linf_dt_bound, superlevel_measure,
    vorticity_trace_check, weak_residual_continuity, weak_residual_momentum, DtNorms, EnergyLedger, TimeSeries,
};
use navslip_core::fit::loglog_slope;
use navslip_core::stepper::{advance_step, coupled_residuals, run_with};
use navslip_core::testfn::{random_scalar, random_vector, SeededRng};
use navslip_core::{Params, ScalarField, State};

use crate::config::{ExperimentConfig, Mode};
use crate::error::HarnessError;
use crate::io::{flag, num, read_state, write_state, Table};

pub const LEDGER_COLUMNS: &[&str] = &[
    "step",
    "time",
    "mass",
    "min_rho",
    "max_rho",
    "kinetic",
    "elastic",
    "energy",
    "dissipation",
    "friction",
    "remainder",
    "velocity_jump",
    "energy_margin",
    "entropy",
    "rho_div_dt",
    "entropy_margin",
    "cum_dissipation",
    "cum_friction",
    "cum_remainder",
    "cum_velocity_jump",
    "telescoped_margin",
    "entropy_telescoped_margin",
    "momentum_residual",
    "continuity_residual",
    "mass_ok",
    "bounds_ok",
    "energy_ok",
    "entropy_ok",
    "telescoped_ok",
    "residual_ok",
];

pub const RUN_SUMMARY_COLUMNS: &[&str] = &[
    "preset",
    "friction",
    "dt",
    "eps",
    "steps_requested",
    "steps_completed",
    "e0",
    "energy_final",
    "min_energy_margin",
    "min_telescoped_margin",
    "min_entropy_margin",
    "min_entropy_telescoped_margin",
    "max_mass_drift",
    "min_rho",
    "max_rho",
    "pressure_sum",
    "density_increment",
    "velocity_increment",
    "interpolant_energy_margin",
    "linf_dt_bound",
    "weak_continuity_ratio",
    "weak_momentum_ratio",
    "weak_centered_relative",
    "wall_vorticity_gap",
    "wall_max_tangential",
    "ledger_ok",
    "weak_ok",
    "failure_step",
    "failure",
];

pub const EPS_SUMMARY_COLUMNS: &[&str] = &[
    "eps",
    "grad_norm",
    "eps_grad",
    "pressure_norm",
    "max_rho",
    "g_gap_to_next",
    "g_gap_to_finest",
    "picard_iterations",
    "bounds_ok",
    "slope_eps_grad",
    "g_gaps_decreasing",
    "superlevel_nonincreasing",
    "error",
];

pub const DT_SUMMARY_COLUMNS: &[&str] = &[
    "dt",
    "steps",
    "pressure_sum",
    "density_increment",
    "velocity_increment",
    "density_increment_ratio",
    "velocity_increment_ratio",
    "pressure_sum_spread",
    "hat_distance_next",
    "interpolant_energy_margin",
    "e0",
    "max_rho",
    "linf_dt_bound",
    "ledger_ok",
    "failure_step",
];

/// Ledger rows with the coupled residuals of every step.
pub fn ledger_table(states: &[State], params: &Params) -> Result<(EnergyLedger, Table), HarnessError> {
    let ledger = EnergyLedger::from_states(states, params)?;
    let mut t = Table::new(LEDGER_COLUMNS);
    for (k, r) in ledger.rows.iter().enumerate() {
        let (m, c) = if k == 0 {
            (0.0, 0.0)
        } else {
            let (h, cur) = (&states[k - 1], &states[k]);
            coupled_residuals(&cur.rho, &cur.v, &h.rho, &h.v, params)?
        };
        let residual_ok = m <= 10.0 * params.lin_tol && c <= 10.0 * params.lin_tol;
        t.push(vec![
            r.step.to_string(),
            num(r.time),
            num(r.mass),
            num(r.min_rho),
            num(r.max_rho),
            num(r.kinetic),
            num(r.elastic),
            num(r.kinetic + r.elastic),
            num(r.dissipation),
            num(r.friction),
            num(r.remainder),
            num(r.velocity_jump),
            num(r.energy_margin),
            num(r.entropy),
            num(r.rho_div_dt),
            num(r.entropy_margin),
            num(r.cum_dissipation),
            num(r.cum_friction),
            num(r.cum_remainder),
            num(r.cum_velocity_jump),
            num(r.telescoped_margin),
            num(r.entropy_telescoped_margin),
            num(m),
            num(c),
            flag(r.mass_ok),
            flag(r.bounds_ok),
            flag(r.energy_ok),
            flag(r.entropy_ok),
            flag(r.telescoped_ok),
            flag(residual_ok),
        ]);
    }
    Ok((ledger, t))
}

/// Largest normalized weak residuals over the spot-check steps.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WeakCheck {
    /// `max |continuity residual| / (lin_tol scale)`.
    pub continuity_ratio: f64,
    /// `max |momentum residual| / (lin_tol scale)`.
    pub momentum_ratio: f64,
    /// `max |centered continuity residual| / scale`.
    pub centered_relative: f64,
    pub samples: usize,
}

impl WeakCheck {
    pub fn passes(&self) -> bool {
        self.continuity_ratio <= 10.0 && self.momentum_ratio <= 10.0
    }
}

/// Seeded random test functions against steps `1..=spot_steps`.
pub fn weak_spot_check(states: &[State], params: &Params, seed: u64, per_step: usize, spot_steps: usize) -> Result<WeakCheck, HarnessError> {
    let mut out = WeakCheck::default();
    for k in 1..=spot_steps.min(states.len().saturating_sub(1)) {
        let mut rng = SeededRng::new(seed.wrapping_mul(1_000_003).wrapping_add(k as u64));
        let g = states[k].rho.grid;
        for _ in 0..per_step {
            let c = weak_residual_continuity(&states[k - 1], &states[k], &random_scalar(g, &mut rng), params)?;
            let m = weak_residual_momentum(&states[k - 1], &states[k], &random_vector(g, &mut rng), params)?;
            let ratio = |r: f64, s: f64| if s > 0.0 { r.abs() / (params.lin_tol * s) } else if r == 0.0 { 0.0 } else { f64::INFINITY };
            out.continuity_ratio = out.continuity_ratio.max(ratio(c.upwind, c.scale));
            out.momentum_ratio = out.momentum_ratio.max(ratio(m.total, m.scale));
            if c.scale > 0.0 {
                out.centered_relative = out.centered_relative.max(c.centered.abs() / c.scale);
            }
            out.samples += 1;
        }
    }
    Ok(out)
}

/// Everything a single run produced.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub dir: PathBuf,
    pub params: Params,
    pub states: Vec<State>,
    pub ledger: EnergyLedger,
    pub weak: WeakCheck,
    pub norms: Option<DtNorms>,
    pub interpolant_margin: f64,
    pub failure: Option<(usize, String)>,
    pub ledger_ok: bool,
}

impl RunResult {
    /// Enforced invariants: ledger flags, weak residuals, no solver failure.
    pub fn ok(&self) -> bool {
        self.ledger_ok && self.weak.passes() && self.failure.is_none()
    }

    pub fn time_series(&self) -> TimeSeries {
        TimeSeries::from_states(self.params.dt, &self.states)
    }
}

fn mkdir(p: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(p).map_err(|e| HarnessError::io(p, e))
}

fn write_text(p: &Path, s: &str) -> Result<(), HarnessError> {
    fs::write(p, s).map_err(|e| HarnessError::io(p, e))
}

/// Runs `cfg.steps` steps of the configured preset and writes `config.txt`,
/// `ledger.csv`, `solver.csv`, `summary.csv` and `fields/` under `dir`.
pub fn run_single(cfg: &ExperimentConfig, dir: &Path) -> Result<RunResult, HarnessError> {
    cfg.validate()?;
    let p = &cfg.params;
    mkdir(dir)?;
    write_text(&dir.join("config.txt"), &cfg.to_text())?;
    let fields = dir.join("fields");
    let initial = cfg.preset.initial_state(p)?;
    let mut dump_err = None;
    let mut dump = |s: &State| {
        if cfg.dump_every > 0 && s.step_index.is_multiple_of(cfg.dump_every) && dump_err.is_none() {
            if let Err(e) = mkdir(&fields).and_then(|_| write_state(&fields, s)) {
                dump_err = Some(e);
            }
        }
    };
    dump(&initial);
    let out = run_with(initial, cfg.steps, p, &mut dump);
    if let Some(e) = dump_err {
        return Err(e);
    }
    let states = out.states;
    let failure = out.failure.map(|(k, e)| (k, e.to_string()));
    let (ledger, table) = ledger_table(&states, p)?;
    table.write(&dir.join("ledger.csv"))?;
    let ledger_ok = table.rows.iter().all(|r| r[24..].iter().all(|f| f == "1"));

    let mut solver = Table::new(&[
        "step",
        "picard_iterations",
        "density_linear_iterations",
        "lame_linear_iterations",
        "worst_linear_residual",
        "converged",
    ]);
    for s in &states[1..] {
        let r = &s.report;
        solver.push(vec![
            s.step_index.to_string(),
            r.picard_iterations.to_string(),
            r.density_linear_iterations.to_string(),
            r.lame_linear_iterations.to_string(),
            num(r.worst_linear_residual),
            flag(r.converged),
        ]);
    }
    solver.write(&dir.join("solver.csv"))?;

    let weak = weak_spot_check(&states, p, cfg.seed, cfg.test_functions, cfg.spot_steps)?;
    let ts = TimeSeries::from_states(p.dt, &states);
    let norms = dt_difference_norms(&ts, p.gamma).ok();
    let interpolant_margin = interpolant_energy_margin(&ts, p)?;
    let last = states.last().expect("initial state");
    let vort = vorticity_trace_check(last, p);
    let wall = navslip_core::grid::boundary_tangential_trace(&last.v, p.friction / p.mu).max_abs();
    let rows = &ledger.rows;
    let min_of = |f: fn(&navslip_core::diagnostics::LedgerRow) -> f64| rows.iter().skip(1).map(f).fold(f64::INFINITY, f64::min);
    let max_drift = rows.windows(2).map(|w| (w[1].mass - w[0].mass).abs()).fold(0.0, f64::max);
    let nan = f64::NAN;
    let mut summary = Table::new(RUN_SUMMARY_COLUMNS);
    summary.push(vec![
        cfg.preset.preset.to_string(),
        num(p.friction),
        num(p.dt),
        num(p.eps),
        cfg.steps.to_string(),
        (states.len() - 1).to_string(),
        num(ledger.e0),
        num(rows.last().map_or(nan, |r| r.kinetic + r.elastic)),
        num(min_of(|r| r.energy_margin)),
        num(min_of(|r| r.telescoped_margin)),
        num(min_of(|r| r.entropy_margin)),
        num(min_of(|r| r.entropy_telescoped_margin)),
        num(max_drift),
        num(rows.iter().map(|r| r.min_rho).fold(f64::INFINITY, f64::min)),
        num(rows.iter().map(|r| r.max_rho).fold(f64::NEG_INFINITY, f64::max)),
        num(norms.map_or(nan, |n| n.pressure_sum)),
        num(norms.map_or(nan, |n| n.density_increment)),
        num(norms.map_or(nan, |n| n.velocity_increment)),
        num(interpolant_margin),
        num(linf_dt_bound(p.dt, p.gamma)),
        num(weak.continuity_ratio),
        num(weak.momentum_ratio),
        num(weak.centered_relative),
        num(vort.max_gap),
        num(wall),
        flag(ledger_ok),
        flag(weak.passes()),
        failure.as_ref().map_or(String::new(), |f| f.0.to_string()),
        failure.as_ref().map_or(String::new(), |f| f.1.replace(',', ";")),
    ]);
    summary.write(&dir.join("summary.csv"))?;
    Ok(RunResult { dir: dir.to_path_buf(), params: p.clone(), states, ledger, weak, norms, interpolant_margin, failure, ledger_ok })
}

/// Applies `f` to every item on up to `threads` workers; results keep input order.
pub fn par_map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(usize, &T) -> R + Sync) -> Vec<R> {
    let threads = threads.max(1).min(items.len().max(1));
    if threads == 1 {
        return items.iter().enumerate().map(|(i, x)| f(i, x)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(i, &items[i]);
                slots.lock().expect("worker panicked")[i] = Some(r);
            });
        }
    });
    slots.into_inner().expect("worker panicked").into_iter().map(|r| r.expect("every item processed")).collect()
}

/// One point of an `eps` sweep.
#[derive(Debug, Clone)]
pub struct EpsResult {
    pub eps: f64,
    pub state: Option<State>,
    pub error: Option<String>,
    pub grad_norm: f64,
    pub pressure_norm: f64,
    pub max_rho: f64,
    pub g_gap_to_next: f64,
    pub g_gap_to_finest: f64,
    pub bounds_ok: bool,
}

impl EpsResult {
    pub fn eps_grad(&self) -> f64 {
        self.eps * self.grad_norm
    }
}

#[derive(Debug, Clone)]
pub struct EpsSweep {
    pub points: Vec<EpsResult>,
    /// Least-squares slope of `log(eps |grad rho|)` against `log eps`.
    pub slope: f64,
    pub g_gaps_decreasing: bool,
    /// `(m, measure per point)` for each level.
    pub superlevel: Vec<(f64, Vec<f64>)>,
    pub superlevel_nonincreasing: bool,
    pub ok: bool,
}

/// Solves one step from the preset's initial state at every `eps` of the
/// sequence. Points are independent (each starts from the previous level), so
/// they may run concurrently; each writes into `out/eps_NN/`.
pub fn sweep_eps(cfg: &ExperimentConfig, out: &Path, parallel: usize) -> Result<EpsSweep, HarnessError> {
    cfg.validate()?;
    mkdir(out)?;
    write_text(&out.join("config.txt"), &ExperimentConfig { mode: Mode::SweepEps, ..cfg.clone() }.to_text())?;
    let initial = cfg.preset.initial_state(&cfg.params)?;
    let results = par_map(&cfg.eps_sequence, parallel, |i, &eps| -> Result<(Option<State>, Option<String>), HarnessError> {
        let pcfg = ExperimentConfig { params: Params { eps, ..cfg.params.clone() }, steps: 1, final_time: cfg.params.dt, mode: Mode::Run, ..cfg.clone() };
        let dir = out.join(format!("eps_{i:02}"));
        mkdir(&dir)?;
        write_text(&dir.join("config.txt"), &pcfg.to_text())?;
        let fields = dir.join("fields");
        mkdir(&fields)?;
        write_state(&fields, &initial)?;
        match advance_step(&initial, &pcfg.params) {
            Ok(s) => {
                write_state(&fields, &s)?;
                let (_, t) = ledger_table(&[initial.clone(), s.clone()], &pcfg.params)?;
                t.write(&dir.join("ledger.csv"))?;
                Ok((Some(s), None))
            }
            Err(e) => Ok((None, Some(e.to_string()))),
        }
    });
    let mut points = Vec::with_capacity(results.len());
    let mut gs: Vec<Option<ScalarField>> = Vec::new();
    for (r, &eps) in results.into_iter().zip(&cfg.eps_sequence) {
        let (state, error) = r?;
        let p = Params { eps, ..cfg.params.clone() };
        let (gn, pn, mr, ok) = match &state {
            Some(s) => {
                gs.push(Some(effective_flux(&s.rho, &s.v, &p)?));
                let pr = s.rho.map(|r| p.modified_pressure(r.max(0.0)).unwrap_or(f64::NAN));
                (grad_norm(&s.rho), pr.lp_norm(2.0)?, s.rho.max(), s.report.invariants_ok())
            }
            None => {
                gs.push(None);
                (f64::NAN, f64::NAN, f64::NAN, false)
            }
        };
        points.push(EpsResult {
            eps,
            state,
            error,
            grad_norm: gn,
            pressure_norm: pn,
            max_rho: mr,
            g_gap_to_next: f64::NAN,
            g_gap_to_finest: f64::NAN,
            bounds_ok: ok,
        });
    }
    let gap = |a: &Option<ScalarField>, b: &Option<ScalarField>| match (a, b) {
        (Some(a), Some(b)) => a.zip_map(b, |x, y| x - y).and_then(|d| d.lp_norm(2.0)).unwrap_or(f64::NAN),
        _ => f64::NAN,
    };
    let last = gs.len() - 1;
    for k in 0..gs.len() {
        points[k].g_gap_to_finest = gap(&gs[k], &gs[last]);
        points[k].g_gap_to_next = if k < last { gap(&gs[k], &gs[k + 1]) } else { f64::NAN };
    }
    let xs: Vec<f64> = points.iter().map(|p| p.eps).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.eps_grad()).collect();
    let slope = loglog_slope(&xs, &ys).unwrap_or(f64::NAN);
    let gaps: Vec<f64> = points[..last].iter().map(|p| p.g_gap_to_next).collect();
    let g_gaps_decreasing = gaps.windows(2).all(|w| w[1] < w[0]) && gaps.iter().all(|g| g.is_finite());
    let levels: Vec<f64> = if cfg.levels.is_empty() {
        let top = points[last].max_rho;
        [0.25, 0.5, 0.75].iter().map(|f| top + f * (cfg.params.m1 - top)).collect()
    } else {
        cfg.levels.clone()
    };
    let superlevel: Vec<(f64, Vec<f64>)> = levels
        .iter()
        .map(|&m| (m, points.iter().map(|p| p.state.as_ref().map_or(f64::NAN, |s| superlevel_measure(&s.rho, m))).collect()))
        .collect();
    // along the sequence eps decreases; the measure must not grow
    let superlevel_nonincreasing = superlevel.iter().all(|(_, v)| v.windows(2).all(|w| w[1] <= w[0]));
    let ok = points.iter().all(|p| p.bounds_ok && p.error.is_none());

    let mut t = Table::new(EPS_SUMMARY_COLUMNS);
    for p in &points {
        t.push(vec![
            num(p.eps),
            num(p.grad_norm),
            num(p.eps_grad()),
            num(p.pressure_norm),
            num(p.max_rho),
            num(p.g_gap_to_next),
            num(p.g_gap_to_finest),
            p.state.as_ref().map_or(String::new(), |s| s.report.picard_iterations.to_string()),
            flag(p.bounds_ok),
            num(slope),
            flag(g_gaps_decreasing),
            flag(superlevel_nonincreasing),
            p.error.as_deref().unwrap_or("").replace(',', ";"),
        ]);
    }
    t.write(&out.join("summary.csv"))?;
    let mut s = Table::new(&["level", "eps", "measure"]);
    for (m, v) in &superlevel {
        for (p, x) in points.iter().zip(v) {
            s.push(vec![num(*m), num(p.eps), num(*x)]);
        }
    }
    s.write(&out.join("superlevel.csv"))?;
    Ok(EpsSweep { points, slope, g_gaps_decreasing, superlevel, superlevel_nonincreasing, ok })
}

#[derive(Debug, Clone)]
pub struct DtSweep {
    pub runs: Vec<RunResult>,
    pub norms: Vec<Option<DtNorms>>,
    /// `density_increment(dt_{i+1}) / density_increment(dt_i)`.
    pub density_increment_ratios: Vec<f64>,
    pub velocity_increment_ratios: Vec<f64>,
    /// `(max - min) / max` of the pressure sum over the sweep.
    pub pressure_sum_spread: f64,
    /// `|rho_hat_i - rho_hat_{i+1}|` in `L_gamma(L_gamma)`.
    pub hat_distances: Vec<f64>,
    /// Energy inequality on the interpolants of the finest run.
    pub finest_interpolant_margin: f64,
    pub ok: bool,
}

/// Runs the preset to `final_time` with every `dt` of the sequence, each in `out/dt_NN/`.
pub fn sweep_dt(cfg: &ExperimentConfig, out: &Path, parallel: usize) -> Result<DtSweep, HarnessError> {
    cfg.validate()?;
    mkdir(out)?;
    write_text(&out.join("config.txt"), &ExperimentConfig { mode: Mode::SweepDt, ..cfg.clone() }.to_text())?;
    let runs = par_map(&cfg.dt_sequence, parallel, |i, &dt| {
        let steps = cfg.steps_for(dt);
        let pcfg = ExperimentConfig { params: Params { dt, ..cfg.params.clone() }, steps, final_time: steps as f64 * dt, mode: Mode::Run, ..cfg.clone() };
        run_single(&pcfg, &out.join(format!("dt_{i:02}")))
    });
    let runs: Vec<RunResult> = runs.into_iter().collect::<Result<_, _>>()?;
    let norms: Vec<Option<DtNorms>> = runs.iter().map(|r| r.norms).collect();
    let ratio = |f: fn(&DtNorms) -> f64| -> Vec<f64> {
        norms.windows(2).map(|w| match (w[0], w[1]) {
            (Some(a), Some(b)) => f(&b) / f(&a),
            _ => f64::NAN,
        }).collect()
    };
    let density_increment_ratios = ratio(|n| n.density_increment);
    let velocity_increment_ratios = ratio(|n| n.velocity_increment);
    let pressure_sum: Vec<f64> = norms.iter().map(|n| n.map_or(f64::NAN, |n| n.pressure_sum)).collect();
    let hi = pressure_sum.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = pressure_sum.iter().cloned().fold(f64::INFINITY, f64::min);
    let pressure_sum_spread = (hi - lo) / hi;
    let gamma = cfg.params.gamma;
    let hat_distances: Vec<f64> = runs
        .windows(2)
        .map(|w| hat_distance(&w[0].time_series(), &w[1].time_series(), gamma).unwrap_or(f64::NAN))
        .collect();
    let finest_interpolant_margin = runs.last().map_or(f64::NAN, |r| r.interpolant_margin);
    let ok = runs.iter().all(RunResult::ok);

    let mut t = Table::new(DT_SUMMARY_COLUMNS);
    for (i, r) in runs.iter().enumerate() {
        let n = norms[i];
        let nan = f64::NAN;
        t.push(vec![
            num(r.params.dt),
            (r.states.len() - 1).to_string(),
            num(n.map_or(nan, |n| n.pressure_sum)),
            num(n.map_or(nan, |n| n.density_increment)),
            num(n.map_or(nan, |n| n.velocity_increment)),
            num(if i > 0 { density_increment_ratios[i - 1] } else { nan }),
            num(if i > 0 { velocity_increment_ratios[i - 1] } else { nan }),
            num(pressure_sum_spread),
            num(hat_distances.get(i).copied().unwrap_or(nan)),
            num(r.interpolant_margin),
            num(r.ledger.e0),
            num(r.ledger.rows.iter().map(|x| x.max_rho).fold(f64::NEG_INFINITY, f64::max)),
            num(linf_dt_bound(r.params.dt, gamma)),
            flag(r.ledger_ok),
            r.failure.as_ref().map_or(String::new(), |f| f.0.to_string()),
        ]);
    }
    t.write(&out.join("summary.csv"))?;
    Ok(DtSweep { runs, norms, density_increment_ratios, velocity_increment_ratios, pressure_sum_spread, hat_distances, finest_interpolant_margin, ok })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifyReport {
    pub runs: usize,
    pub rows: usize,
}

fn run_dirs(dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    if dir.join("ledger.csv").is_file() {
        return Ok(vec![dir.to_path_buf()]);
    }
    let mut subs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| HarnessError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("ledger.csv").is_file())
        .collect();
    subs.sort();
    Ok(subs)
}

/// Rebuilds every ledger under `dir` from its field dumps and compares it
/// byte for byte with the recorded `ledger.csv`.
pub fn verify(dir: &Path) -> Result<VerifyReport, HarnessError> {
    let dirs = run_dirs(dir)?;
    if dirs.is_empty() {
        return Err(HarnessError::Missing {
            dir: dir.to_path_buf(),
            expected: vec!["ledger.csv".into(), "config.txt".into(), "fields/".into()],
        });
    }
    let mut rows = 0;
    for d in &dirs {
        let cfg = ExperimentConfig::load(&d.join("config.txt"))?;
        let ledger_path = d.join("ledger.csv");
        let recorded = fs::read_to_string(&ledger_path).map_err(|e| HarnessError::io(&ledger_path, e))?;
        let n = recorded.lines().count().saturating_sub(1);
        if n == 0 {
            return Err(HarnessError::format(&ledger_path, 1, "ledger has no rows"));
        }
        if n > 1 && cfg.dump_every != 1 {
            return Err(HarnessError::Verify(format!(
                "{}: verification needs every step dumped (dump_every = 1, found {})",
                d.display(),
                cfg.dump_every
            )));
        }
        let fields = d.join("fields");
        let states = (0..n).map(|k| read_state(&fields, k, &cfg.params)).collect::<Result<Vec<_>, _>>()?;
        let (_, table) = ledger_table(&states, &cfg.params)?;
        let rebuilt = table.to_text();
        if rebuilt != recorded {
            let line = rebuilt.lines().zip(recorded.lines()).position(|(a, b)| a != b).map_or(0, |i| i + 1);
            return Err(HarnessError::Verify(format!("{}: ledger differs from the dumped fields at line {line}", ledger_path.display())));
        }
        rows += n;
    }
    Ok(VerifyReport { runs: dirs.len(), rows })
}

fn two_column(path: &Path, comment: &str, xy: &[(f64, f64)], slope: Option<f64>) -> Result<(), HarnessError> {
    let mut s = format!("# {comment}\n");
    for (x, y) in xy {
        s.push_str(&format!("{} {}\n", num(*x), num(*y)));
    }
    if let Some(m) = slope {
        s.push_str(&format!("# fitted log-log slope {}\n", num(m)));
    }
    write_text(path, &s)
}

/// Writes two-column plot files for whatever results `dir` holds; returns
/// the files written.
pub fn plot_data(dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let mut written = Vec::new();
    let ledger = dir.join("ledger.csv");
    if ledger.is_file() {
        let t = Table::read(&ledger)?;
        let time = t.numbers("time").ok_or_else(|| HarnessError::format(&ledger, 1, "no time column"))?;
        let e = t.numbers("energy").ok_or_else(|| HarnessError::format(&ledger, 1, "no energy column"))?;
        let p = dir.join("energy_vs_time.dat");
        two_column(&p, "time energy", &time.into_iter().zip(e).collect::<Vec<_>>(), None)?;
        written.push(p);
    }
    let summary = dir.join("summary.csv");
    if summary.is_file() {
        let t = Table::read(&summary)?;
        if let (Some(eps), Some(eg)) = (t.numbers("eps"), t.numbers("eps_grad")) {
            if t.column("grad_norm").is_some() {
                let p = dir.join("eps_grad_vs_eps.dat");
                two_column(&p, "log-log: eps eps*|grad rho|_2", &eps.iter().cloned().zip(eg.iter().cloned()).collect::<Vec<_>>(), loglog_slope(&eps, &eg))?;
                written.push(p);
            }
        }
        if let (Some(dt), Some(q), Some(_)) = (t.numbers("dt"), t.numbers("density_increment"), t.column("density_increment_ratio")) {
            let p = dir.join("density_increment_vs_dt.dat");
            two_column(&p, "log-log: dt density_increment", &dt.iter().cloned().zip(q.iter().cloned()).collect::<Vec<_>>(), loglog_slope(&dt, &q))?;
            written.push(p);
        }
    }
    let sl = dir.join("superlevel.csv");
    if sl.is_file() {
        let t = Table::read(&sl)?;
        let (lv, eps, m) = (t.numbers("level").unwrap_or_default(), t.numbers("eps").unwrap_or_default(), t.numbers("measure").unwrap_or_default());
        let mut levels: Vec<f64> = Vec::new();
        for &l in &lv {
            if !levels.contains(&l) {
                levels.push(l);
            }
        }
        for (i, &l) in levels.iter().enumerate() {
            let xy: Vec<(f64, f64)> = lv.iter().zip(eps.iter().zip(&m)).filter(|(a, _)| **a == l).map(|(_, (e, x))| (*e, *x)).collect();
            let p = dir.join(format!("superlevel_vs_eps_{i}.dat"));
            two_column(&p, &format!("log-log: eps |{{rho > {}}}|", num(l)), &xy, None)?;
            written.push(p);
        }
    }
    if written.is_empty() {
        return Err(HarnessError::Missing {
            dir: dir.to_path_buf(),
            expected: vec![
                "ledger.csv (run)".into(),
                "summary.csv (sweep-eps or sweep-dt)".into(),
                "superlevel.csv (sweep-eps)".into(),
            ],
        });
    }
    Ok(written)
}
