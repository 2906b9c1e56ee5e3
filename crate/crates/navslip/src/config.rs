//! Flat `key = value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Lists are comma
//! separated. Every key is optional; unknown keys are errors.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use navslip_core::Params;

use crate::error::HarnessError;
use crate::presets::{Preset, PresetSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Run,
    SweepEps,
    SweepDt,
    Verify,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Run => "run",
            Mode::SweepEps => "sweep-eps",
            Mode::SweepDt => "sweep-dt",
            Mode::Verify => "verify",
        }
    }

    fn parse(s: &str) -> Option<Mode> {
        [Mode::Run, Mode::SweepEps, Mode::SweepDt, Mode::Verify].into_iter().find(|m| m.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub params: Params,
    pub preset: PresetSpec,
    pub mode: Mode,
    /// Number of time steps `M`; the final time is `M dt`.
    pub steps: usize,
    /// Final time of each `sweep-dt` point.
    pub final_time: f64,
    /// Dump fields every this many steps (0 disables dumps).
    pub dump_every: usize,
    /// Strictly decreasing.
    pub eps_sequence: Vec<f64>,
    /// Strictly decreasing.
    pub dt_sequence: Vec<f64>,
    /// Super-level thresholds for `sweep-eps`; empty means "pick inside (max rho, m1)".
    pub levels: Vec<f64>,
    pub seed: u64,
    /// Random test functions per step in the weak-residual spot check.
    pub test_functions: usize,
    /// Steps covered by the weak-residual spot check.
    pub spot_steps: usize,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let preset = Preset::GaussianBump;
        let params = Params::default();
        ExperimentConfig {
            final_time: 50.0 * params.dt,
            params,
            preset: PresetSpec { preset, rho0: 1.0, amplitude: preset.default_amplitude(), width: 0.15 },
            mode: Mode::Run,
            steps: 50,
            dump_every: 1,
            eps_sequence: vec![1e-2, 3e-3, 1e-3, 3e-4, 1e-4],
            dt_sequence: vec![0.02, 0.01, 0.005],
            levels: Vec::new(),
            seed: 0,
            test_functions: 20,
            spot_steps: 3,
            out: PathBuf::from("out"),
        }
    }
}

const KEYS: &[&str] = &[
    "mu",
    "nu",
    "gamma",
    "friction",
    "dt",
    "eps",
    "m1",
    "m2",
    "domain_lx",
    "domain_ly",
    "nx",
    "ny",
    "fp_tol",
    "fp_max_iter",
    "density_max_iter",
    "lin_tol",
    "damping",
    "preset",
    "rho0",
    "amplitude",
    "width",
    "mode",
    "steps",
    "final_time",
    "dump_every",
    "eps_sequence",
    "dt_sequence",
    "levels",
    "seed",
    "test_functions",
    "spot_steps",
    "out",
];

fn parse_list(v: &str) -> Result<Vec<f64>, String> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|x| x.trim().parse::<f64>().map_err(|e| format!("'{}': {e}", x.trim()))).collect()
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ")
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::parse(&text)
    }

    /// Parses and validates; every problem found is reported in one error.
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut cfg = ExperimentConfig::default();
        let mut errors = Vec::new();
        let mut seen = BTreeSet::new();
        let mut amplitude = None;
        let mut final_time = None;
        let mut eps_set = false;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let lineno = n + 1;
            let Some((k, v)) = line.split_once('=') else {
                errors.push(format!("line {lineno}: expected 'key = value', got '{line}'"));
                continue;
            };
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                errors.push(format!("line {lineno}: unknown key '{k}'"));
                continue;
            }
            if !seen.insert(k.to_string()) {
                errors.push(format!("line {lineno}: duplicate key '{k}'"));
                continue;
            }
            let p = &mut cfg.params;
            let res: Result<(), String> = (|| {
                let f = || v.parse::<f64>().map_err(|e| e.to_string());
                let u = || v.parse::<usize>().map_err(|e| e.to_string());
                match k {
                    "mu" => p.mu = f()?,
                    "nu" => p.nu = f()?,
                    "gamma" => p.gamma = f()?,
                    "friction" => p.friction = f()?,
                    "dt" => p.dt = f()?,
                    "eps" => {
                        p.eps = f()?;
                        eps_set = true;
                    }
                    "m1" => p.m1 = f()?,
                    "m2" => p.m2 = f()?,
                    "domain_lx" => p.domain_lx = f()?,
                    "domain_ly" => p.domain_ly = f()?,
                    "nx" => p.nx = u()?,
                    "ny" => p.ny = u()?,
                    "fp_tol" => p.fp_tol = f()?,
                    "fp_max_iter" => p.fp_max_iter = u()?,
                    "density_max_iter" => p.density_max_iter = u()?,
                    "lin_tol" => p.lin_tol = f()?,
                    "damping" => p.damping = f()?,
                    "preset" => cfg.preset.preset = v.parse()?,
                    "rho0" => cfg.preset.rho0 = f()?,
                    "amplitude" => amplitude = Some(f()?),
                    "width" => cfg.preset.width = f()?,
                    "mode" => cfg.mode = Mode::parse(v).ok_or_else(|| format!("unknown mode '{v}'"))?,
                    "steps" => cfg.steps = u()?,
                    "final_time" => final_time = Some(f()?),
                    "dump_every" => cfg.dump_every = u()?,
                    "eps_sequence" => cfg.eps_sequence = parse_list(v)?,
                    "dt_sequence" => cfg.dt_sequence = parse_list(v)?,
                    "levels" => cfg.levels = parse_list(v)?,
                    "seed" => cfg.seed = v.parse::<u64>().map_err(|e| e.to_string())?,
                    "test_functions" => cfg.test_functions = u()?,
                    "spot_steps" => cfg.spot_steps = u()?,
                    "out" => cfg.out = PathBuf::from(v),
                    _ => unreachable!("key list and match disagree"),
                }
                Ok(())
            })();
            if let Err(e) = res {
                errors.push(format!("line {lineno}: bad value for '{k}': {e}"));
            }
        }
        if !errors.is_empty() {
            return Err(HarnessError::Config(errors));
        }
        cfg.preset.amplitude = amplitude.unwrap_or(cfg.preset.preset.default_amplitude());
        if !eps_set {
            cfg.params.eps = (cfg.params.domain_lx / cfg.params.nx.max(1) as f64) * (cfg.params.domain_ly / cfg.params.ny.max(1) as f64);
        }
        match final_time {
            Some(t) => {
                cfg.final_time = t;
                if !seen.contains("steps") && cfg.params.dt > 0.0 {
                    cfg.steps = (t / cfg.params.dt).round() as usize;
                }
            }
            None => cfg.final_time = cfg.steps as f64 * cfg.params.dt,
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let mut errors = Vec::new();
        if let Err(navslip_core::Error::InvalidParams(list)) = self.params.validate() {
            errors.extend(list);
        }
        let s = &self.preset;
        if !(s.rho0 > 0.0) {
            errors.push(format!("rho0 must be > 0 (got {})", s.rho0));
        }
        if !(s.width > 0.0) {
            errors.push(format!("width must be > 0 (got {})", s.width));
        }
        if !(s.amplitude >= 0.0) {
            errors.push(format!("amplitude must be >= 0 (got {})", s.amplitude));
        }
        if !(s.max_density() < self.params.m1) {
            errors.push(format!(
                "preset {}: initial max density {} must stay below m1 = {}",
                s.preset,
                s.max_density(),
                self.params.m1
            ));
        }
        if self.steps == 0 {
            errors.push("steps must be >= 1".into());
        }
        if !(self.final_time > 0.0) {
            errors.push(format!("final_time must be > 0 (got {})", self.final_time));
        } else if self.params.dt > 0.0 {
            let m = self.steps as f64 * self.params.dt;
            if (m - self.final_time).abs() > 1e-9 * self.final_time {
                errors.push(format!(
                    "final_time = {} is not steps * dt = {} * {}",
                    self.final_time, self.steps, self.params.dt
                ));
            }
        }
        let decreasing = |name: &str, v: &[f64], errors: &mut Vec<String>| {
            if v.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
                errors.push(format!("{name} entries must be positive"));
            }
            if v.windows(2).any(|w| !(w[1] < w[0])) {
                errors.push(format!("{name} must be strictly decreasing"));
            }
        };
        decreasing("eps_sequence", &self.eps_sequence, &mut errors);
        decreasing("dt_sequence", &self.dt_sequence, &mut errors);
        if self.eps_sequence.len() < 2 {
            errors.push("eps_sequence needs at least 2 entries".into());
        }
        if self.dt_sequence.len() < 2 {
            errors.push("dt_sequence needs at least 2 entries".into());
        }
        for &dt in self.dt_sequence.iter().filter(|_| self.mode == Mode::SweepDt) {
            let m = self.final_time / dt;
            if (m - m.round()).abs() > 1e-9 * m.max(1.0) {
                errors.push(format!("dt_sequence entry {dt} does not divide final_time = {}", self.final_time));
            }
        }
        if self.levels.iter().any(|&m| !(m > 0.0)) {
            errors.push("levels must be positive".into());
        }
        if self.test_functions == 0 {
            errors.push("test_functions must be >= 1".into());
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(HarnessError::Config(errors))
        }
    }

    /// Steps of the `sweep-dt` point with step `dt`.
    pub fn steps_for(&self, dt: f64) -> usize {
        (self.final_time / dt).round() as usize
    }

    /// Every key with its resolved value; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let p = &self.params;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("mu", format!("{:?}", p.mu));
        kv("nu", format!("{:?}", p.nu));
        kv("gamma", format!("{:?}", p.gamma));
        kv("friction", format!("{:?}", p.friction));
        kv("dt", format!("{:?}", p.dt));
        kv("eps", format!("{:?}", p.eps));
        kv("m1", format!("{:?}", p.m1));
        kv("m2", format!("{:?}", p.m2));
        kv("domain_lx", format!("{:?}", p.domain_lx));
        kv("domain_ly", format!("{:?}", p.domain_ly));
        kv("nx", p.nx.to_string());
        kv("ny", p.ny.to_string());
        kv("fp_tol", format!("{:?}", p.fp_tol));
        kv("fp_max_iter", p.fp_max_iter.to_string());
        kv("density_max_iter", p.density_max_iter.to_string());
        kv("lin_tol", format!("{:?}", p.lin_tol));
        kv("damping", format!("{:?}", p.damping));
        kv("preset", self.preset.preset.to_string());
        kv("rho0", format!("{:?}", self.preset.rho0));
        kv("amplitude", format!("{:?}", self.preset.amplitude));
        kv("width", format!("{:?}", self.preset.width));
        kv("mode", self.mode.name().to_string());
        kv("steps", self.steps.to_string());
        kv("final_time", format!("{:?}", self.final_time));
        kv("dump_every", self.dump_every.to_string());
        kv("eps_sequence", fmt_list(&self.eps_sequence));
        kv("dt_sequence", fmt_list(&self.dt_sequence));
        kv("levels", fmt_list(&self.levels));
        kv("seed", self.seed.to_string());
        kv("test_functions", self.test_functions.to_string());
        kv("spot_steps", self.spot_steps.to_string());
        kv("out", self.out.display().to_string());
        s
    }
}
