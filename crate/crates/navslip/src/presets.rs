//! Named initial conditions.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use navslip_core::grid::perp_gradient_from_corners;
use navslip_core::{Grid, Params, ScalarField, State, VectorField};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Constant density at rest.
    Equilibrium,
    /// Gaussian density bump at rest; decays through acoustic waves and viscosity.
    GaussianBump,
    /// Constant density with a cellular vortex that slips along every wall.
    ShearSlip,
    /// Mild density bump with a velocity converging on the centre.
    CompressivePulse,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Equilibrium, Preset::GaussianBump, Preset::ShearSlip, Preset::CompressivePulse];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Equilibrium => "equilibrium",
            Preset::GaussianBump => "gaussian-bump",
            Preset::ShearSlip => "shear-slip",
            Preset::CompressivePulse => "compressive-pulse",
        }
    }

    pub fn default_amplitude(self) -> f64 {
        match self {
            Preset::Equilibrium => 0.0,
            Preset::GaussianBump => 0.5,
            Preset::ShearSlip => 1.0,
            Preset::CompressivePulse => 1.0,
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown preset '{s}' (expected one of equilibrium, gaussian-bump, shear-slip, compressive-pulse)"))
    }
}

/// Shape parameters of a preset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PresetSpec {
    pub preset: Preset,
    /// Background density.
    pub rho0: f64,
    /// Density bump height (gaussian-bump) or velocity scale (shear-slip, compressive-pulse).
    pub amplitude: f64,
    /// Gaussian width relative to the shorter side.
    pub width: f64,
}

impl PresetSpec {
    /// Largest initial density.
    pub fn max_density(&self) -> f64 {
        match self.preset {
            Preset::Equilibrium | Preset::ShearSlip => self.rho0,
            Preset::GaussianBump => self.rho0 + self.amplitude.max(0.0),
            Preset::CompressivePulse => self.rho0 + 0.2,
        }
    }

    pub fn initial_state(&self, params: &Params) -> navslip_core::Result<State> {
        let g = Grid::from_params(params)?;
        let (lx, ly) = (params.domain_lx, params.domain_ly);
        let w2 = (self.width * lx.min(ly)).powi(2);
        let bump = move |x: f64, y: f64| (-((x - 0.5 * lx).powi(2) + (y - 0.5 * ly).powi(2)) / w2).exp();
        let a = self.amplitude;
        let (rho, v) = match self.preset {
            Preset::Equilibrium => (ScalarField::constant(g, self.rho0), VectorField::zeros(g)),
            Preset::GaussianBump => (ScalarField::from_fn(g, |x, y| self.rho0 + a * bump(x, y)), VectorField::zeros(g)),
            Preset::ShearSlip => {
                // u = a sin(pi x/lx) cos(pi y/ly) from a stream function sampled at
                // the corners, so the discrete divergence vanishes exactly.
                let corners: Vec<f64> = (0..=g.ny)
                    .flat_map(|b| (0..=g.nx).map(move |i| (i, b)))
                    .map(|(i, b)| {
                        if i == 0 || b == 0 || i == g.nx || b == g.ny {
                            return 0.0;
                        }
                        let (x, y) = (i as f64 * g.hx, b as f64 * g.hy);
                        -a * ly / PI * (PI * x / lx).sin() * (PI * y / ly).sin()
                    })
                    .collect();
                (ScalarField::constant(g, self.rho0), perp_gradient_from_corners(g, &corners))
            }
            Preset::CompressivePulse => (
                ScalarField::from_fn(g, |x, y| self.rho0 + 0.2 * bump(x, y)),
                VectorField::from_fn(g, |x, _| a * (2.0 * PI * x / lx).sin(), |_, y| a * (2.0 * PI * y / ly).sin()),
            ),
        };
        State::initial(rho, v, params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use navslip_core::grid::divergence;

    fn spec(preset: Preset) -> PresetSpec {
        PresetSpec { preset, rho0: 1.0, amplitude: preset.default_amplitude(), width: 0.15 }
    }

    #[test]
    fn names_round_trip() {
        for p in Preset::ALL {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
        assert!("vortex".parse::<Preset>().is_err());
    }

    #[test]
    fn presets_are_admissible_and_below_m1() {
        let p = Params { nx: 16, ny: 16, ..Params::default() };
        for preset in Preset::ALL {
            let s = spec(preset);
            let st = s.initial_state(&p).unwrap();
            assert!(st.v.is_admissible());
            assert!(st.rho.max() <= s.max_density() + 1e-12);
            assert!(s.max_density() < p.m1);
        }
    }

    #[test]
    fn shear_slip_is_solenoidal_and_slips() {
        let p = Params { nx: 16, ny: 16, ..Params::default() };
        let st = spec(Preset::ShearSlip).initial_state(&p).unwrap();
        assert!(divergence(&st.v).lp_norm(f64::INFINITY).unwrap() < 1e-12);
        let tr = navslip_core::grid::boundary_tangential_trace(&st.v, 0.0);
        assert!(tr.max_abs() > 0.5);
    }
}
