//! Scheme constants and the constitutive functions built from them.

use alloc::format;
use alloc::vec::Vec;

use crate::math::powf;
use crate::{Error, Result};

/// Physical and numerical constants of one run.
///
/// `alpha = 1/dt` is derived on demand rather than stored, so it can never
/// drift from `dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub mu: f64,
    pub nu: f64,
    pub gamma: f64,
    /// Navier friction coefficient `f` on the walls.
    pub friction: f64,
    pub dt: f64,
    /// Artificial density diffusion.
    pub eps: f64,
    pub m1: f64,
    pub m2: f64,
    pub domain_lx: f64,
    pub domain_ly: f64,
    pub nx: usize,
    pub ny: usize,
    /// Relative-update tolerance of both Picard loops.
    pub fp_tol: f64,
    /// Iteration cap of the coupled Picard loop.
    pub fp_max_iter: usize,
    /// Iteration cap of the lagged-cutoff density loop.
    pub density_max_iter: usize,
    /// Relative residual target of the Krylov solvers.
    pub lin_tol: f64,
    /// Picard damping `theta` in `v <- (1-theta) v + theta w`.
    pub damping: f64,
}

impl Default for Params {
    /// Desk-scale defaults: unit square, 64x64, `gamma = 3`, `dt = 0.01`, `m2 = 4`.
    fn default() -> Self {
        let nx = 64;
        let ny = 64;
        let hx = 1.0 / nx as f64;
        let hy = 1.0 / ny as f64;
        Params {
            mu: 1.0,
            nu: 0.0,
            gamma: 3.0,
            friction: 0.0,
            dt: 0.01,
            eps: hx * hy,
            m1: 3.0,
            m2: 4.0,
            domain_lx: 1.0,
            domain_ly: 1.0,
            nx,
            ny,
            fp_tol: 1e-10,
            fp_max_iter: 200,
            density_max_iter: 1000,
            lin_tol: 1e-10,
            damping: 0.7,
        }
    }
}

impl Params {
    /// `alpha = 1/dt`.
    #[inline]
    pub fn alpha(&self) -> f64 {
        1.0 / self.dt
    }

    pub fn hx(&self) -> f64 {
        self.domain_lx / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        self.domain_ly / self.ny as f64
    }

    /// Checks every invariant and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        let finite = [
            ("mu", self.mu),
            ("nu", self.nu),
            ("gamma", self.gamma),
            ("friction", self.friction),
            ("dt", self.dt),
            ("eps", self.eps),
            ("m1", self.m1),
            ("m2", self.m2),
            ("domain_lx", self.domain_lx),
            ("domain_ly", self.domain_ly),
            ("fp_tol", self.fp_tol),
            ("lin_tol", self.lin_tol),
            ("damping", self.damping),
        ];
        for (name, value) in finite {
            if !value.is_finite() {
                bad.push(format!("{name} must be finite (got {value})"));
            }
        }
        if !(self.mu > 0.0) {
            bad.push(format!("mu must be > 0 (got {})", self.mu));
        }
        if !(2.0 * self.mu + 3.0 * self.nu > 0.0) {
            bad.push(format!("nu: 2*mu + 3*nu must be > 0 (got {})", 2.0 * self.mu + 3.0 * self.nu));
        }
        if !(self.gamma > 2.0) {
            bad.push(format!("gamma must be > 2 (got {})", self.gamma));
        }
        if !(self.friction >= 0.0) {
            bad.push(format!("friction must be >= 0 (got {})", self.friction));
        }
        if !(self.dt > 0.0) {
            bad.push(format!("dt must be > 0 (got {})", self.dt));
        }
        if !(self.eps > 0.0) {
            bad.push(format!("eps must be > 0 (got {})", self.eps));
        }
        if !(self.m1 > 0.0) {
            bad.push(format!("m1 must be > 0 (got {})", self.m1));
        }
        if self.m2 - self.m1 != 1.0 {
            bad.push(format!("m2 - m1 must equal 1 (got m1 = {}, m2 = {})", self.m1, self.m2));
        }
        if !(self.domain_lx > 0.0 && self.domain_ly > 0.0) {
            bad.push(format!(
                "domain_lx, domain_ly must be > 0 (got {}, {})",
                self.domain_lx, self.domain_ly
            ));
        }
        if self.nx < 4 || self.ny < 4 {
            bad.push(format!("nx, ny must be >= 4 (got {}, {})", self.nx, self.ny));
        }
        if !(self.fp_tol > 0.0) {
            bad.push(format!("fp_tol must be > 0 (got {})", self.fp_tol));
        }
        if self.fp_max_iter == 0 {
            bad.push("fp_max_iter must be >= 1".into());
        }
        if self.density_max_iter == 0 {
            bad.push("density_max_iter must be >= 1".into());
        }
        if !(self.lin_tol > 0.0) {
            bad.push(format!("lin_tol must be > 0 (got {})", self.lin_tol));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            bad.push(format!("damping must lie in (0, 1] (got {})", self.damping));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(bad))
        }
    }

    /// Cutoff `K(s)`: 1 below `m1`, 0 above `m2`, and the cubic
    /// `1 - 3t^2 + 2t^3` with `t = (s - m1)/(m2 - m1)` in between.
    pub fn cutoff(&self, s: f64) -> f64 {
        if s <= self.m1 {
            1.0
        } else if s >= self.m2 {
            0.0
        } else {
            let t = (s - self.m1) / (self.m2 - self.m1);
            1.0 - t * t * (3.0 - 2.0 * t)
        }
    }

    /// Exact derivative of [`Params::cutoff`].
    pub fn cutoff_derivative(&self, s: f64) -> f64 {
        if s <= self.m1 || s >= self.m2 {
            0.0
        } else {
            let w = self.m2 - self.m1;
            let t = (s - self.m1) / w;
            -6.0 * t * (1.0 - t) / w
        }
    }

    /// `pi(s) = s^gamma`.
    pub fn physical_pressure(&self, s: f64) -> Result<f64> {
        if s < 0.0 {
            return Err(Error::Domain { what: "physical pressure", value: s });
        }
        Ok(powf(s, self.gamma))
    }

    /// `P(s) = gamma * int_0^s t^(gamma-1) K(t) dt`, integrated in closed form.
    pub fn modified_pressure(&self, s: f64) -> Result<f64> {
        if s < 0.0 {
            return Err(Error::Domain { what: "modified pressure", value: s });
        }
        Ok(self.modified_pressure_unchecked(s))
    }

    /// [`Params::modified_pressure`] for arguments already known to be nonnegative.
    pub(crate) fn modified_pressure_unchecked(&self, s: f64) -> f64 {
        let g = self.gamma;
        if s <= self.m1 {
            return powf(s.max(0.0), g);
        }
        let top = s.min(self.m2);
        // K(t) = c0 + c1 t + c2 t^2 + c3 t^3 on (m1, m2).
        let a = self.m1;
        let w = self.m2 - self.m1;
        let w2 = w * w;
        let w3 = w2 * w;
        let c = [
            1.0 - 3.0 * a * a / w2 - 2.0 * a * a * a / w3,
            6.0 * a / w2 + 6.0 * a * a / w3,
            -3.0 / w2 - 6.0 * a / w3,
            2.0 / w3,
        ];
        let mut acc = powf(a, g);
        for (k, ck) in c.iter().enumerate() {
            let e = g + k as f64;
            acc += g * ck * (powf(top, e) - powf(a, e)) / e;
        }
        acc
    }

    /// `P'(s) = gamma s^(gamma-1) K(s)`.
    pub fn modified_pressure_derivative(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        self.gamma * powf(s, self.gamma - 1.0) * self.cutoff(s)
    }

    /// The nonnegative remainder `(gamma-1) rho^gamma + h^gamma - gamma rho^(gamma-1) K(rho) h`
    /// of the per-step energy balance.
    pub fn energy_remainder(&self, rho: f64, h: f64) -> f64 {
        let g = self.gamma;
        let rho = rho.max(0.0);
        let h = h.max(0.0);
        (g - 1.0) * powf(rho, g) + powf(h, g) - g * powf(rho, g - 1.0) * self.cutoff(rho) * h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> Params {
        Params::default()
    }

    /// Composite Gauss-Legendre (5 points) on `n` panels; independent of the closed form.
    fn quad(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let x = [
            0.0,
            -0.538_469_310_105_683_1,
            0.538_469_310_105_683_1,
            -0.906_179_845_938_664,
            0.906_179_845_938_664,
        ];
        let w = [
            0.568_888_888_888_888_9,
            0.478_628_670_499_366_5,
            0.478_628_670_499_366_5,
            0.236_926_885_056_189_1,
            0.236_926_885_056_189_1,
        ];
        let h = (b - a) / n as f64;
        let mut s = 0.0;
        for k in 0..n {
            let lo = a + k as f64 * h;
            let mid = lo + 0.5 * h;
            for q in 0..5 {
                s += w[q] * f(mid + 0.5 * h * x[q]);
            }
        }
        s * 0.5 * h
    }

    #[test]
    fn cutoff_endpoints_and_midpoint() {
        let p = p();
        assert_eq!(p.cutoff(p.m1), 1.0);
        assert_eq!(p.cutoff(p.m2), 0.0);
        assert!((p.cutoff(0.5 * (p.m1 + p.m2)) - 0.5).abs() < 1e-15);
        assert_eq!(p.cutoff(-3.0), 1.0);
        assert_eq!(p.cutoff(1e6), 0.0);
    }

    #[test]
    fn cutoff_derivative_values() {
        let p = p();
        assert_eq!(p.cutoff_derivative(p.m1 - 1.0), 0.0);
        let mid = 0.5 * (p.m1 + p.m2);
        assert!((p.cutoff_derivative(mid) + 1.5).abs() < 1e-14);
        let h = 1e-6;
        let fd = (p.cutoff(mid + h) - p.cutoff(mid - h)) / (2.0 * h);
        assert!((fd + 1.5).abs() < 1e-8);
    }

    #[test]
    fn cutoff_is_c1_at_the_knots() {
        let p = p();
        let h = 1e-7;
        for knot in [p.m1, p.m2] {
            let left = (p.cutoff(knot) - p.cutoff(knot - h)) / h;
            let right = (p.cutoff(knot + h) - p.cutoff(knot)) / h;
            assert!(left.abs() < 1e-6 && right.abs() < 1e-6, "{left} {right}");
            assert_eq!(p.cutoff_derivative(knot), 0.0);
        }
    }

    #[test]
    fn pressures_at_simple_points() {
        let p = p();
        assert_eq!(p.modified_pressure(0.0).unwrap(), 0.0);
        for s in [0.1, 1.0, 2.5, p.m1] {
            let exact = powf(s, p.gamma);
            assert!((p.modified_pressure(s).unwrap() - exact).abs() <= 1e-13 * exact.max(1.0));
        }
        assert_eq!(p.physical_pressure(0.0).unwrap(), 0.0);
        assert_eq!(p.physical_pressure(1.0).unwrap(), 1.0);
        assert_eq!(p.physical_pressure(2.0).unwrap(), 8.0);
        assert!(matches!(p.modified_pressure(-1.0), Err(Error::Domain { .. })));
        assert!(matches!(p.physical_pressure(-1e-3), Err(Error::Domain { .. })));
    }

    #[test]
    fn modified_pressure_matches_quadrature_oracle() {
        let p = p();
        let g = p.gamma;
        let s = p.m1 + 0.5;
        // Split at m1 so each panel integrand is smooth.
        let oracle = quad(|t| g * powf(t, g - 1.0), 0.0, p.m1, 64)
            + quad(|t| g * powf(t, g - 1.0) * p.cutoff(t), p.m1, s, 64);
        let closed = p.modified_pressure(s).unwrap();
        assert!((closed - oracle).abs() <= 1e-12 * oracle, "{closed} vs {oracle}");

        // Non-integer exponent as well; t^1.7 is not smooth at 0, so the lower
        // panel uses its antiderivative.
        let mut q = p.clone();
        q.gamma = 2.7;
        let oracle = powf(q.m1, 2.7)
            + quad(|t| 2.7 * powf(t, 1.7) * q.cutoff(t), q.m1, s, 256);
        let closed = q.modified_pressure(s).unwrap();
        assert!((closed - oracle).abs() <= 1e-12 * oracle, "{closed} vs {oracle}");
    }

    #[test]
    fn modified_pressure_is_flat_above_m2() {
        let p = p();
        let top = p.modified_pressure(p.m2).unwrap();
        assert_eq!(p.modified_pressure(p.m2 + 3.0).unwrap(), top);
    }

    #[test]
    fn validation_lists_every_violation() {
        let mut p = p();
        p.gamma = 1.5;
        p.m1 = 2.0;
        p.dt = -1.0;
        let Err(Error::InvalidParams(list)) = p.validate() else { panic!("expected failure") };
        assert_eq!(list.len(), 3, "{list:?}");
        assert!(list.iter().any(|m| m.starts_with("gamma")));
        assert!(list.iter().any(|m| m.starts_with("m2 - m1")));
        assert!(list.iter().any(|m| m.starts_with("dt")));
        assert!(Params::default().validate().is_ok());
        assert!((Params::default().alpha() * Params::default().dt - 1.0).abs() < 1e-15);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn cutoff_monotone_and_bounded(a in -1.0f64..6.0, b in -1.0f64..6.0) {
                let p = Params::default();
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                prop_assert!(p.cutoff(lo) >= p.cutoff(hi));
                prop_assert!((0.0..=1.0).contains(&p.cutoff(a)));
                prop_assert!(p.cutoff_derivative(a) <= 0.0);
            }

            #[test]
            fn cutoff_derivative_matches_central_difference(s in 3.001f64..3.999) {
                let p = Params::default();
                let h = 1e-4;
                let fd = (p.cutoff(s + h) - p.cutoff(s - h)) / (2.0 * h);
                // Third derivative of the cubic is 12, so the error is 2 h^2.
                prop_assert!((p.cutoff_derivative(s) - fd).abs() <= 3.0 * h * h);
                prop_assert!(p.cutoff_derivative(s) < 0.0);
            }

            #[test]
            fn modified_pressure_below_physical(a in 0.0f64..6.0, b in 0.0f64..6.0) {
                let p = Params::default();
                let pa = p.modified_pressure(a).unwrap();
                let pi = p.physical_pressure(a).unwrap();
                prop_assert!(pa <= pi * (1.0 + 1e-13));
                if a <= p.m1 {
                    prop_assert!((pa - pi).abs() <= 1e-13 * pi.max(1.0));
                } else {
                    prop_assert!(pa < pi);
                }
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                prop_assert!(p.modified_pressure(lo).unwrap() <= p.modified_pressure(hi).unwrap() * (1.0 + 1e-14));
            }
        }
    }
}
