use navslip_core::continuity::{solve_density, ContinuityProblem};
use navslip_core::diagnostics::{energy_inequality_check, entropy_step_check, EnergyLedger};
use navslip_core::grid::{divergence, sym_grad_energy};
use navslip_core::momentum::apply_lame;
use navslip_core::stepper::{advance_step, State};
use navslip_core::testfn::{random_scalar, random_vector, SeededRng};
use navslip_core::{Grid, Params};
use proptest::prelude::*;

fn params(n: usize, dt: f64) -> Params {
    let h = 1.0 / n as f64;
    Params { nx: n, ny: n, dt, eps: h * h, ..Params::default() }
}

fn inner(a: &navslip_core::VectorField, b: &navslip_core::VectorField) -> f64 {
    a.u.iter().zip(&b.u).chain(a.v.iter().zip(&b.v)).map(|(x, y)| x * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn density_solve_keeps_sign_bounds_and_mass(
        seed in any::<u64>(),
        n in 8usize..20,
        base in 0.2f64..3.4,
        amp in 0.0f64..0.6,
        speed in 0.0f64..8.0,
        dt in 0.002f64..0.05,
    ) {
        let p = params(n, dt);
        let g = Grid::from_params(&p).unwrap();
        let mut rng = SeededRng::new(seed);
        let h = random_scalar(g, &mut rng).map(|x| (base + amp * x / 3.0).max(0.0));
        let v = random_vector(g, &mut rng).scaled(speed);
        // keep dt max(-div v) <= 1, where the density iteration is reliable
        let c = dt * divergence(&v).values.iter().fold(0.0f64, |a, &b| a.max(-b));
        let v = if c > 1.0 { v.scaled(1.0 / c) } else { v };
        let (rho, _) = solve_density(&ContinuityProblem::new(&v, &h, &p)).unwrap();
        prop_assert!(rho.min() >= -1e-12 * p.m2);
        prop_assert!(rho.max() <= p.m2 + 1e-8);
        let m0 = h.integrate();
        prop_assert!(rho.integrate() <= m0 + 1e-8);
        if h.max() < p.m1 && rho.max() < p.m1 {
            prop_assert!((rho.integrate() - m0).abs() <= 1e-8 * m0);
        }
    }

    #[test]
    fn lame_is_symmetric_and_coercive(seed in any::<u64>(), n in 6usize..16, nu in -0.5f64..2.0, friction in 0.0f64..20.0) {
        let p = Params { nu, friction, ..params(n, 0.01) };
        let g = Grid::from_params(&p).unwrap();
        let mut rng = SeededRng::new(seed);
        let (a, b) = (random_vector(g, &mut rng), random_vector(g, &mut rng));
        let (la, lb) = (apply_lame(&a, &p, true), apply_lame(&b, &p, true));
        let (ab, ba) = (inner(&la, &b), inner(&a, &lb));
        prop_assert!((ab - ba).abs() <= 1e-9 * (ab.abs() + ba.abs() + 1.0));
        let q = inner(&apply_lame(&a, &p, false), &a) * g.hx * g.hy;
        prop_assert!(q >= 2.0 * (p.mu + p.nu.min(0.0)) * sym_grad_energy(&a) - 1e-10 * q.abs());
    }

    #[test]
    fn one_step_satisfies_the_ledger(seed in any::<u64>(), amp in 0.0f64..0.8, speed in 0.0f64..1.5, friction in prop::sample::select(vec![0.0, 1.0, 10.0])) {
        let p = Params { friction, ..params(12, 0.01) };
        let g = Grid::from_params(&p).unwrap();
        let mut rng = SeededRng::new(seed);
        let rho = random_scalar(g, &mut rng).map(|x| 1.0 + amp * x / 3.0);
        let s0 = State::initial(rho, random_vector(g, &mut rng).scaled(speed), &p).unwrap();
        let s1 = advance_step(&s0, &p).unwrap();
        let e = energy_inequality_check(&s0, &s1, &p).unwrap();
        let e0 = e.kinetic_prev + e.elastic_prev;
        prop_assert!(e.passes(e0), "energy margin {}", e.margin);
        let h = entropy_step_check(&s0, &s1, &p).unwrap();
        prop_assert!(h.passes(s0.rho.max(), g.area(), p.dt), "entropy margin {}", h.margin);
        let ledger = EnergyLedger::from_states(&[s0, s1], &p).unwrap();
        prop_assert!(ledger.all_ok());
    }
}
