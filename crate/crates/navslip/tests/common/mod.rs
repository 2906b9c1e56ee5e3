//! Reference implementations written from the equations, cell by cell, for
//! checking the solver's assembled operators.
#![allow(dead_code)]

use navslip_core::{Grid, Params, ScalarField, VectorField};

pub fn cutoff(p: &Params, s: f64) -> f64 {
    let t = ((s - p.m1) / (p.m2 - p.m1)).clamp(0.0, 1.0);
    1.0 - 3.0 * t * t + 2.0 * t * t * t
}

/// Cell residual of `alpha (rho - K(rho) h) + div(K rho v) - eps lap rho`
/// integrated over each cell, visiting the four neighbours of every cell.
/// Face transport uses the harmonic mean of the neighbouring cutoffs and the
/// upwind density.
pub fn continuity_residual(rho: &ScalarField, h: &ScalarField, v: &VectorField, p: &Params) -> Vec<f64> {
    let g = rho.grid;
    let alpha = 1.0 / p.dt;
    let area = g.hx * g.hy;
    let mut out = vec![0.0; g.nx * g.ny];
    for j in 0..g.ny {
        for i in 0..g.nx {
            let c = j * g.nx + i;
            let rc = rho.values[c];
            let mut r = alpha * area * (rc - cutoff(p, rc) * h.values[c]);
            // (neighbour, outward normal velocity, face length, centre distance)
            let mut nbs = Vec::with_capacity(4);
            if i > 0 {
                nbs.push((c - 1, -v.u[j * (g.nx + 1) + i], g.hy, g.hx));
            }
            if i + 1 < g.nx {
                nbs.push((c + 1, v.u[j * (g.nx + 1) + i + 1], g.hy, g.hx));
            }
            if j > 0 {
                nbs.push((c - g.nx, -v.v[j * g.nx + i], g.hx, g.hy));
            }
            if j + 1 < g.ny {
                nbs.push((c + g.nx, v.v[(j + 1) * g.nx + i], g.hx, g.hy));
            }
            for (n, un, len, dist) in nbs {
                let rn = rho.values[n];
                let (a, b) = (cutoff(p, rc), cutoff(p, rn));
                let k = if a + b > 0.0 { 2.0 * a * b / (a + b) } else { 0.0 };
                let up = if un > 0.0 { rc } else { rn };
                r += len * un * k * up - len * p.eps * (rn - rc) / dist;
            }
            out[c] = r;
        }
    }
    out
}

/// `-mu lap w - (mu + nu) grad div w + friction` on every unpinned face.
/// Tangential values outside the walls come from ghost cells satisfying
/// `mu dw/dn + f w = 0` at the wall (a mirror when `f = 0`); normal wall
/// faces are zero.
pub fn lame(w: &VectorField, p: &Params) -> VectorField {
    let g = w.grid;
    let (nx, ny, hx, hy) = (g.nx as isize, g.ny as isize, g.hx, g.hy);
    let ghost = |inner: f64, h: f64| {
        let b = 0.5 * p.friction * h / p.mu;
        inner * (1.0 - b) / (1.0 + b)
    };
    let u = |a: isize, j: isize| -> f64 {
        if a <= 0 || a >= nx {
            return 0.0;
        }
        if j < 0 {
            ghost(w.u[a as usize], hy)
        } else if j >= ny {
            ghost(w.u[((ny - 1) * (nx + 1) + a) as usize], hy)
        } else {
            w.u[(j * (nx + 1) + a) as usize]
        }
    };
    let v = |i: isize, b: isize| -> f64 {
        if b <= 0 || b >= ny {
            return 0.0;
        }
        if i < 0 {
            ghost(w.v[(b * nx) as usize], hx)
        } else if i >= nx {
            ghost(w.v[(b * nx + nx - 1) as usize], hx)
        } else {
            w.v[(b * nx + i) as usize]
        }
    };
    let div = |i: isize, j: isize| (u(i + 1, j) - u(i, j)) / hx + (v(i, j + 1) - v(i, j)) / hy;
    let mut out = VectorField::zeros(g);
    for j in 0..ny {
        for a in 1..nx {
            let lap = (u(a + 1, j) - 2.0 * u(a, j) + u(a - 1, j)) / (hx * hx) + (u(a, j + 1) - 2.0 * u(a, j) + u(a, j - 1)) / (hy * hy);
            let gd = (div(a, j) - div(a - 1, j)) / hx;
            out.u[(j * (nx + 1) + a) as usize] = -p.mu * lap - (p.mu + p.nu) * gd;
        }
    }
    for b in 1..ny {
        for i in 0..nx {
            let lap = (v(i + 1, b) - 2.0 * v(i, b) + v(i - 1, b)) / (hx * hx) + (v(i, b + 1) - 2.0 * v(i, b) + v(i, b - 1)) / (hy * hy);
            let gd = (div(i, b) - div(i, b - 1)) / hy;
            out.v[(b * nx + i) as usize] = -p.mu * lap - (p.mu + p.nu) * gd;
        }
    }
    out
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub fn vec_of(w: &VectorField) -> Vec<f64> {
    w.u.iter().chain(&w.v).copied().collect()
}

pub fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Area-weighted discrete L2 norm of cell values.
pub fn cell_l2(g: &Grid, e: &[f64]) -> f64 {
    (e.iter().map(|x| x * x).sum::<f64>() * g.hx * g.hy).sqrt()
}

pub fn rate(coarse: f64, fine: f64) -> f64 {
    (coarse / fine).log2()
}

pub fn unit_params(n: usize) -> Params {
    let h = 1.0 / n as f64;
    Params { nx: n, ny: n, eps: h * h, ..Params::default() }
}
