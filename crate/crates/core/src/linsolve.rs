//! Compressed-row sparse operators and the two Krylov solvers used by the
//! sub-solvers: Jacobi-preconditioned conjugate gradients for the symmetric
//! systems and Jacobi-preconditioned BiCGSTAB for the upwinded continuity
//! system.
//!
//! All reductions run sequentially in index order, so identical inputs give
//! bitwise identical iterates.

use alloc::vec;
use alloc::vec::Vec;

use crate::grid::dot;
use crate::math::sqrt;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    /// Final relative residual `|A x - b| / |b|`, recomputed from scratch.
    pub residual: f64,
    pub converged: bool,
}

impl SolveStats {
    pub(crate) const TRIVIAL: SolveStats = SolveStats { iterations: 0, residual: 0.0, converged: true };
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    /// Declared by the assembler; checked in debug builds.
    pub symmetric: bool,
}

/// Row-by-row assembler. Entries of one row may arrive in any order and
/// repeated columns are summed.
#[derive(Debug)]
pub struct SparseBuilder {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    pending: Vec<(usize, f64)>,
}

impl SparseBuilder {
    pub fn new(n: usize) -> Self {
        SparseBuilder { n, row_ptr: vec![0], cols: Vec::new(), vals: Vec::new(), pending: Vec::new() }
    }

    pub fn with_capacity(n: usize, nnz: usize) -> Self {
        let mut b = Self::new(n);
        b.cols.reserve(nnz);
        b.vals.reserve(nnz);
        b.row_ptr.reserve(n);
        b
    }

    /// Adds `value` at column `col` of the row being built.
    #[inline]
    pub fn add(&mut self, col: usize, value: f64) {
        debug_assert!(col < self.n);
        self.pending.push((col, value));
    }

    /// Closes the current row.
    pub fn finish_row(&mut self) {
        self.pending.sort_by_key(|e| e.0);
        let mut last: Option<usize> = None;
        for &(c, v) in &self.pending {
            if last == Some(c) {
                *self.vals.last_mut().expect("nonempty") += v;
            } else {
                self.cols.push(c);
                self.vals.push(v);
                last = Some(c);
            }
        }
        self.pending.clear();
        self.row_ptr.push(self.cols.len());
    }

    pub fn build(self, symmetric: bool) -> SparseOperator {
        assert_eq!(self.row_ptr.len(), self.n + 1, "every row must be finished");
        let op = SparseOperator { n: self.n, row_ptr: self.row_ptr, cols: self.cols, vals: self.vals, symmetric };
        debug_assert!(!symmetric || op.symmetry_defect() <= 1e-12 * op.max_abs().max(1.0));
        op
    }
}

impl SparseOperator {
    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let mut b = SparseBuilder::new(d.len());
        for (i, &x) in d.iter().enumerate() {
            b.add(i, x);
            b.finish_row();
        }
        b.build(true)
    }

    /// Dense row-major matrix; zero entries are dropped.
    pub fn from_dense(n: usize, a: &[f64], symmetric: bool) -> Self {
        let mut b = SparseBuilder::new(n);
        for i in 0..n {
            for j in 0..n {
                if a[i * n + j] != 0.0 {
                    b.add(j, a[i * n + j]);
                }
            }
            b.finish_row();
        }
        b.build(symmetric)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|e| e.0 == j).map_or(0.0, |e| e.1)
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            *yi = s;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.apply_into(x, &mut y);
        y
    }

    /// `|b - A x| / |b|` (or `|A x|` when `b = 0`).
    pub fn relative_residual(&self, x: &[f64], b: &[f64]) -> f64 {
        let ax = self.apply(x);
        let r: f64 = ax.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
        let nb = dot(b, b);
        if nb == 0.0 {
            sqrt(r)
        } else {
            sqrt(r / nb)
        }
    }

    fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest `|a_ij - a_ji|`.
    pub fn symmetry_defect(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.n {
            for (j, a) in self.row(i) {
                m = m.max((a - self.get(j, i)).abs());
            }
        }
        m
    }

    pub fn has_full_diagonal(&self) -> bool {
        (0..self.n).all(|i| self.get(i, i) != 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    /// Defaults to `10 * dim`.
    pub max_iter: Option<usize>,
}

impl SolveOptions {
    pub fn with_tol(tol: f64) -> Self {
        SolveOptions { tol, max_iter: None }
    }

    fn cap(&self, n: usize) -> usize {
        self.max_iter.unwrap_or(10 * n.max(1))
    }
}

fn inv_diag(op: &SparseOperator) -> Vec<f64> {
    op.diag().iter().map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 }).collect()
}

fn finish(op: &SparseOperator, x: Vec<f64>, b: &[f64], iterations: usize, tol: f64) -> Result<(Vec<f64>, SolveStats)> {
    let residual = op.relative_residual(&x, b);
    let stats = SolveStats { iterations, residual, converged: residual <= tol };
    if stats.converged {
        Ok((x, stats))
    } else {
        Err(Error::LinearSolve { stats, breakdown: false })
    }
}

/// Preconditioned conjugate gradients for symmetric positive (semi)definite
/// operators. Semidefinite systems converge when `rhs` lies in the range.
pub fn solve_spd(op: &SparseOperator, rhs: &[f64], x0: Option<&[f64]>, opts: SolveOptions) -> Result<(Vec<f64>, SolveStats)> {
    let n = op.dim();
    assert_eq!(rhs.len(), n);
    let nb = sqrt(dot(rhs, rhs));
    if nb == 0.0 {
        return Ok((vec![0.0; n], SolveStats::TRIVIAL));
    }
    let target = opts.tol * nb;
    let minv = inv_diag(op);
    let mut x = x0.map_or_else(|| vec![0.0; n], |v| v.to_vec());
    let mut r = op.apply(&x);
    for (ri, bi) in r.iter_mut().zip(rhs) {
        *ri = bi - *ri;
    }
    let mut z: Vec<f64> = r.iter().zip(&minv).map(|(a, m)| a * m).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let cap = opts.cap(n);
    let mut it = 0;
    while it < cap {
        if sqrt(dot(&r, &r)) <= target {
            // Guard against drift of the recursive residual.
            let mut true_r = op.apply(&x);
            for (ri, bi) in true_r.iter_mut().zip(rhs) {
                *ri = bi - *ri;
            }
            if sqrt(dot(&true_r, &true_r)) <= target {
                break;
            }
            r = true_r;
            z = r.iter().zip(&minv).map(|(a, m)| a * m).collect();
            p.copy_from_slice(&z);
            rz = dot(&r, &z);
        }
        op.apply_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            let stats = SolveStats { iterations: it, residual: op.relative_residual(&x, rhs), converged: false };
            if stats.residual <= opts.tol {
                return Ok((x, SolveStats { converged: true, ..stats }));
            }
            return Err(Error::LinearSolve { stats, breakdown: true });
        }
        let step = rz / pap;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * minv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        it += 1;
    }
    finish(op, x, rhs, it, opts.tol)
}

/// Jacobi-preconditioned BiCGSTAB for general nonsingular operators.
pub fn solve_general(op: &SparseOperator, rhs: &[f64], x0: Option<&[f64]>, opts: SolveOptions) -> Result<(Vec<f64>, SolveStats)> {
    let n = op.dim();
    assert_eq!(rhs.len(), n);
    let nb = sqrt(dot(rhs, rhs));
    if nb == 0.0 {
        return Ok((vec![0.0; n], SolveStats::TRIVIAL));
    }
    let target = opts.tol * nb;
    let minv = inv_diag(op);
    let mut x = x0.map_or_else(|| vec![0.0; n], |v| v.to_vec());
    let residual_of = |x: &[f64]| {
        let mut r = op.apply(x);
        for (ri, bi) in r.iter_mut().zip(rhs) {
            *ri = bi - *ri;
        }
        r
    };
    let mut r = residual_of(&x);
    let mut r_hat = r.clone();
    let mut rho_old = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut phat = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut shat = vec![0.0; n];
    let mut t = vec![0.0; n];
    let cap = opts.cap(n);
    let mut it = 0;
    let breakdown = |x: &[f64], it: usize| {
        let stats = SolveStats { iterations: it, residual: op.relative_residual(x, rhs), converged: false };
        if stats.residual <= opts.tol {
            Ok((x.to_vec(), SolveStats { converged: true, ..stats }))
        } else {
            Err(Error::LinearSolve { stats, breakdown: true })
        }
    };
    while it < cap {
        if sqrt(dot(&r, &r)) <= target {
            let true_r = residual_of(&x);
            if sqrt(dot(&true_r, &true_r)) <= target {
                break;
            }
            // Restart from the true residual.
            r = true_r;
            r_hat.copy_from_slice(&r);
            rho_old = 1.0;
            alpha = 1.0;
            omega = 1.0;
            v.iter_mut().for_each(|e| *e = 0.0);
            p.iter_mut().for_each(|e| *e = 0.0);
        }
        let rho = dot(&r_hat, &r);
        if rho == 0.0 || omega == 0.0 {
            return breakdown(&x, it);
        }
        let beta = (rho / rho_old) * (alpha / omega);
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
            phat[i] = p[i] * minv[i];
        }
        op.apply_into(&phat, &mut v);
        let rv = dot(&r_hat, &v);
        if rv == 0.0 {
            return breakdown(&x, it);
        }
        alpha = rho / rv;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if sqrt(dot(&s, &s)) <= target {
            for i in 0..n {
                x[i] += alpha * phat[i];
            }
            r.copy_from_slice(&s);
            it += 1;
            continue;
        }
        for i in 0..n {
            shat[i] = s[i] * minv[i];
        }
        op.apply_into(&shat, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 {
            return breakdown(&x, it);
        }
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * phat[i] + omega * shat[i];
            r[i] = s[i] - omega * t[i];
        }
        rho_old = rho;
        it += 1;
    }
    finish(op, x, rhs, it, opts.tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testfn::SeededRng;

    /// Gaussian elimination with partial pivoting; the dense oracle.
    pub(crate) fn dense_solve(n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut m = a.to_vec();
        let mut x = b.to_vec();
        for k in 0..n {
            let piv = (k..n).max_by(|&i, &j| m[i * n + k].abs().total_cmp(&m[j * n + k].abs())).unwrap();
            if piv != k {
                for c in 0..n {
                    m.swap(k * n + c, piv * n + c);
                }
                x.swap(k, piv);
            }
            for i in k + 1..n {
                let f = m[i * n + k] / m[k * n + k];
                for c in k..n {
                    m[i * n + c] -= f * m[k * n + c];
                }
                x[i] -= f * x[k];
            }
        }
        for k in (0..n).rev() {
            let mut s = x[k];
            for c in k + 1..n {
                s -= m[k * n + c] * x[c];
            }
            x[k] = s / m[k * n + k];
        }
        x
    }

    fn opts() -> SolveOptions {
        SolveOptions::with_tol(1e-10)
    }

    #[test]
    fn identity_and_diagonal() {
        let r = [1.0, -2.0, 3.5];
        let (x, s) = solve_spd(&SparseOperator::identity(3), &r, None, opts()).unwrap();
        assert_eq!(x, r.to_vec());
        assert!(s.converged);
        let (x, _) = solve_general(&SparseOperator::identity(3), &r, None, opts()).unwrap();
        assert_eq!(x, r.to_vec());
        let d = [2.0, 4.0, 0.5];
        let (x, _) = solve_spd(&SparseOperator::diagonal(&d), &r, None, opts()).unwrap();
        for i in 0..3 {
            assert!((x[i] - r[i] / d[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_rhs_is_trivial() {
        let (x, s) = solve_general(&SparseOperator::identity(4), &[0.0; 4], None, opts()).unwrap();
        assert_eq!(x, vec![0.0; 4]);
        assert_eq!(s.iterations, 0);
    }

    #[test]
    fn neumann_poisson_1d_matches_dense_oracle() {
        // -u'' = f on 32 cells with zero-flux ends and a mean-zero gauge.
        let n = 32;
        let h = 1.0 / n as f64;
        let mut dense = vec![0.0; n * n];
        for i in 0..n {
            if i > 0 {
                dense[i * n + i - 1] -= 1.0 / (h * h);
                dense[i * n + i] += 1.0 / (h * h);
            }
            if i + 1 < n {
                dense[i * n + i + 1] -= 1.0 / (h * h);
                dense[i * n + i] += 1.0 / (h * h);
            }
        }
        let mut f: Vec<f64> = (0..n).map(|i| libm::cos(core::f64::consts::PI * (i as f64 + 0.5) * h)).collect();
        let mean = f.iter().sum::<f64>() / n as f64;
        f.iter_mut().for_each(|x| *x -= mean);
        let op = SparseOperator::from_dense(n, &dense, true);
        let (mut x, stats) = solve_spd(&op, &f, None, SolveOptions::with_tol(1e-12)).unwrap();
        assert!(stats.converged);
        let mx = x.iter().sum::<f64>() / n as f64;
        x.iter_mut().for_each(|v| *v -= mx);
        // Oracle: bordered system [A 1; 1^T 0] pins the mean.
        let m = n + 1;
        let mut bordered = vec![0.0; m * m];
        for i in 0..n {
            for j in 0..n {
                bordered[i * m + j] = dense[i * n + j];
            }
            bordered[i * m + n] = 1.0;
            bordered[n * m + i] = 1.0;
        }
        let mut rhs = f.clone();
        rhs.push(0.0);
        let oracle = dense_solve(m, &bordered, &rhs);
        for i in 0..n {
            assert!((x[i] - oracle[i]).abs() <= 1e-9, "{i}: {} vs {}", x[i], oracle[i]);
        }
    }

    #[test]
    fn lower_bidiagonal_matches_forward_substitution() {
        let n = 40;
        let mut rng = SeededRng::new(11);
        let d: Vec<f64> = (0..n).map(|_| rng.uniform(1.0, 3.0)).collect();
        let l: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let mut sb = SparseBuilder::new(n);
        for i in 0..n {
            if i > 0 {
                sb.add(i - 1, l[i]);
            }
            sb.add(i, d[i]);
            sb.finish_row();
        }
        let op = sb.build(false);
        let mut oracle = vec![0.0; n];
        for i in 0..n {
            let prev = if i > 0 { l[i] * oracle[i - 1] } else { 0.0 };
            oracle[i] = (b[i] - prev) / d[i];
        }
        let (x, _) = solve_general(&op, &b, None, SolveOptions::with_tol(1e-14)).unwrap();
        for i in 0..n {
            assert!((x[i] - oracle[i]).abs() <= 1e-12);
        }
    }

    #[test]
    fn periodic_upwind_advection_reaction_matches_dense_oracle() {
        // alpha u + (c u)' = alpha s, c > 0, first-order upwind, periodic.
        let n = 50;
        let h = 1.0 / n as f64;
        let alpha = 20.0;
        let c = 1.5;
        let mut dense = vec![0.0; n * n];
        for i in 0..n {
            let im = (i + n - 1) % n;
            dense[i * n + i] += alpha + c / h;
            dense[i * n + im] -= c / h;
        }
        let s: Vec<f64> = (0..n).map(|i| 1.0 + libm::sin(2.0 * core::f64::consts::PI * i as f64 * h)).collect();
        let rhs: Vec<f64> = s.iter().map(|v| alpha * v).collect();
        let op = SparseOperator::from_dense(n, &dense, false);
        let (x, stats) = solve_general(&op, &rhs, None, SolveOptions::with_tol(1e-13)).unwrap();
        let oracle = dense_solve(n, &dense, &rhs);
        for i in 0..n {
            assert!((x[i] - oracle[i]).abs() <= 1e-9);
        }
        assert!((stats.residual - op.relative_residual(&x, &rhs)).abs() <= 1e-13);
    }

    #[test]
    fn nonconvergence_is_reported() {
        let n = 30;
        let mut dense = vec![0.0; n * n];
        for i in 0..n {
            dense[i * n + i] = 2.0;
            if i > 0 {
                dense[i * n + i - 1] = -1.0;
            }
            if i + 1 < n {
                dense[i * n + i + 1] = -1.0;
            }
        }
        let op = SparseOperator::from_dense(n, &dense, true);
        let b = vec![1.0; n];
        let err = solve_spd(&op, &b, None, SolveOptions { tol: 1e-14, max_iter: Some(2) }).unwrap_err();
        match err {
            Error::LinearSolve { stats, .. } => {
                assert_eq!(stats.iterations, 2);
                assert!(!stats.converged && stats.residual > 1e-14);
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn solves_are_deterministic_and_report_true_residual() {
        let n = 60;
        let mut rng = SeededRng::new(5);
        let mut sb = SparseBuilder::new(n);
        for i in 0..n {
            sb.add(i, 4.0 + rng.unit());
            if i > 0 {
                sb.add(i - 1, -1.0 - 0.5 * rng.unit());
            }
            if i + 1 < n {
                sb.add(i + 1, -1.0);
            }
            sb.finish_row();
        }
        let op = sb.build(false);
        let b: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let (x1, s1) = solve_general(&op, &b, None, opts()).unwrap();
        let (x2, s2) = solve_general(&op, &b, None, opts()).unwrap();
        assert_eq!(x1, x2);
        assert_eq!(s1, s2);
        assert!((s1.residual - op.relative_residual(&x1, &b)).abs() <= 1e-13);
        assert!(s1.residual <= 1e-10);
    }
}
