//! Small regression helpers for convergence and scaling studies.

use crate::math::ln;

/// Least-squares slope and intercept of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Slope of `ln y` against `ln x`; `None` if any value is nonpositive.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return None;
    }
    let lx: alloc::vec::Vec<f64> = x.iter().map(|v| ln(*v)).collect();
    let ly: alloc::vec::Vec<f64> = y.iter().map(|v| ln(*v)).collect();
    linear_fit(&lx, &ly).map(|(s, _)| s)
}

/// Observed order between two errors at a refinement ratio of 2.
pub fn order_of(coarse: f64, fine: f64) -> f64 {
    ln(coarse / fine) / core::f64::consts::LN_2
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_lines() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: alloc::vec::Vec<f64> = x.iter().map(|v| 3.0 * v - 1.0).collect();
        let (s, c) = linear_fit(&x, &y).unwrap();
        assert!((s - 3.0).abs() < 1e-14 && (c + 1.0).abs() < 1e-14);
        let p: alloc::vec::Vec<f64> = x.iter().map(|v| 5.0 * libm::pow(*v, 0.5)).collect();
        assert!((loglog_slope(&x, &p).unwrap() - 0.5).abs() < 1e-14);
        assert!(loglog_slope(&[1.0, 2.0], &[0.0, 1.0]).is_none());
        assert!((order_of(4.0, 1.0) - 2.0).abs() < 1e-15);
        assert!(linear_fit(&[1.0], &[1.0]).is_none());
    }
}
