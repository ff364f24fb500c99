//! Composite quadrature on uniform nodes.

use crate::error::{Error, Result};

/// Composite trapezoid rule for samples `y` with spacing `h`.
pub fn trapezoid(y: &[f64], h: f64) -> f64 {
    match y.len() {
        0 | 1 => 0.0,
        n => h * (0.5 * (y[0] + y[n - 1]) + y[1..n - 1].iter().sum::<f64>()),
    }
}

/// Composite Simpson rule; needs an odd number of at least three samples.
pub fn simpson(y: &[f64], h: f64) -> Result<f64> {
    let n = y.len();
    if n < 3 || n.is_multiple_of(2) {
        return Err(Error::Precondition(format!(
            "Simpson's rule needs an odd number (>= 3) of nodes, got {n}"
        )));
    }
    let mut acc = y[0] + y[n - 1];
    for (k, v) in y.iter().enumerate().take(n - 1).skip(1) {
        acc += if k % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    Ok(acc * h / 3.0)
}

/// Integrates `f` over `[lo, hi]` with Simpson's rule on `nodes` points.
pub fn simpson_fn<F: FnMut(f64) -> Result<f64>>(mut f: F, lo: f64, hi: f64, nodes: usize) -> Result<f64> {
    if nodes < 3 || nodes.is_multiple_of(2) {
        return Err(Error::Precondition(format!(
            "Simpson's rule needs an odd number (>= 3) of nodes, got {nodes}"
        )));
    }
    let h = (hi - lo) / (nodes - 1) as f64;
    let ys = (0..nodes).map(|k| f(lo + k as f64 * h)).collect::<Result<Vec<_>>>()?;
    simpson(&ys, h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_is_exact_on_cubics() {
        let v = simpson_fn(|x| Ok(x * x * x - 2.0 * x + 1.0), 0.0, 2.0, 5).unwrap();
        assert!((v - 2.0).abs() < 1e-14);
    }

    #[test]
    fn simpson_converges_on_exponential() {
        let v = simpson_fn(|x| Ok(x.exp()), 0.0, 1.0, 201).unwrap();
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-10);
    }

    #[test]
    fn simpson_rejects_even_count() {
        assert!(simpson(&[1.0, 2.0], 1.0).is_err());
        assert!(simpson(&[1.0, 2.0, 3.0, 4.0], 1.0).is_err());
    }

    #[test]
    fn trapezoid_is_exact_on_lines() {
        let y: Vec<f64> = (0..11).map(|k| 3.0 * k as f64 * 0.1 + 1.0).collect();
        assert!((trapezoid(&y, 0.1) - 2.5).abs() < 1e-14);
        assert_eq!(trapezoid(&[5.0], 0.1), 0.0);
    }
}
