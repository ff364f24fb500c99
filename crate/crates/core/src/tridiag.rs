//! Tridiagonal systems and the elimination used by the time stepper.

use crate::error::{Error, Result};

/// Pivots below this magnitude are treated as singular.
pub const PIVOT_TOL: f64 = 1e-14;

/// `sub[k]` couples row `k + 1` to unknown `k`; `sup[k]` couples row `k` to unknown `k + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalSystem {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl TridiagonalSystem {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    fn check_shape(&self) -> Result<()> {
        let m = self.diag.len();
        if m == 0 {
            return Err(Error::Precondition("empty tridiagonal system".into()));
        }
        if self.sub.len() != m - 1 || self.sup.len() != m - 1 || self.rhs.len() != m {
            return Err(Error::Precondition(format!(
                "inconsistent band lengths: sub {}, diag {m}, sup {}, rhs {}",
                self.sub.len(),
                self.sup.len(),
                self.rhs.len()
            )));
        }
        Ok(())
    }

    pub fn is_strictly_diagonally_dominant(&self) -> bool {
        let m = self.diag.len();
        (0..m).all(|k| {
            let off = if k > 0 { self.sub[k - 1].abs() } else { 0.0 }
                + if k + 1 < m { self.sup[k].abs() } else { 0.0 };
            self.diag[k].abs() > off
        })
    }

    /// `max_k |(A u)_k - rhs_k|`.
    pub fn max_residual(&self, u: &[f64]) -> f64 {
        let m = self.diag.len();
        (0..m)
            .map(|k| {
                let mut r = self.diag[k] * u[k] - self.rhs[k];
                if k > 0 {
                    r += self.sub[k - 1] * u[k - 1];
                }
                if k + 1 < m {
                    r += self.sup[k] * u[k + 1];
                }
                r.abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Solves the system by forward elimination and back substitution, no pivoting.
pub fn solve_tridiagonal(sys: &TridiagonalSystem) -> Result<Vec<f64>> {
    sys.check_shape()?;
    let lu = TridiagonalFactor::new(&sys.sub, &sys.diag, &sys.sup)?;
    let mut u = sys.rhs.clone();
    lu.solve_in_place(&mut u);
    Ok(u)
}

/// Elimination factors of a fixed tridiagonal matrix, reusable across right-hand sides.
#[derive(Debug, Clone)]
pub struct TridiagonalFactor {
    sub: Vec<f64>,
    // modified superdiagonal c'_k = c_k / pivot_k
    upper: Vec<f64>,
    pivots: Vec<f64>,
}

impl TridiagonalFactor {
    pub fn new(sub: &[f64], diag: &[f64], sup: &[f64]) -> Result<Self> {
        let m = diag.len();
        if m == 0 || sub.len() + 1 != m || sup.len() + 1 != m {
            return Err(Error::Precondition("inconsistent tridiagonal bands".into()));
        }
        let mut pivots = Vec::with_capacity(m);
        let mut upper = Vec::with_capacity(m.saturating_sub(1));
        let mut pivot = diag[0];
        for k in 0..m {
            if k > 0 {
                pivot = diag[k] - sub[k - 1] * upper[k - 1];
            }
            if pivot.abs() < PIVOT_TOL || !pivot.is_finite() {
                return Err(Error::SingularSystem { row: k, pivot });
            }
            pivots.push(pivot);
            if k + 1 < m {
                upper.push(sup[k] / pivot);
            }
        }
        Ok(TridiagonalFactor { sub: sub.to_vec(), upper, pivots })
    }

    pub fn len(&self) -> usize {
        self.pivots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pivots.is_empty()
    }

    /// Overwrites `rhs` with the solution.
    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let m = self.pivots.len();
        debug_assert_eq!(rhs.len(), m);
        rhs[0] /= self.pivots[0];
        for k in 1..m {
            rhs[k] = (rhs[k] - self.sub[k - 1] * rhs[k - 1]) / self.pivots[k];
        }
        for k in (0..m - 1).rev() {
            rhs[k] -= self.upper[k] * rhs[k + 1];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity() {
        let sys = TridiagonalSystem {
            sub: vec![0.0; 2],
            diag: vec![1.0; 3],
            sup: vec![0.0; 2],
            rhs: vec![3.0, 4.0, 5.0],
        };
        assert_eq!(solve_tridiagonal(&sys).unwrap(), vec![3.0, 4.0, 5.0]);
    }

    #[test]
    fn two_by_two() {
        let sys = TridiagonalSystem {
            sub: vec![-1.0],
            diag: vec![2.0, 2.0],
            sup: vec![-1.0],
            rhs: vec![1.0, 1.0],
        };
        let u = solve_tridiagonal(&sys).unwrap();
        assert!((u[0] - 1.0).abs() < 1e-15 && (u[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_unknown() {
        let sys = TridiagonalSystem { sub: vec![], diag: vec![4.0], sup: vec![], rhs: vec![2.0] };
        assert_eq!(solve_tridiagonal(&sys).unwrap(), vec![0.5]);
    }

    #[test]
    fn zero_pivot_is_reported() {
        let sys = TridiagonalSystem {
            sub: vec![1.0, 0.0],
            diag: vec![1.0, 1.0, 1.0],
            sup: vec![1.0, 0.0],
            rhs: vec![1.0, 1.0, 1.0],
        };
        match solve_tridiagonal(&sys) {
            Err(Error::SingularSystem { row, .. }) => assert_eq!(row, 1),
            other => panic!("expected singular system, got {other:?}"),
        }
        let zero_first = TridiagonalSystem {
            sub: vec![1.0],
            diag: vec![0.0, 1.0],
            sup: vec![1.0],
            rhs: vec![1.0, 1.0],
        };
        assert!(matches!(solve_tridiagonal(&zero_first), Err(Error::SingularSystem { row: 0, .. })));
    }

    #[test]
    fn bad_shape_is_rejected() {
        let sys = TridiagonalSystem { sub: vec![1.0], diag: vec![1.0], sup: vec![], rhs: vec![1.0] };
        assert!(matches!(solve_tridiagonal(&sys), Err(Error::Precondition(_))));
    }

    fn dominant_system() -> impl Strategy<Value = TridiagonalSystem> {
        (1usize..40).prop_flat_map(|m| {
            let off = prop::collection::vec(-1.0..1.0f64, m.saturating_sub(1));
            (
                off.clone(),
                off,
                prop::collection::vec(0.1..3.0f64, m),
                prop::collection::vec(-1e3..1e3f64, m),
            )
                .prop_map(|(sub, sup, extra, rhs)| {
                    let m = rhs.len();
                    let diag = (0..m)
                        .map(|k| {
                            let l = if k > 0 { sub[k - 1].abs() } else { 0.0 };
                            let r = if k + 1 < m { sup[k].abs() } else { 0.0 };
                            l + r + extra[k]
                        })
                        .collect();
                    TridiagonalSystem { sub, diag, sup, rhs }
                })
        })
    }

    proptest! {
        #[test]
        fn residual_is_small(sys in dominant_system()) {
            prop_assert!(sys.is_strictly_diagonally_dominant());
            let u = solve_tridiagonal(&sys).unwrap();
            let scale = 1.0 + sys.rhs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            prop_assert!(sys.max_residual(&u) <= 1e-10 * scale);
        }
    }
}
