//! Manufactured problems with closed-form solutions.

use std::fmt;
use std::sync::Arc;

use crate::model::{Field, ParamVector, ProblemData};

/// Closed-form fields and the partial derivatives the recovery formulas need.
pub trait ExactSolution: Send + Sync {
    fn s(&self, x: f64, t: f64) -> f64;
    fn m(&self, x: f64, t: f64) -> f64;
    fn s_t(&self, x: f64, t: f64) -> f64;
    fn s_x(&self, x: f64, t: f64) -> f64;
    fn s_xx(&self, x: f64, t: f64) -> f64;
    fn m_t(&self, x: f64, t: f64) -> f64;
    fn m_x(&self, x: f64, t: f64) -> f64;
    fn m_xx(&self, x: f64, t: f64) -> f64;
}

/// A forward problem bundled with its analytic solution.
#[derive(Clone)]
pub struct ManufacturedCase {
    pub name: &'static str,
    pub params: ParamVector,
    pub data: ProblemData,
    /// Time horizon used for forward solves of this case.
    pub t_final: f64,
    exact: Arc<dyn ExactSolution>,
    biomass: Option<fn(f64) -> f64>,
    /// Space-time point where `M` reaches 1, if it does.
    pub closure_point: Option<(f64, f64)>,
}

impl fmt::Debug for ManufacturedCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ManufacturedCase")
            .field("name", &self.name)
            .field("params", &self.params)
            .field("t_final", &self.t_final)
            .field("closure_point", &self.closure_point)
            .finish_non_exhaustive()
    }
}

impl ManufacturedCase {
    pub fn exact(&self) -> &dyn ExactSolution {
        self.exact.as_ref()
    }

    pub fn exact_s(&self, x: f64, t: f64) -> f64 {
        self.exact.s(x, t)
    }

    pub fn exact_m(&self, x: f64, t: f64) -> f64 {
        self.exact.m(x, t)
    }

    /// Substrate flux `-d1 S_x(0, t)` into the domain at `x = 0`.
    pub fn exact_flux(&self, t: f64) -> f64 {
        -self.params.d1() * self.exact.s_x(0.0, t)
    }

    /// Total biomass `int_0^1 M dx`, when a closed form is available.
    pub fn exact_biomass(&self, t: f64) -> Option<f64> {
        self.biomass.map(|f| f(t))
    }
}

struct Example1;

impl ExactSolution for Example1 {
    fn s(&self, x: f64, t: f64) -> f64 {
        1.0 + (x - x * x) * (t + 1.0)
    }
    fn m(&self, x: f64, t: f64) -> f64 {
        (x - x * x) * (-t).exp()
    }
    fn s_t(&self, x: f64, _t: f64) -> f64 {
        x - x * x
    }
    fn s_x(&self, x: f64, t: f64) -> f64 {
        (1.0 - 2.0 * x) * (t + 1.0)
    }
    fn s_xx(&self, _x: f64, t: f64) -> f64 {
        -2.0 * (t + 1.0)
    }
    fn m_t(&self, x: f64, t: f64) -> f64 {
        -(x - x * x) * (-t).exp()
    }
    fn m_x(&self, x: f64, t: f64) -> f64 {
        (1.0 - 2.0 * x) * (-t).exp()
    }
    fn m_xx(&self, _x: f64, t: f64) -> f64 {
        -2.0 * (-t).exp()
    }
}

fn example1_f(x: f64, t: f64) -> f64 {
    let p = x - x * x;
    p + 2.0 * (t + 1.0) + (1.0 + p * (t + 1.0)) * p * (-t).exp() / (2.0 + (t + 1.0) * p)
}

fn example1_g(x: f64, t: f64) -> f64 {
    let p = x - x * x;
    let e = (-t).exp();
    let q = 1.0 - p * e;
    -(1.0 - 2.0 * x).powi(2) * p * p * (-4.0 * t).exp() / (q * q)
        - 2.0 * p * (1.0 - 5.0 * x + 5.0 * x * x) * (-3.0 * t).exp() / q
        - (1.0 + p * (t + 1.0)) * p * e / (2.0 + p * (t + 1.0))
}

/// `S = 1 + (x - x^2)(t + 1)`, `M = (x - x^2) e^{-t}` on `T = 1`, with all
/// coefficients one except `a = 1`, `b = 2`.
pub fn example1() -> ManufacturedCase {
    ManufacturedCase {
        name: "example1",
        params: ParamVector::example1_truth(),
        data: ProblemData {
            mu1: Field::Constant(1.0),
            mu2: Field::Constant(1.0),
            mu3: Field::Constant(0.0),
            mu4: Field::Constant(0.0),
            s0: Field::analytic(|x, _| 1.0 + x - x * x),
            m0: Field::analytic(|x, _| x - x * x),
            f: Field::analytic(example1_f),
            g: Field::analytic(example1_g),
        },
        t_final: 1.0,
        exact: Arc::new(Example1),
        biomass: Some(|t| (-t).exp() / 6.0),
        closure_point: None,
    }
}

struct Example2;

impl Example2 {
    fn shape(x: f64) -> f64 {
        4.0 * x * (1.0 - x)
    }
    fn amplitude(t: f64) -> f64 {
        t * (1.0 - t).exp()
    }
}

impl ExactSolution for Example2 {
    fn s(&self, x: f64, t: f64) -> f64 {
        1.0 - self.m(x, t)
    }
    fn m(&self, x: f64, t: f64) -> f64 {
        Self::shape(x) * Self::amplitude(t)
    }
    fn s_t(&self, x: f64, t: f64) -> f64 {
        -self.m_t(x, t)
    }
    fn s_x(&self, x: f64, t: f64) -> f64 {
        -self.m_x(x, t)
    }
    fn s_xx(&self, x: f64, t: f64) -> f64 {
        -self.m_xx(x, t)
    }
    fn m_t(&self, x: f64, t: f64) -> f64 {
        Self::shape(x) * (1.0 - t).exp() * (1.0 - t)
    }
    fn m_x(&self, x: f64, t: f64) -> f64 {
        (4.0 - 8.0 * x) * Self::amplitude(t)
    }
    fn m_xx(&self, _x: f64, t: f64) -> f64 {
        -8.0 * Self::amplitude(t)
    }
}

// the trailing quotient is S M / (K4 + S) with S = 1 - M, K4 = 1
fn example2_monod_term(x: f64, t: f64) -> f64 {
    let p = x * (1.0 - x);
    let e = (1.0 - t).exp();
    (1.0 - 4.0 * p * t * e) * p * t / (1.0 - 2.0 * p * t * e)
}

fn example2_f(x: f64, t: f64) -> f64 {
    let p = x * (1.0 - x);
    2.0 * (1.0 - t).exp() * (-4.0 * t + 2.0 * p * (t - 1.0) + example2_monod_term(x, t))
}

fn example2_g(x: f64, t: f64) -> f64 {
    let p = x * (1.0 - x);
    let e = (1.0 - t).exp();
    2.0 * e
        * (2.0 * p * (1.0 - t) + 8.0 * t * t * e * (6.0 * x - 6.0 * x * x - 1.0)
            - example2_monod_term(x, t))
}

/// `M = 4x(1-x) t e^{1-t}`, `S = 1 - M`, with `a = 0`, `b = 1`, `K2 = 0` and
/// every other coefficient one. `M` touches 1 at `(x, t) = (0.5, 1)`.
pub fn example2() -> ManufacturedCase {
    ManufacturedCase {
        name: "example2",
        params: ParamVector::new(1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0)
            .expect("example 2 coefficients are admissible"),
        data: ProblemData {
            mu1: Field::Constant(1.0),
            mu2: Field::Constant(1.0),
            mu3: Field::Constant(0.0),
            mu4: Field::Constant(0.0),
            s0: Field::Constant(1.0),
            m0: Field::Constant(0.0),
            f: Field::analytic(example2_f),
            g: Field::analytic(example2_g),
        },
        t_final: 1.0,
        exact: Arc::new(Example2),
        biomass: None,
        closure_point: Some((0.5, 1.0)),
    }
}

struct Trivial;

impl ExactSolution for Trivial {
    fn s(&self, _x: f64, _t: f64) -> f64 {
        1.0
    }
    fn m(&self, _x: f64, _t: f64) -> f64 {
        0.0
    }
    fn s_t(&self, _x: f64, _t: f64) -> f64 {
        0.0
    }
    fn s_x(&self, _x: f64, _t: f64) -> f64 {
        0.0
    }
    fn s_xx(&self, _x: f64, _t: f64) -> f64 {
        0.0
    }
    fn m_t(&self, _x: f64, _t: f64) -> f64 {
        0.0
    }
    fn m_x(&self, _x: f64, _t: f64) -> f64 {
        0.0
    }
    fn m_xx(&self, _x: f64, _t: f64) -> f64 {
        0.0
    }
}

/// Unforced problem with `S0 = 1`, `M0 = 0`: the solution stays `(1, 0)` and
/// carries no information about the coefficients.
pub fn trivial_case() -> ManufacturedCase {
    ManufacturedCase {
        name: "trivial",
        params: ParamVector::example1_truth(),
        data: ProblemData::homogeneous(Field::Constant(1.0), Field::Constant(0.0)),
        t_final: 1.0,
        exact: Arc::new(Trivial),
        biomass: Some(|_| 0.0),
        closure_point: None,
    }
}

pub fn case_by_name(name: &str) -> Option<ManufacturedCase> {
    match name {
        "example1" => Some(example1()),
        "example2" => Some(example2()),
        "trivial" => Some(trivial_case()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{diffusivity, monod};

    // fourth-order central difference
    fn d1(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h)
    }

    fn d2(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (-f(x + 2.0 * h) + 16.0 * f(x + h) - 30.0 * f(x) + 16.0 * f(x - h) - f(x - 2.0 * h))
            / (12.0 * h * h)
    }

    /// PDE residuals of the closed-form fields, derivatives taken numerically.
    fn residuals(case: &ManufacturedCase, x: f64, t: f64) -> (f64, f64) {
        let p = case.params;
        let ex = case.exact();
        let h = 1e-3;
        let s = ex.s(x, t);
        let m = ex.m(x, t);
        let s_t = d1(|tt| ex.s(x, tt), t, h);
        let s_xx = d2(|xx| ex.s(xx, t), x, h);
        let m_t = d1(|tt| ex.m(x, tt), t, h);
        let flux = |xx: f64| {
            let mm = ex.m(xx, t);
            diffusivity(mm, p.a(), p.b()).unwrap() * d1(|y| ex.m(y, t), xx, h)
        };
        let div = d1(flux, x, h);
        let r = monod(s, m, p.k4()).unwrap();
        let f = case.data.f.eval(x, t).unwrap();
        let g = case.data.g.eval(x, t).unwrap();
        let res_s = s_t - (p.d1() * s_xx - p.k1() * r + f);
        let res_m = m_t - (p.d2() * div - p.k2() * m + p.k3() * r + g);
        (res_s, res_m)
    }

    #[test]
    fn manufactured_fields_satisfy_the_pde() {
        for case in [example1(), example2()] {
            let mut worst: f64 = 0.0;
            for i in 1..50 {
                for n in 1..50 {
                    let (rs, rm) = residuals(&case, i as f64 / 50.0, n as f64 / 50.0);
                    worst = worst.max(rs.abs()).max(rm.abs());
                }
            }
            assert!(worst < 1e-6, "{}: residual {worst:e}", case.name);
        }
    }

    #[test]
    fn example2_residual_on_coarse_lattice() {
        let case = example2();
        for i in 1..20 {
            for n in 1..20 {
                let (rs, rm) = residuals(&case, i as f64 / 20.0, n as f64 / 20.0);
                assert!(rs.abs() < 1e-8 && rm.abs() < 1e-8, "({i},{n}): {rs:e} {rm:e}");
            }
        }
    }

    #[test]
    fn analytic_derivatives_match_differences() {
        let h = 1e-4;
        for case in [example1(), example2()] {
            let ex = case.exact();
            for &(x, t) in &[(0.3, 0.4), (0.5, 0.5), (0.81, 0.9)] {
                assert!((ex.s_t(x, t) - d1(|tt| ex.s(x, tt), t, h)).abs() < 1e-9);
                assert!((ex.s_x(x, t) - d1(|xx| ex.s(xx, t), x, h)).abs() < 1e-9);
                assert!((ex.s_xx(x, t) - d2(|xx| ex.s(xx, t), x, 1e-3)).abs() < 1e-7);
                assert!((ex.m_t(x, t) - d1(|tt| ex.m(x, tt), t, h)).abs() < 1e-9);
                assert!((ex.m_x(x, t) - d1(|xx| ex.m(xx, t), x, h)).abs() < 1e-9);
                assert!((ex.m_xx(x, t) - d2(|xx| ex.m(xx, t), x, 1e-3)).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn example1_values() {
        let c = example1();
        assert_eq!(c.exact_s(0.5, 0.0), 1.25);
        assert_eq!(c.exact_m(0.5, 0.0), 0.25);
        assert_eq!(c.exact_flux(0.0), -1.0);
        assert_eq!(c.exact_flux(0.7), -1.7);
        assert!((c.exact_biomass(0.0).unwrap() - 1.0 / 6.0).abs() < 1e-16);
    }

    #[test]
    fn example2_values() {
        let c = example2();
        assert_eq!(c.exact_m(0.5, 1.0), 1.0);
        assert_eq!(c.exact_m(0.5, 0.0), 0.0);
        for k in 0..=10 {
            assert_eq!(c.exact_s(k as f64 / 10.0, 0.0), 1.0);
        }
        assert_eq!(c.closure_point, Some((0.5, 1.0)));
        // the maximum over a fine lattice is attained only at the closure point
        for i in 0..=100 {
            for n in 0..=100 {
                let (x, t) = (i as f64 / 100.0, n as f64 / 100.0);
                let m = c.exact_m(x, t);
                assert!(m <= 1.0);
                if m == 1.0 {
                    assert_eq!((i, n), (50, 100));
                }
            }
        }
        assert!(c.exact_biomass(0.5).is_none());
    }

    #[test]
    fn exact_fields_match_problem_data() {
        for case in [example1(), example2(), trivial_case()] {
            case.data.check_compatibility().unwrap();
            let ex = case.exact();
            for k in 0..=20 {
                let t = k as f64 / 20.0;
                let x = t;
                assert!((ex.s(0.0, t) - case.data.mu(1, t).unwrap()).abs() <= 1e-12);
                assert!((ex.s(1.0, t) - case.data.mu(2, t).unwrap()).abs() <= 1e-12);
                assert!((ex.m(0.0, t) - case.data.mu(3, t).unwrap()).abs() <= 1e-12);
                assert!((ex.m(1.0, t) - case.data.mu(4, t).unwrap()).abs() <= 1e-12);
                assert!((ex.s(x, 0.0) - case.data.s0.eval(x, 0.0).unwrap()).abs() <= 1e-12);
                assert!((ex.m(x, 0.0) - case.data.m0.eval(x, 0.0).unwrap()).abs() <= 1e-12);
            }
        }
    }
}
