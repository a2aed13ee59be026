//! Forward-mode dual numbers and the scalar abstraction shared by every
//! evaluator in the crate.
//!
//! Evaluators are written once, generically over [`Scalar`], and then run on
//! plain `f64` for values or on [`Dual`] to obtain exact directional
//! derivatives. This is the independent oracle for all closed-form Jacobians.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Arithmetic needed by the map and manifold evaluators.
pub trait Scalar:
    Copy
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(v: f64) -> Self;
    fn value(self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn powi(self, n: i32) -> Self;
    /// `self^exponent` for a general exponent. For non-integer exponents the
    /// base must be positive.
    fn pow(self, exponent: Self) -> Self;

    fn square(self) -> Self {
        self * self
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn value(self) -> f64 {
        self
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    fn pow(self, exponent: Self) -> Self {
        if exponent.fract() == 0.0 && exponent.abs() < i32::MAX as f64 {
            f64::powi(self, exponent as i32)
        } else {
            f64::powf(self, exponent)
        }
    }
}

/// A first-order dual number `re + eps * du` with `eps^2 = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Dual {
    pub re: f64,
    pub du: f64,
}

impl Dual {
    pub const fn new(re: f64, du: f64) -> Self {
        Dual { re, du }
    }

    pub const fn constant(re: f64) -> Self {
        Dual { re, du: 0.0 }
    }

    pub const fn variable(re: f64) -> Self {
        Dual { re, du: 1.0 }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, rhs: Dual) -> Dual {
        Dual::new(self.re + rhs.re, self.du + rhs.du)
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, rhs: Dual) -> Dual {
        Dual::new(self.re - rhs.re, self.du - rhs.du)
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, rhs: Dual) -> Dual {
        Dual::new(self.re * rhs.re, self.re * rhs.du + self.du * rhs.re)
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, rhs: Dual) -> Dual {
        Dual::new(
            self.re / rhs.re,
            (self.du * rhs.re - self.re * rhs.du) / (rhs.re * rhs.re),
        )
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual::new(-self.re, -self.du)
    }
}

impl Scalar for Dual {
    fn from_f64(v: f64) -> Self {
        Dual::constant(v)
    }
    fn value(self) -> f64 {
        self.re
    }
    fn sin(self) -> Self {
        Dual::new(self.re.sin(), self.du * self.re.cos())
    }
    fn cos(self) -> Self {
        Dual::new(self.re.cos(), -self.du * self.re.sin())
    }
    fn exp(self) -> Self {
        let e = self.re.exp();
        Dual::new(e, self.du * e)
    }
    fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Dual::constant(1.0);
        }
        Dual::new(
            self.re.powi(n),
            self.du * n as f64 * self.re.powi(n - 1),
        )
    }
    fn pow(self, exponent: Self) -> Self {
        if exponent.du == 0.0 && exponent.re.fract() == 0.0 && exponent.re.abs() < i32::MAX as f64
        {
            return self.powi(exponent.re as i32);
        }
        // d(u^v) = u^v (v' ln u + v u'/u)
        let value = self.re.powf(exponent.re);
        let du = value * (exponent.du * self.re.ln() + exponent.re * self.du / self.re);
        Dual::new(value, du)
    }
}

/// Jacobian of `func` at `x` by one forward pass per input coordinate.
/// Returns the matrix as rows (one per output).
pub fn forward_jacobian<F>(func: F, x: &[f64]) -> Vec<Vec<f64>>
where
    F: Fn(&[Dual]) -> Vec<Dual>,
{
    let n = x.len();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut seeded: Vec<Dual> = x.iter().map(|&v| Dual::constant(v)).collect();
    for k in 0..n {
        seeded[k].du = 1.0;
        let out = func(&seeded);
        if rows.is_empty() {
            rows = vec![vec![0.0; n]; out.len()];
        }
        for (row, d) in rows.iter_mut().zip(&out) {
            row[k] = d.du;
        }
        seeded[k].du = 0.0;
    }
    rows
}
