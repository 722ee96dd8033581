//! Forward-mode dual numbers carrying partials with respect to the eight box
//! coordinates `(cx_p, cy_p, w_p, h_p, cx_g, cy_g, w_g, h_g)`.
//!
//! The metric formulas are written once, generic over [`Scalar`], and
//! instantiated with `f64` for values and [`Dual`] for exact derivatives.

use std::ops::{Add, Div, Mul, Neg, Sub};

pub const N: usize = 8;

pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn cst(v: f64) -> Self;
    fn value(&self) -> f64;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn atan(self) -> Self;

    fn abs(self) -> Self {
        if self.value() < 0.0 {
            -self
        } else {
            self
        }
    }

    /// Branch selection by value; ties take `self`.
    fn max(self, o: Self) -> Self {
        if o.value() > self.value() {
            o
        } else {
            self
        }
    }

    fn min(self, o: Self) -> Self {
        if o.value() < self.value() {
            o
        } else {
            self
        }
    }

    fn sq(self) -> Self {
        self * self
    }
}

impl Scalar for f64 {
    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn atan(self) -> Self {
        f64::atan(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub d: [f64; N],
}

impl Dual {
    /// The `i`-th input variable.
    pub fn var(v: f64, i: usize) -> Self {
        let mut d = [0.0; N];
        d[i] = 1.0;
        Self { v, d }
    }

    #[inline]
    fn chain(self, v: f64, dv: f64) -> Self {
        let mut d = self.d;
        for x in &mut d {
            *x *= dv;
        }
        Self { v, d }
    }
}

impl Add for Dual {
    type Output = Self;
    #[inline]
    fn add(mut self, o: Self) -> Self {
        self.v += o.v;
        for (a, b) in self.d.iter_mut().zip(o.d) {
            *a += b;
        }
        self
    }
}

impl Sub for Dual {
    type Output = Self;
    #[inline]
    fn sub(mut self, o: Self) -> Self {
        self.v -= o.v;
        for (a, b) in self.d.iter_mut().zip(o.d) {
            *a -= b;
        }
        self
    }
}

impl Mul for Dual {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        let mut d = [0.0; N];
        for (i, x) in d.iter_mut().enumerate() {
            *x = self.d[i] * o.v + self.v * o.d[i];
        }
        Self { v: self.v * o.v, d }
    }
}

impl Div for Dual {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let inv = 1.0 / o.v;
        let q = self.v * inv;
        let mut d = [0.0; N];
        for (i, x) in d.iter_mut().enumerate() {
            *x = (self.d[i] - q * o.d[i]) * inv;
        }
        Self { v: q, d }
    }
}

impl Neg for Dual {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.chain(-self.v, -1.0)
    }
}

impl Scalar for Dual {
    fn cst(v: f64) -> Self {
        Self { v, d: [0.0; N] }
    }

    fn value(&self) -> f64 {
        self.v
    }

    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.chain(s, 0.5 / s)
    }

    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e)
    }

    fn atan(self) -> Self {
        self.chain(self.v.atan(), 1.0 / (1.0 + self.v * self.v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_and_quotient_rules() {
        let x = Dual::var(3.0, 0);
        let y = Dual::var(2.0, 1);
        let f = x * y / (x + y);
        // f = xy/(x+y); df/dx = y^2/(x+y)^2, df/dy = x^2/(x+y)^2
        assert!((f.v - 1.2).abs() < 1e-15);
        assert!((f.d[0] - 4.0 / 25.0).abs() < 1e-15);
        assert!((f.d[1] - 9.0 / 25.0).abs() < 1e-15);
    }

    #[test]
    fn transcendental_derivatives() {
        let x = Dual::var(0.7, 2);
        assert!((x.exp().d[2] - 0.7f64.exp()).abs() < 1e-15);
        assert!((x.sqrt().d[2] - 0.5 / 0.7f64.sqrt()).abs() < 1e-15);
        assert!((x.atan().d[2] - 1.0 / 1.49).abs() < 1e-15);
        assert_eq!((-x).abs().d[2], 1.0);
    }
}
