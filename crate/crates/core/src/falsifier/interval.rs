//! Outward-rounded interval arithmetic and forward-mode duals over it.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::numerics::Scalar;

/// Closed interval `[lo, hi]`. Every operation widens its result by at least
/// one ulp on each side, and by a few ulps after `tanh`/`sqrt`, so the true
/// range is enclosed despite floating-point rounding.
#[derive(Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

const LIBM_ULPS: usize = 4;

fn down(x: f64, ulps: usize) -> f64 {
    (0..ulps).fold(x, |v, _| v.next_down())
}

fn up(x: f64, ulps: usize) -> f64 {
    (0..ulps).fold(x, |v, _| v.next_up())
}

/// Product where `0 · ∞ = 0`, as needed for endpoint arithmetic.
fn emul(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        0.0
    } else {
        a * b
    }
}

impl Interval {
    pub const ENTIRE: Interval = Interval { lo: f64::NEG_INFINITY, hi: f64::INFINITY };

    /// Panics in debug builds when `lo > hi`; NaN bounds become unbounded.
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(!(lo > hi), "interval [{lo}, {hi}]");
        Interval { lo: if lo.is_nan() { f64::NEG_INFINITY } else { lo }, hi: if hi.is_nan() { f64::INFINITY } else { hi } }
    }

    pub fn point(x: f64) -> Self {
        Interval::new(x, x)
    }

    fn padded(lo: f64, hi: f64, ulps: usize) -> Self {
        if lo.is_nan() || hi.is_nan() {
            return Interval::ENTIRE;
        }
        Interval { lo: down(lo, ulps), hi: up(hi, ulps) }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * self.lo + 0.5 * self.hi
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_zero(&self) -> bool {
        self.contains(0.0)
    }

    /// Intersection, or `self` if the two are disjoint (which only rounding
    /// in a sound pair of enclosures could cause).
    pub fn intersect(&self, other: &Interval) -> Interval {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        if lo <= hi {
            Interval { lo, hi }
        } else {
            *self
        }
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval { lo: self.lo.min(other.lo), hi: self.hi.max(other.hi) }
    }

    fn mul_endpoints(a: &Interval, b: &Interval) -> (f64, f64) {
        let p = [emul(a.lo, b.lo), emul(a.lo, b.hi), emul(a.hi, b.lo), emul(a.hi, b.hi)];
        (p.iter().copied().fold(f64::INFINITY, f64::min), p.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }
}

impl fmt::Debug for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:e}, {:e}]", self.lo, self.hi)
    }
}

impl Add for Interval {
    type Output = Interval;
    fn add(self, o: Interval) -> Interval {
        Interval::padded(self.lo + o.lo, self.hi + o.hi, 1)
    }
}

impl Sub for Interval {
    type Output = Interval;
    fn sub(self, o: Interval) -> Interval {
        Interval::padded(self.lo - o.hi, self.hi - o.lo, 1)
    }
}

impl Mul for Interval {
    type Output = Interval;
    fn mul(self, o: Interval) -> Interval {
        let (lo, hi) = Interval::mul_endpoints(&self, &o);
        Interval::padded(lo, hi, 1)
    }
}

impl Div for Interval {
    type Output = Interval;
    fn div(self, o: Interval) -> Interval {
        if o.contains_zero() {
            return Interval::ENTIRE;
        }
        let p = [self.lo / o.lo, self.lo / o.hi, self.hi / o.lo, self.hi / o.hi];
        let lo = p.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Interval::padded(lo, hi, 1)
    }
}

impl Neg for Interval {
    type Output = Interval;
    fn neg(self) -> Interval {
        Interval { lo: -self.hi, hi: -self.lo }
    }
}

impl Scalar for Interval {
    fn lift(&self, c: f64) -> Self {
        Interval::point(c)
    }

    fn scale(&self, c: f64) -> Self {
        let (a, b) = (emul(self.lo, c), emul(self.hi, c));
        Interval::padded(a.min(b), a.max(b), 1)
    }

    fn add_const(&self, c: f64) -> Self {
        Interval::padded(self.lo + c, self.hi + c, 1)
    }

    fn tanh(&self) -> Self {
        let p = Interval::padded(self.lo.tanh(), self.hi.tanh(), LIBM_ULPS);
        Interval { lo: p.lo.max(-1.0), hi: p.hi.min(1.0) }
    }

    fn sqrt(&self) -> Self {
        let lo = self.lo.max(0.0);
        let hi = self.hi.max(0.0);
        let p = Interval::padded(lo.sqrt(), hi.sqrt(), LIBM_ULPS);
        Interval { lo: p.lo.max(0.0), hi: p.hi }
    }

    fn square(&self) -> Self {
        let (a, b) = (self.lo * self.lo, self.hi * self.hi);
        if self.contains_zero() {
            Interval { lo: 0.0, hi: up(a.max(b), 1) }
        } else {
            let p = Interval::padded(a.min(b), a.max(b), 1);
            Interval { lo: p.lo.max(0.0), hi: p.hi }
        }
    }

    fn abs(&self) -> Self {
        if self.contains_zero() {
            Interval { lo: 0.0, hi: self.hi.max(-self.lo) }
        } else if self.lo > 0.0 {
            *self
        } else {
            -*self
        }
    }
}

/// Value with its gradient with respect to a fixed set of inputs. Evaluated
/// over intervals this encloses the derivative across a box, which is what
/// the mean-value form needs.
#[derive(Clone, Debug, PartialEq)]
pub struct Dual<S> {
    pub v: S,
    pub d: Vec<S>,
}

impl<S: Scalar> Dual<S> {
    /// Input variable `index` out of `count`.
    pub fn variable(v: S, index: usize, count: usize) -> Self {
        let d = (0..count).map(|i| v.lift(if i == index { 1.0 } else { 0.0 })).collect();
        Dual { v, d }
    }

    fn constant_like(&self, c: f64) -> Self {
        Dual { v: self.v.lift(c), d: self.d.iter().map(|x| x.lift(0.0)).collect() }
    }

    fn chain(&self, v: S, factor: S) -> Self {
        Dual { v, d: self.d.iter().map(|x| x.clone() * factor.clone()).collect() }
    }
}

impl<S: Scalar> Add for Dual<S> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Dual { v: self.v + o.v, d: self.d.into_iter().zip(o.d).map(|(a, b)| a + b).collect() }
    }
}

impl<S: Scalar> Sub for Dual<S> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Dual { v: self.v - o.v, d: self.d.into_iter().zip(o.d).map(|(a, b)| a - b).collect() }
    }
}

impl<S: Scalar> Mul for Dual<S> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let d = self.d.iter().zip(&o.d).map(|(a, b)| a.clone() * o.v.clone() + self.v.clone() * b.clone()).collect();
        Dual { v: self.v * o.v, d }
    }
}

impl<S: Scalar> Div for Dual<S> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let q = self.v.clone() / o.v.clone();
        let d = self.d.iter().zip(&o.d).map(|(a, b)| (a.clone() - q.clone() * b.clone()) / o.v.clone()).collect();
        Dual { v: q, d }
    }
}

impl<S: Scalar> Neg for Dual<S> {
    type Output = Self;
    fn neg(self) -> Self {
        Dual { v: -self.v, d: self.d.into_iter().map(|x| -x).collect() }
    }
}

impl<S: Scalar> Scalar for Dual<S> {
    fn lift(&self, c: f64) -> Self {
        self.constant_like(c)
    }

    fn scale(&self, c: f64) -> Self {
        Dual { v: self.v.scale(c), d: self.d.iter().map(|x| x.scale(c)).collect() }
    }

    fn add_const(&self, c: f64) -> Self {
        Dual { v: self.v.add_const(c), d: self.d.clone() }
    }

    fn tanh(&self) -> Self {
        let t = self.v.tanh();
        let slope = -t.square() + t.lift(1.0);
        self.chain(t, slope)
    }

    fn sqrt(&self) -> Self {
        let r = self.v.sqrt();
        let slope = r.lift(0.5) / r.clone();
        self.chain(r, slope)
    }

    fn square(&self) -> Self {
        let slope = self.v.scale(2.0);
        self.chain(self.v.square(), slope)
    }

    fn abs(&self) -> Self {
        let a = self.v.abs();
        let sign = self.v.clone() / a.clone();
        self.chain(a, sign)
    }
}
