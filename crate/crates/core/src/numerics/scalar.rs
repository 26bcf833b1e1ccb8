use std::ops::{Add, Div, Mul, Neg, Sub};

/// Arithmetic shared by plain floats, intervals and expression tracers.
///
/// Network and Lie-derivative code is written once against this trait so the
/// controller, the falsifier's enclosures and its counterexample checks all
/// evaluate the same formulas.
pub trait Scalar: Clone + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self> {
    /// A constant living in the same context as `self`.
    fn lift(&self, c: f64) -> Self;
    fn scale(&self, c: f64) -> Self;
    fn add_const(&self, c: f64) -> Self;
    fn tanh(&self) -> Self;
    fn sqrt(&self) -> Self;
    fn square(&self) -> Self;
    fn abs(&self) -> Self;
}

impl Scalar for f64 {
    #[inline]
    fn lift(&self, c: f64) -> Self {
        c
    }
    #[inline]
    fn scale(&self, c: f64) -> Self {
        self * c
    }
    #[inline]
    fn add_const(&self, c: f64) -> Self {
        self + c
    }
    #[inline]
    fn tanh(&self) -> Self {
        f64::tanh(*self)
    }
    #[inline]
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    #[inline]
    fn square(&self) -> Self {
        self * self
    }
    #[inline]
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
}

/// `Σ_j w_j x_j + b` with the weights as plain constants.
pub fn affine<S: Scalar>(weights: &[f64], x: &[S], bias: f64) -> S {
    let mut acc = x[0].scale(weights[0]);
    for (w, xi) in weights.iter().zip(x).skip(1) {
        acc = acc + xi.scale(*w);
    }
    acc.add_const(bias)
}

pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    let mut acc = a[0].clone() * b[0].clone();
    for (x, y) in a.iter().zip(b).skip(1) {
        acc = acc + x.clone() * y.clone();
    }
    acc
}

pub fn sum_squares<S: Scalar>(a: &[S]) -> S {
    let mut acc = a[0].square();
    for x in &a[1..] {
        acc = acc + x.square();
    }
    acc
}
