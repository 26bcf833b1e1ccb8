//! Black-box plants, RK4 discretization and open-loop data collection.

mod dataset;
mod plants;

pub use dataset::{generate_dataset, Dataset, FlatData, Trajectory, DEFAULT_TRAJ_LEN};
pub use plants::{make_cartpole, make_hcw, make_pendulum, make_plant, make_vanderpol, Dynamics, PlantKind};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box `[lo_i, hi_i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::shape("box bounds must be nonempty and of equal length"));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l <= h)) {
            return Err(Error::shape(format!("box with lo {lo:?} above hi {hi:?}")));
        }
        Ok(BoxDomain { lo, hi })
    }

    pub fn symmetric(half_widths: &[f64]) -> Self {
        BoxDomain { lo: half_widths.iter().map(|h| -h).collect(), hi: half_widths.to_vec() }
    }

    pub fn cube(dim: usize, half_width: f64) -> Self {
        BoxDomain::symmetric(&vec![half_width; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (l, h))| *l <= *v && *v <= *h)
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).collect()
    }

    pub fn max_width(&self) -> f64 {
        self.widths().into_iter().fold(0.0, f64::max)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    pub fn clamp(&self, x: &mut [f64]) -> bool {
        let mut clipped = false;
        for ((v, l), h) in x.iter_mut().zip(&self.lo).zip(&self.hi) {
            if *v < *l {
                *v = *l;
                clipped = true;
            } else if *v > *h {
                *v = *h;
                clipped = true;
            }
        }
        clipped
    }

    /// Every vertex of the box, `2^dim` points.
    pub fn corners(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        (0..1usize << d).map(|mask| (0..d).map(|i| if mask >> i & 1 == 1 { self.hi[i] } else { self.lo[i] }).collect()).collect()
    }
}

/// A control-affine plant `ẋ = f(x) + g(x) u` treated as a black box.
#[derive(Debug, Clone)]
pub struct Plant {
    pub kind: PlantKind,
    pub dynamics: Dynamics,
    pub state_domain: BoxDomain,
    pub input_domain: BoxDomain,
    pub default_period: f64,
}

impl Plant {
    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn state_dim(&self) -> usize {
        self.state_domain.dim()
    }

    pub fn input_dim(&self) -> usize {
        self.input_domain.dim()
    }

    pub fn deriv(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.dynamics.eval(x, u, &mut out);
        out
    }

    /// One zero-order-hold step `x_{k+1} = h(x_k, u_k)`.
    pub fn step(&self, x: &[f64], u: &[f64], period: f64) -> Result<Vec<f64>> {
        rk4_step(self, x, u, period)
    }
}

/// Classical four-stage Runge–Kutta step with `u` held constant over `[0, T]`.
pub fn rk4_step(plant: &Plant, x: &[f64], u: &[f64], period: f64) -> Result<Vec<f64>> {
    let n = x.len();
    if n != plant.state_dim() || u.len() != plant.input_dim() {
        return Err(Error::shape(format!(
            "{} expects state/input dims {}/{}, got {}/{}",
            plant.name(),
            plant.state_dim(),
            plant.input_dim(),
            n,
            u.len()
        )));
    }
    let f = |s: &[f64], out: &mut [f64]| plant.dynamics.eval(s, u, out);
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    f(x, &mut k1);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * period * k1[i];
    }
    f(&tmp, &mut k2);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * period * k2[i];
    }
    f(&tmp, &mut k3);
    for i in 0..n {
        tmp[i] = x[i] + period * k3[i];
    }
    f(&tmp, &mut k4);
    let next: Vec<f64> = (0..n).map(|i| x[i] + period / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect();
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::IntegrationDiverged { state: x.to_vec() });
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent fine-step integrator: RK4 with `substeps` substeps.
    fn fine(plant: &Plant, x: &[f64], u: &[f64], t: f64, substeps: usize) -> Vec<f64> {
        let h = t / substeps as f64;
        let mut s = x.to_vec();
        for _ in 0..substeps {
            s = rk4_step(plant, &s, u, h).unwrap();
        }
        s
    }

    fn dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    }

    #[test]
    fn equilibria_are_fixed_points() {
        let p = make_pendulum();
        assert_eq!(rk4_step(&p, &[0.0, 0.0], &[0.0], 0.005).unwrap(), vec![0.0, 0.0]);
        let v = make_vanderpol();
        assert_eq!(rk4_step(&v, &[0.0, 0.0], &[0.0], 0.01).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn pendulum_step_matches_fine_integration() {
        let p = make_pendulum();
        let x1 = rk4_step(&p, &[0.1, 0.0], &[0.0], 0.005).unwrap();
        let reference = fine(&p, &[0.1, 0.0], &[0.0], 0.005, 1000);
        assert!(dist(&x1, &reference) < 1e-10, "{}", dist(&x1, &reference));
    }

    #[test]
    fn local_error_is_fifth_order() {
        let p = make_vanderpol();
        let x = [1.2, -0.7];
        let u = [0.5];
        let err = |t: f64| dist(&rk4_step(&p, &x, &u, t).unwrap(), &fine(&p, &x, &u, t, 2000));
        let ratio = err(0.2) / err(0.1);
        assert!((ratio - 32.0).abs() < 0.2 * 32.0, "ratio {ratio}");
    }

    #[test]
    fn divergence_is_reported() {
        let v = make_vanderpol();
        let err = rk4_step(&v, &[1e200, 1e200], &[0.0], 0.01).unwrap_err();
        assert!(matches!(err, Error::IntegrationDiverged { .. }));
    }

    #[test]
    fn shape_errors() {
        let p = make_pendulum();
        assert!(rk4_step(&p, &[0.0], &[0.0], 0.01).is_err());
        assert!(rk4_step(&p, &[0.0, 0.0], &[0.0, 1.0], 0.01).is_err());
    }

    #[test]
    fn box_helpers() {
        let b = BoxDomain::new(vec![-1.0, 0.0], vec![1.0, 2.0]).unwrap();
        assert!(b.contains(&[0.0, 2.0]));
        assert!(!b.contains(&[0.0, 2.1]));
        assert_eq!(b.center(), vec![0.0, 1.0]);
        assert_eq!(b.corners().len(), 4);
        assert!(BoxDomain::new(vec![1.0], vec![0.0]).is_err());
        let mut x = [3.0, -1.0];
        assert!(b.clamp(&mut x));
        assert_eq!(x, [1.0, 0.0]);
    }
}
