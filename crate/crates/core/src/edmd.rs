//! Least-squares identification of lifted bilinear and linear models.
//!
//! The bilinear model is the Euler discretization of `ż = K z + Σ Q_i z u_i`,
//! `z_{k+1} = K_d z_k + Σ B_i z_k u_i` with `K_d = I + K T` and `B_i = Q_i T`.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nets::Encoder;
use crate::numerics::{kron_feature, numerical_rank, solve_least_squares_with, LstsqOptions, LstsqPath, Matrix};
use crate::sim::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BilinearModel {
    pub kd: Matrix,
    pub b: Vec<Matrix>,
    pub period: f64,
    /// Set when the design matrix was too ill-conditioned for the normal
    /// equations and the pseudo-inverse was used instead.
    pub rank_deficient: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub ad: Matrix,
    pub bd: Matrix,
    pub period: f64,
    pub rank_deficient: bool,
}

impl BilinearModel {
    pub fn new(kd: Matrix, b: Vec<Matrix>, period: f64) -> Result<Self> {
        let n = kd.rows();
        if kd.cols() != n || b.iter().any(|bi| bi.shape() != (n, n)) {
            return Err(Error::shape("bilinear model matrices must all be N × N"));
        }
        if !(period > 0.0) {
            return Err(Error::Config(format!("sampling period must be positive, got {period}")));
        }
        Ok(BilinearModel { kd, b, period, rank_deficient: false })
    }

    pub fn lifted_dim(&self) -> usize {
        self.kd.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.len()
    }

    /// `K = (K_d − I) / T`.
    pub fn continuous_k(&self) -> Matrix {
        self.kd.sub(&Matrix::identity(self.lifted_dim())).scale(1.0 / self.period)
    }

    /// `Q_i = B_i / T`.
    pub fn continuous_q(&self) -> Vec<Matrix> {
        self.b.iter().map(|bi| bi.scale(1.0 / self.period)).collect()
    }

    /// `K_d z + Σ_i B_i z u_i`.
    pub fn predict(&self, z: &[f64], u: &[f64]) -> Vec<f64> {
        let mut out = self.kd.matvec(z);
        for (bi, ui) in self.b.iter().zip(u) {
            for (o, v) in out.iter_mut().zip(bi.matvec(z)) {
                *o += ui * v;
            }
        }
        out
    }

    /// `K_d + Σ_i u_i B_i`, the one-step transition matrix for a held input.
    pub fn transition(&self, u: &[f64]) -> Matrix {
        let mut m = self.kd.clone();
        for (bi, ui) in self.b.iter().zip(u) {
            m.add_assign(&bi.scale(*ui));
        }
        m
    }

    /// Local truncation bound `p L T²` with `L = ‖K_d + Σ B_i u_i‖₂` and
    /// `p = L · sup ‖z(t)‖` over the step.
    pub fn truncation_bound(&self, sup_norm: f64, u: &[f64]) -> f64 {
        let l = self.transition(u).spectral_norm();
        let p = l * sup_norm;
        p * l * self.period * self.period
    }

    /// `[K_d B_1 … B_m]`, `N × (m+1)N`.
    pub fn stacked(&self) -> Matrix {
        let mut blocks = vec![&self.kd];
        blocks.extend(self.b.iter());
        Matrix::hstack(&blocks).expect("blocks share row count")
    }
}

impl LinearModel {
    pub fn predict(&self, z: &[f64], u: &[f64]) -> Vec<f64> {
        let mut out = self.ad.matvec(z);
        for (o, v) in out.iter_mut().zip(self.bd.matvec(u)) {
            *o += v;
        }
        out
    }
}

fn check_rows(z: &Matrix, z_next: &Matrix, u: &Matrix) -> Result<()> {
    if z.shape() != z_next.shape() || u.rows() != z.rows() {
        return Err(Error::shape(format!(
            "EDMD needs one row per transition, got z {:?}, z_next {:?}, u {:?}",
            z.shape(),
            z_next.shape(),
            u.shape()
        )));
    }
    if z.rows() == 0 {
        return Err(Error::shape("EDMD needs at least one transition"));
    }
    Ok(())
}

/// Fits `[K_d B_1 … B_m] = β Ψᵀ (Ψ Ψᵀ)⁻¹` where column `k` of `Ψ` is
/// `(1; u_k) ⊗ z_k` and column `k` of `β` is `z_{k+1}`.
///
/// Rows of `z`, `z_next` and `u` are transitions.
pub fn fit_bilinear(z: &Matrix, z_next: &Matrix, u: &Matrix, period: f64, opts: LstsqOptions) -> Result<BilinearModel> {
    check_rows(z, z_next, u)?;
    let (k, n, m) = (z.rows(), z.cols(), u.cols());
    let f = (m + 1) * n;
    let mut psi = Matrix::zeros(f, k);
    for s in 0..k {
        for (r, v) in kron_feature(u.row(s), z.row(s)).into_iter().enumerate() {
            psi[(r, s)] = v;
        }
    }
    let beta = z_next.transpose();
    let sol = solve_least_squares_with(&psi, &beta, opts)?;
    let rank_deficient = sol.path == LstsqPath::PseudoInverse && sol.fell_back;
    if rank_deficient {
        warn!("bilinear design matrix is ill-conditioned; using the pseudo-inverse");
    }
    let kd = sol.x.col_block(0, n);
    let b = (0..m).map(|i| sol.x.col_block((i + 1) * n, n)).collect();
    let mut model = BilinearModel::new(kd, b, period)?;
    model.rank_deficient = rank_deficient;
    Ok(model)
}

/// Fits `[A_d B_d] = β [Ψ; U]⁺` with the pseudo-inverse.
pub fn fit_linear(z: &Matrix, z_next: &Matrix, u: &Matrix, period: f64) -> Result<LinearModel> {
    check_rows(z, z_next, u)?;
    let (k, n, m) = (z.rows(), z.cols(), u.cols());
    let mut psi = Matrix::zeros(n + m, k);
    for s in 0..k {
        for j in 0..n {
            psi[(j, s)] = z[(s, j)];
        }
        for j in 0..m {
            psi[(n + j, s)] = u[(s, j)];
        }
    }
    let opts = LstsqOptions { force_pseudo_inverse: true, ridge: None };
    let sol = solve_least_squares_with(&psi, &z_next.transpose(), opts)?;
    let rank_deficient = numerical_rank(&psi) < n + m;
    Ok(LinearModel { ad: sol.x.col_block(0, n), bd: sol.x.col_block(n, m), period, rank_deficient })
}

/// Lifted sources, successors and inputs of every transition in `data`.
pub fn lift_transitions(data: &Dataset, encoder: &Encoder) -> (Matrix, Matrix, Matrix) {
    let k = data.transition_count();
    let n = encoder.lifted_dim();
    let m = data.input_dim();
    let mut z = Matrix::zeros(k, n);
    let mut z_next = Matrix::zeros(k, n);
    let mut u = Matrix::zeros(k, m);
    for (s, (x, ui, y)) in data.transitions().enumerate() {
        z.row_mut(s).copy_from_slice(&encoder.lift(x));
        z_next.row_mut(s).copy_from_slice(&encoder.lift(y));
        u.row_mut(s).copy_from_slice(ui);
    }
    (z, z_next, u)
}

pub fn fit_bilinear_dataset(data: &Dataset, encoder: &Encoder) -> Result<BilinearModel> {
    let (z, z_next, u) = lift_transitions(data, encoder);
    fit_bilinear(&z, &z_next, &u, data.period, LstsqOptions::default())
}

pub fn fit_linear_dataset(data: &Dataset, encoder: &Encoder) -> Result<LinearModel> {
    let (z, z_next, u) = lift_transitions(data, encoder);
    fit_linear(&z, &z_next, &u, data.period)
}

/// Mean one-step squared residual of the bilinear model over transitions.
pub fn dynamics_residual(model: &BilinearModel, z: &Matrix, z_next: &Matrix, u: &Matrix) -> f64 {
    let k = z.rows();
    let total: f64 = (0..k)
        .map(|s| {
            let p = model.predict(z.row(s), u.row(s));
            p.iter().zip(z_next.row(s)).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
        })
        .sum();
    total / k as f64
}
