//! Training objective: reconstruction, bilinear dynamics, physics-informed,
//! control Lyapunov risk and region-of-attraction terms.
//!
//! Every term is recorded on one [`Tape`], so a single reverse sweep yields
//! the gradient of the weighted total with respect to the encoder, decoder
//! and CLF parameters. The bilinear matrices enter as constants: they are the
//! least-squares optimum for the current encoder, so by the envelope theorem
//! holding them fixed gives the exact gradient of the dynamics loss.

use serde::{Deserialize, Serialize};

use crate::controller::{sontag_control, SIGMA_TOL};
use crate::edmd::{fit_bilinear, BilinearModel};
use crate::error::{Error, Result};
use crate::nets::{Clf, Encoder, Network, Tape, TapedMlp, Var};
use crate::numerics::{LstsqOptions, Matrix};
use crate::sim::{FlatData, Plant, PlantKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: [f64; 4],
    /// `(γ1, γ2, γ3)` of the exponential-stability risk; `None` selects the
    /// asymptotic risk.
    pub exponential: Option<[f64; 3]>,
    pub gamma4: f64,
    /// Per-sample `max(0, ‖z‖ − γ4 V)` instead of the raw difference.
    pub roa_hinged: bool,
}

impl LossWeights {
    pub fn for_plant(kind: PlantKind) -> Self {
        let alpha = match kind {
            PlantKind::Pendulum | PlantKind::VanDerPol => [0.001, 2.0, 0.001, 1.0],
            PlantKind::CartPole | PlantKind::Hcw => [0.05, 3.0, 0.05, 1.0],
        };
        LossWeights { alpha, exponential: None, gamma4: 1.0, roa_hinged: true }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha.iter().any(|a| !(*a >= 0.0)) {
            return Err(Error::Config(format!("loss weights must be nonnegative, got {:?}", self.alpha)));
        }
        if !(self.gamma4 > 0.0) {
            return Err(Error::Config(format!("gamma4 must be positive, got {}", self.gamma4)));
        }
        if let Some([g1, g2, g3]) = self.exponential {
            if !(g1 > 0.0 && g2 > g1 && g3 > 0.0) {
                return Err(Error::Config(format!("exponential gammas need 0 < g1 < g2 and g3 > 0, got {g1}, {g2}, {g3}")));
            }
        }
        Ok(())
    }
}

/// Which input enters `∇V = a + Σ c_i u_i` in the Lyapunov risk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LieInput {
    /// The Sontag feedback clipped to the input box, treated as a constant.
    Sontag,
    /// The input recorded with each snapshot; zero where none was recorded.
    Dataset,
}

impl std::str::FromStr for LieInput {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sontag" => Ok(LieInput::Sontag),
            "dataset" => Ok(LieInput::Dataset),
            _ => Err(Error::Config(format!("unknown controller-u mode `{s}` (expected sontag or dataset)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossReport {
    pub recons: f64,
    pub dyn_: f64,
    pub phy: f64,
    pub lyap: f64,
    pub roa: f64,
    pub total: f64,
    /// Largest per-sample Lyapunov violation, positive when some sample
    /// violates a condition.
    pub worst_margin: f64,
    pub worst_index: usize,
}

/// Encoder, decoder and CLF trained together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkBundle {
    pub encoder: Encoder,
    pub decoder: Network,
    pub clf: Clf,
}

impl NetworkBundle {
    pub fn param_count(&self) -> usize {
        self.encoder.params().len() + self.decoder.params.len() + self.clf.net().params.len()
    }

    /// Encoder, decoder and CLF parameters concatenated in that order.
    pub fn flat_params(&self) -> Vec<f64> {
        [self.encoder.params(), &self.decoder.params[..], &self.clf.net().params[..]].concat()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::shape(format!("expected {} parameters, got {}", self.param_count(), flat.len())));
        }
        let (e, rest) = flat.split_at(self.encoder.params().len());
        let (d, c) = rest.split_at(self.decoder.params.len());
        self.encoder.params_mut().copy_from_slice(e);
        self.decoder.params.copy_from_slice(d);
        self.clf.net_mut().params.copy_from_slice(c);
        Ok(())
    }
}

/// Parameter gradients in the layout of each network.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleGrads {
    pub encoder: Vec<f64>,
    pub decoder: Vec<f64>,
    pub clf: Vec<f64>,
}

impl BundleGrads {
    /// Same layout as [`NetworkBundle::flat_params`].
    pub fn flatten(&self) -> Vec<f64> {
        [&self.encoder[..], &self.decoder[..], &self.clf[..]].concat()
    }
}

pub enum ModelSource<'a> {
    Fixed(&'a BilinearModel),
    /// Refit by least squares on the current lift before the losses.
    Refit(LstsqOptions),
}

/// Training samples: the snapshot data plus extra states (counterexamples)
/// that only enter the Lyapunov and ROA terms.
pub struct LossBatch<'a> {
    pub data: &'a FlatData,
    pub extra: &'a Matrix,
    pub plant: &'a Plant,
    pub period: f64,
}

pub struct LossSettings {
    pub weights: LossWeights,
    pub lie_input: LieInput,
}

pub struct LossOutput {
    pub report: LossReport,
    pub grads: BundleGrads,
    pub model: BilinearModel,
}

/// Mean over rows of the squared row norms of `a − b`.
fn mean_sq_dist(tape: &mut Tape, a: Var, b: Var) -> Var {
    let d = tape.sub(a, b);
    let sq = tape.square(d);
    let rs = tape.row_sum(sq);
    tape.mean(rs)
}

pub fn recons_term(tape: &mut Tape, x: Var, xhat: Var) -> Var {
    mean_sq_dist(tape, x, xhat)
}

/// Rows of `K_d z + Σ_i u_i B_i z`.
pub fn bilinear_predict(tape: &mut Tape, model: &BilinearModel, z: Var, u: &Matrix) -> Var {
    let kd = tape.leaf(model.kd.clone());
    let mut pred = tape.matmul_bt(z, kd);
    for (i, bi) in model.b.iter().enumerate() {
        let bl = tape.leaf(bi.clone());
        let bz = tape.matmul_bt(z, bl);
        let ui = tape.leaf(Matrix::column_vector(&u.col(i)));
        let scaled = tape.mul_col(bz, ui);
        pred = tape.add(pred, scaled);
    }
    pred
}

pub fn dyn_term(tape: &mut Tape, model: &BilinearModel, z: Var, z_next: Var, u: &Matrix) -> Var {
    let pred = bilinear_predict(tape, model, z, u);
    mean_sq_dist(tape, z_next, pred)
}

/// One black-box step per row with a central-difference Jacobian.
pub fn plant_step_node(tape: &mut Tape, plant: &Plant, x: Var, u: &Matrix, period: f64) -> Result<Var> {
    let xv = tape.value(x).clone();
    let (rows, n) = xv.shape();
    let mut out = Matrix::zeros(rows, n);
    let mut jac = vec![0.0; rows * n * n];
    for r in 0..rows {
        let xr = xv.row(r);
        let ur = u.row(r);
        out.row_mut(r).copy_from_slice(&plant.step(xr, ur, period)?);
        for j in 0..n {
            let h = 1e-6 * xr[j].abs().max(1.0);
            let mut xp = xr.to_vec();
            let mut xm = xr.to_vec();
            xp[j] += h;
            xm[j] -= h;
            let fp = plant.step(&xp, ur, period)?;
            let fm = plant.step(&xm, ur, period)?;
            for i in 0..n {
                jac[r * n * n + i * n + j] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
    }
    Ok(tape.external(x, out, jac))
}

pub fn phy_term(tape: &mut Tape, plant: &Plant, xhat: Var, xhat_next: Var, u: &Matrix, period: f64) -> Result<Var> {
    let stepped = plant_step_node(tape, plant, xhat, u, period)?;
    Ok(mean_sq_dist(tape, xhat_next, stepped))
}

/// Per-row `(a, c_1..c_m)` with `a = ∂V/∂z K z`, `c_i = ∂V/∂z Q_i z`.
pub fn lie_components(tape: &mut Tape, model: &BilinearModel, z: Var, grad: Var) -> (Var, Vec<Var>) {
    let k = tape.leaf(model.continuous_k());
    let kz = tape.matmul_bt(z, k);
    let gk = tape.mul(grad, kz);
    let a = tape.row_sum(gk);
    let c = model
        .continuous_q()
        .into_iter()
        .map(|q| {
            let ql = tape.leaf(q);
            let qz = tape.matmul_bt(z, ql);
            let gq = tape.mul(grad, qz);
            tape.row_sum(gq)
        })
        .collect();
    (a, c)
}

/// `∇V = a + Σ c_i u_i` per row with `u` held constant.
pub fn lie_derivative(tape: &mut Tape, a: Var, c: &[Var], u: &Matrix) -> Var {
    let mut out = a;
    for (i, ci) in c.iter().enumerate() {
        let ui = tape.leaf(Matrix::column_vector(&u.col(i)));
        let term = tape.mul(*ci, ui);
        out = tape.add(out, term);
    }
    out
}

/// Clipped Sontag inputs evaluated from the current tape values.
pub fn sontag_inputs(tape: &Tape, a: Var, c: &[Var], plant: &Plant) -> Matrix {
    let av = tape.value(a);
    let rows = av.rows();
    let mut u = Matrix::zeros(rows, c.len());
    for r in 0..rows {
        let cr: Vec<f64> = c.iter().map(|ci| tape.value(*ci)[(r, 0)]).collect();
        let mut ur = sontag_control(av[(r, 0)], &cr, SIGMA_TOL);
        plant.input_domain.clamp(&mut ur);
        u.row_mut(r).copy_from_slice(&ur);
    }
    u
}

/// Per-row Lyapunov violation (before the mean) and the scalar risk.
pub fn lyap_term(tape: &mut Tape, v: Var, lie: Var, v0: Var, z: Var, exponential: Option<[f64; 3]>) -> (Var, Var) {
    let v0sq = tape.square(v0);
    let per_row = match exponential {
        None => {
            let neg = tape.scale(v, -1.0);
            let h1 = tape.relu(neg);
            let h2 = tape.relu(lie);
            tape.add(h1, h2)
        }
        Some([g1, g2, g3]) => {
            let zsq = tape.square(z);
            let zn = tape.row_sum(zsq);
            let lo = tape.scale(zn, g1);
            let d1 = tape.sub(lo, v);
            let h1 = tape.relu(d1);
            let hi = tape.scale(zn, g2);
            let d2 = tape.sub(v, hi);
            let h2 = tape.relu(d2);
            let decay = tape.scale(v, g3);
            let d3 = tape.add(lie, decay);
            let h3 = tape.relu(d3);
            let s = tape.add(h1, h2);
            tape.add(s, h3)
        }
    };
    let mean = tape.mean(per_row);
    let v0m = tape.sum(v0sq);
    let total = tape.add(mean, v0m);
    (per_row, total)
}

pub fn roa_term(tape: &mut Tape, z: Var, v: Var, gamma4: f64, hinged: bool) -> Var {
    let zsq = tape.square(z);
    let zn = tape.row_sum(zsq);
    let norm = tape.sqrt(zn);
    let gv = tape.scale(v, gamma4);
    let d = tape.sub(norm, gv);
    let per_row = if hinged { tape.relu(d) } else { d };
    tape.mean(per_row)
}

/// Per-sample violation margins used for the worst-violation diagnostic.
fn worst_violation(tape: &Tape, v: Var, lie: Var, exponential: Option<[f64; 3]>, z: Var) -> (f64, usize) {
    let (vv, lv, zv) = (tape.value(v), tape.value(lie), tape.value(z));
    let mut worst = (f64::NEG_INFINITY, 0);
    for r in 0..vv.rows() {
        let (vr, lr) = (vv[(r, 0)], lv[(r, 0)]);
        let m = match exponential {
            None => lr.max(-vr),
            Some([g1, g2, g3]) => {
                let zn: f64 = zv.row(r).iter().map(|x| x * x).sum();
                (g1 * zn - vr).max(vr - g2 * zn).max(lr + g3 * vr)
            }
        };
        if m > worst.0 {
            worst = (m, r);
        }
    }
    worst
}

/// Evaluates every loss term and the gradient of the weighted total.
pub fn evaluate(batch: &LossBatch, nets: &NetworkBundle, source: ModelSource, settings: &LossSettings) -> Result<LossOutput> {
    let w = &settings.weights;
    let data = batch.data;
    let snapshots = data.states.rows();
    let n = data.states.cols();
    if batch.extra.rows() > 0 && batch.extra.cols() != n {
        return Err(Error::shape("counterexample states must match the state dimension"));
    }
    let mut tape = Tape::new();
    let enc = nets.encoder.taped(&mut tape);
    let dec = TapedMlp::new(&mut tape, &nets.decoder.spec, &nets.decoder.params);
    let clf = nets.clf.taped(&mut tape);

    let mut all = data.states.clone();
    if batch.extra.rows() > 0 {
        all = Matrix::from_vec(snapshots + batch.extra.rows(), n, [data.states.data(), batch.extra.data()].concat())?;
    }
    let x_all = tape.leaf(all);
    let z_all = nets.encoder.lift_taped(&mut tape, enc.as_ref(), x_all);
    let data_rows: Vec<usize> = (0..snapshots).collect();
    let z = if batch.extra.rows() > 0 { tape.rows(z_all, &data_rows) } else { z_all };
    let src = data.sources();
    let dst = data.successors();
    let z_src = tape.rows(z, &src);
    let z_dst = tape.rows(z, &dst);

    let model = match source {
        ModelSource::Fixed(m) => m.clone(),
        ModelSource::Refit(opts) => fit_bilinear(tape.value(z_src), tape.value(z_dst), &data.inputs, batch.period, opts)?,
    };

    let x = tape.leaf(data.states.clone());
    let xhat = dec.forward(&mut tape, z).output();
    let recons = recons_term(&mut tape, x, xhat);
    let dyn_ = dyn_term(&mut tape, &model, z_src, z_dst, &data.inputs);
    let xhat_src = tape.rows(xhat, &src);
    let xhat_dst = tape.rows(xhat, &dst);
    let phy = phy_term(&mut tape, batch.plant, xhat_src, xhat_dst, &data.inputs, batch.period)?;

    let (v, grad) = clf.value_and_grad(&mut tape, z_all);
    let (a, c) = lie_components(&mut tape, &model, z_all, grad);
    let u = match settings.lie_input {
        LieInput::Sontag => sontag_inputs(&tape, a, &c, batch.plant),
        LieInput::Dataset => {
            let mut u = Matrix::zeros(tape.value(z_all).rows(), model.input_dim());
            for (k, &s) in src.iter().enumerate() {
                u.row_mut(s).copy_from_slice(data.inputs.row(k));
            }
            u
        }
    };
    let lie = lie_derivative(&mut tape, a, &c, &u);
    let zero = tape.leaf(Matrix::zeros(1, model.lifted_dim()));
    let v0 = clf.value(&mut tape, zero);
    let (_, lyap) = lyap_term(&mut tape, v, lie, v0, z_all, w.exponential);
    let roa = roa_term(&mut tape, z_all, v, w.gamma4, w.roa_hinged);

    let terms = [recons, dyn_, phy, lyap];
    let mut total = roa;
    for (t, alpha) in terms.iter().zip(w.alpha) {
        let s = tape.scale(*t, alpha);
        total = tape.add(total, s);
    }
    let (worst_margin, worst_index) = worst_violation(&tape, v, lie, w.exponential, z_all);
    let report = LossReport {
        recons: tape.scalar(recons),
        dyn_: tape.scalar(dyn_),
        phy: tape.scalar(phy),
        lyap: tape.scalar(lyap),
        roa: tape.scalar(roa),
        total: tape.scalar(total),
        worst_margin,
        worst_index,
    };
    let g = tape.backward(total)?;
    let grads =
        BundleGrads { encoder: enc.as_ref().map_or_else(Vec::new, |m| m.gather(&g)), decoder: dec.gather(&g), clf: clf.mlp.gather(&g) };
    Ok(LossOutput { report, grads, model })
}
