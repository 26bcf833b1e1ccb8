//! Sontag's universal formula on the learned bilinear model and closed-loop
//! rollouts against the true plant.

use serde::{Deserialize, Serialize};

use crate::edmd::BilinearModel;
use crate::error::Result;
use crate::nets::{Clf, Encoder};
use crate::numerics::scalar::{affine, dot};
use crate::numerics::{Matrix, Scalar};
use crate::sim::Plant;

/// Below this `σ` the formula's `u = 0` branch is taken.
pub const SIGMA_TOL: f64 = 1e-9;

/// `V`, `∂V/∂z`, `a = ∂V/∂z K z` and `c_i = ∂V/∂z Q_i z` at one lifted point.
#[derive(Debug, Clone)]
pub struct LieTerms<S> {
    pub v: S,
    pub grad: Vec<S>,
    pub a: S,
    pub c: Vec<S>,
}

impl<S: Scalar> LieTerms<S> {
    /// `σ = Σ c_i²`.
    pub fn sigma(&self) -> S {
        crate::numerics::scalar::sum_squares(&self.c)
    }

    /// `a + Σ c_i u_i`.
    pub fn lie_derivative(&self, u: &[f64]) -> S {
        let mut out = self.a.clone();
        for (ci, ui) in self.c.iter().zip(u) {
            out = out + ci.scale(*ui);
        }
        out
    }
}

/// Continuous-time matrices `K` and `Q_i` of a bilinear model.
#[derive(Debug, Clone)]
pub struct ContinuousModel {
    pub k: Matrix,
    pub q: Vec<Matrix>,
}

impl ContinuousModel {
    pub fn from_model(model: &BilinearModel) -> Self {
        ContinuousModel { k: model.continuous_k(), q: model.continuous_q() }
    }
}

fn mat_apply<S: Scalar>(m: &Matrix, z: &[S]) -> Vec<S> {
    (0..m.rows()).map(|r| affine(m.row(r), z, 0.0)).collect()
}

pub fn lie_terms<S: Scalar>(clf: &Clf, cm: &ContinuousModel, z: &[S]) -> LieTerms<S> {
    let (v, grad) = clf.value_and_grad(z);
    let a = dot(&grad, &mat_apply(&cm.k, z));
    let c = cm.q.iter().map(|q| dot(&grad, &mat_apply(q, z))).collect();
    LieTerms { v, grad, a, c }
}

pub fn sontag_terms(clf: &Clf, model: &BilinearModel, z: &[f64]) -> LieTerms<f64> {
    lie_terms(clf, &ContinuousModel::from_model(model), z)
}

/// `u_i = −c_i (a + √(a² + σ²)) / σ` when `σ > tol`, otherwise `u = 0`,
/// with `σ = Σ c_i²`.
pub fn sontag_control(a: f64, c: &[f64], tol: f64) -> Vec<f64> {
    let sigma: f64 = c.iter().map(|ci| ci * ci).sum();
    if !(sigma > tol) {
        return vec![0.0; c.len()];
    }
    // a + √(a² + σ²) loses everything to cancellation when a ≪ 0
    let num = if a > 0.0 { a + a.hypot(sigma) } else { sigma * sigma / (a.hypot(sigma) - a) };
    c.iter().map(|ci| -ci * num / sigma).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RolloutStatus {
    Converged,
    Horizon,
    Diverged,
}

impl RolloutStatus {
    pub fn name(self) -> &'static str {
        match self {
            RolloutStatus::Converged => "converged",
            RolloutStatus::Horizon => "horizon",
            RolloutStatus::Diverged => "diverged",
        }
    }
}

/// One closed-loop sample; `u`, `v`, `a` and `sigma` refer to the state `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub v: f64,
    pub a: f64,
    pub sigma: f64,
    pub clipped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub records: Vec<StepRecord>,
    pub status: RolloutStatus,
    pub left_domain: bool,
    pub clip_events: usize,
}

impl Rollout {
    pub fn final_state(&self) -> &[f64] {
        &self.records.last().expect("rollouts record the initial state").x
    }

    pub fn final_norm(&self) -> f64 {
        norm(self.final_state())
    }

    /// Time of the first sample inside `radius`, if any.
    pub fn time_to_reach(&self, radius: f64) -> Option<f64> {
        self.records.iter().find(|r| norm(&r.x) < radius).map(|r| r.t)
    }
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutOptions {
    pub period: f64,
    pub horizon_steps: usize,
    pub stop_tol: f64,
    /// Apply `u = 0` instead of the controller.
    pub uncontrolled: bool,
    /// End the rollout when the state leaves the state domain.
    pub stop_on_exit: bool,
}

impl RolloutOptions {
    /// Horizon of 10 s and a stop ball of 1% of the widest domain side.
    pub fn for_plant(plant: &Plant, period: f64) -> Self {
        RolloutOptions {
            period,
            horizon_steps: (10.0 / period).round() as usize,
            stop_tol: 1e-2 * plant.state_domain.max_width(),
            uncontrolled: false,
            stop_on_exit: false,
        }
    }
}

/// The learned artifacts needed to close the loop.
pub struct Controller<'a> {
    pub encoder: &'a Encoder,
    pub clf: &'a Clf,
    pub model: &'a BilinearModel,
    cm: ContinuousModel,
}

impl<'a> Controller<'a> {
    pub fn new(encoder: &'a Encoder, clf: &'a Clf, model: &'a BilinearModel) -> Self {
        Controller { encoder, clf, model, cm: ContinuousModel::from_model(model) }
    }

    /// Sontag input at `x` clipped to the plant's input box, with diagnostics.
    pub fn evaluate(&self, plant: &Plant, x: &[f64]) -> (Vec<f64>, LieTerms<f64>, bool) {
        let z = self.encoder.lift(x);
        let terms = lie_terms(self.clf, &self.cm, &z);
        let mut u = sontag_control(terms.a, &terms.c, SIGMA_TOL);
        let clipped = plant.input_domain.clamp(&mut u);
        (u, terms, clipped)
    }

    /// The clipped Sontag input at `x` and the plant state one period later.
    pub fn closed_loop_step(&self, plant: &Plant, x: &[f64], period: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let (u, _, _) = self.evaluate(plant, x);
        let next = plant.step(x, &u, period)?;
        Ok((u, next))
    }

    pub fn rollout(&self, plant: &Plant, x0: &[f64], opts: &RolloutOptions) -> Result<Rollout> {
        let limit = 10.0 * plant.state_domain.max_width();
        let mut x = x0.to_vec();
        let mut records = Vec::new();
        let mut left_domain = false;
        let mut clip_events = 0;
        let mut status = RolloutStatus::Horizon;
        for k in 0..=opts.horizon_steps {
            let t = k as f64 * opts.period;
            let (mut u, terms, clipped) = self.evaluate(plant, &x);
            if opts.uncontrolled {
                u.iter_mut().for_each(|v| *v = 0.0);
            } else if clipped {
                clip_events += 1;
            }
            let sigma = terms.sigma();
            let done = norm(&x) < opts.stop_tol;
            let out = !plant.state_domain.contains(&x);
            left_domain |= out;
            let diverged = !x.iter().all(|v| v.is_finite()) || norm(&x) > limit;
            records.push(StepRecord { t, x: x.clone(), u: u.clone(), v: terms.v, a: terms.a, sigma, clipped });
            if done {
                status = RolloutStatus::Converged;
                break;
            }
            if diverged {
                status = RolloutStatus::Diverged;
                break;
            }
            if (out && opts.stop_on_exit) || k == opts.horizon_steps {
                break;
            }
            x = match plant.step(&x, &u, opts.period) {
                Ok(next) => next,
                Err(_) => {
                    status = RolloutStatus::Diverged;
                    break;
                }
            };
        }
        Ok(Rollout { records, status, left_domain, clip_events })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::{MlpSpec, Network};
    use crate::sim::{make_pendulum, make_vanderpol};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// `V = ‖z‖²` as a quadratic CLF with `γ = 1` and `W ≡ 0`.
    fn unit_clf(n: usize) -> Clf {
        let spec = MlpSpec::with_hidden(n, &[3], n, true);
        Clf::Quadratic { gamma: 1.0, n_w: 1, net: Network::zeros(spec) }
    }

    #[test]
    fn terms_vanish_at_origin() {
        let m = BilinearModel::new(Matrix::identity(2).scale(1.1), vec![Matrix::identity(2)], 0.1).unwrap();
        let t = sontag_terms(&unit_clf(2), &m, &[0.0, 0.0]);
        assert_eq!((t.a, t.c[0], t.sigma()), (0.0, 0.0, 0.0));
    }

    #[test]
    fn terms_of_the_unit_clf() {
        // K_d = I − T I gives K = −I; B_1 = T I gives Q_1 = I
        let period = 0.01;
        let m = BilinearModel::new(Matrix::identity(2).scale(1.0 - period), vec![Matrix::identity(2).scale(period)], period).unwrap();
        let t = sontag_terms(&unit_clf(2), &m, &[1.0, 2.0]);
        assert!((t.a + 10.0).abs() < 1e-12);
        let m1 = BilinearModel::new(Matrix::identity(1), vec![Matrix::identity(1).scale(period)], period).unwrap();
        let t = sontag_terms(&unit_clf(1), &m1, &[1.0]);
        assert!((t.c[0] - 2.0).abs() < 1e-12 && (t.sigma() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn formula_examples() {
        assert_eq!(sontag_control(3.0, &[0.0], SIGMA_TOL), vec![0.0]);
        let u = sontag_control(2.0, &[2.0], SIGMA_TOL)[0];
        assert!((u + 1.0 + 5f64.sqrt()).abs() < 1e-12, "{u}");
        let u = sontag_control(-1.0, &[1.0], SIGMA_TOL)[0];
        assert!((u + (2f64.sqrt() - 1.0)).abs() < 1e-12, "{u}");
    }

    #[test]
    fn closed_loop_lie_derivative_is_negative() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let a: f64 = rng.random_range(-5.0..5.0);
            let c: Vec<f64> = (0..2).map(|_| rng.random_range(-3.0..3.0)).collect();
            let sigma: f64 = c.iter().map(|v| v * v).sum();
            let u = sontag_control(a, &c, SIGMA_TOL);
            let lie = a + dot(&c, &u);
            assert!((lie + (a * a + sigma * sigma).sqrt()).abs() < 1e-9);
        }
    }

    #[test]
    fn scaling_v_keeps_input_signs() {
        let (a, c) = (0.7, [1.5, -0.2]);
        let u = sontag_control(a, &c, SIGMA_TOL);
        for lam in [0.1, 3.0, 50.0] {
            let cl: Vec<f64> = c.iter().map(|v| lam * v).collect();
            let ul = sontag_control(lam * a, &cl, SIGMA_TOL);
            for (p, q) in u.iter().zip(&ul) {
                assert_eq!(p.signum(), q.signum());
            }
        }
    }

    fn identity_setup(n: usize) -> (Encoder, Clf) {
        (Encoder::Identity { dim: n }, unit_clf(n))
    }

    #[test]
    fn origin_is_immediately_converged() {
        let plant = make_pendulum();
        let (enc, clf) = identity_setup(2);
        let m = BilinearModel::new(Matrix::identity(2), vec![Matrix::identity(2).scale(0.005)], 0.005).unwrap();
        let ctl = Controller::new(&enc, &clf, &m);
        let (u, next) = ctl.closed_loop_step(&plant, &[0.0, 0.0], 0.005).unwrap();
        assert_eq!((u, next), (vec![0.0], vec![0.0, 0.0]));
        let r = ctl.rollout(&plant, &[0.0, 0.0], &RolloutOptions::for_plant(&plant, 0.005)).unwrap();
        assert_eq!(r.status, RolloutStatus::Converged);
        assert_eq!(r.records.len(), 1);
    }

    #[test]
    fn large_inputs_are_clipped() {
        let plant = make_pendulum();
        let (enc, clf) = identity_setup(2);
        // strongly unstable drift, weak actuation: Sontag asks for a huge input
        let t = 0.005;
        let m = BilinearModel::new(Matrix::identity(2).scale(1.0 + 100.0 * t), vec![Matrix::identity(2).scale(1e-3 * t)], t).unwrap();
        let ctl = Controller::new(&enc, &clf, &m);
        let (u, terms, clipped) = ctl.evaluate(&plant, &[0.5, 0.5]);
        assert!(clipped);
        assert_eq!(u[0].abs(), 20.0);
        assert!(sontag_control(terms.a, &terms.c, SIGMA_TOL)[0].abs() > 20.0);
    }

    #[test]
    fn lifted_lie_derivative_decreases_along_a_stabilizable_lift() {
        // z = x on the scalar system ż = z + z u, which the formula stabilizes
        // away from the origin
        let t = 0.001;
        let m = BilinearModel::new(Matrix::filled(1, 1, 1.0 + t), vec![Matrix::filled(1, 1, t)], t).unwrap();
        let (enc, clf) = identity_setup(1);
        let ctl = Controller::new(&enc, &clf, &m);
        let cm = ContinuousModel::from_model(&m);
        let mut z = 0.8;
        for _ in 0..2000 {
            let terms = lie_terms(&clf, &cm, &[z]);
            let u = sontag_control(terms.a, &terms.c, SIGMA_TOL);
            assert!(terms.lie_derivative(&u) < 0.0);
            z = m.predict(&[z], &u)[0];
        }
        assert!(z.abs() < 0.8);
        let _ = ctl;
    }

    #[test]
    fn uncontrolled_vanderpol_does_not_settle() {
        let plant = make_vanderpol();
        let (enc, clf) = identity_setup(2);
        let m = BilinearModel::new(Matrix::identity(2), vec![Matrix::identity(2).scale(0.01)], 0.01).unwrap();
        let ctl = Controller::new(&enc, &clf, &m);
        let mut opts = RolloutOptions::for_plant(&plant, 0.01);
        opts.uncontrolled = true;
        opts.horizon_steps = 2000;
        let r = ctl.rollout(&plant, &[0.5, 0.0], &opts).unwrap();
        assert_ne!(r.status, RolloutStatus::Converged);
        assert!(r.records.iter().all(|s| s.u == vec![0.0]));
    }
}
