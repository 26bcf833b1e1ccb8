use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{backprop_input, forward, forward_trace, MlpSpec, Network};
use super::tape::{Tape, TapedMlp, Var};
use crate::error::{Error, Result};
use crate::numerics::scalar::sum_squares;
use crate::numerics::{Matrix, Scalar};

/// Lifting map `z = Φ(x) − Φ(0)`, so that the lifted origin is always an
/// equilibrium of the bilinear model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Encoder {
    /// The state itself; used for already-lifted systems.
    Identity {
        dim: usize,
    },
    Mlp {
        net: Network,
    },
}

impl Encoder {
    pub fn input_dim(&self) -> usize {
        match self {
            Encoder::Identity { dim } => *dim,
            Encoder::Mlp { net } => net.spec.input_dim(),
        }
    }

    pub fn lifted_dim(&self) -> usize {
        match self {
            Encoder::Identity { dim } => *dim,
            Encoder::Mlp { net } => net.spec.output_dim(),
        }
    }

    pub fn params(&self) -> &[f64] {
        match self {
            Encoder::Identity { .. } => &[],
            Encoder::Mlp { net } => &net.params,
        }
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match self {
            Encoder::Identity { .. } => &mut [],
            Encoder::Mlp { net } => &mut net.params,
        }
    }

    /// `Φ(0)` in plain arithmetic.
    pub fn origin(&self) -> Vec<f64> {
        match self {
            Encoder::Identity { dim } => vec![0.0; *dim],
            Encoder::Mlp { net } => net.forward(&vec![0.0; net.spec.input_dim()]),
        }
    }

    pub fn lift<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        match self {
            Encoder::Identity { .. } => x.to_vec(),
            Encoder::Mlp { net } => {
                let origin = self.origin();
                net.forward(x).into_iter().zip(origin).map(|(z, o)| z.add_const(-o)).collect()
            }
        }
    }

    /// Lifts every row of `x` on the tape.
    pub fn lift_taped(&self, tape: &mut Tape, taped: Option<&TapedMlp>, x: Var) -> Var {
        let Some(mlp) = taped else { return x };
        let out = mlp.forward(tape, x).output();
        let zero = tape.leaf(Matrix::zeros(1, mlp.spec.input_dim()));
        let origin = mlp.forward(tape, zero).output();
        let neg = tape.scale(origin, -1.0);
        tape.add_row(out, neg)
    }

    pub fn taped(&self, tape: &mut Tape) -> Option<TapedMlp> {
        match self {
            Encoder::Identity { .. } => None,
            Encoder::Mlp { net } => Some(TapedMlp::new(tape, &net.spec, &net.params)),
        }
    }
}

/// Candidate control Lyapunov function on the lifted space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Clf {
    /// `V(z) = zᵀ(γI + W(z)ᵀW(z))z` with `W(z)` an `n_w × N` network output
    /// stored row-major.
    Quadratic { gamma: f64, n_w: usize, net: Network },
    /// A scalar-output network used directly as `V`.
    Mlp { net: Network },
}

impl Clf {
    pub fn quadratic(gamma: f64, n_w: usize, lifted_dim: usize, hidden: &[usize], rng: &mut impl Rng) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::Config(format!("CLF gamma must be positive, got {gamma}")));
        }
        let spec = MlpSpec::with_hidden(lifted_dim, hidden, n_w * lifted_dim, true);
        Ok(Clf::Quadratic { gamma, n_w, net: Network::random(spec, rng) })
    }

    pub fn mlp(lifted_dim: usize, hidden: &[usize], linear_head: bool, rng: &mut impl Rng) -> Self {
        let spec = MlpSpec::with_hidden(lifted_dim, hidden, 1, linear_head);
        Clf::Mlp { net: Network::random(spec, rng) }
    }

    pub fn net(&self) -> &Network {
        match self {
            Clf::Quadratic { net, .. } | Clf::Mlp { net } => net,
        }
    }

    pub fn net_mut(&mut self) -> &mut Network {
        match self {
            Clf::Quadratic { net, .. } | Clf::Mlp { net } => net,
        }
    }

    pub fn lifted_dim(&self) -> usize {
        self.net().spec.input_dim()
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self, Clf::Quadratic { .. })
    }

    pub fn value<S: Scalar>(&self, z: &[S]) -> S {
        match self {
            Clf::Quadratic { gamma, n_w, net } => {
                let w = forward(&net.spec, &net.params, z);
                let wz = weight_times(&w, *n_w, z);
                sum_squares(z).scale(*gamma) + sum_squares(&wz)
            }
            Clf::Mlp { net } => forward(&net.spec, &net.params, z).pop().unwrap(),
        }
    }

    /// `(V(z), ∂V/∂z)`.
    pub fn value_and_grad<S: Scalar>(&self, z: &[S]) -> (S, Vec<S>) {
        match self {
            Clf::Quadratic { gamma, n_w, net } => {
                let n = z.len();
                let acts = forward_trace(&net.spec, &net.params, z);
                let w = acts.last().unwrap();
                let wz = weight_times(w, *n_w, z);
                let value = sum_squares(z).scale(*gamma) + sum_squares(&wz);
                // ∂/∂W_ij of ‖Wz‖² is 2 (Wz)_i z_j
                let mut upstream = Vec::with_capacity(n_w * n);
                for wi in &wz {
                    let twice = wi.scale(2.0);
                    for zj in z {
                        upstream.push(twice.clone() * zj.clone());
                    }
                }
                let through_net = backprop_input(&net.spec, &net.params, &acts, upstream);
                let grad = (0..n)
                    .map(|j| {
                        let mut g = z[j].scale(2.0 * gamma);
                        for (i, wi) in wz.iter().enumerate() {
                            g = g + (w[i * n + j].clone() * wi.clone()).scale(2.0);
                        }
                        g + through_net[j].clone()
                    })
                    .collect();
                (value, grad)
            }
            Clf::Mlp { net } => {
                let acts = forward_trace(&net.spec, &net.params, z);
                let value = acts.last().unwrap()[0].clone();
                let one = value.lift(1.0);
                let grad = backprop_input(&net.spec, &net.params, &acts, vec![one]);
                (value, grad)
            }
        }
    }

    pub fn taped(&self, tape: &mut Tape) -> TapedClf {
        let net = self.net();
        let mlp = TapedMlp::new(tape, &net.spec, &net.params);
        match self {
            Clf::Quadratic { gamma, .. } => TapedClf { mlp, gamma: Some(*gamma) },
            Clf::Mlp { .. } => TapedClf { mlp, gamma: None },
        }
    }
}

/// `W z` with `W` given row-major as `n_w × z.len()`.
fn weight_times<S: Scalar>(w: &[S], n_w: usize, z: &[S]) -> Vec<S> {
    let n = z.len();
    (0..n_w).map(|i| crate::numerics::scalar::dot(&w[i * n..(i + 1) * n], z)).collect()
}

/// A CLF whose parameters live on a tape.
pub struct TapedClf {
    pub mlp: TapedMlp,
    gamma: Option<f64>,
}

impl TapedClf {
    /// Rows of `V` (`B × 1`) and of `∂V/∂z` (`B × N`), both differentiable
    /// with respect to the CLF parameters and to `z`.
    pub fn value_and_grad(&self, tape: &mut Tape, z: Var) -> (Var, Var) {
        let acts = self.mlp.forward(tape, z);
        match self.gamma {
            Some(gamma) => {
                let w = acts.output();
                let wz = tape.batch_matvec(w, z);
                let zsq = tape.square(z);
                let zn = tape.row_sum(zsq);
                let zn = tape.scale(zn, gamma);
                let wsq = tape.square(wz);
                let wn = tape.row_sum(wsq);
                let value = tape.add(zn, wn);
                let lin = tape.scale(z, 2.0 * gamma);
                let wtw = tape.batch_mattvec(w, wz);
                let wtw = tape.scale(wtw, 2.0);
                let outer = tape.batch_outer(wz, z);
                let outer = tape.scale(outer, 2.0);
                let through = self.mlp.input_vjp(tape, &acts, outer);
                let g = tape.add(lin, wtw);
                let grad = tape.add(g, through);
                (value, grad)
            }
            None => {
                let value = acts.output();
                let rows = tape.value(z).rows();
                let ones = tape.leaf(Matrix::filled(rows, 1, 1.0));
                let grad = self.mlp.input_vjp(tape, &acts, ones);
                (value, grad)
            }
        }
    }

    pub fn value(&self, tape: &mut Tape, z: Var) -> Var {
        let acts = self.mlp.forward(tape, z);
        match self.gamma {
            Some(gamma) => {
                let w = acts.output();
                let wz = tape.batch_matvec(w, z);
                let zsq = tape.square(z);
                let zn = tape.row_sum(zsq);
                let zn = tape.scale(zn, gamma);
                let wsq = tape.square(wz);
                let wn = tape.row_sum(wsq);
                tape.add(zn, wn)
            }
            None => acts.output(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn quad(gamma: f64, n: usize, seed: u64) -> Clf {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Clf::quadratic(gamma, 2, n, &[6], &mut rng).unwrap()
    }

    fn zero_w(gamma: f64, n: usize) -> Clf {
        let mut c = quad(gamma, n, 0);
        c.net_mut().params.iter_mut().for_each(|p| *p = 0.0);
        c
    }

    #[test]
    fn quadratic_values() {
        let c = quad(0.3, 3, 1);
        assert_eq!(c.value(&[0.0, 0.0, 0.0]), 0.0);
        let c = zero_w(0.5, 2);
        assert_eq!(c.value(&[1.0, 1.0]), 1.0);
        let (_, g) = c.value_and_grad(&[1.0, -2.0]);
        assert_eq!(g, vec![1.0, -2.0]);
    }

    #[test]
    fn zero_mlp_clf_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut c = Clf::mlp(3, &[6], true, &mut rng);
        c.net_mut().params.iter_mut().for_each(|p| *p = 0.0);
        let (v, g) = c.value_and_grad(&[0.4, 0.1, -1.0]);
        assert_eq!(v, 0.0);
        assert_eq!(g, vec![0.0; 3]);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let clfs = [quad(0.2, 4, 4), Clf::mlp(4, &[6], true, &mut rng)];
        let z = [0.3, -0.7, 0.1, 0.5];
        for c in &clfs {
            let (_, g) = c.value_and_grad(&z);
            for j in 0..4 {
                let h = 1e-6;
                let (mut zp, mut zm) = (z, z);
                zp[j] += h;
                zm[j] -= h;
                let fd = (c.value(&zp) - c.value(&zm)) / (2.0 * h);
                assert!((fd - g[j]).abs() < 1e-6, "{fd} vs {}", g[j]);
            }
        }
    }

    #[test]
    fn taped_clf_matches_plain_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for c in [quad(0.7, 3, 6), Clf::mlp(3, &[5], true, &mut rng)] {
            let rows = vec![vec![0.1, 0.2, -0.3], vec![1.0, -0.5, 0.25]];
            let mut t = Tape::new();
            let tc = c.taped(&mut t);
            let z = t.leaf(Matrix::from_rows(&rows).unwrap());
            let (v, g) = tc.value_and_grad(&mut t, z);
            let v2 = tc.value(&mut t, z);
            for (r, row) in rows.iter().enumerate() {
                let (pv, pg) = c.value_and_grad(row);
                assert!((t.value(v)[(r, 0)] - pv).abs() < 1e-13);
                assert!((t.value(v2)[(r, 0)] - pv).abs() < 1e-13);
                for (j, d) in pg.iter().enumerate() {
                    assert!((t.value(g)[(r, j)] - d).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn encoder_fixes_origin() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let e = Encoder::Mlp { net: Network::random(MlpSpec::with_hidden(2, &[6], 6, false), &mut rng) };
        assert_eq!(e.lift(&[0.0, 0.0]), vec![0.0; 6]);
        assert!(e.origin().iter().any(|v| *v != 0.0));
        let x = Matrix::from_rows(&[vec![0.0, 0.0], vec![0.5, -0.2]]).unwrap();
        let mut t = Tape::new();
        let tm = e.taped(&mut t);
        let xv = t.leaf(x);
        let z = e.lift_taped(&mut t, tm.as_ref(), xv);
        assert!(t.value(z).row(0).iter().all(|v| v.abs() < 1e-15));
        let direct = e.lift(&[0.5, -0.2]);
        for (j, d) in direct.iter().enumerate() {
            assert!((t.value(z)[(1, j)] - d).abs() < 1e-14);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn quadratic_clf_dominates_gamma_norm(
            seed in 0u64..10_000,
            scale in 0.1f64..20.0,
            z in proptest::collection::vec(-10.0f64..10.0, 4),
            gamma in 0.01f64..3.0,
        ) {
            let mut c = quad(gamma, 4, seed);
            c.net_mut().params.iter_mut().for_each(|p| *p *= scale);
            let norm: f64 = z.iter().map(|v| v * v).sum();
            prop_assert!(c.value(&z) >= gamma * norm - 1e-12);
        }
    }
}
