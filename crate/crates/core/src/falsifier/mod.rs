//! Interval branch-and-bound search for states that violate the CLF
//! conditions on the learned model.
//!
//! The query is `Σ z_i² ≥ ε ∧ (clause_1 ∨ clause_2 ∨ …)` over the state box.
//! Each clause is a primary margin `g(z) > 0` guarded by side conditions
//! `h_j(z) ≥ 0`. Boxes are enclosed with the natural interval extension
//! intersected with the mean-value form, processed worst-first, and split
//! along their widest side until every clause is refuted, a point
//! counterexample is found, or the box is narrower than `δ`.

mod certificate;
pub mod interval;

pub use certificate::{Certificate, Outcome};
pub use interval::{Dual, Interval};

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::controller::{lie_terms, ContinuousModel};
use crate::edmd::BilinearModel;
use crate::error::{Error, Result};
use crate::losses::LieInput;
use crate::nets::{Clf, Encoder};
use crate::numerics::scalar::sum_squares;
use crate::numerics::Scalar;
use crate::sim::BoxDomain;

pub const DEFAULT_TAU: f64 = 1e-6;
pub const EPSILON_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClauseKind {
    /// `V(z) ≤ 0`.
    Positivity,
    /// No input in `U` makes `∇V` negative.
    Decrease,
    /// `V(z) ≤ γ1 ‖z‖²`.
    LowerBound,
    /// `V(z) ≥ γ2 ‖z‖²`.
    UpperBound,
    /// `∇V + γ3 V ≥ 0` with the Sontag input, in the `σ ≈ 0` branch.
    ExpDecreaseDegenerate,
    /// `∇V + γ3 V ≥ 0` with the Sontag input, in the `σ > 0` branch.
    ExpDecrease,
}

impl ClauseKind {
    pub fn name(self) -> &'static str {
        match self {
            ClauseKind::Positivity => "positivity",
            ClauseKind::Decrease => "decrease",
            ClauseKind::LowerBound => "lower_bound",
            ClauseKind::UpperBound => "upper_bound",
            ClauseKind::ExpDecreaseDegenerate => "exp_decrease_degenerate",
            ClauseKind::ExpDecrease => "exp_decrease",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [
            ClauseKind::Positivity,
            ClauseKind::Decrease,
            ClauseKind::LowerBound,
            ClauseKind::UpperBound,
            ClauseKind::ExpDecreaseDegenerate,
            ClauseKind::ExpDecrease,
        ]
        .into_iter()
        .find(|c| c.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FalsifierConfig {
    pub epsilon: f64,
    pub delta: f64,
    pub budget: usize,
    pub tau_sigma: f64,
    pub tau_a: f64,
    pub lie_input: LieInput,
    /// `(γ1, γ2, γ3)` for the exponential conditions.
    pub exponential: Option<[f64; 3]>,
}

impl FalsifierConfig {
    /// `δ = 10⁻³ ·` the widest side of the domain and a budget of 10⁶ splits.
    pub fn for_domain(domain: &BoxDomain, epsilon: f64) -> Self {
        FalsifierConfig {
            epsilon,
            delta: 1e-3 * domain.max_width(),
            budget: 1_000_000,
            tau_sigma: DEFAULT_TAU,
            tau_a: DEFAULT_TAU,
            lie_input: LieInput::Sontag,
            exponential: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) || !(self.epsilon > 0.0) || self.budget == 0 {
            return Err(Error::Config("falsifier needs delta > 0, epsilon > 0 and a nonzero budget".into()));
        }
        if !(self.tau_sigma >= 0.0 && self.tau_a >= 0.0) {
            return Err(Error::Config("falsifier tolerances must be nonnegative".into()));
        }
        Ok(())
    }
}

/// `ε = factor · min{1, extent, min_sq}` with a floor of `1e-8`, where
/// `min_sq` is the smaller of the least `Σ x_i²` and `Σ z_i²` considered.
pub fn choose_epsilon(extent: f64, min_x_sq: f64, min_z_sq: f64, factor: f64) -> f64 {
    let eps = factor * 1f64.min(extent).min(min_x_sq.min(min_z_sq));
    if eps > EPSILON_FLOOR {
        eps
    } else {
        EPSILON_FLOOR
    }
}

/// Everything the clauses are evaluated on.
pub struct Problem<'a> {
    pub encoder: &'a Encoder,
    pub clf: &'a Clf,
    pub model: &'a BilinearModel,
    pub domain: &'a BoxDomain,
    pub input_domain: &'a BoxDomain,
}

struct Clause<S> {
    kind: ClauseKind,
    primary: S,
    guards: Vec<S>,
}

struct Evaluated<S> {
    norm_sq: S,
    clauses: Vec<Clause<S>>,
}

struct Evaluator<'a> {
    problem: &'a Problem<'a>,
    cm: ContinuousModel,
    config: &'a FalsifierConfig,
}

impl<'a> Evaluator<'a> {
    fn new(problem: &'a Problem<'a>, config: &'a FalsifierConfig) -> Self {
        Evaluator { problem, cm: ContinuousModel::from_model(problem.model), config }
    }

    /// `Σz² − ε` and the clause margins at `x`, generic over the arithmetic.
    fn eval<S: Scalar>(&self, x: &[S]) -> Evaluated<S> {
        let cfg = self.config;
        let z = self.problem.encoder.lift(x);
        let norm_sq = sum_squares(&z);
        let t = lie_terms(self.problem.clf, &self.cm, &z);
        let mut clauses = Vec::new();
        if !self.problem.clf.is_quadratic() {
            clauses.push(Clause { kind: ClauseKind::Positivity, primary: -t.v.clone(), guards: vec![] });
        }
        let sigma = t.sigma();
        // `min_{u ∈ U} Σ c_i u_i` for a box `U`
        let worst_input = || {
            let dom = self.problem.input_domain;
            let mut acc = t.a.clone();
            for (i, ci) in t.c.iter().enumerate() {
                let mid = 0.5 * (dom.lo[i] + dom.hi[i]);
                let half = 0.5 * (dom.hi[i] - dom.lo[i]);
                acc = acc + ci.scale(mid) - ci.abs().scale(half);
            }
            acc
        };
        match cfg.exponential {
            None => {
                let (primary, guards) = match cfg.lie_input {
                    LieInput::Sontag => (t.a.add_const(cfg.tau_a), vec![-sigma.add_const(-cfg.tau_sigma)]),
                    LieInput::Dataset => (worst_input(), vec![]),
                };
                clauses.push(Clause { kind: ClauseKind::Decrease, primary, guards });
            }
            Some([g1, g2, g3]) => {
                clauses.push(Clause { kind: ClauseKind::LowerBound, primary: norm_sq.scale(g1) - t.v.clone(), guards: vec![] });
                clauses.push(Clause { kind: ClauseKind::UpperBound, primary: t.v.clone() - norm_sq.scale(g2), guards: vec![] });
                let decay = t.v.scale(g3);
                match cfg.lie_input {
                    LieInput::Sontag => {
                        clauses.push(Clause {
                            kind: ClauseKind::ExpDecreaseDegenerate,
                            primary: (t.a.clone() + decay.clone()).add_const(cfg.tau_a),
                            guards: vec![-sigma.add_const(-cfg.tau_sigma)],
                        });
                        let closed_loop = -(t.a.square() + sigma.square()).sqrt();
                        clauses.push(Clause { kind: ClauseKind::ExpDecrease, primary: closed_loop + decay, guards: vec![] });
                    }
                    LieInput::Dataset => {
                        clauses.push(Clause { kind: ClauseKind::Decrease, primary: worst_input() + decay, guards: vec![] });
                    }
                }
            }
        }
        Evaluated { norm_sq: norm_sq.add_const(-cfg.epsilon), clauses }
    }

    /// Enclosures over a box: natural extension intersected with the
    /// mean-value form around the box centre.
    fn enclose(&self, bx: &BoxDomain) -> Evaluated<Interval> {
        let n = bx.dim();
        let vars: Vec<Dual<Interval>> = (0..n).map(|i| Dual::variable(Interval::new(bx.lo[i], bx.hi[i]), i, n)).collect();
        let centre = bx.center();
        let offsets: Vec<Interval> = (0..n).map(|i| Interval::new(bx.lo[i], bx.hi[i]) - Interval::point(centre[i])).collect();
        let cvals: Vec<Interval> = centre.iter().map(|c| Interval::point(*c)).collect();
        let wide = self.eval(&vars);
        let at_centre = self.eval(&cvals);
        let combine = |d: &Dual<Interval>, c: &Interval| {
            let mut mv = *c;
            for (di, oi) in d.d.iter().zip(&offsets) {
                mv = mv + *di * *oi;
            }
            d.v.intersect(&mv)
        };
        Evaluated {
            norm_sq: combine(&wide.norm_sq, &at_centre.norm_sq),
            clauses: wide
                .clauses
                .iter()
                .zip(&at_centre.clauses)
                .map(|(w, c)| Clause {
                    kind: w.kind,
                    primary: combine(&w.primary, &c.primary),
                    guards: w.guards.iter().zip(&c.guards).map(|(gw, gc)| combine(gw, gc)).collect(),
                })
                .collect(),
        }
    }

    /// The most violated clause at a point, if any clause holds there.
    fn point_violation(&self, x: &[f64]) -> Option<(ClauseKind, f64)> {
        let e = self.eval(x);
        if !(e.norm_sq >= 0.0) {
            return None;
        }
        e.clauses
            .iter()
            .filter(|c| c.primary > 0.0 && c.guards.iter().all(|g| *g >= 0.0))
            .map(|c| (c.kind, c.primary))
            .max_by(|a, b| a.1.total_cmp(&b.1))
    }
}

/// Upper bound of the query margin over a box, or `None` when the box is
/// proven free of violations.
fn box_bound(e: &Evaluated<Interval>) -> Option<f64> {
    if e.norm_sq.hi < 0.0 {
        return None;
    }
    e.clauses.iter().filter(|c| c.primary.hi > 0.0 && c.guards.iter().all(|g| g.hi >= 0.0)).map(|c| c.primary.hi).max_by(f64::total_cmp)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub clause: ClauseKind,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FalsifyResult {
    pub outcome: Outcome,
    pub counterexample: Option<Counterexample>,
    /// On budget exhaustion, the open box with the largest bound.
    pub suspicious: Option<BoxDomain>,
    pub boxes_processed: usize,
    pub splits: usize,
    /// Boxes narrower than `δ` that could be neither refuted nor confirmed.
    pub unresolved: usize,
}

struct Pending {
    bound: f64,
    id: usize,
    bx: BoxDomain,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    /// Larger bound first, then older box first.
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound.total_cmp(&other.bound).then_with(|| other.id.cmp(&self.id))
    }
}

fn split(bx: &BoxDomain) -> (BoxDomain, BoxDomain) {
    let widths = bx.widths();
    let (axis, _) = widths.iter().enumerate().fold((0, f64::NEG_INFINITY), |best, (i, w)| if *w > best.1 { (i, *w) } else { best });
    let mid = 0.5 * (bx.lo[axis] + bx.hi[axis]);
    let mut left = bx.clone();
    let mut right = bx.clone();
    left.hi[axis] = mid;
    right.lo[axis] = mid;
    (left, right)
}

/// Runs the branch-and-bound search over `problem.domain`.
pub fn falsify(problem: &Problem, config: &FalsifierConfig) -> Result<FalsifyResult> {
    config.validate()?;
    if problem.domain.dim() != problem.encoder.input_dim() {
        return Err(Error::shape("falsifier domain does not match the encoder input"));
    }
    let ev = Evaluator::new(problem, config);
    let mut heap = BinaryHeap::new();
    let mut next_id = 0;
    let mut push = |heap: &mut BinaryHeap<Pending>, bx: BoxDomain| {
        if let Some(bound) = box_bound(&ev.enclose(&bx)) {
            heap.push(Pending { bound, id: next_id, bx });
        }
        next_id += 1;
    };
    push(&mut heap, problem.domain.clone());
    let mut result =
        FalsifyResult { outcome: Outcome::Unsat, counterexample: None, suspicious: None, boxes_processed: 0, splits: 0, unresolved: 0 };
    while let Some(item) = heap.pop() {
        result.boxes_processed += 1;
        let centre = item.bx.center();
        let mut candidates = vec![centre];
        let tiny = item.bx.max_width() < config.delta;
        if tiny {
            candidates.extend(item.bx.corners());
        }
        for x in candidates {
            if let Some((clause, margin)) = ev.point_violation(&x) {
                let z = problem.encoder.lift(&x);
                let cex = Counterexample { x, z, clause, margin };
                check_counterexample(problem, config, &cex)?;
                result.outcome = Outcome::Sat;
                result.counterexample = Some(cex);
                return Ok(result);
            }
        }
        if tiny {
            result.unresolved += 1;
            continue;
        }
        if result.splits >= config.budget {
            result.outcome = Outcome::Budget;
            result.suspicious = Some(item.bx);
            return Ok(result);
        }
        result.splits += 1;
        let (l, r) = split(&item.bx);
        push(&mut heap, l);
        push(&mut heap, r);
    }
    Ok(result)
}

/// Re-evaluates the counterexample's clause in plain arithmetic and returns
/// its margin, failing with a soundness error unless the clause holds.
pub fn check_counterexample(problem: &Problem, config: &FalsifierConfig, cex: &Counterexample) -> Result<f64> {
    let ev = Evaluator::new(problem, config);
    let e = ev.eval(&cex.x);
    let Some(clause) = e.clauses.iter().find(|c| c.kind == cex.clause) else {
        return Err(Error::Soundness { margin: f64::NAN });
    };
    let guards_hold = e.norm_sq >= 0.0 && clause.guards.iter().all(|g| *g >= 0.0);
    if !guards_hold || !(clause.primary > 0.0) {
        let margin = if guards_hold { clause.primary } else { clause.primary.min(0.0) };
        return Err(Error::Soundness { margin });
    }
    Ok(clause.primary)
}

/// Largest clause margin found on a grid of spacing `step` over the domain,
/// restricted to `Σ z² ≥ ε` and the clause guards.
pub fn grid_scan(problem: &Problem, config: &FalsifierConfig, step: f64) -> f64 {
    let ev = Evaluator::new(problem, config);
    let dom = problem.domain;
    let counts: Vec<usize> = dom.widths().iter().map(|w| (w / step).floor() as usize + 1).collect();
    let total: usize = counts.iter().product();
    let mut worst = f64::NEG_INFINITY;
    let mut x = vec![0.0; dom.dim()];
    for flat in 0..total {
        let mut rem = flat;
        for (i, c) in counts.iter().enumerate() {
            x[i] = (dom.lo[i] + (rem % c) as f64 * step).min(dom.hi[i]);
            rem /= c;
        }
        let e = ev.eval(&x);
        if !(e.norm_sq >= 0.0) {
            continue;
        }
        for c in &e.clauses {
            if c.guards.iter().all(|g| *g >= 0.0) {
                worst = worst.max(c.primary);
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::{MlpSpec, Network};
    use crate::numerics::Matrix;

    pub(crate) fn unit_clf(n: usize) -> Clf {
        Clf::Quadratic { gamma: 1.0, n_w: 1, net: Network::zeros(MlpSpec::with_hidden(n, &[2], n, true)) }
    }

    fn scalar_model(rate: f64, period: f64, n: usize) -> BilinearModel {
        BilinearModel::new(Matrix::identity(n).scale(1.0 + rate * period), vec![Matrix::zeros(n, n)], period).unwrap()
    }

    fn problem<'a>(enc: &'a Encoder, clf: &'a Clf, model: &'a BilinearModel, dom: &'a BoxDomain, u: &'a BoxDomain) -> Problem<'a> {
        Problem { encoder: enc, clf, model, domain: dom, input_domain: u }
    }

    #[test]
    fn epsilon_rule() {
        assert_eq!(choose_epsilon(5.0, 2.0, 3.0, 1e-3), 1e-3);
        assert!((choose_epsilon(5.0, 0.01, 3.0, 1e-3) - 1e-5).abs() < 1e-20);
        assert_eq!(choose_epsilon(5.0, 0.0, 3.0, 1e-3), EPSILON_FLOOR);
    }

    #[test]
    fn stable_drift_is_unsat() {
        let enc = Encoder::Identity { dim: 2 };
        let clf = unit_clf(2);
        let model = scalar_model(-0.5, 0.005, 2);
        let dom = BoxDomain::cube(2, 1.0);
        let u = BoxDomain::cube(1, 20.0);
        let p = problem(&enc, &clf, &model, &dom, &u);
        let cfg = FalsifierConfig::for_domain(&dom, 1e-3);
        let r = falsify(&p, &cfg).unwrap();
        assert_eq!(r.outcome, Outcome::Unsat);
        assert!(r.counterexample.is_none());
        assert!(grid_scan(&p, &cfg, cfg.delta / 2.0) <= 1e-6);
    }

    #[test]
    fn unstable_uncontrollable_is_sat() {
        let enc = Encoder::Identity { dim: 2 };
        let clf = unit_clf(2);
        let model = scalar_model(0.5, 0.005, 2);
        let dom = BoxDomain::cube(2, 1.0);
        let u = BoxDomain::cube(1, 20.0);
        let p = problem(&enc, &clf, &model, &dom, &u);
        let cfg = FalsifierConfig::for_domain(&dom, 1e-3);
        let r = falsify(&p, &cfg).unwrap();
        assert_eq!(r.outcome, Outcome::Sat);
        let cex = r.counterexample.unwrap();
        let margin = check_counterexample(&p, &cfg, &cex).unwrap();
        let zn: f64 = cex.z.iter().map(|v| v * v).sum();
        assert!(margin > 0.0);
        assert!((margin - zn).abs() < 1e-5, "{margin} vs {zn}");
    }

    #[test]
    fn empty_effective_domain_is_unsat() {
        let enc = Encoder::Identity { dim: 2 };
        let clf = unit_clf(2);
        let model = scalar_model(0.5, 0.005, 2);
        let dom = BoxDomain::cube(2, 1.0);
        let u = BoxDomain::cube(1, 20.0);
        let p = problem(&enc, &clf, &model, &dom, &u);
        let cfg = FalsifierConfig::for_domain(&dom, 3.0);
        let r = falsify(&p, &cfg).unwrap();
        assert_eq!(r.outcome, Outcome::Unsat);
        assert_eq!(r.boxes_processed, 0);
    }

    #[test]
    fn injected_bad_counterexample_is_rejected() {
        let enc = Encoder::Identity { dim: 2 };
        let clf = unit_clf(2);
        let model = scalar_model(-0.1, 0.005, 2);
        let dom = BoxDomain::cube(2, 1.0);
        let u = BoxDomain::cube(1, 20.0);
        let p = problem(&enc, &clf, &model, &dom, &u);
        let cfg = FalsifierConfig::for_domain(&dom, 1e-3);
        let x = vec![0.5f64.sqrt(), 0.5f64.sqrt()];
        // a(z) = −0.2‖z‖² = −0.2, so the decrease clause fails by about 0.2
        let cex = Counterexample { z: x.clone(), x, clause: ClauseKind::Decrease, margin: 0.1 };
        match check_counterexample(&p, &cfg, &cex) {
            Err(Error::Soundness { margin }) => assert!((margin + 0.2).abs() < 1e-5),
            other => panic!("expected soundness error, got {other:?}"),
        }
    }

    #[test]
    fn controllable_unstable_lift_is_unsat() {
        // ż = 0.5 z + z u: c = 2‖z‖² gives σ > τ away from the ε-ball
        let enc = Encoder::Identity { dim: 1 };
        let clf = unit_clf(1);
        let period = 0.01;
        let model =
            BilinearModel::new(Matrix::identity(1).scale(1.0 + 0.5 * period), vec![Matrix::identity(1).scale(period)], period).unwrap();
        let dom = BoxDomain::cube(1, 2.0);
        let u = BoxDomain::cube(1, 20.0);
        let p = problem(&enc, &clf, &model, &dom, &u);
        let cfg = FalsifierConfig::for_domain(&dom, 1e-2);
        assert_eq!(falsify(&p, &cfg).unwrap().outcome, Outcome::Unsat);
        // With the input fixed to the recorded data there is no control
        // authority argument; the worst input over U still stabilizes.
        let cfg_u = FalsifierConfig { lie_input: LieInput::Dataset, ..cfg.clone() };
        assert_eq!(falsify(&p, &cfg_u).unwrap().outcome, Outcome::Unsat);
        // A tiny ε leaves states where σ ≤ τ and a ≥ −τ
        let tight = FalsifierConfig { epsilon: 1e-8, ..cfg };
        assert_eq!(falsify(&p, &tight).unwrap().outcome, Outcome::Sat);
    }

    #[test]
    fn budget_is_a_distinct_outcome() {
        let enc = Encoder::Identity { dim: 2 };
        let clf = unit_clf(2);
        let model = scalar_model(-0.5, 0.005, 2);
        let dom = BoxDomain::cube(2, 1.0);
        let u = BoxDomain::cube(1, 20.0);
        let p = problem(&enc, &clf, &model, &dom, &u);
        let cfg = FalsifierConfig { budget: 1, ..FalsifierConfig::for_domain(&dom, 1e-3) };
        let r = falsify(&p, &cfg).unwrap();
        assert_eq!(r.outcome, Outcome::Budget);
        assert!(r.suspicious.is_some());
    }

    #[test]
    fn halving_delta_keeps_sat() {
        let enc = Encoder::Identity { dim: 2 };
        let clf = unit_clf(2);
        let model = scalar_model(0.5, 0.005, 2);
        let dom = BoxDomain::cube(2, 1.0);
        let u = BoxDomain::cube(1, 20.0);
        let p = problem(&enc, &clf, &model, &dom, &u);
        let mut cfg = FalsifierConfig::for_domain(&dom, 1e-3);
        for _ in 0..3 {
            assert_eq!(falsify(&p, &cfg).unwrap().outcome, Outcome::Sat);
            cfg.delta /= 2.0;
        }
    }

    #[test]
    fn exponential_clauses() {
        let enc = Encoder::Identity { dim: 2 };
        let clf = unit_clf(2);
        let model = scalar_model(-0.5, 0.005, 2);
        let dom = BoxDomain::cube(2, 1.0);
        let u = BoxDomain::cube(1, 20.0);
        let p = problem(&enc, &clf, &model, &dom, &u);
        // V = ‖z‖², ∇V = −V: holds for γ3 = 0.5 but not γ3 = 2
        let ok = FalsifierConfig { exponential: Some([0.5, 2.0, 0.5]), ..FalsifierConfig::for_domain(&dom, 1e-3) };
        assert_eq!(falsify(&p, &ok).unwrap().outcome, Outcome::Unsat);
        let bad = FalsifierConfig { exponential: Some([0.5, 2.0, 2.0]), ..ok.clone() };
        let r = falsify(&p, &bad).unwrap();
        assert_eq!(r.outcome, Outcome::Sat);
        assert_eq!(r.counterexample.unwrap().clause, ClauseKind::ExpDecreaseDegenerate);
        let squeeze = FalsifierConfig { exponential: Some([1.5, 2.0, 0.5]), ..ok };
        let r = falsify(&p, &squeeze).unwrap();
        assert_eq!(r.counterexample.unwrap().clause, ClauseKind::LowerBound);
    }

    #[test]
    fn positivity_clause_for_mlp_clf() {
        let enc = Encoder::Identity { dim: 2 };
        let mut net = Network::zeros(MlpSpec::with_hidden(2, &[2], 1, true));
        let last = net.params.len() - 1;
        net.params[last] = -1.0;
        let clf = Clf::Mlp { net };
        let model = scalar_model(-0.5, 0.005, 2);
        let dom = BoxDomain::cube(2, 1.0);
        let u = BoxDomain::cube(1, 20.0);
        let p = problem(&enc, &clf, &model, &dom, &u);
        let r = falsify(&p, &FalsifierConfig::for_domain(&dom, 1e-3)).unwrap();
        let cex = r.counterexample.unwrap();
        assert_eq!(cex.clause, ClauseKind::Positivity);
        assert!((cex.margin - 1.0).abs() < 1e-12);
    }
}
