//! Counterexample-guided training: epochs of joint learning, a falsifier
//! call per round, and the hand-off to closed-loop control.

use std::time::Instant;

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controller::{Controller, Rollout, RolloutOptions, RolloutStatus};
use crate::edmd::BilinearModel;
use crate::error::{Error, Result};
use crate::falsifier::{choose_epsilon, falsify, Certificate, FalsifierConfig, FalsifyResult, Outcome, Problem};
use crate::formats::{meta_hash, parse_key_values, Checkpoint, DatasetMeta};
use crate::losses::{evaluate, LieInput, LossBatch, LossReport, LossSettings, LossWeights, ModelSource, NetworkBundle};
use crate::nets::{Adam, AdamConfig, Clf, Encoder, MlpSpec, Network};
use crate::numerics::{LstsqOptions, Matrix};
use crate::sim::{generate_dataset, make_plant, Dataset, FlatData, Plant, PlantKind, DEFAULT_TRAJ_LEN};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ClfChoice {
    Quadratic { gamma: f64, n_w: usize },
    Mlp { linear_head: bool },
}

/// `ε` either fixed or derived from the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EpsilonChoice {
    /// `factor · min{1, lifted extent, smallest Σx² and Σz² in the data}`.
    Auto {
        factor: f64,
    },
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub plant: PlantKind,
    pub lifted_dim: usize,
    /// Use `z = x` instead of a learned encoder.
    pub identity_encoder: bool,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub clf_hidden: Vec<usize>,
    pub clf: ClfChoice,
    pub weights: LossWeights,
    pub lr: f64,
    pub epochs_per_round: usize,
    pub loss_tol: f64,
    pub max_rounds: usize,
    pub seed: u64,
    pub data_seed: u64,
    pub period: f64,
    pub n_snapshots: usize,
    pub traj_len: usize,
    pub epsilon: EpsilonChoice,
    /// `None` uses `10⁻³ ·` the widest side of the state box.
    pub delta: Option<f64>,
    pub budget: usize,
    pub tau_sigma: f64,
    pub tau_a: f64,
    pub lie_input: LieInput,
}

impl TrainConfig {
    pub fn for_plant(plant: PlantKind) -> Self {
        let small = matches!(plant, PlantKind::Pendulum | PlantKind::VanDerPol);
        let p = make_plant(plant);
        TrainConfig {
            plant,
            lifted_dim: if small { 6 } else { 12 },
            identity_encoder: false,
            encoder_hidden: if small { vec![6] } else { vec![32, 32] },
            decoder_hidden: vec![16, 16],
            clf_hidden: if small { vec![6] } else { vec![32, 32] },
            clf: ClfChoice::Quadratic { gamma: 1.0, n_w: 2 },
            weights: LossWeights::for_plant(plant),
            lr: 1e-3,
            epochs_per_round: 900,
            loss_tol: 1e-5,
            max_rounds: 20,
            seed: 0,
            data_seed: 0,
            period: p.default_period,
            n_snapshots: 2000,
            traj_len: DEFAULT_TRAJ_LEN,
            epsilon: EpsilonChoice::Auto { factor: 1e-3 },
            delta: None,
            budget: 1_000_000,
            tau_sigma: crate::falsifier::DEFAULT_TAU,
            tau_a: crate::falsifier::DEFAULT_TAU,
            lie_input: LieInput::Sontag,
        }
    }

    /// Defaults for the plant named in `text` (or `plant`), overridden by
    /// every other key.
    pub fn from_text(text: &str, plant: Option<PlantKind>) -> Result<Self> {
        let entries = parse_key_values(text)?;
        let from_file = entries.iter().find(|e| e.key == "plant");
        let kind = match (from_file, plant) {
            (_, Some(k)) => k,
            (Some(e), None) => e.value.parse::<PlantKind>().map_err(|err| Error::parse(e.line, err.to_string()))?,
            (None, None) => return Err(Error::Config("no plant given".into())),
        };
        let mut cfg = TrainConfig::for_plant(kind);
        for e in &entries {
            if e.key == "plant" {
                continue;
            }
            cfg.set(&e.key, &e.value).map_err(|err| Error::parse(e.line, err.to_string()))?;
        }
        Ok(cfg)
    }

    /// Sets one configuration key from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("bad value `{v}` for `{key}`")))
        }
        fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
            if v.is_empty() {
                return Ok(Vec::new());
            }
            v.split(',').map(|t| num(key, t.trim())).collect()
        }
        fn flag(key: &str, v: &str) -> Result<bool> {
            match v {
                "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                _ => Err(Error::Config(format!("bad boolean `{v}` for `{key}`"))),
            }
        }
        match key {
            "plant" => self.plant = value.parse()?,
            "lifted_dim" => self.lifted_dim = num(key, value)?,
            "encoder" => {
                self.identity_encoder = match value {
                    "identity" => true,
                    "mlp" => false,
                    _ => return Err(Error::Config(format!("encoder must be mlp or identity, got `{value}`"))),
                }
            }
            "encoder_hidden" => self.encoder_hidden = list(key, value)?,
            "decoder_hidden" => self.decoder_hidden = list(key, value)?,
            "clf_hidden" => self.clf_hidden = list(key, value)?,
            "clf" => {
                self.clf = match value {
                    "quadratic" => ClfChoice::Quadratic { gamma: 1.0, n_w: 2 },
                    "mlp" => ClfChoice::Mlp { linear_head: true },
                    _ => return Err(Error::Config(format!("clf must be quadratic or mlp, got `{value}`"))),
                }
            }
            "clf_gamma" | "clf_nw" => {
                let ClfChoice::Quadratic { gamma, n_w } = &mut self.clf else {
                    return Err(Error::Config(format!("`{key}` only applies to clf = quadratic")));
                };
                if key == "clf_gamma" {
                    *gamma = num(key, value)?;
                } else {
                    *n_w = num(key, value)?;
                }
            }
            "clf_linear_head" => {
                let ClfChoice::Mlp { linear_head } = &mut self.clf else {
                    return Err(Error::Config("`clf_linear_head` only applies to clf = mlp".into()));
                };
                *linear_head = flag(key, value)?;
            }
            "alpha" => {
                let a: Vec<f64> = list(key, value)?;
                self.weights.alpha = a.try_into().map_err(|_| Error::Config("alpha needs four comma-separated values".into()))?;
            }
            "gamma4" => self.weights.gamma4 = num(key, value)?,
            "roa" => {
                self.weights.roa_hinged = match value {
                    "hinged" => true,
                    "literal" => false,
                    _ => return Err(Error::Config(format!("roa must be hinged or literal, got `{value}`"))),
                }
            }
            "exponential" => {
                self.weights.exponential = if value == "none" {
                    None
                } else {
                    let g: Vec<f64> = list(key, value)?;
                    Some(g.try_into().map_err(|_| Error::Config("exponential needs `none` or three values".into()))?)
                }
            }
            "lr" => self.lr = num(key, value)?,
            "epochs_per_round" | "epochs" => self.epochs_per_round = num(key, value)?,
            "loss_tol" => self.loss_tol = num(key, value)?,
            "max_rounds" => self.max_rounds = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "data_seed" => self.data_seed = num(key, value)?,
            "period" => self.period = num(key, value)?,
            "n_snapshots" => self.n_snapshots = num(key, value)?,
            "traj_len" => self.traj_len = num(key, value)?,
            "epsilon" => {
                self.epsilon = match value {
                    "auto" => EpsilonChoice::Auto { factor: 1e-3 },
                    v => EpsilonChoice::Fixed(num(key, v)?),
                }
            }
            "epsilon_factor" => self.epsilon = EpsilonChoice::Auto { factor: num(key, value)? },
            "delta" => self.delta = if value == "auto" { None } else { Some(num(key, value)?) },
            "budget" => self.budget = num(key, value)?,
            "tau_sigma" => self.tau_sigma = num(key, value)?,
            "tau_a" => self.tau_a = num(key, value)?,
            "controller_u" => self.lie_input = value.parse()?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Round-trips through [`TrainConfig::from_text`].
    pub fn to_text(&self) -> String {
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let w = &self.weights;
        let mut lines = vec![
            format!("plant = {}", self.plant),
            format!("lifted_dim = {}", self.lifted_dim),
            format!("encoder = {}", if self.identity_encoder { "identity" } else { "mlp" }),
            format!("encoder_hidden = {}", join(&self.encoder_hidden)),
            format!("decoder_hidden = {}", join(&self.decoder_hidden)),
            format!("clf_hidden = {}", join(&self.clf_hidden)),
        ];
        match self.clf {
            ClfChoice::Quadratic { gamma, n_w } => {
                lines.push("clf = quadratic".into());
                lines.push(format!("clf_gamma = {gamma}"));
                lines.push(format!("clf_nw = {n_w}"));
            }
            ClfChoice::Mlp { linear_head } => {
                lines.push("clf = mlp".into());
                lines.push(format!("clf_linear_head = {linear_head}"));
            }
        }
        lines.push(format!("alpha = {},{},{},{}", w.alpha[0], w.alpha[1], w.alpha[2], w.alpha[3]));
        lines.push(format!("gamma4 = {}", w.gamma4));
        lines.push(format!("roa = {}", if w.roa_hinged { "hinged" } else { "literal" }));
        lines.push(match w.exponential {
            None => "exponential = none".into(),
            Some([a, b, c]) => format!("exponential = {a},{b},{c}"),
        });
        lines.push(format!("lr = {}", self.lr));
        lines.push(format!("epochs_per_round = {}", self.epochs_per_round));
        lines.push(format!("loss_tol = {}", self.loss_tol));
        lines.push(format!("max_rounds = {}", self.max_rounds));
        lines.push(format!("seed = {}", self.seed));
        lines.push(format!("data_seed = {}", self.data_seed));
        lines.push(format!("period = {}", self.period));
        lines.push(format!("n_snapshots = {}", self.n_snapshots));
        lines.push(format!("traj_len = {}", self.traj_len));
        lines.push(match self.epsilon {
            EpsilonChoice::Auto { factor } => format!("epsilon_factor = {factor}"),
            EpsilonChoice::Fixed(e) => format!("epsilon = {e}"),
        });
        lines.push(match self.delta {
            None => "delta = auto".into(),
            Some(d) => format!("delta = {d}"),
        });
        lines.push(format!("budget = {}", self.budget));
        lines.push(format!("tau_sigma = {}", self.tau_sigma));
        lines.push(format!("tau_a = {}", self.tau_a));
        lines.push(format!(
            "controller_u = {}",
            match self.lie_input {
                LieInput::Sontag => "sontag",
                LieInput::Dataset => "dataset",
            }
        ));
        let mut s = lines.join("\n");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> Result<()> {
        let plant = make_plant(self.plant);
        if self.identity_encoder && self.lifted_dim != plant.state_dim() {
            return Err(Error::Config(format!("identity encoder needs lifted_dim = {}", plant.state_dim())));
        }
        if self.lifted_dim == 0 {
            return Err(Error::Config("lifted_dim must be positive".into()));
        }
        if let ClfChoice::Quadratic { gamma, n_w } = self.clf {
            if !(gamma > 0.0) || n_w == 0 {
                return Err(Error::Config("quadratic CLF needs clf_gamma > 0 and clf_nw ≥ 1".into()));
            }
        }
        if !(self.lr > 0.0) || !(self.period > 0.0) || self.max_rounds == 0 {
            return Err(Error::Config("lr, period and max_rounds must be positive".into()));
        }
        if self.n_snapshots < 2 || self.traj_len < 2 {
            return Err(Error::Config("need at least 2 snapshots per dataset and per trajectory".into()));
        }
        match self.epsilon {
            EpsilonChoice::Auto { factor } if !(factor > 0.0) => return Err(Error::Config("epsilon_factor must be positive".into())),
            EpsilonChoice::Fixed(e) if !(e > 0.0) => return Err(Error::Config("epsilon must be positive".into())),
            _ => {}
        }
        if matches!(self.delta, Some(d) if !(d > 0.0)) || self.budget == 0 {
            return Err(Error::Config("delta and budget must be positive".into()));
        }
        self.weights.validate()
    }

    pub fn plant(&self) -> Plant {
        make_plant(self.plant)
    }

    /// Fresh networks drawn from the `seed` stream: encoder, decoder, CLF.
    pub fn build_networks(&self) -> Result<NetworkBundle> {
        let plant = self.plant();
        let (n, big_n) = (plant.state_dim(), self.lifted_dim);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let encoder = if self.identity_encoder {
            Encoder::Identity { dim: n }
        } else {
            Encoder::Mlp { net: Network::random(MlpSpec::with_hidden(n, &self.encoder_hidden, big_n, false), &mut rng) }
        };
        let decoder = Network::random(MlpSpec::with_hidden(big_n, &self.decoder_hidden, n, true), &mut rng);
        let clf = match self.clf {
            ClfChoice::Quadratic { gamma, n_w } => Clf::quadratic(gamma, n_w, big_n, &self.clf_hidden, &mut rng)?,
            ClfChoice::Mlp { linear_head } => Clf::mlp(big_n, &self.clf_hidden, linear_head, &mut rng),
        };
        Ok(NetworkBundle { encoder, decoder, clf })
    }

    pub fn generate_dataset(&self) -> Result<Dataset> {
        generate_dataset(&self.plant(), self.n_snapshots, self.period, self.data_seed, self.traj_len)
    }

    fn falsifier_config(&self, plant: &Plant, epsilon: f64) -> FalsifierConfig {
        let mut f = FalsifierConfig::for_domain(&plant.state_domain, epsilon);
        if let Some(d) = self.delta {
            f.delta = d;
        }
        f.budget = self.budget;
        f.tau_sigma = self.tau_sigma;
        f.tau_a = self.tau_a;
        f.lie_input = self.lie_input;
        f.exponential = self.weights.exponential;
        f
    }
}

/// Parameters, optimizer state and everything accumulated so far.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub nets: NetworkBundle,
    pub adam: Adam,
    pub model: BilinearModel,
    /// Counterexample states, in the order they were found.
    pub counterexamples: Vec<Vec<f64>>,
    pub epoch: usize,
    pub round: usize,
    pub history: Vec<LossReport>,
}

impl TrainState {
    pub fn new(cfg: &TrainConfig, data: &FlatData) -> Result<Self> {
        let nets = cfg.build_networks()?;
        let adam = Adam::new(nets.param_count(), AdamConfig { lr: cfg.lr, ..AdamConfig::default() });
        let model = refit(&nets, data, cfg.period)?;
        Ok(TrainState { nets, adam, model, counterexamples: Vec::new(), epoch: 0, round: 0, history: Vec::new() })
    }

    fn extra(&self, n: usize) -> Result<Matrix> {
        Matrix::from_vec(self.counterexamples.len(), n, self.counterexamples.concat())
    }
}

/// Bilinear model fitted on the current lift of the data.
pub fn refit(nets: &NetworkBundle, data: &FlatData, period: f64) -> Result<BilinearModel> {
    let lift = |rows: &[usize]| {
        let z: Vec<f64> = rows.iter().flat_map(|&r| nets.encoder.lift(data.states.row(r))).collect();
        Matrix::from_vec(rows.len(), nets.encoder.lifted_dim(), z)
    };
    crate::edmd::fit_bilinear(&lift(&data.sources())?, &lift(&data.successors())?, &data.inputs, period, LstsqOptions::default())
}

/// Receives training progress; the CLI writes it to disk.
pub trait Observer {
    fn epoch(&mut self, _epoch: usize, _report: &LossReport) -> Result<()> {
        Ok(())
    }

    fn round(&mut self, _record: &RoundRecord, _checkpoint: &Checkpoint) -> Result<()> {
        Ok(())
    }
}

/// Discards all progress reports.
pub struct Quiet;

impl Observer for Quiet {}

/// Runs up to `epochs` epochs: refit the model, evaluate all losses with the
/// counterexamples, take one Adam step. Stops early once the total loss is
/// below `loss_tol`. The model is refitted on the final parameters.
pub fn learning_round(
    cfg: &TrainConfig,
    plant: &Plant,
    data: &FlatData,
    state: &mut TrainState,
    epochs: usize,
    observer: &mut dyn Observer,
) -> Result<()> {
    let settings = LossSettings { weights: cfg.weights, lie_input: cfg.lie_input };
    let extra = state.extra(plant.state_dim())?;
    let batch = LossBatch { data, extra: &extra, plant, period: cfg.period };
    for _ in 0..epochs {
        let out = evaluate(&batch, &state.nets, ModelSource::Refit(LstsqOptions::default()), &settings)?;
        let epoch = state.epoch + 1;
        if !out.report.total.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        observer.epoch(epoch, &out.report)?;
        state.history.push(out.report);
        state.epoch = epoch;
        if out.report.total < cfg.loss_tol {
            state.model = out.model;
            return Ok(());
        }
        let mut params = state.nets.flat_params();
        state.adam.step(&mut params, &out.grads.flatten());
        state.nets.set_flat_params(&params)?;
    }
    state.model = refit(&state.nets, data, cfg.period)?;
    Ok(())
}

/// The `ε` used by the falsifier for the current lift.
pub fn epsilon_for(cfg: &TrainConfig, data: &FlatData, encoder: &Encoder) -> f64 {
    match cfg.epsilon {
        EpsilonChoice::Fixed(e) => e,
        EpsilonChoice::Auto { factor } => {
            let mut min_x = f64::INFINITY;
            let mut min_z = f64::INFINITY;
            let big_n = encoder.lifted_dim();
            let (mut lo, mut hi) = (vec![f64::INFINITY; big_n], vec![f64::NEG_INFINITY; big_n]);
            for r in 0..data.states.rows() {
                let x = data.states.row(r);
                let z = encoder.lift(x);
                min_x = min_x.min(x.iter().map(|v| v * v).sum());
                min_z = min_z.min(z.iter().map(|v| v * v).sum());
                for (i, zi) in z.iter().enumerate() {
                    lo[i] = lo[i].min(*zi);
                    hi[i] = hi[i].max(*zi);
                }
            }
            let extent = lo.iter().zip(&hi).map(|(l, h)| (h - l) * (h - l)).sum::<f64>().sqrt();
            choose_epsilon(extent, min_x, min_z, factor)
        }
    }
}

/// Runs the falsifier on frozen networks and model.
pub fn verify(
    cfg: &TrainConfig,
    plant: &Plant,
    nets: &NetworkBundle,
    model: &BilinearModel,
    epsilon: f64,
) -> Result<(FalsifyResult, Certificate)> {
    let fcfg = cfg.falsifier_config(plant, epsilon);
    let problem = Problem { encoder: &nets.encoder, clf: &nets.clf, model, domain: &plant.state_domain, input_domain: &plant.input_domain };
    let result = falsify(&problem, &fcfg)?;
    let cert = Certificate::from_result(&result, fcfg.epsilon, fcfg.delta);
    Ok((result, cert))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    pub certificate: Certificate,
    pub epochs: usize,
    pub wall_time: f64,
    pub last_loss: Option<LossReport>,
}

#[derive(Debug, Clone)]
pub struct CegisOutcome {
    pub outcome: Outcome,
    pub state: TrainState,
    pub certificate: Certificate,
    pub epsilon: f64,
    pub rounds: Vec<RoundRecord>,
    pub checkpoint: Checkpoint,
}

fn make_checkpoint(cfg: &TrainConfig, meta: &DatasetMeta, state: &TrainState, epsilon: f64, cert: Option<&Certificate>) -> Checkpoint {
    Checkpoint {
        plant: cfg.plant.to_string(),
        lifted_dim: state.nets.encoder.lifted_dim(),
        round: state.round,
        epoch: state.epoch,
        config: cfg.to_text(),
        networks: state.nets.clone(),
        model: state.model.clone(),
        epsilon,
        counterexamples: state.counterexamples.clone(),
        certificate: cert.cloned(),
        dataset: meta.clone(),
        dataset_hash: meta_hash(meta),
    }
}

/// Adds a counterexample, nudging it by up to `δ` per coordinate when it
/// repeats an earlier one.
fn add_counterexample(state: &mut TrainState, plant: &Plant, x: &[f64], delta: f64, rng: &mut ChaCha8Rng) {
    let close = |c: &Vec<f64>| c.iter().zip(x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) < delta;
    let mut x = x.to_vec();
    if state.counterexamples.iter().any(close) {
        warn!("counterexample {x:?} repeats an earlier one; jittering by up to {delta}");
        for v in &mut x {
            *v += rng.random_range(-delta..=delta);
        }
        plant.state_domain.clamp(&mut x);
    }
    state.counterexamples.push(x);
}

/// Alternates learning rounds with falsification until the conditions are
/// certified or `max_rounds` rounds have run.
pub fn cegis_loop(cfg: &TrainConfig, dataset: &Dataset, observer: &mut dyn Observer) -> Result<CegisOutcome> {
    cfg.validate()?;
    let plant = cfg.plant();
    if dataset.plant != plant.name() {
        return Err(Error::Config(format!("dataset is for `{}`, config for `{}`", dataset.plant, plant.name())));
    }
    if (dataset.period - cfg.period).abs() > 1e-15 * cfg.period {
        return Err(Error::Config(format!("dataset period {} differs from configured period {}", dataset.period, cfg.period)));
    }
    let meta = DatasetMeta::of(dataset);
    let data = dataset.flatten();
    let mut state = TrainState::new(cfg, &data)?;
    let mut jitter = ChaCha8Rng::seed_from_u64(cfg.seed);
    jitter.set_stream(1);
    let mut rounds = Vec::new();
    let mut last = None;
    for round in 1..=cfg.max_rounds {
        let start = Instant::now();
        let before = state.epoch;
        state.round = round;
        learning_round(cfg, &plant, &data, &mut state, cfg.epochs_per_round, observer)?;
        let epsilon = epsilon_for(cfg, &data, &state.nets.encoder);
        let (result, cert) = verify(cfg, &plant, &state.nets, &state.model, epsilon)?;
        let record = RoundRecord {
            round,
            certificate: cert.clone(),
            epochs: state.epoch - before,
            wall_time: start.elapsed().as_secs_f64(),
            last_loss: state.history.last().copied(),
        };
        info!(
            "round {round}: {} after {} epochs (total loss {:.3e}, {} boxes)",
            cert.outcome.name(),
            record.epochs,
            record.last_loss.map_or(f64::NAN, |r| r.total),
            cert.boxes_processed
        );
        let checkpoint = make_checkpoint(cfg, &meta, &state, epsilon, Some(&cert));
        observer.round(&record, &checkpoint)?;
        rounds.push(record);
        match result.outcome {
            Outcome::Unsat => {
                let reloaded = Checkpoint::from_json(&checkpoint.to_json()?)?;
                let (_, again) = verify(cfg, &plant, &reloaded.networks, &reloaded.model, reloaded.epsilon)?;
                if again != cert {
                    return Err(Error::CertificateMismatch);
                }
                return Ok(CegisOutcome { outcome: Outcome::Unsat, state, certificate: cert, epsilon, rounds, checkpoint });
            }
            Outcome::Sat => {
                let cex = result.counterexample.as_ref().expect("SAT carries a counterexample");
                add_counterexample(&mut state, &plant, &cex.x, cert.delta, &mut jitter);
            }
            Outcome::Budget => warn!("falsifier budget exhausted in round {round}; training on without a new counterexample"),
        }
        last = Some((cert, epsilon, checkpoint));
    }
    let (certificate, epsilon, checkpoint) = last.expect("at least one round");
    Ok(CegisOutcome { outcome: Outcome::Budget, state, certificate, epsilon, rounds, checkpoint })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlSummary {
    pub rollouts: Vec<Rollout>,
    pub converged: usize,
    pub final_norms: Vec<f64>,
}

/// Closed-loop rollouts on the true plant from every initial state.
pub fn run_control_phase(
    nets: &NetworkBundle,
    model: &BilinearModel,
    plant: &Plant,
    x0s: &[Vec<f64>],
    opts: &RolloutOptions,
) -> Result<ControlSummary> {
    let ctrl = Controller::new(&nets.encoder, &nets.clf, model);
    let rollouts = x0s.iter().map(|x0| ctrl.rollout(plant, x0, opts)).collect::<Result<Vec<_>>>()?;
    let converged = rollouts.iter().filter(|r| r.status == RolloutStatus::Converged).count();
    let final_norms = rollouts.iter().map(Rollout::final_norm).collect();
    Ok(ControlSummary { rollouts, converged, final_norms })
}

/// `count` initial states uniform in the state box from stream 2 of `seed`.
pub fn sample_initial_states(plant: &Plant, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let d = &plant.state_domain;
    (0..count).map(|_| d.lo.iter().zip(&d.hi).map(|(l, h)| rng.random_range(*l..=*h)).collect()).collect()
}
