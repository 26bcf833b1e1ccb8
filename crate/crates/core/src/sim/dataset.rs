use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BoxDomain, Plant};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const DEFAULT_TRAJ_LEN: usize = 50;

/// One open-loop run: `inputs[k]` takes `states[k]` to `states[k + 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
}

/// Snapshot data collected from a black-box plant.
///
/// Snapshots are grouped into trajectories; consecutive snapshots are only
/// related by the plant step within a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub plant: String,
    pub period: f64,
    pub seed: u64,
    pub trajectories: Vec<Trajectory>,
}

/// Row-stacked view of a dataset used by training.
#[derive(Debug, Clone)]
pub struct FlatData {
    /// All snapshots, one per row.
    pub states: Matrix,
    /// `(source row, successor row)` for every transition.
    pub transitions: Vec<(usize, usize)>,
    /// Input applied on each transition, one per row.
    pub inputs: Matrix,
}

impl FlatData {
    pub fn sources(&self) -> Vec<usize> {
        self.transitions.iter().map(|t| t.0).collect()
    }

    pub fn successors(&self) -> Vec<usize> {
        self.transitions.iter().map(|t| t.1).collect()
    }
}

impl Dataset {
    pub fn state_dim(&self) -> usize {
        self.trajectories.first().and_then(|t| t.states.first()).map_or(0, Vec::len)
    }

    pub fn input_dim(&self) -> usize {
        self.trajectories.iter().flat_map(|t| t.inputs.first()).next().map_or(0, Vec::len)
    }

    pub fn snapshot_count(&self) -> usize {
        self.trajectories.iter().map(|t| t.states.len()).sum()
    }

    pub fn transition_count(&self) -> usize {
        self.trajectories.iter().map(|t| t.inputs.len()).sum()
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.trajectories.iter().flat_map(|t| t.states.iter().map(Vec::as_slice))
    }

    /// `(x_k, u_k, x_{k+1})` over all trajectories.
    pub fn transitions(&self) -> impl Iterator<Item = (&[f64], &[f64], &[f64])> {
        self.trajectories
            .iter()
            .flat_map(|t| t.inputs.iter().enumerate().map(move |(k, u)| (t.states[k].as_slice(), u.as_slice(), t.states[k + 1].as_slice())))
    }

    pub fn flatten(&self) -> FlatData {
        let n = self.state_dim();
        let m = self.input_dim();
        let mut states = Matrix::zeros(self.snapshot_count(), n);
        let mut inputs = Matrix::zeros(self.transition_count(), m);
        let mut transitions = Vec::with_capacity(self.transition_count());
        let mut row = 0;
        for t in &self.trajectories {
            for (k, s) in t.states.iter().enumerate() {
                states.row_mut(row + k).copy_from_slice(s);
            }
            for (k, u) in t.inputs.iter().enumerate() {
                inputs.row_mut(transitions.len()).copy_from_slice(u);
                transitions.push((row + k, row + k + 1));
            }
            row += t.states.len();
        }
        FlatData { states, transitions, inputs }
    }
}

fn sample_box(rng: &mut ChaCha8Rng, b: &BoxDomain) -> Vec<f64> {
    b.lo.iter().zip(&b.hi).map(|(&l, &h)| if l < h { rng.random_range(l..=h) } else { l }).collect()
}

/// Collects exactly `n_snapshots` in-domain snapshots from short open-loop runs.
///
/// Each run starts uniformly in the state box and applies inputs drawn
/// uniformly from the input box; a run ends after `traj_len` snapshots or as
/// soon as the next state would leave the state box. Run `j` draws from its
/// own ChaCha stream `j` under `seed`, so the result depends only on the
/// arguments.
pub fn generate_dataset(plant: &Plant, n_snapshots: usize, period: f64, seed: u64, traj_len: usize) -> Result<Dataset> {
    if n_snapshots < 2 {
        return Err(Error::Config("a dataset needs at least 2 snapshots".into()));
    }
    if traj_len < 2 {
        return Err(Error::Config("trajectory length must be at least 2".into()));
    }
    if !(period > 0.0) {
        return Err(Error::Config(format!("sampling period must be positive, got {period}")));
    }
    let max_runs = 64 + 100 * n_snapshots.div_ceil(traj_len);
    let mut trajectories = Vec::new();
    let mut collected = 0;
    for run in 0..max_runs {
        let remaining = n_snapshots - collected;
        if remaining == 0 {
            break;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(run as u64);
        let target = traj_len.min(remaining);
        let mut states = vec![sample_box(&mut rng, &plant.state_domain)];
        let mut inputs = Vec::new();
        while states.len() < target {
            let u = sample_box(&mut rng, &plant.input_domain);
            let next = match plant.step(states.last().unwrap(), &u, period) {
                Ok(x) if plant.state_domain.contains(&x) => x,
                _ => break,
            };
            inputs.push(u);
            states.push(next);
        }
        // a lone snapshot is only kept when it is the last one needed
        if states.len() == 1 && remaining > 1 {
            continue;
        }
        collected += states.len();
        trajectories.push(Trajectory { states, inputs });
    }
    if collected < n_snapshots {
        return Err(Error::InsufficientData { wanted: n_snapshots, obtained: collected });
    }
    Ok(Dataset { plant: plant.name().to_string(), period, seed, trajectories })
}
