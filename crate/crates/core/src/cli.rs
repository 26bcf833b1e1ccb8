//! Command-line interface: `generate`, `train`, `simulate` and `verify`.
//!
//! Exit codes: 0 for success or an UNSAT certificate, 2 for SAT or an
//! exhausted budget, 1 for usage and I/O errors.

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use log::info;

use crate::controller::RolloutOptions;
use crate::error::{Error, Result};
use crate::falsifier::Outcome;
use crate::formats::{
    matrix_csv, phase_csv, read_dataset_csv, rollout_csv, round_log_row, summary_row, training_log_row, write_dataset_csv, Checkpoint,
    DatasetMeta, ROUND_LOG_HEADER, SUMMARY_HEADER, TRAINING_LOG_HEADER,
};
use crate::losses::LossReport;
use crate::sim::{generate_dataset, make_plant, Dataset, PlantKind, DEFAULT_TRAJ_LEN};
use crate::trainer::{cegis_loop, run_control_phase, sample_initial_states, verify, Observer, RoundRecord, TrainConfig};

pub const OUT_ENV: &str = "KOOPMAN_CLF_OUT";

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_CERTIFIED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "koopman-clf", version, about = "Learn Koopman bilinear models with certified control Lyapunov functions")]
pub struct Cli {
    /// Output directory for all artifacts.
    #[arg(long, global = true, env = OUT_ENV, default_value = "out")]
    pub out: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Collect open-loop snapshots into <out>/dataset.csv and dataset.meta.
    Generate {
        /// pendulum | vanderpol | cartpole | hcw
        #[arg(long)]
        plant: PlantKind,
        /// Number of snapshots.
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Sampling period in seconds [default: the plant's].
        #[arg(long)]
        period: Option<f64>,
        /// Maximum snapshots per trajectory.
        #[arg(long, default_value_t = DEFAULT_TRAJ_LEN)]
        traj_len: usize,
    },
    /// Run counterexample-guided training and write logs, checkpoints and
    /// the certificate.
    Train {
        /// Flat `key = value` configuration file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Plant, overriding the configuration file.
        #[arg(long)]
        plant: Option<PlantKind>,
        /// Epochs per round.
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        max_rounds: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Generate the dataset from the configuration instead of reading
        /// <out>/dataset.csv.
        #[arg(long)]
        generate: bool,
        /// Extra `key=value` overrides, applied last.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Closed-loop rollouts from random initial states.
    Simulate {
        #[arg(long, default_value = "checkpoint.json")]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 10)]
        n_initial: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Simulated seconds per rollout.
        #[arg(long, default_value_t = 10.0)]
        horizon: f64,
        /// Simulate even without an UNSAT certificate.
        #[arg(long)]
        force: bool,
        /// Apply zero input instead of the controller.
        #[arg(long)]
        uncontrolled: bool,
    },
    /// Re-run the falsifier on a checkpoint and write the certificate.
    Verify {
        #[arg(long, default_value = "checkpoint.json")]
        checkpoint: PathBuf,
    },
}

/// Parses arguments and runs the command, returning the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

fn resolve(out: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() || p.exists() {
        p.to_path_buf()
    } else {
        out.join(p)
    }
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, contents)?;
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<i32> {
    let out = &cli.out;
    match &cli.command {
        Command::Generate { plant, n, seed, period, traj_len } => {
            let p = make_plant(*plant);
            let ds = generate_dataset(&p, *n, period.unwrap_or(p.default_period), *seed, *traj_len)?;
            save_dataset(out, &ds)?;
            println!("wrote {} snapshots to {}", ds.snapshot_count(), out.join("dataset.csv").display());
            Ok(EXIT_OK)
        }
        Command::Train { config, plant, epochs, max_rounds, seed, generate, overrides } => {
            let text = match config {
                Some(path) => fs::read_to_string(path)?,
                None => String::new(),
            };
            let mut cfg = TrainConfig::from_text(&text, *plant)?;
            if let Some(e) = epochs {
                cfg.epochs_per_round = *e;
            }
            if let Some(r) = max_rounds {
                cfg.max_rounds = *r;
            }
            if let Some(s) = seed {
                cfg.seed = *s;
            }
            for o in overrides {
                let (k, v) = o.split_once('=').ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
                cfg.set(k.trim(), v.trim())?;
            }
            cfg.validate()?;
            let ds = if *generate {
                let ds = cfg.generate_dataset()?;
                save_dataset(out, &ds)?;
                ds
            } else {
                load_dataset(out)?
            };
            train(out, &cfg, &ds)
        }
        Command::Simulate { checkpoint, n_initial, seed, horizon, force, uncontrolled } => {
            let path = resolve(out, checkpoint);
            let ck = Checkpoint::from_json(&fs::read_to_string(&path)?)?;
            let certified = ck.certificate.as_ref().is_some_and(|c| c.outcome == Outcome::Unsat);
            if !certified && !*force && !*uncontrolled {
                return Err(Error::MissingCertificate);
            }
            let plant = make_plant(ck.plant.parse()?);
            let mut opts = RolloutOptions::for_plant(&plant, ck.model.period);
            opts.horizon_steps = (horizon / ck.model.period).round() as usize;
            opts.uncontrolled = *uncontrolled;
            let x0s = sample_initial_states(&plant, *n_initial, *seed);
            let summary = run_control_phase(&ck.networks, &ck.model, &plant, &x0s, &opts)?;
            let dir = out.join("simulate");
            fs::create_dir_all(&dir)?;
            let mut table = format!("{SUMMARY_HEADER}\n");
            for (i, r) in summary.rollouts.iter().enumerate() {
                write(&dir.join(format!("rollout_{i:03}.csv")), &rollout_csv(r))?;
                table.push_str(&summary_row(i, r, opts.stop_tol));
                table.push('\n');
            }
            write(&dir.join("summary.csv"), &table)?;
            write(&dir.join("phase.csv"), &phase_csv(&summary.rollouts))?;
            println!("{} of {} rollouts converged; outputs in {}", summary.converged, summary.rollouts.len(), dir.display());
            Ok(EXIT_OK)
        }
        Command::Verify { checkpoint } => {
            let path = resolve(out, checkpoint);
            let ck = Checkpoint::from_json(&fs::read_to_string(&path)?)?;
            let cfg = TrainConfig::from_text(&ck.config, None)?;
            let plant = cfg.plant();
            let (_, cert) = verify(&cfg, &plant, &ck.networks, &ck.model, ck.epsilon)?;
            let target = path.with_file_name("certificate_verify.txt");
            write(&target, &cert.to_text())?;
            println!("{} ({} boxes); certificate in {}", cert.outcome.name(), cert.boxes_processed, target.display());
            Ok(if cert.outcome == Outcome::Unsat { EXIT_OK } else { EXIT_NOT_CERTIFIED })
        }
    }
}

fn save_dataset(out: &Path, ds: &Dataset) -> Result<()> {
    fs::create_dir_all(out)?;
    let mut buf = Vec::new();
    write_dataset_csv(ds, &mut buf)?;
    fs::write(out.join("dataset.csv"), buf)?;
    write(&out.join("dataset.meta"), &DatasetMeta::of(ds).to_text())
}

fn load_dataset(out: &Path) -> Result<Dataset> {
    let meta = DatasetMeta::parse(&fs::read_to_string(out.join("dataset.meta"))?)?;
    let ds = read_dataset_csv(fs::File::open(out.join("dataset.csv"))?, &meta)?;
    if ds.snapshot_count() != meta.n_snapshots {
        return Err(Error::Config(format!("dataset has {} snapshots, sidecar says {}", ds.snapshot_count(), meta.n_snapshots)));
    }
    Ok(ds)
}

/// Streams the training and round logs and writes a checkpoint per round.
struct FileObserver {
    dir: PathBuf,
    training_log: fs::File,
    round_log: fs::File,
}

impl Observer for FileObserver {
    fn epoch(&mut self, epoch: usize, report: &LossReport) -> Result<()> {
        writeln!(self.training_log, "{}", training_log_row(epoch, report))?;
        Ok(())
    }

    fn round(&mut self, record: &RoundRecord, checkpoint: &Checkpoint) -> Result<()> {
        writeln!(self.round_log, "{}", round_log_row(record.round, &record.certificate, record.wall_time))?;
        write(&self.dir.join(format!("checkpoint_round_{:02}.json", record.round)), &checkpoint.to_json()?)
    }
}

fn train(out: &Path, cfg: &TrainConfig, ds: &Dataset) -> Result<i32> {
    fs::create_dir_all(out)?;
    write(&out.join("config.txt"), &cfg.to_text())?;
    let mut obs = FileObserver {
        dir: out.join("rounds"),
        training_log: fs::File::create(out.join("training_log.csv"))?,
        round_log: fs::File::create(out.join("round_log.csv"))?,
    };
    writeln!(obs.training_log, "{TRAINING_LOG_HEADER}")?;
    writeln!(obs.round_log, "{ROUND_LOG_HEADER}")?;
    let result = cegis_loop(cfg, ds, &mut obs)?;
    write(&out.join("checkpoint.json"), &result.checkpoint.to_json()?)?;
    write(&out.join("certificate.txt"), &result.certificate.to_text())?;
    write(&out.join("model_kd.csv"), &matrix_csv(&result.state.model.kd))?;
    for (i, b) in result.state.model.b.iter().enumerate() {
        write(&out.join(format!("model_b{}.csv", i + 1)), &matrix_csv(b))?;
    }
    info!("training finished: {}", result.outcome.name());
    println!("{} after {} rounds; artifacts in {}", result.outcome.name(), result.rounds.len(), out.display());
    Ok(if result.outcome == Outcome::Unsat { EXIT_OK } else { EXIT_NOT_CERTIFIED })
}
