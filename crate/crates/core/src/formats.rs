//! On-disk formats: dataset CSV and sidecar, flat `key = value` files,
//! JSON checkpoints, and the CSV logs written during training and control.

use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::controller::Rollout;
use crate::edmd::BilinearModel;
use crate::error::{Error, Result};
use crate::falsifier::Certificate;
use crate::losses::{LossReport, NetworkBundle};
use crate::numerics::Matrix;
use crate::sim::{Dataset, Trajectory};

/// One `key = value` entry with its 1-based line number.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

/// Parses flat `key = value` text. Blank lines and `#` comments are skipped;
/// duplicate keys are rejected.
pub fn parse_key_values(text: &str) -> Result<Vec<Entry>> {
    let mut out: Vec<Entry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (key, value) = body.split_once('=').ok_or_else(|| Error::parse(line, format!("expected `key = value`, found `{body}`")))?;
        let key = key.trim();
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(Error::parse(line, format!("invalid key `{key}`")));
        }
        if let Some(prev) = out.iter().find(|e| e.key == key) {
            return Err(Error::parse(line, format!("duplicate key `{key}` (first set on line {})", prev.line)));
        }
        out.push(Entry { line, key: key.to_string(), value: value.trim().to_string() });
    }
    Ok(out)
}

/// Sidecar record describing how a dataset was generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub plant: String,
    pub period: f64,
    pub seed: u64,
    pub n_snapshots: usize,
}

impl DatasetMeta {
    pub fn of(ds: &Dataset) -> Self {
        DatasetMeta { plant: ds.plant.clone(), period: ds.period, seed: ds.seed, n_snapshots: ds.snapshot_count() }
    }

    pub fn to_text(&self) -> String {
        format!("plant = {}\nperiod = {}\nseed = {}\nn_snapshots = {}\n", self.plant, self.period, self.seed, self.n_snapshots)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let (mut plant, mut period, mut seed, mut n) = (None, None, None, None);
        for e in parse_key_values(text)? {
            let bad = |what: &str| Error::parse(e.line, format!("bad {what} `{}`", e.value));
            match e.key.as_str() {
                "plant" => plant = Some(e.value.clone()),
                "period" => period = Some(e.value.parse::<f64>().map_err(|_| bad("period"))?),
                "seed" => seed = Some(e.value.parse::<u64>().map_err(|_| bad("seed"))?),
                "n_snapshots" => n = Some(e.value.parse::<usize>().map_err(|_| bad("snapshot count"))?),
                k => return Err(Error::parse(e.line, format!("unknown key `{k}`"))),
            }
        }
        let missing = |k: &str| Error::parse(0, format!("missing key `{k}`"));
        Ok(DatasetMeta {
            plant: plant.ok_or_else(|| missing("plant"))?,
            period: period.ok_or_else(|| missing("period"))?,
            seed: seed.ok_or_else(|| missing("seed"))?,
            n_snapshots: n.ok_or_else(|| missing("n_snapshots"))?,
        })
    }
}

/// `k,x1..xn,u1..um`, one row per snapshot; `k` restarts at 0 for every
/// trajectory and the last row of each trajectory has empty input fields.
pub fn write_dataset_csv<W: Write>(ds: &Dataset, out: W) -> Result<()> {
    let (n, m) = (ds.state_dim(), ds.input_dim());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["k".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend((1..=m).map(|i| format!("u{i}")));
    w.write_record(&header)?;
    for t in &ds.trajectories {
        for (k, x) in t.states.iter().enumerate() {
            let mut rec = vec![k.to_string()];
            rec.extend(x.iter().map(f64::to_string));
            match t.inputs.get(k) {
                Some(u) => rec.extend(u.iter().map(f64::to_string)),
                None => rec.extend(std::iter::repeat_n(String::new(), m)),
            }
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset_csv<R: Read>(input: R, meta: &DatasetMeta) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers()?.clone();
    let cols: Vec<&str> = header.iter().collect();
    if cols.first() != Some(&"k") {
        return Err(Error::parse(1, "first column must be `k`"));
    }
    let n = cols.iter().filter(|c| c.starts_with('x')).count();
    let m = cols.iter().filter(|c| c.starts_with('u')).count();
    let expected: Vec<String> =
        std::iter::once("k".to_string()).chain((1..=n).map(|i| format!("x{i}"))).chain((1..=m).map(|i| format!("u{i}"))).collect();
    if n == 0 || cols != expected.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(Error::parse(1, format!("header must be k,x1..xn,u1..um, found `{}`", cols.join(","))));
    }
    let mut trajectories: Vec<Trajectory> = Vec::new();
    let mut open = false;
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        if rec.len() != 1 + n + m {
            return Err(Error::parse(line, format!("expected {} fields, found {}", 1 + n + m, rec.len())));
        }
        let k: usize = rec[0].trim().parse().map_err(|_| Error::parse(line, format!("bad step index `{}`", &rec[0])))?;
        let num = |s: &str| -> Result<f64> {
            let v: f64 = s.trim().parse().map_err(|_| Error::parse(line, format!("bad number `{s}`")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::parse(line, format!("non-finite value `{s}`")))
            }
        };
        let x = (1..=n).map(|j| num(&rec[j])).collect::<Result<Vec<_>>>()?;
        let u_fields: Vec<&str> = (1 + n..1 + n + m).map(|j| rec[j].trim()).collect();
        let u =
            if u_fields.iter().all(|s| s.is_empty()) { None } else { Some(u_fields.iter().map(|s| num(s)).collect::<Result<Vec<_>>>()?) };
        if k == 0 {
            if open {
                return Err(Error::parse(line, "previous trajectory ended without an input-free row"));
            }
            trajectories.push(Trajectory { states: Vec::new(), inputs: Vec::new() });
        }
        let Some(t) = trajectories.last_mut().filter(|t| t.states.len() == k) else {
            return Err(Error::parse(line, format!("step index {k} out of sequence")));
        };
        if k > 0 && !open {
            return Err(Error::parse(line, "row after the end of its trajectory"));
        }
        t.states.push(x);
        open = u.is_some();
        if let Some(u) = u {
            t.inputs.push(u);
        }
    }
    if open {
        return Err(Error::parse(0, "last trajectory ended without an input-free row"));
    }
    if trajectories.is_empty() {
        return Err(Error::parse(0, "dataset has no rows"));
    }
    Ok(Dataset { plant: meta.plant.clone(), period: meta.period, seed: meta.seed, trajectories })
}

/// SHA-256 of the dataset sidecar text, recorded in checkpoints.
pub fn meta_hash(meta: &DatasetMeta) -> String {
    let digest = Sha256::digest(meta.to_text().as_bytes());
    digest.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Everything needed to resume, verify or deploy a trained controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub plant: String,
    pub lifted_dim: usize,
    pub round: usize,
    pub epoch: usize,
    /// The training configuration as `key = value` text.
    pub config: String,
    pub networks: NetworkBundle,
    pub model: BilinearModel,
    pub epsilon: f64,
    pub counterexamples: Vec<Vec<f64>>,
    pub certificate: Option<Certificate>,
    pub dataset: DatasetMeta,
    pub dataset_hash: String,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(text)?;
        if c.networks.encoder.lifted_dim() != c.lifted_dim
            || c.model.lifted_dim() != c.lifted_dim
            || c.networks.clf.lifted_dim() != c.lifted_dim
        {
            return Err(Error::shape("checkpoint networks and model disagree on the lifted dimension"));
        }
        Ok(c)
    }
}

pub const TRAINING_LOG_HEADER: &str = "epoch,recons,dyn,phy,lyap,roa,total,worst_violation_margin";

pub fn training_log_row(epoch: usize, r: &LossReport) -> String {
    format!("{epoch},{},{},{},{},{},{},{}", r.recons, r.dyn_, r.phy, r.lyap, r.roa, r.total, r.worst_margin)
}

pub const ROUND_LOG_HEADER: &str = "round,outcome,counterexample,wall_time_s";

pub fn round_log_row(round: usize, cert: &Certificate, wall_time: f64) -> String {
    let cex = cert.counterexample.as_ref().map_or(String::new(), |c| c.x.iter().map(f64::to_string).collect::<Vec<_>>().join(" "));
    format!("{round},{},{cex},{wall_time:.3}", cert.outcome.name())
}

fn numbered(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}{i}"))
}

/// `t,x1..xn,u1..um,V,a,sigma`, one row per recorded step.
pub fn rollout_csv(r: &Rollout) -> String {
    let n = r.records.first().map_or(0, |s| s.x.len());
    let m = r.records.first().map_or(0, |s| s.u.len());
    let mut s = std::iter::once("t".to_string()).chain(numbered("x", n)).chain(numbered("u", m)).collect::<Vec<_>>().join(",");
    s.push_str(",V,a,sigma\n");
    for rec in &r.records {
        let fields: Vec<String> = std::iter::once(rec.t)
            .chain(rec.x.iter().copied())
            .chain(rec.u.iter().copied())
            .chain([rec.v, rec.a, rec.sigma])
            .map(|v| v.to_string())
            .collect();
        s.push_str(&fields.join(","));
        s.push('\n');
    }
    s
}

pub const SUMMARY_HEADER: &str = "rollout,status,converged,steps,final_norm,time_to_stop_ball,clip_events,left_domain,x0";

pub fn summary_row(index: usize, r: &Rollout, stop_tol: f64) -> String {
    let x0 = r.records.first().map_or(String::new(), |s| s.x.iter().map(f64::to_string).collect::<Vec<_>>().join(" "));
    let reach = r.time_to_reach(stop_tol).map_or(String::new(), |t| t.to_string());
    format!(
        "{index},{},{},{},{},{reach},{},{},{x0}",
        r.status.name(),
        r.status == crate::controller::RolloutStatus::Converged,
        r.records.len(),
        r.final_norm(),
        r.clip_events,
        r.left_domain
    )
}

/// All rollouts in one file for phase portraits: `rollout,t,x1..xn`.
pub fn phase_csv(rollouts: &[Rollout]) -> String {
    let n = rollouts.iter().flat_map(|r| r.records.first()).map(|s| s.x.len()).next().unwrap_or(0);
    let mut s = std::iter::once("rollout,t".to_string()).chain(numbered("x", n)).collect::<Vec<_>>().join(",");
    s.push('\n');
    for (i, r) in rollouts.iter().enumerate() {
        for rec in &r.records {
            let xs: Vec<String> = rec.x.iter().map(f64::to_string).collect();
            let _ = writeln!(s, "{i},{},{}", rec.t, xs.join(","));
        }
    }
    s
}

/// A matrix as plain CSV rows.
pub fn matrix_csv(m: &Matrix) -> String {
    let mut s = String::new();
    for r in 0..m.rows() {
        let row: Vec<String> = m.row(r).iter().map(f64::to_string).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}
