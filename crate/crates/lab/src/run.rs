//! The experiment commands as library functions.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use beamlab_core::channels::{Dataset, ScenarioConfig};
use beamlab_core::nets::{
    evaluate, required_networks, resume_networks, EpochRecord, NetKey, Scheme, SchemeScore, SolverConfigs,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::config::{ExperimentConfig, Resolved, SweepAxis};
use crate::datasets::{generate_range, read_dataset, write_dataset, Manifest};
use crate::error::{LabError, Result};
use crate::results::{log_header, log_line, ResultRow, ResultTable, NO_AXIS};

pub const TRAIN_DIR: &str = "data/train";
pub const TEST_DIR: &str = "data/test";
pub const CHECKPOINT: &str = "checkpoint.bin";
pub const SUMMARY: &str = "summary.json";
pub const CONFIG_ECHO: &str = "config.toml";

pub fn log_file(key: NetKey) -> String {
    format!("train_log_{}.csv", key.name())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(LabError::io(parent))?;
    }
    std::fs::write(path, text).map_err(LabError::io(path))
}

/// Writes the resolved configuration next to a command's outputs.
pub fn echo_config(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    write_text(&out.join(CONFIG_ECHO), &cfg.filled()?.to_toml())
}

/// Training and test sets of a resolved configuration. Test samples follow
/// the training samples on the same scenario, unlabeled.
pub fn make_data(r: &Resolved) -> Result<(Dataset, Dataset)> {
    let labeled = r.data.labels && r.schemes.iter().any(|s| s.needs_labels());
    let train = generate_range(&r.scenario, 0, r.data.train_count, labeled)?;
    let test = generate_range(&r.scenario, r.data.train_count, r.data.test_count, false)?;
    Ok((train, test))
}

pub fn gen_data(cfg: &ExperimentConfig, out: &Path) -> Result<(Manifest, Manifest)> {
    let r = cfg.resolve()?;
    let (train, test) = make_data(&r)?;
    echo_config(cfg, out)?;
    Ok((
        write_dataset(&out.join(TRAIN_DIR), &train)?,
        write_dataset(&out.join(TEST_DIR), &test)?,
    ))
}

/// Fails with a shape error when the dataset's dimensions differ from the
/// scenario, and a config error for any other difference.
pub fn check_dataset(expected: &ScenarioConfig, ds: &Dataset) -> Result<()> {
    let got = &ds.config;
    let dims = |c: &ScenarioConfig| (c.n_t, c.k, c.n_cells, c.pilots.map(|p| p.len));
    if dims(got) != dims(expected) {
        return Err(LabError::Shape(format!(
            "dataset has (N_t, K, cells, pilots) = {:?}, config expects {:?}",
            dims(got),
            dims(expected)
        )));
    }
    if got != expected {
        return Err(LabError::Config(
            "dataset was generated from a different scenario".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSummary {
    pub network: String,
    pub epochs: usize,
    pub last: Option<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub seed: u64,
    pub first_epoch: usize,
    pub last_epoch: usize,
    pub train_samples: usize,
    pub networks: Vec<NetworkSummary>,
    pub config: ExperimentConfig,
}

/// Trains the networks the configured schemes need on `train`, appending
/// to the logs in `out`. With `resume`, training continues from that
/// checkpoint and epoch numbers continue after it.
pub fn train_on(
    cfg: &ExperimentConfig,
    r: &Resolved,
    train: &Dataset,
    out: &Path,
    resume: Option<&Path>,
    quiet: bool,
) -> Result<(Checkpoint, TrainSummary)> {
    check_dataset(&r.scenario, train)?;
    let start = resume.map(Checkpoint::load).transpose()?;
    if let Some(ck) = &start {
        check_dataset(&ck.scenario, train)?;
    }
    let first_epoch = start.as_ref().map_or(0, |c| c.epoch);
    let keys = required_networks(&r.schemes);
    std::fs::create_dir_all(out).map_err(LabError::io(out))?;
    for key in &keys {
        let path = out.join(log_file(*key));
        if resume.is_none() || !path.exists() {
            write_text(&path, &log_header())?;
        }
    }
    let clock = Instant::now();
    let mut last: Vec<(NetKey, EpochRecord)> = Vec::new();
    let mut io_error = None;
    let trained = resume_networks(
        train,
        &keys,
        &r.spec,
        &r.weights,
        &r.train,
        start.as_ref().map(|c| (&c.trained, c.epoch)),
        &mut |key, rec| {
            let path = out.join(log_file(key));
            let line = log_line(rec, clock.elapsed().as_secs_f64());
            let res = OpenOptions::new()
                .append(true)
                .create(true)
                .open(&path)
                .and_then(|mut f| f.write_all(line.as_bytes()));
            if let Err(e) = res {
                io_error.get_or_insert(LabError::Io { path, source: e });
            }
            if !quiet {
                eprint!("{} {line}", key.name());
            }
            match last.iter_mut().find(|(k, _)| *k == key) {
                Some(slot) => slot.1 = rec.clone(),
                None => last.push((key, rec.clone())),
            }
        },
    )?;
    if let Some(e) = io_error {
        return Err(e);
    }
    let last_epoch = first_epoch + r.train.epochs;
    let ck = Checkpoint {
        scenario: r.scenario.clone(),
        trained,
        epoch: if keys.is_empty() { first_epoch } else { last_epoch },
    };
    ck.save(&out.join(CHECKPOINT))?;
    let summary = TrainSummary {
        seed: r.train.seed,
        first_epoch,
        last_epoch: ck.epoch,
        train_samples: train.len(),
        networks: keys
            .iter()
            .map(|k| NetworkSummary {
                network: k.name().to_string(),
                epochs: r.train.epochs,
                last: last.iter().find(|(x, _)| x == k).map(|(_, rec)| rec.clone()),
            })
            .collect(),
        config: cfg.filled()?,
    };
    let text = serde_json::to_string_pretty(&summary).expect("plain data serializes");
    write_text(&out.join(SUMMARY), &(text + "\n"))?;
    Ok((ck, summary))
}

pub fn train(
    cfg: &ExperimentConfig,
    data: &Path,
    out: &Path,
    resume: Option<&Path>,
    quiet: bool,
) -> Result<TrainSummary> {
    let r = cfg.resolve()?;
    let ds = read_dataset(data)?;
    echo_config(cfg, out)?;
    train_on(cfg, &r, &ds, out, resume, quiet).map(|(_, s)| s)
}

/// Scores every scheme on `test`. Learned schemes need a checkpoint.
pub fn evaluate_schemes(schemes: &[Scheme], ck: Option<&Checkpoint>, test: &Dataset) -> Result<Vec<SchemeScore>> {
    if let Some(ck) = ck {
        check_dataset(&ck.scenario, test)?;
    }
    let solvers = SolverConfigs::default();
    schemes
        .par_iter()
        .map(|s| Ok(evaluate(*s, ck.map(|c| &c.trained), test, &solvers)?))
        .collect()
}

pub fn eval(cfg: &ExperimentConfig, checkpoint: Option<&Path>, data: &Path, out: &Path) -> Result<ResultTable> {
    let r = cfg.resolve()?;
    let needs_nets = r.schemes.iter().any(|s| s.is_learned());
    let ck = match (needs_nets, checkpoint) {
        (true, Some(p)) => Some(Checkpoint::load(p)?),
        (true, None) => return Err(LabError::MissingCheckpoint(out.join(CHECKPOINT))),
        (false, _) => None,
    };
    let test = read_dataset(data)?;
    check_dataset(&r.scenario, &test)?;
    let scores = evaluate_schemes(&r.schemes, ck.as_ref(), &test)?;
    let table = ResultTable {
        rows: scores.iter().map(|s| ResultRow::from_score(NO_AXIS, None, s)).collect(),
    };
    echo_config(cfg, out)?;
    table.write(out, "results")?;
    Ok(table)
}

/// Generates data, trains and evaluates one configuration in `dir`.
pub fn run_point(cfg: &ExperimentConfig, r: &Resolved, dir: &Path, quiet: bool) -> Result<Vec<SchemeScore>> {
    let (train, test) = make_data(r)?;
    write_dataset(&dir.join(TRAIN_DIR), &train)?;
    write_dataset(&dir.join(TEST_DIR), &test)?;
    let ck = if r.schemes.iter().any(|s| s.is_learned()) {
        Some(train_on(cfg, r, &train, dir, None, quiet)?.0)
    } else {
        None
    };
    evaluate_schemes(&r.schemes, ck.as_ref(), &test)
}

pub fn point_dir(out: &Path, axis: SweepAxis, value: f64) -> PathBuf {
    out.join("sweep").join(format!("{}_{value}", axis.name()))
}

/// Runs every sweep point (concurrently with `parallel > 1`) and writes the
/// combined `sweep.csv`/`sweep.json` after each finished point. A failed
/// point yields one failure row per scheme; the first failure is returned
/// after all points ran.
pub fn sweep(cfg: &ExperimentConfig, out: &Path, parallel: usize, quiet: bool) -> Result<ResultTable> {
    let s = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| LabError::Config("the config has no [sweep] section".into()))?;
    if s.values.is_empty() {
        return Err(LabError::Config("sweep has no values".into()));
    }
    let points: Vec<(f64, Resolved)> = s
        .values
        .iter()
        .map(|v| cfg.resolve_at(s.axis, *v).map(|r| (*v, r)))
        .collect::<Result<_>>()?;
    echo_config(cfg, out)?;
    let done: Mutex<Vec<Option<Vec<ResultRow>>>> = Mutex::new(vec![None; points.len()]);
    let failure: Mutex<Option<LabError>> = Mutex::new(None);
    let axis = s.axis.name();
    let flush = |done: &[Option<Vec<ResultRow>>]| -> Result<()> {
        let table = ResultTable {
            rows: done.iter().flatten().flatten().cloned().collect(),
        };
        table.write(out, "sweep")
    };
    let run = |i: usize| {
        let (v, r) = &points[i];
        let rows = match run_point(cfg, r, &point_dir(out, s.axis, *v), quiet) {
            Ok(scores) => scores
                .iter()
                .map(|sc| ResultRow::from_score(axis, Some(*v), sc))
                .collect(),
            Err(e) => {
                let rows = r
                    .schemes
                    .iter()
                    .map(|sc| ResultRow::failed(axis, Some(*v), *sc, &e.to_string()))
                    .collect();
                failure.lock().expect("no panics while locked").get_or_insert(e);
                rows
            }
        };
        let mut d = done.lock().expect("no panics while locked");
        d[i] = Some(rows);
        if let Err(e) = flush(&d) {
            failure.lock().expect("no panics while locked").get_or_insert(e);
        }
    };
    if parallel > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallel)
            .build()
            .map_err(|e| LabError::Config(format!("thread pool: {e}")))?;
        pool.install(|| (0..points.len()).into_par_iter().for_each(run));
    } else {
        (0..points.len()).for_each(run);
    }
    if let Some(e) = failure.into_inner().expect("no panics while locked") {
        return Err(e);
    }
    let rows = done
        .into_inner()
        .expect("no panics while locked")
        .into_iter()
        .flatten()
        .flatten()
        .collect();
    Ok(ResultTable { rows })
}
