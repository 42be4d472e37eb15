//! Experiment configuration: one TOML file per experiment.
//!
//! Every section is optional and unknown keys are rejected. Omitted scenario
//! and network fields take the defaults of the chosen scenario kind;
//! `beamlab print-config` prints the fully resolved file.

use std::path::{Path, PathBuf};

use beamlab_core::channels::{PilotConfig, ScenarioConfig, ScenarioKind};
use beamlab_core::nets::{LossWeights, NetSpec, OptimizerKind, PowerInput, Scheme, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Environment variable naming the root that relative output directories
/// are resolved against (default: the working directory).
pub const OUTPUT_ROOT_ENV: &str = "BEAMLAB_OUTPUT_ROOT";

/// Cells of a multicell scenario without an explicit `n_cells`.
pub const DEFAULT_CELLS: usize = 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub kind: ScenarioKind,
    pub n_t: usize,
    pub k: usize,
    pub n_cells: Option<usize>,
    /// Total transmit power per BS, linear.
    pub power: Option<f64>,
    /// Noise power, linear.
    pub noise: Option<f64>,
    pub paths: Option<usize>,
    pub f_up: Option<f64>,
    pub f_down: Option<f64>,
    pub spacing: Option<f64>,
    pub cell_radius: Option<f64>,
    pub min_distance: Option<f64>,
    /// Pilot length; absent means perfect uplink CSI.
    pub pilot_len: Option<usize>,
    pub pilot_power: Option<f64>,
    pub pilot_noise: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub train_count: usize,
    pub test_count: usize,
    /// Label the training set with the classical solver.
    pub labels: bool,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            train_count: 5000,
            test_count: 1000,
            labels: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSection {
    pub width: Option<usize>,
    pub layers: Option<usize>,
    pub filters: Option<Vec<usize>>,
    pub kernel_width: Option<usize>,
    pub cnn_dense: Option<usize>,
    pub dropout: Option<f64>,
    pub power_input: Option<PowerInput>,
    pub per_user: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSection {
    pub channel: Option<f64>,
    pub power: Option<f64>,
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub validation_fraction: f64,
    pub rate_on_true_channel: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            batch_size: t.batch_size,
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            optimizer: t.optimizer,
            seed: t.seed,
            validation_fraction: t.validation_fraction,
            rate_on_true_channel: t.rate_on_true_channel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub schemes: Vec<String>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            schemes: ["wmmse", "proposed", "learned_ch_zf", "learned_ch_bf"]
                .map(String::from)
                .to_vec(),
        }
    }
}

/// Scenario parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Users per cell.
    Users,
    /// BS antennas.
    Antennas,
    /// Pilot length.
    Pilots,
    /// Transmit power in dB (linear power `10^(v/10)`).
    PowerDb,
    /// Number of cells (multicell scenario).
    Cells,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Users => "users",
            SweepAxis::Antennas => "antennas",
            SweepAxis::Pilots => "pilots",
            SweepAxis::PowerDb => "power_db",
            SweepAxis::Cells => "cells",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Where outputs go; relative paths resolve against the output root.
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub net: NetSection,
    #[serde(default)]
    pub loss: LossSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalSection,
    pub sweep: Option<SweepSection>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("beamlab-out")
}

/// Everything a command needs, with defaults filled in and validated.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub scenario: ScenarioConfig,
    pub spec: NetSpec,
    pub weights: LossWeights,
    pub train: TrainConfig,
    pub data: DataSection,
    pub schemes: Vec<Scheme>,
}

fn cfg_err(e: impl ToString) -> LabError {
    LabError::Config(e.to_string())
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(cfg_err)?;
        cfg.resolve()?;
        if let Some(s) = &cfg.sweep {
            for v in &s.values {
                cfg.resolve_at(s.axis, *v)?;
            }
            if s.values.is_empty() {
                return Err(LabError::Config("sweep has no values".into()));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// A small example configuration.
    pub fn example() -> Self {
        ExperimentConfig {
            output_dir: default_output_dir(),
            scenario: ScenarioSection {
                kind: ScenarioKind::SmallTdd,
                n_t: 4,
                k: 4,
                n_cells: None,
                power: None,
                noise: None,
                paths: None,
                f_up: None,
                f_down: None,
                spacing: None,
                cell_radius: None,
                min_distance: None,
                pilot_len: None,
                pilot_power: None,
                pilot_noise: None,
                seed: None,
            },
            data: DataSection::default(),
            net: NetSection::default(),
            loss: LossSection::default(),
            train: TrainSection::default(),
            eval: EvalSection::default(),
            sweep: None,
        }
    }

    /// The same configuration with every default written out.
    pub fn filled(&self) -> Result<Self> {
        let r = self.resolve()?;
        let sc = &r.scenario;
        let mut out = self.clone();
        out.scenario = ScenarioSection {
            kind: sc.kind,
            n_t: sc.n_t,
            k: sc.k,
            n_cells: Some(sc.n_cells),
            power: Some(sc.power),
            noise: Some(sc.noise),
            paths: Some(sc.paths),
            f_up: Some(sc.f_up),
            f_down: Some(sc.f_down),
            spacing: Some(sc.spacing),
            cell_radius: Some(sc.cell_radius),
            min_distance: Some(sc.min_distance),
            pilot_len: sc.pilots.map(|p| p.len),
            pilot_power: sc.pilots.map(|_| sc.pilot_power()),
            pilot_noise: sc.pilots.map(|_| sc.pilot_noise()),
            seed: Some(sc.seed),
        };
        let s = &r.spec;
        out.net = NetSection {
            width: Some(s.width),
            layers: Some(s.layers),
            filters: Some(s.filters.clone()),
            kernel_width: Some(s.kernel_width),
            cnn_dense: Some(s.cnn_dense),
            dropout: Some(s.dropout),
            power_input: Some(s.power_input),
            per_user: Some(s.per_user),
        };
        out.loss = LossSection {
            channel: Some(r.weights.channel),
            power: Some(r.weights.power),
            rate: Some(r.weights.rate),
        };
        Ok(out)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn resolve(&self) -> Result<Resolved> {
        self.resolve_scenario(self.scenario_config()?)
    }

    /// The configuration at one point of its sweep axis.
    pub fn resolve_at(&self, axis: SweepAxis, value: f64) -> Result<Resolved> {
        let mut sc = self.scenario_config()?;
        let count = || -> Result<usize> {
            if value >= 1.0 && value.fract() == 0.0 && value < 1e6 {
                Ok(value as usize)
            } else {
                Err(LabError::Config(format!(
                    "{} sweep value {value} is not a positive integer",
                    axis.name()
                )))
            }
        };
        match axis {
            SweepAxis::Users => sc.k = count()?,
            SweepAxis::Antennas => sc.n_t = count()?,
            SweepAxis::Pilots => {
                let len = count()?;
                sc.pilots = Some(match sc.pilots {
                    Some(p) => PilotConfig { len, ..p },
                    None => PilotConfig {
                        len,
                        power: None,
                        noise: None,
                    },
                });
            }
            SweepAxis::PowerDb => {
                if !value.is_finite() {
                    return Err(LabError::Config(format!("power sweep value {value} is not finite")));
                }
                sc.power = 10f64.powf(value / 10.0);
            }
            SweepAxis::Cells => {
                if sc.kind != ScenarioKind::Multicell {
                    return Err(LabError::Config("a cells sweep needs the multicell scenario".into()));
                }
                sc.n_cells = count()?;
            }
        }
        self.resolve_scenario(sc)
    }

    fn scenario_config(&self) -> Result<ScenarioConfig> {
        let s = &self.scenario;
        let n_cells = s.n_cells.unwrap_or(match s.kind {
            ScenarioKind::Multicell => DEFAULT_CELLS,
            _ => 1,
        });
        let mut sc = match s.kind {
            ScenarioKind::SmallTdd => ScenarioConfig::small_tdd(s.n_t, s.k),
            ScenarioKind::ToySquare => ScenarioConfig::toy_square(s.n_t, s.k),
            ScenarioKind::MassiveFdd => ScenarioConfig::massive_fdd(s.n_t, s.k),
            ScenarioKind::Multicell => ScenarioConfig::multicell(s.n_t, s.k, n_cells),
        };
        sc.n_cells = n_cells;
        macro_rules! take {
            ($($field:ident),*) => {$(if let Some(v) = s.$field { sc.$field = v; })*};
        }
        take!(
            power,
            noise,
            paths,
            f_up,
            f_down,
            spacing,
            cell_radius,
            min_distance,
            seed
        );
        match s.pilot_len {
            Some(len) => {
                sc.pilots = Some(PilotConfig {
                    len,
                    power: s.pilot_power,
                    noise: s.pilot_noise,
                })
            }
            None if s.pilot_power.is_some() || s.pilot_noise.is_some() => {
                return Err(LabError::Config("pilot power and noise need pilot_len".into()))
            }
            None => {}
        }
        Ok(sc)
    }

    fn resolve_scenario(&self, scenario: ScenarioConfig) -> Result<Resolved> {
        scenario.validate().map_err(cfg_err)?;
        let n = &self.net;
        let base = NetSpec::for_scenario(&scenario);
        let spec = NetSpec {
            width: n.width.unwrap_or(base.width),
            layers: n.layers.unwrap_or(base.layers),
            filters: n.filters.clone().unwrap_or(base.filters.clone()),
            kernel_width: n.kernel_width.unwrap_or(base.kernel_width),
            cnn_dense: n.cnn_dense.unwrap_or(base.cnn_dense),
            dropout: n.dropout.unwrap_or(base.dropout),
            power_input: n.power_input.unwrap_or(base.power_input),
            per_user: n.per_user.unwrap_or(base.per_user),
            ..base
        };
        spec.validate().map_err(cfg_err)?;
        let dw = LossWeights::for_scenario(&scenario);
        let weights = LossWeights {
            channel: self.loss.channel.unwrap_or(dw.channel),
            power: self.loss.power.unwrap_or(dw.power),
            rate: self.loss.rate.unwrap_or(dw.rate),
        };
        weights.validate().map_err(cfg_err)?;
        let t = &self.train;
        let train = TrainConfig {
            batch_size: t.batch_size,
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            optimizer: t.optimizer,
            seed: t.seed,
            validation_fraction: t.validation_fraction,
            rate_on_true_channel: t.rate_on_true_channel,
        };
        train.validate().map_err(cfg_err)?;
        let schemes = self
            .eval
            .schemes
            .iter()
            .map(|s| Scheme::parse(s).map_err(cfg_err))
            .collect::<Result<Vec<_>>>()?;
        if schemes.is_empty() {
            return Err(LabError::Config("no schemes to evaluate".into()));
        }
        let multicell = scenario.n_cells > 1;
        for s in &schemes {
            if multicell && *s == Scheme::Wmmse {
                return Err(LabError::Config("wmmse is single-cell only; use slnr_ao".into()));
            }
            if *s == Scheme::LmmseThenWmmse && scenario.pilots.is_none() {
                return Err(LabError::Config(
                    "lmmse_then_wmmse needs pilots (scenario.pilot_len)".into(),
                ));
            }
            if s.uses_zf() && scenario.k > scenario.n_t {
                return Err(LabError::Config(format!(
                    "{} needs at least as many antennas as users per cell ({} < {})",
                    s.name(),
                    scenario.n_t,
                    scenario.k
                )));
            }
        }
        if self.data.train_count == 0 && schemes.iter().any(|s| s.is_learned()) {
            return Err(LabError::Config("learned schemes need training samples".into()));
        }
        if self.data.test_count == 0 {
            return Err(LabError::Config("test_count must be at least 1".into()));
        }
        if !self.data.labels && weights.power != 0.0 && schemes.iter().any(|s| s.needs_labels()) {
            return Err(LabError::Config(
                "the power loss needs labels; set data.labels or loss.power = 0".into(),
            ));
        }
        Ok(Resolved {
            scenario,
            spec,
            weights,
            train,
            data: self.data.clone(),
            schemes,
        })
    }

    /// The output directory, under the output root when relative.
    pub fn output_path(&self) -> PathBuf {
        output_root().join(&self.output_dir)
    }
}

pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV).map_or_else(|| PathBuf::from("."), PathBuf::from)
}
