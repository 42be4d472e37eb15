use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    gen_ula_channel, gen_uplink_rayleigh, map_downlink, Direction, MappingState, MulticellTopology, PathParams,
    ScenarioConfig, ScenarioKind,
};
use crate::linalg::{CMat, C64};
use crate::math;
use crate::pilots;
use crate::Result;

/// Supervision targets produced by a solver.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Labels {
    /// Downlink powers, cell-major in the multicell scenario (each cell's
    /// block sums to `P`).
    pub p: Vec<f64>,
    /// Virtual-uplink powers (single-cell scenarios only).
    pub q: Option<Vec<f64>>,
}

/// One channel realization.
///
/// Single-cell samples hold one matrix per field. Multicell samples hold one
/// `N_t x K_total` matrix per BS, users in cell-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub index: usize,
    /// True uplink channels.
    pub uplink: Vec<CMat>,
    /// Received pilot blocks `Y = H_U X + N`, empty without pilots.
    pub received: Vec<CMat>,
    /// Network input: the uplink channel itself, or the least-squares
    /// pilot estimate when pilots are configured.
    pub input: Vec<CMat>,
    /// True downlink channels.
    pub downlink: Vec<CMat>,
    pub labels: Option<Labels>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: ScenarioConfig,
    pub mapping: MappingState,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn is_labeled(&self) -> bool {
        !self.samples.is_empty() && self.samples.iter().all(|s| s.labels.is_some())
    }

    /// Splits off the last `fraction` of samples as a second dataset.
    pub fn split(mut self, fraction: f64) -> (Dataset, Dataset) {
        let n = self.samples.len();
        let tail = libm::round((n as f64) * fraction) as usize;
        let rest = self.samples.split_off(n - tail.min(n));
        let other = Dataset {
            config: self.config.clone(),
            mapping: self.mapping.clone(),
            samples: rest,
        };
        (self, other)
    }
}

/// RNG for sample `index`: the scenario seed on stream `index`.
pub fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Generates sample `index` of a scenario. Pure in `(cfg, state, index)`, so
/// samples can be produced in any order or in parallel.
pub fn generate_sample(cfg: &ScenarioConfig, state: &MappingState, index: usize) -> Result<Sample> {
    let mut rng = sample_rng(cfg.seed, index);
    let (uplink, downlink) = match cfg.kind {
        ScenarioKind::ToySquare | ScenarioKind::SmallTdd => {
            let hu = gen_uplink_rayleigh(cfg.n_t, cfg.k, &mut rng);
            let hd = map_downlink(cfg, state, &hu, None)?;
            (alloc::vec![hu], alloc::vec![hd])
        }
        ScenarioKind::MassiveFdd => {
            let paths: Vec<PathParams> = (0..cfg.k).map(|_| PathParams::draw(cfg.paths, &mut rng)).collect();
            let cols: Vec<Vec<C64>> = paths
                .iter()
                .map(|p| gen_ula_channel(cfg, p, Direction::Uplink))
                .collect();
            let hu = CMat::from_columns(&cols);
            let hd = map_downlink(cfg, state, &hu, Some(&paths))?;
            (alloc::vec![hu], alloc::vec![hd])
        }
        ScenarioKind::Multicell => {
            let topo = MulticellTopology::generate(cfg, &mut rng)?;
            let kt = cfg.k_total();
            let mut ups = Vec::with_capacity(cfg.n_cells);
            let mut downs = Vec::with_capacity(cfg.n_cells);
            for j in 0..cfg.n_cells {
                let mut hu = CMat::zeros(cfg.n_t, kt);
                let mut hd = CMat::zeros(cfg.n_t, kt);
                for u in 0..kt {
                    let p = PathParams::draw(cfg.paths, &mut rng);
                    let gu = math::sqrt(topo.uplink_gain[j][u]);
                    let gd = math::sqrt(topo.downlink_gain[j][u]);
                    let up: Vec<C64> = gen_ula_channel(cfg, &p, Direction::Uplink)
                        .into_iter()
                        .map(|x| x * gu)
                        .collect();
                    let down: Vec<C64> = state
                        .apply(u, &gen_ula_channel(cfg, &p, Direction::Downlink))
                        .into_iter()
                        .map(|x| x * gd)
                        .collect();
                    hu.set_col(u, &up);
                    hd.set_col(u, &down);
                }
                ups.push(hu);
                downs.push(hd);
            }
            (ups, downs)
        }
    };
    let (received, input) = match cfg.pilots {
        None => (Vec::new(), uplink.clone()),
        Some(pc) => {
            let x = pilots::make_dft_pilots(cfg.k_total(), pc.len, cfg.pilot_power());
            let received = uplink
                .iter()
                .map(|hu| pilots::receive_pilots(hu, &x, cfg.pilot_noise(), &mut rng))
                .collect::<Result<Vec<_>>>()?;
            let input = received
                .iter()
                .map(|y| pilots::ls_preprocess(y, &x, cfg.pilot_power()))
                .collect::<Result<Vec<_>>>()?;
            (received, input)
        }
    };
    Ok(Sample {
        index,
        uplink,
        received,
        input,
        downlink,
        labels: None,
    })
}

/// Solver callback that labels one sample.
pub type Labeler<'a> = dyn Fn(&ScenarioConfig, &Sample) -> Result<Labels> + Sync + 'a;

/// Generates `count` samples sequentially, labelling each with `labeler`
/// when given. Failures carry the index of the offending sample.
pub fn build_dataset(cfg: &ScenarioConfig, count: usize, labeler: Option<&Labeler<'_>>) -> Result<Dataset> {
    cfg.validate()?;
    let mapping = MappingState::draw(cfg);
    let mut samples = Vec::with_capacity(count);
    for index in 0..count {
        let mut s = generate_sample(cfg, &mapping, index).map_err(|e| e.at_sample(index))?;
        if let Some(label) = labeler {
            s.labels = Some(label(cfg, &s).map_err(|e| e.at_sample(index))?);
        }
        samples.push(s);
    }
    Ok(Dataset {
        config: cfg.clone(),
        mapping,
        samples,
    })
}
