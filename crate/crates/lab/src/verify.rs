//! The invariant battery behind `beamlab verify`, and the dataset audit.

use std::path::Path;

use beamlab_core::autodiff::{Graph, Mode};
use beamlab_core::beamforming::{
    reconstruct, reduce_dimension, sum_rate, sum_rate_reduced, total_power, zf, PowerPair, POWER_PAIR_RTOL,
};
use beamlab_core::channels::{gen_uplink_rayleigh, ScenarioConfig, ScenarioKind};
use beamlab_core::nets::{instances, Batch, NetSpec, Network, Role};
use beamlab_core::solvers::{extract_pq, wmmse, WmmseConfig, MONOTONE_TOL};
use beamlab_core::CMat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::Checkpoint;
use crate::datasets::{generate, read_dataset, read_manifest};
use crate::tensorfile::TensorFile;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name,
            passed,
            detail: detail.into(),
        }
    }

    fn from_result(name: &'static str, r: Result<String, String>) -> Self {
        match r {
            Ok(d) => Check::new(name, true, d),
            Err(d) => Check::new(name, false, d),
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail
        )
    }
}

fn channels(seed: u64, count: usize, n_t: usize, k: usize) -> Vec<CMat> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| gen_uplink_rayleigh(n_t, k, &mut rng)).collect()
}

fn wmmse_contract(seed: u64) -> Result<String, String> {
    let (p, n0) = (100.0, 1.0);
    let mut worst_drop: f64 = 0.0;
    let mut worst_budget: f64 = 0.0;
    for h in channels(seed, 20, 4, 4) {
        let out = wmmse(&h, p, n0, &WmmseConfig::default()).map_err(|e| e.to_string())?;
        for w in out.trace.windows(2) {
            worst_drop = worst_drop.max(w[0] - w[1]);
        }
        worst_budget = worst_budget.max((total_power(&out.w) - p).abs());
    }
    if worst_drop > MONOTONE_TOL || worst_budget > 1e-6 * p {
        return Err(format!(
            "largest rate drop {worst_drop:e}, budget error {worst_budget:e}"
        ));
    }
    Ok(format!(
        "20 instances, largest drop {worst_drop:e}, budget error {worst_budget:e}"
    ))
}

fn structure_round_trip(seed: u64) -> Result<String, String> {
    let (p, n0) = (100.0, 1.0);
    let hs = channels(seed, 20, 4, 4);
    let mut good = 0;
    for h in &hs {
        let out = wmmse(h, p, n0, &WmmseConfig::default()).map_err(|e| e.to_string())?;
        let pair = extract_pq(h, &out.w, n0, p).map_err(|e| e.to_string())?;
        pair.validate().map_err(|e| e.to_string())?;
        let w = reconstruct(h, &pair, n0).map_err(|e| e.to_string())?;
        if sum_rate(h, &w, n0) >= 0.95 * out.rate() {
            good += 1;
        }
    }
    if good < 19 {
        return Err(format!("{good}/20 reach 95% of the WMMSE rate"));
    }
    Ok(format!("{good}/20 reach 95% of the WMMSE rate"))
}

fn reduction_exact(seed: u64) -> Result<String, String> {
    let n0 = 1.0;
    let mut worst: f64 = 0.0;
    for h in channels(seed, 20, 16, 4) {
        let r = reduce_dimension(&h).map_err(|e| e.to_string())?;
        let v = channels(seed ^ 7, 1, 4, 4).remove(0);
        let full = sum_rate(&h, &r.lift(&v).map_err(|e| e.to_string())?, n0);
        worst = worst.max((full - sum_rate_reduced(&r.g, &v, n0)).abs());
    }
    if worst > 1e-9 {
        return Err(format!("largest rate difference {worst:e}"));
    }
    Ok(format!("largest rate difference {worst:e}"))
}

fn zf_nulls(seed: u64) -> Result<String, String> {
    let mut worst: f64 = 0.0;
    for h in channels(seed, 20, 6, 4) {
        let w = zf(&h, 10.0).map_err(|e| e.to_string())?;
        let g = h.adjoint().matmul(&w).map_err(|e| e.to_string())?;
        let diag = (0..4).map(|i| g[(i, i)].norm()).fold(0.0, f64::max);
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    worst = worst.max(g[(i, j)].norm() / diag);
                }
            }
        }
    }
    if worst > 1e-9 {
        return Err(format!("largest relative cross term {worst:e}"));
    }
    Ok(format!("largest relative cross term {worst:e}"))
}

fn power_net_budget(seed: u64) -> Result<String, String> {
    let cfg = ScenarioConfig::small_tdd(3, 3).with_seed(seed);
    let ds = generate(&cfg, 8, false).map_err(|e| e.to_string())?;
    let items = instances(&ds).map_err(|e| e.to_string())?;
    let refs: Vec<_> = items.iter().collect();
    let mut worst: f64 = 0.0;
    for s in 0..5 {
        let net = Network::new(NetSpec::for_scenario(&cfg), Role::Proposed, cfg.power, seed + s)
            .map_err(|e| e.to_string())?;
        let batch = Batch::new(&net, &refs).map_err(|e| e.to_string())?;
        let mut g = Graph::new(Mode::Eval, 0);
        let x = g.input(batch.x.clone());
        let (o, _) = net.forward(&mut g, x).map_err(|e| e.to_string())?;
        for node in [o.p, o.q].into_iter().flatten() {
            let v = g.value(node).re();
            for row in v.chunks(cfg.k) {
                if row.iter().any(|x| *x < 0.0) {
                    return Err("negative power".into());
                }
                worst = worst.max((row.iter().sum::<f64>() - cfg.power).abs());
            }
        }
    }
    if worst > 1e-9 * cfg.power {
        return Err(format!("largest budget error {worst:e}"));
    }
    Ok(format!("largest budget error {worst:e}"))
}

fn checkpoint_round_trip(seed: u64) -> Result<String, String> {
    let cfg = ScenarioConfig::small_tdd(2, 2).with_seed(seed);
    let net = Network::new(NetSpec::for_scenario(&cfg), Role::Proposed, cfg.power, seed).map_err(|e| e.to_string())?;
    let ck = Checkpoint {
        scenario: cfg,
        trained: beamlab_core::nets::Trained {
            spec: net.spec.clone(),
            weights: Default::default(),
            nets: vec![(beamlab_core::nets::NetKey::Proposed, net)],
            lmmse: Vec::new(),
        },
        epoch: 3,
    };
    let bytes = ck.to_file().to_bytes();
    let path = Path::new("<memory>");
    let back = Checkpoint::from_file(&TensorFile::from_bytes(&bytes, path).map_err(|e| e.to_string())?, path)
        .map_err(|e| e.to_string())?;
    if back != ck || back.to_file().to_bytes() != bytes {
        return Err("checkpoint changed across a round trip".into());
    }
    Ok(format!("{} bytes, bit exact", bytes.len()))
}

/// Runs the numerical invariant battery.
pub fn battery(seed: u64) -> Vec<Check> {
    vec![
        Check::from_result("wmmse monotone and on budget", wmmse_contract(seed)),
        Check::from_result("(p, q) structure round trip", structure_round_trip(seed + 1)),
        Check::from_result("dimension reduction exact", reduction_exact(seed + 2)),
        Check::from_result("zero forcing nulls cross terms", zf_nulls(seed + 3)),
        Check::from_result("power-net outputs sum to budget", power_net_budget(seed + 4)),
        Check::from_result("checkpoint round trip", checkpoint_round_trip(seed + 5)),
    ]
}

/// Audits a dataset directory: manifest hash, and every label against the
/// power-pair invariants (per cell in the multicell scenario).
pub fn audit_dataset(dir: &Path) -> Vec<Check> {
    let mut out = Vec::new();
    match read_manifest(dir) {
        Ok(m) => out.push(Check::new("manifest hash", true, m.config_hash)),
        Err(e) => {
            out.push(Check::new("manifest hash", false, e.to_string()));
            return out;
        }
    }
    let ds = match read_dataset(dir) {
        Ok(ds) => ds,
        Err(e) => {
            out.push(Check::new("dataset readable", false, e.to_string()));
            return out;
        }
    };
    let cfg = &ds.config;
    let mut bad = Vec::new();
    let mut labeled = 0;
    for s in &ds.samples {
        let Some(l) = &s.labels else { continue };
        labeled += 1;
        let res = if cfg.kind == ScenarioKind::Multicell {
            let tol = POWER_PAIR_RTOL * cfg.power.max(1.0);
            let off_budget =
                |b: &[f64]| b.iter().any(|x| x.is_nan() || *x < 0.0) || (b.iter().sum::<f64>() - cfg.power).abs() > tol;
            match l.p.chunks(cfg.k).position(off_budget) {
                Some(cell) => Err(beamlab_core::Error::InvalidConfig(format!(
                    "cell {cell} powers violate the budget"
                ))),
                None => Ok(()),
            }
        } else {
            match &l.q {
                Some(q) => PowerPair::new(l.p.clone(), q.clone(), cfg.power).map(|_| ()),
                None => Err(beamlab_core::Error::MissingLabels(s.index)),
            }
        };
        if let Err(e) = res {
            bad.push(format!("sample {}: {e}", s.index));
        }
    }
    let detail = match bad.first() {
        None => format!("{labeled} labeled samples pass"),
        Some(first) => format!("{} of {labeled} labels fail, first {first}", bad.len()),
    };
    out.push(Check::new(
        "labels satisfy power-pair invariants",
        bad.is_empty(),
        detail,
    ));
    out
}
