//! End-to-end runs: generate, split, train and evaluate one configuration,
//! and expand sweep grids into per-point configurations.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::{compare_policies, mean_hardened_power, EvalConfig, GridPoint, InstanceComparison, SweepRow};
use crate::gat::{GatConfig, GatModel};
use crate::power::PowerParams;
use crate::scenario::{build_graph, generate_scenario, GraphInstance, NormStats, Scenario, ScenarioConfig};
use crate::training::{split_indices, train_from, PreparedDataset, TrainConfig, TrainState};

/// Complete configuration of a run; every section has documented defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Scenario `i` of the dataset is generated with seed `seed + i`.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub scenario: ScenarioConfig,
    pub power: PowerParams,
    pub gat: GatConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.power.validate()?;
        self.gat.validate()?;
        self.train.validate()?;
        if self.train.dataset_size < 2 {
            return Err(Error::Config("train.dataset_size must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub scenario: Scenario,
    /// Unnormalized graph.
    pub graph: GraphInstance,
}

pub fn generate_samples(cfg: &ScenarioConfig, size: usize, seed: u64) -> Result<Vec<Sample>> {
    (0..size)
        .map(|i| {
            let scenario = generate_scenario(cfg, seed.wrapping_add(i as u64))?;
            let graph = build_graph(&scenario, cfg.gamma_th_db);
            Ok(Sample { scenario, graph })
        })
        .collect()
}

/// Train/test split of a sample list with normalization fitted on train.
#[derive(Clone, Debug)]
pub struct SplitSamples {
    pub data: PreparedDataset,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
}

pub fn split_samples(samples: &[Sample], tc: &TrainConfig) -> Result<SplitSamples> {
    let (train_idx, test_idx) = split_indices(samples.len(), tc.split_fraction, tc.shuffle_seed)?;
    let raw: Vec<GraphInstance> = samples.iter().map(|s| s.graph.clone()).collect();
    Ok(SplitSamples {
        data: PreparedDataset::from_raw(&raw, &train_idx, &test_idx)?,
        train_idx,
        test_idx,
    })
}

/// Compares all policies on `samples[idx]`, normalizing graphs with `norm`.
pub fn compare_on(
    model: Option<&GatModel>,
    samples: &[Sample],
    idx: &[usize],
    norm: &NormStats,
    p: &PowerParams,
    eval: &EvalConfig,
) -> Result<Vec<InstanceComparison>> {
    idx.iter()
        .map(|&i| {
            let s = &samples[i];
            let graph = s.graph.normalized(norm)?;
            compare_policies(&s.scenario, model.map(|m| (m, &graph)), p, eval)
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct PointOutcome {
    pub state: TrainState,
    pub split: SplitSamples,
    /// Best-by-test-loss model against every policy on the test split.
    pub comparisons: Vec<InstanceComparison>,
}

/// Generates the dataset, trains a fresh model and evaluates it on the test split.
pub fn run_point(cfg: &RunConfig, on_epoch: impl FnMut(&TrainState) -> Result<()>) -> Result<PointOutcome> {
    cfg.validate()?;
    let samples = generate_samples(&cfg.scenario, cfg.train.dataset_size, cfg.seed)?;
    run_on_samples(cfg, &samples, on_epoch)
}

pub fn run_on_samples(
    cfg: &RunConfig,
    samples: &[Sample],
    on_epoch: impl FnMut(&TrainState) -> Result<()>,
) -> Result<PointOutcome> {
    let split = split_samples(samples, &cfg.train)?;
    let model = GatModel::new(cfg.gat.clone(), cfg.scenario.n_cells)?;
    let state = train_from(TrainState::new(model), &split.data, &cfg.train, &cfg.power, on_epoch)?;
    let comparisons = compare_on(
        Some(state.best_model()),
        samples,
        &split.test_idx,
        &split.data.norm,
        &cfg.power,
        &cfg.eval,
    )?;
    Ok(PointOutcome {
        state,
        split,
        comparisons,
    })
}

/// Picks `lambda2` by the mean hardened power on the training split.
///
/// Returns the winner and `(lambda2, train power)` for every candidate.
pub fn tune_lambda2(cfg: &RunConfig, samples: &[Sample], candidates: &[f64]) -> Result<(f64, Vec<(f64, f64)>)> {
    let split = split_samples(samples, &cfg.train)?;
    let mut scores = Vec::with_capacity(candidates.len());
    for &lambda2 in candidates {
        let tc = TrainConfig {
            lambda2,
            ..cfg.train.clone()
        };
        let model = GatModel::new(cfg.gat.clone(), cfg.scenario.n_cells)?;
        let state = train_from(TrainState::new(model), &split.data, &tc, &cfg.power, |_| Ok(()))?;
        let power = mean_hardened_power(state.best_model(), &split.data.train, &cfg.power)?;
        scores.push((lambda2, power));
    }
    let best = scores
        .iter()
        .copied()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::Argument("no lambda2 candidates".into()))?;
    Ok((best.0, scores))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Bandwidth,
    Lambda,
}

impl SweepKind {
    pub fn name(self) -> &'static str {
        match self {
            SweepKind::Bandwidth => "bandwidth",
            SweepKind::Lambda => "lambda",
        }
    }
}

fn label_num(v: f64) -> String {
    format!("{v}").replace('.', "p")
}

/// Expands a sweep into labelled per-point configurations.
///
/// Bandwidth sweeps cross `grid` (MHz) with `eval.sweep_ues`; lambda sweeps
/// set `lambda2 = ratio * lambda1` for each ratio in `grid`.
pub fn grid_points(kind: SweepKind, base: &RunConfig, grid: &[f64]) -> Result<Vec<(GridPoint, RunConfig)>> {
    if grid.is_empty() {
        return Err(Error::Argument("sweep grid is empty".into()));
    }
    let mut out = Vec::new();
    match kind {
        SweepKind::Bandwidth => {
            let ues = if base.eval.sweep_ues.is_empty() {
                vec![base.scenario.n_ues]
            } else {
                base.eval.sweep_ues.clone()
            };
            for &bw in grid {
                for &k in &ues {
                    let mut cfg = base.clone();
                    cfg.scenario.bandwidth_mhz = bw;
                    cfg.scenario.n_ues = k;
                    let point = GridPoint {
                        label: format!("bw{}_k{k}", label_num(bw)),
                        bandwidth_mhz: bw,
                        n_ues: k,
                        n_cells: cfg.scenario.n_cells,
                        lambda_ratio: ratio(&cfg.train),
                    };
                    out.push((point, cfg));
                }
            }
        }
        SweepKind::Lambda => {
            for &r in grid {
                if !(r >= 0.0 && r.is_finite()) {
                    return Err(Error::Argument(format!("lambda ratio {r} must be finite and >= 0")));
                }
                let mut cfg = base.clone();
                cfg.train.lambda2 = r * cfg.train.lambda1;
                let point = GridPoint {
                    label: format!("ratio{}", label_num(r)),
                    bandwidth_mhz: cfg.scenario.bandwidth_mhz,
                    n_ues: cfg.scenario.n_ues,
                    n_cells: cfg.scenario.n_cells,
                    lambda_ratio: r,
                };
                out.push((point, cfg));
            }
        }
    }
    for (_, cfg) in &mut out {
        cfg.validate()?;
    }
    Ok(out)
}

fn ratio(tc: &TrainConfig) -> f64 {
    if tc.lambda1 > 0.0 {
        tc.lambda2 / tc.lambda1
    } else {
        f64::INFINITY
    }
}

/// Runs every point in-process and tabulates the results; failures become
/// explicit missing rows.
pub fn run_sweep(points: &[(GridPoint, RunConfig)]) -> Vec<SweepRow> {
    points
        .iter()
        .map(|(at, cfg)| {
            run_point(cfg, |_| Ok(()))
                .and_then(|o| SweepRow::summarize(at, &o.comparisons))
                .unwrap_or_else(|e| SweepRow::missing(at, &e.to_string()))
        })
        .collect()
}
