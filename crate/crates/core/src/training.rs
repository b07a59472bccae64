//! Unsupervised training: dataset preparation, the energy loss and the
//! per-instance Adam loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Adam, AdamConfig, AdamState, Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::gat::GatModel;
use crate::power::{network_power_soft, soft_load, PowerParams};
use crate::scenario::{build_graph, generate_scenario, GraphInstance, NormStats, ScenarioConfig};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Weight of the one-hot penalty `K - tr(S S^T)`.
    pub lambda1: f64,
    /// Weight of the PRB-load norm `||p_hat||_2`.
    pub lambda2: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("train.{name} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub dataset_size: usize,
    /// Share of the dataset used for training.
    pub split_fraction: f64,
    pub epochs: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub shuffle_seed: u64,
    /// Save a checkpoint every this many epochs; 0 disables periodic saves.
    pub checkpoint_every: usize,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        let loss = LossConfig::default();
        Self {
            dataset_size: 10_000,
            split_fraction: 0.8,
            epochs: 5000,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            shuffle_seed: 0,
            checkpoint_every: 0,
            lambda1: loss.lambda1,
            lambda2: loss.lambda2,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn loss(&self) -> LossConfig {
        LossConfig {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::Config("train.split_fraction must lie in (0, 1)".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config("train.lr must be positive".into()));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("train.{name} must lie in [0, 1)")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config("train.eps must be positive".into()));
        }
        self.loss().validate()
    }
}

/// `P_soft(S) + lambda1 (K - tr(S S^T)) + lambda2 ||p_hat||_2`.
pub fn loss(g: &mut Graph, s: Var, prb: Var, p: &PowerParams, lc: &LossConfig, n_prb_total: u32) -> Result<Var> {
    let power = network_power_soft(g, s, prb, p, n_prb_total)?;
    let k = g.value(s).rows() as f64;
    let tr = g.trace_of_gram(s);
    let neg_tr = g.scale(tr, -lc.lambda1);
    let t1 = g.add_scalar(neg_tr, lc.lambda1 * k);
    let load = soft_load(g, s, prb)?;
    let norm = g.l2_norm(load);
    let t2 = g.scale(norm, lc.lambda2);
    let partial = g.add(power, t1)?;
    g.add(partial, t2)
}

/// The three loss terms evaluated separately, unweighted.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossTerms {
    pub power_w: f64,
    /// `K - tr(S S^T)`.
    pub one_hot_gap: f64,
    /// `||p_hat||_2`.
    pub load_norm: f64,
}

impl LossTerms {
    pub fn total(&self, lc: &LossConfig) -> f64 {
        self.power_w + lc.lambda1 * self.one_hot_gap + lc.lambda2 * self.load_norm
    }
}

pub fn loss_terms(s: &Tensor, prb: &Tensor, p: &PowerParams, n_prb_total: u32) -> Result<LossTerms> {
    let mut g = Graph::new();
    let sv = g.constant(s.clone());
    let pv = g.constant(prb.clone());
    let power = network_power_soft(&mut g, sv, pv, p, n_prb_total)?;
    let tr = g.trace_of_gram(sv);
    let load = soft_load(&mut g, sv, pv)?;
    let norm = g.l2_norm(load);
    Ok(LossTerms {
        power_w: g.value(power).item(),
        one_hot_gap: s.rows() as f64 - g.value(tr).item(),
        load_norm: g.value(norm).item(),
    })
}

/// Deterministic train/test partition of `n` items: `(train, test)` indices.
pub fn split_indices(n: usize, split_fraction: f64, shuffle_seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::Argument(format!("need at least 2 instances to split, got {n}")));
    }
    if !(split_fraction > 0.0 && split_fraction < 1.0) {
        return Err(Error::Argument(format!(
            "split fraction {split_fraction} outside (0, 1)"
        )));
    }
    let n_train = ((n as f64 * split_fraction).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));
    let test = order.split_off(n_train);
    Ok((order, test))
}

/// Normalized train and test graphs.
#[derive(Clone, Debug)]
pub struct PreparedDataset {
    pub train: Vec<GraphInstance>,
    pub test: Vec<GraphInstance>,
    pub norm: NormStats,
}

impl PreparedDataset {
    /// Fits normalization on the training part of `raw` and applies it to both.
    pub fn from_raw(raw: &[GraphInstance], train_idx: &[usize], test_idx: &[usize]) -> Result<Self> {
        let pick = |idx: &[usize]| idx.iter().map(|&i| raw[i].clone()).collect::<Vec<_>>();
        let (train, test) = (pick(train_idx), pick(test_idx));
        let norm = NormStats::fit(&train)?;
        let apply = |v: Vec<GraphInstance>| v.into_iter().map(|g| g.normalized(&norm)).collect::<Result<Vec<_>>>();
        Ok(Self {
            train: apply(train)?,
            test: apply(test)?,
            norm,
        })
    }
}

/// Generates `size` scenarios with seeds `seed + i`, splits and normalizes.
pub fn prepare_dataset(
    cfg: &ScenarioConfig,
    size: usize,
    split_fraction: f64,
    seed: u64,
    shuffle_seed: u64,
) -> Result<PreparedDataset> {
    let (train_idx, test_idx) = split_indices(size, split_fraction, shuffle_seed)?;
    let raw = (0..size)
        .map(|i| {
            let s = generate_scenario(cfg, seed.wrapping_add(i as u64))?;
            Ok(build_graph(&s, cfg.gamma_th_db))
        })
        .collect::<Result<Vec<_>>>()?;
    PreparedDataset::from_raw(&raw, &train_idx, &test_idx)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_train_loss: f64,
    pub mean_test_loss: f64,
    pub lr: f64,
}

/// Everything needed to continue training exactly where it stopped.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub model: GatModel,
    pub adam: AdamState,
    /// Epochs completed so far.
    pub epoch: usize,
    pub best: Option<BestModel>,
    pub history: Vec<EpochRecord>,
}

#[derive(Clone, Debug)]
pub struct BestModel {
    pub model: GatModel,
    pub epoch: usize,
    pub test_loss: f64,
}

impl TrainState {
    pub fn new(model: GatModel) -> Self {
        let params: Vec<&Tensor> = model.params().iter().map(|(_, t)| *t).collect();
        let adam = Adam::new(AdamConfig::default(), &params).state;
        Self {
            model,
            adam,
            epoch: 0,
            best: None,
            history: Vec::new(),
        }
    }

    /// Best model by test loss, or the current one before any epoch ran.
    pub fn best_model(&self) -> &GatModel {
        self.best.as_ref().map_or(&self.model, |b| &b.model)
    }
}

/// Loss of a frozen model on one instance.
pub fn instance_loss(model: &GatModel, inst: &GraphInstance, p: &PowerParams, lc: &LossConfig) -> Result<f64> {
    let mut g = Graph::new();
    let vars = model.bind(&mut g, false);
    let s = model.forward(&mut g, &vars, inst)?;
    let prb = g.constant(inst.prb_matrix.clone());
    let l = loss(&mut g, s, prb, p, lc, inst.n_prb_total)?;
    Ok(g.value(l).item())
}

pub fn mean_loss(model: &GatModel, data: &[GraphInstance], p: &PowerParams, lc: &LossConfig) -> Result<f64> {
    if data.is_empty() {
        return Ok(f64::NAN);
    }
    let mut total = 0.0;
    for inst in data {
        total += instance_loss(model, inst, p, lc)?;
    }
    Ok(total / data.len() as f64)
}

/// One forward/backward/Adam step on a single instance; returns the loss.
pub fn train_step(
    model: &mut GatModel,
    adam: &mut Adam,
    inst: &GraphInstance,
    p: &PowerParams,
    lc: &LossConfig,
) -> Result<f64> {
    let mut g = Graph::new();
    let vars = model.bind(&mut g, true);
    let s = model.forward(&mut g, &vars, inst)?;
    let prb = g.constant(inst.prb_matrix.clone());
    let l = loss(&mut g, s, prb, p, lc, inst.n_prb_total)?;
    let value = g.value(l).item();
    if !value.is_finite() {
        return Ok(value);
    }
    g.backward(l)?;
    let grads: Vec<Tensor> = vars
        .as_array()
        .iter()
        .map(|&v| g.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(g.value(v).shape())))
        .collect();
    let grad_refs: Vec<&Tensor> = grads.iter().collect();
    adam.step(&mut model.params_mut(), &grad_refs)?;
    Ok(value)
}

fn epoch_order(n: usize, shuffle_seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
    rng.set_stream(epoch as u64 + 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// Runs epochs `state.epoch .. tc.epochs`, calling `on_epoch` after each.
///
/// The shuffle of every epoch is a pure function of `(shuffle_seed, epoch)`,
/// so resuming from a saved state replays exactly what an uninterrupted run
/// would have done.
pub fn train_from(
    mut state: TrainState,
    data: &PreparedDataset,
    tc: &TrainConfig,
    p: &PowerParams,
    mut on_epoch: impl FnMut(&TrainState) -> Result<()>,
) -> Result<TrainState> {
    tc.validate()?;
    p.validate()?;
    if data.train.is_empty() {
        return Err(Error::Argument("training split is empty".into()));
    }
    if let Some(bad) = data
        .train
        .iter()
        .chain(&data.test)
        .find(|g| g.n_cells() != state.model.n_cells)
    {
        return Err(Error::Contract(format!(
            "instance with {} cells in a dataset for {} cells",
            bad.n_cells(),
            state.model.n_cells
        )));
    }
    let lc = tc.loss();
    let mut adam = Adam::with_state(tc.adam(), std::mem::take(&mut state.adam));
    if adam.state.first_moment.is_empty() {
        let params: Vec<&Tensor> = state.model.params().iter().map(|(_, t)| *t).collect();
        adam = Adam::new(tc.adam(), &params);
    }

    while state.epoch < tc.epochs {
        let epoch = state.epoch;
        let mut total = 0.0;
        for idx in epoch_order(data.train.len(), tc.shuffle_seed, epoch) {
            let l = train_step(&mut state.model, &mut adam, &data.train[idx], p, &lc)?;
            if !l.is_finite() || !state.model.is_finite() {
                return Err(Error::NonFinite {
                    epoch,
                    instance: idx,
                    value: l,
                });
            }
            total += l;
        }
        let mean_train_loss = total / data.train.len() as f64;
        let mean_test_loss = mean_loss(&state.model, &data.test, p, &lc)?;
        state.history.push(EpochRecord {
            epoch,
            mean_train_loss,
            mean_test_loss,
            lr: tc.lr,
        });
        // Without a test split the train loss selects the best model.
        let score = if data.test.is_empty() {
            mean_train_loss
        } else {
            mean_test_loss
        };
        if state.best.as_ref().is_none_or(|b| score < b.test_loss) {
            state.best = Some(BestModel {
                model: state.model.clone(),
                epoch,
                test_loss: score,
            });
        }
        state.epoch += 1;
        state.adam = adam.state.clone();
        on_epoch(&state)?;
    }
    state.adam = adam.state;
    Ok(state)
}

pub fn train(model: GatModel, data: &PreparedDataset, tc: &TrainConfig, p: &PowerParams) -> Result<TrainState> {
    train_from(TrainState::new(model), data, tc, p, |_| Ok(()))
}
