//! On-disk formats: line-delimited dataset records, JSON checkpoints,
//! resumable training state and the per-epoch history CSV.
//!
//! Floats are written in shortest round-trip form, so every value reads back
//! bit-identical.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamState, Tensor};
use crate::error::{Error, Result};
use crate::evaluate::csv_err;
use crate::gat::{GatConfig, GatLayerParams, GatModel, PARAM_NAMES};
use crate::scenario::{GraphInstance, NormStats, Scenario};
use crate::training::{BestModel, EpochRecord, TrainState};

/// One scenario and its raw graph, as stored in a dataset file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub seed: u64,
    /// Digest of the scenario configuration that produced the record.
    pub config_digest: String,
    pub n_prb_total: u32,
    pub prb_bandwidth_hz: f64,
    pub demand_mbps: f64,
    pub reuse_group: Vec<usize>,
    pub bs_xy: Vec<[f64; 2]>,
    pub ue_xy: Vec<[f64; 2]>,
    pub dist_m: Vec<Vec<f64>>,
    pub sinr_db: Vec<Vec<f64>>,
    /// `[k][n][prb]`.
    pub sinr_prb_db: Vec<Vec<Vec<f64>>>,
    pub rsrp_dbm: Vec<Vec<f64>>,
    pub prb: Vec<Vec<u32>>,
    pub adj: Vec<Vec<u8>>,
    pub feat: Vec<Vec<f64>>,
}

fn nested(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
}

fn flat(rows: &[Vec<f64>], cols: usize, what: &str) -> Result<Tensor> {
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Contract(format!("ragged {what} in dataset record")));
    }
    Tensor::matrix(rows.len(), cols, rows.concat())
}

impl DatasetRecord {
    pub fn new(s: &Scenario, g: &GraphInstance, config_digest: &str) -> Self {
        let (k, n) = (s.n_ues, s.n_cells);
        Self {
            seed: s.seed,
            config_digest: config_digest.to_string(),
            n_prb_total: s.n_prb_total,
            prb_bandwidth_hz: s.prb_bandwidth_hz,
            demand_mbps: s.demand_mbps,
            reuse_group: s.reuse_group.clone(),
            bs_xy: s.bs_positions.clone(),
            ue_xy: s.ue_positions.clone(),
            dist_m: nested(&s.distance),
            sinr_db: nested(&s.sinr_wideband_db),
            sinr_prb_db: (0..k)
                .map(|i| (0..n).map(|j| s.sinr_prb_db(i, j).to_vec()).collect())
                .collect(),
            rsrp_dbm: nested(&s.rsrp_dbm),
            prb: (0..k).map(|i| (0..n).map(|j| s.prb(i, j)).collect()).collect(),
            adj: (0..k).map(|i| (0..k).map(|j| g.edge(i, j) as u8).collect()).collect(),
            feat: nested(&g.features),
        }
    }

    pub fn scenario(&self) -> Result<Scenario> {
        let (k, n) = (self.ue_xy.len(), self.bs_xy.len());
        let b = self.n_prb_total as usize;
        let mut sinr_per_prb_db = Vec::with_capacity(k * n * b);
        for row in &self.sinr_prb_db {
            for cell in row {
                if cell.len() != b {
                    return Err(Error::Contract("per-PRB SINR has the wrong length".into()));
                }
                sinr_per_prb_db.extend_from_slice(cell);
            }
        }
        if sinr_per_prb_db.len() != k * n * b || self.prb.iter().any(|r| r.len() != n) {
            return Err(Error::Contract(format!("record {} has inconsistent sizes", self.seed)));
        }
        Ok(Scenario {
            seed: self.seed,
            n_cells: n,
            n_ues: k,
            n_prb_total: self.n_prb_total,
            prb_bandwidth_hz: self.prb_bandwidth_hz,
            demand_mbps: self.demand_mbps,
            reuse_group: self.reuse_group.clone(),
            bs_positions: self.bs_xy.clone(),
            ue_positions: self.ue_xy.clone(),
            distance: flat(&self.dist_m, n, "dist_m")?,
            sinr_wideband_db: flat(&self.sinr_db, n, "sinr_db")?,
            sinr_per_prb_db,
            rsrp_dbm: flat(&self.rsrp_dbm, n, "rsrp_dbm")?,
            prb_demand: self.prb.concat(),
        })
    }

    pub fn graph(&self) -> Result<GraphInstance> {
        let (k, n) = (self.ue_xy.len(), self.bs_xy.len());
        if self.adj.len() != k || self.adj.iter().any(|r| r.len() != k) {
            return Err(Error::Contract(format!(
                "record {} has a malformed adjacency",
                self.seed
            )));
        }
        let prb: Vec<Vec<f64>> = self.prb.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
        Ok(GraphInstance {
            features: flat(&self.feat, 3 * n, "feat")?,
            adjacency: self.adj.iter().flatten().map(|&e| e != 0).collect(),
            prb_matrix: flat(&prb, n, "prb")?,
            n_prb_total: self.n_prb_total,
            scenario_seed: self.seed,
        })
    }
}

pub fn write_dataset(path: &Path, records: &[DatasetRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Vec<DatasetRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// Sidecar describing a dataset file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub config_digest: String,
    pub seed: u64,
    pub records: usize,
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Model parameters, hyperparameters and the normalization they expect.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    #[serde(rename = "gat.hidden")]
    pub hidden: usize,
    #[serde(rename = "gat.negative_slope")]
    pub negative_slope: f64,
    #[serde(rename = "gat.heads")]
    pub heads: usize,
    #[serde(rename = "gat.config")]
    pub config: GatConfig,
    #[serde(rename = "gat.n_cells")]
    pub n_cells: usize,
    pub epoch: usize,
    pub norm: Option<NormStats>,
    pub params: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn new(model: &GatModel, epoch: usize, norm: Option<&NormStats>) -> Self {
        Self {
            hidden: model.config.hidden,
            negative_slope: model.config.negative_slope,
            heads: model.config.heads,
            config: model.config.clone(),
            n_cells: model.n_cells,
            epoch,
            norm: norm.cloned(),
            params: model
                .params()
                .iter()
                .map(|(name, t)| NamedTensor {
                    name: name.to_string(),
                    shape: t.shape().to_vec(),
                    values: t.data().to_vec(),
                })
                .collect(),
        }
    }

    pub fn model(&self) -> Result<GatModel> {
        let mut model = GatModel::new(self.config.clone(), self.n_cells)?;
        for (slot, name) in PARAM_NAMES.iter().enumerate() {
            let stored = self
                .params
                .iter()
                .find(|t| t.name == *name)
                .ok_or_else(|| Error::Contract(format!("checkpoint lacks parameter {name}")))?;
            let target = &mut model.params_mut()[slot];
            if stored.shape != target.shape() {
                return Err(Error::Shape {
                    op: "Checkpoint::model",
                    lhs: stored.shape.clone(),
                    rhs: target.shape().to_vec(),
                });
            }
            **target = Tensor::new(stored.shape.clone(), stored.values.clone())?;
        }
        let slope = model.config.negative_slope;
        let fix = |l: &mut GatLayerParams| l.negative_slope = slope;
        fix(&mut model.layer1);
        fix(&mut model.layer2);
        Ok(model)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

pub fn save_checkpoint(path: &Path, model: &GatModel, epoch: usize, norm: Option<&NormStats>) -> Result<()> {
    write_json(path, &Checkpoint::new(model, epoch, norm))
}

pub fn load_checkpoint(path: &Path) -> Result<(GatModel, Checkpoint)> {
    let ck: Checkpoint = read_json(path)?;
    Ok((ck.model()?, ck))
}

pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    if history.is_empty() {
        w.write_record(["epoch", "mean_train_loss", "mean_test_loss", "lr"])
            .map_err(csv_err)?;
    }
    for h in history {
        w.serialize(h).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_history(path: &Path) -> Result<Vec<EpochRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().collect::<Result<_, _>>().map_err(csv_err)
}

/// Everything besides the model weights needed to resume training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResumeState {
    pub epoch: usize,
    pub adam: AdamState,
    pub best_epoch: Option<usize>,
    pub best_test_loss: Option<f64>,
    pub history: Vec<EpochRecord>,
}

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const BEST_FILE: &str = "best.json";
pub const STATE_FILE: &str = "train_state.json";
pub const HISTORY_FILE: &str = "history.csv";

/// Writes current weights, best weights, optimizer state and history into `dir`.
pub fn save_train_state(dir: &Path, state: &TrainState, norm: &NormStats) -> Result<()> {
    fs::create_dir_all(dir)?;
    save_checkpoint(&dir.join(CHECKPOINT_FILE), &state.model, state.epoch, Some(norm))?;
    if let Some(b) = &state.best {
        save_checkpoint(&dir.join(BEST_FILE), &b.model, b.epoch, Some(norm))?;
    }
    write_history(&dir.join(HISTORY_FILE), &state.history)?;
    write_json(
        &dir.join(STATE_FILE),
        &ResumeState {
            epoch: state.epoch,
            adam: state.adam.clone(),
            best_epoch: state.best.as_ref().map(|b| b.epoch),
            best_test_loss: state.best.as_ref().map(|b| b.test_loss),
            history: state.history.clone(),
        },
    )
}

pub fn load_train_state(dir: &Path) -> Result<TrainState> {
    let (model, _) = load_checkpoint(&dir.join(CHECKPOINT_FILE))?;
    let rs: ResumeState = read_json(&dir.join(STATE_FILE))?;
    let best = match (rs.best_epoch, rs.best_test_loss) {
        (Some(epoch), Some(test_loss)) => Some(BestModel {
            model: load_checkpoint(&dir.join(BEST_FILE))?.0,
            epoch,
            test_loss,
        }),
        _ => None,
    };
    Ok(TrainState {
        model,
        adam: rs.adam,
        epoch: rs.epoch,
        best,
        history: rs.history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gat::GatConfig;
    use crate::power::PowerParams;
    use crate::scenario::{build_graph, generate_scenario, ScenarioConfig};
    use crate::training::{prepare_dataset, train, TrainConfig};

    #[test]
    fn dataset_records_round_trip_exactly() {
        let cfg = ScenarioConfig {
            n_ues: 7,
            ..ScenarioConfig::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let scenarios: Vec<Scenario> = (0..3).map(|i| generate_scenario(&cfg, i).unwrap()).collect();
        let records: Vec<DatasetRecord> = scenarios
            .iter()
            .map(|s| DatasetRecord::new(s, &build_graph(s, cfg.gamma_th_db), "abc"))
            .collect();
        write_dataset(&path, &records).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        for key in [
            "seed",
            "bs_xy",
            "ue_xy",
            "sinr_db",
            "sinr_prb_db",
            "rsrp_dbm",
            "prb",
            "adj",
            "feat",
        ] {
            assert!(first.get(key).is_some(), "missing {key}");
        }
        let back = read_dataset(&path).unwrap();
        for (r, s) in back.iter().zip(&scenarios) {
            assert_eq!(&r.scenario().unwrap(), s);
            assert_eq!(r.graph().unwrap(), build_graph(s, cfg.gamma_th_db));
        }
    }

    #[test]
    fn checkpoint_round_trips_and_uses_fixed_names() {
        let m = GatModel::new(
            GatConfig {
                hidden: 6,
                init_seed: 11,
                ..GatConfig::default()
            },
            3,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        save_checkpoint(&path, &m, 4, None).unwrap();
        let (back, ck) = load_checkpoint(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(ck.epoch, 4);
        let names: Vec<&str> = ck.params.iter().map(|t| t.name.as_str()).collect();
        assert_eq!(names, PARAM_NAMES);
        let raw: serde_json::Value = read_json(&path).unwrap();
        assert_eq!(raw["gat.hidden"], 6);
        assert_eq!(raw["params"][0]["shape"], serde_json::json!([6, 9]));
    }

    #[test]
    fn checkpoint_rejects_wrong_shapes() {
        let m = GatModel::new(
            GatConfig {
                hidden: 4,
                ..GatConfig::default()
            },
            2,
        )
        .unwrap();
        let mut ck = Checkpoint::new(&m, 0, None);
        ck.params[4].shape = vec![2, 4];
        assert!(ck.model().is_err());
        ck.params.pop();
        assert!(ck.model().is_err());
    }

    #[test]
    fn train_state_resume_matches_uninterrupted_run() {
        let cfg = ScenarioConfig {
            n_ues: 5,
            n_cells: 3,
            ..ScenarioConfig::default()
        };
        let data = prepare_dataset(&cfg, 6, 0.5, 0, 0).unwrap();
        let model = GatModel::new(
            GatConfig {
                hidden: 8,
                ..GatConfig::default()
            },
            3,
        )
        .unwrap();
        let p = PowerParams::default();
        let tc = |epochs| TrainConfig {
            epochs,
            lr: 1e-3,
            ..TrainConfig::default()
        };
        let full = train(model.clone(), &data, &tc(4), &p).unwrap();
        let half = train(model, &data, &tc(2), &p).unwrap();

        let dir = tempfile::tempdir().unwrap();
        save_train_state(dir.path(), &half, &data.norm).unwrap();
        let loaded = load_train_state(dir.path()).unwrap();
        assert_eq!(read_history(&dir.path().join(HISTORY_FILE)).unwrap(), half.history);
        let resumed = crate::training::train_from(loaded, &data, &tc(4), &p, |_| Ok(())).unwrap();
        assert_eq!(resumed.history, full.history);
        assert_eq!(resumed.model, full.model);
    }

    #[test]
    fn empty_history_still_has_a_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.csv");
        write_history(&path, &[]).unwrap();
        assert_eq!(
            fs::read_to_string(&path).unwrap().trim(),
            "epoch,mean_train_loss,mean_test_loss,lr"
        );
        assert!(read_history(&path).unwrap().is_empty());
    }
}
