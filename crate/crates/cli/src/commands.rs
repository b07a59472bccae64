use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use nesua_core::evaluate::{
    export_heatmaps, mean_stderr, write_comparison_csv, GridPoint, InstanceComparison, SweepRow,
};
use nesua_core::experiment::{
    compare_on, generate_samples, grid_points, split_samples, RunConfig, Sample, SplitSamples, SweepKind,
};
use nesua_core::io::{
    load_checkpoint, load_train_state, read_dataset, read_json, save_train_state, write_dataset, write_json,
    DatasetManifest, DatasetRecord, BEST_FILE, CHECKPOINT_FILE, STATE_FILE,
};
use nesua_core::training::{train_from, TrainState};
use nesua_core::{Error, GatModel, PolicyReport, Result, SweepResult};
use serde::{Deserialize, Serialize};

use crate::config;

pub const DATASET_FILE: &str = "dataset.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const RUN_FILE: &str = "run.json";
pub const COMPARISON_FILE: &str = "comparison.csv";
pub const REPORTS_FILE: &str = "reports.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const ROW_FILE: &str = "row.csv";

pub fn gen(cfg: &RunConfig) -> Result<()> {
    config::write_effective(cfg)?;
    let digest = config::dataset_digest(cfg)?;
    let samples = generate_samples(&cfg.scenario, cfg.train.dataset_size, cfg.seed)?;
    let records: Vec<DatasetRecord> = samples
        .iter()
        .map(|s| DatasetRecord::new(&s.scenario, &s.graph, &digest))
        .collect();
    let path = cfg.out_dir.join(DATASET_FILE);
    write_dataset(&path, &records)?;
    write_json(
        &cfg.out_dir.join(MANIFEST_FILE),
        &DatasetManifest {
            config_digest: digest,
            seed: cfg.seed,
            records: records.len(),
            file: DATASET_FILE.into(),
        },
    )?;
    println!("wrote {} scenarios to {}", records.len(), path.display());
    Ok(())
}

fn load_samples(cfg: &RunConfig, dataset: Option<&Path>) -> Result<Vec<Sample>> {
    let Some(path) = dataset else {
        return generate_samples(&cfg.scenario, cfg.train.dataset_size, cfg.seed);
    };
    let records = read_dataset(path)?;
    let digest = config::dataset_digest(cfg)?;
    if records.iter().any(|r| r.config_digest != digest) {
        eprintln!("note: {} was generated from a different configuration", path.display());
    }
    let samples = records
        .iter()
        .map(|r| {
            Ok(Sample {
                scenario: r.scenario()?,
                graph: r.graph()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(s) = samples.iter().find(|s| s.scenario.n_cells != cfg.scenario.n_cells) {
        return Err(Error::Config(format!(
            "dataset has {} cells but scenario.n_cells is {}",
            s.scenario.n_cells, cfg.scenario.n_cells
        )));
    }
    Ok(samples)
}

#[derive(Debug, Serialize, Deserialize)]
struct RunMarker {
    training_digest: String,
}

/// Trains into `dir`, resuming from the state found there if it belongs to
/// the same configuration and data.
fn train_in_dir(cfg: &RunConfig, samples: &[Sample], dir: &Path, log: bool) -> Result<(TrainState, SplitSamples)> {
    let split = split_samples(samples, &cfg.train)?;
    let digest = {
        let norm = serde_json::to_string(&split.data.norm)?;
        config::sha256_hex(format!("{}{norm}", config::training_digest(cfg)?).as_bytes())
    };
    let marker = dir.join(RUN_FILE);
    let state = if dir.join(STATE_FILE).exists() {
        let prev: RunMarker = read_json(&marker)?;
        if prev.training_digest != digest {
            return Err(Error::Config(format!(
                "{} holds a run with a different configuration or dataset",
                dir.display()
            )));
        }
        let state = load_train_state(dir)?;
        if log {
            eprintln!("resuming at epoch {}", state.epoch);
        }
        state
    } else {
        TrainState::new(GatModel::new(cfg.gat.clone(), cfg.scenario.n_cells)?)
    };
    fs::create_dir_all(dir)?;
    write_json(
        &marker,
        &RunMarker {
            training_digest: digest,
        },
    )?;

    let norm = split.data.norm.clone();
    let (epochs, every) = (cfg.train.epochs, cfg.train.checkpoint_every);
    let stride = (epochs / 20).max(1);
    let state = train_from(state, &split.data, &cfg.train, &cfg.power, |s| {
        if log && (s.epoch % stride == 0 || s.epoch == epochs) {
            if let Some(h) = s.history.last() {
                eprintln!(
                    "epoch {:>6}  train {:.6e}  test {:.6e}",
                    h.epoch, h.mean_train_loss, h.mean_test_loss
                );
            }
        }
        if every > 0 && s.epoch % every == 0 {
            save_train_state(dir, s, &norm)?;
        }
        Ok(())
    })?;
    save_train_state(dir, &state, &norm)?;
    Ok((state, split))
}

pub fn train(cfg: &RunConfig, dataset: Option<&Path>) -> Result<()> {
    let samples = load_samples(cfg, dataset)?;
    let (state, _) = train_in_dir(cfg, &samples, &cfg.out_dir, true)?;
    config::write_effective(cfg)?;
    match &state.best {
        Some(b) => println!(
            "trained {} epochs; best epoch {} (loss {:.6e}) in {}",
            state.epoch,
            b.epoch,
            b.test_loss,
            cfg.out_dir.join(BEST_FILE).display()
        ),
        None => println!(
            "no epochs run; initial weights in {}",
            cfg.out_dir.join(CHECKPOINT_FILE).display()
        ),
    }
    Ok(())
}

/// Aggregate of one policy over the evaluated instances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: String,
    pub instances: usize,
    pub mean_w: f64,
    pub stderr_w: f64,
    pub mean_switched_off: f64,
    pub overload_rate: f64,
    pub rate_constraint_met_rate: f64,
}

fn summarize_policies(cmp: &[InstanceComparison]) -> Vec<PolicySummary> {
    let pick: [(&str, fn(&InstanceComparison) -> Option<&PolicyReport>); 4] = [
        ("gnn", |c| c.gnn.as_ref()),
        ("rsrp", |c| Some(&c.rsrp)),
        ("ga_subsinr", |c| Some(&c.ga_subsinr)),
        ("oracle", |c| c.oracle.as_ref()),
    ];
    pick.iter()
        .filter_map(|(name, f)| {
            let reports: Vec<&PolicyReport> = cmp.iter().map(f).collect::<Option<_>>()?;
            if reports.is_empty() {
                return None;
            }
            let n = reports.len() as f64;
            let power: Vec<f64> = reports.iter().map(|r| r.total_w).collect();
            let (mean_w, stderr_w) = mean_stderr(&power);
            Some(PolicySummary {
                policy: name.to_string(),
                instances: reports.len(),
                mean_w,
                stderr_w,
                mean_switched_off: reports.iter().map(|r| r.switched_off_count() as f64).sum::<f64>() / n,
                overload_rate: reports.iter().filter(|r| r.any_overload()).count() as f64 / n,
                rate_constraint_met_rate: reports.iter().filter(|r| r.rate_constraint_met).count() as f64 / n,
            })
        })
        .collect()
}

pub fn eval(cfg: &RunConfig, checkpoint: Option<&Path>, dataset: Option<&Path>) -> Result<()> {
    config::write_effective(cfg)?;
    let samples = load_samples(cfg, dataset)?;
    let split = split_samples(&samples, &cfg.train)?;
    let loaded = checkpoint.map(load_checkpoint).transpose()?;
    let norm = loaded
        .as_ref()
        .and_then(|(_, ck)| ck.norm.clone())
        .unwrap_or_else(|| split.data.norm.clone());
    let idx = if split.test_idx.is_empty() {
        split.train_idx.clone()
    } else {
        split.test_idx.clone()
    };
    let model = loaded.as_ref().map(|(m, _)| m);
    let cmp = compare_on(model, &samples, &idx, &norm, &cfg.power, &cfg.eval)?;

    let out = &cfg.out_dir;
    write_comparison_csv(&out.join(COMPARISON_FILE), &cmp)?;
    write_json(&out.join(REPORTS_FILE), &cmp)?;
    let summary = summarize_policies(&cmp);
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    if let (Some(&first), Some(c)) = (idx.first(), cmp.first()) {
        let reports: Vec<PolicyReport> = c.reports().into_iter().cloned().collect();
        export_heatmaps(&samples[first].scenario, &reports, &out.join("heatmaps"))?;
    }

    println!(
        "{:<12} {:>9} {:>14} {:>10} {:>10}",
        "policy", "instances", "mean power W", "stderr", "off"
    );
    for s in &summary {
        println!(
            "{:<12} {:>9} {:>14.3} {:>10.3} {:>10.3}",
            s.policy, s.instances, s.mean_w, s.stderr_w, s.mean_switched_off
        );
    }
    Ok(())
}

fn worker_count(jobs: usize) -> Result<usize> {
    let cap = match std::env::var("NESUA_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Config(format!("NESUA_THREADS must be a positive integer, got {v:?}")))?,
        Err(_) => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    Ok(cap.min(jobs).max(1))
}

fn run_sweep_point(kind: SweepKind, at: &GridPoint, cfg: &RunConfig) -> Result<SweepRow> {
    let dir = &cfg.out_dir;
    let row_path = dir.join(ROW_FILE);
    if row_path.exists() {
        if let Some(row) = SweepResult::read_csv(kind.name(), &row_path)?.rows.pop() {
            eprintln!("{}: already complete", at.label);
            return Ok(row);
        }
    }
    fs::create_dir_all(dir)?;
    fs::write(dir.join(config::EFFECTIVE_CONFIG), config::to_toml(cfg)?)?;
    let samples = generate_samples(&cfg.scenario, cfg.train.dataset_size, cfg.seed)?;
    let (state, split) = train_in_dir(cfg, &samples, dir, false)?;
    let cmp = compare_on(
        Some(state.best_model()),
        &samples,
        &split.test_idx,
        &split.data.norm,
        &cfg.power,
        &cfg.eval,
    )?;
    write_comparison_csv(&dir.join(COMPARISON_FILE), &cmp)?;
    let row = SweepRow::summarize(at, &cmp)?;
    SweepResult {
        variable: kind.name().into(),
        rows: vec![row.clone()],
    }
    .write_csv(&row_path)?;
    eprintln!("{}: done", at.label);
    Ok(row)
}

pub fn sweep(cfg: &RunConfig, kind: SweepKind, grid: Option<Vec<f64>>) -> Result<()> {
    let grid = grid.unwrap_or_else(|| match kind {
        SweepKind::Bandwidth => cfg.eval.bandwidth_grid_mhz.clone(),
        SweepKind::Lambda => cfg.eval.lambda_ratio_grid.clone(),
    });
    let mut points = grid_points(kind, cfg, &grid)?;
    for (at, c) in &mut points {
        c.out_dir = cfg.out_dir.join(&at.label);
    }
    config::write_effective(cfg)?;

    let results: Vec<Mutex<Option<Result<SweepRow>>>> = points.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| -> Result<()> {
        for _ in 0..worker_count(points.len())? {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some((at, c)) = points.get(i) else { break };
                let r = run_sweep_point(kind, at, c);
                if let Err(e) = &r {
                    eprintln!("{}: failed: {e}", at.label);
                }
                *results[i].lock().unwrap_or_else(|p| p.into_inner()) = Some(r);
            });
        }
        Ok(())
    })?;

    let mut first_err = None;
    let rows = points
        .iter()
        .zip(results)
        .map(
            |((at, _), slot)| match slot.into_inner().unwrap_or_else(|p| p.into_inner()) {
                Some(Ok(row)) => row,
                Some(Err(e)) => {
                    let row = SweepRow::missing(at, &e.to_string());
                    first_err.get_or_insert(e);
                    row
                }
                None => SweepRow::missing(at, "not run"),
            },
        )
        .collect();
    let result = SweepResult {
        variable: kind.name().into(),
        rows,
    };
    let unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let path: PathBuf = result.default_path(&cfg.out_dir, unix);
    result.write_csv(&path)?;

    println!(
        "{:<14} {:>8} {:>12} {:>12} {:>12} {:>8}",
        "point", "status", "gnn W", "rsrp W", "ga W", "off"
    );
    for r in &result.rows {
        println!(
            "{:<14} {:>8} {:>12.3} {:>12.3} {:>12.3} {:>8.3}",
            r.point,
            if r.is_missing() { "missing" } else { "ok" },
            r.gnn_w_mean,
            r.rsrp_w_mean,
            r.ga_subsinr_w_mean,
            r.switch_off_mean
        );
    }
    println!("wrote {}", path.display());
    match first_err {
        Some(e) => Err(e),
        None => Ok(()),
    }
}
