//! Policy metrics, per-instance comparisons, sweep tables and CSV export.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{
    associate_ga_subsinr, associate_oracle, associate_rsrp, search_space, HardAssociation, SubSinrAggregation,
    DEFAULT_ORACLE_BUDGET,
};
use crate::error::{Error, Result};
use crate::gat::{harden, GatModel};
use crate::power::{network_power_assigned, PowerParams};
use crate::scenario::{GraphInstance, Scenario};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub subsinr_agg: SubSinrAggregation,
    /// Largest `N^K` the exhaustive oracle will enumerate.
    pub oracle_budget: u64,
    /// Cells whose UEs carry guaranteed-bit-rate traffic; `None` marks every UE.
    pub gbr_cells: Option<Vec<usize>>,
    /// UE counts crossed with the bandwidth grid in a bandwidth sweep.
    pub sweep_ues: Vec<usize>,
    pub bandwidth_grid_mhz: Vec<f64>,
    /// `lambda2 / lambda1` values of a lambda sweep; `lambda1` stays fixed.
    pub lambda_ratio_grid: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            subsinr_agg: SubSinrAggregation::Max,
            oracle_budget: DEFAULT_ORACLE_BUDGET,
            gbr_cells: None,
            sweep_ues: vec![20, 50],
            bandwidth_grid_mhz: vec![20.0, 40.0, 80.0],
            lambda_ratio_grid: vec![0.0, 1.0, 10.0, 100.0, 1000.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyReport {
    pub policy: String,
    pub total_w: f64,
    pub cell_power_w: Vec<f64>,
    pub cell_load_prb: Vec<f64>,
    pub switched_off: Vec<usize>,
    pub overloaded: Vec<usize>,
    /// Aggregate served rate in bit/s.
    pub served_bps: f64,
    /// Guaranteed-bit-rate demand the network must carry, bit/s.
    pub min_rate_bps: f64,
    pub rate_constraint_met: bool,
    pub assignment: Vec<usize>,
}

impl PolicyReport {
    pub fn switched_off_count(&self) -> usize {
        self.switched_off.len()
    }

    pub fn any_overload(&self) -> bool {
        !self.overloaded.is_empty()
    }

    pub fn rate_margin_bps(&self) -> f64 {
        self.served_bps - self.min_rate_bps
    }
}

/// Hard power, switch-off set and served throughput of one association.
///
/// A cell asked for `p_hat > N_PRB` PRBs scales all its UEs' rates by
/// `N_PRB / p_hat`.
pub fn evaluate_policy(
    name: &str,
    assoc: &HardAssociation,
    s: &Scenario,
    p: &PowerParams,
    gbr_cells: Option<&[usize]>,
) -> Result<PolicyReport> {
    if assoc.assignment.len() != s.n_ues || assoc.n_cells != s.n_cells {
        return Err(Error::Shape {
            op: "evaluate_policy",
            lhs: vec![assoc.assignment.len(), assoc.n_cells],
            rhs: vec![s.n_ues, s.n_cells],
        });
    }
    let np = network_power_assigned(&assoc.assignment, &s.prb_matrix(), p, s.n_prb_total)?;
    let total_prb = s.n_prb_total as f64;
    let demand_bps = s.demand_mbps * 1e6;
    let served_bps = assoc
        .assignment
        .iter()
        .map(|&n| {
            let load = np.cells[n].load_prb;
            demand_bps * if load > total_prb { total_prb / load } else { 1.0 }
        })
        .sum();
    let gbr_ues = match gbr_cells {
        None => s.n_ues,
        Some(cells) => assoc.assignment.iter().filter(|n| cells.contains(n)).count(),
    };
    let min_rate_bps = gbr_ues as f64 * demand_bps;
    let indices = |f: &dyn Fn(usize) -> bool| (0..s.n_cells).filter(|&n| f(n)).collect();
    Ok(PolicyReport {
        policy: name.to_string(),
        total_w: np.total_w,
        cell_power_w: np.cells.iter().map(|c| c.power_w).collect(),
        cell_load_prb: np.cells.iter().map(|c| c.load_prb).collect(),
        switched_off: indices(&|n| !np.cells[n].active),
        overloaded: indices(&|n| np.cells[n].overload),
        served_bps,
        min_rate_bps,
        rate_constraint_met: served_bps >= min_rate_bps,
        assignment: assoc.assignment.clone(),
    })
}

/// `100 (p_base - p_gnn) / p_base`.
pub fn gain_percent(p_gnn: f64, p_base: f64) -> Result<f64> {
    if !(p_base > 0.0) {
        return Err(Error::Argument(format!("baseline power {p_base} must be positive")));
    }
    Ok(100.0 * (p_base - p_gnn) / p_base)
}

pub const GNN: &str = "gnn";
pub const RSRP: &str = "rsrp";
pub const GA_SUBSINR: &str = "ga_subsinr";
pub const ORACLE: &str = "oracle";

/// All policies on one scenario; `oracle` is absent when `N^K` exceeds the budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceComparison {
    pub scenario_seed: u64,
    pub gnn: Option<PolicyReport>,
    pub rsrp: PolicyReport,
    pub ga_subsinr: PolicyReport,
    pub oracle: Option<PolicyReport>,
}

impl InstanceComparison {
    pub fn reports(&self) -> Vec<&PolicyReport> {
        let mut out = Vec::with_capacity(4);
        out.extend(self.gnn.as_ref());
        out.push(&self.rsrp);
        out.push(&self.ga_subsinr);
        out.extend(self.oracle.as_ref());
        out
    }
}

/// Runs the baselines, the oracle when affordable and, given a model and the
/// normalized graph of `s`, the hardened GNN.
pub fn compare_policies(
    s: &Scenario,
    gnn: Option<(&GatModel, &GraphInstance)>,
    p: &PowerParams,
    cfg: &EvalConfig,
) -> Result<InstanceComparison> {
    let gbr = cfg.gbr_cells.as_deref();
    let gnn = match gnn {
        Some((model, graph)) => {
            let assoc = model.infer(graph)?.harden();
            Some(evaluate_policy(GNN, &assoc, s, p, gbr)?)
        }
        None => None,
    };
    let oracle = if search_space(s.n_cells, s.n_ues) <= cfg.oracle_budget as f64 {
        let r = associate_oracle(s, p, cfg.oracle_budget)?;
        Some(evaluate_policy(ORACLE, &r.association, s, p, gbr)?)
    } else {
        None
    };
    Ok(InstanceComparison {
        scenario_seed: s.seed,
        gnn,
        rsrp: evaluate_policy(RSRP, &associate_rsrp(s), s, p, gbr)?,
        ga_subsinr: evaluate_policy(GA_SUBSINR, &associate_ga_subsinr(s, cfg.subsinr_agg), s, p, gbr)?,
        oracle,
    })
}

/// Mean hard power of the hardened model over graphs carrying their own PRB
/// matrices.
pub fn mean_hardened_power(model: &GatModel, graphs: &[GraphInstance], p: &PowerParams) -> Result<f64> {
    if graphs.is_empty() {
        return Err(Error::Argument("no instances to evaluate".into()));
    }
    let mut total = 0.0;
    for g in graphs {
        let assoc = harden(&model.infer(g)?.s);
        total += network_power_assigned(&assoc.assignment, &g.prb_matrix, p, g.n_prb_total)?.total_w;
    }
    Ok(total / graphs.len() as f64)
}

/// Sample mean and standard error of the mean (0 for fewer than 2 values).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// One grid point of a sweep. Fields stay `NaN`/empty when the point is missing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub point: String,
    pub status: String,
    pub bandwidth_mhz: f64,
    pub n_ues: usize,
    pub n_cells: usize,
    pub lambda_ratio: f64,
    pub instances: usize,
    pub gnn_w_mean: f64,
    pub gnn_w_se: f64,
    pub rsrp_w_mean: f64,
    pub rsrp_w_se: f64,
    pub ga_subsinr_w_mean: f64,
    pub ga_subsinr_w_se: f64,
    pub oracle_w_mean: Option<f64>,
    pub gain_vs_rsrp_mean: f64,
    pub gain_vs_rsrp_se: f64,
    pub gain_vs_ga_subsinr_mean: f64,
    pub gain_vs_ga_subsinr_se: f64,
    pub switch_off_mean: f64,
    pub switch_off_rate: f64,
    pub gnn_overload_rate: f64,
}

/// Grid coordinates of a sweep point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub label: String,
    pub bandwidth_mhz: f64,
    pub n_ues: usize,
    pub n_cells: usize,
    pub lambda_ratio: f64,
}

impl SweepRow {
    pub fn missing(at: &GridPoint, why: &str) -> Self {
        Self {
            point: at.label.clone(),
            status: format!("missing: {why}"),
            bandwidth_mhz: at.bandwidth_mhz,
            n_ues: at.n_ues,
            n_cells: at.n_cells,
            lambda_ratio: at.lambda_ratio,
            instances: 0,
            gnn_w_mean: f64::NAN,
            gnn_w_se: f64::NAN,
            rsrp_w_mean: f64::NAN,
            rsrp_w_se: f64::NAN,
            ga_subsinr_w_mean: f64::NAN,
            ga_subsinr_w_se: f64::NAN,
            oracle_w_mean: None,
            gain_vs_rsrp_mean: f64::NAN,
            gain_vs_rsrp_se: f64::NAN,
            gain_vs_ga_subsinr_mean: f64::NAN,
            gain_vs_ga_subsinr_se: f64::NAN,
            switch_off_mean: f64::NAN,
            switch_off_rate: f64::NAN,
            gnn_overload_rate: f64::NAN,
        }
    }

    pub fn is_missing(&self) -> bool {
        self.status != "ok"
    }

    /// Aggregates comparisons that all carry a GNN report.
    pub fn summarize(at: &GridPoint, cmp: &[InstanceComparison]) -> Result<Self> {
        if cmp.is_empty() {
            return Ok(Self::missing(at, "no test instances"));
        }
        let gnn: Vec<&PolicyReport> = cmp
            .iter()
            .map(|c| {
                c.gnn
                    .as_ref()
                    .ok_or_else(|| Error::Argument("comparison lacks a GNN report".into()))
            })
            .collect::<Result<_>>()?;
        let power = |f: &dyn Fn(usize) -> f64| (0..cmp.len()).map(f).collect::<Vec<_>>();
        let gnn_w = power(&|i| gnn[i].total_w);
        let rsrp_w = power(&|i| cmp[i].rsrp.total_w);
        let ga_w = power(&|i| cmp[i].ga_subsinr.total_w);
        let gains =
            |base: &[f64]| -> Result<Vec<f64>> { gnn_w.iter().zip(base).map(|(&g, &b)| gain_percent(g, b)).collect() };
        let (gain_rsrp, gain_ga) = (gains(&rsrp_w)?, gains(&ga_w)?);
        let off = power(&|i| gnn[i].switched_off_count() as f64);
        let oracle_w: Option<Vec<f64>> = cmp.iter().map(|c| c.oracle.as_ref().map(|o| o.total_w)).collect();

        let ((gm, gs), (rm, rs), (am, as_)) = (mean_stderr(&gnn_w), mean_stderr(&rsrp_w), mean_stderr(&ga_w));
        let ((grm, grs), (gam, gas)) = (mean_stderr(&gain_rsrp), mean_stderr(&gain_ga));
        let switch_off_mean = mean_stderr(&off).0;
        let overloads = gnn.iter().filter(|r| r.any_overload()).count();
        Ok(Self {
            point: at.label.clone(),
            status: "ok".into(),
            bandwidth_mhz: at.bandwidth_mhz,
            n_ues: at.n_ues,
            n_cells: at.n_cells,
            lambda_ratio: at.lambda_ratio,
            instances: cmp.len(),
            gnn_w_mean: gm,
            gnn_w_se: gs,
            rsrp_w_mean: rm,
            rsrp_w_se: rs,
            ga_subsinr_w_mean: am,
            ga_subsinr_w_se: as_,
            oracle_w_mean: oracle_w.map(|v| mean_stderr(&v).0),
            gain_vs_rsrp_mean: grm,
            gain_vs_rsrp_se: grs,
            gain_vs_ga_subsinr_mean: gam,
            gain_vs_ga_subsinr_se: gas,
            switch_off_mean,
            switch_off_rate: switch_off_mean / at.n_cells as f64,
            gnn_overload_rate: overloads as f64 / cmp.len() as f64,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// `bandwidth` or `lambda`.
    pub variable: String,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        for row in &self.rows {
            w.serialize(row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(variable: &str, path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
        let rows = r.deserialize().collect::<Result<Vec<SweepRow>, _>>().map_err(csv_err)?;
        Ok(Self {
            variable: variable.to_string(),
            rows,
        })
    }

    /// `sweep_<variable>_<unix seconds>.csv` inside `dir`.
    pub fn default_path(&self, dir: &Path, unix_seconds: u64) -> PathBuf {
        dir.join(format!("sweep_{}_{unix_seconds}.csv", self.variable))
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("{other:?}"),
        )),
    }
}

/// Per-comparison rows for an evaluation table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub scenario_seed: u64,
    pub gnn_w: Option<f64>,
    pub rsrp_w: f64,
    pub ga_subsinr_w: f64,
    pub oracle_w: Option<f64>,
    pub gain_vs_rsrp: Option<f64>,
    pub gain_vs_ga_subsinr: Option<f64>,
    pub gnn_switched_off: Option<usize>,
    pub gnn_overload: Option<bool>,
}

impl ComparisonRow {
    pub fn from_comparison(c: &InstanceComparison) -> Result<Self> {
        let gnn_w = c.gnn.as_ref().map(|r| r.total_w);
        let gain = |base: f64| gnn_w.map(|g| gain_percent(g, base)).transpose();
        Ok(Self {
            scenario_seed: c.scenario_seed,
            gnn_w,
            rsrp_w: c.rsrp.total_w,
            ga_subsinr_w: c.ga_subsinr.total_w,
            oracle_w: c.oracle.as_ref().map(|r| r.total_w),
            gain_vs_rsrp: gain(c.rsrp.total_w)?,
            gain_vs_ga_subsinr: gain(c.ga_subsinr.total_w)?,
            gnn_switched_off: c.gnn.as_ref().map(|r| r.switched_off_count()),
            gnn_overload: c.gnn.as_ref().map(|r| r.any_overload()),
        })
    }
}

pub fn write_comparison_csv(path: &Path, cmp: &[InstanceComparison]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for c in cmp {
        w.serialize(ComparisonRow::from_comparison(c)?).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn write_matrix(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `heatmap_sinr.csv`, one `heatmap_<policy>.csv` per report and
/// `coordinates.csv`; returns the paths in that order.
pub fn export_heatmaps(s: &Scenario, reports: &[PolicyReport], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let cells: Vec<String> = (0..s.n_cells).map(|n| format!("cell_{n}")).collect();
    let mut paths = Vec::with_capacity(reports.len() + 2);

    let sinr = dir.join("heatmap_sinr.csv");
    write_matrix(
        &sinr,
        &cells,
        (0..s.n_ues).map(|k| s.sinr_wideband_db.row(k).iter().map(f64::to_string).collect()),
    )?;
    paths.push(sinr);

    for r in reports {
        if r.assignment.len() != s.n_ues {
            return Err(Error::Argument(format!(
                "report {} covers {} UEs, scenario has {}",
                r.policy,
                r.assignment.len(),
                s.n_ues
            )));
        }
        let path = dir.join(format!("heatmap_{}.csv", r.policy));
        write_matrix(
            &path,
            &cells,
            r.assignment.iter().map(|&a| {
                (0..s.n_cells)
                    .map(|n| if n == a { "1" } else { "0" }.to_string())
                    .collect()
            }),
        )?;
        paths.push(path);
    }

    let coords = dir.join("coordinates.csv");
    let header = ["kind", "index", "x_m", "y_m", "reuse_group"].map(String::from);
    let bs = s.bs_positions.iter().enumerate().map(|(n, xy)| {
        vec![
            "bs".into(),
            n.to_string(),
            xy[0].to_string(),
            xy[1].to_string(),
            s.reuse_group[n].to_string(),
        ]
    });
    let ue = s.ue_positions.iter().enumerate().map(|(k, xy)| {
        vec![
            "ue".into(),
            k.to_string(),
            xy[0].to_string(),
            xy[1].to_string(),
            String::new(),
        ]
    });
    write_matrix(&coords, &header, bs.chain(ue))?;
    paths.push(coords);
    Ok(paths)
}
