//! Network realizations and their UE graph.
//!
//! BSs sit on a hexagonal grid centred in the region and UEs are dropped
//! uniformly. The downlink channel is log-distance path loss with log-normal
//! shadowing and i.i.d. Rayleigh power gains per PRB. Only cells in the same
//! reuse group interfere, always at full power.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

const SPEED_OF_LIGHT: f64 = 299_792_458.0;
const THERMAL_NOISE_DBM_PER_HZ: f64 = -174.0;
const SUBCARRIERS_PER_PRB: f64 = 12.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_cells: usize,
    /// Meters.
    pub inter_site_distance: f64,
    /// Width and height in meters.
    pub region: [f64; 2],
    pub n_ues: usize,
    pub bandwidth_mhz: f64,
    pub subcarrier_spacing_khz: f64,
    pub carrier_ghz: f64,
    pub n_tx_antennas: usize,
    pub h_tx_m: f64,
    pub h_ue_m: f64,
    /// Total BS transmit power.
    pub tx_power_dbm: f64,
    pub noise_figure_db: f64,
    pub pathloss_exponent: f64,
    /// Path loss at 1 m. Free-space loss at the carrier when unset.
    pub pathloss_ref_db: Option<f64>,
    pub shadowing_sigma_db: f64,
    /// Per-PRB Rayleigh fading. When off every PRB sees the mean channel.
    pub fast_fading: bool,
    pub reuse_factor: f64,
    pub gamma_th_db: f64,
    pub ue_demand_mbps: f64,
    /// Spectral-efficiency ceiling for PRB demand, bit/s/Hz.
    pub se_cap: f64,
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_cells: 7,
            inter_site_distance: 1000.0,
            region: [3000.0, 3000.0],
            n_ues: 50,
            bandwidth_mhz: 20.0,
            subcarrier_spacing_khz: 30.0,
            carrier_ghz: 3.5,
            n_tx_antennas: 4,
            h_tx_m: 25.0,
            h_ue_m: 1.5,
            tx_power_dbm: 46.0,
            noise_figure_db: 7.0,
            pathloss_exponent: 3.2,
            pathloss_ref_db: None,
            shadowing_sigma_db: 6.0,
            fast_fading: true,
            reuse_factor: 1.0 / 3.0,
            gamma_th_db: 10.0,
            ue_demand_mbps: 1.0,
            se_cap: 7.4,
            rng_seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.n_cells == 0 {
            return bad("n_cells must be at least 1");
        }
        if self.n_ues == 0 {
            return bad("n_ues must be at least 1");
        }
        if !(self.bandwidth_mhz > 0.0) || !(self.subcarrier_spacing_khz > 0.0) {
            return bad("bandwidth and subcarrier spacing must be positive");
        }
        if !(self.reuse_factor > 0.0 && self.reuse_factor <= 1.0) {
            return bad("reuse_factor must lie in (0, 1]");
        }
        if !(self.inter_site_distance > 0.0) || self.region.iter().any(|v| !(*v > 0.0)) {
            return bad("inter-site distance and region must be positive");
        }
        if !(self.ue_demand_mbps > 0.0) || !(self.se_cap > 0.0) {
            return bad("ue_demand_mbps and se_cap must be positive");
        }
        if self.shadowing_sigma_db < 0.0 || self.n_tx_antennas == 0 {
            return bad("shadowing sigma must be >= 0 and n_tx_antennas >= 1");
        }
        Ok(())
    }

    /// Number of co-channel groups, `ceil(1 / reuse_factor)`.
    pub fn reuse_groups(&self) -> usize {
        (1.0 / self.reuse_factor - 1e-9).ceil().max(1.0) as usize
    }

    /// PRBs per cell for the configured bandwidth and numerology.
    pub fn n_prb(&self) -> u32 {
        prb_count(self.bandwidth_mhz, self.subcarrier_spacing_khz)
    }

    pub fn prb_bandwidth_hz(&self) -> f64 {
        SUBCARRIERS_PER_PRB * self.subcarrier_spacing_khz * 1e3
    }

    fn pathloss_ref_db(&self) -> f64 {
        self.pathloss_ref_db.unwrap_or_else(|| {
            let f = self.carrier_ghz * 1e9;
            20.0 * (4.0 * std::f64::consts::PI * f / SPEED_OF_LIGHT).log10()
        })
    }

    /// Log-distance path loss in dB at 3-D distance `d` meters.
    pub fn pathloss_db(&self, d: f64) -> f64 {
        self.pathloss_ref_db() + 10.0 * self.pathloss_exponent * d.max(1.0).log10()
    }
}

/// Transmission bandwidth configuration (FR1 maximum RB tables).
/// Bandwidths outside the table fall back to `floor(W / (12 * scs))`.
pub fn prb_count(bandwidth_mhz: f64, scs_khz: f64) -> u32 {
    const SCS15: &[(f64, u32)] = &[
        (5.0, 25),
        (10.0, 52),
        (15.0, 79),
        (20.0, 106),
        (25.0, 133),
        (30.0, 160),
        (40.0, 216),
        (50.0, 270),
    ];
    const SCS30: &[(f64, u32)] = &[
        (5.0, 11),
        (10.0, 24),
        (15.0, 38),
        (20.0, 51),
        (25.0, 65),
        (30.0, 78),
        (40.0, 106),
        (50.0, 133),
        (60.0, 162),
        (70.0, 189),
        (80.0, 217),
        (90.0, 245),
        (100.0, 273),
    ];
    const SCS60: &[(f64, u32)] = &[
        (10.0, 11),
        (15.0, 18),
        (20.0, 24),
        (25.0, 31),
        (30.0, 38),
        (40.0, 51),
        (50.0, 65),
        (60.0, 79),
        (70.0, 93),
        (80.0, 107),
        (90.0, 121),
        (100.0, 135),
    ];
    let table = match scs_khz as u32 {
        15 => SCS15,
        30 => SCS30,
        60 => SCS60,
        _ => &[],
    };
    table
        .iter()
        .find(|(w, _)| (w - bandwidth_mhz).abs() < 1e-9)
        .map(|&(_, n)| n)
        .unwrap_or_else(|| {
            ((bandwidth_mhz * 1e6) / (SUBCARRIERS_PER_PRB * scs_khz * 1e3))
                .floor()
                .max(1.0) as u32
        })
}

/// Axial coordinates of the first `n` cells of a hexagonal spiral.
fn hex_spiral(n: usize) -> Vec<(i64, i64)> {
    const DIRS: [(i64, i64); 6] = [(1, 0), (1, -1), (0, -1), (-1, 0), (-1, 1), (0, 1)];
    let mut out = vec![(0, 0)];
    let mut ring = 1;
    while out.len() < n {
        let mut hex = (DIRS[4].0 * ring, DIRS[4].1 * ring);
        for dir in DIRS {
            for _ in 0..ring {
                out.push(hex);
                hex = (hex.0 + dir.0, hex.1 + dir.1);
            }
        }
        ring += 1;
    }
    out.truncate(n);
    out
}

/// One network realization. All `K x N` matrices are UE-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    pub n_cells: usize,
    pub n_ues: usize,
    /// PRBs available per cell.
    pub n_prb_total: u32,
    pub prb_bandwidth_hz: f64,
    pub demand_mbps: f64,
    pub reuse_group: Vec<usize>,
    pub bs_positions: Vec<[f64; 2]>,
    pub ue_positions: Vec<[f64; 2]>,
    /// 3-D UE-BS distance in meters.
    pub distance: Tensor,
    pub sinr_wideband_db: Tensor,
    /// `K x N x N_PRB`, flattened.
    pub sinr_per_prb_db: Vec<f64>,
    pub rsrp_dbm: Tensor,
    /// `K x N` PRBs UE k would need from cell n.
    pub prb_demand: Vec<u32>,
}

impl Scenario {
    pub fn sinr_prb_db(&self, k: usize, n: usize) -> &[f64] {
        let b = self.n_prb_total as usize;
        let start = (k * self.n_cells + n) * b;
        &self.sinr_per_prb_db[start..start + b]
    }

    pub fn prb(&self, k: usize, n: usize) -> u32 {
        self.prb_demand[k * self.n_cells + n]
    }

    /// PRB requirements as a `K x N` tensor.
    pub fn prb_matrix(&self) -> Tensor {
        Tensor::from_fn(self.n_ues, self.n_cells, |k, n| self.prb(k, n) as f64)
    }
}

/// Generates one realization; deterministic for fixed `(cfg, seed)`.
pub fn generate_scenario(cfg: &ScenarioConfig, seed: u64) -> Result<Scenario> {
    cfg.validate()?;
    let (k_ues, n_cells) = (cfg.n_ues, cfg.n_cells);
    let [width, height] = cfg.region;
    let (cx, cy) = (width / 2.0, height / 2.0);

    let axial = hex_spiral(n_cells);
    let groups = cfg.reuse_groups() as i64;
    let reuse_group: Vec<usize> = axial
        .iter()
        .map(|&(q, r)| (q - r).rem_euclid(groups) as usize)
        .collect();
    let isd = cfg.inter_site_distance;
    let bs_positions: Vec<[f64; 2]> = axial
        .iter()
        .map(|&(q, r)| {
            [
                cx + isd * (q as f64 + r as f64 / 2.0),
                cy + isd * (3f64.sqrt() / 2.0) * r as f64,
            ]
        })
        .collect();
    if let Some(p) = bs_positions
        .iter()
        .find(|p| p[0] < 0.0 || p[0] > width || p[1] < 0.0 || p[1] > height)
    {
        return Err(Error::Config(format!(
            "region {width}x{height} m cannot hold {n_cells} cells at {isd} m spacing \
             (site at ({:.1}, {:.1}))",
            p[0], p[1]
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ue_positions: Vec<[f64; 2]> = (0..k_ues)
        .map(|_| [rng.random_range(0.0..width), rng.random_range(0.0..height)])
        .collect();

    let dh = cfg.h_tx_m - cfg.h_ue_m;
    let distance = Tensor::from_fn(k_ues, n_cells, |k, n| {
        let dx = ue_positions[k][0] - bs_positions[n][0];
        let dy = ue_positions[k][1] - bs_positions[n][1];
        (dx * dx + dy * dy + dh * dh).sqrt()
    });

    let shadow = Normal::new(0.0, cfg.shadowing_sigma_db).map_err(|e| Error::Config(format!("shadowing: {e}")))?;
    let shadowing: Vec<f64> = (0..k_ues * n_cells).map(|_| shadow.sample(&mut rng)).collect();

    let n_prb = cfg.n_prb();
    let b = n_prb as usize;
    let fading: Vec<f64> = if cfg.fast_fading {
        (0..k_ues * n_cells * b).map(|_| Exp1.sample(&mut rng)).collect()
    } else {
        vec![1.0; k_ues * n_cells * b]
    };

    // Link budget per PRB: power split evenly over PRBs, array gain from N_Tx.
    let array_gain_db = 10.0 * (cfg.n_tx_antennas as f64).log10();
    let tx_per_prb_dbm = cfg.tx_power_dbm - 10.0 * (n_prb as f64).log10();
    let noise_prb_mw =
        db_to_lin(THERMAL_NOISE_DBM_PER_HZ + 10.0 * cfg.prb_bandwidth_hz().log10() + cfg.noise_figure_db);
    let coupling_db = |k: usize, n: usize| cfg.pathloss_db(distance.at(k, n)) + shadowing[k * n_cells + n];
    let mean_rx_mw: Vec<f64> = (0..k_ues * n_cells)
        .map(|i| db_to_lin(tx_per_prb_dbm + array_gain_db - coupling_db(i / n_cells, i % n_cells)))
        .collect();
    let rsrp_dbm = Tensor::from_fn(k_ues, n_cells, |k, n| {
        cfg.tx_power_dbm - 10.0 * (SUBCARRIERS_PER_PRB * n_prb as f64).log10() - coupling_db(k, n)
    });

    let mut sinr_per_prb_db = vec![0.0; k_ues * n_cells * b];
    let mut wideband = vec![0.0; k_ues * n_cells];
    for k in 0..k_ues {
        for n in 0..n_cells {
            let mut mean_lin = 0.0;
            for prb in 0..b {
                let rx = |m: usize| mean_rx_mw[k * n_cells + m] * fading[(k * n_cells + m) * b + prb];
                let interference: f64 = (0..n_cells)
                    .filter(|&m| m != n && reuse_group[m] == reuse_group[n])
                    .map(rx)
                    .sum();
                let sinr = rx(n) / (noise_prb_mw + interference);
                sinr_per_prb_db[(k * n_cells + n) * b + prb] = lin_to_db(sinr);
                mean_lin += sinr;
            }
            wideband[k * n_cells + n] = lin_to_db(mean_lin / b as f64);
        }
    }
    let sinr_wideband_db = Tensor::matrix(k_ues, n_cells, wideband)?;

    let mut scenario = Scenario {
        seed,
        n_cells,
        n_ues: k_ues,
        n_prb_total: n_prb,
        prb_bandwidth_hz: cfg.prb_bandwidth_hz(),
        demand_mbps: cfg.ue_demand_mbps,
        reuse_group,
        bs_positions,
        ue_positions,
        distance,
        sinr_wideband_db,
        sinr_per_prb_db,
        rsrp_dbm,
        prb_demand: Vec::new(),
    };
    scenario.prb_demand = compute_prb_demand(&scenario, cfg.ue_demand_mbps, cfg.se_cap)?;
    Ok(scenario)
}

pub fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn lin_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// `ceil(demand / (prb_bw * min(log2(1 + sinr), se_cap)))`, within `[1, n_total]`.
pub fn prbs_needed(demand_bps: f64, prb_bw_hz: f64, sinr_lin: f64, se_cap: f64, n_total: u32) -> u32 {
    let rate = prb_bw_hz * (1.0 + sinr_lin).log2().min(se_cap);
    if !(rate > 0.0) {
        return n_total;
    }
    let need = (demand_bps / rate).ceil();
    if need >= n_total as f64 {
        n_total
    } else {
        (need as u32).max(1)
    }
}

/// PRB requirement of every UE at every cell, from wideband SINR.
pub fn compute_prb_demand(s: &Scenario, demand_mbps: f64, se_cap: f64) -> Result<Vec<u32>> {
    if !(demand_mbps > 0.0) {
        return Err(Error::Argument(format!(
            "demand must be positive, got {demand_mbps} Mbit/s"
        )));
    }
    Ok(s.sinr_wideband_db
        .data()
        .iter()
        .map(|&db| {
            prbs_needed(
                demand_mbps * 1e6,
                s.prb_bandwidth_hz,
                db_to_lin(db),
                se_cap,
                s.n_prb_total,
            )
        })
        .collect())
}

/// Homogeneous UE graph of one scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphInstance {
    /// `K x 3N` rows `[p_k, q_k, r_k]`.
    pub features: Tensor,
    /// `K x K`, symmetric with unit diagonal.
    pub adjacency: Vec<bool>,
    /// `K x N` PRB requirements.
    pub prb_matrix: Tensor,
    pub n_prb_total: u32,
    pub scenario_seed: u64,
}

impl GraphInstance {
    pub fn n_nodes(&self) -> usize {
        self.features.rows()
    }

    pub fn n_cells(&self) -> usize {
        self.prb_matrix.cols()
    }

    pub fn edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.n_nodes() + j]
    }

    pub fn mask(&self) -> Arc<[bool]> {
        Arc::from(self.adjacency.as_slice())
    }

    pub fn normalized(&self, stats: &NormStats) -> Result<Self> {
        Ok(Self {
            features: stats.apply(&self.features)?,
            ..self.clone()
        })
    }
}

/// Builds the UE graph: `A(i,j) = 1` iff some cell hears both UEs above
/// `gamma_th_db`, plus self-loops. Features are left unnormalized; see
/// [`NormStats`].
pub fn build_graph(s: &Scenario, gamma_th_db: f64) -> GraphInstance {
    let (k_ues, n_cells) = (s.n_ues, s.n_cells);
    let above: Vec<Vec<usize>> = (0..n_cells)
        .map(|n| {
            (0..k_ues)
                .filter(|&k| s.sinr_wideband_db.at(k, n) > gamma_th_db)
                .collect()
        })
        .collect();
    let mut adjacency = vec![false; k_ues * k_ues];
    for members in &above {
        for &i in members {
            for &j in members {
                adjacency[i * k_ues + j] = true;
            }
        }
    }
    for i in 0..k_ues {
        adjacency[i * k_ues + i] = true;
    }

    let features = Tensor::from_fn(k_ues, 3 * n_cells, |k, c| match c / n_cells {
        0 => s.prb(k, c) as f64,
        1 => s.distance.at(k, c - n_cells),
        _ => s.sinr_wideband_db.at(k, c - 2 * n_cells),
    });

    GraphInstance {
        features,
        adjacency,
        prb_matrix: s.prb_matrix(),
        n_prb_total: s.n_prb_total,
        scenario_seed: s.seed,
    }
}

/// Per-column z-score statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Fits on every row of every instance. Constant columns get unit scale.
    pub fn fit(instances: &[GraphInstance]) -> Result<Self> {
        let first = instances
            .first()
            .ok_or_else(|| Error::Argument("cannot fit normalization on no data".into()))?;
        let d = first.features.cols();
        let mut count = 0usize;
        let mut mean = vec![0.0; d];
        for g in instances {
            if g.features.cols() != d {
                return Err(Error::Shape {
                    op: "NormStats::fit",
                    lhs: first.features.shape().to_vec(),
                    rhs: g.features.shape().to_vec(),
                });
            }
            for i in 0..g.features.rows() {
                for (m, v) in mean.iter_mut().zip(g.features.row(i)) {
                    *m += v;
                }
                count += 1;
            }
        }
        mean.iter_mut().for_each(|m| *m /= count as f64);
        let mut var = vec![0.0; d];
        for g in instances {
            for i in 0..g.features.rows() {
                for ((s, v), m) in var.iter_mut().zip(g.features.row(i)).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / count as f64).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, features: &Tensor) -> Result<Tensor> {
        let (m, d) = features.require_matrix("NormStats::apply")?;
        if d != self.mean.len() {
            return Err(Error::Shape {
                op: "NormStats::apply",
                lhs: features.shape().to_vec(),
                rhs: vec![self.mean.len()],
            });
        }
        Ok(Tensor::from_fn(m, d, |i, j| {
            (features.at(i, j) - self.mean[j]) / self.std[j]
        }))
    }
}
