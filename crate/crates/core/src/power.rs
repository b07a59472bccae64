//! Base-station and network power consumption.
//!
//! An active cell draws `P_fixed + P_BB(eta) + P_Radio(eta)` with
//! `P_Radio(eta) = N_Tx * (eta + eps * P_max,PA) / ((1 + eps) * sigma_max)`
//! and an affine baseband term. A cell serving nobody is switched off and
//! draws `p_sleep_w`.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerParams {
    pub p_fixed_w: f64,
    pub p_bb0_w: f64,
    pub p_bb_slope_w: f64,
    pub epsilon: f64,
    pub sigma_max: f64,
    pub p_max_pa_w: f64,
    pub n_tx: usize,
    pub p_sleep_w: f64,
    /// Read `eta` as a PA output power fraction, i.e. use `eta * P_max,PA` in
    /// the radio term instead of the bare utilization.
    pub eta_as_pout: bool,
}

impl Default for PowerParams {
    fn default() -> Self {
        Self {
            p_fixed_w: 100.0,
            p_bb0_w: 10.0,
            p_bb_slope_w: 20.0,
            epsilon: 0.5,
            sigma_max: 0.5,
            p_max_pa_w: 40.0,
            n_tx: 4,
            p_sleep_w: 0.0,
            eta_as_pout: false,
        }
    }
}

impl PowerParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.sigma_max > 0.0
            && self.sigma_max <= 1.0
            && self.epsilon >= 0.0
            && [
                self.p_fixed_w,
                self.p_bb0_w,
                self.p_bb_slope_w,
                self.p_max_pa_w,
                self.p_sleep_w,
            ]
            .iter()
            .all(|p| *p >= 0.0)
            && self.p_sleep_w <= self.p_fixed_w;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid power parameters: {self:?}")))
        }
    }

    fn radio_scale(&self) -> f64 {
        self.n_tx as f64 / ((1.0 + self.epsilon) * self.sigma_max)
    }

    /// `(constant, slope)` of the radio term as an affine function of eta.
    fn radio_affine(&self) -> (f64, f64) {
        let c = self.radio_scale();
        let slope = if self.eta_as_pout { self.p_max_pa_w } else { 1.0 };
        (c * self.epsilon * self.p_max_pa_w, c * slope)
    }

    /// Draw of an active cell at zero load.
    pub fn active_base_w(&self) -> f64 {
        self.p_fixed_w + self.p_bb0_w + self.radio_affine().0
    }

    /// Extra draw of an active cell per unit utilization.
    pub fn load_slope_w(&self) -> f64 {
        self.p_bb_slope_w + self.radio_affine().1
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&eta) {
        Ok(())
    } else {
        Err(Error::Argument(format!("utilization {eta} outside [0, 1]")))
    }
}

/// PA-side power at utilization `eta`.
pub fn radio_power(eta: f64, p: &PowerParams) -> Result<f64> {
    check_eta(eta)?;
    let eta = if p.eta_as_pout { eta * p.p_max_pa_w } else { eta };
    Ok(p.n_tx as f64 * (eta + p.epsilon * p.p_max_pa_w) / ((1.0 + p.epsilon) * p.sigma_max))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Utilization {
    pub eta: f64,
    /// More PRBs requested than the cell has; `eta` was clipped to 1.
    pub overload: bool,
}

pub fn utilization(prb_used: f64, prb_total: u32) -> Result<Utilization> {
    if prb_total == 0 {
        return Err(Error::Argument("prb_total must be positive".into()));
    }
    if !(prb_used >= 0.0) {
        return Err(Error::Argument(format!("prb_used {prb_used} is negative")));
    }
    let total = prb_total as f64;
    Ok(Utilization {
        eta: (prb_used / total).min(1.0),
        overload: prb_used > total,
    })
}

pub fn bs_power(eta: f64, active: bool, p: &PowerParams) -> Result<f64> {
    check_eta(eta)?;
    if !active {
        return Ok(p.p_sleep_w);
    }
    Ok(p.p_fixed_w + p.p_bb0_w + p.p_bb_slope_w * eta + radio_power(eta, p)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellPower {
    pub load_prb: f64,
    pub eta: f64,
    pub active: bool,
    pub overload: bool,
    pub power_w: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkPower {
    pub total_w: f64,
    pub cells: Vec<CellPower>,
}

impl NetworkPower {
    pub fn any_overload(&self) -> bool {
        self.cells.iter().any(|c| c.overload)
    }

    pub fn switched_off(&self) -> usize {
        self.cells.iter().filter(|c| !c.active).count()
    }
}

/// Network power of a one-hot `K x N` association.
pub fn network_power_hard(s_hard: &Tensor, prb: &Tensor, p: &PowerParams, n_prb_total: u32) -> Result<NetworkPower> {
    if s_hard.shape() != prb.shape() {
        return Err(Error::Shape {
            op: "network_power_hard",
            lhs: s_hard.shape().to_vec(),
            rhs: prb.shape().to_vec(),
        });
    }
    let (k_ues, n_cells) = (s_hard.rows(), s_hard.cols());
    let mut assignment = Vec::with_capacity(k_ues);
    for k in 0..k_ues {
        let row = s_hard.row(k);
        let ones = row.iter().filter(|&&v| v == 1.0).count();
        let zeros = row.iter().filter(|&&v| v == 0.0).count();
        if ones != 1 || ones + zeros != n_cells {
            return Err(Error::Contract(format!("row {k} is not one-hot: {row:?}")));
        }
        assignment.push(row.iter().position(|&v| v == 1.0).unwrap());
    }
    network_power_assigned(&assignment, prb, p, n_prb_total)
}

/// Network power when UE `k` is served by cell `assignment[k]`.
pub fn network_power_assigned(
    assignment: &[usize],
    prb: &Tensor,
    p: &PowerParams,
    n_prb_total: u32,
) -> Result<NetworkPower> {
    let n_cells = prb.cols();
    let mut load = vec![0.0; n_cells];
    let mut users = vec![0usize; n_cells];
    for (k, &n) in assignment.iter().enumerate() {
        if n >= n_cells {
            return Err(Error::Contract(format!("UE {k} assigned to missing cell {n}")));
        }
        load[n] += prb.at(k, n);
        users[n] += 1;
    }
    let mut cells = Vec::with_capacity(n_cells);
    let mut total_w = 0.0;
    for (n, &load_prb) in load.iter().enumerate() {
        let u = utilization(load_prb, n_prb_total)?;
        let active = users[n] > 0;
        let power_w = bs_power(u.eta, active, p)?;
        total_w += power_w;
        cells.push(CellPower {
            load_prb,
            eta: u.eta,
            active,
            overload: u.overload,
            power_w,
        });
    }
    Ok(NetworkPower { total_w, cells })
}

/// Differentiable per-cell PRB load `p_hat[n] = sum_k S[k,n] P[k,n]`, shape `[N]`.
pub fn soft_load(g: &mut Graph, s: Var, prb: Var) -> Result<Var> {
    let weighted = g.mul(s, prb)?;
    g.col_sum(weighted)
}

/// Differentiable network power of a row-stochastic association `s`.
///
/// Each cell is gated by `g_n = 1 - prod_k (1 - S[k,n])`, the probability
/// that at least one UE picks it; at one-hot `s` this is exactly the
/// active/sleeping indicator, so the value matches [`network_power_hard`].
pub fn network_power_soft(g: &mut Graph, s: Var, prb: Var, p: &PowerParams, n_prb_total: u32) -> Result<Var> {
    let n_cells = g.value(s).cols();
    let load = soft_load(g, s, prb)?;
    let eta = g.scale(load, 1.0 / n_prb_total as f64);
    let eta = g.clamp(eta, 0.0, 1.0);
    let gate = g.complement_gate(s)?;

    let base = g.scale(gate, p.active_base_w() - p.p_sleep_w);
    let gated_eta = g.mul(gate, eta)?;
    let dynamic = g.scale(gated_eta, p.load_slope_w());
    let per_cell = g.add(base, dynamic)?;
    let total = g.sum(per_cell);
    Ok(g.add_scalar(total, n_cells as f64 * p.p_sleep_w))
}
