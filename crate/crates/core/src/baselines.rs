//! Reference association policies: max-RSRP, genie-aided best sub-band SINR
//! and exhaustive minimum-power search.

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::power::{network_power_assigned, NetworkPower, PowerParams};
use crate::scenario::{db_to_lin, Scenario};

/// How per-PRB SINR is reduced to one score per cell.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubSinrAggregation {
    #[default]
    Max,
    /// Linear mean of the 8 strongest PRBs.
    MeanTop8,
}

/// Default cap on `N^K` for the exhaustive search.
pub const DEFAULT_ORACLE_BUDGET: u64 = 10_000_000;

/// One serving cell per UE.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HardAssociation {
    pub assignment: Vec<usize>,
    pub n_cells: usize,
}

impl HardAssociation {
    pub fn new(assignment: Vec<usize>, n_cells: usize) -> Result<Self> {
        if let Some(k) = assignment.iter().position(|&n| n >= n_cells) {
            return Err(Error::Contract(format!(
                "UE {k} assigned to cell {} of {n_cells}",
                assignment[k]
            )));
        }
        Ok(Self { assignment, n_cells })
    }

    pub fn as_matrix(&self) -> Tensor {
        Tensor::from_fn(self.assignment.len(), self.n_cells, |k, n| {
            if self.assignment[k] == n {
                1.0
            } else {
                0.0
            }
        })
    }

    /// Number of distinct serving cells.
    pub fn cells_used(&self) -> usize {
        let mut used = vec![false; self.n_cells];
        self.assignment.iter().for_each(|&n| used[n] = true);
        used.into_iter().filter(|u| *u).count()
    }
}

/// Index of the largest score; ties go to the lowest index.
pub(crate) fn argmax_first(scores: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in scores.into_iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

pub fn associate_rsrp(s: &Scenario) -> HardAssociation {
    let assignment = (0..s.n_ues)
        .map(|k| argmax_first(s.rsrp_dbm.row(k).iter().copied()))
        .collect();
    HardAssociation {
        assignment,
        n_cells: s.n_cells,
    }
}

fn subband_score(prb_db: &[f64], agg: SubSinrAggregation) -> f64 {
    match agg {
        SubSinrAggregation::Max => prb_db.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        SubSinrAggregation::MeanTop8 => {
            let mut sorted = prb_db.to_vec();
            sorted.sort_by(|a, b| b.total_cmp(a));
            let top = &sorted[..sorted.len().min(8)];
            top.iter().map(|&v| db_to_lin(v)).sum::<f64>() / top.len() as f64
        }
    }
}

/// Genie-aided association on the best per-PRB SINR.
pub fn associate_ga_subsinr(s: &Scenario, agg: SubSinrAggregation) -> HardAssociation {
    let assignment = (0..s.n_ues)
        .map(|k| argmax_first((0..s.n_cells).map(|n| subband_score(s.sinr_prb_db(k, n), agg))))
        .collect();
    HardAssociation {
        assignment,
        n_cells: s.n_cells,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleResult {
    pub association: HardAssociation,
    pub power: NetworkPower,
    /// No assignment avoided overload; `association` is the unconstrained minimum.
    pub overloaded: bool,
    pub candidates: u64,
}

/// `N^K` as a float, to compare against a budget without overflow.
pub fn search_space(n_cells: usize, n_ues: usize) -> f64 {
    (n_cells as f64).powi(n_ues as i32)
}

/// Exhaustive minimum-power association over all `N^K` assignments.
///
/// Candidates are visited in lexicographic order and only a strictly lower
/// power replaces the incumbent, so ties resolve to the lexicographically
/// smallest assignment. Assignments that overload a cell are only used when
/// no assignment is overload-free.
pub fn associate_oracle(s: &Scenario, p: &PowerParams, budget: u64) -> Result<OracleResult> {
    oracle_on_prb(&s.prb_matrix(), s.n_prb_total, p, budget)
}

/// [`associate_oracle`] on a bare PRB matrix.
pub fn oracle_on_prb(prb: &Tensor, n_prb_total: u32, p: &PowerParams, budget: u64) -> Result<OracleResult> {
    let (k_ues, n_cells) = (prb.rows(), prb.cols());
    let space = search_space(n_cells, k_ues);
    if space > budget as f64 {
        return Err(Error::BudgetExceeded {
            candidates: space,
            budget,
        });
    }
    if n_cells == 0 {
        return Err(Error::Argument("oracle needs at least one cell".into()));
    }

    let mut assignment = vec![0usize; k_ues];
    let mut best_feasible: Option<(f64, Vec<usize>)> = None;
    let mut best_any: Option<(f64, Vec<usize>)> = None;
    let mut candidates = 0u64;
    loop {
        candidates += 1;
        let np = network_power_assigned(&assignment, prb, p, n_prb_total)?;
        let slot = if np.any_overload() {
            &mut best_any
        } else {
            &mut best_feasible
        };
        if slot.as_ref().is_none_or(|(w, _)| np.total_w < *w) {
            *slot = Some((np.total_w, assignment.clone()));
        }

        // Odometer increment, last UE fastest: lexicographic order.
        let mut pos = k_ues;
        loop {
            if pos == 0 {
                break;
            }
            pos -= 1;
            assignment[pos] += 1;
            if assignment[pos] < n_cells {
                break;
            }
            assignment[pos] = 0;
            if pos == 0 {
                pos = usize::MAX;
                break;
            }
        }
        if pos == usize::MAX || k_ues == 0 {
            break;
        }
    }

    let (overloaded, (_, best)) = match best_feasible {
        Some(b) => (false, b),
        None => (true, best_any.expect("at least one candidate")),
    };
    let power = network_power_assigned(&best, prb, p, n_prb_total)?;
    Ok(OracleResult {
        association: HardAssociation::new(best, n_cells)?,
        power,
        overloaded,
        candidates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate_scenario, ScenarioConfig};
    use proptest::prelude::*;

    fn cfg(k: usize, n: usize) -> ScenarioConfig {
        ScenarioConfig {
            n_ues: k,
            n_cells: n,
            ..ScenarioConfig::default()
        }
    }

    fn with_rsrp(rows: &[&[f64]]) -> Scenario {
        let (k, n) = (rows.len(), rows[0].len());
        let mut s = generate_scenario(&cfg(k, n), 0).unwrap();
        s.rsrp_dbm = Tensor::new(vec![k, n], rows.concat()).unwrap();
        s
    }

    #[test]
    fn rsrp_examples() {
        assert_eq!(associate_rsrp(&with_rsrp(&[&[-80.0, -80.0]])).assignment, vec![0]);
        let s = with_rsrp(&[&[-70.0, -90.0], &[-95.0, -60.0], &[-80.0, -79.0]]);
        assert_eq!(associate_rsrp(&s).assignment, vec![0, 1, 1]);
    }

    #[test]
    fn rsrp_without_shadowing_picks_nearest() {
        let c = ScenarioConfig {
            shadowing_sigma_db: 0.0,
            ..cfg(40, 7)
        };
        let s = generate_scenario(&c, 8).unwrap();
        let a = associate_rsrp(&s);
        for k in 0..s.n_ues {
            let nearest = (0..7)
                .min_by(|&x, &y| s.distance.at(k, x).total_cmp(&s.distance.at(k, y)))
                .unwrap();
            assert_eq!(a.assignment[k], nearest);
        }
    }

    #[test]
    fn ga_subsinr_examples() {
        let s = generate_scenario(&cfg(6, 1), 2).unwrap();
        assert_eq!(associate_ga_subsinr(&s, SubSinrAggregation::Max).assignment, vec![0; 6]);

        // Wideband favours cell 1, but cell 2 has one outstanding PRB.
        let mut s = generate_scenario(&cfg(1, 3), 2).unwrap();
        let b = s.n_prb_total as usize;
        let mut prb = vec![-20.0; b];
        prb.extend(vec![10.0; b]);
        let mut third = vec![-5.0; b];
        third[7] = 15.0;
        prb.extend(third);
        s.sinr_per_prb_db = prb;
        s.rsrp_dbm = Tensor::matrix(1, 3, vec![-100.0, -70.0, -90.0]).unwrap();
        assert_eq!(associate_rsrp(&s).assignment, vec![1]);
        assert_eq!(associate_ga_subsinr(&s, SubSinrAggregation::Max).assignment, vec![2]);
        assert_eq!(
            associate_ga_subsinr(&s, SubSinrAggregation::MeanTop8).assignment,
            vec![1]
        );

        s.sinr_per_prb_db = vec![3.0; 3 * b];
        assert_eq!(associate_ga_subsinr(&s, SubSinrAggregation::Max).assignment, vec![0]);
    }

    #[test]
    fn ga_equals_rsrp_on_flat_channel_with_reuse_three() {
        // Without fading or co-channel interference, SINR ranks cells exactly
        // like received power.
        let c = ScenarioConfig {
            fast_fading: false,
            ..cfg(50, 3)
        };
        for seed in 0..10 {
            let s = generate_scenario(&c, seed).unwrap();
            assert_eq!(associate_rsrp(&s), associate_ga_subsinr(&s, SubSinrAggregation::Max));
        }
    }

    #[test]
    fn oracle_symmetric_tie_goes_to_first_cell() {
        let prb = Tensor::matrix(1, 2, vec![10.0, 10.0]).unwrap();
        let r = oracle_on_prb(&prb, 51, &PowerParams::default(), 1000).unwrap();
        assert_eq!(r.association.assignment, vec![0]);
        assert_eq!(r.candidates, 2);
    }

    #[test]
    fn oracle_two_by_two_by_hand() {
        let p = PowerParams::default();
        let prb = Tensor::matrix(2, 2, vec![1.0, 50.0, 50.0, 1.0]).unwrap();
        // Candidates: (0,0) load 51 on cell 0, (0,1) two cells at 1 PRB,
        // (1,0) two cells at 50, (1,1) load 51 on cell 1.
        let one_cell = p.active_base_w() + p.load_slope_w() * 51.0 / 51.0;
        let two_cells = 2.0 * (p.active_base_w() + p.load_slope_w() / 51.0);
        assert!(one_cell < two_cells);
        let r = oracle_on_prb(&prb, 51, &p, 1000).unwrap();
        assert_eq!(r.association.assignment, vec![0, 0]);
        assert!((r.power.total_w - one_cell).abs() < 1e-9);
        assert!(!r.overloaded);
    }

    #[test]
    fn oracle_consolidates_light_load() {
        let p = PowerParams {
            p_fixed_w: 1000.0,
            ..PowerParams::default()
        };
        let prb = Tensor::from_fn(3, 2, |k, n| (1 + k + n) as f64);
        let r = oracle_on_prb(&prb, 51, &p, 1000).unwrap();
        assert_eq!(r.association.cells_used(), 1);
        assert_eq!(r.association.assignment, vec![0, 0, 0]);
    }

    #[test]
    fn oracle_prefers_feasible_and_flags_fallback() {
        let p = PowerParams::default();
        // Stacking both UEs overloads; splitting does not.
        let prb = Tensor::matrix(2, 2, vec![40.0, 40.0, 40.0, 40.0]).unwrap();
        let r = oracle_on_prb(&prb, 51, &p, 1000).unwrap();
        assert_eq!(r.association.cells_used(), 2);
        assert!(!r.overloaded);
        // A single cell and too much demand: nothing is feasible.
        let prb = Tensor::matrix(2, 1, vec![40.0, 40.0]).unwrap();
        let r = oracle_on_prb(&prb, 51, &p, 1000).unwrap();
        assert!(r.overloaded);
    }

    #[test]
    fn oracle_refuses_over_budget() {
        let s = generate_scenario(&cfg(20, 7), 0).unwrap();
        assert!(matches!(
            associate_oracle(&s, &PowerParams::default(), 10_000_000),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    fn all_assignments(k: usize, n: usize) -> Vec<Vec<usize>> {
        (0..n.pow(k as u32))
            .map(|mut code| {
                let mut a = vec![0; k];
                for slot in a.iter_mut().rev() {
                    *slot = code % n;
                    code /= n;
                }
                a
            })
            .collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn oracle_is_optimal_and_dominates_baselines(seed in any::<u64>(), k in 1usize..7, n in 1usize..4) {
            let s = generate_scenario(&cfg(k, n), seed).unwrap();
            let p = PowerParams::default();
            let r = associate_oracle(&s, &p, 4096).unwrap();
            let prb = s.prb_matrix();
            let mut best_feasible = f64::INFINITY;
            for a in all_assignments(k, n) {
                let np = network_power_assigned(&a, &prb, &p, s.n_prb_total).unwrap();
                if !np.any_overload() {
                    best_feasible = best_feasible.min(np.total_w);
                }
            }
            if !r.overloaded {
                prop_assert_eq!(r.power.total_w, best_feasible);
            }
            for policy in [associate_rsrp(&s), associate_ga_subsinr(&s, SubSinrAggregation::Max)] {
                let np = network_power_assigned(&policy.assignment, &prb, &p, s.n_prb_total).unwrap();
                if !np.any_overload() {
                    prop_assert!(r.power.total_w <= np.total_w);
                }
            }
        }
    }
}
