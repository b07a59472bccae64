//! Fixtures shared by the benchmarks in `benches/`.

use nesua_core::experiment::generate_samples;
use nesua_core::scenario::NormStats;
use nesua_core::{GatConfig, GatModel, GraphInstance, Scenario, ScenarioConfig};

pub fn scenario_config(k: usize, n: usize) -> ScenarioConfig {
    ScenarioConfig {
        n_ues: k,
        n_cells: n,
        ..ScenarioConfig::default()
    }
}

/// `count` scenarios with normalized graphs and a model sized for them.
pub fn fixture(k: usize, n: usize, hidden: usize, count: usize) -> (Vec<Scenario>, Vec<GraphInstance>, GatModel) {
    let samples = generate_samples(&scenario_config(k, n), count, 0).expect("valid fixture config");
    let raw: Vec<GraphInstance> = samples.iter().map(|s| s.graph.clone()).collect();
    let norm = NormStats::fit(&raw).expect("non-empty fixture");
    let graphs = raw
        .iter()
        .map(|g| g.normalized(&norm).expect("matching widths"))
        .collect();
    let model = GatModel::new(
        GatConfig {
            hidden,
            ..GatConfig::default()
        },
        n,
    )
    .expect("valid model config");
    (samples.into_iter().map(|s| s.scenario).collect(), graphs, model)
}
