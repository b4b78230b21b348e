//! Fixtures shared by the benches under `benches/`.

use lipcon::synthesis::{self, DesignOptions};
use lipcon::{repro, sim, Disturbance, GraphSpectra, Mat, Scenario};

/// Six manipulators with the published certificate at `c = 37`.
pub fn manipulator_scenario(t_end: f64, dt: f64) -> Scenario {
    let model = repro::manipulator_model();
    let graph = repro::manipulator_graph();
    let spectra = GraphSpectra::compute(&graph).expect("built-in graph is strongly connected");
    let design = synthesis::design_hinf(
        &model,
        &spectra,
        repro::GAMMA,
        &DesignOptions::inject(repro::published_q(), repro::published::EPSILON).with_c(repro::C_SIMULATION),
    )
    .expect("published certificate is feasible");
    Scenario {
        x0: sim::seeded_initial_states(graph.n(), model.state_dim(), 1, 1.0),
        model,
        graph,
        design,
        disturbance: Disturbance::none(),
        t_end,
        dt,
    }
}

/// Symmetric test matrix with a known spread of eigenvalues.
pub fn symmetric(n: usize) -> Mat {
    Mat::from_fn(n, n, |i, j| 1.0 / (1.0 + i as f64 + j as f64) + if i == j { i as f64 } else { 0.0 })
}
