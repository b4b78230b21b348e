mod common;

use lipcon::graph::{self, GraphSpectra};
use lipcon::lmi::{self, LmiProblem};
use lipcon::numkit::{self, Mat, Vector};
use lipcon::sim::{self, Disturbance, Scenario};
use lipcon::synthesis::{self, DesignOptions};
use lipcon::{repro, AgentModel, DiGraph, Nonlinearity, Term};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weighted_laplacian_is_psd_and_connectivity_positive(seed in any::<u64>(), n in 2usize..=8, density in 0.0f64..0.6) {
        let g = common::random_strongly_connected(&mut rng(seed), n, density);
        let s = GraphSpectra::compute(&g).unwrap();
        prop_assert!(numkit::min_eigenvalue(&s.weighted_symmetric()).unwrap() >= -1e-9);
        prop_assert!(s.a_of_l > 0.0);
        prop_assert!((s.r.sum() - 1.0).abs() < 1e-12);
        prop_assert!((s.r.transpose() * &s.laplacian).amax() < 1e-9);
    }

    #[test]
    fn balanced_connectivity_is_lambda2(seed in any::<u64>(), n in 2usize..=8, attempts in 0usize..6) {
        let g = common::random_balanced(&mut rng(seed), n, attempts);
        let s = GraphSpectra::compute(&g).unwrap();
        prop_assert!(s.flags.balanced);
        prop_assert!((s.a_of_l - s.lambda2_sym.unwrap()).abs() <= 1e-8);
    }

    #[test]
    fn simple_zero_eigenvalue_iff_spanning_tree(seed in any::<u64>(), n in 1usize..=8, density in 0.0f64..0.5) {
        let g = common::random_digraph(&mut rng(seed), n, density);
        let rank = numkit::rank(&graph::laplacian(&g));
        prop_assert_eq!(rank == n - 1, graph::classify(&g).has_spanning_tree);
    }

    #[test]
    fn leader_follower_q_solves_l1(seed in any::<u64>(), n in 2usize..=7, density in 0.0f64..0.5) {
        // Leader 0 feeds a strongly connected follower set through at least one edge.
        let mut g = common::random_digraph(&mut rng(seed), n, density);
        let mut edges: Vec<(usize, usize)> = g.edges().filter(|&(_, c)| c != 0).collect();
        edges.push((0, 1));
        for k in 1..n {
            edges.push((k, if k + 1 < n { k + 1 } else { 1 }));
        }
        edges.retain(|(p, c)| p != c);
        g = DiGraph::new(n, edges).unwrap();
        let lf = graph::leader_follower_data(&g, 0).unwrap();
        let residual = &lf.l1 * &lf.q - Vector::from_element(n - 1, 1.0);
        prop_assert!(residual.amax() < 1e-9);
        prop_assert!(lf.q.iter().all(|v| *v > 0.0));
        prop_assert!((&lf.big_g * &lf.q - Vector::from_element(n - 1, 1.0)).amax() < 1e-12);
        if lf.lambda1_h <= 0.0 {
            let m = scalar_like(-1.0, 1.0, 0.0);
            let r = synthesis::design_leader_follower(&m, &lf, &DesignOptions::default());
            prop_assert!(matches!(r, Err(lipcon::Error::Precondition(_))));
        }
    }
}

fn scalar_like(a: f64, b: f64, alpha: f64) -> AgentModel {
    AgentModel::new(
        Mat::from_row_slice(2, 2, &[a, 1.0, 0.0, -1.0]),
        Mat::from_row_slice(2, 1, &[0.0, b]),
        Mat::identity(2, 2),
        Mat::from_row_slice(2, 1, &[1.0, 0.0]),
        Mat::from_row_slice(1, 2, &[1.0, 0.0]),
        alpha,
        Nonlinearity::Tanh {
            terms: vec![Term { output: 1, input: 0, coeff: alpha }],
        },
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn feasible_certificates_pass_verify(a in -2.0f64..2.0, b in 0.5f64..3.0, alpha in 0.0f64..1.0, gamma in 1.0f64..5.0) {
        let m = scalar_like(a, b, alpha);
        for prob in [LmiProblem::consensus(&m), LmiProblem::hinf(&m, gamma)] {
            let cert = lmi::solve(&prob).unwrap();
            let report = lmi::verify(&prob, &cert);
            prop_assert_eq!(cert.feasible, report.passed);
            if cert.feasible {
                prop_assert!(cert.margin > 0.0 && cert.scalar > 0.0);
                let assembled = lmi::assemble(&prob, &cert.p, cert.scalar).unwrap();
                prop_assert!((numkit::max_eigenvalue(&assembled).unwrap() + cert.margin).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn protocol_ignores_common_translation(seed in any::<u64>(), shift in prop::collection::vec(-5.0f64..5.0, 4)) {
        let m = repro::manipulator_model();
        let g = repro::manipulator_graph();
        let s = GraphSpectra::compute(&g).unwrap();
        let d = synthesis::design_hinf(
            &m,
            &s,
            repro::GAMMA,
            &DesignOptions::inject(repro::published_q(), repro::published::EPSILON),
        )
        .unwrap();
        let x0 = sim::seeded_initial_states(6, 4, seed, 3.0);
        let stack = |add: &[f64]| Vector::from_fn(24, |k, _| x0[k / 4][k % 4] + add[k % 4]);
        let (x, xs) = (stack(&[0.0; 4]), stack(&shift));
        // u = rhs - open loop, per agent.
        let input = |x: &Vector| {
            let dx = sim::rhs_leaderless(&m, &g, &d, x).unwrap();
            Vector::from_fn(24, |k, _| {
                let i = k / 4;
                let xi = x.rows(i * 4, 4);
                let open = &m.a * xi + &m.d1 * m.f(xi.as_slice());
                dx[k] - open[k % 4]
            })
        };
        prop_assert!((input(&x) - input(&xs)).amax() < 1e-9);
    }
}

#[test]
fn undisturbed_cost_is_output_energy() {
    let m = repro::manipulator_model();
    let g = repro::manipulator_graph();
    let s = GraphSpectra::compute(&g).unwrap();
    let d = synthesis::design_hinf(&m, &s, repro::GAMMA, &DesignOptions::default()).unwrap();
    let sc = Scenario {
        model: m,
        graph: g,
        design: d,
        x0: sim::seeded_initial_states(6, 4, 9, 1.0),
        disturbance: Disturbance::none(),
        t_end: 2.0,
        dt: 1e-3,
    };
    let traj = sim::integrate(&sc).unwrap();
    let cost = sim::hinf_cost(&traj, repro::GAMMA);
    assert!(cost.j > 0.0);
    assert_eq!(cost.j, cost.z_energy);
    assert!((traj.j_running.last().unwrap() - cost.j).abs() <= 1e-12 * cost.j);
}

#[test]
fn leader_follower_tracking_invariant() {
    let g = DiGraph::new(4, [(0, 1), (1, 2), (2, 3), (3, 1)]).unwrap();
    let m = repro::manipulator_model();
    let lf = graph::leader_follower_data(&g, 0).unwrap();
    let d = synthesis::design_leader_follower(&m, &lf, &DesignOptions::default()).unwrap();
    let leader = Vector::from_row_slice(&[0.2, -0.1, 0.3, 0.0]);
    let sc = Scenario {
        model: m,
        graph: g,
        design: d,
        x0: vec![leader; 4],
        disturbance: Disturbance::none(),
        t_end: 1.0,
        dt: 1e-3,
    };
    let traj = sim::integrate(&sc).unwrap();
    assert!(traj.errors.iter().all(|e| e.amax() < 1e-12));
    assert!(traj.v_lyap.iter().all(|v| v.abs() < 1e-20));
}
