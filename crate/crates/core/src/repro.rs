//! Built-in six-manipulator example: single-link manipulators with a
//! revolute joint driven by a DC motor, coupled over a balanced, strongly
//! connected six-node digraph.

use crate::graph::DiGraph;
use crate::model::{AgentModel, Nonlinearity, Term};
use crate::numkit::{Mat, Vector};

pub const GAMMA: f64 = 2.0;
/// Coupling strength used for the illustrative undisturbed run.
pub const C_SIMULATION: f64 = 37.0;

/// Published reference values, rounded to four decimals at the source.
pub mod published {
    pub const LAMBDA2: f64 = 0.8139;
    pub const EPSILON: f64 = 29.6636;
    pub const C_THRESHOLD: f64 = 36.4462;
    pub const K: [f64; 4] = [-2.4920, -0.1957, 1.4115, -3.8216];
    pub const Q: [[f64; 4]; 4] = [
        [0.4060, -0.9667, 0.3547, -0.0842],
        [-0.9667, 67.6536, 0.0162, -0.0024],
        [0.3547, 0.0162, 0.4941, -0.0496],
        [-0.0842, -0.0024, -0.0496, 0.0367],
    ];
}

/// Per-agent disturbance weights: agent `i` receives `weights[i] * w(t)`.
pub const DISTURBANCE_WEIGHTS: [f64; 6] = [1.0, -1.0, 1.5, 3.0, -0.6, 2.0];

pub fn manipulator_model() -> AgentModel {
    AgentModel::new(
        Mat::from_row_slice(
            4,
            4,
            &[
                0.0, 1.0, 0.0, 0.0, //
                -48.6, -1.26, 48.6, 0.0, //
                0.0, 0.0, 0.0, 10.0, //
                1.95, 0.0, -1.95, 0.0,
            ],
        ),
        Mat::from_column_slice(4, 1, &[0.0, 21.6, 0.0, 0.0]),
        Mat::identity(4, 4),
        Mat::from_column_slice(4, 1, &[0.0, 1.0, 0.4, 0.0]),
        Mat::from_row_slice(1, 4, &[1.0, 0.0, 0.0, 0.0]),
        0.333,
        Nonlinearity::Sine {
            terms: vec![Term {
                output: 3,
                input: 0,
                coeff: -0.333,
            }],
        },
    )
    .expect("built-in model is valid")
}

/// Edges (parent, child), 0-indexed, read off the published Laplacian.
pub fn manipulator_graph() -> DiGraph {
    DiGraph::new(
        6,
        [
            (2, 0),
            (3, 0),
            (0, 1),
            (5, 1),
            (1, 2),
            (0, 3),
            (4, 3),
            (3, 4),
            (5, 4),
            (1, 5),
            (4, 5),
        ],
    )
    .expect("built-in graph is valid")
}

pub fn printed_laplacian() -> Mat {
    Mat::from_row_slice(
        6,
        6,
        &[
            2.0, 0.0, -1.0, -1.0, 0.0, 0.0, //
            -1.0, 2.0, 0.0, 0.0, 0.0, -1.0, //
            0.0, -1.0, 1.0, 0.0, 0.0, 0.0, //
            -1.0, 0.0, 0.0, 2.0, -1.0, 0.0, //
            0.0, 0.0, 0.0, -1.0, 2.0, -1.0, //
            0.0, -1.0, 0.0, 0.0, -1.0, 2.0,
        ],
    )
}

pub fn published_q() -> Mat {
    Mat::from_fn(4, 4, |i, j| published::Q[i][j])
}

pub fn published_k() -> Mat {
    Mat::from_row_slice(1, 4, &published::K)
}

pub fn disturbance_weights() -> Vector {
    Vector::from_row_slice(&DISTURBANCE_WEIGHTS)
}
