//! JSON report emitted by every subcommand. Matrices are row-major nested
//! arrays, node indices are 1-based like the edge-list format.

use anyhow::{bail, Result};
use lipcon::graph::{GraphFlags, LeaderFollowerData};
use lipcon::numkit::mat_to_rows;
use lipcon::sim::{self, HinfCost, LyapunovReport, Trajectory};
use lipcon::{GraphSpectra, LmiKind, Mode, ProtocolDesign};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphSection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub runs: Vec<Run>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub comparison: Vec<ComparisonRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// SHA-256 of the canonical JSON of all inputs and flags.
    pub config_hash: String,
    pub seed: Option<u64>,
}

impl Provenance {
    pub fn new(command: &str, config: &serde_json::Value, seed: Option<u64>) -> Self {
        // serde_json maps are key-sorted, so this serialisation is canonical.
        let digest = Sha256::digest(config.to_string().as_bytes());
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_hash: hex::encode(digest),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSection {
    pub nodes: usize,
    pub edges: usize,
    pub flags: FlagsOut,
    pub laplacian: Rows,
    /// Left Perron vector; only for strongly connected graphs.
    pub r: Option<Vec<f64>>,
    pub a_of_l: Option<f64>,
    /// lambda_2((L + L^T)/2); only for balanced strongly connected graphs.
    pub lambda2: Option<f64>,
    pub leader_follower: Option<LeaderFollowerOut>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlagsOut {
    pub strongly_connected: bool,
    pub balanced: bool,
    pub has_spanning_tree: bool,
    pub leader: Option<usize>,
}

impl From<GraphFlags> for FlagsOut {
    fn from(f: GraphFlags) -> Self {
        Self {
            strongly_connected: f.strongly_connected,
            balanced: f.balanced,
            has_spanning_tree: f.has_spanning_tree,
            leader: f.leader_follower_root.map(|i| i + 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderFollowerOut {
    pub leader: usize,
    pub followers: Vec<usize>,
    pub q: Vec<f64>,
    pub h: Rows,
    pub lambda1_h: f64,
    pub min_q: f64,
    pub lambda1_sym_l1: Option<f64>,
}

impl From<&LeaderFollowerData> for LeaderFollowerOut {
    fn from(lf: &LeaderFollowerData) -> Self {
        Self {
            leader: lf.leader + 1,
            followers: lf.followers.iter().map(|i| i + 1).collect(),
            q: lf.q.iter().copied().collect(),
            h: mat_to_rows(&lf.h),
            lambda1_h: lf.lambda1_h,
            min_q: lf.min_q,
            lambda1_sym_l1: lf.lambda1_sym_l1,
        }
    }
}

impl GraphSection {
    pub fn new(
        g: &lipcon::DiGraph,
        flags: GraphFlags,
        spectra: Option<&GraphSpectra>,
        lf: Option<&LeaderFollowerData>,
    ) -> Self {
        Self {
            nodes: g.n(),
            edges: g.edges().count(),
            flags: flags.into(),
            laplacian: mat_to_rows(&lipcon::graph::laplacian(g)),
            r: spectra.map(|s| s.r.iter().copied().collect()),
            a_of_l: spectra.map(|s| s.a_of_l),
            lambda2: spectra.and_then(|s| s.lambda2_sym),
            leader_follower: lf.map(Into::into),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Run {
    pub name: String,
    pub certificate: CertificateOut,
    pub design: DesignOut,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationOut>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateOut {
    pub lmi: LmiKind,
    pub p: Rows,
    pub scalar: f64,
    /// `-lambda_max` of the assembled LMI.
    pub margin: f64,
    pub injected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignOut {
    pub mode: Mode,
    pub k: Rows,
    pub c: f64,
    pub c_threshold: f64,
    pub graph_factor: f64,
    pub gamma: Option<f64>,
    pub leader: Option<usize>,
    pub simplified_threshold: Option<f64>,
}

impl Run {
    pub fn new(name: &str, d: &ProtocolDesign) -> Self {
        let lmi = if d.mode == Mode::Hinf {
            LmiKind::Hinf { gamma: d.gamma.unwrap_or(0.0) }
        } else {
            LmiKind::Consensus
        };
        Self {
            name: name.into(),
            certificate: CertificateOut {
                lmi,
                p: mat_to_rows(&d.cert.p),
                scalar: d.cert.scalar,
                margin: d.cert.margin,
                injected: d.injected,
            },
            design: DesignOut {
                mode: d.mode,
                k: mat_to_rows(&d.k),
                c: d.c,
                c_threshold: d.c_threshold,
                graph_factor: d.graph_factor,
                gamma: d.gamma,
                leader: d.leader.map(|i| i + 1),
                simplified_threshold: d.simplified_threshold,
            },
            simulation: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationOut {
    pub csv: Option<String>,
    pub t_end: f64,
    pub dt: f64,
    pub steps: usize,
    pub disturbance: String,
    pub zero_initial_state: bool,
    /// `max_i |e_i|` at the final sample.
    pub final_consensus_error: f64,
    pub final_max_pairwise_distance: f64,
    /// First time after which the max pairwise distance stays below 1e-3.
    pub settling_time: Option<f64>,
    pub j: f64,
    pub z_energy: f64,
    pub w_energy: f64,
    pub empirical_gain: Option<f64>,
    pub v0: f64,
    pub v_final: f64,
    /// Fraction of steps where V does not rise by more than 1e-10 V(0).
    pub v_decrease_fraction: f64,
}

pub const SETTLE_THRESHOLD: f64 = 1e-3;
pub const LYAPUNOV_REL_TOL: f64 = 1e-10;

impl SimulationOut {
    pub fn new(traj: &Trajectory, dt: f64, disturbance: &str, csv: Option<String>, gamma: f64) -> Self {
        let cost: HinfCost = sim::hinf_cost(traj, gamma);
        let lyap: LyapunovReport = sim::lyapunov_diag(traj, LYAPUNOV_REL_TOL);
        let n = traj.state_dim;
        let last = traj.errors.last().expect("trajectory is nonempty");
        let final_consensus_error = (0..traj.agents)
            .map(|i| last.rows(i * n, n).norm())
            .fold(0.0, f64::max);
        let k = traj.times.len() - 1;
        Self {
            csv,
            t_end: traj.times[k],
            dt,
            steps: k,
            disturbance: disturbance.into(),
            zero_initial_state: cost.zero_initial_state,
            final_consensus_error,
            final_max_pairwise_distance: traj.max_pairwise_distance(k),
            settling_time: traj.settling_time(SETTLE_THRESHOLD),
            j: cost.j,
            z_energy: cost.z_energy,
            w_energy: cost.w_energy,
            empirical_gain: cost.empirical_gain,
            v0: lyap.v0,
            v_final: lyap.v_final,
            v_decrease_fraction: 1.0 - lyap.increase_fraction,
        }
    }
}

/// Computed value against a published reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub quantity: String,
    pub computed: f64,
    pub published: f64,
    pub abs_diff: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl ComparisonRow {
    pub fn new(quantity: &str, computed: f64, published: f64, tolerance: f64) -> Self {
        let abs_diff = (computed - published).abs();
        Self {
            quantity: quantity.into(),
            computed,
            published,
            abs_diff,
            tolerance,
            pass: abs_diff <= tolerance,
        }
    }
}

pub fn comparison_table(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("| quantity | computed | published | abs diff | tolerance | status |\n");
    out.push_str("|---|---|---|---|---|---|\n");
    for r in rows {
        out.push_str(&format!(
            "| {} | {:.6} | {:.4} | {:.3e} | {:.0e} | {} |\n",
            r.quantity,
            r.computed,
            r.published,
            r.abs_diff,
            r.tolerance,
            if r.pass { "PASS" } else { "FAIL" }
        ));
    }
    out
}

impl Report {
    pub fn new(provenance: Provenance) -> Self {
        Self {
            provenance,
            graph: None,
            runs: Vec::new(),
            comparison: Vec::new(),
        }
    }

    /// Pretty JSON. Fails if a number would not survive the round trip,
    /// which is how non-finite values surface (JSON has no NaN or inf).
    pub fn to_json(&self) -> Result<String> {
        let text = serde_json::to_string_pretty(self)?;
        match serde_json::from_str::<Report>(&text) {
            Ok(back) if back == *self => Ok(text),
            _ => bail!("report contains non-finite values"),
        }
    }
}
