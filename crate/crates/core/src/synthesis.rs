//! Protocol design: an LMI certificate `(P, s)` gives the gain
//! `K = -1/2 B^T P^-1`, and the graph gives the lower bound on the
//! coupling strength `c`.
//!
//! | mode            | LMI       | threshold                          |
//! |-----------------|-----------|------------------------------------|
//! | leaderless      | consensus | `s / a(L)`                         |
//! | H∞              | H∞(γ)     | `s / lambda2((L + L^T)/2)`         |
//! | leader-follower | consensus | `s / (lambda_min(H) * min q)`      |

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{GraphSpectra, LeaderFollowerData};
use crate::lmi::{self, LmiCertificate, LmiProblem, SolverOptions};
use crate::model::AgentModel;
use crate::numkit::{self, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Leaderless,
    Hinf,
    LeaderFollower,
}

/// Where the certificate comes from.
#[derive(Debug, Clone)]
pub enum CertificateSource {
    Solve(SolverOptions),
    /// Externally supplied `(P, s)`; must be strictly feasible but skips the solver.
    Inject { p: Mat, scalar: f64 },
}

impl Default for CertificateSource {
    fn default() -> Self {
        CertificateSource::Solve(SolverOptions::default())
    }
}

#[derive(Debug, Clone)]
pub struct DesignOptions {
    pub source: CertificateSource,
    /// `c = c_multiplier * c_threshold`; must be >= 1.
    pub c_multiplier: f64,
    /// Explicit coupling strength; overrides the multiplier. Must be >= the threshold
    /// unless `allow_below_threshold` is set.
    pub c_override: Option<f64>,
    pub allow_below_threshold: bool,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self {
            source: CertificateSource::default(),
            c_multiplier: 1.0,
            c_override: None,
            allow_below_threshold: false,
        }
    }
}

impl DesignOptions {
    pub fn inject(p: Mat, scalar: f64) -> Self {
        Self {
            source: CertificateSource::Inject { p, scalar },
            ..Self::default()
        }
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c_override = Some(c);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolDesign {
    pub mode: Mode,
    pub k: Mat,
    pub c: f64,
    pub c_threshold: f64,
    /// Graph quantity dividing the scalar in the threshold.
    pub graph_factor: f64,
    pub cert: LmiCertificate,
    pub gamma: Option<f64>,
    pub injected: bool,
    /// Leader-follower only: index of the leader node.
    pub leader: Option<usize>,
    /// Leader-follower only: the simplified bound `s / lambda_min((L1 + L1^T)/2)`
    /// when the follower subgraph is balanced and strongly connected.
    pub simplified_threshold: Option<f64>,
}

/// `K = -1/2 B^T P^-1`
pub fn gain(model: &AgentModel, p: &Mat) -> Result<Mat> {
    let pinv_b = numkit::solve_linear(p, &model.b)?;
    Ok(pinv_b.transpose() * -0.5)
}

fn certificate(problem: &LmiProblem<'_>, source: &CertificateSource) -> Result<(LmiCertificate, bool)> {
    match source {
        CertificateSource::Solve(opts) => {
            let cert = lmi::solve_with(problem, opts)?;
            if !cert.feasible {
                return Err(Error::InfeasibleWithinBudget {
                    best_margin: cert.margin,
                });
            }
            Ok((cert, false))
        }
        CertificateSource::Inject { p, scalar } => {
            let report = lmi::verify_with(problem, p, *scalar, numkit::tol::LMI_STRICT);
            if !report.strictly_feasible() {
                return Err(Error::Invalid(format!(
                    "injected certificate is not strictly feasible: lambda_min(P) = {:e}, scalar = {:e}, lambda_max(LMI) = {:e}",
                    report.p_min_eig, report.scalar, report.lmi_max_eig
                )));
            }
            Ok((
                LmiCertificate {
                    p: p.clone(),
                    scalar: *scalar,
                    margin: report.margin(),
                    feasible: true,
                },
                true,
            ))
        }
    }
}

fn pick_c(threshold: f64, opts: &DesignOptions) -> Result<f64> {
    if let Some(c) = opts.c_override {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Invalid(format!("coupling strength must be positive, got {c}")));
        }
        if c < threshold && !opts.allow_below_threshold {
            return Err(Error::Invalid(format!(
                "coupling strength {c} is below the design threshold {threshold}"
            )));
        }
        return Ok(c);
    }
    if !(opts.c_multiplier >= 1.0) {
        return Err(Error::Invalid(format!(
            "c multiplier must be >= 1, got {}",
            opts.c_multiplier
        )));
    }
    Ok(threshold * opts.c_multiplier)
}

/// Leaderless consensus over a strongly connected digraph.
pub fn design_leaderless(
    model: &AgentModel,
    spectra: &GraphSpectra,
    opts: &DesignOptions,
) -> Result<ProtocolDesign> {
    if !spectra.flags.strongly_connected {
        return Err(Error::Precondition(
            "leaderless consensus requires a strongly connected graph".into(),
        ));
    }
    let problem = LmiProblem::consensus(model);
    let (cert, injected) = certificate(&problem, &opts.source)?;
    let k = gain(model, &cert.p)?;
    let c_threshold = cert.scalar / spectra.a_of_l;
    Ok(ProtocolDesign {
        mode: Mode::Leaderless,
        k,
        c: pick_c(c_threshold, opts)?,
        c_threshold,
        graph_factor: spectra.a_of_l,
        cert,
        gamma: None,
        injected,
        leader: None,
        simplified_threshold: None,
    })
}

/// Consensus with guaranteed H∞ performance `gamma` over a balanced,
/// strongly connected digraph.
pub fn design_hinf(
    model: &AgentModel,
    spectra: &GraphSpectra,
    gamma: f64,
    opts: &DesignOptions,
) -> Result<ProtocolDesign> {
    let lambda2 = match spectra.lambda2_sym {
        Some(l) if spectra.flags.strongly_connected && spectra.flags.balanced => l,
        _ => {
            return Err(Error::Precondition(
                "H∞ consensus requires a balanced and strongly connected graph".into(),
            ))
        }
    };
    let problem = LmiProblem::hinf(model, gamma);
    problem.validate()?;
    let (cert, injected) = certificate(&problem, &opts.source)?;
    let k = gain(model, &cert.p)?;
    let c_threshold = cert.scalar / lambda2;
    Ok(ProtocolDesign {
        mode: Mode::Hinf,
        k,
        c: pick_c(c_threshold, opts)?,
        c_threshold,
        graph_factor: lambda2,
        cert,
        gamma: Some(gamma),
        injected,
        leader: None,
        simplified_threshold: None,
    })
}

/// Leader-follower tracking; `lf` already encodes the spanning-tree check.
pub fn design_leader_follower(
    model: &AgentModel,
    lf: &LeaderFollowerData,
    opts: &DesignOptions,
) -> Result<ProtocolDesign> {
    if !(lf.min_q > 0.0) {
        return Err(Error::Precondition(
            "leader-follower design requires a directed spanning tree rooted at the leader".into(),
        ));
    }
    // diag(1/q) does not symmetrise every L1 to a positive definite H.
    if !(lf.lambda1_h > 0.0) {
        return Err(Error::Precondition(format!(
            "H = (G L1 + L1^T G)/2 is not positive definite (lambda_1 = {:e}); no coupling bound",
            lf.lambda1_h
        )));
    }
    let problem = LmiProblem::consensus(model);
    let (cert, injected) = certificate(&problem, &opts.source)?;
    let k = gain(model, &cert.p)?;
    let graph_factor = lf.lambda1_h * lf.min_q;
    let c_threshold = cert.scalar / graph_factor;
    let simplified_threshold = lf.lambda1_sym_l1.map(|l| cert.scalar / l);
    Ok(ProtocolDesign {
        mode: Mode::LeaderFollower,
        k,
        c: pick_c(c_threshold, opts)?,
        c_threshold,
        graph_factor,
        cert,
        gamma: None,
        injected,
        leader: Some(lf.leader),
        simplified_threshold,
    })
}

/// `lambda_max(A P + P A^T + alpha^2 D1 D1^T + P^2 - c * connectivity * B B^T)`;
/// negative whenever `c * connectivity >= s` for a feasible certificate.
pub fn closed_loop_form_max_eig(model: &AgentModel, design: &ProtocolDesign, connectivity: f64) -> Result<f64> {
    let p = &design.cert.p;
    let form = &model.a * p + p * model.a.transpose()
        + &model.d1 * model.d1.transpose() * (model.alpha * model.alpha)
        + p * p
        - &model.b * model.b.transpose() * (design.c * connectivity);
    numkit::max_eigenvalue(&form)
}
