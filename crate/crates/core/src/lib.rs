//! Distributed consensus protocols for networks of identical Lipschitz
//! nonlinear agents over directed graphs.
//!
//! The pipeline runs graph analysis ([`graph`]), LMI certification
//! ([`lmi`]), gain and coupling-strength design ([`synthesis`]) and
//! closed-loop simulation ([`sim`]).

pub mod error;
pub mod graph;
pub mod lmi;
pub mod model;
pub mod numkit;
pub mod repro;
pub mod sim;
pub mod synthesis;

pub use error::{Error, Result};
pub use graph::{DiGraph, GraphFlags, GraphSpectra, LeaderFollowerData};
pub use lmi::{LmiCertificate, LmiKind, LmiProblem, SolverOptions, VerifyReport};
pub use model::{AgentModel, Nonlinearity, Term};
pub use numkit::{Mat, Vector};
pub use sim::{Disturbance, Scenario, Trajectory, Waveform};
pub use synthesis::{CertificateSource, DesignOptions, Mode, ProtocolDesign};
