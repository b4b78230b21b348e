//! On-disk formats: JSON models and certificates, plain-text edge lists,
//! JSON initial conditions.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use lipcon::numkit::{self, Mat, Vector};
use lipcon::{AgentModel, DiGraph, Nonlinearity};
use serde::{Deserialize, Serialize};

/// Row-major nested arrays; dimensions are implied by the nesting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub d1: Vec<Vec<f64>>,
    pub d2: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub alpha: f64,
    pub nonlinearity: Nonlinearity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

impl ModelFile {
    pub fn from_model(m: &AgentModel, gamma: Option<f64>) -> Self {
        Self {
            a: numkit::mat_to_rows(&m.a),
            b: numkit::mat_to_rows(&m.b),
            d1: numkit::mat_to_rows(&m.d1),
            d2: numkit::mat_to_rows(&m.d2),
            c: numkit::mat_to_rows(&m.c_out),
            alpha: m.alpha,
            nonlinearity: m.f.clone(),
            gamma,
        }
    }

    pub fn to_model(&self) -> Result<AgentModel> {
        let mat = |name: &str, rows: &[Vec<f64>]| {
            numkit::mat_from_rows(rows).with_context(|| format!("matrix `{name}`"))
        };
        Ok(AgentModel::new(
            mat("a", &self.a)?,
            mat("b", &self.b)?,
            mat("d1", &self.d1)?,
            mat("d2", &self.d2)?,
            mat("c", &self.c)?,
            self.alpha,
            self.nonlinearity.clone(),
        )?)
    }
}

/// An externally supplied LMI certificate `(P, scalar)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertFile {
    pub p: Vec<Vec<f64>>,
    pub scalar: f64,
}

impl CertFile {
    pub fn p(&self) -> Result<Mat> {
        numkit::mat_from_rows(&self.p).context("certificate matrix `p`")
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

pub fn load_model(path: &Path) -> Result<(AgentModel, Option<f64>)> {
    let file: ModelFile = load_json(path)?;
    let model = file.to_model().with_context(|| format!("model {}", path.display()))?;
    Ok((model, file.gamma))
}

pub fn load_graph(path: &Path) -> Result<DiGraph> {
    DiGraph::parse_edge_list(&read(path)?).with_context(|| format!("graph {}", path.display()))
}

/// One row per agent.
pub fn load_states(path: &Path) -> Result<Vec<Vector>> {
    let rows: Vec<Vec<f64>> = load_json(path)?;
    Ok(rows.into_iter().map(Vector::from_vec).collect())
}
