//! Agent dynamics `x' = A x + D1 f(x) + B u + D2 w`, performance output
//! `C`, and a serialisable catalogue of Lipschitz nonlinearities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{self, Mat, Vector};

/// One term `coeff * phi(x[input])` added to output component `output`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub output: usize,
    pub input: usize,
    pub coeff: f64,
}

/// Componentwise nonlinearities built from 1-Lipschitz scalar maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Nonlinearity {
    Zero,
    Sine { terms: Vec<Term> },
    /// Unit saturation `clamp(x, -1, 1)`.
    Saturation { terms: Vec<Term> },
    Tanh { terms: Vec<Term> },
}

impl Nonlinearity {
    pub fn terms(&self) -> &[Term] {
        match self {
            Nonlinearity::Zero => &[],
            Nonlinearity::Sine { terms }
            | Nonlinearity::Saturation { terms }
            | Nonlinearity::Tanh { terms } => terms,
        }
    }

    fn phi(&self, v: f64) -> f64 {
        match self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Sine { .. } => v.sin(),
            Nonlinearity::Saturation { .. } => v.clamp(-1.0, 1.0),
            Nonlinearity::Tanh { .. } => v.tanh(),
        }
    }

    /// Writes `f(x)` into `out` (length = output dimension).
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for t in self.terms() {
            out[t.output] += t.coeff * self.phi(x[t.input]);
        }
    }

    pub fn eval(&self, x: &[f64], out_dim: usize) -> Vector {
        let mut out = vec![0.0; out_dim];
        self.eval_into(x, &mut out);
        Vector::from_vec(out)
    }

    /// Analytic Lipschitz bound: Frobenius norm of the aggregated |coeff| matrix.
    pub fn lipschitz_bound(&self, state_dim: usize, out_dim: usize) -> f64 {
        let mut m = Mat::zeros(out_dim, state_dim);
        for t in self.terms() {
            m[(t.output, t.input)] += t.coeff.abs();
        }
        m.norm()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentModel {
    pub a: Mat,
    pub b: Mat,
    pub d1: Mat,
    pub d2: Mat,
    pub c_out: Mat,
    pub alpha: f64,
    pub f: Nonlinearity,
}

impl AgentModel {
    /// Validates dimensions, finiteness and nonlinearity indices.
    pub fn new(
        a: Mat,
        b: Mat,
        d1: Mat,
        d2: Mat,
        c_out: Mat,
        alpha: f64,
        f: Nonlinearity,
    ) -> Result<Self> {
        let model = Self {
            a,
            b,
            d1,
            d2,
            c_out,
            alpha,
            f,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.a.nrows();
        if self.a.ncols() != n || n == 0 {
            return Err(Error::Dimension(format!(
                "A must be square and nonempty, got {}x{}",
                self.a.nrows(),
                self.a.ncols()
            )));
        }
        for (name, m) in [("B", &self.b), ("D1", &self.d1), ("D2", &self.d2)] {
            if m.nrows() != n {
                return Err(Error::Dimension(format!(
                    "{name} has {} rows, expected {n}",
                    m.nrows()
                )));
            }
        }
        if self.c_out.ncols() != n {
            return Err(Error::Dimension(format!(
                "C has {} columns, expected {n}",
                self.c_out.ncols()
            )));
        }
        for m in [&self.a, &self.b, &self.d1, &self.d2, &self.c_out] {
            numkit::check_finite(m)?;
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Invalid(format!(
                "Lipschitz constant must be finite and >= 0, got {}",
                self.alpha
            )));
        }
        let k = self.d1.ncols();
        for t in self.f.terms() {
            if t.output >= k || t.input >= n || !t.coeff.is_finite() {
                return Err(Error::Invalid(format!(
                    "nonlinearity term {t:?} out of range (state dim {n}, output dim {k})"
                )));
            }
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn nonlinearity_dim(&self) -> usize {
        self.d1.ncols()
    }

    pub fn disturbance_dim(&self) -> usize {
        self.d2.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.c_out.nrows()
    }

    pub fn f(&self, x: &[f64]) -> Vector {
        self.f.eval(x, self.nonlinearity_dim())
    }

    /// Sampled check of `|f(x) - f(y)| <= (alpha + 1e-9) |x - y|` over
    /// `samples` random pairs in `[-half_width, half_width]^n`.
    pub fn check_lipschitz(&self, samples: usize, half_width: f64, seed: u64) -> LipschitzCheck {
        let n = self.state_dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst_ratio = 0.0f64;
        for _ in 0..samples {
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-half_width..=half_width)).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-half_width..=half_width)).collect();
            let dx = Vector::from_iterator(n, x.iter().zip(&y).map(|(a, b)| a - b)).norm();
            if dx == 0.0 {
                continue;
            }
            let df = (self.f(&x) - self.f(&y)).norm();
            worst_ratio = worst_ratio.max(df / dx);
        }
        LipschitzCheck {
            worst_ratio,
            holds: worst_ratio <= self.alpha + 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzCheck {
    pub worst_ratio: f64,
    pub holds: bool,
}
