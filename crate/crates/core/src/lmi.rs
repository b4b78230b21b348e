//! Strict feasibility for the two synthesis LMIs.
//!
//! Consensus kind (also used for leader-follower):
//!
//! ```text
//! [ A P + P A^T - s B B^T + alpha^2 D1 D1^T   P ]
//! [ P                                        -I ]  < 0,   P > 0, s > 0
//! ```
//!
//! H∞ kind adds the `Q C^T` and `D2` borders with `-I` and `-gamma^2 I`
//! diagonal blocks.
//!
//! The solver is a primal log-det barrier method in two phases. Phase one
//! maximises a common margin `-t` over all three constraints. Phase two
//! keeps half of that margin and minimises the scalar, which keeps the
//! resulting coupling strength (and the stiffness of the closed loop) small.
//! The solver never certifies infeasibility.

use nalgebra::Cholesky;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::AgentModel;
use crate::numkit::{self, tol, Mat, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LmiKind {
    Consensus,
    Hinf { gamma: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct LmiProblem<'a> {
    pub kind: LmiKind,
    pub model: &'a AgentModel,
}

impl<'a> LmiProblem<'a> {
    pub fn consensus(model: &'a AgentModel) -> Self {
        Self {
            kind: LmiKind::Consensus,
            model,
        }
    }

    pub fn hinf(model: &'a AgentModel, gamma: f64) -> Self {
        Self {
            kind: LmiKind::Hinf { gamma },
            model,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if let LmiKind::Hinf { gamma } = self.kind {
            if !(gamma > 0.0 && gamma.is_finite()) {
                return Err(Error::Invalid(format!("gamma must be positive, got {gamma}")));
            }
        }
        Ok(())
    }

    /// Side length of the assembled block matrix.
    pub fn block_dim(&self) -> usize {
        let n = self.model.state_dim();
        match self.kind {
            LmiKind::Consensus => 2 * n,
            LmiKind::Hinf { .. } => 2 * n + self.model.output_dim() + self.model.disturbance_dim(),
        }
    }
}

/// `(P, scalar)` pair plus the margin `-lambda_max(assemble(P, scalar))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmiCertificate {
    pub p: Mat,
    pub scalar: f64,
    pub margin: f64,
    pub feasible: bool,
}

/// Assembles the block matrix for a given `(p, scalar)`.
pub fn assemble(problem: &LmiProblem<'_>, p: &Mat, scalar: f64) -> Result<Mat> {
    let m = problem.model;
    let n = m.state_dim();
    if p.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "P is {}x{}, expected {n}x{n}",
            p.nrows(),
            p.ncols()
        )));
    }
    let top = &m.a * p + p * m.a.transpose() - &m.b * m.b.transpose() * scalar
        + &m.d1 * m.d1.transpose() * (m.alpha * m.alpha);
    let dim = problem.block_dim();
    let mut out = Mat::zeros(dim, dim);
    out.view_mut((0, 0), (n, n)).copy_from(&top);
    out.view_mut((0, n), (n, n)).copy_from(p);
    out.view_mut((n, 0), (n, n)).copy_from(p);
    out.view_mut((n, n), (n, n)).fill_with_identity();
    out.view_mut((n, n), (n, n)).neg_mut();

    if let LmiKind::Hinf { gamma } = problem.kind {
        let m2 = m.output_dim();
        let m1 = m.disturbance_dim();
        let pc = p * m.c_out.transpose();
        let o = 2 * n;
        out.view_mut((0, o), (n, m2)).copy_from(&pc);
        out.view_mut((o, 0), (m2, n)).copy_from(&pc.transpose());
        for i in 0..m2 {
            out[(o + i, o + i)] = -1.0;
        }
        let o2 = o + m2;
        out.view_mut((0, o2), (n, m1)).copy_from(&m.d2);
        out.view_mut((o2, 0), (m1, n)).copy_from(&m.d2.transpose());
        for i in 0..m1 {
            out[(o2 + i, o2 + i)] = -gamma * gamma;
        }
    }
    Ok(out)
}

/// Margins recomputed through the symmetric eigensolver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub p_min_eig: f64,
    pub scalar: f64,
    pub lmi_max_eig: f64,
    /// Strictness threshold `LMI_STRICT * (1 + |assembled|_F)`.
    pub tolerance: f64,
    pub p_ok: bool,
    pub scalar_ok: bool,
    pub lmi_ok: bool,
    pub passed: bool,
}

impl VerifyReport {
    pub fn margin(&self) -> f64 {
        -self.lmi_max_eig
    }

    /// All three inequalities hold strictly, ignoring the relative threshold.
    pub fn strictly_feasible(&self) -> bool {
        self.p_min_eig > 0.0 && self.scalar > 0.0 && self.lmi_max_eig < 0.0
    }
}

pub fn verify(problem: &LmiProblem<'_>, cert: &LmiCertificate) -> VerifyReport {
    verify_with(problem, &cert.p, cert.scalar, tol::LMI_STRICT)
}

pub fn verify_with(problem: &LmiProblem<'_>, p: &Mat, scalar: f64, rel_tol: f64) -> VerifyReport {
    let failed = VerifyReport {
        p_min_eig: f64::NAN,
        scalar,
        lmi_max_eig: f64::NAN,
        tolerance: f64::NAN,
        p_ok: false,
        scalar_ok: false,
        lmi_ok: false,
        passed: false,
    };
    let Ok(assembled) = assemble(problem, p, scalar) else {
        return failed;
    };
    let (Ok(p_min), Ok(lmi_max)) = (numkit::min_eigenvalue(p), numkit::max_eigenvalue(&assembled))
    else {
        return failed;
    };
    let tolerance = rel_tol * (1.0 + assembled.norm());
    let p_ok = p_min >= rel_tol * (1.0 + p.norm());
    let scalar_ok = scalar >= rel_tol;
    let lmi_ok = -lmi_max >= tolerance;
    VerifyReport {
        p_min_eig: p_min,
        scalar,
        lmi_max_eig: lmi_max,
        tolerance,
        p_ok,
        scalar_ok,
        lmi_ok,
        passed: p_ok && scalar_ok && lmi_ok,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Deterministic restarts with the initial scalar (and hence its scale in
    /// the regularisation) multiplied by 10.
    pub max_restarts: usize,
    pub max_newton_steps: usize,
    /// Run the scalar-minimising second phase.
    pub minimize_scalar: bool,
    /// Fraction of the phase-one margin kept as a hard floor in phase two.
    pub margin_fraction: f64,
    pub verify_rel_tol: f64,
    /// Weight of the scale penalty on `tr P` and the scalar in both phases.
    pub regularisation: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_restarts: 6,
            max_newton_steps: 200,
            minimize_scalar: true,
            margin_fraction: 0.5,
            verify_rel_tol: tol::LMI_STRICT,
            regularisation: 1e-3,
        }
    }
}

pub fn solve(problem: &LmiProblem<'_>) -> Result<LmiCertificate> {
    solve_with(problem, &SolverOptions::default())
}

pub fn solve_with(problem: &LmiProblem<'_>, opts: &SolverOptions) -> Result<LmiCertificate> {
    problem.validate()?;
    let n = problem.model.state_dim();
    let a_norm = problem.model.a.norm();
    let base = if a_norm > 0.0 { a_norm } else { 1.0 };

    let affine = AffineLmi::new(problem)?;
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut scalar0 = 10.0 * base * base;
    // Absolute head-room for the verifier's check on lambda_min(P).
    let p_floor = 10.0 * opts.verify_rel_tol;

    for _ in 0..=opts.max_restarts {
        let p0 = Mat::identity(n, n) * base;
        let mut y = sym_to_vec(&p0);
        y.push(scalar0);
        let phase1 = affine.phase_one(&y, p_floor, opts.regularisation, opts.max_newton_steps);
        if let Some((y1, t1)) = phase1 {
            if best.as_ref().is_none_or(|(_, t)| t1 < *t) {
                best = Some((y1.clone(), t1));
            }
            if t1 < 0.0 {
                let cert = finish(problem, &affine, &y1, t1, opts)?;
                if cert.feasible {
                    return Ok(cert);
                }
            }
        }
        scalar0 *= 10.0;
    }

    let (p, scalar) = match best {
        Some((y, _)) => split(&y, n),
        None => (Mat::identity(n, n) * base, 10.0 * base * base),
    };
    let margin = -numkit::max_eigenvalue(&assemble(problem, &p, scalar)?)?;
    Ok(LmiCertificate {
        p,
        scalar,
        margin,
        feasible: false,
    })
}

fn finish(
    problem: &LmiProblem<'_>,
    affine: &AffineLmi,
    y1: &[f64],
    t1: f64,
    opts: &SolverOptions,
) -> Result<LmiCertificate> {
    let n = problem.model.state_dim();
    let mut candidates = Vec::with_capacity(2);
    if opts.minimize_scalar {
        let floor = -t1 * opts.margin_fraction;
        let s1 = y1[y1.len() - 1];
        if let Some(y2) = affine.phase_two(
            y1,
            floor,
            10.0 * opts.verify_rel_tol,
            s1 * 1e-9,
            opts.regularisation,
            opts.max_newton_steps,
        ) {
            candidates.push(y2);
        }
    }
    candidates.push(y1.to_vec());

    let mut last = None;
    for y in candidates {
        let (p, scalar) = split(&y, n);
        let p = numkit::symmetrize(&p);
        let report = verify_with(problem, &p, scalar, opts.verify_rel_tol);
        let cert = LmiCertificate {
            margin: report.margin(),
            feasible: report.passed,
            p,
            scalar,
        };
        if cert.feasible {
            return Ok(cert);
        }
        last = Some(cert);
    }
    Ok(last.expect("at least one candidate"))
}

fn sym_index_pairs(n: usize) -> Vec<(usize, usize)> {
    let mut v = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            v.push((i, j));
        }
    }
    v
}

fn sym_to_vec(p: &Mat) -> Vec<f64> {
    sym_index_pairs(p.nrows())
        .into_iter()
        .map(|(i, j)| p[(i, j)])
        .collect()
}

fn split(y: &[f64], n: usize) -> (Mat, f64) {
    let mut p = Mat::zeros(n, n);
    for (k, (i, j)) in sym_index_pairs(n).into_iter().enumerate() {
        p[(i, j)] = y[k];
        p[(j, i)] = y[k];
    }
    (p, y[n * (n + 1) / 2])
}

/// `S(y) = s0 + sum_k y_k s[k]`, required positive definite.
struct AffineBlock {
    s0: Mat,
    s: Vec<Mat>,
    /// Extra log-det weight that grows with the barrier parameter, turning
    /// the block's barrier into a regulariser that survives to the end.
    sticky: f64,
}

impl AffineBlock {
    fn eval(&self, y: &[f64]) -> Mat {
        let mut out = self.s0.clone();
        for (yk, sk) in y.iter().zip(&self.s) {
            if *yk != 0.0 {
                out += sk * *yk;
            }
        }
        out
    }
}

/// The LMI written as `F(y) = f0 + sum_k y_k f[k]` over `y = (vech(P), scalar)`.
struct AffineLmi {
    n: usize,
    f0: Mat,
    f: Vec<Mat>,
}

impl AffineLmi {
    fn new(problem: &LmiProblem<'_>) -> Result<Self> {
        let n = problem.model.state_dim();
        let zero = Mat::zeros(n, n);
        let f0 = assemble(problem, &zero, 0.0)?;
        let mut f = Vec::new();
        for (i, j) in sym_index_pairs(n) {
            let mut e = Mat::zeros(n, n);
            e[(i, j)] = 1.0;
            e[(j, i)] = 1.0;
            f.push(assemble(problem, &e, 0.0)? - &f0);
        }
        f.push(assemble(problem, &zero, 1.0)? - &f0);
        Ok(Self { n, f0, f })
    }

    fn vars(&self) -> usize {
        self.f.len()
    }

    fn p_basis(&self) -> Vec<Mat> {
        sym_index_pairs(self.n)
            .into_iter()
            .map(|(i, j)| {
                let mut e = Mat::zeros(self.n, self.n);
                e[(i, j)] = 1.0;
                e[(j, i)] = 1.0;
                e
            })
            .collect()
    }

    fn eval_f(&self, y: &[f64]) -> Mat {
        let mut out = self.f0.clone();
        for (yk, fk) in y.iter().zip(&self.f) {
            out += fk * *yk;
        }
        out
    }

    /// Linear objective `weight_t t + reg (tr P / p_scale + s / s_scale)` over
    /// `(vech(P), s[, t])`. The trace term keeps directions that barely affect
    /// the margin from drifting to huge, badly conditioned values.
    fn regularised_cost(&self, reg: f64, p_scale: f64, s_scale: f64, with_t: bool) -> Vec<f64> {
        let m = self.vars();
        let mut c: Vec<f64> = sym_index_pairs(self.n)
            .into_iter()
            .map(|(i, j)| if i == j { reg / p_scale } else { 0.0 })
            .collect();
        c.push(reg / s_scale);
        if with_t {
            c.push(1.0);
        }
        debug_assert_eq!(c.len(), m + usize::from(with_t));
        c
    }

    /// `P - rho (tr P / n) I - floor I`: bounds the spread of P's spectrum
    /// without tying its smallest eigenvalue to the LMI margin.
    fn p_relative(&self, rho: f64, floor: f64, sticky: f64, vars: usize) -> AffineBlock {
        let n = self.n;
        let shift = Mat::identity(n, n) * (rho / n as f64);
        let mut s: Vec<Mat> = sym_index_pairs(n)
            .into_iter()
            .zip(self.p_basis())
            .map(|((i, j), e)| if i == j { e - &shift } else { e })
            .collect();
        s.resize(vars, Mat::zeros(n, n));
        AffineBlock {
            s0: Mat::identity(n, n) * -floor,
            s,
            sticky,
        }
    }

    /// Minimises `t + reg (tr P / p_scale + s / s_scale)` subject to
    /// `F(y) < tI`, `P > rho (tr P / n) I + p_floor I`, `s > 0`. Returns the final `(y, t)` with `t`
    /// recomputed exactly as the largest eigenvalue of `F`.
    fn phase_one(&self, y0: &[f64], p_floor: f64, reg: f64, max_steps: usize) -> Option<(Vec<f64>, f64)> {
        let m = self.vars();
        let d = self.f0.nrows();
        let n = self.n;

        // tI - F(y)
        let mut s = self.f.iter().map(|fk| -fk).collect::<Vec<_>>();
        s.push(Mat::identity(d, d));
        let lmi = AffineBlock {
            s0: -&self.f0,
            s,
            sticky: 0.0,
        };

        let blocks = vec![
            lmi,
            self.p_relative(P_SPREAD, p_floor, reg, m + 1),
            scalar_block(m, 0.0, &[(m - 1, 1.0)]),
        ];

        let (p0, s0) = split(y0, n);
        if numkit::min_eigenvalue(&p0).ok()? <= 0.0 || s0 <= 0.0 {
            return None;
        }
        let t0 = numkit::max_eigenvalue(&self.eval_f(y0)).ok()? + 1.0;
        let mut start = y0.to_vec();
        start.push(t0);

        let c = self.regularised_cost(reg, p0.trace(), s0, true);
        let y = barrier(&blocks, &c, start, 1e-10, max_steps)?;
        let (p, sc) = split(&y, n);
        if numkit::min_eigenvalue(&p).ok()? <= 0.0 || sc <= 0.0 {
            return None;
        }
        let t = numkit::max_eigenvalue(&self.eval_f(&y[..m])).ok()?;
        Some((y[..m].to_vec(), t))
    }

    /// Minimises `s / s1 + reg tr P / tr P1` subject to `F(y) < -floor I`,
    /// `P > (rho / 2) (tr P / n) I + p_floor I`, `s > s_floor`, starting from
    /// `y0 = (P1, s1)`, which satisfies all of them.
    fn phase_two(
        &self,
        y0: &[f64],
        floor: f64,
        p_floor: f64,
        s_floor: f64,
        reg: f64,
        max_steps: usize,
    ) -> Option<Vec<f64>> {
        let m = self.vars();
        let d = self.f0.nrows();
        let n = self.n;
        let blocks = vec![
            AffineBlock {
                s0: -&self.f0 - Mat::identity(d, d) * floor,
                s: self.f.iter().map(|fk| -fk).collect(),
                sticky: 0.0,
            },
            self.p_relative(0.5 * P_SPREAD, p_floor, reg, m),
            scalar_block(m - 1, -s_floor, &[(m - 1, 1.0)]),
        ];
        let (p1, s1) = split(y0, n);
        let mut c = self.regularised_cost(reg, p1.trace(), 1.0, false);
        c[m - 1] = 1.0 / s1;
        barrier(&blocks, &c, y0.to_vec(), 1e-9, max_steps)
    }
}

/// Lower bound on `lambda_min(P) / (tr P / n)` enforced during the search.
const P_SPREAD: f64 = 1e-3;

/// 1x1 block `s0 + sum coeffs` over `vars` (+1 for the trailing index) variables.
fn scalar_block(last_index: usize, s0: f64, coeffs: &[(usize, f64)]) -> AffineBlock {
    let mut s = vec![Mat::zeros(1, 1); last_index + 1];
    for &(k, v) in coeffs {
        s[k][(0, 0)] = v;
    }
    AffineBlock {
        s0: Mat::from_element(1, 1, s0),
        s,
        sticky: 0.0,
    }
}

fn chol_logdet(s: &Mat) -> Option<(f64, Mat)> {
    let ch = Cholesky::new(s.clone())?;
    let l = ch.l_dirty();
    let logdet = 2.0 * (0..s.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>();
    Some((logdet, ch.inverse()))
}

/// Solves `H d = -g` after symmetric Jacobi scaling; variables can differ by
/// many orders of magnitude (P entries against the scalar).
fn newton_step(hess: &Mat, grad: &Vector) -> Option<Vector> {
    let m = grad.len();
    let d = Vector::from_iterator(m, hess.diagonal().iter().map(|h| if *h > 0.0 { 1.0 / h.sqrt() } else { 1.0 }));
    let scaled = Mat::from_fn(m, m, |i, j| hess[(i, j)] * d[i] * d[j]);
    let rhs = grad.component_mul(&d);
    let z = match Cholesky::new(scaled.clone()) {
        Some(ch) => ch.solve(&rhs),
        None => Cholesky::new(scaled + Mat::identity(m, m) * 1e-12)?.solve(&rhs),
    };
    Some(-z.component_mul(&d))
}

fn objective(blocks: &[AffineBlock], c: &[f64], sigma: f64, y: &[f64]) -> Option<f64> {
    let mut val = sigma * c.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
    for b in blocks {
        let (ld, _) = chol_logdet(&b.eval(y))?;
        val -= (1.0 + sigma * b.sticky) * ld;
    }
    Some(val)
}

/// Barrier method for `min c^T y` over `{y : S_b(y) > 0}` from a strictly
/// feasible start. Stops when the duality-gap bound `sum dim(S_b) / sigma`
/// drops below `gap_tol`.
fn barrier(
    blocks: &[AffineBlock],
    c: &[f64],
    mut y: Vec<f64>,
    gap_tol: f64,
    max_steps: usize,
) -> Option<Vec<f64>> {
    let m = y.len();
    let total_dim: usize = blocks.iter().map(|b| b.s0.nrows()).sum();
    let mut sigma = 1.0;
    objective(blocks, c, sigma, &y)?;

    for _outer in 0..60 {
        for _ in 0..max_steps {
            let mut grad = Vector::from_iterator(m, c.iter().map(|ci| sigma * ci));
            let mut hess = Mat::zeros(m, m);
            for b in blocks {
                let (_, w) = chol_logdet(&b.eval(&y))?;
                let weight = 1.0 + sigma * b.sticky;
                let ws: Vec<Option<Mat>> = b
                    .s
                    .iter()
                    .map(|sk| (sk.iter().any(|v| *v != 0.0)).then(|| &w * sk))
                    .collect();
                for k in 0..m {
                    let Some(wk) = &ws[k] else { continue };
                    grad[k] -= weight * wk.trace();
                    for l in k..m {
                        let Some(wl) = &ws[l] else { continue };
                        let v = weight * (wk.component_mul(&wl.transpose())).sum();
                        hess[(k, l)] += v;
                        if l != k {
                            hess[(l, k)] += v;
                        }
                    }
                }
            }
            let step = newton_step(&hess, &grad)?;
            let decrement = -grad.dot(&step);
            if decrement / 2.0 < 1e-10 {
                break;
            }
            let f0 = objective(blocks, c, sigma, &y)?;
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..80 {
                let trial: Vec<f64> = y.iter().zip(step.iter()).map(|(a, d)| a + alpha * d).collect();
                if let Some(f1) = objective(blocks, c, sigma, &trial) {
                    if f1 <= f0 - 0.25 * alpha * decrement {
                        y = trial;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if total_dim as f64 / sigma < gap_tol {
            break;
        }
        sigma *= 10.0;
    }
    Some(y)
}
