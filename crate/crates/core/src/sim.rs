//! Closed-loop network simulation.
//!
//! Every agent runs `x_i' = A x_i + D1 f(x_i) + B u_i + D2 w_i` with the
//! relative-state protocol `u_i = c K sum_j a_ij (x_i - x_j)`. States are
//! stacked agent-major: `x = [x_1; ...; x_N]`.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{self, DiGraph};
use crate::model::AgentModel;
use crate::numkit::{self, tol, Mat, Vector};
use crate::synthesis::{Mode, ProtocolDesign};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Waveform {
    None,
    /// +1 on [0, 1), -1 on [1, 2), 0 afterwards.
    Bipolar,
    /// +1 on [0, 2), 0 afterwards.
    Unipolar,
}

impl std::str::FromStr for Waveform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Waveform::None),
            "bipolar" => Ok(Waveform::Bipolar),
            "unipolar" => Ok(Waveform::Unipolar),
            other => Err(Error::Invalid(format!("unknown disturbance waveform `{other}`"))),
        }
    }
}

/// Single-period square wave of width 2 and height 1 starting at t = 0.
pub fn square_wave(t: f64, waveform: Waveform) -> f64 {
    match waveform {
        Waveform::None => 0.0,
        Waveform::Bipolar if (0.0..1.0).contains(&t) => 1.0,
        Waveform::Bipolar if (1.0..2.0).contains(&t) => -1.0,
        Waveform::Unipolar if (0.0..2.0).contains(&t) => 1.0,
        _ => 0.0,
    }
}

/// `w_i(t) = weights[i] * square_wave(t) * 1`, one entry per disturbance channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Disturbance {
    pub waveform: Waveform,
    pub weights: Vec<f64>,
}

impl Disturbance {
    pub fn none() -> Self {
        Self {
            waveform: Waveform::None,
            weights: Vec::new(),
        }
    }

    pub fn is_none(&self) -> bool {
        self.waveform == Waveform::None
    }

    /// Stacked `w(t)` of length `agents * channels`.
    pub fn eval(&self, t: f64, agents: usize, channels: usize) -> Vector {
        let w = square_wave(t, self.waveform);
        Vector::from_fn(agents * channels, |k, _| {
            if w == 0.0 {
                0.0
            } else {
                self.weights.get(k / channels).copied().unwrap_or(0.0) * w
            }
        })
    }
}

/// Precomputed right-hand side of the closed-loop network.
struct Network<'a> {
    model: &'a AgentModel,
    agents: usize,
    n: usize,
    /// `c B K`
    cbk: Mat,
    /// In-neighbours of each agent.
    neighbours: Vec<Vec<usize>>,
    /// Agent with the protocol switched off.
    leader: Option<usize>,
}

impl<'a> Network<'a> {
    fn new(model: &'a AgentModel, graph: &DiGraph, design: &ProtocolDesign, leader: Option<usize>) -> Result<Self> {
        let n = model.state_dim();
        if design.k.shape() != (model.input_dim(), n) {
            return Err(Error::Dimension(format!(
                "gain is {}x{}, model expects {}x{}",
                design.k.nrows(),
                design.k.ncols(),
                model.input_dim(),
                n
            )));
        }
        let agents = graph.n();
        let mut neighbours = vec![Vec::new(); agents];
        for (p, c) in graph.edges() {
            neighbours[c].push(p);
        }
        Ok(Self {
            model,
            agents,
            n,
            cbk: &model.b * &design.k * design.c,
            neighbours,
            leader,
        })
    }

    fn eval(&self, x: &Vector, omega: Option<&Vector>) -> Vector {
        let (n, m) = (self.n, self.model);
        let k = m.nonlinearity_dim();
        let m1 = m.disturbance_dim();
        let mut dx = Vector::zeros(self.agents * n);
        let mut fbuf = vec![0.0; k];
        for i in 0..self.agents {
            let xi = x.rows(i * n, n);
            let mut out = &m.a * xi;
            m.f.eval_into(xi.as_slice(), &mut fbuf);
            out += &m.d1 * Vector::from_column_slice(&fbuf);
            if self.leader != Some(i) && !self.neighbours[i].is_empty() {
                let mut rel = Vector::zeros(n);
                for &j in &self.neighbours[i] {
                    rel += xi - x.rows(j * n, n);
                }
                out += &self.cbk * rel;
            }
            if let Some(w) = omega {
                out += &m.d2 * w.rows(i * m1, m1);
            }
            dx.rows_mut(i * n, n).copy_from(&out);
        }
        dx
    }
}

fn check_state(model: &AgentModel, graph: &DiGraph, x: &Vector) -> Result<()> {
    if x.len() != graph.n() * model.state_dim() {
        return Err(Error::Dimension(format!(
            "stacked state has length {}, expected {}",
            x.len(),
            graph.n() * model.state_dim()
        )));
    }
    Ok(())
}

/// Undisturbed leaderless network.
pub fn rhs_leaderless(model: &AgentModel, graph: &DiGraph, design: &ProtocolDesign, x: &Vector) -> Result<Vector> {
    check_state(model, graph, x)?;
    Ok(Network::new(model, graph, design, None)?.eval(x, None))
}

/// Leaderless network with additive disturbance `D2 w_i`; `omega` is stacked per agent.
pub fn rhs_disturbed(
    model: &AgentModel,
    graph: &DiGraph,
    design: &ProtocolDesign,
    x: &Vector,
    omega: &Vector,
) -> Result<Vector> {
    check_state(model, graph, x)?;
    if omega.len() != graph.n() * model.disturbance_dim() {
        return Err(Error::Dimension("disturbance vector length mismatch".into()));
    }
    Ok(Network::new(model, graph, design, None)?.eval(x, Some(omega)))
}

/// Leader runs open loop; followers use the protocol.
pub fn rhs_leader_follower(
    model: &AgentModel,
    graph: &DiGraph,
    design: &ProtocolDesign,
    leader: usize,
    x: &Vector,
) -> Result<Vector> {
    check_state(model, graph, x)?;
    Ok(Network::new(model, graph, design, Some(leader))?.eval(x, None))
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub model: AgentModel,
    pub graph: DiGraph,
    pub design: ProtocolDesign,
    /// One initial state per agent.
    pub x0: Vec<Vector>,
    pub disturbance: Disturbance,
    pub t_end: f64,
    pub dt: f64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= self.dt && self.t_end.is_finite()) {
            return Err(Error::Invalid(format!(
                "t_end ({}) must be at least dt ({})",
                self.t_end, self.dt
            )));
        }
        let n = self.model.state_dim();
        if self.x0.len() != self.graph.n() || self.x0.iter().any(|x| x.len() != n) {
            return Err(Error::Dimension(format!(
                "initial condition must hold {} states of length {n}",
                self.graph.n()
            )));
        }
        if self.x0.iter().any(|x| x.iter().any(|v| !v.is_finite())) {
            return Err(Error::Invalid("initial condition has non-finite entries".into()));
        }
        if !self.disturbance.is_none() && self.disturbance.weights.len() != self.graph.n() {
            return Err(Error::Dimension(format!(
                "disturbance needs {} weights, got {}",
                self.graph.n(),
                self.disturbance.weights.len()
            )));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn stacked_x0(&self) -> Vector {
        let n = self.model.state_dim();
        let mut x = Vector::zeros(self.x0.len() * n);
        for (i, xi) in self.x0.iter().enumerate() {
            x.rows_mut(i * n, n).copy_from(xi);
        }
        x
    }
}

/// Seeded uniform draw in `[-half_width, half_width]^n` per agent.
pub fn seeded_initial_states(agents: usize, n: usize, seed: u64, half_width: f64) -> Vec<Vector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..agents)
        .map(|_| Vector::from_fn(n, |_, _| rng.gen_range(-half_width..=half_width)))
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub agents: usize,
    pub state_dim: usize,
    pub output_dim: usize,
    pub disturbance_dim: usize,
    pub times: Vec<f64>,
    /// Stacked agent states at each sample.
    pub states: Vec<Vector>,
    /// Consensus errors: `x_i - sum_j r_j x_j` (leaderless) or `x_i - x_leader`.
    pub errors: Vec<Vector>,
    /// Performance outputs `z_i = (1/N) sum_j C (x_i - x_j)`.
    pub outputs: Vec<Vector>,
    /// Disturbance held over `[t_k, t_k+1)`.
    pub disturbances: Vec<Vector>,
    pub v_lyap: Vec<f64>,
    /// Running integral of `|z|^2 - gamma^2 |w|^2` (gamma = 0 without an H∞ design).
    pub j_running: Vec<f64>,
    /// Weights `r` (leaderless) or `q` over followers (leader-follower, leader entry 0).
    pub weights: Vector,
}

impl Trajectory {
    pub fn state(&self, sample: usize, agent: usize) -> Vector {
        self.states[sample].rows(agent * self.state_dim, self.state_dim).into_owned()
    }

    pub fn final_state(&self) -> &Vector {
        self.states.last().expect("trajectory has at least one sample")
    }

    pub fn max_pairwise_distance(&self, sample: usize) -> f64 {
        max_pairwise_distance(&self.states[sample], self.agents, self.state_dim)
    }

    /// First sample time after which the max pairwise distance stays below `threshold`.
    pub fn settling_time(&self, threshold: f64) -> Option<f64> {
        let mut settled: Option<usize> = None;
        for k in 0..self.times.len() {
            if self.max_pairwise_distance(k) < threshold {
                settled.get_or_insert(k);
            } else {
                settled = None;
            }
        }
        settled.map(|k| self.times[k])
    }

    /// Writes `t, x{i}_{k}..., e{i}_{k}..., z{i}_{k}..., V, J_running`, keeping
    /// every `decimate`-th sample plus the last one.
    pub fn write_csv<W: Write>(&self, mut w: W, decimate: usize) -> io::Result<()> {
        let decimate = decimate.max(1);
        let mut header = vec!["t".to_string()];
        for prefix in ["x", "e"] {
            for i in 1..=self.agents {
                for k in 1..=self.state_dim {
                    header.push(format!("{prefix}{i}_{k}"));
                }
            }
        }
        for i in 1..=self.agents {
            for k in 1..=self.output_dim {
                header.push(format!("z{i}_{k}"));
            }
        }
        header.push("V".into());
        header.push("J_running".into());
        writeln!(w, "{}", header.join(","))?;

        let last = self.times.len() - 1;
        for s in (0..=last).filter(|s| s % decimate == 0 || *s == last) {
            let mut row = Vec::with_capacity(header.len());
            row.push(fmt_num(self.times[s]));
            row.extend(self.states[s].iter().map(|v| fmt_num(*v)));
            row.extend(self.errors[s].iter().map(|v| fmt_num(*v)));
            row.extend(self.outputs[s].iter().map(|v| fmt_num(*v)));
            row.push(fmt_num(self.v_lyap[s]));
            row.push(fmt_num(self.j_running[s]));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn fmt_num(v: f64) -> String {
    // Shortest representation that round-trips.
    format!("{v:?}")
}

pub fn max_pairwise_distance(x: &Vector, agents: usize, n: usize) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..agents {
        for j in (i + 1)..agents {
            worst = worst.max((x.rows(i * n, n) - x.rows(j * n, n)).norm());
        }
    }
    worst
}

/// Consensus error `((I - 1 r^T) ⊗ I_n) x`.
pub fn consensus_error(x: &Vector, r: &Vector, n: usize) -> Vector {
    let agents = r.len();
    let mut mean = Vector::zeros(n);
    for j in 0..agents {
        mean += x.rows(j * n, n) * r[j];
    }
    let mut e = x.clone();
    for i in 0..agents {
        let mut ei = e.rows_mut(i * n, n);
        ei -= &mean;
    }
    e
}

/// `z_i = (1/N) sum_j C (x_i - x_j)`, stacked.
pub fn performance_output(x: &Vector, c_out: &Mat, agents: usize) -> Vector {
    let n = c_out.ncols();
    let m2 = c_out.nrows();
    let mut z = Vector::zeros(agents * m2);
    for i in 0..agents {
        let mut acc = Vector::zeros(n);
        for j in 0..agents {
            acc += x.rows(i * n, n) - x.rows(j * n, n);
        }
        z.rows_mut(i * m2, m2).copy_from(&(c_out * acc / agents as f64));
    }
    z
}

/// `sum_i w_i e_i^T P^-1 e_i`
fn lyapunov_value(e: &Vector, p_inv: &Mat, weights: &Vector, n: usize) -> f64 {
    let mut v = 0.0;
    for (i, wi) in weights.iter().enumerate() {
        if *wi == 0.0 {
            continue;
        }
        let ei = e.rows(i * n, n);
        v += wi * (ei.transpose() * p_inv * ei)[(0, 0)];
    }
    v
}

/// Fixed-step classical RK4 over the closed-loop network.
///
/// The disturbance is sampled at the step midpoint and held for all four
/// stages, which integrates piecewise-constant inputs exactly when their
/// breakpoints lie on the grid.
pub fn integrate(scenario: &Scenario) -> Result<Trajectory> {
    scenario.validate()?;
    let model = &scenario.model;
    let design = &scenario.design;
    let graph = &scenario.graph;
    let agents = graph.n();
    let n = model.state_dim();
    let m1 = model.disturbance_dim();
    let dt = scenario.dt;
    let steps = scenario.steps();

    let (leader, weights) = match design.mode {
        Mode::LeaderFollower => {
            let leader = design
                .leader
                .ok_or_else(|| Error::Invalid("leader-follower design without a leader".into()))?;
            let lf = graph::leader_follower_data(graph, leader)?;
            let mut w = Vector::zeros(agents);
            for (idx, &f) in lf.followers.iter().enumerate() {
                w[f] = lf.q[idx];
            }
            (Some(leader), w)
        }
        Mode::Leaderless | Mode::Hinf => (None, graph::left_perron(&graph::laplacian(graph))?),
    };
    let network = Network::new(model, graph, design, leader)?;
    let p_inv = numkit::solve_linear(&design.cert.p, &Mat::identity(n, n))?;
    let gamma = design.gamma.unwrap_or(0.0);
    let disturbed = !scenario.disturbance.is_none() && m1 > 0;

    let error_of = |x: &Vector| -> Vector {
        match leader {
            Some(l) => {
                let xl = x.rows(l * n, n).into_owned();
                let mut e = x.clone();
                for i in 0..agents {
                    let mut ei = e.rows_mut(i * n, n);
                    ei -= &xl;
                }
                e
            }
            None => consensus_error(x, &weights, n),
        }
    };
    let omega_at = |t: f64| -> Vector {
        if disturbed {
            scenario.disturbance.eval(t, agents, m1)
        } else {
            Vector::zeros(agents * m1)
        }
    };

    let mut traj = Trajectory {
        agents,
        state_dim: n,
        output_dim: model.output_dim(),
        disturbance_dim: m1,
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        errors: Vec::with_capacity(steps + 1),
        outputs: Vec::with_capacity(steps + 1),
        disturbances: Vec::with_capacity(steps + 1),
        v_lyap: Vec::with_capacity(steps + 1),
        j_running: Vec::with_capacity(steps + 1),
        weights: weights.clone(),
    };

    let mut x = scenario.stacked_x0();
    let push = |traj: &mut Trajectory, t: f64, x: &Vector, omega: Vector, j: f64| {
        let e = error_of(x);
        traj.v_lyap.push(lyapunov_value(&e, &p_inv, &weights, n));
        traj.outputs.push(performance_output(x, &model.c_out, agents));
        traj.errors.push(e);
        traj.states.push(x.clone());
        traj.disturbances.push(omega);
        traj.times.push(t);
        traj.j_running.push(j);
    };

    let mut j = 0.0;
    let mut omega = omega_at(0.5 * dt);
    push(&mut traj, 0.0, &x, omega.clone(), j);

    for step in 0..steps {
        let t = step as f64 * dt;
        let w = disturbed.then_some(&omega);
        let k1 = network.eval(&x, w);
        let k2 = network.eval(&(&x + &k1 * (0.5 * dt)), w);
        let k3 = network.eval(&(&x + &k2 * (0.5 * dt)), w);
        let k4 = network.eval(&(&x + &k3 * dt), w);
        let next = &x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);

        let norm = next.norm();
        if !norm.is_finite() || norm > tol::BLOW_UP {
            return Err(Error::BlowUp {
                t: t + dt,
                last_valid_t: t,
                norm,
            });
        }

        let z_prev = traj.outputs.last().expect("pushed").norm_squared();
        let z_next = performance_output(&next, &model.c_out, agents).norm_squared();
        j += 0.5 * dt * (z_prev + z_next) - gamma * gamma * dt * omega.norm_squared();

        x = next;
        let t_next = (step + 1) as f64 * dt;
        omega = omega_at(t_next + 0.5 * dt);
        push(&mut traj, t_next, &x, omega.clone(), j);
    }
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HinfCost {
    pub j: f64,
    /// Trapezoidal `int |z|^2`.
    pub z_energy: f64,
    /// Exact `int |w|^2` for the held disturbance.
    pub w_energy: f64,
    /// `sqrt(z_energy / w_energy)`; `None` when the disturbance has no energy.
    pub empirical_gain: Option<f64>,
    pub zero_initial_state: bool,
}

/// `J = int (|z|^2 - gamma^2 |w|^2) dt` over the simulated horizon.
pub fn hinf_cost(traj: &Trajectory, gamma: f64) -> HinfCost {
    let mut z_energy = 0.0;
    let mut w_energy = 0.0;
    for k in 0..traj.times.len().saturating_sub(1) {
        let h = traj.times[k + 1] - traj.times[k];
        z_energy += 0.5 * h * (traj.outputs[k].norm_squared() + traj.outputs[k + 1].norm_squared());
        w_energy += h * traj.disturbances[k].norm_squared();
    }
    HinfCost {
        j: z_energy - gamma * gamma * w_energy,
        z_energy,
        w_energy,
        empirical_gain: (w_energy > 0.0).then(|| (z_energy / w_energy).sqrt()),
        zero_initial_state: traj.states[0].iter().all(|v| *v == 0.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovReport {
    pub v0: f64,
    pub v_final: f64,
    pub steps: usize,
    /// Steps with `V[k+1] - V[k] > rel_tol * V[0]`.
    pub increases: usize,
    pub increase_fraction: f64,
    pub max_increase: f64,
    pub non_increasing: bool,
}

pub fn lyapunov_diag(traj: &Trajectory, rel_tol: f64) -> LyapunovReport {
    let v = &traj.v_lyap;
    let v0 = v[0];
    let allowance = rel_tol * v0;
    let mut increases = 0;
    let mut max_increase = f64::NEG_INFINITY;
    for w in v.windows(2) {
        let d = w[1] - w[0];
        max_increase = max_increase.max(d);
        if d > allowance {
            increases += 1;
        }
    }
    let steps = v.len().saturating_sub(1);
    LyapunovReport {
        v0,
        v_final: *v.last().unwrap_or(&0.0),
        steps,
        increases,
        increase_fraction: if steps == 0 { 0.0 } else { increases as f64 / steps as f64 },
        max_increase: if steps == 0 { 0.0 } else { max_increase },
        non_increasing: increases == 0,
    }
}
