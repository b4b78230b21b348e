use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, ValueEnum};
use lipcon::graph::{self, LeaderFollowerData};
use lipcon::sim::{self, Disturbance, Scenario, Waveform};
use lipcon::synthesis::{self, DesignOptions};
use lipcon::{repro, AgentModel, DiGraph, GraphSpectra, ProtocolDesign, Vector};
use serde_json::json;

use crate::files::{self, CertFile, ModelFile};
use crate::report::{comparison_table, ComparisonRow, GraphSection, Provenance, Report, Run, SimulationOut};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Leaderless,
    Hinf,
    LeaderFollower,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DisturbanceArg {
    None,
    Bipolar,
    Unipolar,
}

impl DisturbanceArg {
    fn waveform(self) -> Waveform {
        match self {
            DisturbanceArg::None => Waveform::None,
            DisturbanceArg::Bipolar => Waveform::Bipolar,
            DisturbanceArg::Unipolar => Waveform::Unipolar,
        }
    }

    fn name(self) -> &'static str {
        match self {
            DisturbanceArg::None => "none",
            DisturbanceArg::Bipolar => "bipolar",
            DisturbanceArg::Unipolar => "unipolar",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct DesignArgs {
    #[arg(long, value_enum, default_value = "leaderless")]
    pub mode: ModeArg,
    /// H∞ level; falls back to the model file's `gamma`.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// c = multiplier * c_threshold.
    #[arg(long, default_value_t = 1.0)]
    pub c_multiplier: f64,
    /// Explicit coupling strength; overrides --c-multiplier.
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub allow_below_threshold: bool,
    /// Certificate JSON `{"p": [[...]], "scalar": s}` used instead of the solver.
    #[arg(long)]
    pub cert: Option<PathBuf>,
    /// Leader node (1-based); defaults to the graph's root with no in-neighbours.
    #[arg(long)]
    pub leader: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct SimArgs {
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long, default_value_t = 10.0)]
    pub t_end: f64,
    /// Seed for the initial states drawn uniformly from [-w, w]^n.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub init_half_width: f64,
    /// Initial states as a JSON array with one row per agent.
    #[arg(long, conflicts_with = "zero_init")]
    pub x0: Option<PathBuf>,
    #[arg(long)]
    pub zero_init: bool,
    #[arg(long, value_enum, default_value = "none")]
    pub disturbance: DisturbanceArg,
    /// Per-agent disturbance weights, comma separated; defaults to all ones.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub weights: Option<Vec<f64>>,
    /// Keep every k-th CSV row (the last row is always kept).
    #[arg(long, default_value_t = 1)]
    pub csv_every: usize,
}

fn design_options(args: &DesignArgs) -> Result<DesignOptions> {
    let mut opts = match &args.cert {
        Some(path) => {
            let cert: CertFile = files::load_json(path)?;
            DesignOptions::inject(cert.p()?, cert.scalar)
        }
        None => DesignOptions::default(),
    };
    opts.c_multiplier = args.c_multiplier;
    opts.c_override = args.c;
    opts.allow_below_threshold = args.allow_below_threshold;
    Ok(opts)
}

fn resolve_leader(g: &DiGraph, requested: Option<usize>) -> Result<usize> {
    match requested {
        Some(0) => bail!("--leader is 1-based"),
        Some(i) => Ok(i - 1),
        None => graph::classify(g).leader_follower_root.ok_or_else(|| {
            anyhow!(lipcon::Error::Precondition(
                "leader-follower mode needs a node with no in-neighbours that reaches every other node".into()
            ))
        }),
    }
}

fn design(model: &AgentModel, g: &DiGraph, args: &DesignArgs, model_gamma: Option<f64>) -> Result<ProtocolDesign> {
    let opts = design_options(args)?;
    let d = match args.mode {
        ModeArg::Leaderless => synthesis::design_leaderless(model, &GraphSpectra::compute(g)?, &opts)?,
        ModeArg::Hinf => {
            let gamma = args
                .gamma
                .or(model_gamma)
                .ok_or_else(|| anyhow!("--mode hinf needs --gamma or a `gamma` entry in the model file"))?;
            let spectra = GraphSpectra::compute(g).map_err(|_| {
                lipcon::Error::Precondition("H∞ consensus requires a balanced and strongly connected graph".into())
            })?;
            synthesis::design_hinf(model, &spectra, gamma, &opts)?
        }
        ModeArg::LeaderFollower => {
            let lf = graph::leader_follower_data(g, resolve_leader(g, args.leader)?)?;
            synthesis::design_leader_follower(model, &lf, &opts)?
        }
    };
    Ok(d)
}

fn design_config(args: &DesignArgs) -> Result<serde_json::Value> {
    let cert = match &args.cert {
        Some(p) => Some(files::load_json::<serde_json::Value>(p)?),
        None => None,
    };
    Ok(json!({
        "mode": format!("{:?}", args.mode),
        "gamma": args.gamma,
        "c_multiplier": args.c_multiplier,
        "c": args.c,
        "allow_below_threshold": args.allow_below_threshold,
        "cert": cert,
        "leader": args.leader,
    }))
}

fn model_config(path: &Path) -> Result<serde_json::Value> {
    files::load_json(path)
}

pub fn write_report(report: &Report, out_dir: Option<&Path>) -> Result<()> {
    let text = report.to_json()?;
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join("report.json");
        fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
    }
    println!("{text}");
    Ok(())
}

fn graph_section(g: &DiGraph) -> GraphSection {
    let flags = graph::classify(g);
    if !flags.strongly_connected {
        eprintln!("warning: graph is not strongly connected; r and a(L) are undefined");
    }
    if !flags.has_spanning_tree {
        eprintln!("warning: graph has no directed spanning tree; consensus is impossible");
    }
    let spectra = GraphSpectra::compute(g).ok();
    let lf: Option<LeaderFollowerData> = flags
        .leader_follower_root
        .and_then(|root| graph::leader_follower_data(g, root).ok());
    if let Some(lf) = &lf {
        if lf.lambda1_h <= 0.0 {
            eprintln!(
                "warning: H = (G L1 + L1^T G)/2 is not positive definite (lambda_1 = {:e})",
                lf.lambda1_h
            );
        }
    }
    GraphSection::new(g, flags, spectra.as_ref(), lf.as_ref())
}

pub fn cmd_graph(path: &Path, out_dir: Option<&Path>) -> Result<()> {
    let g = files::load_graph(path)?;
    let config = json!({ "graph": g.to_edge_list() });
    let mut report = Report::new(Provenance::new("graph", &config, None));
    report.graph = Some(graph_section(&g));
    write_report(&report, out_dir)
}

pub fn cmd_synth(model_path: &Path, graph_path: &Path, args: &DesignArgs, out_dir: Option<&Path>) -> Result<()> {
    let (model, gamma) = files::load_model(model_path)?;
    let g = files::load_graph(graph_path)?;
    let config = json!({
        "model": model_config(model_path)?,
        "graph": g.to_edge_list(),
        "design": design_config(args)?,
    });
    let d = design(&model, &g, args, gamma)?;
    let mut report = Report::new(Provenance::new("synth", &config, None));
    report.graph = Some(graph_section(&g));
    report.runs.push(Run::new("synth", &d));
    write_report(&report, out_dir)
}

fn initial_states(model: &AgentModel, agents: usize, s: &SimArgs) -> Result<Vec<Vector>> {
    let n = model.state_dim();
    if let Some(path) = &s.x0 {
        return files::load_states(path);
    }
    if s.zero_init {
        return Ok(vec![Vector::zeros(n); agents]);
    }
    Ok(sim::seeded_initial_states(agents, n, s.seed, s.init_half_width))
}

fn disturbance(kind: DisturbanceArg, weights: Option<&[f64]>, agents: usize) -> Disturbance {
    if kind == DisturbanceArg::None {
        return Disturbance::none();
    }
    Disturbance {
        waveform: kind.waveform(),
        weights: weights.map_or_else(|| vec![1.0; agents], <[f64]>::to_vec),
    }
}

fn write_csv(traj: &sim::Trajectory, path: &Path, every: usize) -> Result<()> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    traj.write_csv(BufWriter::new(file), every.max(1))
        .with_context(|| format!("writing {}", path.display()))
}

pub fn cmd_simulate(
    model_path: &Path,
    graph_path: &Path,
    args: &DesignArgs,
    s: &SimArgs,
    out_dir: &Path,
) -> Result<()> {
    let (model, gamma) = files::load_model(model_path)?;
    let g = files::load_graph(graph_path)?;
    let x0 = initial_states(&model, g.n(), s)?;
    let config = json!({
        "model": model_config(model_path)?,
        "graph": g.to_edge_list(),
        "design": design_config(args)?,
        "dt": s.dt,
        "t_end": s.t_end,
        "x0": x0.iter().map(|x| x.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>(),
        "disturbance": s.disturbance.name(),
        "weights": s.weights,
    });
    let d = design(&model, &g, args, gamma)?;
    let gamma = d.gamma.unwrap_or(0.0);
    let scenario = Scenario {
        model,
        graph: g.clone(),
        design: d.clone(),
        x0,
        disturbance: disturbance(s.disturbance, s.weights.as_deref(), g.n()),
        t_end: s.t_end,
        dt: s.dt,
    };
    let traj = sim::integrate(&scenario)?;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    write_csv(&traj, &out_dir.join("trajectory.csv"), s.csv_every)?;

    let mut report = Report::new(Provenance::new("simulate", &config, Some(s.seed)));
    report.graph = Some(graph_section(&g));
    let mut run = Run::new("simulate", &d);
    run.simulation = Some(SimulationOut::new(
        &traj,
        s.dt,
        s.disturbance.name(),
        Some("trajectory.csv".into()),
        gamma,
    ));
    report.runs.push(run);
    write_report(&report, Some(out_dir))
}

#[derive(Debug, Clone, Args)]
pub struct ReproArgs {
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long, default_value_t = 10.0)]
    pub t_end: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Coupling multiplier for the solver-found design.
    #[arg(long, default_value_t = 1.0)]
    pub c_multiplier: f64,
    /// Waveform for the disturbed runs.
    #[arg(long, value_enum, default_value = "bipolar")]
    pub disturbance: DisturbanceArg,
    #[arg(long, default_value_t = 10)]
    pub csv_every: usize,
}

struct Job {
    name: &'static str,
    design: ProtocolDesign,
    disturbed: bool,
}

pub fn cmd_repro(args: &ReproArgs, out_dir: &Path) -> Result<()> {
    let model = repro::manipulator_model();
    let g = repro::manipulator_graph();
    let config = json!({
        "model": ModelFile::from_model(&model, Some(repro::GAMMA)),
        "graph": g.to_edge_list(),
        "dt": args.dt,
        "t_end": args.t_end,
        "c_multiplier": args.c_multiplier,
        "disturbance": args.disturbance.name(),
    });

    let spectra = GraphSpectra::compute(&g).context("stage `graph`")?;
    let published = synthesis::design_hinf(
        &model,
        &spectra,
        repro::GAMMA,
        &DesignOptions::inject(repro::published_q(), repro::published::EPSILON),
    )
    .context("stage `synthesis (published certificate)`")?;
    let published_sim = synthesis::design_hinf(
        &model,
        &spectra,
        repro::GAMMA,
        &DesignOptions::inject(repro::published_q(), repro::published::EPSILON).with_c(repro::C_SIMULATION),
    )
    .context("stage `synthesis (published certificate)`")?;
    let solver = synthesis::design_hinf(
        &model,
        &spectra,
        repro::GAMMA,
        &DesignOptions {
            c_multiplier: args.c_multiplier,
            ..DesignOptions::default()
        },
    )
    .context("stage `synthesis (solver)`")?;

    let jobs = [
        Job { name: "published_undisturbed", design: published_sim.clone(), disturbed: false },
        Job { name: "published_disturbed", design: published_sim, disturbed: true },
        Job { name: "solver_undisturbed", design: solver.clone(), disturbed: false },
        Job { name: "solver_disturbed", design: solver.clone(), disturbed: true },
    ];
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;

    let n = model.state_dim();
    let agents = g.n();
    let results: Vec<Result<Run>> = std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|job| {
                let (model, g) = (&model, &g);
                scope.spawn(move || -> Result<Run> {
                    let (x0, dist) = if job.disturbed {
                        let w = repro::DISTURBANCE_WEIGHTS;
                        (vec![Vector::zeros(n); agents], disturbance(args.disturbance, Some(&w), agents))
                    } else {
                        (sim::seeded_initial_states(agents, n, args.seed, 1.0), Disturbance::none())
                    };
                    let scenario = Scenario {
                        model: model.clone(),
                        graph: g.clone(),
                        design: job.design.clone(),
                        x0,
                        disturbance: dist,
                        t_end: args.t_end,
                        dt: args.dt,
                    };
                    let traj = sim::integrate(&scenario).with_context(|| format!("stage `simulate {}`", job.name))?;
                    let csv = format!("{}.csv", job.name);
                    write_csv(&traj, &out_dir.join(&csv), args.csv_every)?;
                    let label = if job.disturbed { args.disturbance.name() } else { "none" };
                    let mut run = Run::new(job.name, &job.design);
                    run.simulation = Some(SimulationOut::new(&traj, args.dt, label, Some(csv), repro::GAMMA));
                    Ok(run)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(anyhow!("simulation thread panicked"))))
            .collect()
    });

    let mut report = Report::new(Provenance::new("repro", &config, Some(args.seed)));
    report.graph = Some(graph_section(&g));
    report.runs.push(Run::new("published_threshold", &published));
    for r in results {
        report.runs.push(r?);
    }

    let lambda2 = spectra.lambda2_sym.expect("built-in graph is balanced");
    report.comparison.push(ComparisonRow::new("lambda2((L+L^T)/2)", lambda2, repro::published::LAMBDA2, 1e-3));
    report.comparison.push(ComparisonRow::new(
        "c_threshold (published P, eps)",
        published.c_threshold,
        repro::published::C_THRESHOLD,
        1e-3,
    ));
    for (j, &k) in repro::published::K.iter().enumerate() {
        report.comparison.push(ComparisonRow::new(
            &format!("K[{}] (published P)", j + 1),
            published.k[(0, j)],
            k,
            5e-3,
        ));
    }

    let table = comparison_table(&report.comparison);
    fs::write(out_dir.join("comparison.md"), &table).context("writing comparison.md")?;
    let text = report.to_json()?;
    fs::write(out_dir.join("report.json"), &text).context("writing report.json")?;

    print!("{table}");
    println!();
    println!(
        "solver certificate: scalar = {:.6}, margin = {:.3e}, c_threshold = {:.6}",
        solver.cert.scalar, solver.cert.margin, solver.c_threshold
    );
    for run in &report.runs {
        if let Some(s) = &run.simulation {
            println!(
                "{:<22} c = {:>9.4}  final max distance = {:.3e}  J = {:>10.4}  gain = {}",
                run.name,
                run.design.c,
                s.final_max_pairwise_distance,
                s.j,
                s.empirical_gain.map_or("-".into(), |v| format!("{v:.4}"))
            );
        }
    }
    println!("wrote {}", out_dir.display());
    Ok(())
}
