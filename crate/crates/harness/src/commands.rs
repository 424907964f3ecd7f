use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use diffsim::control::{adaptive_mpc, AdaptiveReport, ControlBounds, CostSpec, ReferenceEnvironment};
use diffsim::dynamics::{ControlMap, Plant};
use diffsim::estimate::{design_arm, estimate_parameters, rms_error, OptimResult, ReferenceTrajectory, Termination};
use diffsim::integrate::{integrate_dense, IntegratorConfig, Method};
use diffsim::model::library::{cartpole, cartpole_binding, chain_length_binding, pendulum_chain};
use diffsim::model::{model_from_dh, parse_model, DhParams, ParameterBinding};
use diffsim::sensitivity::{gradient, GradMethod, GradientRequest, Loss, Sample, Target};

use crate::config::{self, BenchmarkSpec, DesignConfig, EstimateConfig, MpcConfig, SimulateConfig};
use crate::error::{HarnessError, Result};
use crate::table::{fmt_f64, Table};

fn create_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| HarnessError::Io(format!("{}: {e}", out.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::Io(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
}

fn read_model(path: &Path) -> Result<diffsim::model::Model> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    Ok(parse_model(&text)?)
}

/// Exit-0 iff the optimizer met its gradient tolerance.
fn require_convergence(r: &OptimResult) -> Result<()> {
    if r.termination == Termination::GradTol {
        Ok(())
    } else {
        Err(HarnessError::Optimization(format!(
            "stopped by {:?} after {} iterations at loss {:e}, projected gradient {:e}",
            r.termination,
            r.iterations,
            r.loss,
            r.grad.iter().fold(0.0f64, |m, g| m.max(g.abs()))
        )))
    }
}

// ---- benchmark ----------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchmarkRow {
    pub method: GradMethod,
    pub n: usize,
    pub dt: f64,
    pub rhs_evals: u64,
    pub tape_vars: u64,
    pub wall_time_s: f64,
    pub grad_checksum: f64,
}

pub const BENCHMARK_COLUMNS: [&str; 7] = ["method", "n", "dt", "rhs_evals", "tape_vars", "wall_time_s", "grad_checksum"];

/// Seeded start state of the n-link benchmark pendulum: angles in ±0.5 rad,
/// at rest. Independent of method, step and repetition.
pub fn benchmark_state(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(n as u64);
    let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
    x.resize(2 * n, 0.0);
    x
}

/// The gradient request timed by the benchmark: `½‖x(t1)‖²` over unit
/// link lengths.
pub fn benchmark_request<'a>(plant: &'a Plant, spec: &BenchmarkSpec, n: usize, dt: f64) -> GradientRequest<&'a Plant> {
    let loss = Loss {
        samples: vec![Sample {
            time: spec.horizon,
            target: vec![0.0; 2 * n],
            weight: 0.5,
        }],
    };
    GradientRequest::new(
        plant,
        vec![1.0; n],
        benchmark_state(spec.seed, n),
        0.0,
        spec.horizon,
        IntegratorConfig {
            method: spec.integrator,
            dt,
            abs_tol: spec.abs_tol,
            rel_tol: spec.rel_tol,
            ..IntegratorConfig::default()
        },
        Target::Loss(loss),
    )
}

fn benchmark_cell(spec: &BenchmarkSpec, method: GradMethod, n: usize, dt: f64) -> Result<BenchmarkRow> {
    let plant = Plant::passive(pendulum_chain(n, 1.0, 1.0), chain_length_binding(n))?;
    let req = benchmark_request(&plant, spec, n, dt);
    let start = Instant::now();
    let report = gradient(&req, method)?;
    let wall = start.elapsed().as_secs_f64();
    let g = report.values();
    Ok(BenchmarkRow {
        method,
        n,
        dt,
        rhs_evals: report.counters.rhs_evaluations,
        tape_vars: report.counters.tape_variables,
        wall_time_s: wall,
        grad_checksum: g.iter().map(|v| v * v).sum::<f64>().sqrt(),
    })
}

pub fn benchmark_table(rows: &[BenchmarkRow]) -> Table {
    let mut t = Table::new(BENCHMARK_COLUMNS);
    for r in rows {
        t.push(vec![
            r.method.name().to_string(),
            r.n.to_string(),
            fmt_f64(r.dt),
            r.rhs_evals.to_string(),
            r.tape_vars.to_string(),
            fmt_f64(r.wall_time_s),
            fmt_f64(r.grad_checksum),
        ]);
    }
    t
}

#[derive(Serialize)]
struct BenchmarkSummary<'a> {
    command: &'static str,
    seed: u64,
    integrator: Method,
    /// Only for adaptive methods: the tolerances are a choice of this run.
    #[serde(skip_serializing_if = "Option::is_none")]
    tolerances: Option<[f64; 2]>,
    rows: usize,
    failures: &'a [String],
}

/// Every (method, n, dt, repetition) cell, run on a worker pool; rows come
/// out sorted by method, n, dt regardless of completion order. Cells that
/// fail are reported after the successful rows are written.
pub fn cmd_benchmark(spec: &BenchmarkSpec, out: &Path) -> Result<Vec<BenchmarkRow>> {
    spec.validate()?;
    create_dir(out)?;
    let mut cells = Vec::new();
    for &m in &spec.methods {
        for &n in &spec.links {
            for &dt in &spec.dt {
                for _ in 0..spec.repetitions {
                    cells.push((m, n, dt));
                }
            }
        }
    }
    cells.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)).then(a.2.total_cmp(&b.2)));
    let run = || -> Vec<Result<BenchmarkRow>> { cells.par_iter().map(|&(m, n, dt)| benchmark_cell(spec, m, n, dt)).collect() };
    let results = match spec.threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| HarnessError::Config(e.to_string()))?
            .install(run),
        None => run(),
    };
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut first_error = None;
    for ((m, n, dt), r) in cells.iter().zip(results) {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => {
                failures.push(format!("{} n={n} dt={dt}: {e}", m.name()));
                first_error.get_or_insert(e);
            }
        }
    }
    benchmark_table(&rows).write(&out.join("benchmark.csv"))?;
    write_json(
        &out.join("summary.json"),
        &BenchmarkSummary {
            command: "benchmark",
            seed: spec.seed,
            integrator: spec.integrator,
            tolerances: spec.integrator.is_adaptive().then_some([spec.abs_tol, spec.rel_tol]),
            rows: rows.len(),
            failures: &failures,
        },
    )?;
    match first_error {
        Some(e) => Err(e),
        None => Ok(rows),
    }
}

// ---- simulate -----------------------------------------------------------

/// Integrate the model and write `reference.csv`.
pub fn cmd_simulate(cfg: &SimulateConfig, config_path: &Path, out: &Path) -> Result<ReferenceTrajectory> {
    let model = read_model(&config::resolve(config_path, &cfg.model))?;
    let plant = Plant::new(model, ParameterBinding::default(), ControlMap::default())?;
    let x0 = match &cfg.x0 {
        Some(x) => x.clone(),
        None => benchmark_state(cfg.seed, plant.dof()),
    };
    if cfg.samples == 0 || !(cfg.sample_dt > 0.0) {
        return Err(HarnessError::Config("need samples ≥ 1 and a positive sample_dt".into()));
    }
    let times: Vec<f64> = (0..cfg.samples).map(|i| i as f64 * cfg.sample_dt).collect();
    let (states, _) = integrate_dense(|_, x: &[f64]| plant.rhs_with(&plant.model, &[], x), &x0, &times, &cfg.integrator)?;
    let reference = ReferenceTrajectory::new(times, states)?;
    create_dir(out)?;
    reference.write(&out.join("reference.csv"))?;
    Ok(reference)
}

// ---- estimate -----------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimateSummary {
    pub command: &'static str,
    pub seed: u64,
    pub method: GradMethod,
    pub theta: Vec<f64>,
    pub loss: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
}

/// Fit the bound parameters to the reference CSV; writes `loss_curve.csv`
/// (`iteration,loss,theta0..`) and `summary.json`.
pub fn cmd_estimate(cfg: &EstimateConfig, config_path: &Path, out: &Path) -> Result<EstimateSummary> {
    let reference = ReferenceTrajectory::read(&config::resolve(config_path, &cfg.reference))?;
    let model = read_model(&config::resolve(config_path, &cfg.model))?;
    let plant = Plant::passive(model, cfg.parameters.clone())?;
    let est = estimate_parameters(&plant, &cfg.theta0, &reference, cfg.method, &cfg.integrator, &cfg.optimizer)?;

    create_dir(out)?;
    let k = cfg.theta0.len();
    let mut t = Table::new(["iteration".to_string(), "loss".to_string()].into_iter().chain((0..k).map(|i| format!("theta{i}"))));
    for (i, (loss, x)) in est.result.curve.iter().zip(&est.result.iterates).enumerate() {
        t.push(std::iter::once(i.to_string()).chain(std::iter::once(*loss).chain(x.iter().copied()).map(fmt_f64)).collect());
    }
    t.write(&out.join("loss_curve.csv"))?;
    let summary = EstimateSummary {
        command: "estimate",
        seed: cfg.seed,
        method: cfg.method,
        theta: est.theta.clone(),
        loss: est.result.loss,
        iterations: est.result.iterations,
        evaluations: est.result.evaluations,
        termination: est.result.termination,
    };
    write_json(&out.join("summary.json"), &summary)?;
    require_convergence(&est.result)?;
    Ok(summary)
}

// ---- design -------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DesignSummary {
    pub command: &'static str,
    pub seed: u64,
    pub dh: DhParams,
    pub rms_error: f64,
    pub iterations: usize,
    pub termination: Termination,
}

/// Seeded joint path and start design for a design config.
pub fn design_problem(cfg: &DesignConfig) -> Result<(Vec<Vec<f64>>, Vec<[f64; 3]>, DhParams)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.arm.len();
    let (qs, ps) = match &cfg.trajectory {
        Some(tr) => (tr.q.clone(), tr.p.clone()),
        None => {
            let qs: Vec<Vec<f64>> = (0..cfg.configurations)
                .map(|_| (0..n).map(|_| rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)).collect())
                .collect();
            let model = model_from_dh(&cfg.arm)?;
            let mut ps = Vec::with_capacity(qs.len());
            for q in &qs {
                let frames = diffsim::dynamics::forward_kinematics(&model, q)?;
                ps.push(frames.last().expect("non-empty arm").position.to_array());
            }
            (qs, ps)
        }
    };
    let start = match &cfg.start {
        Some(s) => s.clone(),
        None => {
            let p = cfg.perturbation;
            if !(0.0..1.0).contains(&p) {
                return Err(HarnessError::Config("perturbation must lie in [0, 1)".into()));
            }
            let v: Vec<f64> = cfg
                .arm
                .to_vec()
                .iter()
                .map(|x| if p > 0.0 { x * rng.gen_range(1.0 - p..=1.0 + p) } else { *x })
                .collect();
            DhParams::from_slice(&v)
        }
    };
    Ok((qs, ps, start))
}

/// Writes `dh_evolution.csv` (`iteration,d0,a0,alpha0,..,loss`, one row per
/// accepted iterate) and `summary.json`.
pub fn cmd_design(cfg: &DesignConfig, out: &Path) -> Result<DesignSummary> {
    let (qs, ps, start) = design_problem(cfg)?;
    let design = design_arm(&start, &qs, &ps, &cfg.optimizer)?;
    create_dir(out)?;
    let n = start.len();
    let mut header = vec!["iteration".to_string()];
    for j in 0..n {
        header.extend([format!("d{j}"), format!("a{j}"), format!("alpha{j}")]);
    }
    header.push("loss".into());
    let mut t = Table::new(header);
    for (i, (dh, loss)) in design.history.iter().zip(&design.loss_curve).enumerate() {
        t.push(std::iter::once(i.to_string()).chain(dh.to_vec().into_iter().chain([*loss]).map(fmt_f64)).collect());
    }
    t.write(&out.join("dh_evolution.csv"))?;
    let summary = DesignSummary {
        command: "design",
        seed: cfg.seed,
        dh: design.dh.clone(),
        rms_error: rms_error(&design.dh, &qs, &ps)?,
        iterations: design.result.iterations,
        termination: design.result.termination,
    };
    write_json(&out.join("summary.json"), &summary)?;
    require_convergence(&design.result)?;
    Ok(summary)
}

// ---- adaptive MPC -------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitSummary {
    pub episode: usize,
    pub step: usize,
    pub iterations: usize,
    pub termination: Termination,
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MpcSummary {
    pub command: &'static str,
    pub seed: u64,
    pub poles: usize,
    pub episode_costs: Vec<f64>,
    pub success: Vec<bool>,
    /// 1-based.
    pub first_success: Option<usize>,
    pub held_out_errors: Vec<f64>,
    pub fits: Vec<FitSummary>,
    pub theta: Vec<f64>,
    pub hidden: Vec<f64>,
    pub diverged: bool,
}

/// The plant, hidden parameters and start parameters of an MPC config.
pub fn mpc_problem(cfg: &MpcConfig) -> Result<(Plant, Vec<f64>, Vec<f64>)> {
    if !(1..=2).contains(&cfg.poles) {
        return Err(HarnessError::Config("poles must be 1 or 2".into()));
    }
    let plant = Plant::new(cartpole(cfg.poles), cartpole_binding(cfg.poles), ControlMap::new(vec![0]))?;
    let truth = plant.binding.read(&plant.model);
    let hidden = match &cfg.hidden {
        Some(h) if h.len() == truth.len() => h.clone(),
        Some(h) => {
            return Err(HarnessError::Config(format!("hidden has {} entries, the model needs {}", h.len(), truth.len())));
        }
        None => truth,
    };
    let theta0 = match &cfg.theta0 {
        Some(t) => t.expand(hidden.len())?,
        None => hidden.clone(),
    };
    Ok((plant, hidden, theta0))
}

/// Runs the adaptive loop; writes `steps.csv` (`t,episode,u..,obs..`),
/// `theta_history.csv` (`fit_index,theta0..`) and `summary.json`.
pub fn cmd_mpc(cfg: &MpcConfig, out: &Path) -> Result<(MpcSummary, AdaptiveReport)> {
    let (plant, hidden, theta0) = mpc_problem(cfg)?;
    let spec = cfg.cost.clone().unwrap_or_else(|| CostSpec::cartpole(cfg.poles));
    spec.validate()?;
    if !(cfg.control_limit > 0.0) {
        return Err(HarnessError::Config("control_limit must be positive".into()));
    }
    let bounds = ControlBounds::symmetric(cfg.control_limit, 1);
    let dt = cfg.adaptive.dt;
    let env_integrator = cfg.env_integrator.unwrap_or_else(|| ReferenceEnvironment::default_integrator(dt));
    let mut env = ReferenceEnvironment::new(&plant, &hidden, env_integrator, dt, bounds.clone(), cfg.seed)?;
    let held_out = env.sample_transitions(cfg.held_out, cfg.seed.wrapping_add(1), cfg.control_limit)?;
    let report = adaptive_mpc(&mut env, &plant, &theta0, &spec, &bounds, &cfg.adaptive, &held_out)?;

    create_dir(out)?;
    let obs_dim = diffsim::control::observation_dim(cfg.poles);
    let mut steps = Table::new(["t", "episode", "u0"].map(String::from).into_iter().chain((0..obs_dim).map(|i| format!("obs{i}"))));
    for (e, log) in report.episodes.iter().enumerate() {
        for (t, obs) in log.observations.iter().enumerate() {
            let u = log.controls.get(t).map_or(f64::NAN, |u| u[0]);
            steps.push([t.to_string(), e.to_string()].into_iter().chain(std::iter::once(u).chain(obs.iter().copied()).map(fmt_f64)).collect());
        }
    }
    steps.write(&out.join("steps.csv"))?;
    let mut hist = Table::new(std::iter::once("fit_index".to_string()).chain((0..theta0.len()).map(|i| format!("theta{i}"))));
    for (i, th) in report.theta_history.iter().enumerate() {
        hist.push(std::iter::once(i.to_string()).chain(th.iter().copied().map(fmt_f64)).collect());
    }
    hist.write(&out.join("theta_history.csv"))?;

    let summary = MpcSummary {
        command: "mpc",
        seed: cfg.seed,
        poles: cfg.poles,
        episode_costs: report.episode_costs(),
        success: report.episodes.iter().map(|e| e.success).collect(),
        first_success: report.first_success(),
        held_out_errors: report.held_out_errors.clone(),
        fits: report
            .fits
            .iter()
            .map(|f| FitSummary {
                episode: f.episode,
                step: f.step,
                iterations: f.iterations,
                termination: f.termination,
                loss: f.loss,
            })
            .collect(),
        theta: report.theta().to_vec(),
        hidden,
        diverged: report.diverged,
    };
    write_json(&out.join("summary.json"), &summary)?;
    if report.diverged {
        return Err(HarnessError::Divergence("the environment left the finite state space; partial results written".into()));
    }
    Ok((summary, report))
}
