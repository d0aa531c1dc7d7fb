//! Command-line front end: one run file in, CSV/JSON files and a manifest out.
//!
//! Exit codes: 0 success, 2 invalid input or unsupported model, 3 solver
//! failure (non-convergence, resolution, kinks), 4 file errors.

use std::path::PathBuf;
use std::time::Instant;

use clap::Parser;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::audit::audit_assumptions;
use crate::calibration::{approximate_omega, characteristic, random_differentiable_seeds};
use crate::cell::{solve_cell_detailed, CellSolution};
use crate::config::{CellRun, Params, RunConfig};
use crate::config_space::{dist_weak, Configuration, ParticleArray};
use crate::discounted::estimate_hbar_discounted;
use crate::error::{Error, Result};
use crate::flow::{energy_drift, euler_lagrange_residual, integrate_hamiltonian, PhasePoint};
use crate::io;
use crate::measures::{birkhoff_measure, check_invariance, check_minimizing, lower_bound_gap, telescoping_estimate, EmpiricalMeasure, Observable};
use crate::model::TonelliModel;
use crate::oracle::{critical_c, oracle_hbar_1d};

#[derive(Debug, Parser)]
#[command(name = "weakkam", version, about = "Weak KAM computations for particle systems on the torus")]
pub struct Args {
    /// Run file (`key = value` lines with optional potential sections).
    #[arg(long)]
    pub config: PathBuf,
    /// Directory for CSV/JSON outputs and manifest.json; nothing is written without it.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Overrides the run file's `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for the parallel solvers.
    #[arg(long)]
    pub threads: Option<usize>,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidInput(_) | Error::ShapeMismatch { .. } | Error::UnsupportedModel(_) | Error::Parse { .. } => 2,
        Error::IntegrationFailure { .. } | Error::NonConvergence { .. } | Error::Resolution { .. } | Error::NonDifferentiable { .. } => 3,
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => 4,
    }
}

/// Collects output files and the stdout report of one run.
struct Sink {
    dir: Option<PathBuf>,
    written: Vec<String>,
}

impl Sink {
    fn path(&mut self, name: &str) -> Option<PathBuf> {
        let dir = self.dir.as_ref()?;
        self.written.push(name.to_string());
        Some(dir.join(name))
    }

    fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        match self.path(name) {
            Some(p) => io::write_json(&p, value),
            None => Ok(()),
        }
    }
}

pub fn run(args: &Args) -> i32 {
    match run_inner(args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn run_inner(args: &Args) -> Result<()> {
    let started = Instant::now();
    let mut rc = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        rc.seed = seed;
    }
    if let Some(t) = args.threads {
        if t == 0 {
            return Err(Error::invalid("--threads must be at least 1"));
        }
        // fails only if a pool already exists, which cannot happen in the binary
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    if let Some(dir) = &args.output {
        std::fs::create_dir_all(dir)?;
    }
    let mut sink = Sink {
        dir: args.output.clone(),
        written: Vec::new(),
    };
    let summary = dispatch(&rc, &mut sink)?;
    if sink.dir.is_some() {
        let manifest = json!({
            "mode": rc.mode,
            "config_path": rc.source.display().to_string(),
            "config": rc.text,
            "params": rc.params,
            "model": rc.model,
            "seed": rc.seed,
            "threads": rayon::current_num_threads(),
            "version": env!("CARGO_PKG_VERSION"),
            "wall_time_s": started.elapsed().as_secs_f64(),
            "outputs": sink.written.clone(),
            "summary": summary,
        });
        sink.json("manifest.json", &manifest)?;
    }
    Ok(())
}

fn random_config(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Configuration {
    ParticleArray::random_uniform(rng, n, d)
}

fn initial_config(path: &Option<PathBuf>, rng: &mut ChaCha8Rng, n: usize, model: &TonelliModel) -> Result<Configuration> {
    match path {
        Some(p) => {
            let m = io::read_configuration_csv(p)?;
            if m.dim() != model.dim() {
                return Err(Error::shape(format!("configuration of dimension {}", model.dim()), m.dim()));
            }
            Ok(m)
        }
        None => Ok(random_config(rng, n, model.dim())),
    }
}

fn solve_field(model: &TonelliModel, cell: &CellRun, sink: &mut Sink) -> Result<CellSolution> {
    let sol = solve_cell_detailed(model, cell.grid, cell.params, None)?;
    if let Some(p) = sink.path("field.csv") {
        io::write_field_csv(&p, &sol.field, cell.params.h, cell.params.tol)?;
    }
    Ok(sol)
}

fn cell_summary(sol: &CellSolution) -> Value {
    json!({
        "hbar": sol.field.hbar,
        "iterations": sol.iterations,
        "residual": sol.residual,
        "velocity_radius": sol.sampling.radius,
        "velocity_spacing": sol.sampling.spacing,
    })
}

fn dispatch(rc: &RunConfig, sink: &mut Sink) -> Result<Value> {
    let model = &rc.model;
    let mut rng = ChaCha8Rng::seed_from_u64(rc.seed);
    let summary = match &rc.params {
        Params::Distweak { a, b, n_particles, pairs } => {
            let pairs: Vec<(Configuration, Configuration)> = match (a, b) {
                (Some(a), Some(b)) => vec![(io::read_configuration_csv(a)?, io::read_configuration_csv(b)?)],
                (None, None) => (0..*pairs)
                    .map(|_| {
                        let x = random_config(&mut rng, *n_particles, model.dim());
                        let y = random_config(&mut rng, *n_particles, model.dim());
                        (x, y)
                    })
                    .collect(),
                _ => return Err(Error::invalid("give both 'a' and 'b', or neither")),
            };
            let mut dists = Vec::with_capacity(pairs.len());
            for (x, y) in &pairs {
                let d = dist_weak(x, y)?;
                println!("dist_weak = {d}");
                dists.push(d);
            }
            json!({ "dist_weak": dists })
        }
        Params::Flow {
            n_particles,
            initial,
            momentum,
            t_span,
            h,
            scheme,
        } => {
            let m = initial_config(initial, &mut rng, *n_particles, model)?;
            let p = match momentum {
                Some(path) => io::read_configuration_csv(path)?,
                None => ParticleArray::zeros(m.n_particles(), m.dim()),
            };
            let traj = integrate_hamiltonian(model, &PhasePoint::new(m, p)?, *t_span, *h, *scheme)?;
            if let Some(path) = sink.path("trajectory.csv") {
                io::write_trajectory_csv(&path, &traj)?;
            }
            let (drift_end, drift_max) = energy_drift(model, &traj);
            let el = euler_lagrange_residual(model, &traj);
            println!("energy drift = {drift_max:e}");
            println!("euler-lagrange residual = {el:e}");
            json!({ "steps": traj.len() - 1, "energy_drift_end": drift_end, "energy_drift_max": drift_max, "el_residual": el })
        }
        Params::Discounted {
            n_particles,
            initial,
            epsilons,
            template,
        } => {
            let m0 = initial_config(initial, &mut rng, *n_particles, model)?;
            let est = estimate_hbar_discounted(model, &m0, epsilons, template)?;
            if let Some(path) = sink.path("sweep.csv") {
                io::write_sweep_csv(&path, &est.table)?;
            }
            if let Some(path) = sink.path("start.csv") {
                io::write_configuration_csv(&path, &m0)?;
            }
            if let (Some(sol), Some(path)) = (est.solutions.last(), sink.path("minimizer.csv")) {
                io::write_trajectory_csv(&path, &sol.trajectory)?;
            }
            println!("hbar = {}", est.hbar);
            json!({ "hbar": est.hbar, "slope": est.slope, "sweep": est.table })
        }
        Params::Cell { cell } => {
            let sol = solve_field(model, cell, sink)?;
            println!("hbar = {}", sol.field.hbar);
            cell_summary(&sol)
        }
        Params::Calibrate { cell, orbit } => {
            let sol = solve_field(model, cell, sink)?;
            let seeds = random_differentiable_seeds(&sol.field, orbit.seeds, &mut rng)?;
            let mut curves = Vec::with_capacity(seeds.len());
            for (k, m) in seeds.iter().enumerate() {
                let curve = characteristic(model, &sol.field, m, orbit.t_forward, orbit.t_backward, orbit.flow_h)?;
                if let Some(path) = sink.path(&format!("curve_{k:03}.csv")) {
                    io::write_trajectory_csv(&path, &curve.trajectory)?;
                }
                curves.push(json!({ "seed": m.as_slice(), "truncated": curve.truncated, "summary": curve.summary() }));
                println!(
                    "curve {k}: residual = {:.3e}, span = [{}, {}], energy in [{}, {}]",
                    curve.residual_per_unit_time, curve.two_sided_span.0, curve.two_sided_span.1, curve.energy_min, curve.energy_max
                );
            }
            let omega = approximate_omega(model, &sol.field, &seeds, orbit.t_relax, orbit.flow_h)?;
            if let Some(path) = sink.path("omega.csv") {
                io::write_measure_csv(&path, &EmpiricalMeasure::uniform(omega.points.clone())?)?;
            }
            println!("hbar = {}", sol.field.hbar);
            println!("omega: {} points, graph defect = {:.3e}", omega.points.len(), omega.graph_defect);
            json!({
                "cell": cell_summary(&sol),
                "curves": curves,
                "omega": { "points": omega.points.len(), "graph_defect": omega.graph_defect, "energy_drift": omega.energy_drift },
            })
        }
        Params::Measure {
            cell,
            orbit,
            t_total,
            thin,
            t_test,
            rest_points,
        } => {
            let sol = solve_field(model, cell, sink)?;
            let hbar = sol.field.hbar;
            let seeds = random_differentiable_seeds(&sol.field, orbit.seeds, &mut rng)?;
            let omega = approximate_omega(model, &sol.field, &seeds, orbit.t_relax, orbit.flow_h)?;
            let start = omega.points[0].clone();
            let mu = birkhoff_measure(model, &start, *t_total, orbit.flow_h, *thin)?;
            if let Some(path) = sink.path("measure.csv") {
                io::write_measure_csv(&path, &mu)?;
            }
            let gap = check_minimizing(model, &mu, hbar);
            let invariance = check_invariance(model, &mu, *t_test, orbit.flow_h, &Observable::standard_family(model.dim()))?;
            let telescoping = telescoping_estimate(&sol.field, &mu).ok();
            let rests: Vec<EmpiricalMeasure> = (0..*rest_points)
                .map(|_| {
                    let m = random_config(&mut rng, cell.grid.n_particles, model.dim());
                    let n = m.n_particles();
                    EmpiricalMeasure::dirac(PhasePoint {
                        m,
                        p: ParticleArray::zeros(n, model.dim()),
                    })
                })
                .collect();
            let rest_gaps = lower_bound_gap(model, &rests, hbar, 1e-2);
            println!("hbar = {hbar}");
            println!("|E[L_c] + hbar| = {gap:.3e}");
            println!("invariance residual = {:.3e}", invariance.max_residual);
            println!("rest-point gaps: min = {:.3e}", rest_gaps.min_gap);
            json!({
                "cell": cell_summary(&sol),
                "start": { "x": start.m.as_slice(), "p": start.p.as_slice() },
                "hbar": hbar,
                "mean_lc": mu.expectation(model, &Observable::LagrangianLc),
                "gap": gap,
                "telescoping_mean_lc": telescoping,
                "invariance": invariance,
                "rest_point_gaps": rest_gaps,
            })
        }
        Params::Audit { n_probes, radius } => {
            let report = audit_assumptions(model, *n_probes, *radius, rc.seed);
            println!("gamma = {}", report.gamma_lower);
            println!("K_L = {}", report.k_l_upper);
            println!("violations = {}", report.violations.len());
            serde_json::to_value(&report)?
        }
        Params::OracleHbar => {
            let c = model.c()[0];
            let hbar = oracle_hbar_1d(model.external(), c)?;
            let c_star = critical_c(model.external())?;
            println!("hbar = {hbar}");
            println!("c_star = {c_star}");
            json!({ "c": c, "hbar": hbar, "c_star": c_star })
        }
    };
    let name = format!("{}.json", serde_json::to_value(rc.mode)?.as_str().unwrap_or("summary"));
    sink.json(&name, &summary)?;
    Ok(summary)
}

/// Parses `std::env::args` and runs; returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Args::try_parse_from(argv) {
        Ok(args) => run(&args),
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            code
        }
    }
}
