//! Calibrated curves along the characteristics of a weak KAM solution.
//!
//! From a differentiable point `M` of `U` the Hamiltonian flow is started at
//! momentum `p = grad U(M) + c`, which is the characteristic of
//! `H_c(x, grad U) = Hbar`. A curve is calibrated on `[t1, t2]` when
//!
//! ```text
//! U(x(t1)) - U(x(t2)) = int_{t1}^{t2} (L_c(x, x') + Hbar) ds.
//! ```

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cell::{grad_u_config, GridField};
use crate::config_space::{dist_weak, Configuration, ParticleArray};
use crate::error::{Error, Result};
use crate::flow::{flow_steps, PhasePoint, Scheme, Trajectory};
use crate::model::TonelliModel;

#[derive(Debug, Clone)]
pub struct CalibratedCurve {
    pub trajectory: Trajectory,
    pub residual_per_unit_time: f64,
    /// `(t_min, t_max)` with `t_min <= 0 <= t_max`.
    pub two_sided_span: (f64, f64),
    /// Whether the backward span was cut short at a kink or a residual blow-up.
    pub truncated: bool,
    pub energy_min: f64,
    pub energy_max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveSummary {
    pub residual_per_unit_time: f64,
    pub span: (f64, f64),
    pub energy_min: f64,
    pub energy_max: f64,
}

impl CalibratedCurve {
    pub fn summary(&self) -> CurveSummary {
        CurveSummary {
            residual_per_unit_time: self.residual_per_unit_time,
            span: self.two_sided_span,
            energy_min: self.energy_min,
            energy_max: self.energy_max,
        }
    }
}

/// Starting momentum `grad U(m) + c` of the characteristic through `m`.
pub fn characteristic_momentum(model: &TonelliModel, field: &GridField, m: &Configuration, mask: &[bool]) -> Result<ParticleArray> {
    Ok(grad_u_config(field, m, mask)?.add_row_vector(model.c()))
}

/// `|U(x(t1)) - U(x(t2)) - int_{t1}^{t2} (L_c + Hbar)| / (t2 - t1)` with the
/// trapezoidal rule on the trajectory samples and velocity `-p`.
pub fn calibration_residual(model: &TonelliModel, field: &GridField, traj: &Trajectory, t1: f64, t2: f64) -> Result<f64> {
    if !(t1 < t2) {
        return Err(Error::invalid(format!("need t1 < t2, got {t1} and {t2}")));
    }
    let i1 = traj.index_of(t1);
    let i2 = traj.index_of(t2);
    if i2 <= i1 {
        return Err(Error::invalid("time window is shorter than one step"));
    }
    let integrand = |k: usize| -> Result<f64> {
        let z = &traj.points[k];
        Ok(model.eval_lc(&z.m, &z.velocity())? + field.hbar)
    };
    let mut integral = 0.0;
    let mut prev = integrand(i1)?;
    for k in i1 + 1..=i2 {
        let next = integrand(k)?;
        integral += 0.5 * (traj.times[k] - traj.times[k - 1]) * (prev + next);
        prev = next;
    }
    let u1 = field.value_at(&traj.points[i1].m)?;
    let u2 = field.value_at(&traj.points[i2].m)?;
    Ok((u1 - u2 - integral).abs() / (traj.times[i2] - traj.times[i1]))
}

/// Flows the characteristic through `m` forward for at most `t_forward` and
/// backward for at most `t_backward`. Either run stops one step before it
/// comes within a cell of a kink of `U`. The forward run also stops when the
/// momentum leaves the graph of `grad U + c` by more than `GRAPH_TOL`, which
/// happens near hyperbolic rest points where round-off is amplified. The
/// backward run is halved while its residual exceeds ten times that of the
/// forward part (plus `1e-3`).
pub fn characteristic(model: &TonelliModel, field: &GridField, m: &Configuration, t_forward: f64, t_backward: f64, h: f64) -> Result<CalibratedCurve> {
    if !(h > 0.0) || !(t_forward >= 0.0) || !(t_backward >= 0.0) || t_forward + t_backward < h {
        return Err(Error::invalid("need h > 0 and a span of at least one step"));
    }
    let mask = field.kink_mask();
    let p0 = characteristic_momentum(model, field, m, &mask)?;
    let start = PhasePoint::new(m.clone(), p0)?;
    let fwd_steps = (t_forward / h).round() as usize;
    let (forward, mut truncated) = forward_on_graph(model, field, &mask, &start, fwd_steps, h)?;
    let fwd_residual = if forward.len() > 1 {
        calibration_residual(model, field, &forward, 0.0, *forward.times.last().expect("non-empty"))?
    } else {
        0.0
    };

    let bwd_steps = (t_backward / h).round() as usize;
    let mut backward = flow_steps(model, &start, bwd_steps, -h, Scheme::Verlet)?;
    if let Some(hit) = (1..backward.len()).find(|&k| segment_near_kink(field, &mask, &backward.points[k - 1].m, &backward.points[k].m)) {
        // keep the samples before the segment that touches a kink
        backward.points.truncate(hit);
        backward.times.truncate(hit);
        truncated = true;
    }
    let limit = 10.0 * fwd_residual + 1e-3;
    while backward.len() > 2 {
        let as_forward = reversed(&backward);
        let t0 = as_forward.times[0];
        if calibration_residual(model, field, &as_forward, t0, 0.0)? <= limit {
            break;
        }
        let keep = backward.len() / 2;
        backward.points.truncate(keep);
        backward.times.truncate(keep);
        truncated = true;
    }
    if backward.len() < 2 {
        truncated |= bwd_steps > 0;
    }

    let trajectory = Trajectory::join(backward, forward);
    if trajectory.len() < 2 {
        return Err(Error::NonDifferentiable { point: m.as_slice().to_vec() });
    }
    let t_min = trajectory.times[0];
    let t_max = *trajectory.times.last().expect("non-empty");
    let residual = calibration_residual(model, field, &trajectory, t_min, t_max)?;
    let energies = trajectory.energies(model);
    Ok(CalibratedCurve {
        residual_per_unit_time: residual,
        two_sided_span: (t_min, t_max),
        truncated,
        energy_min: energies.iter().copied().fold(f64::INFINITY, f64::min),
        energy_max: energies.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        trajectory,
    })
}

/// Verlet flow from `start`, cut before the first step that nears a kink or leaves the graph.
fn forward_on_graph(model: &TonelliModel, field: &GridField, mask: &[bool], start: &PhasePoint, steps: usize, h: f64) -> Result<(Trajectory, bool)> {
    let mut forward = flow_steps(model, start, steps, h, Scheme::Verlet)?;
    let hit = (1..forward.len()).find(|&k| {
        segment_near_kink(field, mask, &forward.points[k - 1].m, &forward.points[k].m) || off_graph(model, field, mask, &forward.points[k])
    });
    if let Some(hit) = hit {
        forward.points.truncate(hit);
        forward.times.truncate(hit);
    }
    Ok((forward, hit.is_some()))
}

/// Whether the straight segment between two configurations passes within a cell of a kink.
fn segment_near_kink(field: &GridField, mask: &[bool], a: &Configuration, b: &Configuration) -> bool {
    let (Ok(ya), Ok(yb)) = (field.reduce(a), field.reduce(b)) else {
        return true;
    };
    let len = ya.iter().zip(&yb).map(|(p, q)| (q - p).abs()).fold(0.0, f64::max);
    let pieces = (2.0 * len / field.spacing).ceil().max(1.0) as usize;
    (0..=pieces).any(|i| {
        let t = i as f64 / pieces as f64;
        let y: Vec<f64> = ya.iter().zip(&yb).map(|(p, q)| p + t * (q - p)).collect();
        field.near_kink(&y, mask)
    })
}

/// Largest accepted `|p - (grad U + c)|` along a forward characteristic.
pub const GRAPH_TOL: f64 = 5e-2;

fn off_graph(model: &TonelliModel, field: &GridField, mask: &[bool], z: &PhasePoint) -> bool {
    match characteristic_momentum(model, field, &z.m, mask) {
        Ok(p) => p.sub(&z.p).norm() > GRAPH_TOL,
        Err(_) => true,
    }
}

fn reversed(backward: &Trajectory) -> Trajectory {
    Trajectory {
        times: backward.times.iter().rev().copied().collect(),
        points: backward.points.iter().rev().cloned().collect(),
    }
}

/// Uniform random configurations whose reduced coordinates stay a cell away from every kink of `field`.
pub fn random_differentiable_seeds<R: Rng + ?Sized>(field: &GridField, count: usize, rng: &mut R) -> Result<Vec<Configuration>> {
    let mask = field.kink_mask();
    let (n, d) = (field.spec.n_particles, field.spec.dim);
    let mut seeds = Vec::with_capacity(count);
    for _ in 0..1000 * count.max(1) {
        if seeds.len() == count {
            break;
        }
        let m = ParticleArray::random_uniform(rng, n, d);
        if !field.near_kink(&field.reduce(&m)?, &mask) {
            seeds.push(m);
        }
    }
    if seeds.len() < count {
        return Err(Error::NonDifferentiable { point: Vec::new() });
    }
    Ok(seeds)
}

#[derive(Debug, Clone)]
pub struct OmegaApprox {
    /// Distinct relaxed phase points (up to relabeling and integer shifts).
    pub points: Vec<PhasePoint>,
    /// Largest distance `|p - (grad U(x) + c)|` after flowing each point one
    /// more unit of time; points of the invariant set stay on the graph.
    pub graph_defect: f64,
    /// Largest change of `H` over that extra unit of time.
    pub energy_drift: f64,
}

/// Relaxes each seed along its forward characteristic for `t_relax`, or until
/// the characteristic leaves the graph of `grad U + c`. When the
/// orbit passes close to an equilibrium of the flow, that equilibrium is
/// located by Newton's method and returned instead: a hyperbolic rest point
/// is only reached in infinite time, and any finite-time approximation
/// leaves it again along the unstable direction.
pub fn approximate_omega(model: &TonelliModel, field: &GridField, seeds: &[Configuration], t_relax: f64, h: f64) -> Result<OmegaApprox> {
    if seeds.is_empty() {
        return Err(Error::invalid("no seeds given"));
    }
    if !(h > 0.0) || !(t_relax >= h) {
        return Err(Error::invalid("need h > 0 and t_relax >= h"));
    }
    let mask = field.kink_mask();
    let steps = (t_relax / h).round() as usize;
    let relaxed: Vec<Result<PhasePoint>> = seeds
        .par_iter()
        .map(|m| {
            let p0 = characteristic_momentum(model, field, m, &mask)?;
            let (traj, _) = forward_on_graph(model, field, &mask, &PhasePoint::new(m.clone(), p0)?, steps, h)?;
            Ok(relaxed_point(model, &traj))
        })
        .collect();
    let mut points: Vec<PhasePoint> = Vec::new();
    for z in relaxed {
        let z = z?;
        let duplicate = points.iter().any(|q| {
            q.p.max_abs_diff(&z.p) < 1e-9 && dist_weak(&q.m, &z.m).map(|d| d < 1e-9).unwrap_or(false)
        });
        if !duplicate {
            points.push(z);
        }
    }
    let unit = (1.0 / h).round().max(1.0) as usize;
    let mut graph_defect = 0.0f64;
    let mut energy_drift = 0.0f64;
    for z in &points {
        let later = flow_steps(model, z, unit, h, Scheme::Verlet)?;
        let end = later.last();
        let defect = match characteristic_momentum(model, field, &end.m, &mask) {
            Ok(p) => p.sub(&end.p).norm(),
            Err(Error::NonDifferentiable { .. }) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        graph_defect = graph_defect.max(defect);
        let e = later.energies(model);
        energy_drift = energy_drift.max((e[e.len() - 1] - e[0]).abs());
    }
    Ok(OmegaApprox {
        points,
        graph_defect,
        energy_drift,
    })
}

/// Size of the Hamiltonian vector field `(-p, grad potential)` used to spot near-equilibria.
fn vector_field_norm(model: &TonelliModel, z: &PhasePoint) -> f64 {
    (z.p.norm_sq() + model.potential_gradient(&z.m).norm_sq()).sqrt()
}

/// Phase-space distance `|x - x*| + |p|` within which an orbit is taken to have reached the equilibrium `x*`.
const EQUILIBRIUM_CAPTURE: f64 = 0.1;

fn relaxed_point(model: &TonelliModel, traj: &Trajectory) -> PhasePoint {
    let best = traj
        .points
        .iter()
        .min_by(|a, b| vector_field_norm(model, a).total_cmp(&vector_field_norm(model, b)))
        .expect("non-empty trajectory");
    if let Some(x) = polish_equilibrium(model, &best.m) {
        if x.sub(&best.m).norm() + best.p.norm() < EQUILIBRIUM_CAPTURE {
            let n = x.n_particles();
            let d = x.dim();
            return PhasePoint {
                m: x,
                p: ParticleArray::zeros(n, d),
            };
        }
    }
    traj.last().clone()
}

/// Newton's method on `grad potential = 0`; returns the iterate with the
/// smallest gradient if it is below `1e-12`.
fn polish_equilibrium(model: &TonelliModel, m: &Configuration) -> Option<Configuration> {
    let size = m.n_particles() * m.dim();
    let mut x = m.clone();
    let mut best = (model.potential_gradient(&x).norm(), x.clone());
    for _ in 0..100 {
        let g = model.potential_gradient(&x);
        let gn = g.norm();
        if gn < best.0 {
            best = (gn, x.clone());
        }
        if gn == 0.0 {
            break;
        }
        let hess = nalgebra::DMatrix::from_row_slice(size, size, &model.potential_hessian(&x));
        let step = hess.lu().solve(&nalgebra::DVector::from_column_slice(g.as_slice()))?;
        let next = ParticleArray::new(m.n_particles(), m.dim(), x.as_slice().iter().zip(step.iter()).map(|(a, s)| a - s).collect()).ok()?;
        if next.max_abs_diff(m) > 0.25 {
            return None;
        }
        x = next;
    }
    (best.0 <= 1e-12).then_some(best.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::{solve_cell, CellParams, GridSpec};

    fn one(x: f64) -> ParticleArray {
        ParticleArray::from_rows(&[[x]]).unwrap()
    }

    fn grid(nodes: usize) -> GridSpec {
        GridSpec::new(1, 1, nodes).unwrap()
    }

    #[test]
    fn free_stationary_curve() {
        let free = TonelliModel::free(vec![0.0]);
        let field = GridField::zeros(grid(50));
        let curve = characteristic(&free, &field, &one(0.3), 2.0, 1.0, 0.01).unwrap();
        assert_eq!(curve.residual_per_unit_time, 0.0);
        assert!(curve.trajectory.points.iter().all(|z| z.m == one(0.3)));
        assert!((curve.two_sided_span.0 + 1.0).abs() < 1e-9);
    }

    #[test]
    fn free_drift_line() {
        let free = TonelliModel::free(vec![1.0]);
        let mut field = GridField::zeros(grid(50));
        field.hbar = 0.5;
        let curve = characteristic(&free, &field, &one(0.3), 2.0, 2.0, 0.01).unwrap();
        assert!(curve.residual_per_unit_time <= 1e-10);
        for z in &curve.trajectory.points {
            assert_eq!(z.velocity().as_slice(), &[-1.0]);
        }
        assert!(!curve.truncated);
    }

    #[test]
    fn straight_line_is_not_calibrated_in_cosine_case() {
        let cos = TonelliModel::cosine(vec![0.0]);
        let field = solve_cell(&cos, grid(200), CellParams::new(0.02, 1e-8, 10_000)).unwrap();
        let traj = Trajectory {
            times: (0..=100).map(|k| k as f64 * 0.01).collect(),
            points: (0..=100).map(|k| PhasePoint::new(one(0.1 + 0.008 * k as f64), one(-0.8)).unwrap()).collect(),
        };
        assert!(calibration_residual(&cos, &field, &traj, 0.0, 1.0).unwrap() > 0.1);
        let rest = Trajectory {
            times: vec![0.0, 0.5, 1.0],
            points: vec![PhasePoint::new(one(0.0), one(0.0)).unwrap(); 3],
        };
        assert!(calibration_residual(&cos, &field, &rest, 0.0, 1.0).unwrap() < 1e-6);
    }

    #[test]
    fn rejects_reversed_window() {
        let free = TonelliModel::free(vec![0.0]);
        let field = GridField::zeros(grid(20));
        let traj = Trajectory {
            times: vec![0.0, 1.0],
            points: vec![PhasePoint::new(one(0.0), one(0.0)).unwrap(); 2],
        };
        assert!(calibration_residual(&free, &field, &traj, 1.0, 0.0).is_err());
    }

    #[test]
    fn free_omega_moves_at_minus_c() {
        let free = TonelliModel::free(vec![1.0]);
        let field = GridField::zeros(grid(32));
        let seeds = vec![one(0.1), one(0.6)];
        let omega = approximate_omega(&free, &field, &seeds, 1.0, 0.05).unwrap();
        assert_eq!(omega.points.len(), 2);
        for z in &omega.points {
            assert_eq!(z.velocity().as_slice(), &[-1.0]);
        }
        assert_eq!(omega.graph_defect, 0.0);
    }

    #[test]
    fn equilibrium_polish_reaches_rest_point() {
        let cos = TonelliModel::cosine(vec![0.0]);
        let x = polish_equilibrium(&cos, &one(0.01)).unwrap();
        assert!(cos.potential_gradient(&x).norm() <= 1e-12);
        assert!(x.as_slice()[0].abs() < 1e-6);
    }
}
