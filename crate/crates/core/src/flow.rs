//! Time integration of the Hamiltonian system `x' = -D_p H`, `p' = D_x H`.
//!
//! Positions are stored as lifts (never wrapped) so that velocities and action
//! integrals stay continuous along a trajectory.

use serde::{Deserialize, Serialize};

use crate::config_space::{Configuration, Momentum, Velocity};
use crate::error::{Error, Result};
use crate::model::TonelliModel;

#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub m: Configuration,
    pub p: Momentum,
}

impl PhasePoint {
    pub fn new(m: Configuration, p: Momentum) -> Result<Self> {
        m.check_shape(&p)?;
        Ok(Self { m, p })
    }

    /// `v = -D_p H = -p` for the quadratic kinetic energy.
    pub fn velocity(&self) -> Velocity {
        self.p.scaled(-1.0)
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<PhasePoint>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn step(&self) -> f64 {
        if self.times.len() < 2 {
            0.0
        } else {
            self.times[1] - self.times[0]
        }
    }

    pub fn first(&self) -> &PhasePoint {
        &self.points[0]
    }

    pub fn last(&self) -> &PhasePoint {
        self.points.last().expect("non-empty trajectory")
    }

    /// Index of the sample closest to time `t`.
    pub fn index_of(&self, t: f64) -> usize {
        let h = self.step();
        if h == 0.0 {
            return 0;
        }
        let k = ((t - self.times[0]) / h).round();
        (k.max(0.0) as usize).min(self.len() - 1)
    }

    /// Energy `H` at every sample.
    pub fn energies(&self, model: &TonelliModel) -> Vec<f64> {
        self.points
            .iter()
            .map(|z| model.eval_h(&z.m, &z.p).expect("trajectory shapes agree"))
            .collect()
    }

    /// Concatenates a backward run (as integrated, starting at the shared point) with a forward run.
    pub(crate) fn join(backward: Trajectory, forward: Trajectory) -> Trajectory {
        let mut times: Vec<f64> = backward.times.into_iter().rev().collect();
        let mut points: Vec<PhasePoint> = backward.points.into_iter().rev().collect();
        times.pop();
        points.pop();
        times.extend(forward.times);
        points.extend(forward.points);
        Trajectory { times, points }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Störmer-Verlet (kick-drift-kick); exploits the kinetic + potential split.
    #[default]
    Verlet,
    /// Implicit midpoint rule solved by fixed-point iteration.
    Midpoint,
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "verlet" => Ok(Scheme::Verlet),
            "midpoint" => Ok(Scheme::Midpoint),
            other => Err(Error::invalid(format!("unknown scheme '{other}'"))),
        }
    }
}

const MIDPOINT_MAX_ITERS: usize = 100;

/// Integrates for `ceil(t_span / h)` steps of size `h`.
pub fn integrate_hamiltonian(
    model: &TonelliModel,
    start: &PhasePoint,
    t_span: f64,
    h: f64,
    scheme: Scheme,
) -> Result<Trajectory> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::invalid(format!("step h = {h} must be positive")));
    }
    if !(t_span >= h) || !t_span.is_finite() {
        return Err(Error::invalid(format!("t_span = {t_span} must be at least h = {h}")));
    }
    if start.m.dim() != model.dim() {
        return Err(Error::shape(model.dim(), start.m.dim()));
    }
    start.m.check_shape(&start.p)?;
    let steps = (t_span / h - 1e-9).ceil() as usize;
    flow_steps(model, start, steps, h, scheme)
}

/// Runs `steps` steps of signed size `h` (negative `h` integrates backward).
pub(crate) fn flow_steps(
    model: &TonelliModel,
    start: &PhasePoint,
    steps: usize,
    h: f64,
    scheme: Scheme,
) -> Result<Trajectory> {
    let mut times = Vec::with_capacity(steps + 1);
    let mut points = Vec::with_capacity(steps + 1);
    times.push(0.0);
    points.push(start.clone());
    let mut x = start.m.clone();
    let mut p = start.p.clone();
    let mut force = model.potential_gradient(&x);
    for k in 0..steps {
        match scheme {
            Scheme::Verlet => {
                p.axpy(0.5 * h, &force);
                x.axpy(-h, &p);
                force = model.potential_gradient(&x);
                p.axpy(0.5 * h, &force);
            }
            Scheme::Midpoint => {
                let (xn, pn) = midpoint_step(model, &x, &p, h).ok_or(Error::IntegrationFailure {
                    step: k,
                    iterations: MIDPOINT_MAX_ITERS,
                })?;
                x = xn;
                p = pn;
            }
        }
        times.push((k + 1) as f64 * h);
        points.push(PhasePoint {
            m: x.clone(),
            p: p.clone(),
        });
    }
    Ok(Trajectory { times, points })
}

fn midpoint_step(model: &TonelliModel, x: &Configuration, p: &Momentum, h: f64) -> Option<(Configuration, Momentum)> {
    let mut xn = x.add_scaled(-h, p);
    let mut pn = p.add_scaled(h, &model.potential_gradient(x));
    for _ in 0..MIDPOINT_MAX_ITERS {
        let xm = x.add_scaled(1.0, &xn).scaled(0.5);
        let pm = p.add_scaled(1.0, &pn).scaled(0.5);
        let x_next = x.add_scaled(-h, &pm);
        let p_next = p.add_scaled(h, &model.potential_gradient(&xm));
        let change = x_next.max_abs_diff(&xn).max(p_next.max_abs_diff(&pn));
        let scale = 1.0 + x_next.as_slice().iter().chain(p_next.as_slice()).fold(0.0f64, |a, b| a.max(b.abs()));
        xn = x_next;
        pn = p_next;
        if change <= 1e-15 * scale {
            return Some((xn, pn));
        }
    }
    None
}

/// Starts the Hamiltonian flow from `p0 = -D_v L(m0, v0)`.
pub fn integrate_euler_lagrange(
    model: &TonelliModel,
    m0: &Configuration,
    v0: &Velocity,
    t_span: f64,
    h: f64,
) -> Result<Trajectory> {
    let (_, dv) = model.grad_l(m0, v0)?;
    let start = PhasePoint::new(m0.clone(), dv.scaled(-1.0))?;
    integrate_hamiltonian(model, &start, t_span, h, Scheme::Verlet)
}

/// Largest empirical norm of `(x_{k+1} - 2 x_k + x_{k-1}) / h^2 - D_x L(x_k)` over interior samples.
pub fn euler_lagrange_residual(model: &TonelliModel, traj: &Trajectory) -> f64 {
    let h = traj.step();
    let mut worst = 0.0f64;
    for k in 1..traj.len().saturating_sub(1) {
        let acc = traj.points[k + 1]
            .m
            .add_scaled(-2.0, &traj.points[k].m)
            .add_scaled(1.0, &traj.points[k - 1].m)
            .scaled(1.0 / (h * h));
        // D_x L = -grad(potential)
        let r = acc.add_scaled(1.0, &model.potential_gradient(&traj.points[k].m));
        worst = worst.max(r.norm());
    }
    worst
}

/// `(|H(end) - H(start)|, max_k |H(t_k) - H(start)|)`.
pub fn energy_drift(model: &TonelliModel, traj: &Trajectory) -> (f64, f64) {
    let e = traj.energies(model);
    let e0 = e[0];
    let end = (e[e.len() - 1] - e0).abs();
    let max = e.iter().map(|x| (x - e0).abs()).fold(0.0, f64::max);
    (end, max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config_space::ParticleArray;

    fn one(x: f64) -> ParticleArray {
        ParticleArray::from_rows(&[[x]]).unwrap()
    }

    #[test]
    fn free_flow_is_exact() {
        let model = TonelliModel::free(vec![0.0, 0.0]);
        let m = ParticleArray::from_rows(&[[0.1, 0.2], [0.5, 0.9]]).unwrap();
        let p = ParticleArray::from_rows(&[[1.0, -0.5], [0.25, 2.0]]).unwrap();
        let traj = integrate_hamiltonian(&model, &PhasePoint::new(m.clone(), p.clone()).unwrap(), 2.0, 0.125, Scheme::Verlet).unwrap();
        let end = traj.last();
        let expected = m.add_scaled(-2.0, &p);
        assert!(end.m.max_abs_diff(&expected) < 1e-14);
        assert_eq!(end.p, p);
        let (drift, _) = energy_drift(&model, &traj);
        assert_eq!(drift, 0.0);
    }

    #[test]
    fn rejects_bad_steps() {
        let model = TonelliModel::free(vec![0.0]);
        let z = PhasePoint::new(one(0.0), one(0.0)).unwrap();
        assert!(integrate_hamiltonian(&model, &z, 1.0, 0.0, Scheme::Verlet).is_err());
        assert!(integrate_hamiltonian(&model, &z, 0.01, 0.1, Scheme::Verlet).is_err());
    }

    #[test]
    fn stationary_at_critical_point() {
        let model = TonelliModel::cosine(vec![0.0]);
        let traj = integrate_euler_lagrange(&model, &one(0.5), &one(0.0), 1.0, 0.01).unwrap();
        assert!(traj.last().m.max_abs_diff(&one(0.5)) < 1e-15);
    }

    #[test]
    fn free_euler_lagrange_moves_at_constant_velocity() {
        let model = TonelliModel::free(vec![0.0]);
        let traj = integrate_euler_lagrange(&model, &one(0.2), &one(0.75), 2.0, 0.25).unwrap();
        assert!((traj.last().m.as_slice()[0] - 1.7).abs() < 1e-14);
        assert!((traj.last().velocity().as_slice()[0] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn verlet_satisfies_discrete_euler_lagrange() {
        let model = TonelliModel::cosine(vec![0.0]);
        let traj = integrate_euler_lagrange(&model, &one(0.3), &one(0.4), 3.0, 0.01).unwrap();
        assert!(euler_lagrange_residual(&model, &traj) < 1e-8);
    }

    #[test]
    fn midpoint_conserves_energy_to_second_order() {
        let model = TonelliModel::cosine(vec![0.0]);
        let z = PhasePoint::new(one(0.3), one(0.2)).unwrap();
        let coarse = integrate_hamiltonian(&model, &z, 2.0, 0.02, Scheme::Midpoint).unwrap();
        let fine = integrate_hamiltonian(&model, &z, 2.0, 0.01, Scheme::Midpoint).unwrap();
        let (_, e1) = energy_drift(&model, &coarse);
        let (_, e2) = energy_drift(&model, &fine);
        let ratio = e1 / e2;
        assert!((3.0..=5.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn pendulum_and_euler_lagrange_agree() {
        let model = TonelliModel::cosine(vec![0.0]);
        let v0 = one(0.3);
        let el = integrate_euler_lagrange(&model, &one(0.1), &v0, 1.0, 0.01).unwrap();
        let z = PhasePoint::new(one(0.1), v0.scaled(-1.0)).unwrap();
        let ham = integrate_hamiltonian(&model, &z, 1.0, 0.01, Scheme::Verlet).unwrap();
        assert!(el.last().m.max_abs_diff(&ham.last().m) < 1e-12);
    }
}
