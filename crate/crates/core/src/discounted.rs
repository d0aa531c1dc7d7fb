//! Discounted infinite-horizon problem
//!
//! ```text
//! V_eps(M) = inf { int_0^inf e^{-eps t} L_c(x, x') dt : x(0) = M }
//! ```
//!
//! solved on a truncated horizon `[0, T]` with `K` steps of size `h = T/K`.
//! The discrete action uses left-endpoint quadrature in both the discount
//! weight and the Lagrangian; the terminal point is free. The neglected tail
//! is bracketed by `[-e^{-eps T} |c|^2/(2 eps), e^{-eps T} C/eps]`, where `C`
//! bounds the cost of resting, and the reported value adds the midpoint.
//!
//! Minimization is a damped Newton method. The Hessian of the discrete action
//! is block tridiagonal in time, so each step costs one block Cholesky sweep.
//! Indefinite Hessians are shifted by a multiple of the discounted mass until
//! the factorization succeeds, and steps satisfy the strong Wolfe conditions.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config_space::{Configuration, ParticleArray};
use crate::error::{Error, Result};
use crate::flow::{PhasePoint, Trajectory};
use crate::model::TonelliModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscountedSpec {
    pub epsilon: f64,
    pub horizon: f64,
    pub steps: usize,
    /// Bound on the norm of the per-step Euler-Lagrange residual vector.
    pub tol_grad: f64,
    /// Tolerance on `V_eps` itself; the tail bracket must fit inside it.
    pub value_tol: f64,
    pub max_iters: usize,
}

impl DiscountedSpec {
    pub fn new(epsilon: f64, horizon: f64, steps: usize, tol_grad: f64, value_tol: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::invalid(format!("discount rate {epsilon} must be positive")));
        }
        if !(horizon > 0.0) || !horizon.is_finite() || steps == 0 {
            return Err(Error::invalid("horizon and step count must be positive"));
        }
        if !(tol_grad > 0.0) || !(value_tol > 0.0) {
            return Err(Error::invalid("tolerances must be positive"));
        }
        Ok(Self {
            epsilon,
            horizon,
            steps,
            tol_grad,
            value_tol,
            max_iters: 500,
        })
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Bracket for the contribution of `[T, inf)` to the optimal value.
    pub fn tail_interval(&self, model: &TonelliModel) -> (f64, f64) {
        let decay = (-self.epsilon * self.horizon).exp() / self.epsilon;
        (-decay * model.lc_lower_shift(), decay * model.rest_cost_bound())
    }

    /// Checks `e^{-eps T} max(C, |c|^2/2) / eps <= value_tol`.
    pub fn validate_for(&self, model: &TonelliModel) -> Result<()> {
        let (lo, hi) = self.tail_interval(model);
        let worst = hi.max(-lo);
        if worst > self.value_tol {
            return Err(Error::invalid(format!(
                "horizon T = {} too short: tail bound {worst:.3e} exceeds value tolerance {:.3e}",
                self.horizon, self.value_tol
            )));
        }
        Ok(())
    }
}

/// Recipe for choosing a [`DiscountedSpec`] at each discount rate of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepTemplate {
    pub step: f64,
    /// Tolerance on `eps * V_eps`.
    pub scaled_tol: f64,
    pub tol_grad: f64,
    pub max_iters: usize,
}

impl Default for SweepTemplate {
    fn default() -> Self {
        Self {
            step: 0.05,
            scaled_tol: 1e-5,
            tol_grad: 1e-8,
            max_iters: 500,
        }
    }
}

impl SweepTemplate {
    /// Horizon `T = max(2/eps, ln(C_tail / scaled_tol)/eps)`, rounded up to a whole number of steps.
    pub fn spec_for(&self, model: &TonelliModel, epsilon: f64) -> Result<DiscountedSpec> {
        if !(epsilon > 0.0) {
            return Err(Error::invalid(format!("discount rate {epsilon} must be positive")));
        }
        if !(self.step > 0.0) || !(self.scaled_tol > 0.0) {
            return Err(Error::invalid("step and tolerance must be positive"));
        }
        let c_tail = model.rest_cost_bound().max(model.lc_lower_shift());
        let mut horizon = 2.0 / epsilon;
        if c_tail > self.scaled_tol {
            horizon = horizon.max((c_tail / self.scaled_tol).ln() / epsilon);
        }
        let steps = (horizon / self.step).ceil().max(1.0) as usize;
        let mut spec = DiscountedSpec::new(
            epsilon,
            steps as f64 * self.step,
            steps,
            self.tol_grad,
            self.scaled_tol / epsilon,
        )?;
        spec.max_iters = self.max_iters;
        Ok(spec)
    }
}

#[derive(Debug, Clone)]
pub enum Init {
    /// Constant path at the starting configuration.
    Rest,
    /// Uniform motion with velocity `-c`, the minimizer when there is no potential.
    Drift,
    /// Positions of an earlier trajectory; truncated or extended at rest to the new length.
    Warm(Trajectory),
}

#[derive(Debug, Clone)]
pub struct DiscountedSolution {
    /// Discrete minimizer; momenta are `-v_k` from forward differences.
    pub trajectory: Trajectory,
    pub action: f64,
    /// `action` plus the midpoint of the tail bracket.
    pub value: f64,
    pub grad_v: ParticleArray,
    pub grad_norm: f64,
    pub el_residual: f64,
    pub tail: (f64, f64),
    pub iterations: usize,
    pub epsilon: f64,
}

/// Discrete discounted action of the path `m0, x_1, .., x_K`.
pub fn discounted_action(
    model: &TonelliModel,
    spec: &DiscountedSpec,
    free_traj: &[Configuration],
    m0: &Configuration,
) -> Result<f64> {
    if free_traj.len() != spec.steps {
        return Err(Error::shape(format!("{} free configurations", spec.steps), free_traj.len()));
    }
    if m0.dim() != model.dim() {
        return Err(Error::shape(model.dim(), m0.dim()));
    }
    for x in free_traj {
        m0.check_shape(x)?;
    }
    let problem = Problem::new(model, spec, m0);
    Ok(problem.action(free_traj))
}

/// Discrete discounted action and its gradient with respect to `x_1, .., x_K`.
/// The gradient is taken in the empirical metric: entry `k` is `N dA/dx_{k+1}`.
pub fn discounted_action_gradient(
    model: &TonelliModel,
    spec: &DiscountedSpec,
    free_traj: &[Configuration],
    m0: &Configuration,
) -> Result<(f64, Vec<ParticleArray>)> {
    if free_traj.len() != spec.steps {
        return Err(Error::shape(format!("{} free configurations", spec.steps), free_traj.len()));
    }
    if m0.dim() != model.dim() {
        return Err(Error::shape(model.dim(), m0.dim()));
    }
    for x in free_traj {
        m0.check_shape(x)?;
    }
    Ok(Problem::new(model, spec, m0).action_and_gradient(free_traj))
}

struct Problem<'a> {
    model: &'a TonelliModel,
    m0: &'a Configuration,
    h: f64,
    steps: usize,
    weights: Vec<f64>,
    c: Vec<f64>,
    n: usize,
    d: usize,
}

type Path = Vec<ParticleArray>;

impl<'a> Problem<'a> {
    fn new(model: &'a TonelliModel, spec: &DiscountedSpec, m0: &'a Configuration) -> Self {
        let h = spec.step();
        let weights = (0..spec.steps).map(|k| (-spec.epsilon * k as f64 * h).exp()).collect();
        Self {
            model,
            m0,
            h,
            steps: spec.steps,
            weights,
            c: model.c().to_vec(),
            n: m0.n_particles(),
            d: m0.dim(),
        }
    }

    fn point<'b>(&'b self, x: &'b [ParticleArray], k: usize) -> &'b ParticleArray {
        if k == 0 {
            self.m0
        } else {
            &x[k - 1]
        }
    }

    fn velocity(&self, x: &[ParticleArray], k: usize) -> ParticleArray {
        self.point(x, k + 1).sub(self.point(x, k)).scaled(1.0 / self.h)
    }

    fn step_cost(&self, x: &[ParticleArray], k: usize) -> f64 {
        let v = self.velocity(x, k);
        let lc = self.model.eval_lc(self.point(x, k), &v).expect("shapes agree");
        self.h * self.weights[k] * lc
    }

    fn action(&self, x: &[ParticleArray]) -> f64 {
        let terms: Vec<f64> = (0..self.steps)
            .into_par_iter()
            .map(|k| self.step_cost(x, k))
            .collect();
        terms.iter().sum()
    }

    /// Action and its empirical gradient `N dA/dx_k` for `k = 1..K`.
    fn action_and_gradient(&self, x: &[ParticleArray]) -> (f64, Path) {
        let per_step: Vec<(f64, ParticleArray, ParticleArray)> = (0..self.steps)
            .into_par_iter()
            .map(|k| {
                let xk = self.point(x, k);
                let v = self.velocity(x, k);
                let lc = self.model.eval_lc(xk, &v).expect("shapes agree");
                let w = self.weights[k];
                // momentum-like term w_k (v_k + c) and force term h w_k D_x L_c
                let gv = v.add_row_vector(&self.c).scaled(w);
                let gx = self.model.potential_gradient(xk).scaled(-self.h * w);
                (self.h * w * lc, gv, gx)
            })
            .collect();
        let action = per_step.iter().map(|t| t.0).sum();
        let grad = (1..=self.steps)
            .map(|k| {
                let mut g = per_step[k - 1].1.clone();
                if k < self.steps {
                    g.axpy(1.0, &per_step[k].2);
                    g.axpy(-1.0, &per_step[k].1);
                }
                g
            })
            .collect();
        (action, grad)
    }

    /// Diagonal blocks of the empirical Hessian, one per free configuration.
    fn hessian_blocks(&self, x: &[ParticleArray]) -> Vec<DMatrix<f64>> {
        let kk = self.steps;
        let h = self.h;
        let w = &self.weights;
        let size = self.n * self.d;
        (1..=kk)
            .into_par_iter()
            .map(|k| {
                if k == kk {
                    return DMatrix::identity(size, size) * (w[k - 1] / h);
                }
                let hp = self.model.potential_hessian(&x[k - 1]);
                let mut b = DMatrix::from_row_slice(size, size, &hp) * (-h * w[k]);
                for i in 0..size {
                    b[(i, i)] += (w[k - 1] + w[k]) / h;
                }
                b
            })
            .collect()
    }

    /// Block Cholesky sweep of the Hessian plus `shift h w_k` on each diagonal
    /// block. The coupling between `x_k` and `x_{k+1}` is `-w_k / h` times
    /// the identity. Returns `None` when the shifted matrix is not positive definite.
    fn factor(&self, blocks: &[DMatrix<f64>], shift: f64) -> Option<Vec<Cholesky<f64, Dyn>>> {
        let kk = self.steps;
        let mut out: Vec<Cholesky<f64, Dyn>> = Vec::with_capacity(kk);
        for k in 1..=kk {
            let mut s = blocks[k - 1].clone();
            let mass = shift * self.h * self.weights[k.min(kk - 1)];
            for i in 0..s.nrows() {
                s[(i, i)] += mass;
            }
            if k > 1 {
                let o = self.weights[k - 1] / self.h;
                s -= out[k - 2].inverse() * (o * o);
            }
            out.push(Cholesky::new(s)?);
        }
        Some(out)
    }

    fn solve(&self, factors: &[Cholesky<f64, Dyn>], g: &[ParticleArray]) -> Path {
        let kk = self.steps;
        let off = |k: usize| -self.weights[k] / self.h;
        let mut r: Vec<DVector<f64>> = Vec::with_capacity(kk);
        for k in 1..=kk {
            let mut rk = DVector::from_column_slice(g[k - 1].as_slice());
            if k > 1 {
                rk -= factors[k - 2].solve(&r[k - 2]) * off(k - 1);
            }
            r.push(rk);
        }
        let mut z = vec![DVector::zeros(0); kk];
        z[kk - 1] = factors[kk - 1].solve(&r[kk - 1]);
        for k in (1..kk).rev() {
            let rhs = &r[k - 1] - &z[k] * off(k);
            z[k - 1] = factors[k - 1].solve(&rhs);
        }
        z.into_iter()
            .map(|v| ParticleArray::new(self.n, self.d, v.as_slice().to_vec()).expect("finite step"))
            .collect()
    }

    fn grad_norm(&self, g: &[ParticleArray]) -> f64 {
        g.iter().map(|gk| gk.norm_sq()).sum::<f64>().sqrt() / self.h
    }

    fn el_residual(&self, g: &[ParticleArray]) -> f64 {
        g[..self.steps - 1]
            .iter()
            .map(|gk| gk.norm())
            .fold(0.0, f64::max)
            / self.h
    }
}

fn dot(a: &[ParticleArray], b: &[ParticleArray]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.inner(y)).sum()
}

fn moved(x: &[ParticleArray], t: f64, dir: &[ParticleArray]) -> Path {
    x.iter().zip(dir).map(|(a, b)| a.add_scaled(t, b)).collect()
}

struct LineResult {
    x: Path,
    value: f64,
    grad: Path,
}

/// Line search for the strong Wolfe conditions with secant / quadratic
/// interpolation inside the bracket.
fn wolfe_search(problem: &Problem, x: &[ParticleArray], f0: f64, g0: &[ParticleArray], dir: &[ParticleArray], t_init: f64) -> Option<LineResult> {
    const C1: f64 = 1e-4;
    const C2: f64 = 0.4;
    let dphi0 = dot(g0, dir);
    if !(dphi0 < 0.0) {
        return None;
    }
    let eval = |t: f64| {
        let xt = moved(x, t, dir);
        let (f, g) = problem.action_and_gradient(&xt);
        let dphi = dot(&g, dir);
        (xt, f, g, dphi)
    };
    // Near a minimizer the decrease in f drops below round-off; then only the slope is trusted.
    let fuzz = 1e-11 * (1.0 + f0.abs());
    let (mut lo, mut f_lo, mut d_lo) = (0.0, f0, dphi0);
    let mut hi: Option<(f64, f64, f64)> = None;
    let mut t = t_init;
    let mut best: Option<LineResult> = None;
    for _ in 0..40 {
        let (xt, f, g, dphi) = eval(t);
        if f.is_finite() && f <= f0 + C1 * t * dphi0 && best.as_ref().map_or(true, |b| f < b.value) {
            best = Some(LineResult {
                x: xt.clone(),
                value: f,
                grad: g.clone(),
            });
        }
        if f.is_finite() && f <= f0 + fuzz && dphi >= C2 * dphi0 && dphi <= -0.8 * dphi0 {
            return Some(LineResult { x: xt, value: f, grad: g });
        }
        if !f.is_finite() || f > f0 + C1 * t * dphi0 || f >= f_lo && lo > 0.0 {
            hi = Some((t, f, dphi));
        } else if dphi.abs() <= C2 * dphi0.abs() {
            return Some(LineResult { x: xt, value: f, grad: g });
        } else if dphi > 0.0 {
            hi = Some((t, f, dphi));
        } else {
            lo = t;
            f_lo = f;
            d_lo = dphi;
        }
        t = match hi {
            None => 2.0 * t,
            Some((th, fh, dh)) => {
                let width = th - lo;
                let cand = if fh.is_finite() && dh > 0.0 && dh > d_lo {
                    lo - d_lo * width / (dh - d_lo)
                } else if fh.is_finite() {
                    let curv = fh - f_lo - d_lo * width;
                    if curv > 0.0 {
                        lo - d_lo * width * width / (2.0 * curv)
                    } else {
                        lo + 0.5 * width
                    }
                } else {
                    lo + 0.1 * width
                };
                cand.clamp(lo + 0.1 * width, th - 0.1 * width)
            }
        };
        if let Some((th, _, _)) = hi {
            if (th - lo) < 1e-14 * th.max(1.0) {
                break;
            }
        }
    }
    best
}

fn initial_path(init: &Init, m0: &Configuration, steps: usize, h: f64, c: &[f64]) -> Result<Path> {
    match init {
        Init::Rest => Ok(vec![m0.clone(); steps]),
        Init::Drift => {
            let v: Vec<f64> = c.iter().map(|x| -x).collect();
            let zero = ParticleArray::zeros(m0.n_particles(), m0.dim());
            Ok((1..=steps)
                .map(|k| m0.add_scaled(1.0, &zero.add_row_vector(&v).scaled(k as f64 * h)))
                .collect())
        }
        Init::Warm(traj) => {
            if traj.len() < 4 {
                return Ok(vec![m0.clone(); steps]);
            }
            traj.first().m.check_shape(m0)?;
            // The end of a truncated solution is shaped by the free endpoint, so
            // only the first half is reused and then continued at the average
            // velocity of its second quarter.
            let half = traj.len() / 2;
            let quarter = traj.len() / 4;
            let span = traj.times[half] - traj.times[quarter];
            let drift = traj.points[half].m.sub(&traj.points[quarter].m).scaled(1.0 / span);
            let t_half = traj.times[half];
            let anchor = &traj.points[half].m;
            Ok((1..=steps)
                .map(|k| match traj.points.get(k) {
                    Some(z) if k <= half => z.m.clone(),
                    _ => anchor.add_scaled(k as f64 * h - t_half, &drift),
                })
                .collect())
        }
    }
}

struct NewtonOutcome {
    x: Path,
    value: f64,
    grad: Path,
    iterations: usize,
    history: Vec<f64>,
    converged: bool,
}

fn newton(problem: &Problem, mut x: Path, tol: f64, max_iters: usize) -> NewtonOutcome {
    let (mut f, mut g) = problem.action_and_gradient(&x);
    let mut history = Vec::new();
    let mut shift = 0.0;
    for it in 0..max_iters {
        let gn = problem.grad_norm(&g);
        history.push(gn);
        if gn <= tol {
            return NewtonOutcome {
                x,
                value: f,
                grad: g,
                iterations: it,
                history,
                converged: true,
            };
        }
        let blocks = problem.hessian_blocks(&x);
        let mut step = None;
        for _ in 0..60 {
            if let Some(factors) = problem.factor(&blocks, shift) {
                let dir: Path = problem.solve(&factors, &g).into_iter().map(|z| z.scaled(-1.0)).collect();
                if let Some(s) = wolfe_search(problem, &x, f, &g, &dir, 1.0) {
                    step = Some(s);
                    break;
                }
            }
            shift = if shift == 0.0 { 1.0 } else { 4.0 * shift };
        }
        let Some(step) = step else { break };
        shift = if shift < 1e-6 { 0.0 } else { shift / 4.0 };
        x = step.x;
        f = step.value;
        g = step.grad;
    }
    let gn = problem.grad_norm(&g);
    history.push(gn);
    NewtonOutcome {
        x,
        value: f,
        grad: g,
        iterations: history.len() - 1,
        converged: gn <= tol,
        history,
    }
}

/// Whether the unshifted Hessian at `x` is positive definite.
fn is_local_min(problem: &Problem, x: &[ParticleArray]) -> bool {
    problem.factor(&problem.hessian_blocks(x), 0.0).is_some()
}

/// Looks for a direction of negative curvature at a stationary path by
/// displacing one particle coordinate with a ramp profile.
fn negative_curvature_direction(problem: &Problem, x: &[ParticleArray], f: f64) -> Option<Path> {
    let s = 1e-3;
    let ramp: Vec<f64> = (1..=problem.steps)
        .map(|k| (k as f64 * problem.h).min(1.0))
        .collect();
    let mut best: Option<(f64, Path)> = None;
    for col in 0..problem.n * problem.d {
        let dir: Path = ramp
            .iter()
            .map(|&r| {
                let mut a = ParticleArray::zeros(problem.n, problem.d);
                a.as_mut_slice()[col] = r;
                a
            })
            .collect();
        let fp = problem.action(&moved(x, s, &dir));
        let fm = problem.action(&moved(x, -s, &dir));
        let curv = (fp + fm - 2.0 * f) / (s * s);
        if curv < -1e-6 * (1.0 + f.abs()) && best.as_ref().map_or(true, |b| curv < b.0) {
            best = Some((curv, dir));
        }
    }
    best.map(|b| b.1)
}

/// Minimizes the truncated discounted action from `m0`.
pub fn minimize_discounted(model: &TonelliModel, spec: &DiscountedSpec, m0: &Configuration, init: Init) -> Result<DiscountedSolution> {
    if m0.dim() != model.dim() {
        return Err(Error::shape(model.dim(), m0.dim()));
    }
    spec.validate_for(model)?;
    let problem = Problem::new(model, spec, m0);
    let mut x = initial_path(&init, m0, spec.steps, problem.h, &problem.c)?;
    let mut total_iters = 0;
    let mut outcome;
    let mut escapes = 0;
    loop {
        outcome = newton(&problem, x, spec.tol_grad, spec.max_iters.saturating_sub(total_iters));
        total_iters += outcome.iterations;
        if !outcome.converged || escapes >= 4 || is_local_min(&problem, &outcome.x) {
            break;
        }
        match negative_curvature_direction(&problem, &outcome.x, outcome.value) {
            Some(dir) => {
                escapes += 1;
                let plus = moved(&outcome.x, 0.05, &dir);
                let minus = moved(&outcome.x, -0.05, &dir);
                x = if problem.action(&plus) <= problem.action(&minus) { plus } else { minus };
            }
            None => break,
        }
    }
    if !outcome.converged {
        return Err(Error::NonConvergence {
            iterations: total_iters,
            residual: *outcome.history.last().unwrap_or(&f64::NAN),
            history: outcome.history,
        });
    }
    Ok(build_solution(&problem, spec, outcome.x, outcome.value, &outcome.grad, total_iters))
}

/// Runs from several initial paths and keeps the converged solution with the lowest value.
pub fn minimize_best_of(model: &TonelliModel, spec: &DiscountedSpec, m0: &Configuration, inits: &[Init]) -> Result<DiscountedSolution> {
    let mut best: Option<DiscountedSolution> = None;
    let mut last_err = None;
    for init in inits {
        // with c = 0 the drift path is the rest path
        let has_rest = inits.iter().any(|i| matches!(i, Init::Rest));
        if matches!(init, Init::Drift) && has_rest && model.c().iter().all(|&x| x == 0.0) {
            continue;
        }
        match minimize_discounted(model, spec, m0, init.clone()) {
            Ok(sol) => {
                if best.as_ref().map_or(true, |b| sol.value < b.value) {
                    best = Some(sol);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| Error::invalid("no initial path given")))
}

fn build_solution(problem: &Problem, spec: &DiscountedSpec, x: Path, action: f64, grad: &[ParticleArray], iterations: usize) -> DiscountedSolution {
    let h = problem.h;
    let model = problem.model;
    let m0 = problem.m0;
    let mut times = Vec::with_capacity(spec.steps + 1);
    let mut points = Vec::with_capacity(spec.steps + 1);
    for k in 0..=spec.steps {
        let vk = problem.velocity(&x, k.min(spec.steps - 1));
        times.push(k as f64 * h);
        points.push(PhasePoint {
            m: problem.point(&x, k).clone(),
            p: vk.scaled(-1.0),
        });
    }
    let tail = spec.tail_interval(model);
    let v0 = problem.velocity(&x, 0);
    let grad_v = discrete_value_gradient(model, m0, &v0, h);
    DiscountedSolution {
        trajectory: Trajectory { times, points },
        action,
        value: action + 0.5 * (tail.0 + tail.1),
        grad_v,
        grad_norm: problem.grad_norm(grad),
        el_residual: problem.el_residual(grad),
        tail,
        iterations,
        epsilon: spec.epsilon,
    }
}

/// Exact gradient of the discrete value with respect to the start:
/// `-D_v L_c(x_0, v_0) + h D_x L_c(x_0, v_0)`. The second term is the `O(h)`
/// correction of the left-endpoint rule and vanishes as `h -> 0`.
fn discrete_value_gradient(model: &TonelliModel, m0: &Configuration, v0: &ParticleArray, h: f64) -> ParticleArray {
    let (dx, dv) = model.grad_lc(m0, v0).expect("shapes agree");
    dv.scaled(-1.0).add_scaled(h, &dx)
}

/// Gradient of `V_eps` at the starting configuration of a converged solution.
pub fn grad_v_eps(solution: &DiscountedSolution) -> ParticleArray {
    solution.grad_v.clone()
}

/// First discrete velocity of a solution.
pub fn initial_velocity(solution: &DiscountedSolution) -> ParticleArray {
    solution.trajectory.first().velocity()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub value: f64,
    pub eps_times_value: f64,
    pub grad_norm: f64,
    pub el_residual: f64,
    pub tail_lo: f64,
    pub tail_hi: f64,
}

#[derive(Debug, Clone)]
pub struct HbarEstimate {
    pub hbar: f64,
    /// Fitted slope `a` in `eps V_eps = -hbar + a eps`.
    pub slope: f64,
    pub table: Vec<SweepRow>,
    pub solutions: Vec<DiscountedSolution>,
}

/// Solves along a decreasing list of discount rates (warm-starting each from
/// the previous one) and extrapolates `eps V_eps` to `eps = 0` with a
/// least-squares line through the last three points.
pub fn estimate_hbar_discounted(model: &TonelliModel, m0: &Configuration, eps_list: &[f64], template: &SweepTemplate) -> Result<HbarEstimate> {
    if eps_list.len() < 3 {
        return Err(Error::invalid("need at least three discount rates"));
    }
    if eps_list.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::invalid("discount rates must be positive"));
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("discount rates must be strictly decreasing"));
    }
    let mut table = Vec::with_capacity(eps_list.len());
    let mut solutions: Vec<DiscountedSolution> = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let spec = template.spec_for(model, eps)?;
        let sol = match solutions.last() {
            Some(prev) => minimize_discounted(model, &spec, m0, Init::Warm(prev.trajectory.clone()))?,
            None => minimize_best_of(model, &spec, m0, &[Init::Rest, Init::Drift])?,
        };
        table.push(SweepRow {
            epsilon: eps,
            value: sol.value,
            eps_times_value: eps * sol.value,
            grad_norm: sol.grad_norm,
            el_residual: sol.el_residual,
            tail_lo: sol.tail.0,
            tail_hi: sol.tail.1,
        });
        solutions.push(sol);
    }
    let tail = &table[table.len() - 3..];
    let (intercept, slope) = linear_fit(
        &tail.iter().map(|r| r.epsilon).collect::<Vec<_>>(),
        &tail.iter().map(|r| r.eps_times_value).collect::<Vec<_>>(),
    );
    Ok(HbarEstimate {
        hbar: -intercept,
        slope,
        table,
        solutions,
    })
}

/// Ordinary least squares `y = a + b x`; returns `(a, b)`.
pub(crate) fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - b * mx, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(x: f64) -> ParticleArray {
        ParticleArray::from_rows(&[[x]]).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(DiscountedSpec::new(0.0, 10.0, 10, 1e-8, 1e-3).is_err());
        assert!(DiscountedSpec::new(-0.1, 10.0, 10, 1e-8, 1e-3).is_err());
        assert!(DiscountedSpec::new(0.1, 10.0, 0, 1e-8, 1e-3).is_err());
        let cos = TonelliModel::cosine(vec![0.0]);
        let short = DiscountedSpec::new(0.1, 5.0, 100, 1e-8, 1e-3).unwrap();
        assert!(short.validate_for(&cos).is_err());
        let long = SweepTemplate::default().spec_for(&cos, 0.1).unwrap();
        assert!(long.validate_for(&cos).is_ok());
    }

    #[test]
    fn constant_path_action_is_geometric_sum() {
        let cos = TonelliModel::cosine(vec![0.0]);
        let spec = DiscountedSpec::new(0.3, 2.0, 40, 1e-8, 10.0).unwrap();
        let m0 = one(0.25);
        let path = vec![m0.clone(); 40];
        let a = discounted_action(&cos, &spec, &path, &m0).unwrap();
        let h = spec.step();
        let rest = cos.eval_lc(&m0, &one(0.0)).unwrap();
        let expected = h * rest * (1.0 - (-0.3 * 2.0f64).exp()) / (1.0 - (-0.3 * h).exp());
        assert!((a - expected).abs() < 1e-12);

        let free = TonelliModel::free(vec![0.0]);
        assert_eq!(discounted_action(&free, &spec, &path, &m0).unwrap(), 0.0);
    }

    #[test]
    fn action_rejects_wrong_length() {
        let free = TonelliModel::free(vec![0.0]);
        let spec = DiscountedSpec::new(0.3, 2.0, 40, 1e-8, 10.0).unwrap();
        assert!(discounted_action(&free, &spec, &[one(0.0)], &one(0.0)).is_err());
    }

    #[test]
    fn free_minimizer_with_zero_c_is_rest() {
        let free = TonelliModel::free(vec![0.0]);
        let spec = DiscountedSpec::new(0.2, 20.0, 200, 1e-9, 1e-3).unwrap();
        let sol = minimize_discounted(&free, &spec, &one(0.3), Init::Rest).unwrap();
        assert_eq!(sol.value, 0.0);
        assert!(grad_v_eps(&sol).norm() < 1e-12);
    }

    #[test]
    fn free_minimizer_moves_against_c() {
        let free = TonelliModel::free(vec![1.0]);
        let spec = SweepTemplate::default().spec_for(&free, 0.2).unwrap();
        let sol = minimize_discounted(&free, &spec, &one(0.3), Init::Rest).unwrap();
        for z in &sol.trajectory.points {
            assert!((z.velocity().as_slice()[0] + 1.0).abs() < 1e-8);
        }
        let h = spec.step();
        let discrete = -0.5 * h / (1.0 - (-0.2 * h).exp()) * (1.0 - (-0.2 * spec.horizon).exp());
        assert!((sol.action - discrete).abs() < 1e-8);
        assert!(grad_v_eps(&sol).norm() < 1e-8);
    }

    #[test]
    fn sweep_needs_three_decreasing_rates() {
        let free = TonelliModel::free(vec![0.0]);
        let t = SweepTemplate::default();
        assert!(estimate_hbar_discounted(&free, &one(0.0), &[0.2, 0.1], &t).is_err());
        assert!(estimate_hbar_discounted(&free, &one(0.0), &[0.1, 0.2, 0.05], &t).is_err());
    }

    #[test]
    fn linear_fit_recovers_line() {
        let (a, b) = linear_fit(&[0.2, 0.1, 0.05], &[-0.5 + 0.2 * 0.3, -0.5 + 0.1 * 0.3, -0.5 + 0.05 * 0.3]);
        assert!((a + 0.5).abs() < 1e-14);
        assert!((b - 0.3).abs() < 1e-13);
    }
}
