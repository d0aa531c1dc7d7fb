//! Weak KAM solutions as fixed points of a semi-Lagrangian Lax-Oleinik map.
//!
//! One step of the map on a periodic grid is
//!
//! ```text
//! (T_h U)(x) = min_v [ h (|v|^2/2 + c.v) - h/2 (P(x) + P(x + h v)) + U(x + h v) ]
//! ```
//!
//! where `P` is the potential energy, so the running cost is `h L_c` with the
//! potential averaged over the two endpoints. `U - h P / 2` is interpolated
//! multilinearly. The trapezoidal cost is the generating function of the
//! Stormer-Verlet map, so `grad U + c` is exactly the Verlet momentum along
//! discrete minimizers; the left-endpoint cost would bias it by `h grad P`. Iterating `U <- T_h U - min T_h U`
//! converges to a field with `T_h U = U - h Hbar`.
//!
//! Reduced state spaces: one particle on `T^d` (`d <= 2`), or up to three
//! particles on `T^1`. Grid axes are the flattened particle coordinates, so a
//! configuration maps to a grid point without sorting. For several particles
//! the field is kept symmetric under relabeling: values are computed at nodes
//! with non-decreasing indices and copied to their permutations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config_space::{wrap_coord, Configuration, Momentum, ParticleArray};
use crate::discounted::{estimate_hbar_discounted, SweepTemplate};
use crate::error::{Error, Result};
use crate::model::TonelliModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_particles: usize,
    pub dim: usize,
    /// Nodes per axis.
    pub nodes: usize,
}

impl GridSpec {
    pub fn new(n_particles: usize, dim: usize, nodes: usize) -> Result<Self> {
        let reduced = (n_particles == 1 && (1..=2).contains(&dim)) || ((1..=3).contains(&n_particles) && dim == 1);
        if !reduced {
            return Err(Error::UnsupportedModel(format!(
                "grid solver handles N = 1 with d <= 2 or N <= 3 with d = 1; got N = {n_particles}, d = {dim}"
            )));
        }
        if nodes < 4 {
            return Err(Error::invalid("grid needs at least four nodes per axis"));
        }
        Ok(Self { n_particles, dim, nodes })
    }

    pub fn axes(&self) -> usize {
        self.n_particles * self.dim
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub spec: GridSpec,
    pub spacing: f64,
    /// Row-major over the axes, last axis fastest.
    pub values: Vec<f64>,
    pub hbar: f64,
}

impl GridField {
    pub fn zeros(spec: GridSpec) -> Self {
        Self::from_fn(spec, |_| 0.0)
    }

    pub fn from_fn(spec: GridSpec, f: impl Fn(&[f64]) -> f64) -> Self {
        let len = spec.nodes.pow(spec.axes() as u32);
        let spacing = 1.0 / spec.nodes as f64;
        let mut field = Self {
            spec,
            spacing,
            values: vec![0.0; len],
            hbar: 0.0,
        };
        for flat in 0..len {
            let x = field.node_coords(flat);
            field.values[flat] = f(&x);
        }
        field
    }

    pub fn axes(&self) -> usize {
        self.spec.axes()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let n = self.spec.nodes;
        let mut idx = vec![0; self.axes()];
        for a in (0..self.axes()).rev() {
            idx[a] = flat % n;
            flat /= n;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        let n = self.spec.nodes;
        idx.iter().fold(0, |acc, &i| acc * n + (i % n))
    }

    pub fn node_coords(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .into_iter()
            .map(|i| i as f64 * self.spacing)
            .collect()
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Multilinear periodic interpolation at a point given by its lifts.
    pub fn interpolate(&self, y: &[f64]) -> f64 {
        debug_assert_eq!(y.len(), self.axes());
        let n = self.spec.nodes;
        let axes = self.axes();
        let mut base = [0usize; 3];
        let mut theta = [0.0f64; 3];
        for a in 0..axes {
            let s = wrap_coord(y[a]) * n as f64;
            let i = s.floor();
            theta[a] = s - i;
            base[a] = (i as usize) % n;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << axes) {
            let mut w = 1.0;
            let mut flat = 0;
            for a in 0..axes {
                let up = (corner >> (axes - 1 - a)) & 1 == 1;
                let (i, wa) = if up {
                    ((base[a] + 1) % n, theta[a])
                } else {
                    (base[a], 1.0 - theta[a])
                };
                w *= wa;
                flat = flat * n + i;
            }
            acc += w * self.values[flat];
        }
        acc
    }

    /// Flattened positions of a configuration as a grid point.
    pub fn reduce(&self, m: &Configuration) -> Result<Vec<f64>> {
        if m.n_particles() != self.spec.n_particles || m.dim() != self.spec.dim {
            return Err(Error::shape(
                format!("{}x{}", self.spec.n_particles, self.spec.dim),
                format!("{}x{}", m.n_particles(), m.dim()),
            ));
        }
        Ok(m.as_slice().to_vec())
    }

    pub fn value_at(&self, m: &Configuration) -> Result<f64> {
        Ok(self.interpolate(&self.reduce(m)?))
    }

    /// Index tuple with non-decreasing entries, used for several particles on the circle.
    fn is_canonical(&self, idx: &[usize]) -> bool {
        self.spec.n_particles == 1 || idx.windows(2).all(|w| w[0] <= w[1])
    }

    fn canonical_source(&self, flat: usize) -> usize {
        if self.spec.n_particles == 1 {
            return flat;
        }
        let mut idx = self.multi_index(flat);
        idx.sort_unstable();
        self.flat_index(&idx)
    }

    /// `|D+ U - D- U|` per node and axis, and the kink threshold `10 dx max(1, median curvature)`.
    fn jumps(&self) -> (Vec<f64>, f64) {
        let n = self.spec.nodes;
        let axes = self.axes();
        let dx = self.spacing;
        let mut jumps = vec![0.0; self.len() * axes];
        for flat in 0..self.len() {
            let idx = self.multi_index(flat);
            for a in 0..axes {
                let mut up = idx.clone();
                up[a] = (idx[a] + 1) % n;
                let mut down = idx.clone();
                down[a] = (idx[a] + n - 1) % n;
                let u0 = self.values[flat];
                let j = (self.values[self.flat_index(&up)] - 2.0 * u0 + self.values[self.flat_index(&down)]).abs() / dx;
                jumps[flat * axes + a] = j;
            }
        }
        let mut curv: Vec<f64> = jumps.iter().map(|j| j / dx).collect();
        curv.sort_unstable_by(f64::total_cmp);
        let median = curv[curv.len() / 2];
        (jumps, 10.0 * dx * median.max(1.0))
    }

    /// Nodes where one-sided differences disagree by more than ten grid tolerances along some axis.
    pub fn kink_mask(&self) -> Vec<bool> {
        let axes = self.axes();
        let (jumps, threshold) = self.jumps();
        (0..self.len())
            .map(|flat| (0..axes).any(|a| jumps[flat * axes + a] > threshold))
            .collect()
    }

    /// Whether any node within one cell of `y` is a kink.
    pub fn near_kink(&self, y: &[f64], mask: &[bool]) -> bool {
        let n = self.spec.nodes;
        let axes = self.axes();
        let base: Vec<usize> = y
            .iter()
            .map(|&c| ((wrap_coord(c) * n as f64).floor() as usize) % n)
            .collect();
        let span = 4usize.pow(axes as u32);
        (0..span).any(|combo| {
            let mut c = combo;
            let idx: Vec<usize> = base
                .iter()
                .map(|&b| {
                    let off = c % 4;
                    c /= 4;
                    (b + n + off - 1) % n
                })
                .collect();
            mask[self.flat_index(&idx)]
        })
    }
}

/// Velocity candidates for the minimization inside one Lax-Oleinik step:
/// every vector whose coordinates are multiples of `spacing` with absolute
/// value at most `radius`. A fixed candidate set keeps `T_h` monotone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocitySampling {
    pub radius: f64,
    pub spacing: f64,
}

impl VelocitySampling {
    /// Coercivity radius `|c| + sqrt(2 range / gamma)` (with `gamma = 1/2`),
    /// enlarged by a quarter plus one half so the minimizer stays interior.
    /// The spacing resolves a quarter of a grid cell per step in one
    /// dimension, coarser in higher dimensions to bound the sample count.
    pub fn for_model(model: &TonelliModel, spec: &GridSpec, h: f64) -> Self {
        let gamma = 0.5;
        let core = model.c_norm_sq().sqrt() + (2.0 * model.potential_range() / gamma).sqrt();
        let radius = 1.25 * core + 0.5;
        let cell = 1.0 / (spec.nodes as f64 * h);
        let (refine, cap) = match spec.axes() {
            1 => (4.0, 200.0),
            2 => (2.0, 40.0),
            _ => (1.0, 12.0),
        };
        let spacing = (cell / refine).max(radius / cap);
        Self { radius, spacing }
    }

    fn half_count(&self) -> usize {
        (self.radius / self.spacing).ceil() as usize
    }

    /// Samples per axis.
    pub fn per_axis(&self) -> usize {
        2 * self.half_count() + 1
    }

    fn sample(&self, i: usize) -> f64 {
        (i as f64 - self.half_count() as f64) * self.spacing
    }
}

struct NodeProblem<'a> {
    field: &'a GridField,
    x: Vec<f64>,
    h: f64,
    rest_cost: f64,
    c: &'a [f64],
    n_particles: usize,
    dim: usize,
}

impl NodeProblem<'_> {
    /// `self.field` holds `U - h P / 2`; `rest_cost` is `-P(x)`.
    fn cost(&self, v: &[f64]) -> f64 {
        let nf = self.n_particles as f64;
        let kinetic: f64 = v.iter().map(|a| a * a).sum::<f64>() * 0.5 / nf;
        let mut drift = 0.0;
        for i in 0..self.n_particles {
            for j in 0..self.dim {
                drift += self.c[j] * v[i * self.dim + j];
            }
        }
        let mut y = [0.0; 3];
        for (a, ya) in y.iter_mut().enumerate().take(v.len()) {
            *ya = self.x[a] + self.h * v[a];
        }
        self.h * (kinetic + drift / nf) + 0.5 * self.h * self.rest_cost + self.field.interpolate(&y[..v.len()])
    }
}

/// Outcome of the minimization at one node.
struct NodeMin {
    value: f64,
    on_boundary: bool,
}

fn minimize_node(p: &NodeProblem, s: &VelocitySampling) -> NodeMin {
    let axes = p.x.len();
    let per_axis = s.per_axis();
    let total = per_axis.pow(axes as u32);
    let mut v = vec![0.0; axes];
    let mut best = f64::INFINITY;
    let mut best_idx = vec![0usize; axes];
    let mut idx = vec![0usize; axes];
    for flat in 0..total {
        let mut rem = flat;
        for a in (0..axes).rev() {
            idx[a] = rem % per_axis;
            rem /= per_axis;
            v[a] = s.sample(idx[a]);
        }
        let f = p.cost(&v);
        if f < best {
            best = f;
            best_idx.copy_from_slice(&idx);
        }
    }
    NodeMin {
        value: best,
        on_boundary: best_idx.iter().any(|&i| i == 0 || i == per_axis - 1),
    }
}

fn rest_costs(model: &TonelliModel, field: &GridField) -> Vec<f64> {
    let spec = field.spec;
    (0..field.len())
        .into_par_iter()
        .map(|flat| {
            let x = field.node_coords(flat);
            let m = ParticleArray::new(spec.n_particles, spec.dim, x).expect("finite node");
            // L_c(x, 0) = -potential
            -model.potential_energy(&m)
        })
        .collect()
}

fn check_model(model: &TonelliModel, field: &GridField) -> Result<()> {
    if model.dim() != field.spec.dim {
        return Err(Error::shape(field.spec.dim, model.dim()));
    }
    Ok(())
}

/// One application of `T_h`; `hbar` of the result is copied from the input.
pub fn lax_oleinik_step(model: &TonelliModel, field: &GridField, h: f64, sampling: &VelocitySampling) -> Result<GridField> {
    check_model(model, field)?;
    let rest = rest_costs(model, field);
    step_with_costs(model, field, h, sampling, &rest)
}

fn step_with_costs(model: &TonelliModel, field: &GridField, h: f64, sampling: &VelocitySampling, rest: &[f64]) -> Result<GridField> {
    if !(h > 0.0) {
        return Err(Error::invalid(format!("time step {h} must be positive")));
    }
    if !(sampling.radius > 0.0) || !(sampling.spacing > 0.0) || sampling.spacing > sampling.radius {
        return Err(Error::invalid("velocity sampling needs 0 < spacing <= radius"));
    }
    let spec = field.spec;
    let canonical: Vec<usize> = (0..field.len())
        .filter(|&flat| field.is_canonical(&field.multi_index(flat)))
        .collect();
    let mut shifted = field.clone();
    for (g, r) in shifted.values.iter_mut().zip(rest) {
        *g += 0.5 * h * r;
    }
    let shifted = &shifted;
    let results: Vec<(usize, NodeMin)> = canonical
        .par_iter()
        .map(|&flat| {
            let p = NodeProblem {
                field: shifted,
                x: field.node_coords(flat),
                h,
                rest_cost: rest[flat],
                c: model.c(),
                n_particles: spec.n_particles,
                dim: spec.dim,
            };
            (flat, minimize_node(&p, sampling))
        })
        .collect();
    let mut out = field.clone();
    for (flat, r) in &results {
        if r.on_boundary {
            return Err(Error::Resolution {
                node: field.multi_index(*flat),
                radius: sampling.radius,
            });
        }
        out.values[*flat] = r.value;
    }
    if spec.n_particles > 1 {
        for flat in 0..out.len() {
            let src = out.canonical_source(flat);
            if src != flat {
                out.values[flat] = out.values[src];
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    pub h: f64,
    pub tol: f64,
    pub max_iters: usize,
    /// Weight `theta` of the averaged map `(1 - theta) U + theta T_h U`.
    /// Averaging leaves fixed points unchanged and removes the cycling seen
    /// with `theta = 1` when the minimizing orbits rotate.
    pub relaxation: f64,
}

impl CellParams {
    pub fn new(h: f64, tol: f64, max_iters: usize) -> Self {
        Self {
            h,
            tol,
            max_iters,
            relaxation: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CellSolution {
    pub field: GridField,
    pub iterations: usize,
    /// `sup |U - T_h U - h Hbar|` at the returned field.
    pub residual: f64,
    /// Sup-norm change per iteration.
    pub history: Vec<f64>,
    pub sampling: VelocitySampling,
}

/// Relative value iteration from `U = 0` until the sup-norm change is at most `tol * h`.
pub fn solve_cell(model: &TonelliModel, grid: GridSpec, params: CellParams) -> Result<GridField> {
    Ok(solve_cell_detailed(model, grid, params, None)?.field)
}

pub fn solve_cell_detailed(model: &TonelliModel, grid: GridSpec, params: CellParams, sampling: Option<VelocitySampling>) -> Result<CellSolution> {
    let CellParams { h, tol, max_iters, relaxation: theta } = params;
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::invalid(format!("relaxation {theta} must lie in (0, 1]")));
    }
    let mut field = GridField::zeros(grid);
    check_model(model, &field)?;
    let sampling = sampling.unwrap_or_else(|| VelocitySampling::for_model(model, &grid, h));
    let rest = rest_costs(model, &field);
    let mut history = Vec::new();
    for it in 0..max_iters {
        let mut next = step_with_costs(model, &field, h, &sampling, &rest)?;
        if theta < 1.0 {
            for (t, u) in next.values.iter_mut().zip(&field.values) {
                *t = (1.0 - theta) * u + theta * *t;
            }
        }
        let m = next.min_value();
        next.values.iter_mut().for_each(|u| *u -= m);
        // + 0.0 turns -0 into 0
        next.hbar = -m / (theta * h) + 0.0;
        let change = next
            .values
            .iter()
            .zip(&field.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        history.push(change);
        field = next;
        if change <= tol * h {
            let after = step_with_costs(model, &field, h, &sampling, &rest)?;
            let residual = field
                .values
                .iter()
                .zip(&after.values)
                .map(|(u, t)| (u - t - h * field.hbar).abs())
                .fold(0.0, f64::max);
            return Ok(CellSolution {
                field,
                iterations: it + 1,
                residual,
                history,
                sampling,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iters,
        residual: *history.last().unwrap_or(&f64::NAN),
        history,
    })
}

/// Euclidean partial derivatives of the interpolated field by centered
/// differences with a one-cell step.
pub fn grad_u(field: &GridField, y: &[f64]) -> Result<Vec<f64>> {
    let mask = field.kink_mask();
    grad_u_with_mask(field, y, &mask)
}

pub(crate) fn grad_u_with_mask(field: &GridField, y: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    if y.len() != field.axes() {
        return Err(Error::shape(field.axes(), y.len()));
    }
    if field.near_kink(y, mask) {
        return Err(Error::NonDifferentiable { point: y.to_vec() });
    }
    Ok(centered_gradient(field, y))
}

pub(crate) fn centered_gradient(field: &GridField, y: &[f64]) -> Vec<f64> {
    let dx = field.spacing;
    (0..y.len())
        .map(|a| {
            let mut up = y.to_vec();
            let mut down = y.to_vec();
            up[a] += dx;
            down[a] -= dx;
            (field.interpolate(&up) - field.interpolate(&down)) / (2.0 * dx)
        })
        .collect()
}

/// Gradient of `U` at a configuration for the empirical inner product (`N` times the partials).
pub fn grad_u_config(field: &GridField, m: &Configuration, mask: &[bool]) -> Result<Momentum> {
    let y = field.reduce(m)?;
    let g = grad_u_with_mask(field, &y, mask)?;
    let n = m.n_particles() as f64;
    ParticleArray::new(m.n_particles(), m.dim(), g.into_iter().map(|x| x * n).collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossCheckReport {
    pub hbar_cell: f64,
    pub hbar_discounted: f64,
    pub difference: f64,
    pub tolerance: f64,
    pub flagged: bool,
}

/// Compares `Hbar` from the Lax-Oleinik fixed point with the vanishing-discount extrapolation at `m_probe`.
pub fn cross_check_hbar(
    model: &TonelliModel,
    grid: GridSpec,
    params: CellParams,
    eps_list: &[f64],
    m_probe: &Configuration,
    template: &SweepTemplate,
    tolerance: f64,
) -> Result<CrossCheckReport> {
    let field = solve_cell(model, grid, params)?;
    let est = estimate_hbar_discounted(model, m_probe, eps_list, template)?;
    let difference = (field.hbar - est.hbar).abs();
    Ok(CrossCheckReport {
        hbar_cell: field.hbar,
        hbar_discounted: est.hbar,
        difference,
        tolerance,
        flagged: difference > tolerance,
    })
}
