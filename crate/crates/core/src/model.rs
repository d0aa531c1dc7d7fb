//! Mechanical Tonelli Lagrangians on the discretized configuration space and
//! their Legendre duals.
//!
//! ```text
//! L(M, N)   = 1/2 <N, N> - (1/N) sum_i V(x_i) - (1/N^2) sum_ij W(x_i - x_j)
//! L_c(M, N) = L(M, N) + c . mean(N)
//! H(M, P)   = sup_N { -<P, N> - L(M, N) } = 1/2 <P, P> + potential(M)
//! ```
//!
//! Sign convention: `P = -D_v L(M, N)` and `N = -D_p H(M, P)`, so for the
//! quadratic kinetic energy the velocity is `-P`. `H_c(M, P) = H(M, P + c)`.
//! All gradients are taken with respect to the empirical inner product, which
//! makes them per-particle quantities (`N` times the Euclidean partials).

use serde::{Deserialize, Serialize};

use crate::config_space::{invariant_sum, Configuration, Momentum, ParticleArray, Velocity};
use crate::error::{Error, Result};
use crate::potential::TrigPotential;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TonelliModel {
    dim: usize,
    external: TrigPotential,
    interaction: TrigPotential,
    c: Vec<f64>,
}

impl TonelliModel {
    /// Builds a model and checks that both potentials are non-positive on a
    /// fine grid, which makes `L >= 0`.
    pub fn new(external: TrigPotential, interaction: TrigPotential, c: Vec<f64>) -> Result<Self> {
        let model = Self::new_unchecked(external, interaction, c)?;
        for (name, pot) in [("V", &model.external), ("W", &model.interaction)] {
            if pot.is_zero() {
                continue;
            }
            let (_, max, at) = pot.grid_extrema(pot.default_check_resolution());
            if max > 1e-12 {
                return Err(Error::invalid(format!(
                    "potential {name} is positive ({max:.3e}) at {at:?}; L >= 0 would fail"
                )));
            }
        }
        Ok(model)
    }

    /// Builds a model without the sign check on the potentials.
    pub fn new_unchecked(external: TrigPotential, interaction: TrigPotential, c: Vec<f64>) -> Result<Self> {
        let dim = external.dim();
        if interaction.dim() != dim {
            return Err(Error::shape(format!("interaction of dimension {dim}"), interaction.dim()));
        }
        if c.len() != dim {
            return Err(Error::shape(format!("c of length {dim}"), c.len()));
        }
        if c.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("non-finite cohomology vector"));
        }
        Ok(Self {
            dim,
            external,
            interaction,
            c,
        })
    }

    /// `V = W = 0`.
    pub fn free(c: Vec<f64>) -> Self {
        let dim = c.len();
        Self::new_unchecked(TrigPotential::zero(dim), TrigPotential::zero(dim), c).expect("consistent shapes")
    }

    /// `V(x) = -sum_j (1 - cos 2 pi x_j)`, `W = 0`.
    pub fn cosine(c: Vec<f64>) -> Self {
        let dim = c.len();
        Self::new_unchecked(TrigPotential::cosine_well(dim), TrigPotential::zero(dim), c).expect("consistent shapes")
    }

    pub fn with_c(&self, c: Vec<f64>) -> Result<Self> {
        Self::new_unchecked(self.external.clone(), self.interaction.clone(), c)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn external(&self) -> &TrigPotential {
        &self.external
    }

    pub fn interaction(&self) -> &TrigPotential {
        &self.interaction
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn c_norm_sq(&self) -> f64 {
        self.c.iter().map(|x| x * x).sum()
    }

    fn check(&self, m: &Configuration) -> Result<()> {
        if m.dim() != self.dim {
            return Err(Error::shape(format!("dimension {}", self.dim), m.dim()));
        }
        Ok(())
    }

    fn check_pair(&self, m: &Configuration, v: &ParticleArray) -> Result<()> {
        self.check(m)?;
        m.check_shape(v)
    }

    /// `(1/N) sum_i V(x_i) + (1/N^2) sum_ij W(x_i - x_j)`, summed in an
    /// order-independent way so that relabeling particles is bitwise exact.
    pub fn potential_energy(&self, m: &Configuration) -> f64 {
        let n = m.n_particles();
        let nf = n as f64;
        let mut ext: Vec<f64> = m.rows().map(|x| self.external.value(x)).collect();
        let mut total = invariant_sum(&mut ext) / nf;
        if !self.interaction.is_zero() {
            let mut diff = vec![0.0; self.dim];
            let mut pair = Vec::with_capacity(n * n);
            for i in 0..n {
                for j in 0..n {
                    for (k, d) in diff.iter_mut().enumerate() {
                        *d = m.row(i)[k] - m.row(j)[k];
                    }
                    pair.push(self.interaction.value(&diff));
                }
            }
            total += invariant_sum(&mut pair) / (nf * nf);
        }
        total
    }

    /// Empirical gradient of [`Self::potential_energy`]:
    /// `grad V(x_i) + (1/N) sum_j [grad W(x_i - x_j) - grad W(x_j - x_i)]`.
    pub fn potential_gradient(&self, m: &Configuration) -> ParticleArray {
        let n = m.n_particles();
        let d = self.dim;
        let mut g = ParticleArray::zeros(n, d);
        for i in 0..n {
            self.external.add_gradient(m.row(i), 1.0, g.row_mut(i));
        }
        if !self.interaction.is_zero() {
            let inv_n = 1.0 / n as f64;
            let mut diff = vec![0.0; d];
            let mut gw = vec![0.0; d];
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    for k in 0..d {
                        diff[k] = m.row(i)[k] - m.row(j)[k];
                    }
                    gw.iter_mut().for_each(|x| *x = 0.0);
                    self.interaction.add_gradient(&diff, 1.0, &mut gw);
                    // grad W(x_i - x_j) adds to particle i, subtracts from particle j.
                    for k in 0..d {
                        g.row_mut(i)[k] += inv_n * gw[k];
                        g.row_mut(j)[k] -= inv_n * gw[k];
                    }
                }
            }
        }
        g
    }

    /// Hessian of the potential energy for the empirical inner product, as a
    /// row-major `(N d) x (N d)` matrix indexed by `i * d + a`.
    pub fn potential_hessian(&self, m: &Configuration) -> Vec<f64> {
        let n = m.n_particles();
        let d = self.dim;
        let size = n * d;
        let mut out = vec![0.0; size * size];
        for i in 0..n {
            let hv = self.external.hessian(m.row(i));
            for a in 0..d {
                for b in 0..d {
                    out[(i * d + a) * size + i * d + b] += hv[a * d + b];
                }
            }
        }
        if !self.interaction.is_zero() {
            let inv_n = 1.0 / n as f64;
            let mut diff = vec![0.0; d];
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    for k in 0..d {
                        diff[k] = m.row(i)[k] - m.row(j)[k];
                    }
                    // W(x_i - x_j) couples i and j with signs (+, -)
                    let hw = self.interaction.hessian(&diff);
                    for a in 0..d {
                        for b in 0..d {
                            let v = inv_n * hw[a * d + b];
                            out[(i * d + a) * size + i * d + b] += v;
                            out[(j * d + a) * size + j * d + b] += v;
                            out[(i * d + a) * size + j * d + b] -= v;
                            out[(j * d + a) * size + i * d + b] -= v;
                        }
                    }
                }
            }
        }
        out
    }

    fn kinetic(v: &ParticleArray) -> f64 {
        let mut terms: Vec<f64> = v.rows().map(|r| r.iter().map(|x| x * x).sum()).collect();
        0.5 * invariant_sum(&mut terms) / v.n_particles() as f64
    }

    fn c_dot_mean(&self, v: &Velocity) -> f64 {
        let nf = v.n_particles() as f64;
        let mut terms: Vec<f64> = v
            .rows()
            .map(|r| r.iter().zip(&self.c).map(|(a, b)| a * b).sum())
            .collect();
        invariant_sum(&mut terms) / nf
    }

    pub fn eval_l(&self, m: &Configuration, v: &Velocity) -> Result<f64> {
        self.check_pair(m, v)?;
        Ok(Self::kinetic(v) - self.potential_energy(m))
    }

    pub fn eval_lc(&self, m: &Configuration, v: &Velocity) -> Result<f64> {
        Ok(self.eval_l(m, v)? + self.c_dot_mean(v))
    }

    /// `(D_x L, D_v L)`; `D_v L = v`.
    pub fn grad_l(&self, m: &Configuration, v: &Velocity) -> Result<(ParticleArray, ParticleArray)> {
        self.check_pair(m, v)?;
        Ok((self.potential_gradient(m).scaled(-1.0), v.clone()))
    }

    /// `(D_x L_c, D_v L_c)`; identical to [`Self::grad_l`] except `D_v L_c = v + c`.
    pub fn grad_lc(&self, m: &Configuration, v: &Velocity) -> Result<(ParticleArray, ParticleArray)> {
        let (dx, dv) = self.grad_l(m, v)?;
        Ok((dx, dv.add_row_vector(&self.c)))
    }

    pub fn eval_h(&self, m: &Configuration, p: &Momentum) -> Result<f64> {
        self.check_pair(m, p)?;
        Ok(Self::kinetic(p) + self.potential_energy(m))
    }

    /// `H_c(M, P) = H(M, P + c)`.
    pub fn eval_hc(&self, m: &Configuration, p: &Momentum) -> Result<f64> {
        self.eval_h(m, &p.add_row_vector(&self.c))
    }

    /// `(D_x H, D_p H) = (-D_x L(M, -P), P)`.
    pub fn grad_h(&self, m: &Configuration, p: &Momentum) -> Result<(ParticleArray, ParticleArray)> {
        self.check_pair(m, p)?;
        Ok((self.potential_gradient(m), p.clone()))
    }

    /// Bound on `sup |L(., 0)|`, i.e. on the potential energy.
    pub fn potential_sup_bound(&self) -> f64 {
        self.external.sup_bound() + self.interaction.sup_bound()
    }

    /// Upper bound for `max - min` of the potential energy.
    pub fn potential_range(&self) -> f64 {
        let range = |p: &TrigPotential| {
            if p.is_zero() {
                0.0
            } else {
                let (lo, hi, _) = p.grid_extrema(p.default_check_resolution());
                (hi - lo).min(2.0 * p.sup_bound())
            }
        };
        range(&self.external) + range(&self.interaction)
    }

    /// Upper bound on `L_c(M, 0) = -potential(M)`.
    pub fn rest_cost_bound(&self) -> f64 {
        let neg_sup = |p: &TrigPotential| {
            if p.is_zero() {
                0.0
            } else {
                let (lo, _, _) = p.grid_extrema(p.default_check_resolution());
                (-lo).max(0.0)
            }
        };
        neg_sup(&self.external) + neg_sup(&self.interaction)
    }

    /// `|c|^2 / 2`: with non-positive potentials, `L_c >= -|c|^2 / 2`.
    pub fn lc_lower_shift(&self) -> f64 {
        0.5 * self.c_norm_sq()
    }

    /// Curvature bound `sum |k|^2 (2 pi)^2 (|a| + |b|)` over the modes of both potentials.
    pub fn curvature_bound(&self) -> f64 {
        self.external.curvature_bound() + self.interaction.curvature_bound()
    }
}
