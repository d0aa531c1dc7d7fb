//! Trigonometric-polynomial potentials on the torus.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::config_space::wrap_coord;
use crate::error::{Error, Result};

/// One Fourier mode `a cos(2 pi k.x) + b sin(2 pi k.x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub k: Vec<i64>,
    pub a: f64,
    pub b: f64,
}

/// Finite sum of Fourier modes; smooth and `Z^d`-periodic by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigPotential {
    dim: usize,
    modes: Vec<Mode>,
}

impl TrigPotential {
    pub fn new(dim: usize, modes: Vec<Mode>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("potential dimension must be positive"));
        }
        for m in &modes {
            if m.k.len() != dim {
                return Err(Error::shape(format!("wavevector of length {dim}"), m.k.len()));
            }
            if !m.a.is_finite() || !m.b.is_finite() {
                return Err(Error::invalid("non-finite mode coefficient"));
            }
        }
        Ok(Self { dim, modes })
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            modes: Vec::new(),
        }
    }

    /// `-sum_j (1 - cos 2 pi x_j)`: zero at the origin, `-2` per axis at the half-period.
    pub fn cosine_well(dim: usize) -> Self {
        let mut modes = vec![Mode {
            k: vec![0; dim],
            a: -(dim as f64),
            b: 0.0,
        }];
        for j in 0..dim {
            let mut k = vec![0; dim];
            k[j] = 1;
            modes.push(Mode { k, a: 1.0, b: 0.0 });
        }
        Self { dim, modes }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn is_zero(&self) -> bool {
        self.modes.iter().all(|m| m.a == 0.0 && m.b == 0.0)
    }

    /// Phase `k.x` reduced into `[0,1)`, computed from wrapped coordinates so
    /// that integer shifts of `x` leave it unchanged.
    #[inline]
    fn phase(k: &[i64], x: &[f64]) -> f64 {
        let s: f64 = k.iter().zip(x).map(|(&kj, &xj)| kj as f64 * wrap_coord(xj)).sum();
        wrap_coord(s)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        self.modes
            .iter()
            .map(|m| {
                let th = TAU * Self::phase(&m.k, x);
                m.a * th.cos() + m.b * th.sin()
            })
            .sum()
    }

    /// Adds `scale * grad V(x)` into `out`.
    pub fn add_gradient(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        for m in &self.modes {
            let th = TAU * Self::phase(&m.k, x);
            let coef = TAU * (-m.a * th.sin() + m.b * th.cos()) * scale;
            for (o, &kj) in out.iter_mut().zip(&m.k) {
                *o += coef * kj as f64;
            }
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        self.add_gradient(x, 1.0, &mut g);
        g
    }

    /// Row-major `d x d` Hessian.
    pub fn hessian(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut h = vec![0.0; d * d];
        for m in &self.modes {
            let th = TAU * Self::phase(&m.k, x);
            let coef = -TAU * TAU * (m.a * th.cos() + m.b * th.sin());
            for i in 0..d {
                for j in 0..d {
                    h[i * d + j] += coef * (m.k[i] * m.k[j]) as f64;
                }
            }
        }
        h
    }

    /// `sum (|a| + |b|)` over non-constant modes plus `|a|` of constant modes; bounds `sup |V|`.
    pub fn sup_bound(&self) -> f64 {
        self.modes
            .iter()
            .map(|m| {
                if m.k.iter().all(|&k| k == 0) {
                    m.a.abs()
                } else {
                    m.a.abs() + m.b.abs()
                }
            })
            .sum()
    }

    /// `sum 2 pi |k| (|a| + |b|)`; bounds `sup |grad V|`.
    pub fn gradient_bound(&self) -> f64 {
        self.modes
            .iter()
            .map(|m| TAU * k_norm_sq(&m.k).sqrt() * (m.a.abs() + m.b.abs()))
            .sum()
    }

    /// `sum |k|^2 (2 pi)^2 (|a| + |b|)`; bounds the operator norm of the Hessian.
    pub fn curvature_bound(&self) -> f64 {
        self.modes
            .iter()
            .map(|m| k_norm_sq(&m.k) * TAU * TAU * (m.a.abs() + m.b.abs()))
            .sum()
    }

    /// Minimum and maximum over a uniform grid with `per_axis` nodes per axis,
    /// together with the location of the maximum.
    pub fn grid_extrema(&self, per_axis: usize) -> (f64, f64, Vec<f64>) {
        let d = self.dim;
        let total = per_axis.pow(d as u32);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut arg = vec![0.0; d];
        let mut x = vec![0.0; d];
        for flat in 0..total {
            let mut rem = flat;
            for xj in x.iter_mut() {
                *xj = (rem % per_axis) as f64 / per_axis as f64;
                rem /= per_axis;
            }
            let v = self.value(&x);
            lo = lo.min(v);
            if v > hi {
                hi = v;
                arg.copy_from_slice(&x);
            }
        }
        (lo, hi, arg)
    }

    /// Default grid resolution for sup/inf checks in dimension `d`.
    pub fn default_check_resolution(&self) -> usize {
        match self.dim {
            1 => 4096,
            2 => 256,
            3 => 48,
            _ => 12,
        }
    }

    /// Maximum of a one-dimensional potential: dense grid, then golden-section refinement.
    pub fn max_1d(&self) -> Result<(f64, f64)> {
        if self.dim != 1 {
            return Err(Error::UnsupportedModel(format!(
                "one-dimensional maximum requested for d = {}",
                self.dim
            )));
        }
        let n = 8192;
        let (_, _, arg) = self.grid_extrema(n);
        let f = |x: f64| -self.value(&[x]);
        let (mut a, mut b) = (arg[0] - 1.0 / n as f64, arg[0] + 1.0 / n as f64);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = b - g * (b - a);
        let mut e = a + g * (b - a);
        for _ in 0..80 {
            if f(c) < f(e) {
                b = e;
            } else {
                a = c;
            }
            c = b - g * (b - a);
            e = a + g * (b - a);
        }
        let xm = 0.5 * (a + b);
        let best = [xm, arg[0]]
            .into_iter()
            .map(|x| (x, self.value(&[x])))
            .fold((arg[0], f64::NEG_INFINITY), |acc, p| if p.1 > acc.1 { p } else { acc });
        Ok((best.1, wrap_coord(best.0)))
    }
}

fn k_norm_sq(k: &[i64]) -> f64 {
    k.iter().map(|&x| (x * x) as f64).sum()
}
