//! Particle configurations on the torus and the quotient metric between them.
//!
//! A configuration is an `N x d` array of position lifts in `R^d`, measured in
//! torus periods. Every particle carries weight `1/N`, so the empirical inner
//! product `<A, B> = (1/N) sum_i A_i . B_i` plays the role of the `L^2` inner
//! product on random variables. Velocities and momenta share the same layout.

use rand::Rng;

use crate::assignment::min_cost_assignment;
use crate::error::{Error, Result};

/// `N x d` array of reals, one row per particle, with the empirical inner product.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleArray {
    data: Vec<f64>,
    n_particles: usize,
    dim: usize,
}

/// Position lifts of the particles.
pub type Configuration = ParticleArray;
/// Per-particle velocities (tangent vectors).
pub type Velocity = ParticleArray;
/// Per-particle momenta (covectors for the empirical inner product).
pub type Momentum = ParticleArray;

impl ParticleArray {
    pub fn new(n_particles: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if n_particles == 0 || dim == 0 {
            return Err(Error::invalid("configuration needs at least one particle and one dimension"));
        }
        if data.len() != n_particles * dim {
            return Err(Error::shape(n_particles * dim, data.len()));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite coordinate {bad}")));
        }
        Ok(Self {
            data,
            n_particles,
            dim,
        })
    }

    pub fn zeros(n_particles: usize, dim: usize) -> Self {
        assert!(n_particles >= 1 && dim >= 1);
        Self {
            data: vec![0.0; n_particles * dim],
            n_particles,
            dim,
        }
    }

    /// Array with every row equal to `row`.
    pub fn filled(n_particles: usize, row: &[f64]) -> Self {
        assert!(n_particles >= 1 && !row.is_empty());
        let mut data = Vec::with_capacity(n_particles * row.len());
        for _ in 0..n_particles {
            data.extend_from_slice(row);
        }
        Self {
            data,
            n_particles,
            dim: row.len(),
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(n * d);
        for r in rows {
            let r = r.as_ref();
            if r.len() != d {
                return Err(Error::shape(d, r.len()));
            }
            data.extend_from_slice(r);
        }
        Self::new(n, d, data)
    }

    /// Uniform random positions in `[0,1)^d`.
    pub fn random_uniform<R: Rng + ?Sized>(rng: &mut R, n_particles: usize, dim: usize) -> Self {
        let data = (0..n_particles * dim).map(|_| rng.gen::<f64>()).collect();
        Self {
            data,
            n_particles,
            dim,
        }
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.n_particles == other.n_particles && self.dim == other.dim
    }

    pub fn check_shape(&self, other: &Self) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::shape(
                format!("{}x{}", self.n_particles, self.dim),
                format!("{}x{}", other.n_particles, other.dim),
            ))
        }
    }

    /// Empirical inner product `(1/N) sum_i a_i . b_i`.
    pub fn inner(&self, other: &Self) -> f64 {
        debug_assert!(self.same_shape(other));
        let s: f64 = self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum();
        s / self.n_particles as f64
    }

    pub fn norm_sq(&self) -> f64 {
        self.inner(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Per-coordinate mean over particles.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for r in self.rows() {
            for (acc, x) in m.iter_mut().zip(r) {
                *acc += x;
            }
        }
        let n = self.n_particles as f64;
        m.iter_mut().for_each(|x| *x /= n);
        m
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|x| *x *= s);
        out
    }

    /// `self + s * other`
    pub fn add_scaled(&self, s: f64, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(s, other);
        out
    }

    /// In place `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &Self) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add_scaled(-1.0, other)
    }

    /// Adds the same vector to every row.
    pub fn add_row_vector(&self, v: &[f64]) -> Self {
        let mut out = self.clone();
        for r in out.data.chunks_exact_mut(self.dim) {
            for (a, b) in r.iter_mut().zip(v) {
                *a += b;
            }
        }
        out
    }

    /// Row `i` of the result is row `perm[i]` of `self`.
    pub fn permuted(&self, perm: &Permutation) -> Self {
        assert_eq!(perm.len(), self.n_particles);
        let mut data = Vec::with_capacity(self.data.len());
        for &j in perm.as_slice() {
            data.extend_from_slice(self.row(j));
        }
        Self {
            data,
            n_particles: self.n_particles,
            dim: self.dim,
        }
    }

    pub fn shifted(&self, shift: &IntegerShift) -> Self {
        assert_eq!(shift.shifts.len(), self.data.len());
        let mut out = self.clone();
        for (a, z) in out.data.iter_mut().zip(&shift.shifts) {
            *a += *z as f64;
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Per-particle integer translation, the discrete analogue of `L^2_Z`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntegerShift {
    shifts: Vec<i64>,
    n_particles: usize,
    dim: usize,
}

impl IntegerShift {
    pub fn new(n_particles: usize, dim: usize, shifts: Vec<i64>) -> Result<Self> {
        if shifts.len() != n_particles * dim {
            return Err(Error::shape(n_particles * dim, shifts.len()));
        }
        Ok(Self {
            shifts,
            n_particles,
            dim,
        })
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, n_particles: usize, dim: usize, max_abs: i64) -> Self {
        let shifts = (0..n_particles * dim)
            .map(|_| rng.gen_range(-max_abs..=max_abs))
            .collect();
        Self {
            shifts,
            n_particles,
            dim,
        }
    }

    pub fn shifts(&self) -> &[i64] {
        &self.shifts
    }
}

/// A bijection of `{0, .., N-1}`; the discrete stand-in for measure-preserving rearrangements.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; perm.len()];
        for &p in &perm {
            if p >= perm.len() || seen[p] {
                return Err(Error::invalid(format!("{perm:?} is not a permutation")));
            }
            seen[p] = true;
        }
        Ok(Self(perm))
    }

    pub fn identity(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Self {
        use rand::seq::SliceRandom;
        let mut p: Vec<usize> = (0..n).collect();
        p.shuffle(rng);
        Self(p)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

/// Canonical representative modulo integer shifts: every coordinate in `[0,1)`.
pub fn wrap(cfg: &Configuration) -> Result<Configuration> {
    if let Some(bad) = cfg.as_slice().iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite coordinate {bad}")));
    }
    let mut out = cfg.clone();
    out.as_mut_slice().iter_mut().for_each(|x| *x = wrap_coord(*x));
    Ok(out)
}

/// `x - floor(x)`, clamped so that the result is strictly below one.
#[inline]
pub fn wrap_coord(x: f64) -> f64 {
    let w = x - x.floor();
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

/// Signed offset `x - k` to the nearest integer `k`. Ties resolve to `+0.5`.
#[inline]
pub fn nearest_lift_offset(x: f64) -> f64 {
    let d = x - x.round();
    if d == -0.5 {
        0.5
    } else {
        d
    }
}

/// Squared distance on the flat torus `R^d / Z^d` between two lifts.
pub fn torus_sq_dist(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter()
        .zip(y)
        .map(|(a, b)| {
            let d = nearest_lift_offset(a - b);
            d * d
        })
        .sum()
}

/// Quotient distance modulo permutations and per-particle integer shifts.
///
/// Equal to the 2-Wasserstein distance on the torus between the two uniform
/// empirical measures; the optimal matching comes from an exact assignment solve.
pub fn dist_weak(a: &Configuration, b: &Configuration) -> Result<f64> {
    a.check_shape(b)?;
    for v in a.as_slice().iter().chain(b.as_slice()) {
        if !v.is_finite() {
            return Err(Error::invalid("non-finite coordinate"));
        }
    }
    let n = a.n_particles();
    let cost: Vec<f64> = (0..n * n)
        .map(|ij| torus_sq_dist(a.row(ij / n), b.row(ij % n)))
        .collect();
    let (total, _) = min_cost_assignment(n, &cost);
    Ok((total.max(0.0) / n as f64).sqrt())
}

pub fn is_equivalent(a: &Configuration, b: &Configuration, tol: f64) -> Result<bool> {
    Ok(dist_weak(a, b)? <= tol)
}

/// Sum that does not depend on the order of `terms`: sorts, then accumulates.
///
/// Used wherever a value must be bitwise invariant under particle relabeling.
pub(crate) fn invariant_sum(terms: &mut [f64]) -> f64 {
    terms.sort_unstable_by(f64::total_cmp);
    terms.iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(rows: &[&[f64]]) -> Configuration {
        Configuration::from_rows(rows).unwrap()
    }

    #[test]
    fn wrap_examples() {
        assert_eq!(wrap(&cfg(&[&[0.25]])).unwrap(), cfg(&[&[0.25]]));
        assert_eq!(wrap(&cfg(&[&[1.75]])).unwrap(), cfg(&[&[0.75]]));
        let w = wrap(&cfg(&[&[-0.3, 2.0]])).unwrap();
        assert!((w.row(0)[0] - 0.7).abs() < 1e-15);
        assert_eq!(w.row(0)[1], 0.0);
    }

    #[test]
    fn wrap_rejects_non_finite() {
        let bad = ParticleArray {
            data: vec![f64::NAN],
            n_particles: 1,
            dim: 1,
        };
        assert!(matches!(wrap(&bad), Err(Error::InvalidInput(_))));
        assert!(ParticleArray::new(1, 1, vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn torus_distance_examples() {
        assert_eq!(torus_sq_dist(&[0.1], &[0.1]), 0.0);
        assert!((torus_sq_dist(&[0.9], &[0.1]) - 0.04).abs() < 1e-15);
        assert!((torus_sq_dist(&[0.0, 0.5], &[0.5, 0.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ties_prefer_positive_half() {
        assert_eq!(nearest_lift_offset(0.5), 0.5);
        assert_eq!(nearest_lift_offset(-0.5), 0.5);
        assert_eq!(nearest_lift_offset(1.5), 0.5);
    }

    #[test]
    fn dist_weak_examples() {
        let a = cfg(&[&[0.0], &[0.5]]);
        assert_eq!(dist_weak(&a, &a).unwrap(), 0.0);
        let b = cfg(&[&[0.45], &[0.95]]);
        assert!((dist_weak(&a, &b).unwrap() - 0.05).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Configuration::random_uniform(&mut rng, 5, 2);
        let b = a
            .permuted(&Permutation::random(&mut rng, 5))
            .shifted(&IntegerShift::random(&mut rng, 5, 2, 3));
        assert!(dist_weak(&a, &b).unwrap() < 1e-12);
    }

    #[test]
    fn dist_weak_shape_mismatch() {
        let a = cfg(&[&[0.0], &[0.5]]);
        let b = cfg(&[&[0.0]]);
        assert!(matches!(dist_weak(&a, &b), Err(Error::ShapeMismatch { .. })));
        let c = cfg(&[&[0.0, 0.1], &[0.5, 0.2]]);
        assert!(dist_weak(&a, &c).is_err());
    }

    #[test]
    fn equivalence_examples() {
        let a = cfg(&[&[0.1, 0.7], &[0.3, 0.2]]);
        assert!(is_equivalent(&a, &a, 1e-9).unwrap());
        let shifted = a.add_row_vector(&[1.0, 1.0]);
        assert!(is_equivalent(&a, &shifted, 1e-9).unwrap());
        assert!(!is_equivalent(&cfg(&[&[0.0]]), &cfg(&[&[0.5]]), 1e-9).unwrap());
    }

    #[test]
    fn permutation_validation() {
        assert!(Permutation::new(vec![1, 0, 2]).is_ok());
        assert!(Permutation::new(vec![1, 1, 2]).is_err());
        assert!(Permutation::new(vec![0, 3]).is_err());
    }

    #[test]
    fn invariant_sum_ignores_order() {
        let mut a = vec![1e16, 1.0, -1e16, 3.5, 1e-3];
        let mut b = vec![3.5, -1e16, 1e-3, 1.0, 1e16];
        assert_eq!(invariant_sum(&mut a).to_bits(), invariant_sum(&mut b).to_bits());
    }
}
