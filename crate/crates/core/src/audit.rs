//! Sampling-based audit of the structural assumptions on a Tonelli model.
//!
//! Constants are derived from the Fourier coefficients; the probes only check
//! that the inequalities hold with those constants. Norms of derivatives use
//! the empirical dual norm, which for the empirical inner product coincides
//! with the empirical norm of the per-particle gradient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config_space::{IntegerShift, ParticleArray, Permutation};
use crate::model::TonelliModel;

/// Numbered as in the usual list of Tonelli hypotheses on `L`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Assumption {
    Periodicity,
    RearrangementInvariance,
    NonNegativity,
    Growth,
    DerivativeBound,
    LowerQuadratic,
    UpperQuadratic,
}

impl Assumption {
    pub fn id(self) -> &'static str {
        match self {
            Assumption::Periodicity => "i",
            Assumption::RearrangementInvariance => "ii",
            Assumption::NonNegativity => "iii",
            Assumption::Growth => "v",
            Assumption::DerivativeBound => "vi",
            Assumption::LowerQuadratic => "vii",
            Assumption::UpperQuadratic => "viii",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Violation {
    pub assumption: Assumption,
    /// Flattened positions of the probe configuration.
    pub point: Vec<f64>,
    /// Signed slack of the inequality; negative means violated.
    pub margin: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub gamma_lower: f64,
    pub k_l_upper: f64,
    pub c_upper: f64,
    pub probes: usize,
    pub violations: Vec<Violation>,
}

impl AssumptionReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violated(&self, a: Assumption) -> bool {
        self.violations.iter().any(|v| v.assumption == a)
    }
}

const DYADIC: f64 = (1u64 << 24) as f64;

fn dyadic(x: f64) -> f64 {
    (x * DYADIC).round() / DYADIC
}

fn random_array(rng: &mut ChaCha8Rng, n: usize, d: usize, radius: f64) -> ParticleArray {
    let data = (0..n * d).map(|_| dyadic(rng.gen_range(-radius..=radius))).collect();
    ParticleArray::new(n, d, data).expect("finite probe")
}

/// Probes the model at `n_probes` random `(M, N, H1, H2)` and reports the
/// certified constants together with every failed inequality.
pub fn audit_assumptions(model: &TonelliModel, n_probes: usize, radius: f64, seed: u64) -> AssumptionReport {
    let d = model.dim();
    let ext = model.external();
    let int = model.interaction();

    // Second-order expansion in the velocity is exactly 1/2 |H2|^2.
    let gamma = 0.5;
    let k_l = model.curvature_bound();
    let grad_bound = ext.gradient_bound() + 2.0 * int.gradient_bound();
    let c_const = 0.5f64.max(model.potential_sup_bound()).max(1.0 + grad_bound);
    // The kinetic part needs a coefficient of at least gamma on |H2|^2.
    let k_upper_velocity = k_l.max(gamma);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = Vec::new();
    let mut push = |a: Assumption, m: &ParticleArray, margin: f64| {
        violations.push(Violation {
            assumption: a,
            point: m.as_slice().to_vec(),
            margin,
        });
    };

    let l_of = |m: &ParticleArray, v: &ParticleArray| model.eval_l(m, v).expect("shapes agree");

    // Deterministic probe at the maximum of the potentials, where L(M, 0) is smallest.
    if !ext.is_zero() || !int.is_zero() {
        let (_, _, at) = ext.grid_extrema(ext.default_check_resolution());
        let m = ParticleArray::filled(1, &at);
        let l0 = l_of(&m, &ParticleArray::zeros(1, d));
        if l0 < 0.0 {
            push(Assumption::NonNegativity, &m, l0);
        }
    }

    for _ in 0..n_probes {
        let n = rng.gen_range(1..=6usize);
        let m = random_array(&mut rng, n, d, radius.max(1.0));
        let v = random_array(&mut rng, n, d, radius);
        let h1 = random_array(&mut rng, n, d, radius);
        let h2 = random_array(&mut rng, n, d, radius);
        let l = l_of(&m, &v);
        let tol = 1e-10 * (1.0 + l.abs());

        let shift = IntegerShift::random(&mut rng, n, d, 4);
        let l_shift = l_of(&m.shifted(&shift), &v);
        if l_shift.to_bits() != l.to_bits() {
            push(Assumption::Periodicity, &m, -(l_shift - l).abs());
        }
        let perm = Permutation::random(&mut rng, n);
        let l_perm = l_of(&m.permuted(&perm), &v.permuted(&perm));
        if l_perm.to_bits() != l.to_bits() {
            push(Assumption::RearrangementInvariance, &m, -(l_perm - l).abs());
        }

        if l < -tol {
            push(Assumption::NonNegativity, &m, l);
        }

        let l0 = l_of(&m, &ParticleArray::zeros(n, d));
        let growth = c_const * (1.0 + m.norm_sq() + v.norm_sq()) - l;
        if growth < -tol {
            push(Assumption::Growth, &m, growth);
        }
        if c_const - l0.abs() < -tol {
            push(Assumption::Growth, &m, c_const - l0.abs());
        }

        let (dx, dv) = model.grad_l(&m, &v).expect("shapes agree");
        let dl_norm = (dx.norm_sq() + dv.norm_sq()).sqrt();
        let slack = c_const + c_const * l - dl_norm;
        if slack < -tol {
            push(Assumption::DerivativeBound, &m, slack);
        }

        let l_pert = l_of(&m.add_scaled(1.0, &h1), &v.add_scaled(1.0, &h2));
        let remainder = l_pert - l - dx.inner(&h1) - dv.inner(&h2);
        let tol2 = 1e-10 * (1.0 + l.abs() + l_pert.abs());
        let lower = remainder - (gamma * h2.norm_sq() - k_l * h1.norm_sq());
        if lower < -tol2 {
            push(Assumption::LowerQuadratic, &m, lower);
        }
        let upper = k_upper_velocity * h2.norm_sq() + k_l * h1.norm_sq() - remainder;
        if upper < -tol2 {
            push(Assumption::UpperQuadratic, &m, upper);
        }
    }

    AssumptionReport {
        gamma_lower: gamma,
        k_l_upper: k_l,
        c_upper: c_const,
        probes: n_probes,
        violations,
    }
}
