//! Invariant measures as Birkhoff time averages along the Hamiltonian flow.
//!
//! Measures are finite atom lists with positive weights. They are probed only
//! through [`Observable`]s, which are invariant under relabeling of the
//! particles and integer shifts of any of them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cell::GridField;
use crate::config_space::{invariant_sum, wrap_coord};
use crate::error::{Error, Result};
use crate::flow::{flow_steps, PhasePoint, Scheme};
use crate::model::TonelliModel;

#[derive(Debug, Clone)]
pub struct EmpiricalMeasure {
    pub atoms: Vec<PhasePoint>,
    pub weights: Vec<f64>,
    /// Sample times for time averages; empty otherwise.
    pub times: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(atoms: Vec<PhasePoint>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != weights.len() {
            return Err(Error::invalid("need one positive weight per atom and at least one atom"));
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::invalid("weights must be positive"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("weights sum to {total}, not 1")));
        }
        for z in &atoms[1..] {
            atoms[0].m.check_shape(&z.m)?;
        }
        Ok(Self {
            atoms,
            weights,
            times: Vec::new(),
        })
    }

    pub fn uniform(atoms: Vec<PhasePoint>) -> Result<Self> {
        let w = 1.0 / atoms.len().max(1) as f64;
        Self::new(atoms.clone(), vec![w; atoms.len()])
    }

    pub fn dirac(z: PhasePoint) -> Self {
        Self {
            atoms: vec![z],
            weights: vec![1.0],
            times: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Time span covered by a Birkhoff measure, zero otherwise.
    pub fn span(&self) -> f64 {
        match (self.times.first(), self.times.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    /// Weighted mean of `f`, summed in atom order.
    pub fn expectation(&self, model: &TonelliModel, f: &Observable) -> f64 {
        let values: Vec<f64> = self.atoms.par_iter().map(|z| f.eval(model, z)).collect();
        if self.weights.iter().all(|w| *w == self.weights[0]) {
            return values.iter().sum::<f64>() / values.len() as f64;
        }
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Observable {
    /// `(1/N) sum_i cos(2 pi k . x_i)`.
    FourierCos { k: Vec<i64> },
    /// `(1/N) sum_i sin(2 pi k . x_i)`.
    FourierSin { k: Vec<i64> },
    /// `(1/N) sum_i v_{i,axis}^order` with `v = -p`.
    VelocityMoment { order: u32, axis: usize },
    LagrangianLc,
    EnergyH,
}

impl Observable {
    pub fn name(&self) -> String {
        let ks = |k: &[i64]| k.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(":");
        match self {
            Observable::FourierCos { k } => format!("cos[{}]", ks(k)),
            Observable::FourierSin { k } => format!("sin[{}]", ks(k)),
            Observable::VelocityMoment { order, axis } => format!("v{axis}^{order}"),
            Observable::LagrangianLc => "L_c".to_string(),
            Observable::EnergyH => "H".to_string(),
        }
    }

    pub fn eval(&self, model: &TonelliModel, z: &PhasePoint) -> f64 {
        let n = z.m.n_particles() as f64;
        match self {
            Observable::FourierCos { k } | Observable::FourierSin { k } => {
                let mut terms: Vec<f64> = z
                    .m
                    .rows()
                    .map(|x| {
                        let phase: f64 = k.iter().zip(x).map(|(&kj, &xj)| kj as f64 * wrap_coord(xj)).sum();
                        let th = std::f64::consts::TAU * wrap_coord(phase);
                        if matches!(self, Observable::FourierCos { .. }) {
                            th.cos()
                        } else {
                            th.sin()
                        }
                    })
                    .collect();
                invariant_sum(&mut terms) / n
            }
            Observable::VelocityMoment { order, axis } => {
                let mut terms: Vec<f64> = z.p.rows().map(|p| (-p[*axis]).powi(*order as i32)).collect();
                invariant_sum(&mut terms) / n
            }
            Observable::LagrangianLc => model.eval_lc(&z.m, &z.velocity()).expect("atom shapes agree"),
            Observable::EnergyH => model.eval_h(&z.m, &z.p).expect("atom shapes agree"),
        }
    }

    /// The six probes used for invariance checks in dimension `d`.
    pub fn standard_family(d: usize) -> Vec<Observable> {
        let e1: Vec<i64> = (0..d).map(|j| i64::from(j == 0)).collect();
        let e2: Vec<i64> = e1.iter().map(|x| 2 * x).collect();
        vec![
            Observable::FourierCos { k: e1.clone() },
            Observable::FourierSin { k: e1 },
            Observable::FourierCos { k: e2 },
            Observable::VelocityMoment { order: 1, axis: 0 },
            Observable::VelocityMoment { order: 2, axis: 0 },
            Observable::LagrangianLc,
        ]
    }
}

/// Uniformly weighted samples `Phi(k thin h; start)` for `k thin h <= t_total`.
pub fn birkhoff_measure(model: &TonelliModel, start: &PhasePoint, t_total: f64, h: f64, thin: usize) -> Result<EmpiricalMeasure> {
    if !(h > 0.0) || thin == 0 {
        return Err(Error::invalid("need h > 0 and thin >= 1"));
    }
    if !(t_total >= 100.0 * h) {
        return Err(Error::invalid(format!("t_total = {t_total} must be at least 100 h")));
    }
    let steps = (t_total / h).round() as usize;
    let traj = flow_steps(model, start, steps, h, Scheme::Verlet)?;
    let mut atoms = Vec::with_capacity(steps / thin + 1);
    let mut times = Vec::with_capacity(steps / thin + 1);
    for k in (0..=steps).step_by(thin) {
        atoms.push(traj.points[k].clone());
        times.push(traj.times[k]);
    }
    let w = 1.0 / atoms.len() as f64;
    let weights = vec![w; atoms.len()];
    Ok(EmpiricalMeasure { atoms, weights, times })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub t_test: f64,
    /// `(name, |E[F o Phi_t] - E[F]|)` per observable.
    pub residuals: Vec<(String, f64)>,
    pub max_residual: f64,
    /// `2 t_test osc(F) / T` for a time average over span `T`; absent otherwise.
    pub bound: Option<f64>,
}

/// Compares expectations before and after pushing every atom forward by `t_test`.
pub fn check_invariance(model: &TonelliModel, mu: &EmpiricalMeasure, t_test: f64, h: f64, observables: &[Observable]) -> Result<InvarianceReport> {
    if !(h > 0.0) || !(t_test >= 0.0) {
        return Err(Error::invalid("need h > 0 and t_test >= 0"));
    }
    let steps = (t_test / h).round() as usize;
    let pushed: Vec<PhasePoint> = mu
        .atoms
        .par_iter()
        .map(|z| flow_steps(model, z, steps, h, Scheme::Verlet).map(|t| t.last().clone()))
        .collect::<Result<_>>()?;
    let pushed_mu = EmpiricalMeasure {
        atoms: pushed,
        weights: mu.weights.clone(),
        times: Vec::new(),
    };
    let mut residuals = Vec::with_capacity(observables.len());
    let mut osc_max = 0.0f64;
    for f in observables {
        let before = mu.expectation(model, f);
        let after = pushed_mu.expectation(model, f);
        residuals.push((f.name(), (after - before).abs()));
        let values = mu.atoms.iter().chain(&pushed_mu.atoms).map(|z| f.eval(model, z));
        let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        osc_max = osc_max.max(hi - lo);
    }
    let max_residual = residuals.iter().map(|r| r.1).fold(0.0, f64::max);
    let span = mu.span();
    let bound = (span > 0.0).then(|| 2.0 * t_test * osc_max / span);
    Ok(InvarianceReport {
        t_test,
        residuals,
        max_residual,
        bound,
    })
}

/// `|E_mu[L_c] + hbar|`.
pub fn check_minimizing(model: &TonelliModel, mu: &EmpiricalMeasure, hbar: f64) -> f64 {
    (mu.expectation(model, &Observable::LagrangianLc) + hbar).abs()
}

/// Estimate of `E[L_c]` for a Birkhoff measure from a weak KAM solution:
/// `(U(x(0)) - U(x(T)) - T hbar) / T`, exact along calibrated curves.
pub fn telescoping_estimate(field: &GridField, mu: &EmpiricalMeasure) -> Result<f64> {
    let span = mu.span();
    if !(span > 0.0) {
        return Err(Error::invalid("telescoping needs a time average"));
    }
    let u0 = field.value_at(&mu.atoms[0].m)?;
    let u1 = field.value_at(&mu.atoms[mu.len() - 1].m)?;
    Ok((u0 - u1 - span * field.hbar) / span)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapReport {
    /// `E_mu[L_c] + hbar` per measure.
    pub gaps: Vec<f64>,
    pub min_gap: f64,
    /// Indices of measures with gap below `-tol`.
    pub violations: Vec<usize>,
}

/// Checks `E_mu[L_c] >= -hbar - tol` for every measure.
pub fn lower_bound_gap(model: &TonelliModel, mus: &[EmpiricalMeasure], hbar: f64, tol: f64) -> GapReport {
    let gaps: Vec<f64> = mus
        .iter()
        .map(|mu| mu.expectation(model, &Observable::LagrangianLc) + hbar)
        .collect();
    let violations = gaps
        .iter()
        .enumerate()
        .filter(|(_, g)| **g < -tol)
        .map(|(i, _)| i)
        .collect();
    GapReport {
        min_gap: gaps.iter().copied().fold(f64::INFINITY, f64::min),
        gaps,
        violations,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CesaroRow {
    pub t_total: f64,
    pub mean_lc: f64,
    /// Change from the previous row.
    pub change: f64,
}

/// Running averages of `L_c` over `t_0, 2 t_0, 4 t_0, ...` along one orbit.
pub fn cesaro_monitor(model: &TonelliModel, start: &PhasePoint, t0: f64, doublings: usize, h: f64) -> Result<Vec<CesaroRow>> {
    if !(h > 0.0) || !(t0 >= h) {
        return Err(Error::invalid("need h > 0 and t0 >= h"));
    }
    let base = (t0 / h).round() as usize;
    let total = base << doublings;
    let traj = flow_steps(model, start, total, h, Scheme::Verlet)?;
    let f = Observable::LagrangianLc;
    let mut rows: Vec<CesaroRow> = Vec::with_capacity(doublings + 1);
    let mut acc = 0.0;
    let mut done = 0;
    for j in 0..=doublings {
        let upto = base << j;
        // trapezoidal running integral
        for k in done..upto {
            acc += 0.5 * h * (f.eval(model, &traj.points[k]) + f.eval(model, &traj.points[k + 1]));
        }
        done = upto;
        let t = upto as f64 * h;
        let mean = acc / t;
        let change = rows.last().map_or(f64::NAN, |r| (mean - r.mean_lc).abs());
        rows.push(CesaroRow { t_total: t, mean_lc: mean, change });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config_space::{IntegerShift, ParticleArray, Permutation};

    fn one(x: f64) -> ParticleArray {
        ParticleArray::from_rows(&[[x]]).unwrap()
    }

    #[test]
    fn rest_point_measure() {
        let cos = TonelliModel::cosine(vec![0.0]);
        let z = PhasePoint::new(one(0.0), one(0.0)).unwrap();
        let mu = birkhoff_measure(&cos, &z, 10.0, 0.01, 10).unwrap();
        assert!(mu.atoms.iter().all(|a| *a == z));
        assert_eq!(check_minimizing(&cos, &mu, 0.0), 0.0);
        let report = check_invariance(&cos, &mu, 1.0, 0.01, &Observable::standard_family(1)).unwrap();
        assert_eq!(report.max_residual, 0.0);
    }

    #[test]
    fn free_uniform_velocity() {
        let free = TonelliModel::free(vec![1.0]);
        let z = PhasePoint::new(ParticleArray::from_rows(&[[0.2], [0.7]]).unwrap(), ParticleArray::filled(2, &[1.0])).unwrap();
        let mu = birkhoff_measure(&free, &z, 5.0, 0.05, 1).unwrap();
        assert_eq!(mu.expectation(&free, &Observable::VelocityMoment { order: 1, axis: 0 }), -1.0);
        assert!(check_minimizing(&free, &mu, 0.5) < 1e-15);
        let fam = [Observable::VelocityMoment { order: 1, axis: 0 }, Observable::VelocityMoment { order: 2, axis: 0 }];
        let report = check_invariance(&free, &mu, 1.0, 0.05, &fam).unwrap();
        assert!(report.max_residual <= 1e-10);
    }

    #[test]
    fn observables_are_rearrangement_invariant() {
        let cos = TonelliModel::cosine(vec![0.5]);
        // dyadic positions so that integer shifts are exact in floating point
        let m = ParticleArray::from_rows(&[[0.125], [0.4375], [0.8125]]).unwrap();
        let p = ParticleArray::from_rows(&[[0.3], [-0.2], [1.1]]).unwrap();
        let z = PhasePoint::new(m.clone(), p.clone()).unwrap();
        let perm = Permutation::new(vec![2, 0, 1]).unwrap();
        let shift = IntegerShift::new(3, 1, vec![1, -2, 5]).unwrap();
        let moved = PhasePoint::new(m.permuted(&perm).shifted(&shift), p.permuted(&perm)).unwrap();
        for f in Observable::standard_family(1).iter().chain(&[Observable::EnergyH, Observable::FourierSin { k: vec![3] }]) {
            assert_eq!(f.eval(&cos, &z).to_bits(), f.eval(&cos, &moved).to_bits(), "{}", f.name());
        }
    }

    #[test]
    fn gaps_of_rest_and_moving_measures() {
        let cos = TonelliModel::cosine(vec![0.0]);
        let rest = |x: f64| EmpiricalMeasure::dirac(PhasePoint::new(one(x), one(0.0)).unwrap());
        let report = lower_bound_gap(&cos, &[rest(0.25), rest(0.5)], 0.0, 1e-12);
        assert!((report.gaps[0] - 1.0).abs() < 1e-12);
        assert!((report.gaps[1] - 2.0).abs() < 1e-12);
        assert!(report.violations.is_empty());

        let free = TonelliModel::free(vec![1.0]);
        let moving = |u: f64| EmpiricalMeasure::dirac(PhasePoint::new(one(0.0), one(-u)).unwrap());
        let report = lower_bound_gap(&free, &[moving(0.5), moving(-1.0)], 0.5, 1e-12);
        assert!((report.gaps[0] - 1.125).abs() < 1e-12);
        assert!(report.gaps[1].abs() < 1e-12);
        let flagged = lower_bound_gap(&free, &[moving(-1.0)], 0.3, 1e-12);
        assert_eq!(flagged.violations, vec![0]);
    }

    #[test]
    fn weights_validated() {
        let z = PhasePoint::new(one(0.0), one(0.0)).unwrap();
        assert!(EmpiricalMeasure::new(vec![z.clone()], vec![0.5]).is_err());
        assert!(EmpiricalMeasure::new(vec![z.clone(), z.clone()], vec![1.5, -0.5]).is_err());
        assert!(EmpiricalMeasure::uniform(vec![z.clone(), z]).is_ok());
    }

    #[test]
    fn energy_constant_along_birkhoff_atoms() {
        let cos = TonelliModel::cosine(vec![0.0]);
        let z = PhasePoint::new(one(0.2), one(1.5)).unwrap();
        let mu = birkhoff_measure(&cos, &z, 20.0, 0.005, 5).unwrap();
        let e: Vec<f64> = mu.atoms.iter().map(|a| Observable::EnergyH.eval(&cos, a)).collect();
        let spread = e.iter().copied().fold(f64::NEG_INFINITY, f64::max) - e.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(spread < 1e-3);
    }
}
