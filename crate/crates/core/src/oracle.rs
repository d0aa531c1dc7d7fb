//! Quadrature oracle for the effective Hamiltonian of one particle on the circle.
//!
//! For `H = p^2/2 + V(x)` the cell problem is solved by
//! `u' + c = ±sqrt(2 (Hbar - V))`. With `V_max = max V`,
//!
//! ```text
//! c* = int_0^1 sqrt(2 (V_max - V)) dx,
//! Hbar(c) = V_max                                  if |c| <= c*,
//! int_0^1 sqrt(2 (Hbar - V)) dx = |c|              otherwise.
//! ```

use crate::error::{Error, Result};
use crate::potential::TrigPotential;

const QUAD_TOL: f64 = 1e-14;

fn simpson(f: &impl Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
}

#[allow(clippy::too_many_arguments)]
fn adaptive(f: &impl Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64, whole: f64, m: f64, fm: f64, tol: f64, depth: u32) -> f64 {
    let (lm, flm, left) = simpson(f, a, fa, m, fm);
    let (rm, frm, right) = simpson(f, m, fm, b, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adaptive(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1) + adaptive(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    // Start from eight panels so that narrow features are not skipped.
    let panels = 8;
    let w = (b - a) / panels as f64;
    (0..panels)
        .map(|i| {
            let lo = a + i as f64 * w;
            let hi = lo + w;
            let (flo, fhi) = (f(lo), f(hi));
            let (m, fm, whole) = simpson(&f, lo, flo, hi, fhi);
            adaptive(&f, lo, flo, hi, fhi, whole, m, fm, tol / panels as f64, 50)
        })
        .sum()
}

fn check(v: &TrigPotential) -> Result<(f64, f64)> {
    if v.dim() != 1 {
        return Err(Error::UnsupportedModel(format!("quadrature oracle needs d = 1, got d = {}", v.dim())));
    }
    let (vmax, argmax) = v.max_1d()?;
    if vmax > 1e-12 {
        return Err(Error::UnsupportedModel(format!("potential is positive somewhere (max {vmax:.3e})")));
    }
    Ok((vmax, argmax))
}

/// `int_0^1 sqrt(2 (e - V)) dx` for `e >= max V`, with the period starting at the argmax so
/// that the kink of the integrand at `e = max V` sits on the endpoints.
fn action(v: &TrigPotential, e: f64, argmax: f64) -> f64 {
    integrate(|x| (2.0 * (e - v.value(&[x]))).max(0.0).sqrt(), argmax, argmax + 1.0, QUAD_TOL)
}

/// Critical slope `c*` below which `Hbar(c) = max V`.
pub fn critical_c(v: &TrigPotential) -> Result<f64> {
    let (vmax, argmax) = check(v)?;
    Ok(action(v, vmax, argmax))
}

/// Effective Hamiltonian of `p^2/2 + V(x)` on the circle, by quadrature and bisection.
pub fn oracle_hbar_1d(v: &TrigPotential, c: f64) -> Result<f64> {
    if !c.is_finite() {
        return Err(Error::invalid("c must be finite"));
    }
    let (vmax, argmax) = check(v)?;
    let target = c.abs();
    if v.modes().iter().all(|m| m.k.iter().all(|&k| k == 0) || (m.a == 0.0 && m.b == 0.0)) {
        // constant potential: the action is exactly sqrt(2 (e - V))
        return Ok(vmax + 0.5 * target * target);
    }
    if target <= action(v, vmax, argmax) {
        return Ok(vmax);
    }
    // the action is at least sqrt(2 (e - vmax)), so this bracket contains the root
    let (mut lo, mut hi) = (vmax, vmax + 0.5 * target * target);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if action(v, mid, argmax) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * (1.0 + hi.abs()) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::Mode;

    #[test]
    fn free_case_is_half_c_squared() {
        let v = TrigPotential::zero(1);
        for c in [0.0, 0.5, 1.0, 3.0] {
            assert!((oracle_hbar_1d(&v, c).unwrap() - 0.5 * c * c).abs() < 1e-12);
        }
    }

    #[test]
    fn cosine_critical_slope() {
        let v = TrigPotential::cosine_well(1);
        assert!((critical_c(&v).unwrap() - 4.0 / std::f64::consts::PI).abs() < 1e-12);
        assert_eq!(oracle_hbar_1d(&v, 0.0).unwrap(), 0.0);
        assert_eq!(oracle_hbar_1d(&v, -1.2).unwrap(), 0.0);
    }

    #[test]
    fn cosine_reference_values() {
        let v = TrigPotential::cosine_well(1);
        for (c, expected) in [(1.5, 0.2446376406284062), (2.0, 1.0637954228622045), (2.5, 2.1653276232839115), (3.0, 3.5278861549842121)] {
            let got = oracle_hbar_1d(&v, c).unwrap();
            assert!((got - expected).abs() < 1e-10, "c = {c}: {got}");
        }
    }

    #[test]
    fn rejects_unsupported() {
        assert!(oracle_hbar_1d(&TrigPotential::zero(2), 1.0).is_err());
        let pos = TrigPotential::new(1, vec![Mode { k: vec![1], a: 0.5, b: 0.0 }]).unwrap();
        assert!(matches!(oracle_hbar_1d(&pos, 1.0), Err(Error::UnsupportedModel(_))));
    }

    #[test]
    fn monotone_and_convex_in_c() {
        let v = TrigPotential::cosine_well(1);
        let cs: Vec<f64> = (0..=30).map(|i| i as f64 * 0.1).collect();
        let hs: Vec<f64> = cs.iter().map(|&c| oracle_hbar_1d(&v, c).unwrap()).collect();
        for w in hs.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
        for w in hs.windows(3) {
            assert!(w[0] + w[2] - 2.0 * w[1] >= -1e-9);
        }
    }
}
