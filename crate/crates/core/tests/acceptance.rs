//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use weakkam::assignment::min_cost_assignment;
use weakkam::audit::{audit_assumptions, Assumption};
use weakkam::calibration::{approximate_omega, characteristic, random_differentiable_seeds};
use weakkam::cell::{lax_oleinik_step, solve_cell, CellParams, GridField, GridSpec, VelocitySampling};
use weakkam::config_space::torus_sq_dist;
use weakkam::discounted::{discounted_action, discounted_action_gradient, estimate_hbar_discounted, DiscountedSpec, SweepTemplate};
use weakkam::flow::{energy_drift, integrate_hamiltonian};
use weakkam::measures::{birkhoff_measure, check_invariance, check_minimizing, lower_bound_gap, EmpiricalMeasure, Observable};
use weakkam::oracle::{critical_c, oracle_hbar_1d};
use weakkam::*;

const EPS_LIST: [f64; 3] = [0.2, 0.1, 0.05];

fn cell_field(model: &TonelliModel, nodes: usize) -> GridField {
    solve_cell(model, GridSpec::new(1, model.dim(), nodes).unwrap(), CellParams::new(0.02, 1e-9, 100_000)).unwrap()
}

fn discounted_hbar(model: &TonelliModel, m0: &Configuration) -> f64 {
    estimate_hbar_discounted(model, m0, &EPS_LIST, &SweepTemplate::default()).unwrap().hbar
}

fn free_system(rng: &mut ChaCha8Rng) -> (bool, String) {
    let mut ok = true;
    let mut notes = Vec::new();
    for c in [0.0, 0.5, 1.0] {
        let model = TonelliModel::free(vec![c]);
        let exact = 0.5 * c * c;
        let cell = cell_field(&model, 400).hbar;
        let m0 = ParticleArray::random_uniform(rng, 4, 1);
        let disc = discounted_hbar(&model, &m0);
        ok &= (cell - exact).abs() <= 1e-3 && (disc - exact).abs() <= 2e-3;
        notes.push(format!("c={c}: cell {:.1e}, discounted {:.1e}", cell - exact, disc - exact));
    }
    (ok, notes.join("; "))
}

fn cosine_hbar() -> (bool, String) {
    let h0 = cell_field(&TonelliModel::cosine(vec![0.0]), 400).hbar;
    let c_star = critical_c(&TrigPotential::cosine_well(1)).unwrap();
    let h2 = cell_field(&TonelliModel::cosine(vec![2.0]), 400).hbar;
    let oracle2 = oracle_hbar_1d(&TrigPotential::cosine_well(1), 2.0).unwrap();
    let ok = h0.abs() <= 1e-3 && (c_star - 4.0 / PI).abs() <= 1e-6 && (h2 - oracle2).abs() <= 1e-2;
    (
        ok,
        format!("Hbar(0) = {h0:.2e}, c* - 4/pi = {:.1e}, Hbar(2) = {h2:.6} vs oracle {oracle2:.6}", c_star - 4.0 / PI),
    )
}

fn decoupling(rng: &mut ChaCha8Rng) -> (bool, String) {
    let model = TonelliModel::cosine(vec![0.0]);
    let many = discounted_hbar(&model, &ParticleArray::random_uniform(rng, 8, 1));
    let one = discounted_hbar(&model, &ParticleArray::random_uniform(rng, 1, 1));
    ((many - one).abs() <= 1e-2, format!("N=8 {many:.2e}, N=1 {one:.2e}"))
}

fn random_model(rng: &mut ChaCha8Rng, d: usize) -> TonelliModel {
    // each mode a cos + b sin is shifted down by |a| + |b| so that V, W <= 0
    let pot = |rng: &mut ChaCha8Rng| {
        let mut modes = Vec::new();
        let mut floor = 0.0;
        for _ in 0..3 {
            let k: Vec<i64> = (0..d).map(|_| rng.gen_range(-2..=2)).collect();
            let (a, b) = (rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
            floor += f64::abs(a) + f64::abs(b);
            modes.push(Mode { k, a, b });
        }
        modes.push(Mode { k: vec![0; d], a: -floor, b: 0.0 });
        TrigPotential::new(d, modes).unwrap()
    };
    let v = pot(rng);
    let w = pot(rng);
    let c = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    TonelliModel::new(v, w, c).unwrap()
}

fn integrator_order(rng: &mut ChaCha8Rng) -> (bool, String) {
    let mut ratios = Vec::new();
    for _ in 0..5 {
        let d = rng.gen_range(1..=2);
        let n = rng.gen_range(1..=4);
        let model = random_model(rng, d);
        let m = ParticleArray::random_uniform(rng, n, d);
        let p = ParticleArray::random_uniform(rng, n, d).add_row_vector(&vec![-0.5; d]);
        let z = PhasePoint::new(m, p).unwrap();
        let coarse = integrate_hamiltonian(&model, &z, 2.0, 0.005, Scheme::Verlet).unwrap();
        let fine = integrate_hamiltonian(&model, &z, 2.0, 0.0025, Scheme::Verlet).unwrap();
        // compare at the coarse sample times so both maxima see the same phases
        let e_fine = fine.energies(&model);
        let fine_drift = e_fine.iter().step_by(2).map(|e| (e - e_fine[0]).abs()).fold(0.0, f64::max);
        ratios.push(energy_drift(&model, &coarse).1 / fine_drift);
    }
    let ok = ratios.iter().all(|r| (3.0..=5.0).contains(r));
    (ok, format!("ratios {}", ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>().join(", ")))
}

fn action_gradient(rng: &mut ChaCha8Rng) -> (bool, String) {
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let d = rng.gen_range(1..=2);
        let n = rng.gen_range(1..=3);
        let model = random_model(rng, d);
        let spec = DiscountedSpec::new(rng.gen_range(0.05..0.5), 1.0, 10, 1e-8, 10.0).unwrap();
        let m0 = ParticleArray::random_uniform(rng, n, d);
        let path: Vec<Configuration> = (0..spec.steps).map(|_| ParticleArray::random_uniform(rng, n, d)).collect();
        let (_, grad) = discounted_action_gradient(&model, &spec, &path, &m0).unwrap();
        let k = rng.gen_range(0..spec.steps);
        let j = rng.gen_range(0..n * d);
        let step = 1e-5;
        let mut plus = path.clone();
        plus[k].as_mut_slice()[j] += step;
        let mut minus = path.clone();
        minus[k].as_mut_slice()[j] -= step;
        let fd = (discounted_action(&model, &spec, &plus, &m0).unwrap() - discounted_action(&model, &spec, &minus, &m0).unwrap()) / (2.0 * step);
        let analytic = grad[k].as_slice()[j] / n as f64;
        let rel = (analytic - fd).abs() / fd.abs().max(analytic.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    (worst <= 1e-5, format!("worst relative error {worst:.2e}"))
}

fn brute_force_assignment(n: usize, cost: &[f64]) -> f64 {
    fn rec(row: usize, n: usize, cost: &[f64], used: &mut Vec<bool>, acc: f64, best: &mut f64) {
        if row == n {
            *best = best.min(acc);
            return;
        }
        for col in 0..n {
            if !used[col] {
                used[col] = true;
                rec(row + 1, n, cost, used, acc + cost[row * n + col], best);
                used[col] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    rec(0, n, cost, &mut vec![false; n], 0.0, &mut best);
    best
}

fn dist_weak_suite(rng: &mut ChaCha8Rng) -> (bool, String) {
    let tol = 1e-9;
    let mut failures = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=8);
        let d = rng.gen_range(1..=3);
        let scale = |rng: &mut ChaCha8Rng| ParticleArray::random_uniform(rng, n, d).scaled(3.0);
        let (a, b, c) = (scale(rng), scale(rng), scale(rng));
        let ab = dist_weak(&a, &b).unwrap();
        let ba = dist_weak(&b, &a).unwrap();
        let bc = dist_weak(&b, &c).unwrap();
        let ac = dist_weak(&a, &c).unwrap();
        let a2 = a.permuted(&Permutation::random(rng, n)).shifted(&IntegerShift::random(rng, n, d, 5));
        let moved = dist_weak(&a2, &b).unwrap();
        let self_d = dist_weak(&a, &a2).unwrap();
        if (ab - ba).abs() > tol || ac > ab + bc + tol || (moved - ab).abs() > tol || self_d > tol {
            failures += 1;
        }
    }
    let mut mismatches = 0;
    for n in 1..=6 {
        for _ in 0..20 {
            let x = ParticleArray::random_uniform(rng, n, 2);
            let y = ParticleArray::random_uniform(rng, n, 2);
            let cost: Vec<f64> = (0..n * n).map(|k| torus_sq_dist(x.row(k / n), y.row(k % n))).collect();
            let (fast, _) = min_cost_assignment(n, &cost);
            if (fast - brute_force_assignment(n, &cost)).abs() > 1e-12 {
                mismatches += 1;
            }
        }
    }
    (
        failures == 0 && mismatches == 0,
        format!("{failures} property failures in 1000 triples, {mismatches} assignment mismatches in 120 brute-force cases"),
    )
}

fn calibration(field0: &GridField, rng: &mut ChaCha8Rng) -> (bool, String) {
    let model = TonelliModel::cosine(vec![0.0]);
    let seeds = random_differentiable_seeds(field0, 10, rng).unwrap();
    let (mut worst_res, mut worst_e) = (0.0f64, 0.0f64);
    for m in &seeds {
        let curve = characteristic(&model, field0, m, 2.0, 1.0, 0.01).unwrap();
        worst_res = worst_res.max(curve.residual_per_unit_time);
        worst_e = worst_e.max((curve.energy_min - field0.hbar).abs()).max((curve.energy_max - field0.hbar).abs());
    }
    (worst_res <= 5e-3 && worst_e <= 1e-2, format!("worst residual {worst_res:.2e}/unit time, worst |H - Hbar| {worst_e:.2e}"))
}

fn minimizing_measures(fields: &[(f64, &GridField)], rng: &mut ChaCha8Rng) -> (bool, String) {
    let mut ok = true;
    let mut notes = Vec::new();
    for &(c, field) in fields {
        let model = TonelliModel::cosine(vec![c]);
        let seeds = random_differentiable_seeds(field, 10, rng).unwrap();
        let omega = approximate_omega(&model, field, &seeds, 5.0, 0.01).unwrap();
        let mu = birkhoff_measure(&model, &omega.points[0], 1000.0, 0.01, 10).unwrap();
        let gap = check_minimizing(&model, &mu, field.hbar);
        let inv = check_invariance(&model, &mu, 1.0, 0.01, &Observable::standard_family(1)).unwrap();
        let rests: Vec<EmpiricalMeasure> = (0..10)
            .map(|_| {
                let m = ParticleArray::random_uniform(rng, 1, 1);
                EmpiricalMeasure::dirac(PhasePoint::new(m, ParticleArray::zeros(1, 1)).unwrap())
            })
            .collect();
        let rest = lower_bound_gap(&model, &rests, field.hbar, 1e-2);
        ok &= gap <= 1e-2 && inv.residuals.len() == 6 && inv.max_residual <= 1e-2 && rest.min_gap > 0.0;
        notes.push(format!(
            "c={c}: gap {gap:.1e}, invariance {:.1e}, min rest-point gap {:.2e}",
            inv.max_residual, rest.min_gap
        ));
    }
    (ok, notes.join("; "))
}

fn assumption_audit() -> (bool, String) {
    let v = TrigPotential::cosine_well(1);
    let w = TrigPotential::cosine_well(1);
    let expected_kl: f64 = [&v, &w]
        .iter()
        .flat_map(|p| p.modes())
        .map(|m| m.k.iter().map(|k| (k * k) as f64).sum::<f64>() * (2.0 * PI).powi(2) * (m.a.abs() + m.b.abs()))
        .sum();
    let model = TonelliModel::new(v, w, vec![0.3]).unwrap();
    let report = audit_assumptions(&model, 10_000, 1.0, 11);
    let checked = [
        Assumption::NonNegativity,
        Assumption::Growth,
        Assumption::LowerQuadratic,
        Assumption::UpperQuadratic,
        Assumption::Periodicity,
        Assumption::RearrangementInvariance,
    ];
    let clean = checked.iter().all(|a| !report.violated(*a));
    let ok = report.gamma_lower == 0.5 && (report.k_l_upper - expected_kl).abs() <= 1e-12 * expected_kl && clean;
    (
        ok,
        format!(
            "gamma {}, K_L {:.6} (expected {expected_kl:.6}), {} violations over {} probes",
            report.gamma_lower,
            report.k_l_upper,
            report.violations.len(),
            report.probes
        ),
    )
}

fn lax_oleinik_structure(rng: &mut ChaCha8Rng) -> (bool, String) {
    let model = TonelliModel::cosine(vec![0.5]);
    let spec = GridSpec::new(1, 1, 64).unwrap();
    let h = 0.02;
    let sampling = VelocitySampling::for_model(&model, &spec, h);
    let mut order_failures = 0;
    let mut shift_ulps = 0.0f64;
    for _ in 0..100 {
        let coeffs: Vec<f64> = (0..4).map(|_| rng.gen_range(-0.02..0.02)).collect();
        let u = GridField::from_fn(spec, |y| {
            coeffs.iter().enumerate().map(|(j, a)| a * (2.0 * PI * (j + 1) as f64 * y[0]).cos()).sum()
        });
        let mut v = u.clone();
        v.values.iter_mut().for_each(|x| *x += rng.gen_range(0.0..0.01));
        let tu = lax_oleinik_step(&model, &u, h, &sampling).unwrap();
        let tv = lax_oleinik_step(&model, &v, h, &sampling).unwrap();
        order_failures += tu.values.iter().zip(&tv.values).filter(|(a, b)| a > b).count();

        let k = rng.gen_range(-1.0..1.0);
        let mut shifted = u.clone();
        shifted.values.iter_mut().for_each(|x| *x += k);
        let ts = lax_oleinik_step(&model, &shifted, h, &sampling).unwrap();
        for (a, b) in ts.values.iter().zip(&tu.values) {
            let expected = b + k;
            let ulp = f64::EPSILON * expected.abs().max(k.abs()).max(b.abs());
            shift_ulps = shift_ulps.max((a - expected).abs() / ulp);
        }
    }
    (
        order_failures == 0 && shift_ulps <= 8.0,
        format!("{order_failures} order violations (bitwise); shift commutation within {shift_ulps:.1} ulp"),
    )
}

fn main() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20240601);
    let field0 = cell_field(&TonelliModel::cosine(vec![0.0]), 400);
    let field2 = cell_field(&TonelliModel::cosine(vec![2.0]), 400);

    let criteria: Vec<(&str, Box<dyn FnOnce(&mut ChaCha8Rng) -> (bool, String)>)> = vec![
        ("free-system effective Hamiltonian", Box::new(free_system)),
        ("cosine effective Hamiltonian", Box::new(|_| cosine_hbar())),
        ("decoupling N=8 vs N=1", Box::new(decoupling)),
        ("integrator order", Box::new(integrator_order)),
        ("action gradient", Box::new(action_gradient)),
        ("dist_weak properties and assignment", Box::new(dist_weak_suite)),
        ("calibrated curves", Box::new(|r| calibration(&field0, r))),
        ("minimizing measures", Box::new(|r| minimizing_measures(&[(0.0, &field0), (2.0, &field2)], r))),
        ("assumption audit", Box::new(|_| assumption_audit())),
        ("Lax-Oleinik monotonicity and shift", Box::new(lax_oleinik_structure)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.into_iter().enumerate() {
        let t = Instant::now();
        let (ok, detail) = check(&mut rng);
        failed += usize::from(!ok);
        println!(
            "criterion {:>2} {}: {name}: {detail} ({:.1}s)",
            i + 1,
            if ok { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of 10 passed in {:.1}s", 10 - failed, started.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
