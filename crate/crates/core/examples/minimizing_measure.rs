//! Time averages along a rotating pendulum orbit: invariance and the minimizing property.

use weakkam::cell::{grad_u_config, solve_cell, CellParams, GridSpec};
use weakkam::measures::{birkhoff_measure, check_invariance, check_minimizing, lower_bound_gap, EmpiricalMeasure, Observable};
use weakkam::*;

fn main() -> Result<()> {
    let model = TonelliModel::cosine(vec![2.0]);
    let field = solve_cell(&model, GridSpec::new(1, 1, 200)?, CellParams::new(0.02, 1e-9, 100_000))?;

    let m = ParticleArray::from_rows(&[[0.3]])?;
    let mask = field.kink_mask();
    let p = grad_u_config(&field, &m, &mask)?.add_row_vector(model.c());
    let mu = birkhoff_measure(&model, &PhasePoint::new(m, p)?, 500.0, 0.01, 10)?;

    let inv = check_invariance(&model, &mu, 1.0, 0.01, &Observable::standard_family(1))?;
    println!("hbar                     = {:.6}", field.hbar);
    println!("minimizing gap           = {:.3e}", check_minimizing(&model, &mu, field.hbar));
    println!("invariance residual      = {:.3e}", inv.max_residual);

    let rest: Vec<EmpiricalMeasure> = [0.0, 0.25, 0.5]
        .iter()
        .map(|&x| PhasePoint::new(ParticleArray::from_rows(&[[x]]).unwrap(), ParticleArray::zeros(1, 1)).map(EmpiricalMeasure::dirac))
        .collect::<Result<_>>()?;
    let report = lower_bound_gap(&model, &rest, field.hbar, 1e-9);
    println!("rest-point gaps          = {:?}", report.gaps);
    Ok(())
}
