//! Characteristics of a computed weak KAM solution and a relaxed approximation of the invariant set.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use weakkam::calibration::{approximate_omega, characteristic, random_differentiable_seeds};
use weakkam::cell::{solve_cell, CellParams, GridSpec};
use weakkam::*;

fn main() -> Result<()> {
    let model = TonelliModel::cosine(vec![0.0]);
    let field = solve_cell(&model, GridSpec::new(1, 1, 200)?, CellParams::new(0.02, 1e-9, 100_000))?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let seeds = random_differentiable_seeds(&field, 5, &mut rng)?;

    for m in &seeds {
        let curve = characteristic(&model, &field, m, 2.0, 1.0, 0.01)?;
        println!(
            "x0 = {:.3}: span {:?}, residual/time {:.2e}, H in [{:.4}, {:.4}]",
            m.row(0)[0],
            curve.two_sided_span,
            curve.residual_per_unit_time,
            curve.energy_min,
            curve.energy_max
        );
    }

    let omega = approximate_omega(&model, &field, &seeds, 5.0, 0.01)?;
    println!("omega: {} point(s), graph defect {:.2e}", omega.points.len(), omega.graph_defect);
    for z in &omega.points {
        println!("  x = {:.6}, p = {:.2e}", weakkam::config_space::wrap_coord(z.m.row(0)[0]), z.p.row(0)[0]);
    }
    Ok(())
}
