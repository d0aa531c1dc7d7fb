//! Discrete weak KAM solution on the reduced grid, compared with the one-dimensional quadrature.

use weakkam::cell::{solve_cell_detailed, CellParams, GridSpec};
use weakkam::oracle::oracle_hbar_1d;
use weakkam::potential::TrigPotential;
use weakkam::*;

fn main() -> Result<()> {
    let v = TrigPotential::cosine_well(1);
    for c in [0.0, 1.0, 2.0] {
        let model = TonelliModel::cosine(vec![c]);
        let start = std::time::Instant::now();
        let sol = solve_cell_detailed(&model, GridSpec::new(1, 1, 200)?, CellParams::new(0.02, 1e-9, 100_000), None)?;
        println!(
            "c = {c}: hbar = {:.6} (quadrature {:.6}), {} iterations, residual {:.1e}, {:.1?}",
            sol.field.hbar,
            oracle_hbar_1d(&v, c)?,
            sol.iterations,
            sol.residual,
            start.elapsed()
        );
    }
    Ok(())
}
