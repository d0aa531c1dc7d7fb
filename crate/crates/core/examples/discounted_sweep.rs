//! Vanishing-discount estimate of the effective Hamiltonian for a single pendulum with rotation vector c = 2.

use weakkam::discounted::{estimate_hbar_discounted, SweepTemplate};
use weakkam::oracle::oracle_hbar_1d;
use weakkam::potential::TrigPotential;
use weakkam::*;

fn main() -> Result<()> {
    let model = TonelliModel::cosine(vec![2.0]);
    let m0 = ParticleArray::from_rows(&[[0.1]])?;
    let est = estimate_hbar_discounted(&model, &m0, &[0.2, 0.1, 0.05], &SweepTemplate::default())?;

    println!("{:>8} {:>14} {:>10}", "eps", "eps * V_eps", "|grad|");
    for row in &est.table {
        println!("{:>8} {:>14.8} {:>10.2e}", row.epsilon, row.eps_times_value, row.grad_norm);
    }
    println!("extrapolated hbar = {:.6}", est.hbar);
    println!("quadrature hbar   = {:.6}", oracle_hbar_1d(&TrigPotential::cosine_well(1), 2.0)?);
    Ok(())
}
