//! Effective Hamiltonian of the one-dimensional pendulum from quadrature, across the critical rotation.

use weakkam::oracle::{critical_c, oracle_hbar_1d};
use weakkam::potential::TrigPotential;
use weakkam::*;

fn main() -> Result<()> {
    let v = TrigPotential::cosine_well(1);
    let c_star = critical_c(&v)?;
    println!("critical c = {c_star:.6}");
    for i in 0..=12 {
        let c = 0.25 * i as f64;
        println!("c = {c:<5} hbar = {:.6}", oracle_hbar_1d(&v, c)?);
    }
    Ok(())
}
