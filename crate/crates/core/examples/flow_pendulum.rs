//! Pendulum orbits under both integrators: energy drift and the Euler-Lagrange residual.

use weakkam::flow::{energy_drift, euler_lagrange_residual, integrate_hamiltonian};
use weakkam::*;

fn main() -> Result<()> {
    let model = TonelliModel::cosine(vec![0.0]);
    let m = ParticleArray::from_rows(&[[0.1], [0.35], [0.8]])?;
    let p = ParticleArray::from_rows(&[[0.2], [-1.5], [0.0]])?;
    let start = PhasePoint::new(m, p)?;

    for scheme in [Scheme::Verlet, Scheme::Midpoint] {
        for h in [0.02, 0.01, 0.005] {
            let traj = integrate_hamiltonian(&model, &start, 20.0, h, scheme)?;
            let (max_dev, _) = energy_drift(&model, &traj);
            println!(
                "{scheme:?} h = {h:<6} energy drift {max_dev:.3e}  EL residual {:.3e}",
                euler_lagrange_residual(&model, &traj)
            );
        }
    }
    Ok(())
}
