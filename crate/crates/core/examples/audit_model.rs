//! Probes the standing convexity, growth and interaction assumptions on a two-particle model.

use weakkam::audit::audit_assumptions;
use weakkam::potential::{Mode, TrigPotential};
use weakkam::*;

fn main() -> Result<()> {
    let v = TrigPotential::cosine_well(2);
    let w = TrigPotential::new(
        2,
        vec![
            Mode { k: vec![0, 0], a: -0.3, b: 0.0 },
            Mode { k: vec![1, 0], a: 0.15, b: 0.0 },
            Mode { k: vec![0, 1], a: 0.15, b: 0.0 },
        ],
    )?;
    let model = TonelliModel::new(v, w, vec![0.5, -0.25])?;

    let report = audit_assumptions(&model, 2_000, 1.0, 11);
    println!("gamma >= {}", report.gamma_lower);
    println!("K_L   <= {:.6}", report.k_l_upper);
    println!("C     <= {:.6}", report.c_upper);
    println!("{} probes, {} violation(s)", report.probes, report.violations.len());
    for viol in report.violations.iter().take(5) {
        println!("  {} margin {:.3e}", viol.assumption.id(), viol.margin);
    }
    Ok(())
}
