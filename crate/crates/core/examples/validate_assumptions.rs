//! Empirical constants of the diffusion assumptions for the three example
//! families.

use cbf_lab::diffusion::{validate_assumption, Condition, DiffusionTerm};
use cbf_lab::spectral::TorusGrid;

fn main() -> cbf_lab::Result<()> {
    let grid = TorusGrid::periodic(64)?;
    let ndt1 = DiffusionTerm::ndt1_default(&grid, 0.1, 0.0)?;
    let ndt2 = DiffusionTerm::ndt2_default(&grid, 0.1, 0.0)?;
    let ndt3 = DiffusionTerm::ndt3_default(&grid, 2.0, 3.0)?;
    let checks = [
        (&ndt2, Condition::S1Orth),
        (&ndt1, Condition::S2Lip),
        (&ndt1, Condition::S3Weak),
        (&ndt1, Condition::S4Growth),
        (&ndt3, Condition::Gs1Bound),
    ];
    for (term, cond) in checks {
        let rep = validate_assumption(term, cond, 200, 11)?;
        println!(
            "{:<5} {:<10} constant {:.4e} (half sample {:.4e}) growth {:?} pass {}",
            term.variant().name(),
            cond.id(),
            rep.constant,
            rep.half_constant,
            rep.growth,
            rep.pass
        );
    }
    Ok(())
}
