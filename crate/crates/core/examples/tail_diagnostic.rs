use cbf_lab::attractor::{gaussian_vortex, tail_mass, TailCutoff};
use cbf_lab::spectral::TorusGrid;

fn main() -> cbf_lab::Result<()> {
    let grid = TorusGrid::periodic(64)?;
    let u = gaussian_vortex(&grid, 0.3);
    for k in [0.25, 0.5, 0.75, 1.0, 1.25, 1.5] {
        println!("k {k:4.2}  tail {:.6e}", tail_mass(&u, &TailCutoff::new(k)?)?);
    }
    Ok(())
}
