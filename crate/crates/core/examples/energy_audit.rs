//! Energy-equality audit of a Wong-Zakai CBF run with the `ndt1` diffusion,
//! at two time steps.

use std::sync::Arc;

use cbf_lab::diffusion::DiffusionTerm;
use cbf_lab::dynamics::{energy_residual, integrate, CbfParams, Forcing, StepperConfig, WzCbf};
use cbf_lab::noise::{NoiseWindow, WienerPath};
use cbf_lab::spectral::{random_field, taylor_green, TorusGrid};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> cbf_lab::Result<()> {
    let grid = TorusGrid::periodic(64)?;
    let path = Arc::new(WienerPath::sample(1, -5.0, 3.0, 1e-3)?);
    let sys = WzCbf::new(
        &grid,
        CbfParams::default(),
        Forcing::Constant(taylor_green(&grid, 0.3)),
        DiffusionTerm::ndt1_default(&grid, 0.1, 0.0)?,
        0.1,
        NoiseWindow::new(path, 0.0),
    )?;
    let u0 = random_field(&grid, &mut ChaCha8Rng::seed_from_u64(7), 1.0, 2.0, false);
    let horizon = 1.0;
    let mut previous = None;
    for dt in [1e-3, 5e-4] {
        let traj = integrate(&sys, 0.0, horizon, &u0, &StepperConfig::with_dt(dt))?;
        let rows = energy_residual(&traj)?;
        let worst = rows.iter().map(|r| r.residual).fold(0.0, f64::max);
        let worst_v = rows.iter().map(|r| r.residual_v_form).fold(0.0, f64::max);
        let ratio = previous.map_or("-".to_string(), |p: f64| format!("{:.3}", p / worst));
        println!("dt {dt:.1e}  max residual {worst:.3e}  (V form {worst_v:.3e})  ratio {ratio}");
        previous = Some(worst);
    }
    Ok(())
}
