//! Unforced, noise-free decay against the bound `e^{-α t}‖u₀‖`.

use std::sync::Arc;

use cbf_lab::diffusion::DiffusionTerm;
use cbf_lab::dynamics::{integrate, CbfParams, Forcing, StepperConfig, WzCbf};
use cbf_lab::noise::{NoiseWindow, WienerPath};
use cbf_lab::spectral::{random_field, TorusGrid};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> cbf_lab::Result<()> {
    let grid = TorusGrid::periodic(64)?;
    let params = CbfParams::default();
    let path = Arc::new(WienerPath::zero(-1.0, 5.0, 1e-3)?);
    let sys = WzCbf::new(&grid, params, Forcing::Zero, DiffusionTerm::zero(&grid), 0.1, NoiseWindow::new(path, 0.0))?;
    let u0 = random_field(&grid, &mut ChaCha8Rng::seed_from_u64(5), 5.0, 2.0, false);
    let cfg = StepperConfig {
        dt: 2e-3,
        store_stride: 250,
        ..Default::default()
    };
    let traj = integrate(&sys, 0.0, 3.0, &u0, &cfg)?;
    for (t, u) in traj.times.iter().zip(&traj.states) {
        let bound = (-params.alpha * t).exp() * u0.h_norm();
        println!("t {t:4.1}  |u| {:.6}  bound {:.6}", u.h_norm(), bound);
    }
    Ok(())
}
