//! Absorbing radii of the Wong-Zakai systems along δ halvings, next to the
//! white-noise radii they approach.

use std::sync::Arc;

use cbf_lab::attractor::{
    absorbing_radius_additive, absorbing_radius_multiplicative, RadiusForm, RadiusWindow,
    DEFAULT_YOUNG_CONSTANT,
};
use cbf_lab::dynamics::{CbfParams, Forcing};
use cbf_lab::noise::WienerPath;
use cbf_lab::spectral::{taylor_green, TorusGrid};
use cbf_lab::transforms::{AdditiveProfile, NoiseMode, NoiseSource};

fn main() -> cbf_lab::Result<()> {
    let grid = TorusGrid::periodic(64)?;
    let params = CbfParams::default();
    let forcing = Forcing::Constant(taylor_green(&grid, 0.3));
    let profile = AdditiveProfile::taylor_green(&grid, 0.0, 1.0)?;
    let window = RadiusWindow { length: 60.0 };
    for seed in 1..=3u64 {
        let source = NoiseSource::new(Arc::new(WienerPath::sample(seed, -80.0, 1.0, 0.005)?), 1.0);
        let add = |mode| {
            absorbing_radius_additive(
                &params, &profile, &forcing, &source, 0.0, mode, RadiusForm::TwoD, DEFAULT_YOUNG_CONSTANT, window,
            )
        };
        let mul = |mode| absorbing_radius_multiplicative(&params, &forcing, &source, 0.0, mode, window);
        let (a0, m0) = (add(NoiseMode::White)?, mul(NoiseMode::White)?);
        println!("seed {seed}: white additive {:.6e}  multiplicative {:.6e}", a0.value, m0.value);
        for delta in [0.2, 0.1, 0.05, 0.025] {
            let (a, m) = (add(NoiseMode::Colored(delta))?, mul(NoiseMode::Colored(delta))?);
            println!(
                "  delta {delta:<5} |additive gap| {:.4e}  |multiplicative gap| {:.4e}  tails {:.1e} {:.1e}",
                (a.value - a0.value).abs(),
                (m.value - m0.value).abs(),
                a.truncation_bound,
                m.truncation_bound
            );
        }
    }
    Ok(())
}
