//! Distance between Wong-Zakai and white-noise solutions after two time
//! units, for additive and multiplicative noise, along δ halvings.

use std::sync::Arc;

use cbf_lab::dynamics::{CbfParams, Forcing, StepperConfig};
use cbf_lab::noise::WienerPath;
use cbf_lab::spectral::{random_field, taylor_green, TorusGrid};
use cbf_lab::transforms::{wz_solution_convergence, AdditiveProfile, NoiseMode, NoiseSource, SystemSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> cbf_lab::Result<()> {
    let grid = TorusGrid::periodic(64)?;
    let params = CbfParams::default();
    let forcing = Forcing::Constant(taylor_green(&grid, 0.3));
    let u0 = random_field(&grid, &mut ChaCha8Rng::seed_from_u64(0), 1.0, 2.0, false);
    let cfg = StepperConfig::with_dt(1e-3);
    let deltas = [0.2, 0.1, 0.05];
    let systems = [
        (
            "additive",
            SystemSpec::Additive {
                params,
                forcing: forcing.clone(),
                profile: AdditiveProfile::taylor_green(&grid, 0.0, 1.0)?,
                mode: NoiseMode::White,
            },
        ),
        ("multiplicative", SystemSpec::Multiplicative { params, forcing, mode: NoiseMode::White }),
    ];
    for seed in 1..=3u64 {
        let source = NoiseSource::new(Arc::new(WienerPath::sample(seed, -20.0, 3.0, 1e-3)?), 1.0);
        for (name, spec) in &systems {
            let rows = wz_solution_convergence(spec, &source, &deltas, 0.0, 2.0, &u0, &cfg)?;
            for r in rows {
                println!(
                    "{name:>14} seed {seed} delta {:<5} error {:.4e} ratio {}",
                    r.delta,
                    r.error_h,
                    r.ratio_to_previous.map_or("-".into(), |x| format!("{x:.3}"))
                );
            }
        }
    }
    Ok(())
}
