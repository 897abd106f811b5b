//! Pullback endpoints of the Wong-Zakai system against its absorbing radius.

use std::sync::Arc;

use cbf_lab::attractor::{absorbing_radius_wz, ndt1_growth_bound, pullback_run, PullbackSchedule, RadiusWindow, WzRadiusConstants};
use cbf_lab::diffusion::DiffusionTerm;
use cbf_lab::dynamics::{CbfParams, Forcing, StepperConfig};
use cbf_lab::noise::WienerPath;
use cbf_lab::spectral::{random_field, taylor_green, TorusGrid};
use cbf_lab::transforms::{NoiseSource, SystemSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> cbf_lab::Result<()> {
    let grid = TorusGrid::periodic(32)?;
    let params = CbfParams::default();
    let forcing = Forcing::Constant(taylor_green(&grid, 0.3));
    let term = DiffusionTerm::ndt1_default(&grid, 0.1, 0.0)?;
    let delta = 0.1;
    let path = Arc::new(WienerPath::sample(1, -100.0, 2.0, 1e-3)?);

    let consts = WzRadiusConstants::from_term(&term, ndt1_growth_bound(&grid))?;
    let radius = absorbing_radius_wz(&params, &consts, &forcing, &path, delta, 0.0, RadiusWindow { length: 60.0 })?;
    println!("radius {:.4e} (tail {:.1e})", radius.value, radius.truncation_bound);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let schedule = PullbackSchedule {
        s: 0.0,
        t_list: vec![0.5, 1.0, 2.0],
        ic_family: (1..=4).map(|i| random_field(&grid, &mut rng, 2.5 * i as f64, 2.0, false)).collect(),
    };
    let spec = SystemSpec::WongZakai { params, forcing, diffusion: term, delta };
    let source = NoiseSource::new(path, 1.0);
    let ens = pullback_run(&schedule, &spec, &source, &StepperConfig::with_dt(2e-3), Some(radius.value))?;
    for m in &ens.meta {
        println!("depth {:3.1}  ic {}  |u|^2 {:.4e}  inside {:?}", m.t, m.ic, m.norm2, m.inside);
    }
    println!("T* = {:?}", ens.absorption_time(&schedule.t_list));
    Ok(())
}
