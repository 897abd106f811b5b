//! Wong-Zakai approximation of a sampled path and of `ω(t) = t²`.
//!
//! On the parabola the sup error over `[0, T]` equals `T δ` exactly.

use cbf_lab::noise::{noise_diagnostics, NoiseParams, WienerPath};

fn main() -> cbf_lab::Result<()> {
    let deltas = [0.2, 0.1, 0.05, 0.025];
    let params = NoiseParams::default();
    let parabola = WienerPath::from_fn(-1.0, 7.0, 1e-3, |t| t * t)?;
    let sampled = WienerPath::sample(11, -20.0, 7.0, 1e-3)?;
    for (name, path) in [("t^2", &parabola), ("seed 11", &sampled)] {
        println!("{name}");
        for row in noise_diagnostics(path, &params, 0.0, 5.0, &deltas)? {
            println!(
                "  delta {:<6} sup|I - w| {:.6e}  growth ratio {:.4}",
                row.delta, row.sup_wz_error, row.growth_ratio
            );
        }
    }
    Ok(())
}
