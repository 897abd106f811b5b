//! Colored OU process `z_δ` against its white-noise limit `y` on one path.

use cbf_lab::noise::WienerPath;

fn main() -> cbf_lab::Result<()> {
    let ell = 1.0;
    let path = WienerPath::sample(4, -40.0, 7.0, 1e-3)?;
    let y = path.ou_y_trace(ell)?;
    for delta in [0.2, 0.1, 0.05, 0.025] {
        let z = path.ou_z_trace(ell, delta)?;
        let mut sup: f64 = 0.0;
        for i in 0..=5000 {
            let t = i as f64 * 1e-3;
            sup = sup.max((z.eval(t)? - y.eval(t)?).abs());
        }
        println!("delta {delta:<6} sup_[0,5] |z - y| = {sup:.4e}");
    }
    // A linear path drives both processes to the constant c/l.
    let line = WienerPath::from_fn(-30.0, 2.0, 1e-3, |t| 2.0 * t)?;
    let y = line.ou_y_trace(ell)?;
    println!("omega = 2t: y(1) = {:.12} (c/l = 2)", y.eval(1.0)?);
    Ok(())
}
