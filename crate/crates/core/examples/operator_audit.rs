use cbf_lab::spectral::{random_field, trilinear_b, TorusGrid};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> cbf_lab::Result<()> {
    let grid = TorusGrid::periodic(64)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = [0.0f64; 3];
    for _ in 0..20 {
        let u = random_field(&grid, &mut rng, 1.0, 1.5, false);
        let v = random_field(&grid, &mut rng, 1.0, 1.5, false);
        let w = random_field(&grid, &mut rng, 1.0, 1.5, false);
        let scale = trilinear_b(&u, &v, &w)?.abs().max(1e-300);
        worst[0] = worst[0].max(trilinear_b(&u, &v, &v)?.abs() / scale);
        worst[1] = worst[1].max((trilinear_b(&u, &v, &w)? + trilinear_b(&u, &w, &v)?).abs() / scale);
        worst[2] = worst[2].max((u.stokes().inner(&u) - u.grad_norm2()).abs() / u.grad_norm2());
    }
    println!("b(u,v,v)         {:.3e}", worst[0]);
    println!("b(u,v,w)+b(u,w,v) {:.3e}", worst[1]);
    println!("(Au,u)-|grad u|^2 {:.3e}", worst[2]);
    Ok(())
}
