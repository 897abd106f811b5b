//! Writes a field container, reads it back and compares bitwise.

use cbf_lab::io::{container_len, load_field, save_field};
use cbf_lab::spectral::{taylor_green, TorusGrid};

fn main() -> cbf_lab::Result<()> {
    let grid = TorusGrid::periodic(32)?;
    let u = taylor_green(&grid, 1.5);
    let dir = std::env::temp_dir().join("cbf-lab-field-io");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("tg.bin");
    save_field(&path, &u)?;
    let back = load_field(&path)?;
    let bytes = std::fs::metadata(&path)?.len();
    println!("{} bytes (expected {}), identical: {}", bytes, container_len(32), back == u);
    Ok(())
}
