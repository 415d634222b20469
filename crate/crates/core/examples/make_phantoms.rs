//! Writes the bundled synthetic images to `data/`.
//!
//! `cargo run --release --example make_phantoms`

use std::path::Path;

use geotrack::lifting::save_grayscale;
use geotrack::phantom;

fn main() -> geotrack::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    std::fs::create_dir_all(&dir)?;

    let fundus = phantom::fundus_patch(96, 96, 7);
    save_grayscale(&fundus.image, &dir.join("fundus_patch.png"))?;

    let crossing = phantom::double_crossing(96, 96, 14.0);
    save_grayscale(&crossing.image, &dir.join("double_crossing.png"))?;

    println!("wrote phantoms to {}", dir.display());
    Ok(())
}
