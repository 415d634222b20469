//! Full pipeline on the bundled fundus patch: lifting, cost, W2 distance map,
//! tracks for every tip and an overlay, driven by a TOML configuration.
//!
//! `cargo run --release --example fundus_pipeline [configs/fundus_m2.toml]`

use std::path::PathBuf;

use geotrack::pipeline::{run_pipeline, PipelineConfig};

fn main() -> geotrack::Result<()> {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| root.join("configs/fundus_w2.toml"));
    let config = PipelineConfig::from_toml_file(&path)?;
    let output = config.output.clone();
    let report = run_pipeline(config)?;

    if let Some(s) = &report.solver {
        println!(
            "solver: {} iterations, residual {:.2e}, converged {}",
            s.iterations, s.residual, s.converged
        );
    }
    for t in &report.tracks {
        println!(
            "track {:02}: {:<10} {:4} samples, length {:.4}, W {:.4}, cusps {}",
            t.index,
            t.status.to_string(),
            t.samples,
            t.finsler_length,
            t.w_tip,
            t.cusps.len()
        );
    }
    for s in &report.timings {
        println!("{:>6}: {:.2} s", s.stage, s.seconds);
    }
    println!("artifacts in {}", output.display());
    Ok(())
}
