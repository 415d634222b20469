//! Tracks through a double crossing on W2 with two cost functions. The
//! crossing-preserving cost keeps the track on its tube; the planar Frangi
//! cost loses orientation at the crossings and may jump branches.
//!
//! `cargo run --release --example w2_crossing`

use geotrack::lifting::save_grayscale;
use geotrack::manifold::ManifoldKind;
use geotrack::metric::Model;
use geotrack::phantom::{distance_to_polyline, double_crossing};
use geotrack::pipeline::{run_pipeline, CostSource, Pipeline, PipelineConfig, PixelPose};
use geotrack::tracking::pixel_path;

fn main() -> geotrack::Result<()> {
    let out = std::env::temp_dir().join("geotrack_w2_crossing");
    std::fs::create_dir_all(&out)?;
    let ph = double_crossing(96, 96, 14.0);
    let image = out.join("crossing.png");
    save_grayscale(&ph.image, &image)?;

    // the near-horizontal tube, travelled left to right
    let line = &ph.centerlines[1];
    let pose = |i: usize| {
        let (a, b) = (line[i.min(line.len() - 2)], line[i.min(line.len() - 2) + 1]);
        PixelPose {
            col: line[i][0],
            row: line[i][1],
            theta_deg: (b[1] - a[1]).atan2(b[0] - a[0]).to_degrees(),
        }
    };
    let n = line.len() - 1;
    let (seed, tip) = (pose(n / 20), pose(n - n / 20));

    for source in [CostSource::CrossingPreserving, CostSource::FrangiR2] {
        let mut cfg = PipelineConfig::new(&image, out.join(format!("{source:?}")), seed);
        cfg.manifold = ManifoldKind::W2;
        cfg.model = Model::ForwardGear;
        cfg.xi = 6.0;
        cfg.grid.n_phi = 64;
        cfg.cost.source = source;
        cfg.cost.dark_vessels = false;
        cfg.tips = vec![tip];
        let report = run_pipeline(cfg.clone())?;

        let pipe = Pipeline::new(cfg)?;
        let tracks = pipe.read_tracks()?;
        let offset = tracks
            .first()
            .map(|t| {
                pixel_path(t, &pipe.calibration, &pipe.config.camera)
                    .iter()
                    .filter(|p| p[0].is_finite())
                    .map(|&p| distance_to_polyline(p, line))
                    .fold(0.0, f64::max)
            })
            .unwrap_or(f64::INFINITY);
        println!(
            "{source:?}: {}, max distance from the tube centreline {offset:.2} px",
            report.tracks[0].status
        );
    }
    println!("overlays in {}", out.display());
    Ok(())
}
