use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use geotrack::grid::{GridSpec, ScalarVolume};
use geotrack::io::{self, ArrayMeta};
use geotrack::lifting::save_grayscale;
use geotrack::manifold::ManifoldKind;
use geotrack::phantom;
use geotrack::pipeline::{
    run_pipeline, CostSource, Pipeline, PipelineConfig, PixelPose, COST_FILE, DISTANCE_FILE,
    OVERLAY_FILE,
};
use geotrack::Error;
use tempfile::TempDir;

fn pose(col: f64, row: f64, theta_deg: f64) -> PixelPose {
    PixelPose {
        col,
        row,
        theta_deg,
    }
}

/// Small fundus patch with a seed and two tips on the trunk.
fn small_config(dir: &Path, manifold: ManifoldKind) -> PipelineConfig {
    let image = dir.join("patch.png");
    if !image.exists() {
        save_grayscale(&phantom::fundus_patch(48, 48, 3).image, &image).unwrap();
    }
    let mut cfg = PipelineConfig::new(&image, dir.join("out"), pose(6.0, 16.5, 33.0));
    cfg.manifold = manifold;
    cfg.xi = 4.0;
    cfg.grid.n_theta = 16;
    cfg.grid.n_alpha = 40;
    cfg.grid.n_beta = 40;
    cfg.grid.n_phi = 16;
    cfg.tips = vec![pose(26.0, 18.5, -7.0), pose(41.5, 24.0, 35.0)];
    cfg
}

fn artifacts(out: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    for dir in [out.to_path_buf(), out.join("tracks")] {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            let ext = p.extension().and_then(|e| e.to_str()).unwrap_or("");
            if matches!(ext, "f32" | "json" | "csv") && !p.ends_with("report.json") {
                let rel = p.strip_prefix(out).unwrap().to_path_buf();
                files.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn identical_runs_are_bit_identical() {
    let tmp = TempDir::new().unwrap();
    let mut a = small_config(tmp.path(), ManifoldKind::M2);
    a.output = tmp.path().join("a");
    let mut b = a.clone();
    b.output = tmp.path().join("b");
    let ra = run_pipeline(a.clone()).unwrap();
    run_pipeline(b).unwrap();
    assert!(ra.converged, "{:?}", ra.tracks);
    assert!(ra.tracks.iter().all(|t| t.cusps.is_empty()));
    let (fa, fb) = (artifacts(&a.output), artifacts(&tmp.path().join("b")));
    assert!(
        fa.len() >= 8,
        "{:?}",
        fa.iter().map(|f| &f.0).collect::<Vec<_>>()
    );
    assert_eq!(fa, fb);
    assert!(a.output.join(OVERLAY_FILE).exists());
    assert!(a.output.join("report.json").exists());
}

#[test]
fn solve_from_saved_cost_matches_in_process() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path(), ManifoldKind::W2);
    let report = run_pipeline(cfg.clone()).unwrap();
    assert!(report.solver.as_ref().unwrap().converged);
    let dist_path = cfg.output.join(DISTANCE_FILE);
    let before = fs::read(&dist_path).unwrap();
    let in_process = io::read_distance(&dist_path).unwrap();

    let pipe = Pipeline::new(cfg.clone()).unwrap();
    let cost = io::read_cost(&cfg.output.join(COST_FILE)).unwrap();
    let map = pipe.solve(&cost, None).unwrap();
    let bits = |v: &ScalarVolume| v.data.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&map.volume), bits(&in_process.volume));
    assert_eq!(fs::read(&dist_path).unwrap(), before);
}

#[test]
fn stages_compose_to_the_full_run() {
    let tmp = TempDir::new().unwrap();
    let mut full = small_config(tmp.path(), ManifoldKind::M2);
    full.cost.source = CostSource::FrangiR2;
    full.output = tmp.path().join("full");
    run_pipeline(full.clone()).unwrap();

    let mut staged = full.clone();
    staged.output = tmp.path().join("staged");
    let pipe = Pipeline::new(staged.clone()).unwrap();
    pipe.lift().unwrap();
    pipe.cost(None).unwrap();
    let cost = io::read_cost(&staged.output.join(COST_FILE)).unwrap();
    pipe.solve(&cost, None).unwrap();
    let map = io::read_distance(&staged.output.join(DISTANCE_FILE)).unwrap();
    pipe.track(&map, &cost, None).unwrap();
    assert_eq!(artifacts(&full.output), artifacts(&staged.output));
}

#[test]
fn plot_without_tracks_is_the_bare_image() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = small_config(tmp.path(), ManifoldKind::M2);
    cfg.tips.clear();
    let pipe = Pipeline::new(cfg.clone()).unwrap();
    assert!(pipe.read_tracks().unwrap().is_empty());
    let out = pipe.plot(&[]).unwrap();
    let img = image::open(out).unwrap().to_rgb8();
    let src = image::open(&cfg.image).unwrap().to_luma16();
    for (x, y, p) in img.enumerate_pixels() {
        let g = (src.get_pixel(x, y).0[0] as f64 / 65535.0 * 255.0).round() as u8;
        assert_eq!(p.0, [g, g, g]);
    }
}

fn write_external(path: &Path, grid: &GridSpec, value: impl Fn([f64; 3]) -> f64, kind: &str) {
    let vol = ScalarVolume::from_fn(*grid, value).quantized();
    io::write_array(
        path,
        &vol,
        &ArrayMeta::new(kind, grid, serde_json::Value::Null),
    )
    .unwrap();
}

#[test]
fn external_source_is_validated_and_bypasses_lifting() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = small_config(tmp.path(), ManifoldKind::W2);
    cfg.cost.source = CostSource::External;
    let ext = tmp.path().join("ext.f32");
    cfg.cost.external = Some(ext.clone());
    let pipe = Pipeline::new(cfg.clone()).unwrap();
    let grid = pipe.m2_grid().unwrap();

    write_external(
        &ext,
        &grid,
        |c| if c[0] > 0.1 { -0.5 } else { 0.3 },
        "vesselness",
    );
    match pipe.cost(None) {
        Err(Error::Stage { stage, source }) => {
            assert_eq!(stage, "cost");
            assert!(matches!(*source, Error::Format { .. }), "{source}");
        }
        other => panic!("expected a cost-stage error, got {other:?}"),
    }

    write_external(&ext, &grid, |_| 0.0, "cost");
    assert!(pipe.cost(None).is_err());

    write_external(&ext, &grid, |c| (c[0] * 3.0).sin().abs(), "vesselness");
    let (cost, summary) = pipe.cost(None).unwrap();
    assert_eq!(cost.grid().manifold, ManifoldKind::W2);
    assert!(summary.coverage > 0.5);
    assert!(!cfg.output.join("vesselness.f32").exists());
}

#[test]
fn missing_inputs_name_the_expected_file() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path(), ManifoldKind::M2);
    let pipe = Pipeline::new(cfg.clone()).unwrap();
    match pipe.cost(None) {
        Err(Error::Stage {
            stage: "cost",
            source,
        }) => match *source {
            Error::MissingInput { path, .. } => assert!(path.ends_with("vesselness.f32")),
            e => panic!("{e}"),
        },
        other => panic!("{other:?}"),
    }
    let mut bad = cfg.clone();
    bad.image = tmp.path().join("nope.png");
    assert!(matches!(
        Pipeline::new(bad),
        Err(Error::MissingInput { .. })
    ));
}

#[test]
fn cli_runs_stages_and_reports_exit_status() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path(), ManifoldKind::M2);
    let toml_path = tmp.path().join("run.toml");
    fs::write(&toml_path, cfg.to_toml().unwrap()).unwrap();
    let bin = env!("CARGO_BIN_EXE_geotrack");
    let run = |args: &[&str]| {
        Command::new(bin)
            .args(args)
            .arg("--config")
            .arg(&toml_path)
            .output()
            .unwrap()
    };
    let solve_first = run(&["solve"]);
    assert!(!solve_first.status.success());
    let err = String::from_utf8_lossy(&solve_first.stderr);
    assert!(err.contains("cost.f32"), "{err}");

    for stage in ["lift", "cost", "solve", "track", "plot"] {
        let out = run(&[stage]);
        assert!(
            out.status.success(),
            "{stage}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    assert_eq!(fs::read_dir(cfg.output.join("tracks")).unwrap().count(), 2);

    let out = run(&["run", "--source", "external"]);
    assert!(!out.status.success());
    let starved = run(&["run", "--n-max", "3"]);
    assert_eq!(starved.status.code(), Some(2));
}
