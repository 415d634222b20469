//! Batch pipeline: image and configuration in, cost volume, distance map,
//! track CSVs, a JSON run report and an overlay PNG out.
//!
//! Each stage writes its product to the output directory and the next stage
//! can start from those files, so running the stages one by one gives the
//! same bytes as [`run_pipeline`]. Arrays are rounded to `f32` in memory as
//! soon as they are produced for that reason.

mod config;
pub mod overlay;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use config::{CostConfig, CostSource, GridConfig, PipelineConfig, PixelPose, SolverConfig};

use crate::eikonal::{solve_observed, DistanceMap, FrameField, SolverReport};
use crate::error::{Error, Result};
use crate::grid::{Field2, GridSpec, ScalarVolume};
use crate::io::{self, ArrayMeta};
use crate::lifting::cost::{cost_from_vesselness, cost_w2_from_r2, CostProvenance, CostVolume};
use crate::lifting::{
    build_cake_wavelets, frangi_vesselness, invert, load_grayscale, normalize, orientation_score,
    vesselness_m2, CakeParams, FrangiParams,
};
use crate::manifold::{wrap_angle, ManifoldKind};
use crate::projection::{pixel_to_w2, pullback_cost, PlaneCalibration};
use crate::tracking::{pixel_path, Backtracker, GeodesicTrack};

pub const VESSELNESS_FILE: &str = "vesselness.f32";
pub const COST_FILE: &str = "cost.f32";
pub const DISTANCE_FILE: &str = "distance.f32";
pub const TRACK_DIR: &str = "tracks";
pub const REPORT_FILE: &str = "report.json";
pub const OVERLAY_FILE: &str = "overlay.png";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    pub provenance: CostProvenance,
    pub min: f64,
    pub max: f64,
    /// Fraction of nodes backed by image data (1 on M2).
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackSummary {
    pub index: usize,
    pub tip_pose: PixelPose,
    /// Tip in manifold coordinates; NaN if the pose could not be mapped.
    pub tip: [f64; 3],
    pub reached: bool,
    pub status: String,
    pub file: Option<String>,
    pub samples: usize,
    pub finsler_length: f64,
    pub w_tip: f64,
    pub cusps: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: PipelineConfig,
    pub image_size: [usize; 2],
    pub calibration: PlaneCalibration,
    pub seed: [f64; 3],
    pub cost: Option<CostSummary>,
    pub solver: Option<SolverReport>,
    pub tracks: Vec<TrackSummary>,
    pub timings: Vec<StageTiming>,
    /// Solver converged and every tip was backtracked to the seed.
    pub converged: bool,
}

/// Result of backtracking all configured tips.
#[derive(Debug, Clone)]
pub struct TrackSet {
    pub tracks: Vec<Option<GeodesicTrack>>,
    pub summaries: Vec<TrackSummary>,
}

impl TrackSet {
    pub fn all_reached(&self) -> bool {
        self.summaries.iter().all(|s| s.reached)
    }
}

/// A validated configuration together with the loaded image and its plane
/// calibration.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub config: PipelineConfig,
    pub image: Field2,
    pub calibration: PlaneCalibration,
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let image = load_grayscale(&config.image)?;
        let calibration =
            PlaneCalibration::fit_field_of_view(image.width, image.height, &config.camera);
        Ok(Self {
            config,
            image,
            calibration,
        })
    }

    pub fn output_path(&self, name: &str) -> PathBuf {
        self.config.output.join(name)
    }

    pub fn track_path(&self, index: usize) -> PathBuf {
        self.config
            .output
            .join(TRACK_DIR)
            .join(format!("track_{index:02}.csv"))
    }

    pub fn m2_grid(&self) -> Result<GridSpec> {
        self.calibration.m2_grid(
            self.image.width,
            self.image.height,
            self.config.grid.n_theta,
        )
    }

    pub fn w2_grid(&self) -> Result<GridSpec> {
        let g = &self.config.grid;
        self.calibration.w2_grid(
            self.image.width,
            self.image.height,
            g.n_alpha,
            g.n_beta,
            g.n_phi,
            &self.config.camera,
        )
    }

    pub fn target_grid(&self) -> Result<GridSpec> {
        match self.config.manifold {
            ManifoldKind::M2 => self.m2_grid(),
            ManifoldKind::W2 => self.w2_grid(),
        }
    }

    /// Manifold coordinates of a pixel pose.
    pub fn pose(&self, p: &PixelPose) -> Result<[f64; 3]> {
        let theta = wrap_angle(p.theta_deg.to_radians());
        match self.config.manifold {
            ManifoldKind::M2 => {
                let [x, y] = self.calibration.to_plane(p.col, p.row);
                Ok([x, y, theta])
            }
            ManifoldKind::W2 => {
                Ok(
                    pixel_to_w2(&self.calibration, p.col, p.row, theta, &self.config.camera)?
                        .coords(),
                )
            }
        }
    }

    /// Vessel-enhancing preprocessing shared by both filters: bright vessels
    /// on a dark background in `[0, 1]`.
    fn preprocessed(&self) -> Field2 {
        let f = normalize(&self.image);
        if self.config.cost.dark_vessels {
            invert(&f)
        } else {
            f
        }
    }

    fn lift_inner(&self) -> Result<ScalarVolume> {
        let c = &self.config.cost;
        let grid = self.m2_grid()?;
        let f = self.preprocessed();
        let vol = match c.source {
            CostSource::CrossingPreserving => {
                let psi = build_cake_wavelets(CakeParams::default())?;
                let u = orientation_score(&f, &psi)?;
                vesselness_m2(&u, &c.scales)?
                    .normalized()
                    .to_volume(&grid)?
            }
            CostSource::FrangiR2 => {
                let params = FrangiParams {
                    scales: c.scales.clone(),
                    ..FrangiParams::default()
                };
                let v = frangi_vesselness(&f, &params)?;
                let m = v.max();
                let scale = if m > 0.0 { 1.0 / m } else { 0.0 };
                let mut data = vec![0.0; grid.len()];
                for (idx, d) in data.iter_mut().enumerate() {
                    let [i, j, _] = grid.unravel(idx);
                    *d = scale * v.get(i, j);
                }
                ScalarVolume::from_data(grid, data)?
            }
            CostSource::External => {
                return Err(Error::BadConfig(
                    "the external cost source bypasses lifting".into(),
                ))
            }
        }
        .quantized();
        let meta = ArrayMeta::new(
            "vesselness",
            &grid,
            serde_json::json!({
                "source": c.source,
                "scales": c.scales,
                "dark_vessels": c.dark_vessels,
            }),
        );
        io::write_array(&self.output_path(VESSELNESS_FILE), &vol, &meta)?;
        Ok(vol)
    }

    /// Lifts the image to an M2 vesselness volume and writes it.
    pub fn lift(&self) -> Result<ScalarVolume> {
        stage("lift", self.lift_inner())
    }

    fn external_cost(&self, path: &Path) -> Result<CostVolume> {
        let c = &self.config.cost;
        let (vol, meta) = io::read_array(path)?;
        let name = path.display().to_string();
        let cost = if meta.kind == "cost" {
            let cost = CostVolume::new(
                vol,
                CostProvenance::External {
                    path: name,
                    lambda: f64::NAN,
                    p: f64::NAN,
                },
            );
            cost.validate()?;
            cost
        } else {
            if let Some(bad) = vol.data.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    reason: format!("vesselness must be finite and non-negative, found {bad}"),
                });
            }
            cost_from_vesselness(
                &vol,
                c.lambda,
                c.p,
                CostProvenance::External {
                    path: name,
                    lambda: c.lambda,
                    p: c.p,
                },
            )?
        };
        match (cost.grid().manifold, self.config.manifold) {
            (a, b) if a == b => Ok(cost),
            (ManifoldKind::M2, ManifoldKind::W2) => {
                pullback_cost(&cost, &self.w2_grid()?, &self.config.camera)
            }
            _ => Err(Error::BadConfig(
                "an external W2 field cannot drive an M2 run".into(),
            )),
        }
    }

    fn cost_inner(&self, vesselness: Option<&ScalarVolume>) -> Result<(CostVolume, CostSummary)> {
        let c = &self.config.cost;
        let cost = if c.source == CostSource::External {
            let path = c.external.as_ref().expect("validated");
            self.external_cost(path)?
        } else {
            let owned;
            let v = match vesselness {
                Some(v) => v,
                None => {
                    owned = io::read_array(&self.output_path(VESSELNESS_FILE))?.0;
                    &owned
                }
            };
            if v.grid != self.m2_grid()? {
                return Err(Error::BadConfig(
                    "vesselness volume does not match the image grid".into(),
                ));
            }
            let prov = match c.source {
                CostSource::FrangiR2 => CostProvenance::FrangiR2 {
                    lambda: c.lambda,
                    p: c.p,
                },
                _ => CostProvenance::CrossingPreserving {
                    lambda: c.lambda,
                    p: c.p,
                    substitute: true,
                },
            };
            match (self.config.manifold, c.source) {
                (ManifoldKind::M2, _) => cost_from_vesselness(v, c.lambda, c.p, prov)?,
                (ManifoldKind::W2, CostSource::FrangiR2) => {
                    let [nx, ny, _] = v.grid.shape();
                    let planar = Field2::from_fn(nx, ny, |x, y| v.at(x, y, 0));
                    let mut cost = cost_w2_from_r2(
                        &planar,
                        &self.calibration,
                        &self.w2_grid()?,
                        &self.config.camera,
                        c.lambda,
                        c.p,
                    )?;
                    cost.provenance = prov;
                    cost
                }
                (ManifoldKind::W2, _) => {
                    let m2 = cost_from_vesselness(v, c.lambda, c.p, prov)?;
                    pullback_cost(&m2, &self.w2_grid()?, &self.config.camera)?
                }
            }
        };
        let coverage = cost.coverage.as_ref().map_or(1.0, |m| {
            m.iter().filter(|&&b| b).count() as f64 / m.len() as f64
        });
        let cost = CostVolume::new(cost.volume.quantized(), cost.provenance);
        cost.validate()?;
        io::write_cost(&self.output_path(COST_FILE), &cost)?;
        let (min, max) = cost.volume.min_max();
        let summary = CostSummary {
            provenance: cost.provenance.clone(),
            min,
            max,
            coverage,
        };
        Ok((cost, summary))
    }

    /// Builds the cost on the run's manifold and writes it. Without a
    /// vesselness argument the lifted volume is read from the output
    /// directory; the external source reads its own file instead.
    pub fn cost(&self, vesselness: Option<&ScalarVolume>) -> Result<(CostVolume, CostSummary)> {
        stage("cost", self.cost_inner(vesselness))
    }

    fn solve_inner(&self, cost: &CostVolume, frames: Option<&FrameField>) -> Result<DistanceMap> {
        if cost.grid().manifold != self.config.manifold {
            return Err(Error::BadConfig(format!(
                "cost volume lives on {} but the run is configured for {}",
                cost.grid().manifold,
                self.config.manifold
            )));
        }
        let seed = self.pose(&self.config.seed)?;
        let params = self.config.solver_params()?;
        let mut map = solve_observed(cost, seed, &params, frames, None)?;
        map.volume = map.volume.quantized();
        io::write_distance(&self.output_path(DISTANCE_FILE), &map)?;
        Ok(map)
    }

    /// Solves the eikonal equation from the configured seed and writes the
    /// distance map.
    pub fn solve(&self, cost: &CostVolume, frames: Option<&FrameField>) -> Result<DistanceMap> {
        stage("solve", self.solve_inner(cost, frames))
    }

    fn track_inner(
        &self,
        map: &DistanceMap,
        cost: &CostVolume,
        frames: Option<&FrameField>,
    ) -> Result<TrackSet> {
        let metric = self.config.metric()?;
        let bt = match frames {
            Some(f) => Backtracker::with_frames(map, cost, metric, f)?,
            None => Backtracker::new(map, cost, metric)?,
        };
        let dir = self.config.output.join(TRACK_DIR);
        if dir.exists() {
            for entry in fs::read_dir(&dir)? {
                let p = entry?.path();
                if p.extension().is_some_and(|e| e == "csv") {
                    fs::remove_file(p)?;
                }
            }
        }
        fs::create_dir_all(&dir)?;
        let tips: Vec<Result<[f64; 3]>> = self.config.tips.iter().map(|p| self.pose(p)).collect();
        let mapped: Vec<[f64; 3]> = tips
            .iter()
            .map(|t| *t.as_ref().unwrap_or(&[f64::NAN; 3]))
            .collect();
        let results = bt.track_many(&mapped, &self.config.tracking);
        let mut set = TrackSet {
            tracks: Vec::new(),
            summaries: Vec::new(),
        };
        for (index, (pose, (tip, result))) in self
            .config
            .tips
            .iter()
            .zip(tips.into_iter().zip(results))
            .enumerate()
        {
            let result = tip.and(result);
            let (track, reached, status) = match result {
                Ok(t) => (Some(t), true, "reached".to_string()),
                Err(e) => {
                    let status = e.to_string();
                    match e {
                        Error::Stalled { partial, .. } | Error::NotReached { partial, .. } => {
                            (Some(*partial), false, status)
                        }
                        _ => (None, false, status),
                    }
                }
            };
            let file = match &track {
                Some(t) => {
                    let path = self.track_path(index);
                    io::write_track_csv(&path, t)?;
                    Some(format!("{TRACK_DIR}/track_{index:02}.csv"))
                }
                None => None,
            };
            set.summaries.push(TrackSummary {
                index,
                tip_pose: *pose,
                tip: mapped[index],
                reached,
                status,
                file,
                samples: track.as_ref().map_or(0, GeodesicTrack::len),
                finsler_length: track.as_ref().map_or(f64::NAN, |t| t.finsler_length),
                w_tip: track.as_ref().map_or(f64::NAN, |t| t.w[0]),
                cusps: track.as_ref().map_or_else(Vec::new, |t| t.cusps.clone()),
            });
            set.tracks.push(track);
        }
        Ok(set)
    }

    /// Backtracks every configured tip and writes one CSV per track. Tips
    /// that fail are reported; partial tracks are still written.
    pub fn track(
        &self,
        map: &DistanceMap,
        cost: &CostVolume,
        frames: Option<&FrameField>,
    ) -> Result<TrackSet> {
        stage("track", self.track_inner(map, cost, frames))
    }

    /// Track CSVs currently in the output directory, in file-name order.
    pub fn read_tracks(&self) -> Result<Vec<GeodesicTrack>> {
        let dir = self.config.output.join(TRACK_DIR);
        if !dir.exists() {
            return Ok(Vec::new());
        }
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        files.retain(|p| p.extension().is_some_and(|e| e == "csv"));
        files.sort();
        files
            .iter()
            .map(|p| io::read_track_csv(p, self.config.manifold))
            .collect()
    }

    fn plot_inner(&self, tracks: &[GeodesicTrack]) -> Result<PathBuf> {
        let paths: Vec<Vec<[f64; 2]>> = tracks
            .iter()
            .map(|t| pixel_path(t, &self.calibration, &self.config.camera))
            .collect();
        let out = self.output_path(OVERLAY_FILE);
        overlay::save_overlay(&self.image, &paths, &out)?;
        Ok(out)
    }

    /// Draws the tracks over the input image.
    pub fn plot(&self, tracks: &[GeodesicTrack]) -> Result<PathBuf> {
        stage("plot", self.plot_inner(tracks))
    }

    pub fn write_report(&self, report: &RunReport) -> Result<()> {
        fs::create_dir_all(&self.config.output)?;
        fs::write(
            self.output_path(REPORT_FILE),
            serde_json::to_string_pretty(report)?,
        )?;
        Ok(())
    }
}

/// Runs lift, cost, solve, track and plot, then writes `report.json`.
pub fn run_pipeline(config: PipelineConfig) -> Result<RunReport> {
    let pipe = Pipeline::new(config)?;
    fs::create_dir_all(&pipe.config.output)?;
    let mut timings = Vec::new();
    let mut timed = |name: &str, start: Instant| {
        timings.push(StageTiming {
            stage: name.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        })
    };

    let t = Instant::now();
    let vesselness = match pipe.config.cost.source {
        CostSource::External => None,
        _ => Some(pipe.lift()?),
    };
    timed("lift", t);

    let t = Instant::now();
    let (cost, cost_summary) = pipe.cost(vesselness.as_ref())?;
    drop(vesselness);
    timed("cost", t);

    let t = Instant::now();
    let frames = stage("solve", FrameField::new(cost.grid()))?;
    let map = pipe.solve(&cost, Some(&frames))?;
    timed("solve", t);

    let t = Instant::now();
    let set = pipe.track(&map, &cost, Some(&frames))?;
    timed("track", t);

    let t = Instant::now();
    let drawn: Vec<GeodesicTrack> = set.tracks.iter().flatten().cloned().collect();
    pipe.plot(&drawn)?;
    timed("plot", t);

    let solver = map.report.clone();
    let converged = solver.as_ref().is_some_and(|r| r.converged) && set.all_reached();
    let report = RunReport {
        image_size: [pipe.image.width, pipe.image.height],
        calibration: pipe.calibration,
        seed: map.seed,
        cost: Some(cost_summary),
        solver,
        tracks: set.summaries,
        timings,
        converged,
        config: pipe.config.clone(),
    };
    pipe.write_report(&report)?;
    Ok(report)
}
