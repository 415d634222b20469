//! On-disk formats.
//!
//! Arrays are raw little-endian `f32` in C order (axis 1, axis 2,
//! orientation) with a JSON sidecar next to them: `cost.f32` pairs with
//! `cost.json`. Tracks are CSV with columns `t, c1, c2, c3, u1, u2, u3, W`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::eikonal::DistanceMap;
use crate::error::{Error, Result};
use crate::grid::{Axis, GridSpec, ScalarVolume};
use crate::lifting::cost::{CostProvenance, CostVolume};
use crate::manifold::ManifoldKind;
use crate::tracking::{detect_cusps, GeodesicTrack};

pub const DTYPE: &str = "float32-le";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayMeta {
    /// What the array holds, e.g. `cost`, `distance`, `vesselness`.
    pub kind: String,
    pub dtype: String,
    pub manifold: ManifoldKind,
    pub shape: [usize; 3],
    pub axis_names: [String; 3],
    /// First and last node coordinate per axis.
    pub axis_ranges: [[f64; 2]; 3],
    pub axis_steps: [f64; 3],
    pub periodic: [bool; 3],
    #[serde(default)]
    pub provenance: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<[f64; 3]>,
}

impl ArrayMeta {
    pub fn new(kind: &str, grid: &GridSpec, provenance: serde_json::Value) -> Self {
        let names = grid.manifold.axis_names();
        Self {
            kind: kind.to_string(),
            dtype: DTYPE.to_string(),
            manifold: grid.manifold,
            shape: grid.shape(),
            axis_names: names.map(str::to_string),
            axis_ranges: grid.axes.map(|a| [a.start, a.coord(a.n - 1)]),
            axis_steps: grid.spacing(),
            periodic: grid.axes.map(|a| a.periodic),
            provenance,
            seed: None,
        }
    }

    pub fn grid(&self) -> Result<GridSpec> {
        let axes = std::array::from_fn(|k| Axis {
            n: self.shape[k],
            start: self.axis_ranges[k][0],
            step: self.axis_steps[k],
            periodic: self.periodic[k],
        });
        GridSpec::new(self.manifold, axes)
    }
}

/// `dir/name.f32` -> `dir/name.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn require(path: &Path, expected: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingInput {
            path: path.to_path_buf(),
            expected: expected.to_string(),
        })
    }
}

/// Writes `vol` as `f32`; values are rounded, so round-trips are exact for
/// volumes that are already `f32`-representable.
pub fn write_array(path: &Path, vol: &ScalarVolume, meta: &ArrayMeta) -> Result<()> {
    if meta.shape != vol.grid.shape() {
        return Err(format_err(path, "sidecar shape does not match the data"));
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let bytes: Vec<u8> = vol
        .data
        .iter()
        .flat_map(|&v| (v as f32).to_le_bytes())
        .collect();
    fs::write(path, bytes)?;
    fs::write(sidecar_path(path), serde_json::to_string_pretty(meta)?)?;
    Ok(())
}

pub fn read_array(path: &Path) -> Result<(ScalarVolume, ArrayMeta)> {
    require(path, "raw little-endian f32 array")?;
    let side = sidecar_path(path);
    require(&side, "JSON sidecar describing the array")?;
    let meta: ArrayMeta = serde_json::from_str(&fs::read_to_string(&side)?)?;
    if meta.dtype != DTYPE {
        return Err(format_err(
            &side,
            format!("unsupported dtype {}", meta.dtype),
        ));
    }
    let grid = meta.grid()?;
    let bytes = fs::read(path)?;
    if bytes.len() != 4 * grid.len() {
        return Err(format_err(
            path,
            format!(
                "expected {} bytes for shape {:?}, found {}",
                4 * grid.len(),
                meta.shape,
                bytes.len()
            ),
        ));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok((ScalarVolume::from_data(grid, data)?, meta))
}

pub fn write_cost(path: &Path, cost: &CostVolume) -> Result<()> {
    let meta = ArrayMeta::new("cost", cost.grid(), serde_json::to_value(&cost.provenance)?);
    write_array(path, &cost.volume, &meta)
}

/// Reads a cost volume and checks that it is finite and strictly positive.
pub fn read_cost(path: &Path) -> Result<CostVolume> {
    let (volume, meta) = read_array(path)?;
    let provenance = if meta.provenance.is_null() {
        CostProvenance::External {
            path: path.display().to_string(),
            lambda: f64::NAN,
            p: f64::NAN,
        }
    } else {
        serde_json::from_value(meta.provenance)?
    };
    let cost = CostVolume::new(volume, provenance);
    cost.validate()?;
    Ok(cost)
}

/// Writes a distance map; the solver report goes to the sidecar without its
/// wall-clock time so that reruns produce identical files.
pub fn write_distance(path: &Path, map: &DistanceMap) -> Result<()> {
    let report = match &map.report {
        Some(r) => {
            let mut r = r.clone();
            r.seconds = 0.0;
            serde_json::to_value(r)?
        }
        None => serde_json::Value::Null,
    };
    let mut meta = ArrayMeta::new(
        "distance",
        map.grid(),
        serde_json::json!({ "solver": report }),
    );
    meta.seed = Some(map.seed);
    write_array(path, &map.volume, &meta)
}

pub fn read_distance(path: &Path) -> Result<DistanceMap> {
    let (volume, meta) = read_array(path)?;
    let seed = meta
        .seed
        .ok_or_else(|| format_err(&sidecar_path(path), "distance map sidecar lacks a seed"))?;
    let (seed_index, _) = volume.grid.nearest_node(seed)?;
    let report = meta
        .provenance
        .get("solver")
        .filter(|v| !v.is_null())
        .map(|v| serde_json::from_value(v.clone()))
        .transpose()?;
    Ok(DistanceMap {
        volume,
        seed,
        seed_index,
        report,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct TrackRow {
    t: f64,
    c1: f64,
    c2: f64,
    c3: f64,
    u1: f64,
    u2: f64,
    u3: f64,
    #[serde(rename = "W")]
    w: f64,
}

pub fn write_track_csv(path: &Path, track: &GeodesicTrack) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut wr = csv::Writer::from_path(path).map_err(|e| format_err(path, e.to_string()))?;
    for i in 0..track.len() {
        let (p, u) = (track.points[i], track.u[i]);
        wr.serialize(TrackRow {
            t: track.t[i],
            c1: p[0],
            c2: p[1],
            c3: p[2],
            u1: u[0],
            u2: u[1],
            u3: u[2],
            w: track.w[i],
        })
        .map_err(|e| format_err(path, e.to_string()))?;
    }
    wr.flush()?;
    Ok(())
}

/// Reads a track CSV. The length is not stored, so it is left at NaN;
/// cusps are recomputed from `u1`.
pub fn read_track_csv(path: &Path, manifold: ManifoldKind) -> Result<GeodesicTrack> {
    require(path, "track CSV with columns t,c1,c2,c3,u1,u2,u3,W")?;
    let mut rd = csv::Reader::from_path(path).map_err(|e| format_err(path, e.to_string()))?;
    let mut track = GeodesicTrack {
        manifold,
        points: Vec::new(),
        u: Vec::new(),
        t: Vec::new(),
        w: Vec::new(),
        finsler_length: f64::NAN,
        cusps: Vec::new(),
    };
    for row in rd.deserialize() {
        let r: TrackRow = row.map_err(|e| format_err(path, e.to_string()))?;
        track.points.push([r.c1, r.c2, r.c3]);
        track.u.push([r.u1, r.u2, r.u3]);
        track.t.push(r.t);
        track.w.push(r.w);
    }
    track.cusps = detect_cusps(&track);
    Ok(track)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eikonal::{solve, SolverParams};
    use crate::metric::{MetricParams, Model};

    #[test]
    fn array_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let g = GridSpec::w2(5, (-0.4, 0.5), 4, (-0.3, 0.3), 6).unwrap();
        let v = ScalarVolume::from_fn(g, |c| 1.0 + c[0].sin() * c[2].cos()).quantized();
        let path = dir.path().join("a.f32");
        write_array(
            &path,
            &v,
            &ArrayMeta::new("test", &g, serde_json::Value::Null),
        )
        .unwrap();
        let (back, meta) = read_array(&path).unwrap();
        assert_eq!(back.grid, g);
        assert_eq!(meta.kind, "test");
        let bits = |x: &ScalarVolume| x.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&v));
        let path2 = dir.path().join("b.f32");
        write_array(&path2, &back, &meta).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
    }

    #[test]
    fn missing_and_malformed_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("none.f32");
        match read_array(&path) {
            Err(Error::MissingInput { path: p, .. }) => assert_eq!(p, path),
            other => panic!("{other:?}"),
        }
        let g = GridSpec::m2(4, (0.0, 1.0), 4, (0.0, 1.0), 4).unwrap();
        let v = ScalarVolume::filled(g, 1.0);
        write_array(&path, &v, &ArrayMeta::new("x", &g, serde_json::Value::Null)).unwrap();
        fs::write(&path, [0u8; 7]).unwrap();
        assert!(matches!(read_array(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn cost_validation_on_read() {
        let dir = tempfile::tempdir().unwrap();
        let g = GridSpec::m2(4, (0.0, 1.0), 4, (0.0, 1.0), 4).unwrap();
        let mut c = CostVolume::constant(g, 0.5);
        let path = dir.path().join("c.f32");
        write_cost(&path, &c).unwrap();
        assert_eq!(read_cost(&path).unwrap(), c);
        c.volume.data[3] = -1.0;
        write_cost(&path, &c).unwrap();
        assert!(matches!(read_cost(&path), Err(Error::BadConfig(_))));
    }

    #[test]
    fn distance_and_track_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = GridSpec::m2(17, (-1.0, 1.0), 17, (-1.0, 1.0), 16).unwrap();
        let cost = CostVolume::constant(g, 1.0);
        let m = MetricParams::new(Model::ForwardGear, ManifoldKind::M2, 2.0, 0.0).unwrap();
        let mut map = solve(&cost, [0.0, 0.0, 0.0], &SolverParams::new(m)).unwrap();
        map.volume = map.volume.quantized();
        let path = dir.path().join("w.f32");
        write_distance(&path, &map).unwrap();
        let back = read_distance(&path).unwrap();
        assert_eq!(back.volume, map.volume);
        assert_eq!(back.seed_index, map.seed_index);
        let mut report = map.report.clone().unwrap();
        report.seconds = 0.0;
        assert_eq!(back.report, Some(report));

        let tr = crate::tracking::backtrack(&map, &cost, &m, [0.5, 0.25, 0.4], &Default::default())
            .unwrap();
        let csv_path = dir.path().join("tracks/t0.csv");
        write_track_csv(&csv_path, &tr).unwrap();
        let header = fs::read_to_string(&csv_path).unwrap();
        assert!(header.starts_with("t,c1,c2,c3,u1,u2,u3,W\n"));
        let back = read_track_csv(&csv_path, ManifoldKind::M2).unwrap();
        assert_eq!(back.points, tr.points);
        assert_eq!(back.u, tr.u);
        assert_eq!(back.t, tr.t);
        assert_eq!(back.w, tr.w);
        assert_eq!(back.cusps, tr.cusps);
    }
}
