use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field2, GridSpec, ScalarVolume};
use crate::manifold::ManifoldKind;
use crate::projection::{pi, CameraGeometry, PlaneCalibration};

/// Where a cost volume came from; written to the array sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostProvenance {
    Constant,
    Analytic {
        description: String,
    },
    /// Orientation-score vesselness (substitute filter, see `lifting::vesselness`).
    CrossingPreserving {
        lambda: f64,
        p: f64,
        substitute: bool,
    },
    FrangiR2 {
        lambda: f64,
        p: f64,
    },
    External {
        path: String,
        lambda: f64,
        p: f64,
    },
    PulledBack {
        source: Box<CostProvenance>,
    },
}

/// Strictly positive cost on an M2 or W2 grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVolume {
    pub volume: ScalarVolume,
    pub provenance: CostProvenance,
    /// `false` where a W2 node has no preimage in the source data.
    pub coverage: Option<Vec<bool>>,
}

impl CostVolume {
    pub fn new(volume: ScalarVolume, provenance: CostProvenance) -> Self {
        Self {
            volume,
            provenance,
            coverage: None,
        }
    }

    pub fn constant(grid: GridSpec, value: f64) -> Self {
        Self::new(ScalarVolume::filled(grid, value), CostProvenance::Constant)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.volume.grid
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(bad) = self
            .volume
            .data
            .iter()
            .find(|v| !(v.is_finite() && **v > 0.0))
        {
            return Err(Error::BadConfig(format!(
                "cost must be finite and strictly positive, found {bad}"
            )));
        }
        Ok(())
    }

    pub fn min(&self) -> f64 {
        self.volume.min_max().0
    }
}

fn check_cost_params(lambda: f64, p: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::BadConfig(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::BadConfig(format!(
            "exponent p must be positive, got {p}"
        )));
    }
    Ok(())
}

#[inline]
pub fn cost_value(v: f64, lambda: f64, p: f64) -> f64 {
    1.0 / (1.0 + lambda * v.abs().powf(p))
}

/// `C = 1 / (1 + lambda |V|^p)` pointwise.
pub fn cost_from_vesselness(
    v: &ScalarVolume,
    lambda: f64,
    p: f64,
    provenance: CostProvenance,
) -> Result<CostVolume> {
    check_cost_params(lambda, p)?;
    let data = v.data.iter().map(|&x| cost_value(x, lambda, p)).collect();
    Ok(CostVolume::new(
        ScalarVolume::from_data(v.grid, data)?,
        provenance,
    ))
}

/// Planar cost field from a planar vesselness.
pub fn cost_r2(v: &Field2, lambda: f64, p: f64) -> Result<Field2> {
    check_cost_params(lambda, p)?;
    Ok(Field2 {
        width: v.width,
        height: v.height,
        data: v.data.iter().map(|&x| cost_value(x, lambda, p)).collect(),
    })
}

/// Orientation-independent W2 cost `C(alpha, beta, phi) = C_R2(pi(alpha, beta))`,
/// sampling the planar cost bilinearly at the projected pixel position.
pub fn cost_w2_from_r2(
    v_r2: &Field2,
    cal: &PlaneCalibration,
    grid_w2: &GridSpec,
    geom: &CameraGeometry,
    lambda: f64,
    p: f64,
) -> Result<CostVolume> {
    if grid_w2.manifold != ManifoldKind::W2 {
        return Err(Error::BadConfig("expected a W2 grid".into()));
    }
    let c_r2 = cost_r2(v_r2, lambda, p)?;
    let [na, nb, nphi] = grid_w2.shape();
    let mut data = vec![1.0; grid_w2.len()];
    let mut coverage = vec![false; grid_w2.len()];
    for i in 0..na {
        let alpha = grid_w2.axes[0].coord(i);
        for j in 0..nb {
            let beta = grid_w2.axes[1].coord(j);
            let sample = pi(alpha, beta, geom).ok().and_then(|[x, y]| {
                let [col, row] = cal.to_pixel(x, y);
                c_r2.sample(col, row)
            });
            if let Some(c) = sample {
                for k in 0..nphi {
                    let idx = grid_w2.index(i, j, k);
                    data[idx] = c;
                    coverage[idx] = true;
                }
            }
        }
    }
    Ok(CostVolume {
        volume: ScalarVolume::from_data(*grid_w2, data)?,
        provenance: CostProvenance::FrangiR2 { lambda, p },
        coverage: Some(coverage),
    })
}
