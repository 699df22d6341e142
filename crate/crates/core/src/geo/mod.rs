//! Geographic environment: rasters, derived diffusivity and advection fields,
//! bilinear lookup and spherical geometry.

mod fields;
mod grid;
pub mod io;
mod sphere;
mod synthetic;

use std::path::Path;

pub use fields::{
    build_diffusivity, dimensionless_diffusivity, distance_to_land, polyline_tangents, remap_tangents,
    SEA_DECAY_KM, TANGENT_SCALE_KM,
};
pub use grid::{GridSpec, ScalarField, VectorField, DEFAULT_CELL_DEG};
pub use sphere::{
    bearing, destination, displace, great_circle_km, intermediate, local_offset_km, lon_arc_km, midpoint,
    GeoPoint, EARTH_RADIUS_KM,
};
pub use synthetic::{Terrain, TerrainBuilder};

use crate::error::{Error, Result};

/// Immutable fields read by the front simulator.
#[derive(Debug, Clone)]
pub struct Environment {
    pub diffusivity: ScalarField,
    pub coast: VectorField,
    pub river: VectorField,
}

impl Environment {
    pub fn build(altitude: &ScalarField, coasts: &[Vec<GeoPoint>], rivers: &[Vec<GeoPoint>]) -> Result<Self> {
        let d_land = distance_to_land(altitude)?;
        let diffusivity = build_diffusivity(altitude, &d_land)?;
        Ok(Self {
            coast: remap_tangents(coasts, altitude.spec)?,
            river: remap_tangents(rivers, altitude.spec)?,
            diffusivity,
        })
    }

    pub fn from_terrain(terrain: &Terrain) -> Result<Self> {
        Self::build(&terrain.altitude, &terrain.coasts, &terrain.rivers)
    }

    /// Constant dimensionless diffusivity and no advection.
    pub fn homogeneous(spec: GridSpec, nu_l: f64) -> Self {
        Self {
            diffusivity: ScalarField::constant(spec, nu_l),
            coast: VectorField::zeros(spec),
            river: VectorField::zeros(spec),
        }
    }

    pub fn spec(&self) -> GridSpec {
        self.diffusivity.spec
    }

    /// Writes `diffusivity.asc`, `coast_x.asc`, `coast_y.asc`, `river_x.asc`, `river_y.asc`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        io::write_ascii_grid(&dir.join("diffusivity.asc"), &self.diffusivity)?;
        for (name, field) in [("coast", &self.coast), ("river", &self.river)] {
            let spec = field.spec;
            io::write_ascii_grid(&dir.join(format!("{name}_x.asc")), &ScalarField::new(spec, field.vx.clone())?)?;
            io::write_ascii_grid(&dir.join(format!("{name}_y.asc")), &ScalarField::new(spec, field.vy.clone())?)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let diffusivity = io::read_ascii_grid(&dir.join("diffusivity.asc"))?;
        let vector = |name: &str| -> Result<VectorField> {
            let x = io::read_ascii_grid(&dir.join(format!("{name}_x.asc")))?;
            let y = io::read_ascii_grid(&dir.join(format!("{name}_y.asc")))?;
            if x.spec != diffusivity.spec || y.spec != diffusivity.spec {
                return Err(Error::invalid(format!("{name} field grid differs from diffusivity grid")));
            }
            Ok(VectorField {
                spec: x.spec,
                vx: x.values,
                vy: y.values,
            })
        };
        Ok(Self {
            coast: vector("coast")?,
            river: vector("river")?,
            diffusivity,
        })
    }
}
