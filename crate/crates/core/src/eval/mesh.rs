use std::path::Path;

use lin_alg::f32::Vec3 as McVec3;
use mcubes::{MarchingCubes, MeshSide};
use rayon::prelude::*;

use crate::dataset::AnalyticField;
use crate::error::{Error, Result};
use crate::grid::{Aabb, DenseGrid, FactorizedDensityGrid};
use crate::io::atomic_write;
use crate::math::{cast3, cross, sub, Vec3};
use crate::scalar::Scalar;

/// Anything that can be sampled for activated density in world space.
pub trait DensityField: Sync {
    fn bounds(&self) -> Aabb<f64>;
    fn density(&self, p: Vec3<f64>) -> f64;
}

impl DensityField for AnalyticField {
    fn bounds(&self) -> Aabb<f64> {
        self.aabb
    }

    fn density(&self, p: Vec3<f64>) -> f64 {
        self.density_at(p)
    }
}

impl<T: Scalar> DensityField for FactorizedDensityGrid<T> {
    fn bounds(&self) -> Aabb<f64> {
        let b = &self.geometry.aabb;
        Aabb {
            min: b.min.map(|v| v.as_f64()),
            max: b.max.map(|v| v.as_f64()),
        }
    }

    fn density(&self, p: Vec3<f64>) -> f64 {
        self.eval_density(cast3(p)).as_f64()
    }
}

/// Triangle soup in world coordinates, counter-clockwise seen from outside.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriangleMesh {
    pub triangles: Vec<[[f32; 3]; 3]>,
}

impl TriangleMesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn vertices(&self) -> impl Iterator<Item = &[f32; 3]> {
        self.triangles.iter().flatten()
    }

    /// Positive for a closed surface whose faces point outward.
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|v| v.map(|x| x as f64));
                crate::math::dot3(a, cross(b, c))
            })
            .sum::<f64>()
            / 6.0
    }

    /// Binary STL: 80-byte header, triangle count, then per triangle a unit
    /// normal, three vertices and a zero attribute word.
    pub fn to_stl(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(84 + 50 * self.triangles.len());
        let mut header = [0u8; 80];
        let tag = b"fewtensorf density iso-surface";
        header[..tag.len()].copy_from_slice(tag);
        out.extend_from_slice(&header);
        out.extend_from_slice(&(self.triangles.len() as u32).to_le_bytes());
        for t in &self.triangles {
            let [a, b, c] = t.map(|v| v.map(|x| x as f64));
            let n = cross(sub(b, a), sub(c, a));
            let len = crate::math::norm(n);
            let n = if len > 0.0 { n.map(|x| x / len) } else { [0.0; 3] };
            for x in n {
                out.extend_from_slice(&(x as f32).to_le_bytes());
            }
            for v in t {
                for x in v {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
            out.extend_from_slice(&0u16.to_le_bytes());
        }
        out
    }

    pub fn write_stl(&self, path: &Path) -> Result<()> {
        atomic_write(path, &self.to_stl())
    }
}

/// Samples `field` on a node grid spanning its bounds, `x`-fastest.
pub fn sample_field(field: &dyn DensityField, resolution: [usize; 3], cap: usize) -> Result<DenseGrid<f32>> {
    DenseGrid::<f32>::check_cap(resolution, 1, cap)?;
    if resolution.iter().any(|&n| n < 2) {
        return Err(Error::Geometry(format!("mesh resolution {resolution:?} needs at least 2 nodes per axis")));
    }
    let b = field.bounds();
    let [nx, ny, nz] = resolution;
    let coord = |a: usize, i: usize| b.min[a] + (b.max[a] - b.min[a]) * i as f64 / (resolution[a] - 1) as f64;
    // Stored k-fastest like every other DenseGrid; the mesher repacks.
    let data: Vec<f32> = (0..nx)
        .into_par_iter()
        .flat_map_iter(|i| {
            (0..ny).flat_map(move |j| (0..nz).map(move |k| field.density([coord(0, i), coord(1, j), coord(2, k)]) as f32))
        })
        .collect();
    Ok(DenseGrid::new(resolution, data))
}

/// Marching-cubes iso-surface of the activated density at `iso`.
///
/// Vertices are linearly interpolated along cube edges of the node grid
/// spanning the field's bounds. A field that never crosses `iso` gives an
/// empty mesh and a warning.
pub fn export_mesh(field: &dyn DensityField, iso: f64, resolution: [usize; 3], cap: usize) -> Result<TriangleMesh> {
    let dense = sample_field(field, resolution, cap)?;
    let [nx, ny, nz] = resolution;
    let mut values = vec![0f32; dense.data.len()];
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                values[i + j * nx + k * nx * ny] = dense.get([i, j, k]);
            }
        }
    }
    let b = field.bounds();
    let size = [0, 1, 2].map(|a| (b.max[a] - b.min[a]) as f32);
    let mc = MarchingCubes::new(
        (nx, ny, nz),
        (size[0], size[1], size[2]),
        ((nx - 1) as f32, (ny - 1) as f32, (nz - 1) as f32),
        McVec3::new(b.min[0] as f32, b.min[1] as f32, b.min[2] as f32),
        values,
        iso as f32,
    )?;
    // The case table treats values below iso as inside; density is high
    // inside, so the "inside" winding faces away from the dense region.
    let raw = mc.generate(MeshSide::InsideOnly);
    let triangles: Vec<[[f32; 3]; 3]> = raw
        .indices
        .chunks_exact(3)
        .map(|t| {
            [t[0], t[1], t[2]].map(|i| {
                let p = raw.vertices[i].posit;
                [p.x, p.y, p.z]
            })
        })
        .collect();
    if triangles.is_empty() {
        log::warn!("density never crosses iso {iso}; mesh is empty");
    }
    Ok(TriangleMesh { triangles })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::SceneKind;

    #[test]
    fn zero_field_gives_empty_mesh_with_header() {
        let f = AnalyticField::new(SceneKind::Sphere, 0.0);
        let m = export_mesh(&f, 1.0, [16; 3], 1 << 20).unwrap();
        assert!(m.is_empty());
        let stl = m.to_stl();
        assert_eq!(stl.len(), 84);
        assert_eq!(&stl[80..84], &[0, 0, 0, 0]);
    }

    #[test]
    fn sphere_mesh_is_outward_and_on_radius() {
        let f = AnalyticField::new(SceneKind::Sphere, 50.0);
        let res = 32;
        let m = export_mesh(&f, 25.0, [res; 3], 1 << 20).unwrap();
        assert!(!m.is_empty());
        let h = 3.0 / (res - 1) as f64;
        for v in m.vertices() {
            let r = v.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
            assert!((r - 0.5).abs() <= 2.0 * h, "r = {r}");
        }
        let vol = m.signed_volume();
        let exact = 4.0 / 3.0 * std::f64::consts::PI * 0.125;
        assert!(vol > 0.0 && (vol - exact).abs() < 0.2 * exact, "{vol}");
        assert_eq!(m.to_stl().len(), 84 + 50 * m.triangles.len());
    }

    #[test]
    fn cap_is_enforced() {
        let f = AnalyticField::new(SceneKind::Sphere, 50.0);
        assert!(matches!(
            export_mesh(&f, 25.0, [64; 3], 1000),
            Err(Error::DenseTooLarge { .. })
        ));
    }
}
