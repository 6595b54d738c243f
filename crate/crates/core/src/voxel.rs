//! Voxel hashing and per-point input features.
//!
//! The feature vector gives the point-wise network a view of its local
//! geometry, standing in for the receptive field of a sparse convolution.

use std::collections::HashMap;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::matrix::Mat;

pub type VoxelKey = [i64; 3];

#[derive(Debug, Clone, Default)]
struct VoxelStats {
    members: Vec<u32>,
    sum: [f64; 3],
    sum_sq: [f64; 3],
}

/// Hash map from voxel coordinate `floor(p / voxel_size)` to member points.
#[derive(Debug, Clone)]
pub struct VoxelGrid {
    voxel_size: f64,
    point_keys: Vec<VoxelKey>,
    voxels: HashMap<VoxelKey, VoxelStats>,
}

impl VoxelGrid {
    pub fn build(cloud: &PointCloud, voxel_size: f64) -> Result<Self> {
        if !(voxel_size.is_finite() && voxel_size > 0.0) {
            return Err(Error::Argument(format!("voxel size {voxel_size} must be positive")));
        }
        let mut voxels: HashMap<VoxelKey, VoxelStats> = HashMap::new();
        let mut point_keys = Vec::with_capacity(cloud.len());
        for (i, p) in cloud.points().iter().enumerate() {
            let c = [p.x as f64, p.y as f64, p.z as f64];
            // `as` saturates, so absurd coordinates still land in some voxel.
            let key = c.map(|v| (v / voxel_size).floor() as i64);
            let stats = voxels.entry(key).or_default();
            stats.members.push(i as u32);
            for ((s, q), v) in stats.sum.iter_mut().zip(&mut stats.sum_sq).zip(c) {
                *s += v;
                *q += v * v;
            }
            point_keys.push(key);
        }
        Ok(Self {
            voxel_size,
            point_keys,
            voxels,
        })
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn num_points(&self) -> usize {
        self.point_keys.len()
    }

    pub fn num_voxels(&self) -> usize {
        self.voxels.len()
    }

    pub fn key_of(&self, point: usize) -> VoxelKey {
        self.point_keys[point]
    }

    /// Point indices of a voxel in insertion order.
    pub fn members(&self, key: &VoxelKey) -> &[u32] {
        self.voxels.get(key).map_or(&[], |v| &v.members)
    }

    pub fn centroid(&self, key: &VoxelKey) -> Option<[f64; 3]> {
        let v = self.voxels.get(key)?;
        let n = v.members.len() as f64;
        Some(v.sum.map(|s| s / n))
    }

    /// Count, sum and sum of squares over the 3×3×3 block around `key`,
    /// visited in a fixed order.
    fn neighborhood(&self, key: VoxelKey) -> (usize, [f64; 3], [f64; 3]) {
        let mut count = 0;
        let mut sum = [0.0; 3];
        let mut sum_sq = [0.0; 3];
        for dx in -1..=1i64 {
            for dy in -1..=1i64 {
                for dz in -1..=1i64 {
                    let k = [
                        key[0].saturating_add(dx),
                        key[1].saturating_add(dy),
                        key[2].saturating_add(dz),
                    ];
                    if let Some(v) = self.voxels.get(&k) {
                        count += v.members.len();
                        for axis in 0..3 {
                            sum[axis] += v.sum[axis];
                            sum_sq[axis] += v.sum_sq[axis];
                        }
                    }
                }
            }
        }
        (count, sum, sum_sq)
    }
}

/// Width of the per-point feature vector.
pub const FEATURE_WIDTH: usize = 19;

/// Column layout of [`featurize`] output.
pub mod feature {
    use std::ops::Range;
    /// Sensor-frame coordinates times [`super::COORD_SCALE`].
    pub const RAW: Range<usize> = 0..3;
    /// Point minus voxel centroid, in voxel units.
    pub const CENTERED: Range<usize> = 3..6;
    pub const INTENSITY: usize = 6;
    /// Range times [`super::COORD_SCALE`].
    pub const RANGE: usize = 7;
    /// `ln(1 + points in voxel)`.
    pub const OCCUPANCY: usize = 8;
    /// Voxel centroid minus voxel center, in voxel units.
    pub const CENTROID_OFFSET: Range<usize> = 9..12;
    /// `ln(1 + points in the 27-voxel neighborhood)`.
    pub const NEIGHBOR_COUNT: usize = 12;
    /// Neighborhood centroid minus point, in voxel units.
    pub const NEIGHBOR_OFFSET: Range<usize> = 13..16;
    /// Per-axis standard deviation over the neighborhood, in voxel units.
    pub const NEIGHBOR_SPREAD: Range<usize> = 16..19;
}

pub const COORD_SCALE: f64 = 0.1;

/// Builds the `N × FEATURE_WIDTH` input matrix for a cloud and the grid built
/// over it.
pub fn featurize(cloud: &PointCloud, grid: &VoxelGrid) -> Result<Mat> {
    if cloud.is_empty() {
        return Err(Error::Argument("cannot featurize an empty cloud".into()));
    }
    if grid.num_points() != cloud.len() {
        return Err(Error::Argument(format!(
            "grid indexes {} points, cloud has {}",
            grid.num_points(),
            cloud.len()
        )));
    }
    let s = grid.voxel_size;
    let mut out = Mat::zeros(cloud.len(), FEATURE_WIDTH);
    for (i, p) in cloud.points().iter().enumerate() {
        let c = [p.x as f64, p.y as f64, p.z as f64];
        let key = grid.point_keys[i];
        let voxel = &grid.voxels[&key];
        let occ = voxel.members.len() as f64;
        let centroid = voxel.sum.map(|v| v / occ);
        let (n_count, n_sum, n_sum_sq) = grid.neighborhood(key);
        let n = n_count as f64;

        let row = out.row_mut(i);
        for axis in 0..3 {
            row[feature::RAW.start + axis] = c[axis] * COORD_SCALE;
            row[feature::CENTERED.start + axis] = (c[axis] - centroid[axis]) / s;
            let center = (key[axis] as f64 + 0.5) * s;
            row[feature::CENTROID_OFFSET.start + axis] = (centroid[axis] - center) / s;
            let mean = n_sum[axis] / n;
            row[feature::NEIGHBOR_OFFSET.start + axis] = (mean - c[axis]) / s;
            let var = (n_sum_sq[axis] / n - mean * mean).max(0.0);
            row[feature::NEIGHBOR_SPREAD.start + axis] = var.sqrt() / s;
        }
        row[feature::INTENSITY] = p.intensity as f64;
        row[feature::RANGE] = p.range() * COORD_SCALE;
        row[feature::OCCUPANCY] = occ.ln_1p();
        row[feature::NEIGHBOR_COUNT] = n.ln_1p();
    }
    Ok(out)
}

/// Builds the grid and features in one call.
pub fn featurize_cloud(cloud: &PointCloud, voxel_size: f64) -> Result<Mat> {
    let grid = VoxelGrid::build(cloud, voxel_size)?;
    featurize(cloud, &grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::Point;

    fn cloud(points: &[[f32; 4]]) -> PointCloud {
        PointCloud::new(
            points.iter().map(|p| Point::new(p[0], p[1], p[2], p[3])).collect(),
            None,
        )
        .unwrap()
    }

    #[test]
    fn every_point_in_exactly_one_voxel() {
        let x = cloud(&[[0.1, 0.2, 0.3, 0.0], [-0.1, 0.2, 0.3, 0.0], [0.4, 0.4, 0.4, 0.0], [2.0, -3.5, 1.0, 0.0]]);
        let grid = VoxelGrid::build(&x, 0.5).unwrap();
        assert_eq!(grid.key_of(0), [0, 0, 0]);
        assert_eq!(grid.key_of(1), [-1, 0, 0]);
        assert_eq!(grid.key_of(2), [0, 0, 0]);
        assert_eq!(grid.key_of(3), [4, -7, 2]);
        assert_eq!(grid.num_voxels(), 3);
        let total: usize = [[0, 0, 0], [-1, 0, 0], [4, -7, 2]]
            .iter()
            .map(|k| grid.members(k).len())
            .sum();
        assert_eq!(total, 4);
        assert_eq!(grid.members(&[0, 0, 0]), &[0, 2]);
    }

    #[test]
    fn singleton_voxel_at_origin() {
        let x = cloud(&[[0.0, 0.0, 0.0, 0.5]]);
        let f = featurize_cloud(&x, 1.0).unwrap();
        assert_eq!(f.shape(), (1, FEATURE_WIDTH));
        let row = f.row(0);
        assert!(row[feature::CENTERED].iter().all(|&v| v == 0.0));
        assert_eq!(row[feature::OCCUPANCY].exp_m1().round(), 1.0);
        assert_eq!(row[feature::INTENSITY], 0.5);
        assert_eq!(row[feature::RANGE], 0.0);
        // Centroid sits half a voxel below the center on each axis.
        assert!(row[feature::CENTROID_OFFSET].iter().all(|&v| v == -0.5));
    }

    #[test]
    fn coincident_points_share_features() {
        let x = cloud(&[[1.2, -0.7, 0.3, 0.1], [1.2, -0.7, 0.3, 0.1], [5.0, 5.0, 5.0, 0.9]]);
        let f = featurize_cloud(&x, 0.5).unwrap();
        assert_eq!(f.row(0), f.row(1));
        assert_eq!(f.row(0)[feature::OCCUPANCY].exp_m1().round(), 2.0);
    }

    #[test]
    fn width_is_constant_and_finite() {
        for n in [1usize, 7, 100] {
            let pts: Vec<[f32; 4]> = (0..n)
                .map(|i| [(i as f32 * 0.3).sin() * 4.0, i as f32 * 0.05, 0.1 * i as f32, 0.2])
                .collect();
            let f = featurize_cloud(&cloud(&pts), 0.5).unwrap();
            assert_eq!(f.shape(), (n, FEATURE_WIDTH));
            assert!(f.is_finite());
        }
    }

    #[test]
    fn errors() {
        assert!(featurize_cloud(&PointCloud::default(), 0.5).is_err());
        let x = cloud(&[[0.0; 4]]);
        assert!(VoxelGrid::build(&x, 0.0).is_err());
        let other = cloud(&[[0.0; 4], [1.0; 4]]);
        let grid = VoxelGrid::build(&other, 0.5).unwrap();
        assert!(featurize(&x, &grid).is_err());
    }
}
