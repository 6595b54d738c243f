//! Procedural street scenes with per-point labels, used as the clean source
//! domain for desk-scale runs.
//!
//! The sensor sits at the origin, `sensor_height` above a road running along
//! x. Sidewalks flank the road; poles stand on the curb; trees and facades
//! line the far side of the sidewalks; cars park on the road.

use rand::Rng as _;

use crate::augment::Interval;
use crate::cloud::{Point, PointCloud};
use crate::error::{Error, Result};
use crate::labels::{TrainId, BUILDING, CAR, POLE, ROAD, SIDEWALK, TRUNK, VEGETATION};
use crate::rng::{derive_seed, rng, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
}

impl Split {
    fn stream(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Val => 1,
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            _ => Err(Error::Argument(format!("unknown split `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyBenchmark {
    /// Half-length of the street along x, meters.
    pub extent: f64,
    pub sensor_height: f64,
    pub road_half_width: f64,
    pub sidewalk_width: f64,
    pub road_points: usize,
    pub sidewalk_points: usize,
    pub vehicles: usize,
    pub vehicle_points: usize,
    pub buildings: usize,
    pub building_points: usize,
    pub trees: usize,
    pub trunk_points: usize,
    pub crown_points: usize,
    pub poles: usize,
    pub pole_points: usize,
    pub train_scenes: usize,
    pub val_scenes: usize,
}

impl Default for ToyBenchmark {
    fn default() -> Self {
        Self {
            extent: 45.0,
            sensor_height: 1.73,
            road_half_width: 4.0,
            sidewalk_width: 2.5,
            road_points: 260,
            sidewalk_points: 110,
            vehicles: 4,
            vehicle_points: 40,
            buildings: 4,
            building_points: 60,
            trees: 4,
            trunk_points: 12,
            crown_points: 40,
            poles: 3,
            pole_points: 14,
            train_scenes: 16,
            val_scenes: 8,
        }
    }
}

impl ToyBenchmark {
    pub fn validate(&self) -> Result<()> {
        if self.road_points == 0 {
            return Err(Error::Argument("scenes need at least one road point".into()));
        }
        for (name, v) in [
            ("extent", self.extent),
            ("road_half_width", self.road_half_width),
            ("sidewalk_width", self.sidewalk_width),
            ("sensor_height", self.sensor_height),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Argument(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    pub fn scenes(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train_scenes,
            Split::Val => self.val_scenes,
        }
    }
}

struct Scene<'a> {
    cfg: &'a ToyBenchmark,
    rng: Rng,
    points: Vec<Point>,
    labels: Vec<TrainId>,
}

impl Scene<'_> {
    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        Interval::new(lo, hi).sample(&mut self.rng)
    }

    fn side(&mut self) -> f64 {
        if self.rng.gen_bool(0.5) {
            1.0
        } else {
            -1.0
        }
    }

    fn push(&mut self, x: f64, y: f64, z: f64, intensity: (f64, f64), label: TrainId) {
        let i = self.uniform(intensity.0, intensity.1);
        self.points.push(Point::new(x as f32, y as f32, z as f32, i as f32));
        self.labels.push(label);
    }

    /// Street coordinate biased toward the sensor, as LiDAR returns are.
    fn street_x(&mut self) -> f64 {
        let u = self.uniform(0.0, 1.0);
        self.side() * self.cfg.extent * u * u.sqrt()
    }

    fn ground(&self) -> f64 {
        -self.cfg.sensor_height
    }

    fn road(&mut self) {
        let w = self.cfg.road_half_width;
        for _ in 0..self.cfg.road_points {
            let x = self.street_x();
            let y = self.uniform(-w, w);
            let z = self.ground() + self.uniform(-0.03, 0.03);
            self.push(x, y, z, (0.05, 0.35), ROAD);
        }
    }

    fn sidewalks(&mut self) {
        let (w, s) = (self.cfg.road_half_width, self.cfg.sidewalk_width);
        for _ in 0..self.cfg.sidewalk_points {
            let x = self.street_x();
            let y = self.side() * self.uniform(w, w + s);
            let z = self.ground() + 0.15 + self.uniform(-0.03, 0.03);
            self.push(x, y, z, (0.15, 0.45), SIDEWALK);
        }
    }

    fn vehicles(&mut self) {
        let w = self.cfg.road_half_width;
        for _ in 0..self.cfg.vehicles {
            let cx = self.uniform(-self.cfg.extent * 0.8, self.cfg.extent * 0.8);
            let cy = self.side() * self.uniform(1.2, w - 1.0);
            let (len, wid, hgt) = (self.uniform(3.8, 4.8), self.uniform(1.6, 2.0), self.uniform(1.3, 1.7));
            let base = self.ground() + 0.15;
            for _ in 0..self.cfg.vehicle_points {
                // Sides and roof of the box.
                let (x, y, z) = match self.rng.gen_range(0..5) {
                    0 => (self.uniform(-0.5, 0.5) * len, -0.5 * wid, self.uniform(0.0, hgt)),
                    1 => (self.uniform(-0.5, 0.5) * len, 0.5 * wid, self.uniform(0.0, hgt)),
                    2 => (-0.5 * len, self.uniform(-0.5, 0.5) * wid, self.uniform(0.0, hgt)),
                    3 => (0.5 * len, self.uniform(-0.5, 0.5) * wid, self.uniform(0.0, hgt)),
                    _ => (self.uniform(-0.5, 0.5) * len, self.uniform(-0.5, 0.5) * wid, hgt),
                };
                self.push(cx + x, cy + y, base + z, (0.3, 0.9), CAR);
            }
        }
    }

    fn buildings(&mut self) {
        let (w, s) = (self.cfg.road_half_width, self.cfg.sidewalk_width);
        for _ in 0..self.cfg.buildings {
            let cx = self.uniform(-self.cfg.extent, self.cfg.extent);
            let face = self.side() * (w + s + self.uniform(1.0, 4.0));
            let len = self.uniform(8.0, 20.0);
            let height = self.uniform(4.0, 12.0);
            for _ in 0..self.cfg.building_points {
                let x = cx + self.uniform(-0.5, 0.5) * len;
                let y = face + self.uniform(-0.05, 0.05);
                let z = self.ground() + self.uniform(0.0, height);
                self.push(x, y, z, (0.2, 0.6), BUILDING);
            }
        }
    }

    fn trees(&mut self) {
        let (w, s) = (self.cfg.road_half_width, self.cfg.sidewalk_width);
        for _ in 0..self.cfg.trees {
            let cx = self.uniform(-self.cfg.extent * 0.9, self.cfg.extent * 0.9);
            let cy = self.side() * (w + s - self.uniform(0.3, 0.8));
            let trunk_h = self.uniform(1.5, 2.5);
            let crown_r = self.uniform(1.2, 2.2);
            for _ in 0..self.cfg.trunk_points {
                let phi = self.uniform(0.0, std::f64::consts::TAU);
                let z = self.ground() + 0.15 + self.uniform(0.0, trunk_h);
                self.push(cx + 0.15 * phi.cos(), cy + 0.15 * phi.sin(), z, (0.1, 0.5), TRUNK);
            }
            let center_z = self.ground() + 0.15 + trunk_h + crown_r * 0.8;
            for _ in 0..self.cfg.crown_points {
                // Leaves fill the outer shell of the crown.
                let (a, b, c) = (self.uniform(-1.0, 1.0), self.uniform(-1.0, 1.0), self.uniform(-1.0, 1.0));
                let n = (a * a + b * b + c * c).sqrt().max(1e-6);
                let r = crown_r * self.uniform(0.6, 1.0);
                self.push(cx + r * a / n, cy + r * b / n, center_z + r * c / n, (0.0, 0.4), VEGETATION);
            }
        }
    }

    fn poles(&mut self) {
        let w = self.cfg.road_half_width;
        for _ in 0..self.cfg.poles {
            let cx = self.uniform(-self.cfg.extent * 0.9, self.cfg.extent * 0.9);
            let cy = self.side() * (w + 0.3);
            let h = self.uniform(5.0, 7.0);
            for _ in 0..self.cfg.pole_points {
                let phi = self.uniform(0.0, std::f64::consts::TAU);
                let z = self.ground() + 0.15 + self.uniform(0.0, h);
                self.push(cx + 0.1 * phi.cos(), cy + 0.1 * phi.sin(), z, (0.3, 0.8), POLE);
            }
        }
    }
}

/// One scene from its own seed.
pub fn generate_scene(cfg: &ToyBenchmark, seed: u64) -> Result<PointCloud> {
    cfg.validate()?;
    let mut scene = Scene {
        cfg,
        rng: rng(seed),
        points: Vec::new(),
        labels: Vec::new(),
    };
    scene.road();
    scene.sidewalks();
    scene.vehicles();
    scene.buildings();
    scene.trees();
    scene.poles();
    PointCloud::labeled(scene.points, scene.labels)
}

/// Scenes of a split. Train and val draw from disjoint seed streams.
pub fn generate_toy(split: Split, cfg: &ToyBenchmark, seed: u64) -> Result<Vec<PointCloud>> {
    (0..cfg.scenes(split))
        .map(|i| generate_scene(cfg, derive_seed(seed, &[split.stream(), i as u64])))
        .collect()
}
