//! Synthetic adverse-weather corruptions used as held-out target domains.
//!
//! These are distortion generators for desk-scale experiments, not sensor
//! models:
//!
//! - dense / light fog: points beyond a range cap disappear;
//! - snow: near-sensor flakes labeled `invalid`, and part of the ground turns
//!   `invalid` (snow cover);
//! - rain: part of the ground return is lost and specular-reflection noise
//!   appears near the ground, labeled `ignored`.

use rand::seq::index;
use rand::Rng as _;

use crate::augment::Interval;
use crate::cloud::{Point, PointCloud, Weather};
use crate::error::{Error, Result};
use crate::labels::{is_ground_class, TrainId, IGNORED, INVALID};
use crate::rng::{rng, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct WeatherConfig {
    pub mode: Weather,
    /// Meters; used by the fog modes.
    pub fog_range_cap: f64,
    pub snow_noise_count: usize,
    /// Snowflakes are drawn within this horizontal radius of the sensor.
    pub snow_noise_radius: f64,
    pub snow_invalid_frac: f64,
    pub rain_ground_drop_frac: f64,
    pub rain_noise_count: usize,
}

pub const DENSE_FOG_RANGE_CAP: f64 = 30.0;
pub const LIGHT_FOG_RANGE_CAP: f64 = 60.0;

impl WeatherConfig {
    /// Default preset for one adverse condition.
    pub fn preset(mode: Weather) -> Self {
        let fog_range_cap = match mode {
            Weather::LightFog => LIGHT_FOG_RANGE_CAP,
            _ => DENSE_FOG_RANGE_CAP,
        };
        Self {
            mode,
            fog_range_cap,
            snow_noise_count: 1000,
            snow_noise_radius: 10.0,
            snow_invalid_frac: 0.3,
            rain_ground_drop_frac: 0.3,
            rain_noise_count: 300,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == Weather::Clear {
            return Err(Error::Argument("`clear` is not a corruption mode".into()));
        }
        if self.fog_range_cap.is_nan() || self.fog_range_cap <= 0.0 {
            return Err(Error::Argument("fog range cap must be positive".into()));
        }
        if self.snow_noise_radius.is_nan() || self.snow_noise_radius <= 0.0 {
            return Err(Error::Argument("snow noise radius must be positive".into()));
        }
        for (name, f) in [
            ("snow_invalid_frac", self.snow_invalid_frac),
            ("rain_ground_drop_frac", self.rain_ground_drop_frac),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Argument(format!("{name} = {f} not in [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Applies the configured corruption and tags the output with its weather.
pub fn corrupt(x: &PointCloud, cfg: &WeatherConfig, seed: u64) -> Result<PointCloud> {
    cfg.validate()?;
    let labels = x
        .labels()
        .ok_or_else(|| Error::Argument("weather corruption needs a labeled cloud".into()))?;
    let mut rng = rng(seed);
    let mut points = x.points().to_vec();
    let mut labels = labels.to_vec();

    match cfg.mode {
        Weather::DenseFog | Weather::LightFog => {
            let keep: Vec<bool> = points.iter().map(|p| p.range() <= cfg.fog_range_cap).collect();
            retain(&mut points, &mut labels, &keep);
        }
        Weather::Snow => {
            let ground = ground_indices(&labels);
            let k = fraction_of(ground.len(), cfg.snow_invalid_frac);
            for i in index::sample(&mut rng, ground.len(), k) {
                labels[ground[i]] = INVALID;
            }
            let base_z = ground_level(x);
            for _ in 0..cfg.snow_noise_count {
                // Uniform over the disc, then a height between the ground and
                // a few meters above the sensor.
                let r = cfg.snow_noise_radius * rng.gen::<f64>().sqrt();
                let phi = Interval::new(0.0, std::f64::consts::TAU).sample(&mut rng);
                let z = Interval::new(base_z, 2.5).sample(&mut rng);
                push_noise(&mut points, &mut labels, [r * phi.cos(), r * phi.sin(), z], INVALID, &mut rng);
            }
        }
        Weather::Rain => {
            let ground = ground_indices(&labels);
            let k = fraction_of(ground.len(), cfg.rain_ground_drop_frac);
            let mut keep = vec![true; points.len()];
            for i in index::sample(&mut rng, ground.len(), k) {
                keep[ground[i]] = false;
            }
            let (lo, hi) = ground_bounds(x).unwrap_or(([-1.0; 3], [1.0; 3]));
            retain(&mut points, &mut labels, &keep);
            for _ in 0..cfg.rain_noise_count {
                // Mirror images of wet-road reflections sit at or just below
                // the road surface.
                let px = Interval::new(lo[0], hi[0]).sample(&mut rng);
                let py = Interval::new(lo[1], hi[1]).sample(&mut rng);
                let pz = Interval::new(lo[2] - 1.0, lo[2] + 0.2).sample(&mut rng);
                push_noise(&mut points, &mut labels, [px, py, pz], IGNORED, &mut rng);
            }
        }
        Weather::Clear => unreachable!("rejected by validate"),
    }

    Ok(PointCloud::labeled(points, labels)?.with_weather(cfg.mode))
}

fn retain(points: &mut Vec<Point>, labels: &mut Vec<TrainId>, keep: &[bool]) {
    let mut it = keep.iter();
    points.retain(|_| *it.next().unwrap());
    let mut it = keep.iter();
    labels.retain(|_| *it.next().unwrap());
}

fn push_noise(
    points: &mut Vec<Point>,
    labels: &mut Vec<TrainId>,
    c: [f64; 3],
    label: TrainId,
    rng: &mut Rng,
) {
    let intensity = rng.gen::<f32>();
    points.push(Point::new(c[0] as f32, c[1] as f32, c[2] as f32, intensity));
    labels.push(label);
}

fn fraction_of(n: usize, frac: f64) -> usize {
    ((n as f64 * frac).round() as usize).min(n)
}

fn ground_indices(labels: &[TrainId]) -> Vec<usize> {
    labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| is_ground_class(l))
        .map(|(i, _)| i)
        .collect()
}

fn ground_bounds(x: &PointCloud) -> Option<([f64; 3], [f64; 3])> {
    let labels = x.labels()?;
    let ground: Vec<Point> = x
        .points()
        .iter()
        .zip(labels)
        .filter(|(_, &l)| is_ground_class(l))
        .map(|(p, _)| *p)
        .collect();
    crate::cloud::bounds_of(&ground).or_else(|| x.bounds())
}

fn ground_level(x: &PointCloud) -> f64 {
    ground_bounds(x).map_or(-1.5, |(lo, _)| lo[2])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::{is_eval_class, BUILDING, ROAD, SIDEWALK};
    use proptest::prelude::*;

    fn scene(n: usize, max_range: f32) -> PointCloud {
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let t = i as f32 / n as f32;
            let r = 2.0 + t * (max_range - 2.0);
            let phi = i as f32 * 2.399;
            let (label, z) = match i % 3 {
                0 => (ROAD, -1.7),
                1 => (SIDEWALK, -1.55),
                _ => (BUILDING, 1.0 + t),
            };
            points.push(Point::new(r * phi.cos(), r * phi.sin(), z, 0.3));
            labels.push(label);
        }
        PointCloud::labeled(points, labels).unwrap()
    }

    #[test]
    fn fog_cap_above_max_range_is_noop() {
        let x = scene(300, 20.0);
        let mut cfg = WeatherConfig::preset(Weather::DenseFog);
        cfg.fog_range_cap = 25.0;
        let y = corrupt(&x, &cfg, 1).unwrap();
        assert_eq!(y.points(), x.points());
        assert_eq!(y.labels(), x.labels());
        assert_eq!(y.weather(), Some(Weather::DenseFog));
    }

    #[test]
    fn dense_fog_output_is_within_cap() {
        let x = scene(500, 60.0);
        let cfg = WeatherConfig::preset(Weather::DenseFog);
        assert_eq!(cfg.fog_range_cap, 30.0);
        let y = corrupt(&x, &cfg, 1).unwrap();
        assert!(y.len() < x.len());
        for p in y.points() {
            let (px, py, pz) = (p.x as f64, p.y as f64, p.z as f64);
            assert!((px * px + py * py + pz * pz).sqrt() <= 30.0);
        }
    }

    #[test]
    fn light_fog_is_milder() {
        let x = scene(500, 80.0);
        let dense = corrupt(&x, &WeatherConfig::preset(Weather::DenseFog), 0).unwrap();
        let light = corrupt(&x, &WeatherConfig::preset(Weather::LightFog), 0).unwrap();
        assert!(light.len() > dense.len());
    }

    #[test]
    fn snow_adds_exactly_the_requested_invalid_points() {
        let x = scene(300, 40.0);
        let cfg = WeatherConfig {
            snow_invalid_frac: 0.0,
            snow_noise_count: 500,
            ..WeatherConfig::preset(Weather::Snow)
        };
        let y = corrupt(&x, &cfg, 4).unwrap();
        assert_eq!(y.len(), 800);
        assert_eq!(&y.points()[..300], x.points());
        assert_eq!(&y.labels().unwrap()[..300], x.labels().unwrap());
        assert!(y.labels().unwrap()[300..].iter().all(|&l| l == INVALID));
        for p in &y.points()[300..] {
            assert!(((p.x as f64).powi(2) + (p.y as f64).powi(2)).sqrt() <= 10.0 + 1e-4);
        }
    }

    #[test]
    fn snow_relabels_ground_fraction() {
        let x = scene(300, 40.0);
        let cfg = WeatherConfig {
            snow_noise_count: 0,
            ..WeatherConfig::preset(Weather::Snow)
        };
        let y = corrupt(&x, &cfg, 4).unwrap();
        let changed: Vec<_> = x
            .labels()
            .unwrap()
            .iter()
            .zip(y.labels().unwrap())
            .filter(|(a, b)| a != b)
            .collect();
        // 200 ground points, 30% of them.
        assert_eq!(changed.len(), 60);
        assert!(changed.iter().all(|(a, b)| is_ground_class(**a) && **b == INVALID));
    }

    #[test]
    fn rain_drops_ground_and_adds_ignored_noise() {
        let x = scene(300, 40.0);
        let y = corrupt(&x, &WeatherConfig::preset(Weather::Rain), 2).unwrap();
        assert_eq!(y.len(), 300 - 60 + 300);
        let labels = y.labels().unwrap();
        assert!(labels[240..].iter().all(|&l| l == IGNORED));
        let buildings = labels.iter().filter(|&&l| l == BUILDING).count();
        assert_eq!(buildings, 100);
    }

    #[test]
    fn unlabeled_input_is_rejected() {
        let x = PointCloud::new(vec![Point::new(1.0, 0.0, 0.0, 0.0)], None).unwrap();
        assert!(matches!(
            corrupt(&x, &WeatherConfig::preset(Weather::Snow), 0),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn bad_configs_are_rejected() {
        let x = scene(10, 10.0);
        let mut cfg = WeatherConfig::preset(Weather::Rain);
        cfg.rain_ground_drop_frac = 1.5;
        assert!(corrupt(&x, &cfg, 0).is_err());
        let mut cfg = WeatherConfig::preset(Weather::DenseFog);
        cfg.fog_range_cap = 0.0;
        assert!(corrupt(&x, &cfg, 0).is_err());
        assert!(corrupt(&x, &WeatherConfig::preset(Weather::Clear), 0).is_err());
    }

    proptest! {
        #[test]
        fn corruption_invariants(seed in any::<u64>(), mode in 0usize..4, cap in 5.0f64..50.0) {
            let x = scene(200, 45.0);
            let mut cfg = WeatherConfig::preset(Weather::ADVERSE[mode]);
            cfg.fog_range_cap = cap;
            let y = corrupt(&x, &cfg, seed).unwrap();
            prop_assert_eq!(&y, &corrupt(&x, &cfg, seed).unwrap());
            let xl = x.labels().unwrap();
            let yl = y.labels().unwrap();
            match cfg.mode {
                Weather::DenseFog | Weather::LightFog => {
                    let expect: Vec<_> = x.points().iter().zip(xl)
                        .filter(|(p, _)| p.range() <= cap)
                        .map(|(p, l)| (*p, *l))
                        .collect();
                    let got: Vec<_> = y.points().iter().copied().zip(yl.iter().copied()).collect();
                    prop_assert_eq!(got, expect);
                }
                _ => {
                    // Injected points are appended after the surviving originals.
                    let injected = match cfg.mode {
                        Weather::Snow => cfg.snow_noise_count,
                        _ => cfg.rain_noise_count,
                    };
                    prop_assert!(yl[yl.len() - injected..].iter().all(|&l| !is_eval_class(l)));
                }
            }
        }
    }
}
