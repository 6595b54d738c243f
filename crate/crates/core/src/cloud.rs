use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::labels::{is_valid_train_id, TrainId};

/// One LiDAR return. Coordinates are meters in the sensor frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f32,
    pub y: f32,
    pub z: f32,
    pub intensity: f32,
}

impl Point {
    pub const fn new(x: f32, y: f32, z: f32, intensity: f32) -> Self {
        Self { x, y, z, intensity }
    }

    /// Euclidean distance to the sensor origin.
    pub fn range(&self) -> f64 {
        let (x, y, z) = (self.x as f64, self.y as f64, self.z as f64);
        (x * x + y * y + z * z).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.intensity.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Weather {
    Clear,
    DenseFog,
    LightFog,
    Rain,
    Snow,
}

impl Weather {
    pub const ALL: [Weather; 5] = [
        Weather::Clear,
        Weather::DenseFog,
        Weather::LightFog,
        Weather::Rain,
        Weather::Snow,
    ];

    /// The four adverse conditions.
    pub const ADVERSE: [Weather; 4] = [
        Weather::DenseFog,
        Weather::LightFog,
        Weather::Rain,
        Weather::Snow,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Weather::Clear => "clear",
            Weather::DenseFog => "dense_fog",
            Weather::LightFog => "light_fog",
            Weather::Rain => "rain",
            Weather::Snow => "snow",
        }
    }

    /// Short column header used in rendered tables.
    pub fn abbreviation(&self) -> &'static str {
        match self {
            Weather::Clear => "Clear",
            Weather::DenseFog => "D-fog",
            Weather::LightFog => "L-fog",
            Weather::Rain => "Rain",
            Weather::Snow => "Snow",
        }
    }
}

impl fmt::Display for Weather {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Weather {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Weather::ALL
            .into_iter()
            .find(|w| w.as_str() == s)
            .ok_or_else(|| Error::Argument(format!("unknown weather tag `{s}`")))
    }
}

/// A LiDAR scan with optional per-point train-ids and weather tag.
///
/// Invariants are checked at construction: finite points, one label per point
/// and only legal train-ids.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    points: Vec<Point>,
    labels: Option<Vec<TrainId>>,
    weather: Option<Weather>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>, labels: Option<Vec<TrainId>>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::Argument(format!("point {i} is not finite")));
        }
        if let Some(labels) = &labels {
            if labels.len() != points.len() {
                return Err(Error::Argument(format!(
                    "{} labels for {} points",
                    labels.len(),
                    points.len()
                )));
            }
            if let Some(i) = labels.iter().position(|&l| !is_valid_train_id(l)) {
                return Err(Error::Argument(format!(
                    "label {} at point {i} is not a train-id",
                    labels[i]
                )));
            }
        }
        Ok(Self {
            points,
            labels,
            weather: None,
        })
    }

    pub fn labeled(points: Vec<Point>, labels: Vec<TrainId>) -> Result<Self> {
        Self::new(points, Some(labels))
    }

    pub fn with_weather(mut self, weather: Weather) -> Self {
        self.weather = Some(weather);
        self
    }

    pub fn with_labels(self, labels: Vec<TrainId>) -> Result<Self> {
        let weather = self.weather;
        let mut cloud = Self::new(self.points, Some(labels))?;
        cloud.weather = weather;
        Ok(cloud)
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn labels(&self) -> Option<&[TrainId]> {
        self.labels.as_deref()
    }

    pub fn weather(&self) -> Option<Weather> {
        self.weather
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Axis-aligned bounds as `(min, max)` over x, y, z. `None` when empty.
    pub fn bounds(&self) -> Option<([f64; 3], [f64; 3])> {
        bounds_of(&self.points)
    }

    pub fn into_parts(self) -> (Vec<Point>, Option<Vec<TrainId>>, Option<Weather>) {
        (self.points, self.labels, self.weather)
    }
}

pub(crate) fn bounds_of(points: &[Point]) -> Option<([f64; 3], [f64; 3])> {
    let first = points.first()?;
    let mut lo = [first.x as f64, first.y as f64, first.z as f64];
    let mut hi = lo;
    for p in points {
        for (axis, v) in [p.x, p.y, p.z].into_iter().enumerate() {
            lo[axis] = lo[axis].min(v as f64);
            hi[axis] = hi[axis].max(v as f64);
        }
    }
    Some((lo, hi))
}
