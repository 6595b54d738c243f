//! Geometry style randomization: the weak view (Z rotation and uniform
//! scaling) and the strong view (weak view followed by gated dropout, noise
//! injection, flipping and jitter).

use rand::seq::index;
use rand::Rng as _;

use crate::cloud::{Point, PointCloud};
use crate::error::{Error, Result};
use crate::labels::IGNORED;
use crate::rng::{rng, Rng};

/// Closed interval sampled uniformly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub const fn fixed(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    /// Always consumes exactly one draw, even for a degenerate interval.
    pub fn sample(&self, rng: &mut Rng) -> f64 {
        let u: f64 = rng.gen();
        self.lo + (self.hi - self.lo) * u
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi) {
            return Err(Error::Argument(format!(
                "{name} interval [{}, {}] is not ordered",
                self.lo, self.hi
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    /// Degrees about the Z axis.
    pub rotation_deg: Interval,
    pub scale: Interval,
    pub dropout_frac: Interval,
    pub dropout_prob: f64,
    /// Inclusive range of injected noise points.
    pub noise_count: (usize, usize),
    pub noise_prob: f64,
    /// Probability of negating either x or y (chosen uniformly).
    pub flip_prob: f64,
    /// Meters, drawn independently per coordinate.
    pub jitter: Interval,
    pub jitter_prob: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            rotation_deg: Interval::new(0.0, 360.0),
            scale: Interval::new(0.95, 1.05),
            dropout_frac: Interval::new(0.0, 0.20),
            dropout_prob: 0.5,
            noise_count: (0, 2000),
            noise_prob: 0.5,
            flip_prob: 0.5,
            jitter: Interval::new(-0.05, 0.05),
            jitter_prob: 0.5,
        }
    }
}

impl AugmentConfig {
    /// Same config with every strong-view gate closed.
    pub fn without_strong(&self) -> Self {
        Self {
            dropout_prob: 0.0,
            noise_prob: 0.0,
            flip_prob: 0.0,
            jitter_prob: 0.0,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.rotation_deg.validate("rotation")?;
        self.scale.validate("scale")?;
        self.dropout_frac.validate("dropout fraction")?;
        self.jitter.validate("jitter")?;
        if self.scale.lo <= 0.0 {
            return Err(Error::Argument("scale must be positive".into()));
        }
        if self.dropout_frac.lo < 0.0 || self.dropout_frac.hi > 1.0 {
            return Err(Error::Argument("dropout fraction must lie in [0, 1]".into()));
        }
        if self.noise_count.0 > self.noise_count.1 {
            return Err(Error::Argument("noise count range is not ordered".into()));
        }
        for (name, p) in [
            ("dropout", self.dropout_prob),
            ("noise", self.noise_prob),
            ("flip", self.flip_prob),
            ("jitter", self.jitter_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Argument(format!("{name} probability {p} not in [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Where a strong-view point came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    /// Index into the input scan.
    Source(usize),
    /// Injected noise.
    Noise,
}

/// Random choices made by one [`strong_view`] call; `None` means the gate
/// stayed closed.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StrongDraws {
    pub dropout_frac: Option<f64>,
    pub noise_count: Option<usize>,
    /// `true` for x, `false` for y.
    pub flip_x: Option<bool>,
    pub jitter: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrongView {
    pub cloud: PointCloud,
    pub origins: Vec<Origin>,
    pub draws: StrongDraws,
}

/// Number of points kept when dropping fraction `frac` of `n`: ⌈(1−frac)·n⌉,
/// snapping values within 1e-9 of an integer so that e.g. 0.2 of 1000 keeps
/// exactly 800.
pub fn dropout_survivors(n: usize, frac: f64) -> usize {
    let keep = (1.0 - frac) * n as f64;
    let snapped = keep.round();
    let keep = if (keep - snapped).abs() < 1e-9 {
        snapped
    } else {
        keep.ceil()
    };
    (keep.max(0.0) as usize).min(n)
}

fn weak_points(x: &PointCloud, cfg: &AugmentConfig, rng: &mut Rng) -> Vec<Point> {
    let theta = cfg.rotation_deg.sample(rng).to_radians();
    let scale = cfg.scale.sample(rng);
    let (sin, cos) = theta.sin_cos();
    x.points()
        .iter()
        .map(|p| {
            let (px, py, pz) = (p.x as f64, p.y as f64, p.z as f64);
            Point::new(
                (scale * (cos * px - sin * py)) as f32,
                (scale * (sin * px + cos * py)) as f32,
                (scale * pz) as f32,
                p.intensity,
            )
        })
        .collect()
}

fn check(x: &PointCloud, cfg: &AugmentConfig) -> Result<()> {
    if x.is_empty() {
        return Err(Error::Argument("cannot augment an empty cloud".into()));
    }
    cfg.validate()
}

fn rebuild(x: &PointCloud, points: Vec<Point>, labels: Option<Vec<u8>>) -> PointCloud {
    let cloud = PointCloud::new(points, labels).expect("augmentation preserves invariants");
    match x.weather() {
        Some(w) => cloud.with_weather(w),
        None => cloud,
    }
}

/// Rotation about Z by θ ~ U(rotation_deg) then uniform scaling by
/// s ~ U(scale). Labels and point order are untouched.
pub fn weak_view(x: &PointCloud, cfg: &AugmentConfig, seed: u64) -> Result<PointCloud> {
    check(x, cfg)?;
    let mut rng = rng(seed);
    let points = weak_points(x, cfg, &mut rng);
    Ok(rebuild(x, points, x.labels().map(<[u8]>::to_vec)))
}

/// The weak view followed by dropout, noise, flip and jitter, each behind its
/// own probability gate. With every gate closed the output equals
/// [`weak_view`] for the same seed.
pub fn strong_view(x: &PointCloud, cfg: &AugmentConfig, seed: u64) -> Result<StrongView> {
    check(x, cfg)?;
    let mut rng = rng(seed);
    let weak = weak_points(x, cfg, &mut rng);
    let bounds = crate::cloud::bounds_of(&weak).expect("non-empty");

    let mut points = weak;
    let mut labels = x.labels().map(<[u8]>::to_vec);
    let mut origins: Vec<Origin> = (0..points.len()).map(Origin::Source).collect();
    let mut draws = StrongDraws::default();

    if rng.gen_bool(cfg.dropout_prob) {
        let frac = cfg.dropout_frac.sample(&mut rng);
        draws.dropout_frac = Some(frac);
        let n = points.len();
        let mut keep = index::sample(&mut rng, n, dropout_survivors(n, frac)).into_vec();
        keep.sort_unstable();
        points = keep.iter().map(|&i| points[i]).collect();
        labels = labels.map(|l| keep.iter().map(|&i| l[i]).collect());
        origins = keep.iter().map(|&i| origins[i]).collect();
    }

    if rng.gen_bool(cfg.noise_prob) {
        let (lo, hi) = bounds;
        let k = rng.gen_range(cfg.noise_count.0..=cfg.noise_count.1);
        draws.noise_count = Some(k);
        for _ in 0..k {
            let mut c = [0.0f32; 3];
            for axis in 0..3 {
                c[axis] = Interval::new(lo[axis], hi[axis]).sample(&mut rng) as f32;
            }
            let intensity = rng.gen::<f32>();
            points.push(Point::new(c[0], c[1], c[2], intensity));
            origins.push(Origin::Noise);
            if let Some(l) = labels.as_mut() {
                l.push(IGNORED);
            }
        }
    }

    if rng.gen_bool(cfg.flip_prob) {
        let flip_x = rng.gen_bool(0.5);
        draws.flip_x = Some(flip_x);
        for p in &mut points {
            if flip_x {
                p.x = -p.x;
            } else {
                p.y = -p.y;
            }
        }
    }

    if rng.gen_bool(cfg.jitter_prob) {
        draws.jitter = true;
        for p in &mut points {
            p.x = (p.x as f64 + cfg.jitter.sample(&mut rng)) as f32;
            p.y = (p.y as f64 + cfg.jitter.sample(&mut rng)) as f32;
            p.z = (p.z as f64 + cfg.jitter.sample(&mut rng)) as f32;
        }
    }

    Ok(StrongView {
        cloud: rebuild(x, points, labels),
        origins,
        draws,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::is_eval_class;
    use proptest::prelude::*;

    fn grid_cloud(n: usize) -> PointCloud {
        let points = (0..n)
            .map(|i| {
                let t = i as f32;
                Point::new(
                    (t * 0.37).sin() * 20.0,
                    (t * 0.11).cos() * 15.0,
                    (t * 0.05).sin() * 2.0,
                    (i % 10) as f32 / 10.0,
                )
            })
            .collect();
        let labels = (0..n).map(|i| (i % 19) as u8).collect();
        PointCloud::labeled(points, labels).unwrap()
    }

    fn radial(p: &Point) -> f64 {
        ((p.x as f64).powi(2) + (p.y as f64).powi(2)).sqrt()
    }

    #[test]
    fn full_turn_unit_scale_is_identity() {
        let x = grid_cloud(200);
        let cfg = AugmentConfig {
            rotation_deg: Interval::fixed(360.0),
            scale: Interval::fixed(1.0),
            ..Default::default()
        };
        let w = weak_view(&x, &cfg, 3).unwrap();
        for (a, b) in x.points().iter().zip(w.points()) {
            assert!((a.x - b.x).abs() < 1e-6 && (a.y - b.y).abs() < 1e-6);
            assert_eq!(a.z, b.z);
        }
        assert_eq!(w.labels(), x.labels());
    }

    #[test]
    fn strong_with_closed_gates_equals_weak() {
        let x = grid_cloud(300);
        let cfg = AugmentConfig::default().without_strong();
        for seed in 0..10 {
            let w = weak_view(&x, &cfg, seed).unwrap();
            let s = strong_view(&x, &cfg, seed).unwrap();
            assert_eq!(s.cloud, w);
            assert!(s
                .origins
                .iter()
                .enumerate()
                .all(|(i, o)| *o == Origin::Source(i)));
        }
    }

    #[test]
    fn forced_dropout_keeps_eighty_percent() {
        let x = grid_cloud(1000);
        let cfg = AugmentConfig {
            dropout_frac: Interval::fixed(0.20),
            dropout_prob: 1.0,
            ..AugmentConfig::default().without_strong()
        };
        let s = strong_view(&x, &cfg, 11).unwrap();
        assert_eq!(s.cloud.len(), 800);
        let mut prev = None;
        for (o, &l) in s.origins.iter().zip(s.cloud.labels().unwrap()) {
            let Origin::Source(i) = *o else { panic!("noise without noise gate") };
            assert_eq!(l, x.labels().unwrap()[i]);
            assert!(prev.is_none_or(|p| p < i));
            prev = Some(i);
        }
    }

    #[test]
    fn forced_noise_lands_in_weak_bounds() {
        let x = grid_cloud(500);
        let cfg = AugmentConfig {
            noise_count: (2000, 2000),
            noise_prob: 1.0,
            ..AugmentConfig::default().without_strong()
        };
        let seed = 5;
        let weak = weak_view(&x, &cfg, seed).unwrap();
        let (lo, hi) = weak.bounds().unwrap();
        let s = strong_view(&x, &cfg, seed).unwrap();
        assert_eq!(s.cloud.len(), 2500);
        let labels = s.cloud.labels().unwrap();
        let noise: Vec<_> = s
            .origins
            .iter()
            .enumerate()
            .filter(|(_, o)| **o == Origin::Noise)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(noise.len(), 2000);
        assert_eq!(labels.iter().filter(|&&l| l == IGNORED).count(), 2000);
        for i in noise {
            assert_eq!(labels[i], IGNORED);
            let p = s.cloud.points()[i];
            for (axis, v) in [p.x, p.y, p.z].into_iter().enumerate() {
                // f32 storage of the bounds can round outward by one ulp.
                assert!(v as f64 >= lo[axis] - 1e-5 && v as f64 <= hi[axis] + 1e-5);
            }
        }
    }

    #[test]
    fn survivor_count_is_ceiling() {
        assert_eq!(dropout_survivors(1000, 0.2), 800);
        assert_eq!(dropout_survivors(10, 0.15), 9);
        assert_eq!(dropout_survivors(7, 0.0), 7);
        assert_eq!(dropout_survivors(7, 1.0), 0);
        // Exact rational check against ceil((1 - d) n) for d = k / 1000.
        for n in [1usize, 3, 17, 250, 999] {
            for k in 0..=200usize {
                let expect = ((1000 - k) * n).div_ceil(1000);
                assert_eq!(dropout_survivors(n, k as f64 / 1000.0), expect, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn flip_negates_one_planar_axis() {
        let x = grid_cloud(50);
        let cfg = AugmentConfig {
            flip_prob: 1.0,
            ..AugmentConfig::default().without_strong()
        };
        for seed in 0..8 {
            let w = weak_view(&x, &cfg, seed).unwrap();
            let s = strong_view(&x, &cfg, seed).unwrap().cloud;
            let flipped_x = w.points().iter().zip(s.points()).all(|(a, b)| a.x == -b.x && a.y == b.y);
            let flipped_y = w.points().iter().zip(s.points()).all(|(a, b)| a.y == -b.y && a.x == b.x);
            assert!(flipped_x ^ flipped_y);
        }
    }

    #[test]
    fn jitter_stays_within_range() {
        let x = grid_cloud(200);
        let cfg = AugmentConfig {
            jitter_prob: 1.0,
            ..AugmentConfig::default().without_strong()
        };
        let w = weak_view(&x, &cfg, 9).unwrap();
        let s = strong_view(&x, &cfg, 9).unwrap().cloud;
        let mut moved = false;
        for (a, b) in w.points().iter().zip(s.points()) {
            for d in [a.x - b.x, a.y - b.y, a.z - b.z] {
                assert!(d.abs() <= 0.05 + 1e-5);
                moved |= d != 0.0;
            }
        }
        assert!(moved);
    }

    #[test]
    fn empty_cloud_is_rejected() {
        let empty = PointCloud::default();
        let cfg = AugmentConfig::default();
        assert!(matches!(weak_view(&empty, &cfg, 0), Err(Error::Argument(_))));
        assert!(matches!(strong_view(&empty, &cfg, 0), Err(Error::Argument(_))));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let x = grid_cloud(5);
        let cfg = AugmentConfig {
            flip_prob: 1.5,
            ..Default::default()
        };
        assert!(weak_view(&x, &cfg, 0).is_err());
    }

    proptest! {
        #[test]
        fn weak_view_is_a_scaled_z_isometry(seed in any::<u64>(), n in 2usize..60) {
            let x = grid_cloud(n);
            let cfg = AugmentConfig { scale: Interval::fixed(1.0), ..Default::default() };
            let w = weak_view(&x, &cfg, seed).unwrap();
            prop_assert_eq!(w.len(), x.len());
            prop_assert_eq!(w.labels(), x.labels());
            for (a, b) in x.points().iter().zip(w.points()) {
                prop_assert_eq!(a.z, b.z);
                prop_assert!((radial(a) - radial(b)).abs() < 1e-5 * radial(a).max(1.0));
            }
            // Angle between two points in the XY plane is preserved.
            let (a0, a1) = (x.points()[0], x.points()[1]);
            let (b0, b1) = (w.points()[0], w.points()[1]);
            let cross = |p: Point, q: Point| p.x as f64 * q.y as f64 - p.y as f64 * q.x as f64;
            let dot = |p: Point, q: Point| p.x as f64 * q.x as f64 + p.y as f64 * q.y as f64;
            let ang_x = cross(a0, a1).atan2(dot(a0, a1));
            let ang_w = cross(b0, b1).atan2(dot(b0, b1));
            prop_assert!((ang_x - ang_w).abs() < 1e-4);
        }

        #[test]
        fn strong_count_matches_drawn_parameters(seed in any::<u64>(), n in 1usize..400) {
            let x = grid_cloud(n);
            let cfg = AugmentConfig { noise_count: (0, 50), ..Default::default() };
            let s = strong_view(&x, &cfg, seed).unwrap();
            let survivors = s.origins.iter().filter(|o| matches!(o, Origin::Source(_))).count();
            let noise = s.cloud.len() - survivors;
            let d = s.draws.dropout_frac.unwrap_or(0.0);
            prop_assert_eq!(survivors, dropout_survivors(n, d));
            prop_assert_eq!(noise, s.draws.noise_count.unwrap_or(0));
            prop_assert!(noise <= 50);
            let labels = s.cloud.labels().unwrap();
            for (o, &l) in s.origins.iter().zip(labels) {
                match o {
                    Origin::Noise => prop_assert!(!is_eval_class(l)),
                    Origin::Source(i) => prop_assert_eq!(l, x.labels().unwrap()[*i]),
                }
            }
            prop_assert_eq!(&s, &strong_view(&x, &cfg, seed).unwrap());
        }
    }
}
