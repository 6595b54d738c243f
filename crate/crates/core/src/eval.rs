//! Evaluation over scan sets and the on-disk dataset layout.
//!
//! A dataset directory holds `velodyne/NNNNNN.bin`, matching
//! `labels/NNNNNN.label`, and an optional `weather.txt` with one
//! `NNNNNN <tag>` line per tagged scan.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::cloud::{PointCloud, Weather};
use crate::error::{Error, Result};
use crate::io::{read_labeled_scan, write_labels, write_scan};
use crate::labels::LabelMap;
use crate::metrics::{report, ConfusionMatrix, EvalReport};
use crate::model::Model;
use crate::rng::derive_seed;
use crate::voxel::featurize_cloud;
use crate::weather::{corrupt, WeatherConfig};

/// Predicts every labeled cloud and scores it under its weather tag
/// (untagged clouds count as clear).
pub fn evaluate(model: &Model, clouds: &[PointCloud]) -> Result<EvalReport> {
    let c = model.config().num_classes;
    let mut by_weather: BTreeMap<Weather, ConfusionMatrix> = BTreeMap::new();
    for cloud in clouds {
        let labels = cloud
            .labels()
            .ok_or_else(|| Error::Argument("evaluation scans must be labeled".into()))?;
        let feats = featurize_cloud(cloud, model.config().voxel_size)?;
        let preds = model.predict(&feats)?;
        by_weather
            .entry(cloud.weather().unwrap_or(Weather::Clear))
            .or_insert_with(|| ConfusionMatrix::new(c))
            .accumulate(&preds, labels)?;
    }
    report(by_weather)
}

/// Applies every adverse preset to every clean scan, tagging each copy.
pub fn corrupted_suite(clean: &[PointCloud], seed: u64) -> Result<Vec<PointCloud>> {
    let mut out = Vec::with_capacity(clean.len() * Weather::ADVERSE.len());
    for (k, w) in Weather::ADVERSE.into_iter().enumerate() {
        let cfg = WeatherConfig::preset(w);
        for (i, cloud) in clean.iter().enumerate() {
            let c = corrupt(cloud, &cfg, derive_seed(seed, &[k as u64, i as u64]))?;
            out.push(c.with_weather(w));
        }
    }
    Ok(out)
}

fn scan_name(i: usize) -> String {
    format!("{i:06}")
}

pub fn read_dataset(dir: impl AsRef<Path>, map: &LabelMap) -> Result<Vec<PointCloud>> {
    let dir = dir.as_ref();
    let velodyne = dir.join("velodyne");
    let mut stems: Vec<String> = std::fs::read_dir(&velodyne)
        .map_err(|e| Error::io(&velodyne, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "bin"))
        .filter_map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .collect();
    stems.sort();
    if stems.is_empty() {
        return Err(Error::Argument(format!("no scans in {}", velodyne.display())));
    }

    let tags_path = dir.join("weather.txt");
    let mut tags: BTreeMap<String, Weather> = BTreeMap::new();
    if tags_path.exists() {
        let text = std::fs::read_to_string(&tags_path).map_err(|e| Error::io(&tags_path, e))?;
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (stem, tag) = line
                .split_once(char::is_whitespace)
                .ok_or_else(|| Error::Format(format!("weather.txt line {}: expected `scan tag`", n + 1)))?;
            tags.insert(stem.to_string(), tag.trim().parse()?);
        }
    }

    stems
        .iter()
        .map(|s| {
            let scan: PathBuf = velodyne.join(format!("{s}.bin"));
            let label = dir.join("labels").join(format!("{s}.label"));
            let cloud = read_labeled_scan(&scan, &label, map)?;
            Ok(match tags.get(s) {
                Some(&w) => cloud.with_weather(w),
                None => cloud,
            })
        })
        .collect()
}

pub fn write_dataset(dir: impl AsRef<Path>, clouds: &[PointCloud], map: &LabelMap) -> Result<()> {
    let dir = dir.as_ref();
    for sub in ["velodyne", "labels"] {
        let p = dir.join(sub);
        std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let mut tags = String::new();
    for (i, cloud) in clouds.iter().enumerate() {
        let name = scan_name(i);
        write_scan(cloud, dir.join("velodyne").join(format!("{name}.bin")))?;
        let labels = cloud
            .labels()
            .ok_or_else(|| Error::Argument("dataset scans must be labeled".into()))?;
        write_labels(labels, dir.join("labels").join(format!("{name}.label")), map)?;
        if let Some(w) = cloud.weather() {
            tags.push_str(&format!("{name} {w}\n"));
        }
    }
    if !tags.is_empty() {
        let p = dir.join("weather.txt");
        std::fs::write(&p, tags).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}
