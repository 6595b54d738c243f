//! Label taxonomy: the 19 evaluation classes plus `invalid` and `ignored`,
//! and the raw-id to train-id remapping used by `.label` files.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Training label of a single point. `0..NUM_EVAL_CLASSES` are evaluation
/// classes; [`INVALID`] and [`IGNORED`] are the only other legal values.
pub type TrainId = u8;

/// Number of evaluation classes.
pub const NUM_EVAL_CLASSES: usize = 19;

/// Weather-indiscernible content. Kept distinct in memory so it can be scored
/// as a 20th class; losses and metrics with 19 classes drop it like `IGNORED`.
pub const INVALID: TrainId = 19;

/// Not used for training or evaluation.
pub const IGNORED: TrainId = 20;

pub const CLASS_NAMES: [&str; NUM_EVAL_CLASSES] = [
    "car",
    "bicycle",
    "motorcycle",
    "truck",
    "other-vehicle",
    "person",
    "bicyclist",
    "motorcyclist",
    "road",
    "parking",
    "sidewalk",
    "other-ground",
    "building",
    "fence",
    "vegetation",
    "trunk",
    "terrain",
    "pole",
    "traffic-sign",
];

/// Column headers matching the usual abbreviated table layout.
pub const CLASS_ABBREVIATIONS: [&str; NUM_EVAL_CLASSES] = [
    "car", "bi.cle", "mt.cle", "truck", "oth-v.", "pers.", "bi.clst", "mt.clst", "road", "parki.",
    "sidew.", "oth-g.", "build.", "fence", "veget.", "trunk", "terra.", "pole", "traf.",
];

pub const CAR: TrainId = 0;
pub const ROAD: TrainId = 8;
pub const PARKING: TrainId = 9;
pub const SIDEWALK: TrainId = 10;
pub const OTHER_GROUND: TrainId = 11;
pub const BUILDING: TrainId = 12;
pub const VEGETATION: TrainId = 14;
pub const TRUNK: TrainId = 15;
pub const TERRAIN: TrainId = 16;
pub const POLE: TrainId = 17;

pub fn is_valid_train_id(id: TrainId) -> bool {
    id <= IGNORED
}

pub fn is_eval_class(id: TrainId) -> bool {
    (id as usize) < NUM_EVAL_CLASSES
}

/// Road, sidewalk, parking, terrain and other-ground.
pub fn is_ground_class(id: TrainId) -> bool {
    matches!(id, ROAD | SIDEWALK | PARKING | TERRAIN | OTHER_GROUND)
}

/// Display name of any legal train-id.
pub fn class_name(id: TrainId) -> &'static str {
    match id {
        INVALID => "invalid",
        IGNORED => "ignored",
        id if is_eval_class(id) => CLASS_NAMES[id as usize],
        _ => "?",
    }
}

const RAW_ID_SPACE: usize = 1 << 16;

/// Total mapping from 16-bit semantic raw ids to train-ids.
#[derive(Debug, Clone)]
pub struct LabelMap {
    lookup: Vec<TrainId>,
    entries: BTreeMap<u32, TrainId>,
    canonical: [Option<u32>; IGNORED as usize + 1],
}

impl LabelMap {
    /// The SemanticKITTI learning map shipped with the crate.
    pub fn semantic_kitti() -> Self {
        Self::parse(include_str!("../data/semantic-kitti.labelmap"))
            .expect("bundled label map is well formed")
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Parses `raw_id train_id name` lines. `train_id` is a number or one of
    /// the words `ignored` / `invalid`; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut names: BTreeMap<TrainId, String> = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: &str| Error::Format(format!("label map line {}: {msg}", lineno + 1));
            let mut fields = line.split_whitespace();
            let (Some(raw), Some(train), Some(name), None) =
                (fields.next(), fields.next(), fields.next(), fields.next())
            else {
                return Err(bad("expected `raw_id train_id name`"));
            };
            let raw: u32 = raw.parse().map_err(|_| bad("raw id is not an integer"))?;
            if raw as usize >= RAW_ID_SPACE {
                return Err(bad("raw id exceeds 16 bits"));
            }
            let train = match train {
                "ignored" => IGNORED,
                "invalid" => INVALID,
                t => t
                    .parse::<TrainId>()
                    .ok()
                    .filter(|&t| is_eval_class(t))
                    .ok_or_else(|| bad("train id must be 0..18, `ignored` or `invalid`"))?,
            };
            if entries.insert(raw, train).is_some() {
                return Err(bad("duplicate raw id"));
            }
            if is_eval_class(train) {
                match names.get(&train) {
                    Some(prev) if prev != name => {
                        return Err(bad("train id used with two different names"))
                    }
                    _ => {
                        names.insert(train, name.to_string());
                    }
                }
            }
        }
        if names.len() != NUM_EVAL_CLASSES {
            return Err(Error::Format(format!(
                "label map covers {} of {NUM_EVAL_CLASSES} evaluation classes",
                names.len()
            )));
        }
        Ok(Self::from_entries(entries))
    }

    fn from_entries(entries: BTreeMap<u32, TrainId>) -> Self {
        let mut lookup = vec![IGNORED; RAW_ID_SPACE];
        for (&raw, &train) in &entries {
            lookup[raw as usize] = train;
        }
        let mut canonical = [None; IGNORED as usize + 1];
        for (raw, &train) in lookup.iter().enumerate() {
            let slot = &mut canonical[train as usize];
            if slot.is_none() {
                *slot = Some(raw as u32);
            }
        }
        Self {
            lookup,
            entries,
            canonical,
        }
    }

    /// Remaps a semantic raw id; ids outside the table map to [`IGNORED`].
    pub fn to_train(&self, raw: u32) -> TrainId {
        self.lookup.get(raw as usize).copied().unwrap_or(IGNORED)
    }

    /// Lowest raw id mapping to `train`, used when writing label files.
    pub fn canonical_raw(&self, train: TrainId) -> Option<u32> {
        self.canonical.get(train as usize).copied().flatten()
    }

    pub fn entries(&self) -> &BTreeMap<u32, TrainId> {
        &self.entries
    }
}

impl Default for LabelMap {
    fn default() -> Self {
        Self::semantic_kitti()
    }
}
