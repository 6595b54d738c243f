//! Domain-randomized contrastive-prototype training for LiDAR semantic
//! segmentation: scan I/O, augmentation, adverse-weather simulation, a
//! point-wise network with hand-written gradients, training and evaluation.

pub mod augment;
pub mod bank;
pub mod checkpoint;
pub mod cloud;
pub mod config;
pub mod error;
pub mod eval;
pub mod io;
pub mod labels;
pub mod loss;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod rng;
pub mod toy;
pub mod trainer;
pub mod voxel;
pub mod weather;

pub use cloud::{Point, PointCloud, Weather};
pub use error::{Error, Result};
