#![allow(dead_code)]

use std::path::{Path, PathBuf};

use footfall::detector::TrainConfig;
use footfall::geometry::ArrayGeometry;
use footfall::manifest::{Action, Manifest, RobotCondition};
use footfall::sim::{generate_dataset, DatasetPlan};

/// Two small rooms, one moving action, static robot.
pub fn tiny_plan() -> DatasetPlan {
    DatasetPlan {
        seed: 11,
        rooms: 2,
        actions: vec![Action::Loud],
        conditions: vec![RobotCondition::Static],
        presence_s: 4.0,
        empty_s: 3.0,
        profile_s: 10.0,
        pool_rooms: 1,
        pool_s: 10.0,
        bed_scale: 0.2,
        ..DatasetPlan::default()
    }
}

pub fn tiny_config() -> TrainConfig {
    TrainConfig {
        epochs: 3,
        batch_size: 8,
        learning_rate: 1e-3,
        ..TrainConfig::default()
    }
}

/// Generates the tiny dataset into `dir` and returns the loaded manifest path.
pub fn tiny_dataset(dir: &Path) -> (PathBuf, Manifest) {
    generate_dataset(&tiny_plan().scenes(), &ArrayGeometry::default(), dir).expect("tiny dataset");
    let path = dir.join("manifest.jsonl");
    let m = Manifest::load(&path).expect("manifest loads");
    (path, m)
}
