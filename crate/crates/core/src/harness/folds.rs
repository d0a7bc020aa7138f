//! Leave-one-room-out fold plans and the training access audit.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::Manifest;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub held_out_room: String,
    pub train_rooms: Vec<String>,
}

impl FoldPlan {
    pub fn trains_on(&self, room_id: &str) -> bool {
        self.train_rooms.iter().any(|r| r == room_id)
    }
}

/// One fold per room, in sorted room order.
pub fn plan_folds(manifest: &Manifest) -> Result<Vec<FoldPlan>> {
    let rooms = manifest.rooms();
    if rooms.len() < 2 {
        return Err(Error::InsufficientRooms(rooms.len()));
    }
    manifest.validate()?;
    Ok(rooms
        .iter()
        .map(|held| FoldPlan {
            held_out_room: held.clone(),
            train_rooms: rooms.iter().filter(|r| *r != held).cloned().collect(),
        })
        .collect())
}

/// Rooms whose data reached the trainer during one fold.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessAudit {
    pub sample_rooms: BTreeSet<String>,
    pub pool_rooms: BTreeSet<String>,
    pub samples_read: usize,
}

impl AccessAudit {
    pub fn record_sample(&mut self, room_id: &str) {
        self.sample_rooms.insert(room_id.to_owned());
        self.samples_read += 1;
    }

    pub fn record_pool(&mut self, room_id: &str) {
        self.pool_rooms.insert(room_id.to_owned());
    }

    /// Reads attributed to `room_id`, counting both labeled clips and pool audio.
    pub fn touched(&self, room_id: &str) -> bool {
        self.sample_rooms.contains(room_id) || self.pool_rooms.contains(room_id)
    }
}
