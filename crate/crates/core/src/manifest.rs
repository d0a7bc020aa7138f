//! Line-delimited dataset manifest.
//!
//! Each line is one JSON object tagged by `kind`:
//! `sample` (a labeled 1 s clip), `profile` (empty-room audio used to build
//! the subtraction profile of a room/condition) or `augmentation` (an
//! empty-room recording in the augmentation pool).

use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PANORAMA_WIDTH;

/// Upper bound of labeled radial distances, in meters.
pub const MAX_DISTANCE_M: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Quiet,
    Normal,
    Loud,
    Empty,
}

impl Action {
    pub const MOVING: [Action; 3] = [Action::Quiet, Action::Normal, Action::Loud];
    pub const ALL: [Action; 4] = [Action::Empty, Action::Quiet, Action::Normal, Action::Loud];

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Quiet => "quiet",
            Action::Normal => "normal",
            Action::Loud => "loud",
            Action::Empty => "empty",
        }
    }

    pub fn is_present(self) -> bool {
        self != Action::Empty
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Action {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quiet" => Ok(Action::Quiet),
            "normal" => Ok(Action::Normal),
            "loud" => Ok(Action::Loud),
            "empty" => Ok(Action::Empty),
            other => Err(Error::Config(format!("unknown action {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RobotCondition {
    Static,
    Dynamic,
}

impl RobotCondition {
    pub const ALL: [RobotCondition; 2] = [RobotCondition::Static, RobotCondition::Dynamic];

    pub fn as_str(self) -> &'static str {
        match self {
            RobotCondition::Static => "static",
            RobotCondition::Dynamic => "dynamic",
        }
    }
}

impl fmt::Display for RobotCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RobotCondition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(RobotCondition::Static),
            "dynamic" => Ok(RobotCondition::Dynamic),
            other => Err(Error::Config(format!("unknown robot condition {other:?}"))),
        }
    }
}

/// Reference to a 1 s clip: recording path plus start offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRef {
    pub path: PathBuf,
    pub offset_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    #[serde(flatten)]
    pub clip: ClipRef,
    pub room_id: String,
    pub action: Action,
    pub robot_condition: RobotCondition,
    pub azimuth_x: Option<f64>,
    pub radial_distance: Option<f64>,
    pub presence: bool,
}

impl LabeledSample {
    pub fn validate(&self) -> Result<()> {
        if self.presence != self.action.is_present() {
            return Err(Error::MalformedLabel(format!(
                "presence={} contradicts action {}",
                self.presence, self.action
            )));
        }
        match (self.presence, self.azimuth_x, self.radial_distance) {
            (true, Some(x), Some(r)) => {
                if !(0.0..PANORAMA_WIDTH).contains(&x) {
                    return Err(Error::MalformedLabel(format!("azimuth_x {x} outside [0, W)")));
                }
                if !(r > 0.0 && r <= MAX_DISTANCE_M) {
                    return Err(Error::MalformedLabel(format!("radial distance {r} outside (0, 6]")));
                }
                Ok(())
            }
            (false, None, None) => Ok(()),
            _ => Err(Error::MalformedLabel(
                "azimuth and distance must be present exactly when a person is".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRef {
    pub room_id: String,
    pub robot_condition: RobotCondition,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationRef {
    pub room_id: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Entry {
    Sample(LabeledSample),
    Profile(ProfileRef),
    Augmentation(AugmentationRef),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub samples: Vec<LabeledSample>,
    pub profiles: Vec<ProfileRef>,
    pub augmentation: Vec<AugmentationRef>,
}

impl Manifest {
    pub fn profile_for(&self, room_id: &str, condition: RobotCondition) -> Option<&ProfileRef> {
        self.profiles
            .iter()
            .find(|p| p.room_id == room_id && p.robot_condition == condition)
    }

    /// Distinct room ids referenced by samples, sorted.
    pub fn rooms(&self) -> Vec<String> {
        self.samples
            .iter()
            .map(|s| s.room_id.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        for s in &self.samples {
            s.validate()?;
            if self.profile_for(&s.room_id, s.robot_condition).is_none() {
                return Err(Error::MissingEmptyProfile {
                    room_id: s.room_id.clone(),
                    condition: s.robot_condition.to_string(),
                });
            }
        }
        Ok(())
    }

    pub fn entries(&self) -> impl Iterator<Item = Entry> + '_ {
        self.profiles
            .iter()
            .cloned()
            .map(Entry::Profile)
            .chain(self.augmentation.iter().cloned().map(Entry::Augmentation))
            .chain(self.samples.iter().cloned().map(Entry::Sample))
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        for e in self.entries() {
            serde_json::to_writer(&mut w, &e)?;
            w.write_all(b"\n").map_err(|e| Error::io("<manifest>", e))?;
        }
        Ok(())
    }

    pub fn read_from(r: impl BufRead) -> Result<Self> {
        let mut m = Manifest::default();
        for line in r.lines() {
            let line = line.map_err(|e| Error::io("<manifest>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<Entry>(&line)? {
                Entry::Sample(s) => m.samples.push(s),
                Entry::Profile(p) => m.profiles.push(p),
                Entry::Augmentation(a) => m.augmentation.push(a),
            }
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Loads a manifest and resolves relative audio paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut m = Self::read_from(BufReader::new(f))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        m.samples.iter_mut().for_each(|s| fix(&mut s.clip.path));
        m.profiles.iter_mut().for_each(|p| fix(&mut p.path));
        m.augmentation.iter_mut().for_each(|a| fix(&mut a.path));
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(action: Action, x: Option<f64>, r: Option<f64>) -> LabeledSample {
        LabeledSample {
            clip: ClipRef {
                path: "rec.wav".into(),
                offset_s: 0.25,
            },
            room_id: "room0".into(),
            action,
            robot_condition: RobotCondition::Static,
            azimuth_x: x,
            radial_distance: r,
            presence: action.is_present(),
        }
    }

    #[test]
    fn label_invariants() {
        assert!(sample(Action::Quiet, Some(10.0), Some(1.0)).validate().is_ok());
        assert!(sample(Action::Empty, None, None).validate().is_ok());
        assert!(sample(Action::Empty, Some(1.0), None).validate().is_err());
        assert!(sample(Action::Loud, None, None).validate().is_err());
        assert!(sample(Action::Loud, Some(1440.0), Some(1.0)).validate().is_err());
        assert!(sample(Action::Loud, Some(3.0), Some(6.5)).validate().is_err());
        let mut s = sample(Action::Normal, Some(3.0), Some(2.0));
        s.presence = false;
        assert!(s.validate().is_err());
    }

    #[test]
    fn jsonl_round_trip_and_profile_check() {
        let mut m = Manifest::default();
        m.samples.push(sample(Action::Loud, Some(360.0), Some(1.0)));
        m.samples.push(sample(Action::Empty, None, None));
        assert!(matches!(m.validate(), Err(Error::MissingEmptyProfile { .. })));
        m.profiles.push(ProfileRef {
            room_id: "room0".into(),
            robot_condition: RobotCondition::Static,
            path: "p.wav".into(),
        });
        m.augmentation.push(AugmentationRef {
            room_id: "aug0".into(),
            path: "a.wav".into(),
        });
        m.validate().unwrap();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().last().unwrap().contains("\"kind\":\"sample\""));
        assert!(text.contains("\"azimuth_x\":null"));
        let back = Manifest::read_from(&buf[..]).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.rooms(), vec!["room0".to_string()]);
    }
}
