//! Whole-dataset generation: rooms × actions × conditions, empty-room
//! profile audio, augmentation-pool rooms and the manifest.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scene::{FootstepModel, RoomSpec, SceneConfig, SceneRole, WalkerSpec};
use super::simulate_scene;
use crate::audio::{sample_clips, write_recording, CLIP_RATE_HZ, CLIP_SECONDS};
use crate::error::{Error, Result};
use crate::geometry::ArrayGeometry;
use crate::manifest::{Action, AugmentationRef, ClipRef, LabeledSample, Manifest, ProfileRef, RobotCondition};

/// Compact description of a full synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetPlan {
    pub seed: u64,
    pub rooms: usize,
    pub room_prefix: String,
    pub actions: Vec<Action>,
    pub conditions: Vec<RobotCondition>,
    /// Length of each person recording.
    pub presence_s: f64,
    /// Length of each labeled empty-room recording.
    pub empty_s: f64,
    /// Length of the empty-room audio behind each profile.
    pub profile_s: f64,
    pub pool_rooms: usize,
    pub pool_s: f64,
    pub footstep: FootstepModel,
    pub walker: WalkerSpec,
    pub reverb: bool,
    /// Multiplies every room's noise beds.
    pub bed_scale: f64,
}

impl Default for DatasetPlan {
    fn default() -> Self {
        Self {
            seed: 0,
            rooms: 8,
            room_prefix: "room".into(),
            actions: Action::MOVING.to_vec(),
            conditions: RobotCondition::ALL.to_vec(),
            presence_s: 22.5,
            empty_s: 25.0,
            profile_s: 20.0,
            pool_rooms: 3,
            pool_s: 20.0,
            footstep: FootstepModel::default(),
            walker: WalkerSpec::default(),
            reverb: true,
            bed_scale: 1.0,
        }
    }
}

/// A simulation file: either a plan, explicit scenes, or both.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationFile {
    pub plan: Option<DatasetPlan>,
    pub scenes: Vec<SceneConfig>,
}

impl SimulationFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn all_scenes(&self) -> Vec<SceneConfig> {
        let mut scenes = self.plan.as_ref().map(DatasetPlan::scenes).unwrap_or_default();
        scenes.extend(self.scenes.iter().cloned());
        scenes
    }
}

fn mix_seed(seed: u64, parts: &[u64]) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(parts.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &p| (h ^ p).wrapping_mul(0x1000_0000_01b3)));
    rng.gen()
}

impl RoomSpec {
    /// A randomized room: size, robot placement, noise character, reverb.
    pub fn sampled<R: Rng>(rng: &mut R) -> Self {
        let mut room = RoomSpec {
            width_m: rng.gen_range(5.4..6.8),
            depth_m: rng.gen_range(4.6..5.8),
            ..RoomSpec::default()
        };
        room.robot_start = Some([
            room.width_m / 2.0 + rng.gen_range(-0.4..0.4),
            room.depth_m / 2.0 + rng.gen_range(-0.4..0.4),
        ]);
        room.robot_heading = rng.gen_range(0.0..2.0 * PI);
        room.noise.level *= rng.gen_range(0.7..1.4);
        room.noise.tilt = rng.gen_range(0.7..1.3);
        room.noise.shared_fraction = rng.gen_range(0.15..0.45);
        room.noise.hum_hz = if rng.gen_bool(0.5) { 50.0 } else { 60.0 };
        room.noise.hum_level *= rng.gen_range(0.25..1.5);
        room.robot_noise.hum_hz = rng.gen_range(110.0..190.0);
        room.robot_noise.hum_level *= rng.gen_range(0.8..1.25);
        room.robot_noise.broadband_level *= rng.gen_range(0.8..1.25);
        room.robot_noise.click_rate_hz *= rng.gen_range(0.7..1.4);
        room.reverb.decay_s = rng.gen_range(0.15..0.3);
        room.reverb.level = rng.gen_range(0.1..0.2);
        room
    }
}

impl DatasetPlan {
    pub fn room_id(&self, index: usize) -> String {
        format!("{}{}", self.room_prefix, index)
    }

    pub fn pool_room_id(&self, index: usize) -> String {
        format!("{}pool{}", self.room_prefix, index)
    }

    fn room_spec(&self, stream: u64, index: usize) -> RoomSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.seed, &[stream, index as u64]));
        let mut spec = RoomSpec::sampled(&mut rng);
        spec.reverb.enabled = self.reverb;
        spec.noise.level *= self.bed_scale;
        spec.noise.hum_level *= self.bed_scale;
        spec.robot_noise.hum_level *= self.bed_scale;
        spec.robot_noise.broadband_level *= self.bed_scale;
        spec.robot_noise.click_level *= self.bed_scale;
        spec
    }

    /// Every scene of the plan, in a fixed order.
    pub fn scenes(&self) -> Vec<SceneConfig> {
        let mut out = Vec::new();
        for r in 0..self.rooms {
            let room = self.room_spec(1, r);
            let id = self.room_id(r);
            for (ci, &cond) in self.conditions.iter().enumerate() {
                for &action in &self.actions {
                    let mut scene = self.scene(&id, &room, SceneRole::Recording, action, cond, self.presence_s, &[1, r as u64, ci as u64]);
                    scene.walker_seed = Some(mix_seed(self.seed, &[5, r as u64]));
                    out.push(scene);
                }
                out.push(self.scene(&id, &room, SceneRole::Recording, Action::Empty, cond, self.empty_s, &[2, r as u64, ci as u64]));
                out.push(self.scene(&id, &room, SceneRole::Profile, Action::Empty, cond, self.profile_s, &[3, r as u64, ci as u64]));
            }
        }
        for p in 0..self.pool_rooms {
            let room = self.room_spec(2, p);
            let id = self.pool_room_id(p);
            out.push(self.scene(&id, &room, SceneRole::Augmentation, Action::Empty, RobotCondition::Static, self.pool_s, &[4, p as u64]));
        }
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn scene(
        &self,
        room_id: &str,
        room: &RoomSpec,
        role: SceneRole,
        action: Action,
        condition: RobotCondition,
        duration_s: f64,
        key: &[u64],
    ) -> SceneConfig {
        let mut s = SceneConfig::new(room_id, action, condition, duration_s, mix_seed(self.seed, key));
        s.role = role;
        s.room = room.clone();
        s.footstep = self.footstep.clone();
        s.walker = self.walker.clone();
        s
    }
}

fn file_name(scene: &SceneConfig, index: usize) -> String {
    let role = match scene.role {
        SceneRole::Recording => "rec",
        SceneRole::Profile => "profile",
        SceneRole::Augmentation => "pool",
    };
    format!(
        "{:03}_{}_{}_{}_{}.wav",
        index, scene.room_id, role, scene.action, scene.robot_condition
    )
}

/// Renders every scene into `out_dir` and writes `manifest.jsonl` there.
/// Returns the manifest with paths relative to `out_dir`.
pub fn generate_dataset(scenes: &[SceneConfig], geometry: &ArrayGeometry, out_dir: impl AsRef<Path>) -> Result<Manifest> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut manifest = Manifest::default();
    for (i, scene) in scenes.iter().enumerate() {
        let rendered = simulate_scene(scene, geometry)?;
        let name = PathBuf::from(file_name(scene, i));
        write_recording(out_dir.join(&name), &rendered.audio)?;
        match scene.role {
            SceneRole::Recording => {
                for offset_s in sample_clips(scene.duration_s, CLIP_SECONDS, CLIP_RATE_HZ)? {
                    let truth = rendered.truth_at(offset_s)?;
                    manifest.samples.push(LabeledSample {
                        clip: ClipRef {
                            path: name.clone(),
                            offset_s,
                        },
                        room_id: scene.room_id.clone(),
                        action: scene.action,
                        robot_condition: scene.robot_condition,
                        azimuth_x: truth.map(|t| t.pixel),
                        radial_distance: truth.map(|t| t.distance_m),
                        presence: scene.action.is_present(),
                    });
                }
            }
            SceneRole::Profile => manifest.profiles.push(ProfileRef {
                room_id: scene.room_id.clone(),
                robot_condition: scene.robot_condition,
                path: name,
            }),
            SceneRole::Augmentation => manifest.augmentation.push(AugmentationRef {
                room_id: scene.room_id.clone(),
                path: name,
            }),
        }
    }
    manifest.save(out_dir.join("manifest.jsonl"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{decode_cyclic, encode_cyclic, PANORAMA_WIDTH};

    fn tiny_plan() -> DatasetPlan {
        DatasetPlan {
            rooms: 2,
            actions: vec![Action::Normal],
            conditions: vec![RobotCondition::Static],
            presence_s: 3.0,
            empty_s: 2.0,
            profile_s: 10.0,
            pool_rooms: 1,
            pool_s: 10.0,
            ..DatasetPlan::default()
        }
    }

    #[test]
    fn plan_expands_to_the_expected_scenes() {
        let p = DatasetPlan::default();
        let scenes = p.scenes();
        assert_eq!(scenes.len(), 8 * 2 * (3 + 2) + 3);
        let recorded: f64 = scenes.iter().filter(|s| s.room_id.starts_with("room") && !s.room_id.contains("pool")).map(|s| s.duration_s).sum();
        assert!((recorded - 1800.0).abs() < 1e-9, "{recorded}");
        assert_eq!(p.scenes(), scenes);
        let walker_seeds = |room: &str| {
            let seeds: std::collections::BTreeSet<Option<u64>> = scenes
                .iter()
                .filter(|s| s.room_id == room && s.action.is_present())
                .map(|s| s.walker_seed)
                .collect();
            seeds
        };
        assert_eq!(walker_seeds("room0").len(), 1);
        assert_ne!(walker_seeds("room0"), walker_seeds("room1"));
    }

    #[test]
    fn manifest_counts_and_labels() {
        let dir = tempfile::tempdir().unwrap();
        let g = ArrayGeometry::default();
        let m = generate_dataset(&tiny_plan().scenes(), &g, dir.path()).unwrap();
        // 3 s → 9 clips, 2 s → 5 clips, per room.
        assert_eq!(m.samples.len(), 2 * (9 + 5));
        assert_eq!(m.profiles.len(), 2);
        assert_eq!(m.augmentation.len(), 1);
        m.validate().unwrap();
        for s in &m.samples {
            if let Some(x) = s.azimuth_x {
                let (a, b) = encode_cyclic(x, PANORAMA_WIDTH).unwrap();
                assert!((decode_cyclic(a, b, PANORAMA_WIDTH).unwrap() - x).abs() < 1e-6);
            }
        }
        let first = std::fs::read(dir.path().join("manifest.jsonl")).unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        generate_dataset(&tiny_plan().scenes(), &g, dir2.path()).unwrap();
        assert_eq!(first, std::fs::read(dir2.path().join("manifest.jsonl")).unwrap());
        let loaded = Manifest::load(dir.path().join("manifest.jsonl")).unwrap();
        assert_eq!(loaded.samples.len(), m.samples.len());
    }

    #[test]
    fn sixty_second_recordings_give_237_clips() {
        assert_eq!(sample_clips(60.0, CLIP_SECONDS, CLIP_RATE_HZ).unwrap().len(), 237);
        let p = DatasetPlan {
            presence_s: 60.0,
            ..DatasetPlan::default()
        };
        let n: usize = p
            .scenes()
            .iter()
            .filter(|s| s.role == SceneRole::Recording && s.action.is_present())
            .map(|s| sample_clips(s.duration_s, CLIP_SECONDS, CLIP_RATE_HZ).unwrap().len())
            .sum();
        assert_eq!(n, 8 * 3 * 2 * 237);
    }

    #[test]
    fn simulation_file_parses() {
        let f = SimulationFile::from_toml(
            r#"
            [plan]
            seed = 3
            rooms = 2

            [[scenes]]
            room_id = "extra"
            robot_condition = "static"
            action = "loud"
            duration_s = 2.0
            seed = 1
            "#,
        )
        .unwrap();
        assert_eq!(f.plan.as_ref().unwrap().rooms, 2);
        assert_eq!(f.all_scenes().len(), 2 * 2 * 5 + 3 + 1);
        assert!(SimulationFile::from_toml("nonsense = 1").is_err());
    }
}
