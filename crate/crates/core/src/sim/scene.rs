//! Scene configuration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::{Action, RobotCondition};

pub const MAX_ROBOT_SPEED: f64 = 0.25;
pub const MAX_ROBOT_TURN_RATE: f64 = 0.17;
pub const MIN_WALKER_DISTANCE: f64 = 0.3;

/// What a generated recording is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneRole {
    /// Labeled 1 s clips.
    #[default]
    Recording,
    /// Empty-room audio for the subtraction profile.
    Profile,
    /// Empty-room audio for the augmentation pool.
    Augmentation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoomNoise {
    /// RMS of the broadband bed.
    pub level: f64,
    /// Power spectrum exponent: 1 is pink.
    pub tilt: f64,
    /// Fraction of bed power common to all channels below `coherent_hz`.
    pub shared_fraction: f64,
    /// Above this frequency the bed is independent across channels.
    pub coherent_hz: f64,
    pub hum_hz: f64,
    /// Amplitude of the hum fundamental; harmonics fall off as 1/k.
    pub hum_level: f64,
}

impl Default for RoomNoise {
    fn default() -> Self {
        Self {
            level: 0.03,
            tilt: 1.0,
            shared_fraction: 0.3,
            coherent_hz: 800.0,
            hum_hz: 60.0,
            hum_level: 0.006,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotNoise {
    pub hum_hz: f64,
    pub hum_level: f64,
    /// RMS of band-limited motor noise.
    pub broadband_level: f64,
    pub click_rate_hz: f64,
    pub click_level: f64,
    /// Per-channel gains are drawn from `1 ± gain_spread`.
    pub gain_spread: f64,
}

impl Default for RobotNoise {
    fn default() -> Self {
        Self {
            hum_hz: 140.0,
            hum_level: 0.0108,
            broadband_level: 0.0144,
            click_rate_hz: 3.0,
            click_level: 0.072,
            gain_spread: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Reverb {
    pub enabled: bool,
    /// Time for the tail to fall by 60 dB.
    pub decay_s: f64,
    /// Tail gain relative to the direct path at 1 m.
    pub level: f64,
    pub predelay_s: f64,
}

impl Default for Reverb {
    fn default() -> Self {
        Self {
            enabled: true,
            decay_s: 0.2,
            level: 0.15,
            predelay_s: 0.005,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoomSpec {
    pub width_m: f64,
    pub depth_m: f64,
    /// Robot start position; defaults to the room center.
    pub robot_start: Option<[f64; 2]>,
    /// Robot start heading, radians.
    pub robot_heading: f64,
    pub noise: RoomNoise,
    pub robot_noise: RobotNoise,
    pub reverb: Reverb,
}

impl Default for RoomSpec {
    fn default() -> Self {
        Self {
            width_m: 5.0,
            depth_m: 4.0,
            robot_start: None,
            robot_heading: 0.0,
            noise: RoomNoise::default(),
            robot_noise: RobotNoise::default(),
            reverb: Reverb::default(),
        }
    }
}

impl RoomSpec {
    pub fn robot_start(&self) -> [f64; 2] {
        self.robot_start.unwrap_or([self.width_m / 2.0, self.depth_m / 2.0])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FootstepModel {
    pub interval_s: [f64; 2],
    pub burst_s: [f64; 2],
    pub band_hz: [f64; 2],
    /// Envelope time constant as a fraction of the burst length.
    pub decay_fraction: f64,
    /// Peak amplitude of a quiet step at 1 m.
    pub base_amplitude: f64,
    /// Per-action amplitude scale: quiet, normal, loud.
    pub action_scale: [f64; 3],
    /// Per-step amplitude jitter, as a fraction.
    pub jitter: f64,
}

impl Default for FootstepModel {
    fn default() -> Self {
        Self {
            interval_s: [0.45, 0.6],
            burst_s: [0.02, 0.04],
            band_hz: [80.0, 2000.0],
            decay_fraction: 0.3,
            base_amplitude: 1.0,
            action_scale: [1.0, 3.0, 9.0],
            jitter: 0.2,
        }
    }
}

impl FootstepModel {
    pub fn scale(&self, action: Action) -> f64 {
        match action {
            Action::Quiet => self.action_scale[0],
            Action::Normal => self.action_scale[1],
            Action::Loud => self.action_scale[2],
            Action::Empty => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkerSpec {
    pub speed_mps: [f64; 2],
    /// Explicit path in room coordinates; random when absent.
    pub waypoints: Option<Vec<[f64; 2]>>,
    /// Keep-out distance from the walls.
    pub wall_margin_m: f64,
    pub max_distance_m: f64,
}

impl Default for WalkerSpec {
    fn default() -> Self {
        Self {
            speed_mps: [0.5, 1.2],
            waypoints: None,
            wall_margin_m: 0.3,
            max_distance_m: crate::manifest::MAX_DISTANCE_M,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotMotion {
    pub speed_mps: f64,
    pub turn_rate_rps: f64,
    /// Keep-out distance from the walls for robot waypoints.
    pub wall_margin_m: f64,
}

impl Default for RobotMotion {
    fn default() -> Self {
        Self {
            speed_mps: MAX_ROBOT_SPEED,
            turn_rate_rps: MAX_ROBOT_TURN_RATE,
            wall_margin_m: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub room_id: String,
    #[serde(default)]
    pub role: SceneRole,
    pub robot_condition: RobotCondition,
    pub action: Action,
    pub duration_s: f64,
    pub seed: u64,
    /// Seed for the walker path and footstep sequence; `seed` when absent.
    #[serde(default)]
    pub walker_seed: Option<u64>,
    #[serde(default)]
    pub room: RoomSpec,
    #[serde(default)]
    pub walker: WalkerSpec,
    #[serde(default)]
    pub footstep: FootstepModel,
    #[serde(default)]
    pub robot: RobotMotion,
    /// Room and robot noise beds; off means an infinite SNR.
    #[serde(default = "yes")]
    pub beds: bool,
}

fn yes() -> bool {
    true
}

impl SceneConfig {
    pub fn new(room_id: &str, action: Action, robot_condition: RobotCondition, duration_s: f64, seed: u64) -> Self {
        Self {
            room_id: room_id.into(),
            role: SceneRole::Recording,
            robot_condition,
            action,
            duration_s,
            seed,
            walker_seed: None,
            room: RoomSpec::default(),
            walker: WalkerSpec::default(),
            footstep: FootstepModel::default(),
            robot: RobotMotion::default(),
            beds: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("scene {}: {m}", self.room_id)));
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return bad(format!("duration {} must be positive", self.duration_s));
        }
        if self.room.width_m <= 0.0 || self.room.depth_m <= 0.0 {
            return bad("room dimensions must be positive".into());
        }
        let [x, y] = self.room.robot_start();
        if !(0.0..=self.room.width_m).contains(&x) || !(0.0..=self.room.depth_m).contains(&y) {
            return bad("robot starts outside the room".into());
        }
        if self.robot.speed_mps < 0.0 || self.robot.speed_mps > MAX_ROBOT_SPEED + 1e-12 {
            return bad(format!("robot speed {} outside [0, {MAX_ROBOT_SPEED}]", self.robot.speed_mps));
        }
        if self.robot.turn_rate_rps <= 0.0 || self.robot.turn_rate_rps > MAX_ROBOT_TURN_RATE + 1e-12 {
            return bad(format!(
                "robot turn rate {} outside (0, {MAX_ROBOT_TURN_RATE}]",
                self.robot.turn_rate_rps
            ));
        }
        let [lo, hi] = self.walker.speed_mps;
        if !(lo > 0.0 && lo <= hi) {
            return bad("walker speed range must be positive and ordered".into());
        }
        if self.walker.max_distance_m > crate::manifest::MAX_DISTANCE_M || self.walker.max_distance_m <= MIN_WALKER_DISTANCE {
            return bad("walker max distance must lie in (0.3, 6]".into());
        }
        let f = &self.footstep;
        if !(f.interval_s[0] > 0.0 && f.interval_s[0] <= f.interval_s[1])
            || !(f.burst_s[0] > 0.0 && f.burst_s[0] <= f.burst_s[1])
            || !(f.band_hz[0] >= 0.0 && f.band_hz[0] < f.band_hz[1])
        {
            return bad("footstep ranges must be positive and ordered".into());
        }
        if self.room.reverb.enabled && self.room.reverb.decay_s <= 0.0 {
            return bad("reverb decay must be positive".into());
        }
        if self.role != SceneRole::Recording && self.action != Action::Empty {
            return bad("profile and augmentation scenes must be empty".into());
        }
        Ok(())
    }
}
