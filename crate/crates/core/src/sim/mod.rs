//! Synthetic acoustic scenes: a walker's footsteps propagated to the array
//! over room and robot noise beds, with labels from the known geometry.

pub mod dataset;
pub mod motion;
pub mod scene;
pub mod signal;

pub use dataset::{generate_dataset, DatasetPlan, SimulationFile};
pub use motion::{RobotTrack, Trajectory};
pub use scene::{FootstepModel, Reverb, RobotNoise, RoomNoise, RoomSpec, SceneConfig, SceneRole, WalkerSpec};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::audio::{MultiChannelClip, SAMPLE_RATE};
use crate::error::Result;
use crate::geometry::{robot_azimuth_to_pixel, world_to_robot_azimuth, ArrayGeometry, SPEED_OF_SOUND};
use crate::manifest::Action;

/// Component streams of a scene's generator.
#[derive(Debug, Clone, Copy)]
enum Stream {
    Motion = 1,
    Source = 2,
    Reverb = 3,
    RoomBed = 4,
    RobotBed = 5,
    Walker = 6,
}

fn rng_for(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Rendered scene plus the ground truth needed for labels.
#[derive(Debug, Clone)]
pub struct SceneAudio {
    pub audio: MultiChannelClip,
    pub walker: Option<Trajectory>,
    pub robot: RobotTrack,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruth {
    /// Robot-frame azimuth, degrees in `[0, 360)`.
    pub azimuth_deg: f64,
    pub pixel: f64,
    pub distance_m: f64,
}

impl SceneAudio {
    /// Walker position relative to the robot at time `t`.
    pub fn truth_at(&self, t: f64) -> Result<Option<GroundTruth>> {
        let Some(w) = &self.walker else {
            return Ok(None);
        };
        let pose = self.robot.at(t);
        let p = w.at(t);
        let azimuth_deg = world_to_robot_azimuth(p, &pose)?;
        Ok(Some(GroundTruth {
            azimuth_deg,
            pixel: robot_azimuth_to_pixel(azimuth_deg),
            distance_m: (p[0] - pose.x).hypot(p[1] - pose.y),
        }))
    }
}

/// Renders one scene.
pub fn simulate_scene(scene: &SceneConfig, geometry: &ArrayGeometry) -> Result<SceneAudio> {
    scene.validate()?;
    geometry.validate()?;
    let fs = SAMPLE_RATE;
    let n = (scene.duration_s * fs as f64).round() as usize;
    let walker_seed = scene.walker_seed.unwrap_or(scene.seed);
    let mut motion_rng = rng_for(scene.seed, Stream::Motion);
    let robot = RobotTrack::for_condition(
        &mut motion_rng,
        scene.robot_condition,
        &scene.room,
        &scene.robot,
        scene.duration_s,
    );
    let walker = if scene.action == Action::Empty {
        None
    } else {
        let w = match &scene.walker.waypoints {
            Some(points) => {
                let speed = scene.walker.speed_mps[0];
                Trajectory::from_waypoints(points, speed)?
            }
            None => motion::random_walker(
                &mut rng_for(walker_seed, Stream::Walker),
                &scene.room,
                &scene.walker,
                &robot,
                scene.duration_s,
            )?,
        };
        motion::check_distances(&w, &robot, scene.duration_s, scene.walker.max_distance_m)?;
        Some(w)
    };
    let mut audio = match &walker {
        Some(w) => {
            let src = signal::synth_source(
                &mut rng_for(walker_seed, Stream::Source),
                &scene.footstep,
                scene.action,
                scene.duration_s,
                fs,
            );
            let mut clean = signal::propagate(&src, w, &robot, geometry, fs, SPEED_OF_SOUND)?;
            signal::add_reverb(&mut rng_for(walker_seed, Stream::Reverb), &mut clean, &src, &scene.room.reverb);
            clean
        }
        None => MultiChannelClip::zeros(geometry.mics.len(), n, fs),
    };
    if scene.beds {
        add_noise_beds(&mut audio, scene);
    }
    Ok(SceneAudio { audio, walker, robot })
}

/// Adds the room bed and, for a moving robot, its self-noise.
pub fn add_noise_beds(audio: &mut MultiChannelClip, scene: &SceneConfig) {
    let (c, n, fs) = (audio.n_channels(), audio.len(), audio.sample_rate());
    let room = signal::room_bed(&mut rng_for(scene.seed, Stream::RoomBed), c, n, fs, &scene.room.noise);
    for (ch, bed) in room.iter().enumerate() {
        for (o, v) in audio.channel_mut(ch).iter_mut().zip(bed) {
            *o += v;
        }
    }
    if scene.robot_condition == crate::manifest::RobotCondition::Dynamic {
        let robot = signal::robot_bed(&mut rng_for(scene.seed, Stream::RobotBed), c, n, fs, &scene.room.robot_noise);
        for (ch, bed) in robot.iter().enumerate() {
            for (o, v) in audio.channel_mut(ch).iter_mut().zip(bed) {
                *o += v;
            }
        }
    }
}
