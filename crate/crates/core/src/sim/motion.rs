//! Walker and robot paths as timed, piecewise-linear knots.

use std::f64::consts::PI;

use rand::Rng;

use super::scene::{RobotMotion, RoomSpec, WalkerSpec, MIN_WALKER_DISTANCE};
use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::manifest::RobotCondition;

/// Time step used when checking distance constraints.
const CHECK_DT: f64 = 0.02;
const MAX_ATTEMPTS: usize = 500;

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

fn knot_index(times: &[f64], t: f64) -> usize {
    match times.binary_search_by(|k| k.total_cmp(&t)) {
        Ok(i) => i,
        Err(i) => i.saturating_sub(1),
    }
}

/// Walker position over time; holds still after the last knot.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<[f64; 2]>,
}

impl Trajectory {
    pub fn stationary(p: [f64; 2]) -> Self {
        Self {
            times: vec![0.0],
            points: vec![p],
        }
    }

    /// Constant-speed path through `waypoints`.
    pub fn from_waypoints(waypoints: &[[f64; 2]], speed: f64) -> Result<Self> {
        if waypoints.is_empty() {
            return Err(Error::InvalidTrajectory("no waypoints".into()));
        }
        if speed <= 0.0 {
            return Err(Error::InvalidTrajectory("speed must be positive".into()));
        }
        let mut times = vec![0.0];
        for w in waypoints.windows(2) {
            let d = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
            times.push(times.last().unwrap() + d / speed);
        }
        Ok(Self {
            times,
            points: waypoints.to_vec(),
        })
    }

    pub fn at(&self, t: f64) -> [f64; 2] {
        let i = knot_index(&self.times, t);
        if i + 1 >= self.times.len() || t <= self.times[0] {
            return self.points[i.min(self.points.len() - 1)];
        }
        let u = (t - self.times[i]) / (self.times[i + 1] - self.times[i]);
        let (a, b) = (self.points[i], self.points[i + 1]);
        [lerp(a[0], b[0], u), lerp(a[1], b[1], u)]
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Largest speed over any segment.
    pub fn max_speed(&self) -> f64 {
        (1..self.times.len())
            .map(|i| {
                let d = (self.points[i][0] - self.points[i - 1][0]).hypot(self.points[i][1] - self.points[i - 1][1]);
                let dt = self.times[i] - self.times[i - 1];
                if dt > 0.0 {
                    d / dt
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Robot pose over time. Headings are unwrapped so interpolation is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotTrack {
    pub times: Vec<f64>,
    pub poses: Vec<Pose>,
}

impl RobotTrack {
    pub fn stationary(pose: Pose) -> Self {
        Self {
            times: vec![0.0],
            poses: vec![pose],
        }
    }

    pub fn at(&self, t: f64) -> Pose {
        let i = knot_index(&self.times, t);
        if i + 1 >= self.times.len() || t <= self.times[0] {
            return self.poses[i.min(self.poses.len() - 1)];
        }
        let u = (t - self.times[i]) / (self.times[i + 1] - self.times[i]);
        let (a, b) = (self.poses[i], self.poses[i + 1]);
        Pose {
            x: lerp(a.x, b.x, u),
            y: lerp(a.y, b.y, u),
            heading: lerp(a.heading, b.heading, u),
        }
    }

    /// Random drive: turn toward a waypoint, then drive to it.
    pub fn random<R: Rng>(rng: &mut R, room: &RoomSpec, motion: &RobotMotion, duration: f64) -> Self {
        let start = room.robot_start();
        let mut pose = Pose {
            x: start[0],
            y: start[1],
            heading: room.robot_heading,
        };
        let mut times = vec![0.0];
        let mut poses = vec![pose];
        let mut t = 0.0;
        let m = motion.wall_margin_m.min(room.width_m / 2.0).min(room.depth_m / 2.0);
        if motion.speed_mps <= 0.0 {
            return Self::stationary(pose);
        }
        while t < duration {
            let target = [
                rng.gen_range(m..=room.width_m - m),
                rng.gen_range(m..=room.depth_m - m),
            ];
            let dx = target[0] - pose.x;
            let dy = target[1] - pose.y;
            let dist = dx.hypot(dy);
            if dist < 0.05 {
                continue;
            }
            let desired = dy.atan2(dx);
            let mut turn = (desired - pose.heading).rem_euclid(2.0 * PI);
            if turn > PI {
                turn -= 2.0 * PI;
            }
            t += turn.abs() / motion.turn_rate_rps;
            pose.heading += turn;
            times.push(t);
            poses.push(pose);
            t += dist / motion.speed_mps;
            pose.x = target[0];
            pose.y = target[1];
            times.push(t);
            poses.push(pose);
        }
        Self { times, poses }
    }

    pub fn for_condition<R: Rng>(
        rng: &mut R,
        condition: RobotCondition,
        room: &RoomSpec,
        motion: &RobotMotion,
        duration: f64,
    ) -> Self {
        match condition {
            RobotCondition::Static => {
                let s = room.robot_start();
                Self::stationary(Pose {
                    x: s[0],
                    y: s[1],
                    heading: room.robot_heading,
                })
            }
            RobotCondition::Dynamic => Self::random(rng, room, motion, duration),
        }
    }

    /// Largest translational and rotational speeds over any segment.
    pub fn max_rates(&self) -> (f64, f64) {
        let mut v: f64 = 0.0;
        let mut w: f64 = 0.0;
        for i in 1..self.times.len() {
            let dt = self.times[i] - self.times[i - 1];
            if dt <= 0.0 {
                continue;
            }
            let (a, b) = (self.poses[i - 1], self.poses[i]);
            v = v.max((b.x - a.x).hypot(b.y - a.y) / dt);
            w = w.max((b.heading - a.heading).abs() / dt);
        }
        (v, w)
    }
}

fn distance(a: [f64; 2], p: &Pose) -> f64 {
    (a[0] - p.x).hypot(a[1] - p.y)
}

fn segment_ok(
    robot: &RobotTrack,
    a: [f64; 2],
    b: [f64; 2],
    t0: f64,
    t1: f64,
    max_distance: f64,
) -> bool {
    let n = ((t1 - t0) / CHECK_DT).ceil().max(1.0) as usize;
    (0..=n).all(|k| {
        let u = k as f64 / n as f64;
        let t = lerp(t0, t1, u);
        let p = [lerp(a[0], b[0], u), lerp(a[1], b[1], u)];
        let d = distance(p, &robot.at(t));
        d > MIN_WALKER_DISTANCE + 0.05 && d <= max_distance
    })
}

/// Checks that the walker stays within `(0.3, max]` of the robot throughout.
pub fn check_distances(walker: &Trajectory, robot: &RobotTrack, duration: f64, max_distance: f64) -> Result<()> {
    let n = (duration / CHECK_DT).ceil() as usize;
    for k in 0..=n {
        let t = (k as f64 * CHECK_DT).min(duration);
        let d = distance(walker.at(t), &robot.at(t));
        if !(d > MIN_WALKER_DISTANCE && d <= max_distance) {
            return Err(Error::InvalidTrajectory(format!(
                "walker {d:.3} m from the robot at t = {t:.2} s"
            )));
        }
    }
    Ok(())
}

/// Random walk between uniform waypoints, redrawing any leg that comes too
/// close to or too far from the robot.
pub fn random_walker<R: Rng>(
    rng: &mut R,
    room: &RoomSpec,
    spec: &WalkerSpec,
    robot: &RobotTrack,
    duration: f64,
) -> Result<Trajectory> {
    let m = spec.wall_margin_m;
    if room.width_m <= 2.0 * m || room.depth_m <= 2.0 * m {
        return Err(Error::InvalidTrajectory("room smaller than wall margins".into()));
    }
    let draw = |rng: &mut R| [rng.gen_range(m..room.width_m - m), rng.gen_range(m..room.depth_m - m)];
    let mut start = None;
    for _ in 0..MAX_ATTEMPTS {
        let p = draw(rng);
        if segment_ok(robot, p, p, 0.0, 0.0, spec.max_distance_m) {
            start = Some(p);
            break;
        }
    }
    let start = start.ok_or_else(|| Error::InvalidTrajectory("no valid start position".into()))?;
    let mut times = vec![0.0];
    let mut points = vec![start];
    let mut t = 0.0;
    while t < duration {
        let here = *points.last().unwrap();
        let mut leg = None;
        for _ in 0..MAX_ATTEMPTS {
            let next = draw(rng);
            let d = (next[0] - here[0]).hypot(next[1] - here[1]);
            if d < 0.3 {
                continue;
            }
            let speed = rng.gen_range(spec.speed_mps[0]..=spec.speed_mps[1]);
            let t1 = t + d / speed;
            if segment_ok(robot, here, next, t, t1, spec.max_distance_m) {
                leg = Some((next, t1));
                break;
            }
        }
        let (next, t1) = leg.ok_or_else(|| Error::InvalidTrajectory("no valid leg".into()))?;
        times.push(t1);
        points.push(next);
        t = t1;
    }
    Ok(Trajectory { times, points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn waypoint_path_interpolates() {
        let tr = Trajectory::from_waypoints(&[[0.0, 0.0], [2.0, 0.0], [2.0, 1.0]], 1.0).unwrap();
        assert_eq!(tr.times, vec![0.0, 2.0, 3.0]);
        assert_eq!(tr.at(1.0), [1.0, 0.0]);
        assert_eq!(tr.at(2.5), [2.0, 0.5]);
        assert_eq!(tr.at(10.0), [2.0, 1.0]);
        assert_eq!(tr.at(-1.0), [0.0, 0.0]);
        assert!((tr.max_speed() - 1.0).abs() < 1e-12);
        assert!(Trajectory::from_waypoints(&[], 1.0).is_err());
    }

    #[test]
    fn robot_respects_speed_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let room = RoomSpec::default();
        let track = RobotTrack::random(&mut rng, &room, &RobotMotion::default(), 60.0);
        let (v, w) = track.max_rates();
        assert!(v <= 0.25 + 1e-9 && w <= 0.17 + 1e-9, "{v} {w}");
        assert!(track.end_time_covers(60.0));
    }

    impl RobotTrack {
        fn end_time_covers(&self, d: f64) -> bool {
            *self.times.last().unwrap() >= d
        }
    }

    #[test]
    fn random_walker_keeps_its_distance() {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let room = RoomSpec::default();
            let robot = RobotTrack::random(&mut rng, &room, &RobotMotion::default(), 30.0);
            let spec = WalkerSpec::default();
            let w = random_walker(&mut rng, &room, &spec, &robot, 30.0).unwrap();
            check_distances(&w, &robot, 30.0, 6.0).unwrap();
            assert!(w.max_speed() <= 1.2 + 1e-9);
            assert!(w.end_time() >= 30.0);
        }
    }

    #[test]
    fn too_close_is_rejected() {
        let robot = RobotTrack::stationary(Pose::default());
        let w = Trajectory::stationary([0.1, 0.0]);
        assert!(matches!(check_distances(&w, &robot, 1.0, 6.0), Err(Error::InvalidTrajectory(_))));
        let far = Trajectory::stationary([7.0, 0.0]);
        assert!(check_distances(&far, &robot, 1.0, 6.0).is_err());
    }
}
