//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use footfall::audio::{MultiChannelClip, SAMPLE_RATE};
use footfall::detector::gradcheck::{gradient_check, masked_head_delta, synthetic_batch};
use footfall::detector::model::ParamGroup;
use footfall::detector::{CachedFeatures, DetectorModel, LossWeights, Target, TrainConfig, Trainer, FEATURE_LEN};
use footfall::doa::{baseline_predict, gcc_phat, GccPhat};
use footfall::geometry::{circular_pixel_error, decode_cyclic, encode_cyclic, ArrayGeometry, Pose, PANORAMA_WIDTH};
use footfall::harness::baselines::FRONT_METHOD;
use footfall::harness::tracker::TrackAction;
use footfall::harness::{
    evaluate_baselines, loocv_seeds, prepare, stream_track, tracking_success, ClipSource, MetricsTable, ModelDetector,
    PreparedData, SimulatedPanSink, TrackerConfig,
};
use footfall::manifest::{Action, Manifest, RobotCondition};
use footfall::sim::{generate_dataset, simulate_scene, DatasetPlan, RoomSpec, SceneConfig, SceneRole};
use footfall::spectro::{clip_spectrograms, empty_profile, subtract_background, Spectrogram, Stft};

type Verdict = Result<String, String>;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit_s: f64, detail: String) -> Verdict {
    check(
        elapsed.as_secs_f64() < limit_s,
        format!("{detail}; {:.1}s of {limit_s}s", elapsed.as_secs_f64()),
    )
}

struct Suite {
    failed: Vec<usize>,
}

impl Suite {
    fn run(&mut self, n: usize, name: &str, body: impl FnOnce() -> Verdict) {
        let started = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(body)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = started.elapsed().as_secs_f64();
        match verdict {
            Ok(d) => println!("criterion {n:>2} PASS  {name}: {d} [{secs:.1}s]"),
            Err(d) => {
                println!("criterion {n:>2} FAIL  {name}: {d} [{secs:.1}s]");
                self.failed.push(n);
            }
        }
    }
}

fn spectrogram_shape() -> Verdict {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let channels = (0..4)
        .map(|_| (0..SAMPLE_RATE as usize).map(|_| rng.gen_range(-0.1..0.1)).collect())
        .collect();
    let clip = MultiChannelClip::new(channels, SAMPLE_RATE).unwrap();
    let specs = clip_spectrograms(&Stft::new(), &clip).unwrap();
    let shapes: Vec<[usize; 3]> = specs.iter().map(Spectrogram::shape).collect();
    let ok = shapes.len() == 4 && shapes.iter().all(|s| *s == [2, 257, 345]);
    if !ok {
        return Err(format!("shapes {shapes:?}"));
    }
    within(started.elapsed(), 1.0, "4 mics x [2, 257, 345]".into())
}

fn random_spectrogram(rng: &mut ChaCha8Rng, bins: usize, frames: usize) -> Spectrogram {
    let mut s = Spectrogram::zeros(bins, frames);
    for v in &mut s.data {
        *v = rng.gen_range(0.0..=1.0);
    }
    s
}

fn subtraction_algebra() -> Verdict {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..1000 {
        let bins = rng.gen_range(1..40);
        let frames = rng.gen_range(1..40);
        let s = random_spectrogram(&mut rng, bins, frames);
        let e = random_spectrogram(&mut rng, bins, frames);
        let w: f64 = rng.gen_range(0.0..=1.0);
        let mut wide = s.clone();
        for v in &mut wide.data {
            *v = 2.0 * *v - 0.5;
        }
        let clamped: Vec<f64> = wide.data.iter().map(|v| v.clamp(0.0, 1.0)).collect();
        if subtract_background(&wide, &e, 0.0).unwrap().data != clamped {
            return Err(format!("case {case}: w = 0 is not the identity after clamping"));
        }
        if subtract_background(&s, &s, 1.0).unwrap().data.iter().any(|&v| v != 0.0) {
            return Err(format!("case {case}: self-subtraction is not zero"));
        }
        let out = subtract_background(&s, &e, w).unwrap();
        if out.data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(format!("case {case}: value outside [0, 1]"));
        }
        let oracle = s.data.iter().zip(&e.data).map(|(a, b)| (a - w * b).max(0.0));
        if out.data.iter().zip(oracle).any(|(v, o)| *v != o) {
            return Err(format!("case {case}: differs from elementwise oracle"));
        }
    }
    within(started.elapsed(), 10.0, "1000 random spectrograms".into())
}

fn cyclic_codec() -> Verdict {
    let started = Instant::now();
    let mut worst = 0.0f64;
    for x in 0..PANORAMA_WIDTH as usize {
        let x = x as f64;
        let (s, c) = encode_cyclic(x, PANORAMA_WIDTH).unwrap();
        let back = decode_cyclic(s, c, PANORAMA_WIDTH).unwrap();
        worst = worst.max(circular_pixel_error(back, x, PANORAMA_WIDTH));
    }
    if worst >= 1e-6 {
        return Err(format!("worst round-trip error {worst:.3e} px"));
    }
    within(started.elapsed(), 1.0, format!("worst error {worst:.1e} px over 1440 pixels"))
}

fn white(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Integer lag maximizing the plain cross-correlation `sum a[n] b[n + k]`.
fn brute_force_lag(a: &[f64], b: &[f64], max_lag: isize) -> isize {
    (-max_lag..=max_lag)
        .map(|k| {
            let s: f64 = (0..a.len() as isize)
                .filter(|&n| n + k >= 0 && ((n + k) as usize) < b.len())
                .map(|n| a[n as usize] * b[(n + k) as usize])
                .sum();
            (k, s)
        })
        .fold((0, f64::NEG_INFINITY), |best, (k, v)| if v > best.1 { (k, v) } else { best })
        .0
}

fn gcc_oracle_equivalence() -> Verdict {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut hits = 0;
    for _ in 0..200 {
        let d: isize = rng.gen_range(-40..=40);
        let src = white(&mut rng, 4096 + 80);
        let a: Vec<f64> = src[40..40 + 4096].to_vec();
        let b: Vec<f64> = src[(40 - d) as usize..(40 - d) as usize + 4096].to_vec();
        let reference = brute_force_lag(&a, &b, 40);
        let g = gcc_phat(&a, &b, 40).unwrap();
        if (g.delay - reference as f64).abs() <= 0.25 {
            hits += 1;
        }
    }
    if hits != 200 {
        return Err(format!("{hits}/200 within 0.25 samples"));
    }
    within(started.elapsed(), 30.0, "200/200 within 0.25 samples".into())
}

fn geometric_tdoa() -> Verdict {
    let started = Instant::now();
    let g = ArrayGeometry::default();
    let engine = GccPhat::new();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (fa, fb) = g.front_pair;
    let (mut delay_hits, mut angle_hits) = (0, 0);
    for k in 0..50 {
        let mut s = SceneConfig::new("tdoa", Action::Loud, RobotCondition::Static, 1.0, 500 + k);
        s.beds = false;
        s.room.reverb.enabled = false;
        s.room.robot_heading = 0.0;
        let start = s.room.robot_start();
        let pose = Pose {
            x: start[0],
            y: start[1],
            heading: 0.0,
        };
        let deg: f64 = rng.gen_range(0.0..360.0);
        let r: f64 = rng.gen_range(0.8..2.2);
        let p_robot = [r * deg.to_radians().cos(), r * deg.to_radians().sin()];
        s.walker.waypoints = Some(vec![pose.to_world(p_robot)]);
        let out = simulate_scene(&s, &g).unwrap();
        let dist = |m: usize| (p_robot[0] - g.mics[m].position[0]).hypot(p_robot[1] - g.mics[m].position[1]);
        let analytic = (dist(fb) - dist(fa)) / 343.0 * SAMPLE_RATE as f64;
        let est = gcc_phat(out.audio.channel(fa), out.audio.channel(fb), 40).unwrap().delay;
        if (est - analytic).abs() <= 1.0 {
            delay_hits += 1;
        }
        let p = baseline_predict(&engine, &out.audio, &g, Some(deg)).unwrap();
        if footfall::geometry::circular_error(p.angle_deg, deg) <= 5.0 {
            angle_hits += 1;
        }
    }
    let detail = format!("delay within 1 sample {delay_hits}/50, angle within 5 deg {angle_hits}/50");
    if delay_hits != 50 || angle_hits < 48 {
        return Err(detail);
    }
    within(started.elapsed(), 120.0, detail)
}

fn gradient_check_criterion() -> Verdict {
    let started = Instant::now();
    let model = DetectorModel::new(0, ndarray::Array1::zeros(FEATURE_LEN), ndarray::Array1::ones(FEATURE_LEN)).unwrap();
    let (feats, targets) = synthetic_batch(0, 16);
    let refs: Vec<&CachedFeatures> = feats.iter().collect();
    let report = gradient_check(&model, &refs, &targets, TrainConfig::default().loss_weights(), 20, 0).unwrap();
    let missing: Vec<ParamGroup> = ParamGroup::ALL
        .into_iter()
        .filter(|g| !report.probes.iter().any(|p| p.group == *g))
        .collect();
    let detail = format!(
        "max relative error {:.2e} over {} probes",
        report.max_rel_error,
        report.probes.len()
    );
    if !report.passed() || report.probes.len() != 20 || !missing.is_empty() {
        return Err(format!("{detail}; unprobed groups {missing:?}"));
    }
    within(started.elapsed(), 60.0, detail)
}

fn loss_masking() -> Verdict {
    let started = Instant::now();
    let (feats, _) = synthetic_batch(7, 12);
    let refs: Vec<&CachedFeatures> = feats.iter().collect();
    let targets = vec![Target::empty(); refs.len()];
    let model = DetectorModel::new(3, ndarray::Array1::zeros(FEATURE_LEN), ndarray::Array1::ones(FEATURE_LEN)).unwrap();
    for delta in [1e-6, 1e-2, 1.0, 50.0] {
        let d = masked_head_delta(&model, &refs, &targets, LossWeights::default(), delta).unwrap();
        if d != 0.0 {
            return Err(format!("head shift {delta} changed the loss by {d:e}"));
        }
    }
    within(started.elapsed(), 10.0, "loss change exactly 0 for 4 head shifts".into())
}

const PRESENT_CELLS: usize = 6;

fn present_cells() -> impl Iterator<Item = (Action, RobotCondition)> {
    RobotCondition::ALL
        .into_iter()
        .flat_map(|c| Action::MOVING.into_iter().map(move |a| (a, c)))
}

fn mae(t: &MetricsTable, a: Action, c: RobotCondition) -> f64 {
    t.cell(a, c).and_then(|x| x.mae_deg).unwrap_or(f64::NAN)
}

struct LoocvOutcome {
    detector: MetricsTable,
    front: MetricsTable,
    elapsed: Duration,
    audio_min: f64,
}

fn run_loocv_ordering(dir: &Path) -> (PreparedData, LoocvOutcome) {
    let started = Instant::now();
    let plan = DatasetPlan::default();
    let audio_s: f64 = plan
        .scenes()
        .iter()
        .filter(|s| !s.room_id.contains("pool"))
        .map(|s| s.duration_s)
        .sum();
    let geometry = ArrayGeometry::default();
    generate_dataset(&plan.scenes(), &geometry, dir).unwrap();
    let manifest = Manifest::load(dir.join("manifest.jsonl")).unwrap();
    let config = TrainConfig::default();
    let data = prepare(&manifest, &config).unwrap();
    let (_, detector) = loocv_seeds(&data, &config, &[0, 1, 2]).unwrap();
    let front = evaluate_baselines(&manifest, &geometry)
        .unwrap()
        .into_iter()
        .find(|t| t.method == FRONT_METHOD)
        .unwrap();
    let outcome = LoocvOutcome {
        detector,
        front,
        elapsed: started.elapsed(),
        audio_min: audio_s / 60.0,
    };
    (data, outcome)
}

fn loocv_ordering(o: &LoocvOutcome) -> Verdict {
    let mut lines = Vec::new();
    let mut ok = true;
    for (a, c) in present_cells() {
        let (d, f) = (mae(&o.detector, a, c), mae(&o.front, a, c));
        let good = d < f && f < 90.0;
        ok &= good;
        lines.push(format!("{a}/{c} {d:.1}<{f:.1}{}", if good { "" } else { "!" }));
    }
    let presence = o.detector.overall.presence_accuracy.unwrap_or(0.0);
    let distance = o.detector.overall.distance_accuracy.unwrap_or(0.0);
    ok &= lines.len() == PRESENT_CELLS && presence > 0.75 && distance > 0.55;
    let detail = format!(
        "{:.0} min audio; MAE detector<front: {}; presence {:.3}, distance {:.3}",
        o.audio_min,
        lines.join(", "),
        presence,
        distance
    );
    if !ok {
        return Err(detail);
    }
    within(o.elapsed, 1800.0, detail)
}

fn trend_ordering(o: &LoocvOutcome) -> Verdict {
    let t = &o.detector;
    let mut broken = Vec::new();
    for c in RobotCondition::ALL {
        let (q, n, l) = (mae(t, Action::Quiet, c), mae(t, Action::Normal, c), mae(t, Action::Loud, c));
        if !(l <= n && n <= q) {
            broken.push(format!("{c}: loud {l:.1}, normal {n:.1}, quiet {q:.1}"));
        }
    }
    for a in Action::MOVING {
        let (s, d) = (mae(t, a, RobotCondition::Static), mae(t, a, RobotCondition::Dynamic));
        if !(s <= d) {
            broken.push(format!("{a}: static {s:.1} > dynamic {d:.1}"));
        }
    }
    check(
        broken.is_empty(),
        if broken.is_empty() {
            "loud <= normal <= quiet per condition, static <= dynamic per action".into()
        } else {
            broken.join("; ")
        },
    )
}

fn streaming(data: &PreparedData) -> Verdict {
    let config = TrainConfig::default();
    let all: Vec<usize> = (0..data.cache.samples.len()).collect();
    let (model, _) = Trainer::new(config).unwrap().train(&data.cache.examples(&all, &[]), None).unwrap();

    let geometry = ArrayGeometry::default();
    let room = RoomSpec::sampled(&mut ChaCha8Rng::seed_from_u64(1010));
    let mut walk = SceneConfig::new("stream", Action::Quiet, RobotCondition::Static, 60.0, 1011);
    walk.room = room.clone();
    let mut empty = SceneConfig::new("stream", Action::Empty, RobotCondition::Static, 20.0, 1012);
    empty.room = room;
    empty.role = SceneRole::Profile;
    let scene = simulate_scene(&walk, &geometry).unwrap();
    let empty_audio = simulate_scene(&empty, &geometry).unwrap().audio;
    let profile = empty_profile(&Stft::new(), &empty_audio, "stream", RobotCondition::Static).unwrap();

    let cfg = TrackerConfig::default();
    let mut sink = SimulatedPanSink::new(cfg.initial_pan_deg, 90.0, 0.0);
    let mut detector = ModelDetector::new(&model, &profile);
    let out = stream_track(&mut ClipSource::new(scene.audio.clone()), &mut detector, &mut sink, &cfg).unwrap();

    let ticks_ok = out
        .events
        .iter()
        .all(|e| ((e.t_s - 1.0) * cfg.decision_hz).fract().abs() < 1e-9 && e.t_s <= 60.0);
    let n_ticks = out.events.iter().map(|e| (e.t_s * 1000.0).round() as u64).collect::<std::collections::BTreeSet<_>>().len();
    let during_pan = out
        .decisions()
        .filter(|e| {
            out.pans.iter().any(|p| {
                let end = p.completed_s.map_or(f64::INFINITY, |c| c + cfg.settle_s);
                e.t_s > p.issued_s && e.t_s < end
            })
        })
        .count();
    let completes = out.events.iter().filter(|e| e.action_taken == TrackAction::PanComplete).count();
    let max_ms = out.max_compute().as_secs_f64() * 1e3;
    let checkpoints = out.checkpoints(cfg.settle_s);
    let success = tracking_success(&checkpoints, cfg.fov_deg, |t| {
        scene.truth_at(t).ok().flatten().map(|g| g.azimuth_deg)
    });
    let detail = format!(
        "{} decisions on {} ticks, {} pans ({completes} completed), {during_pan} decisions during pans, \
         slowest inference {max_ms:.1} ms, success {} over {} checkpoints",
        out.decisions().count(),
        n_ticks,
        out.pans.len(),
        success.map_or("n/a".into(), |s| format!("{:.1}%", s * 100.0)),
        checkpoints.len()
    );
    check(
        ticks_ok && during_pan == 0 && max_ms < 250.0 && success.is_some_and(|s| s >= 0.75),
        detail,
    )
}

const SMALL_PLAN: &str = r#"
[plan]
seed = 3
rooms = 3
presence_s = 6.0
empty_s = 6.0
profile_s = 10.0
pool_rooms = 1
pool_s = 10.0
"#;

fn determinism(criterion8: Duration) -> Verdict {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    std::fs::write(cwd.join("sim.toml"), SMALL_PLAN).unwrap();
    std::fs::write(cwd.join("train.toml"), "").unwrap();
    let footfall = |args: &[&str]| {
        let out = Command::new(env!("CARGO_BIN_EXE_footfall"))
            .args(args)
            .current_dir(cwd)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    };
    footfall(&["simulate", "sim.toml", "-o", "data"]);
    for name in ["a.csv", "b.csv"] {
        footfall(&["--seed", "9", "eval", "--loocv", "data/manifest.jsonl", "train.toml", "-o", name]);
    }
    let a = std::fs::read(cwd.join("a.csv")).unwrap();
    let b = std::fs::read(cwd.join("b.csv")).unwrap();
    if a != b {
        return Err("reports differ".into());
    }
    within(
        started.elapsed(),
        2.0 * criterion8.as_secs_f64(),
        format!("3-room manifest, two eval runs byte-identical ({} bytes)", a.len()),
    )
}

fn main() {
    let mut suite = Suite { failed: Vec::new() };
    suite.run(1, "spectrogram shape", spectrogram_shape);
    suite.run(2, "background subtraction algebra", subtraction_algebra);
    suite.run(3, "cyclic codec round trip", cyclic_codec);
    suite.run(4, "GCC-PHAT matches brute force", gcc_oracle_equivalence);
    suite.run(5, "geometric TDOA recovery", geometric_tdoa);
    suite.run(6, "gradient check", gradient_check_criterion);
    suite.run(7, "loss masking", loss_masking);

    let dir = tempfile::tempdir().unwrap();
    let shared = catch_unwind(AssertUnwindSafe(|| run_loocv_ordering(dir.path())));
    let (data, loocv) = match shared {
        Ok((d, o)) => (Some(d), Some(o)),
        Err(_) => (None, None),
    };
    let missing = || Err::<String, String>("LOOCV run failed".into());
    suite.run(8, "simulated LOOCV ordering", || loocv.as_ref().map_or_else(missing, loocv_ordering));
    suite.run(9, "qualitative trends", || loocv.as_ref().map_or_else(missing, trend_ordering));
    suite.run(10, "streaming tracker", || data.as_ref().map_or_else(missing, streaming));
    let budget = loocv.as_ref().map_or(Duration::from_secs(3600), |o| o.elapsed);
    suite.run(11, "determinism", || determinism(budget));

    if suite.failed.is_empty() {
        println!("acceptance: all 11 criteria passed");
    } else {
        println!("acceptance: failed criteria {:?}", suite.failed);
        std::process::exit(1);
    }
}
