mod common;

use std::collections::BTreeMap;
use std::sync::OnceLock;

use footfall::geometry::{pixel_to_degrees, ArrayGeometry};
use footfall::harness::baselines::{FRONT_METHOD, GCC_METHOD, UNIFORM_METHOD};
use footfall::harness::{evaluate_baselines, prepare, run_loocv, Report, ReportFormat};
use footfall::manifest::{Action, Manifest, RobotCondition};

fn dataset() -> &'static Manifest {
    static DATA: OnceLock<(tempfile::TempDir, Manifest)> = OnceLock::new();
    &DATA
        .get_or_init(|| {
            let dir = tempfile::tempdir().unwrap();
            let (_, m) = common::tiny_dataset(dir.path());
            (dir, m)
        })
        .1
}

#[test]
fn two_rooms_give_two_folds_that_never_read_the_held_out_room() {
    let manifest = dataset();
    let cfg = common::tiny_config();
    let data = prepare(manifest, &cfg).unwrap();
    let report = run_loocv(&data, &cfg).unwrap();
    assert_eq!(report.folds.len(), 2);
    let held: Vec<&str> = report.folds.iter().map(|f| f.plan.held_out_room.as_str()).collect();
    assert_eq!(held, ["room0", "room1"]);
    for fold in &report.folds {
        let room = &fold.plan.held_out_room;
        assert!(!fold.audit.touched(room), "fold {room} read its own room");
        assert!(fold.audit.samples_read > 0);
        assert!(fold.audit.sample_rooms.iter().all(|r| r != room));
        assert!(!fold.audit.pool_rooms.is_empty());
        let cell = fold.table.cell(Action::Loud, RobotCondition::Static).unwrap();
        assert!(cell.mae_deg.is_some_and(|m| (0.0..=180.0).contains(&m)));
        assert!(fold.table.cell(Action::Quiet, RobotCondition::Static).unwrap().mae_deg.is_none());
        assert!((0.0..=1.0).contains(&fold.w_backsub));
    }
}

#[test]
fn report_is_identical_across_runs_and_round_trips() {
    let manifest = dataset();
    let cfg = common::tiny_config();
    let render = || {
        let data = prepare(manifest, &cfg).unwrap();
        let run = run_loocv(&data, &cfg).unwrap();
        let baselines = evaluate_baselines(manifest, &ArrayGeometry::default()).unwrap();
        Report::from_runs(std::slice::from_ref(&run), run.aggregate.clone(), baselines)
    };
    let first = render();
    let second = render();
    assert_eq!(first.render(ReportFormat::Csv), second.render(ReportFormat::Csv));
    assert_eq!(first.render(ReportFormat::Json), second.render(ReportFormat::Json));
    assert_eq!(Report::from_json(&first.to_json()).unwrap(), first);
}

/// Per-room mean of the distance to the nearer of 0 and 180 degrees, then the mean over rooms.
fn front_oracle(manifest: &Manifest) -> f64 {
    let mut rooms: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for s in manifest.samples.iter().filter(|s| s.presence) {
        let theta = pixel_to_degrees(s.azimuth_x.unwrap()).rem_euclid(360.0);
        let to_front = theta.min(360.0 - theta);
        rooms.entry(&s.room_id).or_default().push(to_front.min(180.0 - to_front));
    }
    rooms.values().map(|e| e.iter().sum::<f64>() / e.len() as f64).sum::<f64>() / rooms.len() as f64
}

#[test]
fn baseline_rows_match_their_oracles() {
    let manifest = dataset();
    let tables = evaluate_baselines(manifest, &ArrayGeometry::default()).unwrap();
    let names: Vec<&str> = tables.iter().map(|t| t.method.as_str()).collect();
    assert_eq!(names, [GCC_METHOD, FRONT_METHOD, UNIFORM_METHOD]);

    let front = tables[1].cell(Action::Loud, RobotCondition::Static).unwrap().mae_deg.unwrap();
    assert!((front - front_oracle(manifest)).abs() < 1e-9, "{front} vs oracle");

    assert_eq!(tables[2].cell(Action::Loud, RobotCondition::Static).unwrap().mae_deg, Some(90.0));
    assert_eq!(tables[2].overall.mae_deg, Some(90.0));

    let gcc = tables[0].cell(Action::Loud, RobotCondition::Static).unwrap().mae_deg.unwrap();
    assert!((0.0..=180.0).contains(&gcc));
}
