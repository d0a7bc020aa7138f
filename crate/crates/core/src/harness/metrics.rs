//! Per-cell metrics and their aggregation over folds.

use serde::{Deserialize, Serialize};

use crate::geometry::circular_error;
use crate::manifest::{Action, RobotCondition};

/// One evaluated clip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub action: Action,
    pub condition: RobotCondition,
    pub true_deg: Option<f64>,
    pub pred_deg: Option<f64>,
    pub true_near: Option<bool>,
    pub pred_near: Option<bool>,
    pub true_presence: bool,
    pub pred_presence: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub action: Action,
    pub condition: RobotCondition,
    pub mae_deg: Option<f64>,
    pub distance_accuracy: Option<f64>,
    pub presence_accuracy: Option<f64>,
    /// Clips behind the cell (summed over folds after aggregation).
    pub n_clips: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Overall {
    pub mae_deg: Option<f64>,
    pub distance_accuracy: Option<f64>,
    /// Mean of the empty-class and present-class accuracies.
    pub presence_accuracy: Option<f64>,
}

/// Metrics for one method, laid out action × condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub method: String,
    pub cells: Vec<Cell>,
    pub overall: Overall,
}

fn mean(v: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn accuracy(pairs: impl IntoIterator<Item = (bool, bool)>) -> Option<f64> {
    mean(pairs.into_iter().map(|(a, b)| if a == b { 1.0 } else { 0.0 }))
}

impl MetricsTable {
    /// Every action × condition slot, in display order.
    pub fn layout() -> Vec<(Action, RobotCondition)> {
        Action::ALL
            .iter()
            .flat_map(|&a| RobotCondition::ALL.iter().map(move |&c| (a, c)))
            .collect()
    }

    pub fn from_outcomes(method: &str, outcomes: &[Outcome]) -> Self {
        let cells = Self::layout()
            .into_iter()
            .map(|(action, condition)| {
                let sel: Vec<&Outcome> = outcomes
                    .iter()
                    .filter(|o| o.action == action && o.condition == condition)
                    .collect();
                Cell {
                    action,
                    condition,
                    mae_deg: mean(sel.iter().filter_map(|o| Some(circular_error(o.pred_deg?, o.true_deg?)))),
                    distance_accuracy: accuracy(sel.iter().filter_map(|o| Some((o.pred_near?, o.true_near?)))),
                    presence_accuracy: accuracy(sel.iter().filter_map(|o| Some((o.pred_presence?, o.true_presence)))),
                    n_clips: sel.len(),
                }
            })
            .collect();
        let overall = Overall {
            mae_deg: mean(outcomes.iter().filter_map(|o| Some(circular_error(o.pred_deg?, o.true_deg?)))),
            distance_accuracy: accuracy(outcomes.iter().filter_map(|o| Some((o.pred_near?, o.true_near?)))),
            presence_accuracy: {
                let class = |present: bool| {
                    accuracy(
                        outcomes
                            .iter()
                            .filter(|o| o.true_presence == present)
                            .filter_map(|o| Some((o.pred_presence?, o.true_presence))),
                    )
                };
                match (class(false), class(true)) {
                    (Some(a), Some(b)) => Some((a + b) / 2.0),
                    (a, b) => a.or(b),
                }
            },
        };
        Self {
            method: method.into(),
            cells,
            overall,
        }
    }

    /// A table whose every angle cell holds `mae` and nothing else.
    pub fn constant_mae(method: &str, mae: f64, template: &MetricsTable) -> Self {
        Self {
            method: method.into(),
            cells: template
                .cells
                .iter()
                .map(|c| Cell {
                    mae_deg: c.mae_deg.map(|_| mae),
                    distance_accuracy: None,
                    presence_accuracy: None,
                    ..c.clone()
                })
                .collect(),
            overall: Overall {
                mae_deg: template.overall.mae_deg.map(|_| mae),
                ..Overall::default()
            },
        }
    }

    pub fn cell(&self, action: Action, condition: RobotCondition) -> Option<&Cell> {
        self.cells.iter().find(|c| c.action == action && c.condition == condition)
    }

    /// Cell-wise combination of several tables with `f` applied to the
    /// values that are present; absent entries are skipped.
    pub fn combine(method: &str, tables: &[MetricsTable], f: impl Fn(&mut Vec<f64>) -> f64) -> Self {
        let pick = |get: &dyn Fn(&MetricsTable) -> Option<f64>| {
            let mut v: Vec<f64> = tables.iter().filter_map(get).collect();
            (!v.is_empty()).then(|| f(&mut v))
        };
        let cells = Self::layout()
            .into_iter()
            .map(|(action, condition)| {
                let get = |t: &MetricsTable| t.cell(action, condition).cloned();
                Cell {
                    action,
                    condition,
                    mae_deg: pick(&|t| get(t)?.mae_deg),
                    distance_accuracy: pick(&|t| get(t)?.distance_accuracy),
                    presence_accuracy: pick(&|t| get(t)?.presence_accuracy),
                    n_clips: tables.iter().filter_map(|t| get(t)).map(|c| c.n_clips).sum(),
                }
            })
            .collect();
        Self {
            method: method.into(),
            cells,
            overall: Overall {
                mae_deg: pick(&|t| t.overall.mae_deg),
                distance_accuracy: pick(&|t| t.overall.distance_accuracy),
                presence_accuracy: pick(&|t| t.overall.presence_accuracy),
            },
        }
    }

    /// Unweighted mean over folds.
    pub fn mean_over(method: &str, folds: &[MetricsTable]) -> Self {
        Self::combine(method, folds, |v| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Cell-wise median, e.g. over training seeds.
    pub fn median_over(method: &str, runs: &[MetricsTable]) -> Self {
        Self::combine(method, runs, |v| {
            v.sort_by(|a, b| a.total_cmp(b));
            let n = v.len();
            if n % 2 == 1 {
                v[n / 2]
            } else {
                (v[n / 2 - 1] + v[n / 2]) / 2.0
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn present(action: Action, cond: RobotCondition, t: f64, p: f64, near: (bool, bool), pres: bool) -> Outcome {
        Outcome {
            action,
            condition: cond,
            true_deg: Some(t),
            pred_deg: Some(p),
            true_near: Some(near.0),
            pred_near: Some(near.1),
            true_presence: true,
            pred_presence: Some(pres),
        }
    }

    fn empty(cond: RobotCondition, pres: bool) -> Outcome {
        Outcome {
            action: Action::Empty,
            condition: cond,
            true_deg: None,
            pred_deg: None,
            true_near: None,
            pred_near: None,
            true_presence: false,
            pred_presence: Some(pres),
        }
    }

    #[test]
    fn cells_and_overall() {
        use Action::*;
        use RobotCondition::*;
        let o = vec![
            present(Quiet, Static, 10.0, 350.0, (true, true), true),
            present(Quiet, Static, 100.0, 130.0, (true, false), false),
            present(Loud, Dynamic, 0.0, 180.0, (false, false), true),
            empty(Static, false),
            empty(Static, true),
        ];
        let t = MetricsTable::from_outcomes("m", &o);
        let q = t.cell(Quiet, Static).unwrap();
        assert_eq!(q.mae_deg, Some(25.0));
        assert_eq!(q.distance_accuracy, Some(0.5));
        assert_eq!(q.presence_accuracy, Some(0.5));
        assert_eq!(q.n_clips, 2);
        let e = t.cell(Empty, Static).unwrap();
        assert_eq!(e.mae_deg, None);
        assert_eq!(e.presence_accuracy, Some(0.5));
        assert!(t.cell(Normal, Static).unwrap().mae_deg.is_none());
        assert!((t.overall.mae_deg.unwrap() - (20.0 + 30.0 + 180.0) / 3.0).abs() < 1e-12);
        // Present class 2/3, empty class 1/2.
        assert!((t.overall.presence_accuracy.unwrap() - (2.0 / 3.0 + 0.5) / 2.0).abs() < 1e-12);
        assert_eq!(t.cells.len(), 8);
    }

    #[test]
    fn fold_mean_is_unweighted_and_skips_gaps() {
        use Action::*;
        use RobotCondition::*;
        let a = MetricsTable::from_outcomes("a", &[present(Normal, Static, 0.0, 10.0, (true, true), true)]);
        let b = MetricsTable::from_outcomes(
            "b",
            &[
                present(Normal, Static, 0.0, 30.0, (true, true), true),
                present(Normal, Static, 0.0, 30.0, (true, true), true),
                present(Loud, Static, 0.0, 40.0, (true, true), true),
            ],
        );
        let m = MetricsTable::mean_over("mean", &[a, b]);
        assert_eq!(m.cell(Normal, Static).unwrap().mae_deg, Some(20.0));
        assert_eq!(m.cell(Loud, Static).unwrap().mae_deg, Some(40.0));
        assert_eq!(m.cell(Normal, Static).unwrap().n_clips, 3);
        assert_eq!(m.cell(Quiet, Dynamic).unwrap().mae_deg, None);
    }

    #[test]
    fn median_of_three() {
        use Action::*;
        use RobotCondition::*;
        let runs: Vec<MetricsTable> = [5.0, 50.0, 20.0]
            .iter()
            .map(|&e| MetricsTable::from_outcomes("r", &[present(Quiet, Dynamic, 0.0, e, (true, true), true)]))
            .collect();
        assert_eq!(MetricsTable::median_over("m", &runs).cell(Quiet, Dynamic).unwrap().mae_deg, Some(20.0));
    }
}
