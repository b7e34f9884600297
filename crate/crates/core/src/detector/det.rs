use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::corpus::{Label, LabeledPair};
use super::CollapseStatistic;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Segment,
    Utterance,
}

/// Which collapsed items count as positives. Clean items are always the
/// negatives; collapsed items of other kinds are left out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TypeFilter {
    #[serde(rename = "all")]
    All,
    #[serde(rename = "typeI")]
    TypeI,
    #[serde(rename = "typeII")]
    TypeII,
}

impl TypeFilter {
    /// `Some(true)` for positives, `Some(false)` for negatives, `None` to skip.
    fn classify(self, label: Label) -> Option<bool> {
        match (self, label) {
            (_, Label::Clean) => Some(false),
            (TypeFilter::All, _) => Some(true),
            (TypeFilter::TypeI, Label::TypeI) | (TypeFilter::TypeII, Label::TypeII) => Some(true),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredItem {
    pub statistic: f64,
    pub collapsed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ThresholdGrid {
    /// Evenly spaced points spanning the observed statistic range.
    Linear(usize),
    Explicit(Vec<f64>),
    /// Every distinct observed value plus one point below the minimum.
    Observed,
}

impl Default for ThresholdGrid {
    fn default() -> Self {
        ThresholdGrid::Linear(200)
    }
}

impl ThresholdGrid {
    fn thresholds(&self, stats: &[f64]) -> Vec<f64> {
        let min = stats.iter().copied().fold(f64::INFINITY, f64::min);
        let max = stats.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut grid = match self {
            ThresholdGrid::Linear(n) => {
                let n = (*n).max(1);
                if n == 1 {
                    vec![min]
                } else {
                    let step = (max - min) / (n - 1) as f64;
                    (0..n)
                        .map(|i| {
                            if i == n - 1 {
                                max
                            } else {
                                min + step * i as f64
                            }
                        })
                        .collect()
                }
            }
            ThresholdGrid::Explicit(v) => v.clone(),
            ThresholdGrid::Observed => {
                let mut v = stats.to_vec();
                v.push(min - min.abs().max(1.0));
                v
            }
        };
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        grid
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetPoint {
    pub threshold: f64,
    /// Collapsed items not flagged, over all collapsed items.
    pub fa_rate: f64,
    /// Clean items flagged, over all clean items.
    pub fr_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetCurve {
    /// Sorted by increasing threshold.
    pub points: Vec<DetPoint>,
    /// Mean of the two rates at the grid point where they are closest.
    pub eer: f64,
    pub eer_point: DetPoint,
    pub collapsed_items: usize,
    pub clean_items: usize,
}

/// Sweeps the grid over scored items. An item is flagged iff its statistic
/// exceeds the threshold.
pub fn det_curve(items: &[ScoredItem], grid: &ThresholdGrid) -> Result<DetCurve> {
    let collapsed = items.iter().filter(|i| i.collapsed).count();
    let clean = items.len() - collapsed;
    if collapsed == 0 || clean == 0 {
        return Err(Error::SingleClass { clean, collapsed });
    }
    if let Some(bad) = items.iter().find(|i| !i.statistic.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "non-finite statistic {}",
            bad.statistic
        )));
    }
    let stats: Vec<f64> = items.iter().map(|i| i.statistic).collect();
    let thresholds = grid.thresholds(&stats);
    if thresholds.is_empty() {
        return Err(Error::InvalidParameter("empty threshold grid".into()));
    }

    let points: Vec<DetPoint> = thresholds
        .iter()
        .map(|&t| {
            let missed = items
                .iter()
                .filter(|i| i.collapsed && i.statistic <= t)
                .count();
            let false_alarms = items
                .iter()
                .filter(|i| !i.collapsed && i.statistic > t)
                .count();
            DetPoint {
                threshold: t,
                fa_rate: missed as f64 / collapsed as f64,
                fr_rate: false_alarms as f64 / clean as f64,
            }
        })
        .collect();

    let key = |p: &DetPoint| ((p.fa_rate - p.fr_rate).abs(), p.fa_rate + p.fr_rate);
    let eer_point = *points
        .iter()
        .reduce(|best, p| if key(p) < key(best) { p } else { best })
        .expect("grid is nonempty");
    Ok(DetCurve {
        eer: (eer_point.fa_rate + eer_point.fr_rate) / 2.0,
        eer_point,
        points,
        collapsed_items: collapsed,
        clean_items: clean,
    })
}

/// Scores every corpus item at the requested level, keeping corpus order.
pub fn score_corpus<S: CollapseStatistic + ?Sized>(
    corpus: &[LabeledPair],
    stat: &S,
    level: Level,
    filter: TypeFilter,
) -> Result<Vec<ScoredItem>> {
    let per_item: Vec<Vec<ScoredItem>> = corpus
        .par_iter()
        .map(|pair| -> Result<Vec<ScoredItem>> {
            match level {
                Level::Utterance => Ok(filter
                    .classify(pair.label)
                    .map(|collapsed| -> Result<ScoredItem> {
                        Ok(ScoredItem {
                            statistic: stat.utterance_score(&pair.candidate, &pair.reference)?,
                            collapsed,
                        })
                    })
                    .transpose()?
                    .into_iter()
                    .collect()),
                Level::Segment => Ok(stat
                    .segment_scores(&pair.candidate, &pair.reference)?
                    .into_iter()
                    .filter_map(|(seg, statistic)| {
                        filter
                            .classify(pair.segment_label(seg))
                            .map(|collapsed| ScoredItem {
                                statistic,
                                collapsed,
                            })
                    })
                    .collect()),
            }
        })
        .collect::<Result<_>>()?;
    Ok(per_item.into_iter().flatten().collect())
}

pub fn evaluate_det<S: CollapseStatistic + ?Sized>(
    corpus: &[LabeledPair],
    stat: &S,
    level: Level,
    filter: TypeFilter,
    grid: &ThresholdGrid,
) -> Result<DetCurve> {
    det_curve(&score_corpus(corpus, stat, level, filter)?, grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn items(clean: &[f64], collapsed: &[f64]) -> Vec<ScoredItem> {
        clean
            .iter()
            .map(|&s| ScoredItem {
                statistic: s,
                collapsed: false,
            })
            .chain(collapsed.iter().map(|&s| ScoredItem {
                statistic: s,
                collapsed: true,
            }))
            .collect()
    }

    #[test]
    fn hand_evaluated_sweep() {
        let it = items(&[0.1, 0.2], &[0.8, 0.9]);
        let c = det_curve(
            &it,
            &ThresholdGrid::Explicit(vec![0.05, 0.15, 0.5, 0.85, 1.0]),
        )
        .unwrap();
        let at = |t: f64| c.points.iter().find(|p| p.threshold == t).copied().unwrap();
        assert_eq!((at(0.5).fa_rate, at(0.5).fr_rate), (0.0, 0.0));
        assert_eq!((at(0.05).fa_rate, at(0.05).fr_rate), (0.0, 1.0));
        assert_eq!((at(0.15).fa_rate, at(0.15).fr_rate), (0.0, 0.5));
        assert_eq!((at(0.85).fa_rate, at(0.85).fr_rate), (0.5, 0.0));
        assert_eq!((at(1.0).fa_rate, at(1.0).fr_rate), (1.0, 0.0));
        assert_eq!(c.eer, 0.0);
        assert_eq!(c.eer_point.threshold, 0.5);
    }

    #[test]
    fn perfect_separation_on_linear_grid() {
        let it = items(&[0.0, 0.1, 0.12], &[0.7, 0.9, 1.0]);
        let c = det_curve(&it, &ThresholdGrid::default()).unwrap();
        assert_eq!(c.points.len(), 200);
        assert_eq!(c.eer, 0.0);
    }

    #[test]
    fn constant_statistic() {
        // Every threshold equals the common value, so nothing is flagged.
        let it = items(&[0.4, 0.4], &[0.4, 0.4]);
        let c = det_curve(&it, &ThresholdGrid::default()).unwrap();
        assert_eq!(c.points.len(), 1);
        assert_eq!((c.points[0].fa_rate, c.points[0].fr_rate), (1.0, 0.0));
        assert_eq!(c.eer, 0.5);

        let c = det_curve(&it, &ThresholdGrid::Explicit(vec![0.3, 0.4, 0.5])).unwrap();
        for p in &c.points {
            assert!([(0.0, 1.0), (1.0, 0.0)].contains(&(p.fa_rate, p.fr_rate)));
        }
        assert_eq!(c.eer, 0.5);
    }

    #[test]
    fn single_class_is_rejected() {
        assert!(matches!(
            det_curve(&items(&[0.1, 0.2], &[]), &ThresholdGrid::default()),
            Err(Error::SingleClass { .. })
        ));
        assert!(det_curve(&items(&[], &[0.3]), &ThresholdGrid::default()).is_err());
    }

    proptest! {
        #[test]
        fn rates_are_monotone_in_threshold(
            clean in proptest::collection::vec(-2.0f64..2.0, 1..40),
            collapsed in proptest::collection::vec(-1.0f64..3.0, 1..40),
        ) {
            let c = det_curve(&items(&clean, &collapsed), &ThresholdGrid::Linear(50)).unwrap();
            for w in c.points.windows(2) {
                prop_assert!(w[1].fa_rate >= w[0].fa_rate);
                prop_assert!(w[1].fr_rate <= w[0].fr_rate);
            }
            prop_assert!((0.0..=1.0).contains(&c.eer));
        }

        #[test]
        fn eer_is_rank_invariant(
            clean in proptest::collection::vec(-2.0f64..2.0, 1..40),
            collapsed in proptest::collection::vec(-1.0f64..3.0, 1..40),
        ) {
            let base = items(&clean, &collapsed);
            let cubed: Vec<ScoredItem> = base
                .iter()
                .map(|i| ScoredItem { statistic: i.statistic.powi(3), ..*i })
                .collect();
            let a = det_curve(&base, &ThresholdGrid::Observed).unwrap();
            let b = det_curve(&cubed, &ThresholdGrid::Observed).unwrap();
            prop_assert_eq!(a.eer, b.eer);

            let grid: Vec<f64> = (0..30).map(|k| -2.0 + k as f64 * 0.17).collect();
            let grid3 = grid.iter().map(|g| g.powi(3)).collect();
            let a = det_curve(&base, &ThresholdGrid::Explicit(grid)).unwrap();
            let b = det_curve(&cubed, &ThresholdGrid::Explicit(grid3)).unwrap();
            prop_assert_eq!(a.eer, b.eer);
            for (p, q) in a.points.iter().zip(&b.points) {
                prop_assert_eq!((p.fa_rate, p.fr_rate), (q.fa_rate, q.fr_rate));
            }
        }
    }
}
