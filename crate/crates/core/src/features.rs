//! Game features read off a cost-of-passing series.
//!
//! The series normally sits on a straight descending baseline. Positions
//! where the cost rises well above that line are urgent: the player to move
//! is answering a threat (gote). Runs of such positions are fights when both
//! players are affected and forcing sequences when only one is.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cop::CopSeries;
use crate::scalar::{mad, median, Scalar};
use crate::sgf::Color;

pub const MIN_FIT_POINTS: usize = 10;
const MAX_TRIM_ITERATIONS: usize = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeatureError {
    #[error("baseline fit needs at least {MIN_FIT_POINTS} points, got {0}")]
    TooFewPoints(usize),
    #[error("baseline fit is degenerate: all points share one index")]
    DegenerateFit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BaselineFit<T> {
    pub slope: T,
    pub intercept: T,
    /// MAD of the inlier residuals.
    pub residual_scale: T,
    pub inlier_count: usize,
    /// Series indices kept by the trimming.
    pub inliers: Vec<usize>,
}

impl<T: Scalar> BaselineFit<T> {
    pub fn value_at(&self, index: usize) -> T {
        self.intercept + self.slope * T::of_usize(index)
    }

    pub fn residual(&self, index: usize, cost: T) -> T {
        cost - self.value_at(index)
    }

    /// Default elevation threshold: `max(3, 2 * residual_scale)`.
    pub fn default_tau(&self) -> T {
        T::of(3.0).max(T::two() * self.residual_scale)
    }
}

fn least_squares<T: Scalar>(points: &[(usize, T)]) -> Result<(T, T), FeatureError> {
    let n = T::of_usize(points.len());
    let mean_x = points.iter().map(|(x, _)| T::of_usize(*x)).sum::<T>() / n;
    let mean_y = points.iter().map(|(_, y)| *y).sum::<T>() / n;
    let (mut sxx, mut sxy) = (T::zero(), T::zero());
    for &(x, y) in points {
        let dx = T::of_usize(x) - mean_x;
        sxx = sxx + dx * dx;
        sxy = sxy + dx * (y - mean_y);
    }
    if sxx <= T::zero() {
        return Err(FeatureError::DegenerateFit);
    }
    let slope = sxy / sxx;
    Ok((slope, mean_y - slope * mean_x))
}

/// Robust line through `(index, cost)` pairs. Least squares, then points
/// whose residual exceeds twice the MAD of the inlier residuals are dropped
/// (upward deviations only) and the line refit, until the inlier set stops
/// changing or ten rounds have run.
pub fn fit_points<T: Scalar>(points: &[(usize, T)]) -> Result<BaselineFit<T>, FeatureError> {
    if points.len() < MIN_FIT_POINTS {
        return Err(FeatureError::TooFewPoints(points.len()));
    }
    // residuals this small are rounding noise on an exact line
    let magnitude = points.iter().fold(T::one(), |m, (_, y)| m.max(y.abs()));
    let floor = T::of(1e-9) * magnitude;

    let mut inliers: Vec<usize> = (0..points.len()).collect();
    for _ in 0..MAX_TRIM_ITERATIONS {
        let subset: Vec<(usize, T)> = inliers.iter().map(|&k| points[k]).collect();
        let (slope, intercept) = least_squares(&subset)?;
        let residual = |(x, y): (usize, T)| y - (intercept + slope * T::of_usize(x));
        let residuals: Vec<T> = subset.iter().map(|p| residual(*p)).collect();
        let threshold = (T::two() * mad(&residuals).unwrap_or_else(T::zero)).max(floor);
        let next: Vec<usize> = (0..points.len()).filter(|&k| residual(points[k]) <= threshold).collect();
        if next.len() < 2 || next == inliers {
            break;
        }
        inliers = next;
    }

    let subset: Vec<(usize, T)> = inliers.iter().map(|&k| points[k]).collect();
    let (slope, intercept) = least_squares(&subset)?;
    let residuals: Vec<T> = subset.iter().map(|(x, y)| *y - (intercept + slope * T::of_usize(*x))).collect();
    Ok(BaselineFit {
        slope,
        intercept,
        residual_scale: mad(&residuals).unwrap_or_else(T::zero),
        inlier_count: inliers.len(),
        inliers: subset.iter().map(|(x, _)| *x).collect(),
    })
}

pub fn fit_baseline<T: Scalar>(series: &CopSeries<T>) -> Result<BaselineFit<T>, FeatureError> {
    let points: Vec<(usize, T)> = series.points.iter().map(|p| (p.index, p.cost)).collect();
    fit_points(&points)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SegmentKind {
    ForcingSpike,
    TwoSidedFight,
    OneSidedForcing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Segment<T> {
    pub start: usize,
    pub end: usize,
    pub kind: SegmentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub defender: Option<Color>,
    pub peak: T,
    /// Indices inside `start..=end` whose residual exceeds the threshold.
    /// Opponent turns in between are part of the span but not listed.
    pub elevated: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegmentParams<T> {
    /// Elevation threshold; `None` means [`BaselineFit::default_tau`].
    pub tau: Option<T>,
    /// Share of elevated turns one color must hold for a one-sided sequence.
    pub one_sided_frac: T,
}

impl<T: Scalar> Default for SegmentParams<T> {
    fn default() -> Self {
        SegmentParams { tau: None, one_sided_frac: T::of(0.8) }
    }
}

impl<T: Scalar> SegmentParams<T> {
    pub fn tau_for(&self, fit: &BaselineFit<T>) -> T {
        self.tau.unwrap_or_else(|| fit.default_tau())
    }
}

/// Groups positions with residual above `tau` into segments. Elevated
/// positions two plies apart belong to the same segment, since a threat
/// raises the cost only on the defender's turns.
pub fn detect_segments<T: Scalar>(
    series: &CopSeries<T>,
    fit: &BaselineFit<T>,
    params: &SegmentParams<T>,
) -> Vec<Segment<T>> {
    let tau = params.tau_for(fit);
    let elevated: Vec<(usize, Color, T)> = series
        .points
        .iter()
        .map(|p| (p.index, p.side_to_move, fit.residual(p.index, p.cost)))
        .filter(|(_, _, r)| *r > tau)
        .collect();

    let mut runs: Vec<Vec<(usize, Color, T)>> = Vec::new();
    for e in elevated {
        match runs.last_mut() {
            Some(run) if e.0 - run.last().expect("runs are nonempty").0 <= 2 => run.push(e),
            _ => runs.push(vec![e]),
        }
    }

    runs.into_iter()
        .map(|run| {
            let black = run.iter().filter(|(_, c, _)| *c == Color::Black).count();
            let white = run.len() - black;
            let (kind, defender) = if run.len() == 1 {
                (SegmentKind::ForcingSpike, None)
            } else if black >= 2 && white >= 2 {
                (SegmentKind::TwoSidedFight, None)
            } else {
                let total = T::of_usize(run.len());
                let (major, count) = if black >= white { (Color::Black, black) } else { (Color::White, white) };
                if T::of_usize(count) / total >= params.one_sided_frac {
                    (SegmentKind::OneSidedForcing, Some(major))
                } else {
                    (SegmentKind::TwoSidedFight, None)
                }
            };
            Segment {
                start: run[0].0,
                end: run[run.len() - 1].0,
                kind,
                defender,
                peak: run.iter().map(|(_, _, r)| *r).fold(T::neg_infinity(), T::max),
                elevated: run.iter().map(|(i, _, _)| *i).collect(),
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sente {
    Sente,
    Gote,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SenteState<T> {
    pub index: usize,
    pub state: Sente,
    pub residual: T,
}

/// Gote where the cost is elevated above the baseline, sente where it is on
/// it. After a fight the first position back on the baseline is sente for
/// the player to move there.
pub fn sente_states<T: Scalar>(series: &CopSeries<T>, fit: &BaselineFit<T>, tau: T) -> Vec<SenteState<T>> {
    series
        .points
        .iter()
        .map(|p| {
            let residual = fit.residual(p.index, p.cost);
            let state = if residual > tau { Sente::Gote } else { Sente::Sente };
            SenteState { index: p.index, state, residual }
        })
        .collect()
}

/// Passing hands the move to the opponent, so the move itself is worth half
/// of what passing costs.
pub fn sente_value<T: Scalar>(cost: T) -> T {
    cost * T::half()
}

/// Black-perspective score estimate from counted territory, komi, and the
/// value of having the move.
pub fn estimate_lead<T: Scalar>(secure_black: T, secure_white: T, komi: T, cost: T, side_to_move: Color) -> T {
    secure_black - secure_white - komi + T::of(side_to_move.sign()) * sente_value(cost)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    Opening,
    Middle,
    Endgame,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StageSpan {
    pub stage: Stage,
    /// First index of the span.
    pub start: usize,
    /// Last index of the span, inclusive.
    pub end: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StageParams<T> {
    /// The middle game starts once the smoothed baseline reaches this value.
    pub opening_floor: T,
    /// The endgame starts once the smoothed baseline reaches this value.
    pub endgame_ceiling: T,
    /// A later rise this far above a threshold postpones the transition.
    pub hysteresis: T,
    /// Width of the centered median window (odd).
    pub window: usize,
}

impl<T: Scalar> Default for StageParams<T> {
    fn default() -> Self {
        StageParams { opening_floor: T::of(10.0), endgame_ceiling: T::of(7.0), hysteresis: T::half(), window: 11 }
    }
}

/// Median of the inlier costs in a centered window around each position;
/// the fitted line stands in where a window holds no inliers.
pub fn smoothed_baseline<T: Scalar>(series: &CopSeries<T>, fit: &BaselineFit<T>, window: usize) -> Vec<T> {
    let half = window / 2;
    let inlier_costs: Vec<(usize, T)> = series
        .points
        .iter()
        .filter(|p| fit.inliers.binary_search(&p.index).is_ok())
        .map(|p| (p.index, p.cost))
        .collect();
    series
        .points
        .iter()
        .map(|p| {
            let lo = p.index.saturating_sub(half);
            let hi = p.index + half;
            let from = inlier_costs.partition_point(|(i, _)| *i < lo);
            let to = inlier_costs.partition_point(|(i, _)| *i <= hi);
            let window: Vec<T> = inlier_costs[from..to].iter().map(|(_, c)| *c).collect();
            median(&window).unwrap_or_else(|| fit.value_at(p.index))
        })
        .collect()
}

/// First position from which the smoothed baseline has reached `threshold`
/// and never climbs back to `threshold + hysteresis`.
fn settled_crossing<T: Scalar>(smoothed: &[T], threshold: T, hysteresis: T) -> Option<usize> {
    let after_last_rise = smoothed.iter().rposition(|b| *b >= threshold + hysteresis).map_or(0, |k| k + 1);
    (after_last_rise..smoothed.len()).find(|&k| smoothed[k] <= threshold)
}

/// Splits the game into opening, middle game and endgame by the level of the
/// smoothed baseline. The split is monotone: a stage never follows a later one.
pub fn classify_stages<T: Scalar>(
    series: &CopSeries<T>,
    fit: &BaselineFit<T>,
    params: &StageParams<T>,
) -> Vec<StageSpan> {
    let n = series.points.len();
    if n == 0 {
        return Vec::new();
    }
    let smoothed = smoothed_baseline(series, fit, params.window);
    let endgame = settled_crossing(&smoothed, params.endgame_ceiling, params.hysteresis).unwrap_or(n);
    let middle = settled_crossing(&smoothed, params.opening_floor, params.hysteresis).unwrap_or(n).min(endgame);

    [(Stage::Opening, 0, middle), (Stage::Middle, middle, endgame), (Stage::Endgame, endgame, n)]
        .into_iter()
        .filter(|(_, from, to)| from < to)
        .map(|(stage, from, to)| StageSpan {
            stage,
            start: series.points[from].index,
            end: series.points[to - 1].index,
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PoiKind {
    ForcingSpike,
    TwoSidedFight,
    OneSidedForcing,
    /// A single move that lost points.
    Mistake,
}

impl From<SegmentKind> for PoiKind {
    fn from(kind: SegmentKind) -> Self {
        match kind {
            SegmentKind::ForcingSpike => PoiKind::ForcingSpike,
            SegmentKind::TwoSidedFight => PoiKind::TwoSidedFight,
            SegmentKind::OneSidedForcing => PoiKind::OneSidedForcing,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PointOfInterest<T> {
    pub start: usize,
    pub end: usize,
    pub kind: PoiKind,
    /// Peak residual for segments, points lost for mistakes.
    pub magnitude: T,
}

/// All segments plus the `k` worst single moves, largest magnitude first;
/// ties go to the earlier position.
pub fn select_points_of_interest<T: Scalar>(
    segments: &[Segment<T>],
    series: &CopSeries<T>,
    k: usize,
) -> Vec<PointOfInterest<T>> {
    let mut losses: Vec<(usize, T)> = series
        .points
        .iter()
        .filter_map(|p| p.effect.filter(|e| *e < T::zero()).map(|e| (p.index, e)))
        .collect();
    losses.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)));

    let mut picked: Vec<PointOfInterest<T>> = segments
        .iter()
        .map(|s| PointOfInterest { start: s.start, end: s.end, kind: s.kind.into(), magnitude: s.peak })
        .chain(losses.into_iter().take(k).map(|(index, e)| PointOfInterest {
            start: index,
            end: index,
            kind: PoiKind::Mistake,
            magnitude: -e,
        }))
        .collect();
    picked.sort_by(|a, b| {
        b.magnitude.partial_cmp(&a.magnitude).unwrap_or(std::cmp::Ordering::Equal).then(a.start.cmp(&b.start))
    });
    picked
}

/// Everything the features file holds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FeatureSet<T> {
    pub baseline: BaselineFit<T>,
    pub tau: T,
    pub segments: Vec<Segment<T>>,
    pub stages: Vec<StageSpan>,
    pub sente: Vec<SenteState<T>>,
    pub points_of_interest: Vec<PointOfInterest<T>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureParams<T> {
    pub segments: SegmentParams<T>,
    pub stages: StageParams<T>,
    /// Number of single-move mistakes listed among the points of interest.
    pub mistakes: usize,
}

impl<T: Scalar> Default for FeatureParams<T> {
    fn default() -> Self {
        FeatureParams { segments: SegmentParams::default(), stages: StageParams::default(), mistakes: 5 }
    }
}

pub fn extract_features<T: Scalar>(
    series: &CopSeries<T>,
    params: &FeatureParams<T>,
) -> Result<FeatureSet<T>, FeatureError> {
    let baseline = fit_baseline(series)?;
    let tau = params.segments.tau_for(&baseline);
    let segments = detect_segments(series, &baseline, &params.segments);
    let stages = classify_stages(series, &baseline, &params.stages);
    let sente = sente_states(series, &baseline, tau);
    let points_of_interest = select_points_of_interest(&segments, series, params.mistakes.max(1));
    Ok(FeatureSet { baseline, tau, segments, stages, sente, points_of_interest })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> Vec<f64> {
        (0..n).map(|i| 12.0 - 0.05 * i as f64).collect()
    }

    #[test]
    fn exact_line_is_recovered() {
        let fit = fit_baseline(&CopSeries::from_costs(&line(216))).unwrap();
        assert!((fit.slope + 0.05).abs() < 1e-9);
        assert!((fit.intercept - 12.0).abs() < 1e-9);
        assert_eq!(fit.inlier_count, 216);
    }

    #[test]
    fn constant_series() {
        let fit = fit_baseline(&CopSeries::from_costs(&[5.0f64; 30])).unwrap();
        assert!(fit.slope.abs() < 1e-12);
        assert!((fit.intercept - 5.0).abs() < 1e-12);
        assert_eq!(fit.residual_scale, 0.0);
    }

    #[test]
    fn fit_errors() {
        assert_eq!(fit_baseline(&CopSeries::from_costs(&[1.0; 9])), Err(FeatureError::TooFewPoints(9)));
        let same_index: Vec<(usize, f64)> = (0..12).map(|i| (4, i as f64)).collect();
        assert_eq!(fit_points(&same_index), Err(FeatureError::DegenerateFit));
    }

    #[test]
    fn spikes_are_trimmed() {
        let mut costs = line(216);
        let spikes: Vec<usize> = (0..20).map(|k| 5 + k * 10 + (k % 3)).collect();
        for &i in &spikes {
            costs[i] += 8.0;
        }
        let fit = fit_baseline(&CopSeries::from_costs(&costs)).unwrap();
        assert!((fit.slope + 0.05).abs() <= 0.005);
        assert!((fit.intercept - 12.0).abs() <= 0.2);
        assert!(spikes.iter().all(|i| !fit.inliers.contains(i)));
    }

    #[test]
    fn pure_line_has_no_segments_and_all_sente() {
        let series = CopSeries::from_costs(&line(216));
        let fit = fit_baseline(&series).unwrap();
        assert!(detect_segments(&series, &fit, &SegmentParams::default()).is_empty());
        assert!(sente_states(&series, &fit, fit.default_tau()).iter().all(|s| s.state == Sente::Sente));
    }

    #[test]
    fn single_spike() {
        let mut costs = line(216);
        costs[50] += 10.0;
        let series = CopSeries::from_costs(&costs);
        let fit = fit_baseline(&series).unwrap();
        let segments = detect_segments(&series, &fit, &SegmentParams::default());
        assert_eq!(segments.len(), 1);
        assert_eq!((segments[0].start, segments[0].end, segments[0].kind), (50, 50, SegmentKind::ForcingSpike));
        let states = sente_states(&series, &fit, fit.default_tau());
        assert_eq!(states[50].state, Sente::Gote);
        assert_eq!(states[49].state, Sente::Sente);
        assert_eq!(states[51].state, Sente::Sente);
    }

    #[test]
    fn one_sided_needs_a_dominant_color() {
        let mut costs = line(100);
        // black turns 20, 22, 24 and one white turn 23: 75% black
        for i in [20, 22, 23, 24] {
            costs[i] += 6.0;
        }
        let series = CopSeries::from_costs(&costs);
        let fit = fit_baseline(&series).unwrap();
        let strict = detect_segments(&series, &fit, &SegmentParams::default());
        assert_eq!(strict[0].kind, SegmentKind::TwoSidedFight);
        let loose = SegmentParams { one_sided_frac: 0.7, ..Default::default() };
        let loose = detect_segments(&series, &fit, &loose);
        assert_eq!((loose[0].kind, loose[0].defender), (SegmentKind::OneSidedForcing, Some(Color::Black)));
    }

    #[test]
    fn sente_value_and_lead() {
        assert_eq!(sente_value(7.0), 3.5);
        assert_eq!(sente_value(13.0), 6.5);
        assert_eq!(sente_value(0.0), 0.0);
        assert_eq!(estimate_lead(40.0, 30.0, 6.5, 7.0, Color::White), 0.0);
        assert_eq!(estimate_lead(40.0, 30.0, 6.5, 7.0, Color::Black), 7.0);
        assert_eq!(estimate_lead(0.0, 0.0, 0.0, 0.0, Color::Black), 0.0);
    }

    #[test]
    fn stages_of_the_exact_line() {
        let series = CopSeries::from_costs(&line(216));
        let fit = fit_baseline(&series).unwrap();
        let stages = classify_stages(&series, &fit, &StageParams::default());
        assert_eq!(
            stages,
            vec![
                StageSpan { stage: Stage::Opening, start: 0, end: 39 },
                StageSpan { stage: Stage::Middle, start: 40, end: 99 },
                StageSpan { stage: Stage::Endgame, start: 100, end: 215 },
            ]
        );
    }

    #[test]
    fn constant_stages() {
        for (value, stage) in [(6.0, Stage::Endgame), (11.0, Stage::Opening), (8.0, Stage::Middle)] {
            let series = CopSeries::from_costs(&[value; 50]);
            let fit = fit_baseline(&series).unwrap();
            let stages = classify_stages(&series, &fit, &StageParams::default());
            assert_eq!(stages, vec![StageSpan { stage, start: 0, end: 49 }]);
        }
    }

    #[test]
    fn a_late_rise_postpones_the_transition() {
        let mut costs = line(120);
        // brief dip under 10 around move 20, then a long plateau back at 11
        for c in costs.iter_mut().take(30).skip(15) {
            *c = 9.0;
        }
        for c in costs.iter_mut().take(50).skip(30) {
            *c = 11.0;
        }
        let series = CopSeries::from_costs(&costs);
        // keep every point as an inlier so the plateau reaches the smoother
        let fit = BaselineFit { slope: -0.05, intercept: 12.0, residual_scale: 0.0, inlier_count: 120, inliers: (0..120).collect() };
        let stages = classify_stages(&series, &fit, &StageParams::default());
        assert_eq!(stages[0].stage, Stage::Opening);
        assert!(stages[0].end >= 40, "{stages:?}");
    }

    #[test]
    fn points_of_interest_ranking() {
        let mut series = CopSeries::from_costs(&line(40));
        let fight = Segment { start: 10, end: 14, kind: SegmentKind::TwoSidedFight, defender: None, peak: 9.0, elevated: vec![] };
        let spike = Segment { start: 30, end: 30, kind: SegmentKind::ForcingSpike, defender: None, peak: 4.0, elevated: vec![] };
        let ranked = select_points_of_interest(&[spike.clone(), fight.clone()], &series, 2);
        assert_eq!(ranked.len(), 2);
        assert_eq!(ranked[0].kind, PoiKind::TwoSidedFight);

        assert!(select_points_of_interest(&[], &series, 3).is_empty());

        series.points[20].effect = Some(-4.0);
        series.points[5].effect = Some(-1.0);
        let ranked = select_points_of_interest(&[spike, fight], &series, 1);
        assert_eq!(ranked.len(), 3);
        // the 4-point mistake ties the spike and comes first by index
        assert_eq!((ranked[1].kind, ranked[1].start), (PoiKind::Mistake, 20));
        assert_eq!(ranked[2].kind, PoiKind::ForcingSpike);
    }
}
