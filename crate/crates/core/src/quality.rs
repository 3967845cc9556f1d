//! Per-game and per-player aggregates of a cost-of-passing series.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::cop::{position_cost, realized_value, realized_value_clamped, CopSeries};
use crate::engine::{Engine, EngineError, Query};
use crate::scalar::Scalar;
use crate::sgf::{Color, DEFAULT_RULES};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QualityError {
    #[error("series has no points")]
    EmptySeries,
    #[error("{0} made no counted moves")]
    NoMovesForColor(Color),
}

/// A percentage that is undefined when its denominator is not positive.
/// Serialized as a number or the string `"undefined"`, never NaN.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Percentage<T> {
    Defined(T),
    Undefined,
}

impl<T: Scalar> Percentage<T> {
    pub fn of(numerator: T, denominator: T) -> Self {
        if denominator > T::zero() {
            Percentage::Defined(T::hundred() * numerator / denominator)
        } else {
            Percentage::Undefined
        }
    }

    pub fn value(self) -> Option<T> {
        match self {
            Percentage::Defined(v) => Some(v),
            Percentage::Undefined => None,
        }
    }
}

impl<T: Serialize> Serialize for Percentage<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Percentage::Defined(v) => v.serialize(serializer),
            Percentage::Undefined => serializer.serialize_str("undefined"),
        }
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for Percentage<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw<T> {
            Number(T),
            Text(String),
        }
        match Raw::<T>::deserialize(deserializer)? {
            Raw::Number(v) => Ok(Percentage::Defined(v)),
            Raw::Text(s) if s == "undefined" => Ok(Percentage::Undefined),
            Raw::Text(s) => Err(serde::de::Error::custom(format!("expected a number or \"undefined\", got {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct QualityOptions {
    /// Clamp each move's realized value into `[0, cost]`.
    pub clamp_realized: bool,
    /// Count passes in the mean effect.
    pub include_passes: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PlayerPerformance<T> {
    pub color: Color,
    /// Cost of passing summed over all of this player's positions.
    pub cumulative_cost: T,
    /// Realized value summed over positions whose move effect is known.
    pub cumulative_realized: T,
    /// Cost summed over the same positions as `cumulative_realized`; equals
    /// `cumulative_cost` whenever every effect is known.
    pub scored_cost: T,
    pub performance_pct: Percentage<T>,
    pub mean_effect: Option<T>,
    pub moves_counted: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GameSummary<T> {
    pub total_cost: T,
    pub move_count: usize,
    pub mean_cost: T,
    pub per_player: [PlayerPerformance<T>; 2],
}

/// Mean effect of one player's moves; passes count only when asked.
pub fn mean_effect<T: Scalar>(series: &CopSeries<T>, color: Color, include_passes: bool) -> Result<T, QualityError> {
    let effects: Vec<T> = series
        .points
        .iter()
        .filter(|p| p.side_to_move == color && (include_passes || !p.played_pass))
        .filter_map(|p| p.effect)
        .collect();
    if effects.is_empty() {
        return Err(QualityError::NoMovesForColor(color));
    }
    Ok(effects.iter().copied().sum::<T>() / T::of_usize(effects.len()))
}

fn performance<T: Scalar>(series: &CopSeries<T>, color: Color, options: QualityOptions) -> PlayerPerformance<T> {
    let mut cumulative_cost = T::zero();
    let mut scored_cost = T::zero();
    let mut cumulative_realized = T::zero();
    let mut moves_counted = 0;
    for p in series.points.iter().filter(|p| p.side_to_move == color) {
        cumulative_cost = cumulative_cost + p.cost;
        if p.index < series.game.move_count {
            moves_counted += 1;
        }
        if let Some(e) = p.effect {
            scored_cost = scored_cost + p.cost;
            let realized = if options.clamp_realized { realized_value_clamped(p.cost, e) } else { realized_value(p.cost, e) };
            cumulative_realized = cumulative_realized + realized;
        }
    }
    PlayerPerformance {
        color,
        cumulative_cost,
        cumulative_realized,
        scored_cost,
        performance_pct: Percentage::of(cumulative_realized, scored_cost),
        mean_effect: mean_effect(series, color, options.include_passes).ok(),
        moves_counted,
    }
}

/// Share of each player's cost of passing that their moves realized.
pub fn player_performance<T: Scalar>(series: &CopSeries<T>, options: QualityOptions) -> [PlayerPerformance<T>; 2] {
    [performance(series, Color::Black, options), performance(series, Color::White, options)]
}

pub fn game_summary<T: Scalar>(series: &CopSeries<T>, options: QualityOptions) -> Result<GameSummary<T>, QualityError> {
    if series.is_empty() {
        return Err(QualityError::EmptySeries);
    }
    let per_player = player_performance(series, options);
    let total_cost = per_player[0].cumulative_cost + per_player[1].cumulative_cost;
    let move_count = series.len();
    Ok(GameSummary { total_cost, move_count, mean_cost: total_cost / T::of_usize(move_count), per_player })
}

/// Cost of passing for white on the empty board: what one extra black stone
/// is worth.
pub fn handicap_value<T: Scalar>(engine: &dyn Engine, board_size: u8, komi: f64, visits: u32) -> Result<T, EngineError> {
    let query = Query {
        board_size,
        komi,
        rules: DEFAULT_RULES.to_string(),
        initial_stones: Vec::new(),
        initial_player: Color::White,
        moves: Vec::new(),
        visits,
    };
    position_cost::<T>(engine, &query, None).map(|(_, _, cost)| cost)
}

/// Two-decimal view written to quality files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct QualityReport {
    pub total_cost: f64,
    pub mean_cost: f64,
    pub move_count: usize,
    pub players: Vec<PlayerReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PlayerReport {
    pub color: Color,
    pub cumulative_cost: f64,
    pub cumulative_realized: f64,
    pub performance_pct: Percentage<f64>,
    pub mean_effect: Option<f64>,
    pub moves_counted: usize,
}

impl<T: Scalar> GameSummary<T> {
    pub fn report(&self) -> QualityReport {
        let r = |v: T| v.as_f64().round2();
        QualityReport {
            total_cost: r(self.total_cost),
            mean_cost: r(self.mean_cost),
            move_count: self.move_count,
            players: self
                .per_player
                .iter()
                .map(|p| PlayerReport {
                    color: p.color,
                    cumulative_cost: r(p.cumulative_cost),
                    cumulative_realized: r(p.cumulative_realized),
                    performance_pct: match p.performance_pct {
                        Percentage::Defined(v) => Percentage::Defined(r(v)),
                        Percentage::Undefined => Percentage::Undefined,
                    },
                    mean_effect: p.mean_effect.map(r),
                    moves_counted: p.moves_counted,
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cop::{compute_series, SeriesOptions};
    use crate::engine::{MockModel, NegamaxMock};
    use crate::sgf::{GameRecord, Move, Point};

    fn series_with_effects(costs: &[f64], effects: &[f64]) -> CopSeries<f64> {
        let mut s = CopSeries::from_costs(costs);
        for (p, e) in s.points.iter_mut().zip(effects) {
            p.effect = Some(*e);
        }
        s
    }

    #[test]
    fn ninety_five_percent() {
        // black: cost 1000 over two moves, realized 950
        let s = series_with_effects(&[600.0, 0.0, 400.0, 0.0], &[-20.0, 0.0, -30.0, 0.0]);
        let [black, white] = player_performance(&s, QualityOptions::default());
        assert_eq!(black.cumulative_cost, 1000.0);
        assert_eq!(black.cumulative_realized, 950.0);
        assert_eq!(black.performance_pct, Percentage::Defined(95.0));
        assert_eq!(white.performance_pct, Percentage::Undefined);
    }

    #[test]
    fn summary_arithmetic() {
        let s = CopSeries::from_costs(&[5.0]);
        let summary = game_summary(&s, QualityOptions::default()).unwrap();
        assert_eq!((summary.total_cost, summary.mean_cost), (5.0, 5.0));
        let s = CopSeries::from_costs(&vec![3937.93 / 307.0; 307]);
        let summary = game_summary(&s, QualityOptions::default()).unwrap();
        assert_eq!(summary.report().mean_cost, 12.83);
        assert_eq!(summary.total_cost, summary.per_player[0].cumulative_cost + summary.per_player[1].cumulative_cost);
        assert_eq!(game_summary(&CopSeries::<f64>::from_costs(&[]), QualityOptions::default()), Err(QualityError::EmptySeries));
    }

    #[test]
    fn mean_effect_cases() {
        let s = series_with_effects(&[1.0; 6], &[-1.0, 9.0, 0.0, 9.0, -0.2, 9.0]);
        assert!((mean_effect(&s, Color::Black, false).unwrap() + 0.4).abs() < 1e-12);
        let s = series_with_effects(&[1.0; 4], &[0.0; 4]);
        assert_eq!(mean_effect(&s, Color::White, false).unwrap(), 0.0);
        let s = CopSeries::from_costs(&[1.0]);
        assert_eq!(mean_effect(&s, Color::White, false), Err(QualityError::NoMovesForColor(Color::White)));
    }

    #[test]
    fn passes_are_excluded_from_mean_effect_by_default() {
        let mut s = series_with_effects(&[4.0; 4], &[-1.0, 0.0, -4.0, 0.0]);
        s.points[2].played_pass = true;
        assert_eq!(mean_effect(&s, Color::Black, false).unwrap(), -1.0);
        assert_eq!(mean_effect(&s, Color::Black, true).unwrap(), -2.5);
    }

    #[test]
    fn injected_blunder() {
        let model = MockModel { penalties: [(9, 3.0)].into(), ..Default::default() };
        let mock = NegamaxMock::new(model).unwrap();
        let mut record = GameRecord::default();
        let mut color = Color::Black;
        for i in 0..20u8 {
            record.moves.push(Move { color, point: Some(Point::new(i % 19 + 1, i / 19 + 1)) });
            color = color.opposite();
        }
        let opts = SeriesOptions { include_terminal: true, ..Default::default() };
        let s: CopSeries<f64> = compute_series(&record, &mock, 1, opts).unwrap();
        // move 9 is black's fifth of ten moves
        assert!((mean_effect(&s, Color::Black, false).unwrap() + 0.3).abs() < 1e-9);
        assert!(mean_effect(&s, Color::White, false).unwrap().abs() < 1e-9);
    }

    #[test]
    fn clamping_bounds_performance() {
        let s = series_with_effects(&[10.0, 10.0, 10.0, 10.0], &[-13.0, 0.0, 0.0, 0.0]);
        let raw = player_performance(&s, QualityOptions::default());
        assert_eq!(raw[0].performance_pct, Percentage::Defined(35.0));
        let clamped = player_performance(&s, QualityOptions { clamp_realized: true, ..Default::default() });
        assert_eq!(clamped[0].performance_pct, Percentage::Defined(50.0));
    }

    #[test]
    fn handicap_value_on_mock() {
        let mock = NegamaxMock::default();
        assert!((handicap_value::<f64>(&mock, 19, 6.5, 1).unwrap() - 12.0).abs() < 1e-9);
        let mock = NegamaxMock::new(MockModel { base_value: 10.0, ..Default::default() }).unwrap();
        assert!((handicap_value::<f64>(&mock, 19, 6.5, 1).unwrap() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn percentage_serialization() {
        let json = serde_json::to_string(&[Percentage::Defined(95.0), Percentage::Undefined]).unwrap();
        assert_eq!(json, r#"[95.0,"undefined"]"#);
        let back: Vec<Percentage<f64>> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, vec![Percentage::Defined(95.0), Percentage::Undefined]);
    }
}
