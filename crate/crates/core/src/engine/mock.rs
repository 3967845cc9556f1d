//! Deterministic stand-in engines.
//!
//! [`NegamaxMock`] scores positions with a closed form: every move `k` is
//! worth `w(k)` points to the player making it, and the score of a position
//! is the material banked so far plus the alternating sum of the remaining
//! move values, taken from the side to move. Its cost of passing at position
//! `n` is exactly `w(n + 1)`, which makes it an oracle for the whole
//! pipeline.
//!
//! [`ScriptedMock`] answers from a fixture table.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::{Engine, EngineError, PositionEval, Query};
use crate::sgf::{Color, Move};

/// Move-value schedule of the negamax mock.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MockModel {
    pub base_value: f64,
    pub decay: f64,
    pub komi: f64,
    /// Extra points added to `w(k)`.
    pub spikes: BTreeMap<usize, f64>,
    /// Points move `k` falls short of `w(k)` when actually played. Lets tests
    /// inject blunders with a known effect of `-penalty`.
    #[serde(default)]
    pub penalties: BTreeMap<usize, f64>,
    /// Moves past this index are worth nothing. Needed when `decay` is 0.
    #[serde(default)]
    pub horizon: Option<usize>,
}

impl Default for MockModel {
    fn default() -> Self {
        MockModel {
            base_value: 12.0,
            decay: 0.05,
            komi: 6.5,
            spikes: BTreeMap::new(),
            penalties: BTreeMap::new(),
            horizon: None,
        }
    }
}

const FALLBACK_HORIZON: usize = 361;

impl MockModel {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: &str| Err(EngineError::InvalidConfig(m.to_string()));
        if self.base_value.is_nan() || self.base_value <= 0.0 {
            return bad("base_value must be positive");
        }
        if self.decay.is_nan() || self.decay < 0.0 {
            return bad("decay must be non-negative");
        }
        if self.spikes.values().any(|v| v.is_nan() || *v < 0.0) {
            return bad("spike values must be non-negative");
        }
        if self.spikes.contains_key(&0) {
            return bad("moves are numbered from 1");
        }
        Ok(())
    }

    /// Last move index that can carry value.
    fn last_valued_move(&self) -> usize {
        let linear_end = if self.decay > 0.0 {
            (self.base_value / self.decay).ceil() as usize + 1
        } else {
            FALLBACK_HORIZON
        };
        let spike_end = self.spikes.keys().next_back().copied().unwrap_or(0);
        let end = linear_end.max(spike_end);
        self.horizon.map_or(end, |h| h.min(end))
    }

    /// Value of move `k` (1-based).
    pub fn move_value(&self, k: usize) -> f64 {
        if k == 0 || self.horizon.is_some_and(|h| k > h) {
            return 0.0;
        }
        let linear = (self.base_value - self.decay * (k - 1) as f64).max(0.0);
        linear + self.spikes.get(&k).copied().unwrap_or(0.0)
    }

    /// Alternating sum of the values of moves `n+1, n+2, ...`: what the side
    /// to move at position `n` can still expect to gain over its opponent.
    pub fn remaining_advantage(&self, n: usize) -> f64 {
        let end = self.last_valued_move();
        let mut sum = 0.0;
        let mut sign = 1.0;
        for k in n + 1..=end {
            sum += sign * self.move_value(k);
            sign = -sign;
        }
        sum
    }

    /// Black-perspective score after `moves`, with `first_player` to move on
    /// the empty board.
    pub fn score(&self, moves: &[Move], first_player: Color) -> f64 {
        let banked: f64 = moves
            .iter()
            .enumerate()
            .filter(|(_, m)| !m.is_pass())
            .map(|(i, m)| {
                let k = i + 1;
                m.color.sign() * (self.move_value(k) - self.penalties.get(&k).copied().unwrap_or(0.0))
            })
            .sum();
        let to_move = moves.last().map_or(first_player, |m| m.color.opposite());
        banked + to_move.sign() * self.remaining_advantage(moves.len()) - self.komi
    }
}

/// Closed-form mock score; black moves first on an empty board.
pub fn negamax_mock_score(model: &MockModel, moves: &[Move]) -> f64 {
    model.score(moves, Color::Black)
}

fn win_rate_for(score: f64) -> f64 {
    1.0 / (1.0 + (-score / 7.0).exp())
}

#[derive(Debug, Default)]
pub struct NegamaxMock {
    model: MockModel,
    queries: AtomicUsize,
}

impl NegamaxMock {
    pub fn new(model: MockModel) -> Result<Self, EngineError> {
        model.validate()?;
        Ok(NegamaxMock { model, queries: AtomicUsize::new(0) })
    }

    pub fn model(&self) -> &MockModel {
        &self.model
    }

    /// Number of queries answered so far.
    pub fn queries(&self) -> usize {
        self.queries.load(Ordering::SeqCst)
    }
}

impl Engine for NegamaxMock {
    fn evaluate(&self, query: &Query) -> Result<PositionEval, EngineError> {
        self.queries.fetch_add(1, Ordering::SeqCst);
        let model = MockModel { komi: query.komi, ..self.model.clone() };
        let score = model.score(&query.moves, query.initial_player);
        Ok(PositionEval {
            score_mean: score,
            win_rate: win_rate_for(score),
            visits_used: query.visits.max(1),
            side_to_move: query.side_to_move(),
        })
    }

    fn max_in_flight(&self) -> usize {
        8
    }

    fn describe(&self) -> String {
        format!("negamax-mock(base={}, decay={})", self.model.base_value, self.model.decay)
    }
}

/// A fixture row. `moves` lists vertices separated by spaces (`"Q16 D4"`);
/// `pass` marks the pass-injected twin of that position. Scores are from
/// black's perspective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FixtureEntry {
    pub moves: String,
    #[serde(default)]
    pub pass: bool,
    pub score_lead: f64,
    #[serde(default)]
    pub winrate: Option<f64>,
}

#[derive(Debug, Default)]
pub struct ScriptedMock {
    table: HashMap<(String, bool), (f64, f64)>,
    queries: AtomicUsize,
}

fn moves_key(moves: &[Move], size: u8) -> String {
    moves
        .iter()
        .map(|m| m.point.map_or_else(|| "pass".to_string(), |p| p.to_vertex(size)))
        .collect::<Vec<_>>()
        .join(" ")
}

impl ScriptedMock {
    pub fn new(entries: impl IntoIterator<Item = FixtureEntry>) -> Self {
        let table = entries
            .into_iter()
            .map(|e| {
                let key = e.moves.split_whitespace().collect::<Vec<_>>().join(" ");
                ((key, e.pass), (e.score_lead, e.winrate.unwrap_or_else(|| win_rate_for(e.score_lead))))
            })
            .collect();
        ScriptedMock { table, queries: AtomicUsize::new(0) }
    }

    pub fn from_json(text: &str) -> Result<Self, EngineError> {
        let entries: Vec<FixtureEntry> =
            serde_json::from_str(text).map_err(|e| EngineError::InvalidConfig(format!("bad fixture: {e}")))?;
        Ok(Self::new(entries))
    }

    pub fn from_file(path: &Path) -> Result<Self, EngineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EngineError::InvalidConfig(format!("cannot read fixture {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Builds the fixture row for a position of a game.
    pub fn entry(moves: &[Move], size: u8, pass: bool, score_lead: f64) -> FixtureEntry {
        FixtureEntry { moves: moves_key(moves, size), pass, score_lead, winrate: None }
    }

    pub fn queries(&self) -> usize {
        self.queries.load(Ordering::SeqCst)
    }

    fn lookup(&self, query: &Query) -> Option<(f64, f64)> {
        let size = query.board_size;
        if let Some((last, prefix)) = query.moves.split_last() {
            if last.is_pass() {
                if let Some(v) = self.table.get(&(moves_key(prefix, size), true)) {
                    return Some(*v);
                }
            }
        }
        self.table.get(&(moves_key(&query.moves, size), false)).copied()
    }
}

impl Engine for ScriptedMock {
    fn evaluate(&self, query: &Query) -> Result<PositionEval, EngineError> {
        self.queries.fetch_add(1, Ordering::SeqCst);
        let (score, win_rate) = self.lookup(query).ok_or_else(|| {
            EngineError::missing_fixture(format!("no entry for moves [{}]", moves_key(&query.moves, query.board_size)))
        })?;
        Ok(PositionEval {
            score_mean: score,
            win_rate,
            visits_used: query.visits.max(1),
            side_to_move: query.side_to_move(),
        })
    }

    fn max_in_flight(&self) -> usize {
        8
    }

    fn describe(&self) -> String {
        format!("scripted-mock({} entries)", self.table.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{evaluate_with_pass, ProtocolErrorKind};
    use crate::sgf::GameRecord;

    /// Direct summation of the alternating tail, independent of
    /// `remaining_advantage`.
    fn tail_by_summation(model: &MockModel, n: usize) -> f64 {
        (1..=1000).map(|j| if j % 2 == 1 { 1.0 } else { -1.0 } * model.move_value(n + j)).sum()
    }

    fn empty_query(komi: f64) -> Query {
        Query::for_position(&GameRecord { komi, ..Default::default() }, 0, 1)
    }

    #[test]
    fn empty_board_score() {
        let model = MockModel::default();
        assert!((tail_by_summation(&model, 0) - 6.0).abs() < 1e-9);
        assert!((negamax_mock_score(&model, &[]) + 0.5).abs() < 1e-9);
        let mock = NegamaxMock::new(model).unwrap();
        assert!((mock.evaluate(&empty_query(6.5)).unwrap().score_mean + 0.5).abs() < 1e-9);
    }

    #[test]
    fn black_pass_on_empty_board() {
        let model = MockModel::default();
        let a1 = tail_by_summation(&model, 1);
        let score = negamax_mock_score(&model, &[Move::pass(Color::Black)]);
        assert!((score - (-a1 - 6.5)).abs() < 1e-9);
        let mock = NegamaxMock::new(model).unwrap();
        let eval = evaluate_with_pass(&mock, &empty_query(6.5)).unwrap();
        assert!((eval.score_mean - (-a1 - 6.5)).abs() < 1e-9);
        assert_eq!(eval.side_to_move, Color::White);
    }

    #[test]
    fn tail_vanishes_after_move_240() {
        let model = MockModel::default();
        assert_eq!(model.move_value(241), 0.0);
        assert!(model.remaining_advantage(240).abs() < 1e-12);
    }

    #[test]
    fn spike_adds_to_schedule() {
        let model = MockModel { spikes: [(50, 8.0)].into(), ..Default::default() };
        assert!((model.move_value(50) - (12.0 - 0.05 * 49.0 + 8.0)).abs() < 1e-12);
    }

    #[test]
    fn recurrence_holds_against_summation() {
        let model = MockModel { spikes: [(30, 5.0), (120, 3.0)].into(), ..Default::default() };
        for n in 0..=300 {
            let a = model.remaining_advantage(n);
            assert!((a - tail_by_summation(&model, n)).abs() < 1e-9, "n={n}");
            let next = model.remaining_advantage(n + 1);
            assert!((a - (model.move_value(n + 1) - next)).abs() < 1e-9, "n={n}");
        }
    }

    #[test]
    fn best_move_is_neutral() {
        let model = MockModel::default();
        let mut moves = Vec::new();
        let mut color = Color::Black;
        for n in 0..=240 {
            let before = negamax_mock_score(&model, &moves);
            moves.push(Move::play(color, (n % 19 + 1) as u8, (n / 19 % 19 + 1) as u8));
            let after = negamax_mock_score(&model, &moves);
            assert!((after - before).abs() < 1e-9, "n={n}");
            color = color.opposite();
        }
    }

    #[test]
    fn zero_decay_needs_horizon() {
        let model = MockModel { decay: 0.0, horizon: Some(10), ..Default::default() };
        assert_eq!(model.remaining_advantage(0), 0.0);
        assert_eq!(model.remaining_advantage(1), 12.0);
        assert!(MockModel { base_value: 0.0, ..Default::default() }.validate().is_err());
        assert!(MockModel { spikes: [(3, -1.0)].into(), ..Default::default() }.validate().is_err());
    }

    #[test]
    fn scripted_lookup_and_missing_fixture() {
        let mock = ScriptedMock::from_json(r#"[{"moves": "", "pass": false, "scoreLead": 1.25}]"#).unwrap();
        let q = empty_query(6.5);
        assert_eq!(mock.evaluate(&q).unwrap().score_mean, 1.25);
        let err = evaluate_with_pass(&mock, &q).unwrap_err();
        assert!(matches!(err, EngineError::ProtocolError { kind: ProtocolErrorKind::MissingFixture, .. }));
    }

    #[test]
    fn mocks_are_deterministic() {
        let mock = NegamaxMock::new(MockModel::default()).unwrap();
        let q = empty_query(6.5).with_pass();
        assert_eq!(mock.evaluate(&q).unwrap(), mock.evaluate(&q).unwrap());
        assert_eq!(mock.queries(), 2);
    }
}
