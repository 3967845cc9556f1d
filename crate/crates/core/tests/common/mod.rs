#![allow(dead_code)]

use copan_core::engine::{Engine, EngineError, PositionEval, Query};
use copan_core::sgf::{Board, Color, GameRecord, Move, Point};
use rand::Rng;

/// Alternating game, black first, walking the board row by row.
pub fn synthetic_game(n: usize) -> GameRecord {
    let mut record = GameRecord::default();
    let mut color = Color::Black;
    for i in 0..n {
        record.moves.push(Move::play(color, (i % 19 + 1) as u8, (i / 19 + 1) as u8));
        color = color.opposite();
    }
    record
}

/// Independent oracle for the mock's move values.
pub fn mock_move_value(base: f64, decay: f64, spikes: &[(usize, f64)], k: usize) -> f64 {
    let spike: f64 = spikes.iter().filter(|(s, _)| *s == k).map(|(_, v)| v).sum();
    (base - decay * (k as f64 - 1.0)).max(0.0) + spike
}

/// Random legal record: random size, komi, rules, handicap, metadata, and an
/// alternating move sequence with the odd pass.
pub fn random_record(rng: &mut impl Rng) -> GameRecord {
    let size = *[5u8, 7, 9, 13, 19].get(rng.gen_range(0..5)).unwrap();
    let mut board = Board::new(size);
    let mut record = GameRecord {
        board_size: size,
        komi: f64::from(rng.gen_range(-4i32..16)) * 0.5,
        rules: ["japanese", "chinese", "aga"][rng.gen_range(0..3)].to_string(),
        ..Default::default()
    };
    if rng.gen_bool(0.3) {
        for _ in 0..rng.gen_range(2..5) {
            let p = Point::new(rng.gen_range(1..=size), rng.gen_range(1..=size));
            if board.is_empty_at(p) {
                board.place(Color::Black, p);
                record.handicap_stones.push(p);
            }
        }
    }
    let mut notes = String::new();
    for _ in 0..rng.gen_range(0..12) {
        notes.push(['a', ' ', ']', '\\', ':', 'é', '\n'][rng.gen_range(0..7)]);
    }
    record.metadata.insert("PB".into(), format!("Black {}", rng.gen_range(0..100)));
    record.metadata.insert("C".into(), notes);

    let mut color = if record.handicap_stones.is_empty() { Color::Black } else { Color::White };
    let target = rng.gen_range(0..usize::from(size) * usize::from(size) / 2);
    let mut attempts = 0;
    while record.moves.len() < target && attempts < 10_000 {
        attempts += 1;
        if rng.gen_bool(0.03) {
            record.moves.push(Move::pass(color));
            color = color.opposite();
            continue;
        }
        let p = Point::new(rng.gen_range(1..=size), rng.gen_range(1..=size));
        if !board.is_empty_at(p) {
            continue;
        }
        let mut next = board.clone();
        next.place(color, p);
        if next.is_empty_at(p) {
            continue;
        }
        board = next;
        record.moves.push(Move { color, point: Some(p) });
        color = color.opposite();
    }
    record
}

/// Serves the color-swapped game through an engine that only knows the
/// original: swaps the query back and reports the negated verdict.
pub struct SwappedEngine<E>(pub E);

impl<E: Engine> Engine for SwappedEngine<E> {
    fn evaluate(&self, query: &Query) -> Result<PositionEval, EngineError> {
        let mut original = query.clone();
        original.initial_player = query.initial_player.opposite();
        for m in &mut original.moves {
            m.color = m.color.opposite();
        }
        let eval = self.0.evaluate(&original)?;
        Ok(PositionEval {
            score_mean: -eval.score_mean,
            win_rate: 1.0 - eval.win_rate,
            visits_used: eval.visits_used,
            side_to_move: eval.side_to_move.opposite(),
        })
    }

    fn max_in_flight(&self) -> usize {
        self.0.max_in_flight()
    }

    fn describe(&self) -> String {
        format!("swapped {}", self.0.describe())
    }
}
