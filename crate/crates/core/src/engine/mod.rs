//! Engine access: the query model, the black-perspective normalization, and
//! the [`Engine`] trait implemented by the protocol client and both mocks.

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sgf::{Color, GameRecord, Move, Point};

mod client;
mod mock;
pub mod protocol;
mod server;

pub use client::{EngineClient, InProcessLauncher, Launcher, ProcessLauncher};
pub use mock::{negamax_mock_score, FixtureEntry, MockModel, NegamaxMock, ScriptedMock};
pub use server::{serve, ServeOptions, ServeOutcome};

/// How an engine reports score leads and win rates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Perspective {
    Black,
    White,
    #[default]
    SideToMove,
}

impl std::str::FromStr for Perspective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "black" => Ok(Perspective::Black),
            "white" => Ok(Perspective::White),
            "side-to-move" => Ok(Perspective::SideToMove),
            other => Err(format!("unknown perspective {other:?}")),
        }
    }
}

/// Converts a raw engine score to black's perspective.
pub fn normalize_to_black(raw_score: f64, perspective: Perspective, side_to_move: Color) -> f64 {
    match perspective {
        Perspective::Black => raw_score,
        Perspective::White => -raw_score,
        Perspective::SideToMove => raw_score * side_to_move.sign(),
    }
}

/// Same as [`normalize_to_black`] for a win probability.
pub fn normalize_win_rate(raw: f64, perspective: Perspective, side_to_move: Color) -> f64 {
    let flip = match perspective {
        Perspective::Black => false,
        Perspective::White => true,
        Perspective::SideToMove => side_to_move == Color::White,
    };
    if flip {
        1.0 - raw
    } else {
        raw
    }
}

/// Converts a black-perspective value into the given reporting convention.
/// Inverse of [`normalize_to_black`].
pub fn denormalize_from_black(score: f64, perspective: Perspective, side_to_move: Color) -> f64 {
    normalize_to_black(score, perspective, side_to_move)
}

#[derive(Clone, Debug)]
pub struct EngineConfig {
    /// Executable followed by its arguments.
    pub command: Vec<String>,
    pub visits: u32,
    pub rules: String,
    pub reporting_perspective: Perspective,
    pub timeout: Duration,
    pub max_in_flight: usize,
    /// Where the engine's stderr goes; discarded when unset.
    pub stderr_log: Option<std::path::PathBuf>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            command: Vec::new(),
            visits: 100,
            rules: crate::sgf::DEFAULT_RULES.to_string(),
            reporting_perspective: Perspective::SideToMove,
            timeout: Duration::from_secs(60),
            max_in_flight: 8,
            stderr_log: None,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.visits == 0 {
            return Err(EngineError::InvalidConfig("visits must be at least 1".into()));
        }
        if self.max_in_flight == 0 {
            return Err(EngineError::InvalidConfig("max_in_flight must be at least 1".into()));
        }
        Ok(())
    }
}

/// One position to evaluate: the initial setup plus a move sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Query {
    pub board_size: u8,
    pub komi: f64,
    pub rules: String,
    pub initial_stones: Vec<Point>,
    pub initial_player: Color,
    pub moves: Vec<Move>,
    pub visits: u32,
}

impl Query {
    /// Query for position `i` of a record.
    pub fn for_position(record: &GameRecord, i: usize, visits: u32) -> Query {
        Query {
            board_size: record.board_size,
            komi: record.komi,
            rules: record.rules.clone(),
            initial_stones: record.handicap_stones.clone(),
            initial_player: record.first_player(),
            moves: record.moves[..i.min(record.moves.len())].to_vec(),
            visits,
        }
    }

    pub fn side_to_move(&self) -> Color {
        self.moves.last().map_or(self.initial_player, |m| m.color.opposite())
    }

    /// The same position after the side to move passes.
    pub fn with_pass(&self) -> Query {
        let mut q = self.clone();
        q.moves.push(Move::pass(self.side_to_move()));
        q
    }
}

/// Engine verdict for a position, already normalized to black's perspective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PositionEval {
    pub score_mean: f64,
    pub win_rate: f64,
    pub visits_used: u32,
    pub side_to_move: Color,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ProtocolErrorKind {
    /// A scripted engine has no entry for the queried position.
    MissingFixture,
    Malformed,
}

impl fmt::Display for ProtocolErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProtocolErrorKind::MissingFixture => f.write_str("MissingFixture"),
            ProtocolErrorKind::Malformed => f.write_str("Malformed"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("engine crashed: {0}")]
    EngineCrashed(String),
    #[error("query timed out after {0:?}")]
    QueryTimeout(Duration),
    #[error("protocol error ({kind}): {detail}")]
    ProtocolError { kind: ProtocolErrorKind, detail: String },
    #[error("engine rejected query: {0}")]
    EngineRejectedQuery(String),
    #[error("invalid engine configuration: {0}")]
    InvalidConfig(String),
}

impl EngineError {
    pub fn malformed(detail: impl Into<String>) -> Self {
        EngineError::ProtocolError { kind: ProtocolErrorKind::Malformed, detail: detail.into() }
    }

    pub fn missing_fixture(detail: impl Into<String>) -> Self {
        EngineError::ProtocolError { kind: ProtocolErrorKind::MissingFixture, detail: detail.into() }
    }
}

/// Anything that can score a position. Implementations must be safe to call
/// from several threads at once.
pub trait Engine: Send + Sync {
    fn evaluate(&self, query: &Query) -> Result<PositionEval, EngineError>;

    /// How many queries callers may usefully keep outstanding.
    fn max_in_flight(&self) -> usize {
        1
    }

    /// Short provenance string recorded in analysis files.
    fn describe(&self) -> String;
}

impl<E: Engine + ?Sized> Engine for &E {
    fn evaluate(&self, query: &Query) -> Result<PositionEval, EngineError> {
        (**self).evaluate(query)
    }

    fn max_in_flight(&self) -> usize {
        (**self).max_in_flight()
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}

impl<E: Engine + ?Sized> Engine for Box<E> {
    fn evaluate(&self, query: &Query) -> Result<PositionEval, EngineError> {
        (**self).evaluate(query)
    }

    fn max_in_flight(&self) -> usize {
        (**self).max_in_flight()
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}

impl<E: Engine + ?Sized> Engine for std::sync::Arc<E> {
    fn evaluate(&self, query: &Query) -> Result<PositionEval, EngineError> {
        (**self).evaluate(query)
    }

    fn max_in_flight(&self) -> usize {
        (**self).max_in_flight()
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}

pub fn evaluate(engine: &dyn Engine, query: &Query) -> Result<PositionEval, EngineError> {
    engine.evaluate(query)
}

/// Evaluates the position after an explicit pass by the side to move. The
/// turn is never flipped directly: engines track history, so the pass has to
/// be part of the move sequence.
pub fn evaluate_with_pass(engine: &dyn Engine, query: &Query) -> Result<PositionEval, EngineError> {
    engine.evaluate(&query.with_pass())
}
