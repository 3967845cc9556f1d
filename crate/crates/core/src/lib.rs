//! Cost-of-passing analysis for Go games.
//!
//! Every position of a game is evaluated twice by an analysis engine: as it
//! stands, and with the player to move passing. The score difference is what
//! having the move is worth. The modules here parse games, drive the engine,
//! build the series, and read features, quality figures and charts off it.
//!
//! The math is generic over [`scalar::Scalar`]; the aliases below fix it to
//! `f64`.

pub mod cop;
pub mod engine;
pub mod features;
pub mod quality;
pub mod report;
pub mod scalar;
pub mod sgf;

pub use cop::{compute_series, CopError, EvalCache, SeriesOptions};
pub use engine::{Engine, EngineClient, EngineConfig, EngineError, Perspective};
pub use features::{FeatureError, FeatureParams, Sente, SegmentKind, Stage};
pub use quality::{Percentage, QualityError, QualityOptions, QualityReport};
pub use report::{ChartDocument, DangerLevel, DangerMode, ExportFormat, ReportError};
pub use scalar::Scalar;
pub use sgf::{parse_sgf, serialize_sgf, Color, GameRecord, Move, Point, SgfError};

pub type CopPoint = cop::CopPoint<f64>;
pub type CopSeries = cop::CopSeries<f64>;
pub type BaselineFit = features::BaselineFit<f64>;
pub type Segment = features::Segment<f64>;
pub type SegmentParams = features::SegmentParams<f64>;
pub type StageParams = features::StageParams<f64>;
pub type SenteState = features::SenteState<f64>;
pub type FeatureSet = features::FeatureSet<f64>;
pub type PointOfInterest = features::PointOfInterest<f64>;
pub type PlayerPerformance = quality::PlayerPerformance<f64>;
pub type GameSummary = quality::GameSummary<f64>;
