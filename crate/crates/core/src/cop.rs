//! The cost-of-passing series of a game.
//!
//! For every position `s_i` the engine is asked twice: once as is, once with
//! an explicit pass appended. The cost of passing is the score lost by that
//! pass, from the perspective of the player to move:
//! `c_i = sign(side) * (mu(s_i) - mu(pass(s_i)))`.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::engine::{Engine, EngineError, PositionEval, Query};
use crate::scalar::Scalar;
use crate::sgf::{Color, GameRecord};

fn sign<T: Scalar>(color: Color) -> T {
    T::of(color.sign())
}

/// Score lost by passing, for the player to move. Black-perspective inputs.
pub fn cost_of_passing<T: Scalar>(mu_before: T, mu_after_pass: T, side_to_move: Color) -> T {
    sign::<T>(side_to_move) * (mu_before - mu_after_pass)
}

/// Score change caused by a move, for the player who made it.
pub fn effect<T: Scalar>(mu_prev: T, mu_next: T, mover: Color) -> T {
    sign::<T>(mover) * (mu_next - mu_prev)
}

/// Part of the cost of passing a move actually secured: a pass realizes 0,
/// an engine-optimal move realizes the full cost.
pub fn realized_value<T: Scalar>(cost: T, effect: T) -> T {
    cost + effect
}

/// [`realized_value`] clamped into `[0, cost]`.
pub fn realized_value_clamped<T: Scalar>(cost: T, effect: T) -> T {
    let upper = cost.max(T::zero());
    realized_value(cost, effect).max(T::zero()).min(upper)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CopPoint<T> {
    pub index: usize,
    pub side_to_move: Color,
    pub score_mean_before: T,
    pub score_mean_after_pass: T,
    pub cost: T,
    pub win_rate: T,
    /// Effect of the move played from this position; absent for the terminal
    /// position, and for the last move when the final position was not
    /// evaluated.
    pub effect: Option<T>,
    #[serde(default)]
    pub played_pass: bool,
}

/// Identifies the analyzed game in output files.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GameInfo {
    pub board_size: u8,
    pub komi: f64,
    pub rules: String,
    pub move_count: usize,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl From<&GameRecord> for GameInfo {
    fn from(record: &GameRecord) -> Self {
        GameInfo {
            board_size: record.board_size,
            komi: record.komi,
            rules: record.rules.clone(),
            move_count: record.moves.len(),
            metadata: record.metadata.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CopSeries<T> {
    pub game: GameInfo,
    pub engine: String,
    pub visits: u32,
    pub points: Vec<CopPoint<T>>,
}

impl<T: Scalar> CopSeries<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn costs(&self) -> Vec<T> {
        self.points.iter().map(|p| p.cost).collect()
    }

    pub fn effects(&self) -> Vec<Option<T>> {
        self.points.iter().map(|p| p.effect).collect()
    }

    /// Series with the given costs, black to move at even indices and every
    /// effect set to `0` (engine-optimal play). Score means are synthesized
    /// so that the stored fields stay consistent with the costs.
    pub fn from_costs(costs: &[T]) -> Self {
        let points = costs
            .iter()
            .enumerate()
            .map(|(index, &cost)| {
                let side_to_move = if index % 2 == 0 { Color::Black } else { Color::White };
                CopPoint {
                    index,
                    side_to_move,
                    score_mean_before: T::zero(),
                    score_mean_after_pass: -sign::<T>(side_to_move) * cost,
                    cost,
                    win_rate: T::half(),
                    effect: Some(T::zero()),
                    played_pass: false,
                }
            })
            .collect();
        CopSeries {
            game: GameInfo { move_count: costs.len(), ..Default::default() },
            engine: "synthetic".into(),
            visits: 1,
            points,
        }
    }

    /// Converts to another float type.
    pub fn cast<U: Scalar>(&self) -> CopSeries<U> {
        let c = |v: T| U::of(v.as_f64());
        CopSeries {
            game: self.game.clone(),
            engine: self.engine.clone(),
            visits: self.visits,
            points: self
                .points
                .iter()
                .map(|p| CopPoint {
                    index: p.index,
                    side_to_move: p.side_to_move,
                    score_mean_before: c(p.score_mean_before),
                    score_mean_after_pass: c(p.score_mean_after_pass),
                    cost: c(p.cost),
                    win_rate: c(p.win_rate),
                    effect: p.effect.map(c),
                    played_pass: p.played_pass,
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CacheKey {
    board_size: u8,
    rules: String,
    komi_bits: u64,
    digest: [u8; 32],
    visits: u32,
}

impl CacheKey {
    pub fn of(query: &Query) -> Self {
        let mut hasher = Sha256::new();
        hasher.update([query.initial_player.letter() as u8]);
        for stone in &query.initial_stones {
            hasher.update([b'+', stone.col, stone.row]);
        }
        for m in &query.moves {
            match m.point {
                Some(p) => hasher.update([m.color.letter() as u8, p.col, p.row]),
                None => hasher.update([m.color.letter() as u8, 0, 0]),
            }
        }
        CacheKey {
            board_size: query.board_size,
            rules: query.rules.clone(),
            komi_bits: query.komi.to_bits(),
            digest: hasher.finalize().into(),
            visits: query.visits,
        }
    }
}

/// Evaluations keyed by position and search budget. Safe to share between
/// threads; a hit returns exactly the stored value.
#[derive(Debug, Default)]
pub struct EvalCache {
    entries: RwLock<HashMap<CacheKey, PositionEval>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl EvalCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &CacheKey) -> Option<PositionEval> {
        let found = self.entries.read().unwrap_or_else(|p| p.into_inner()).get(key).copied();
        match found {
            Some(_) => self.hits.fetch_add(1, Ordering::Relaxed),
            None => self.misses.fetch_add(1, Ordering::Relaxed),
        };
        found
    }

    pub fn insert(&self, key: CacheKey, eval: PositionEval) {
        self.entries.write().unwrap_or_else(|p| p.into_inner()).entry(key).or_insert(eval);
    }

    pub fn evaluate(&self, engine: &dyn Engine, query: &Query) -> Result<PositionEval, EngineError> {
        let key = CacheKey::of(query);
        if let Some(eval) = self.get(&key) {
            return Ok(eval);
        }
        let eval = engine.evaluate(query)?;
        self.insert(key, eval);
        Ok(eval)
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap_or_else(|p| p.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CopError {
    #[error("engine failed at index {index}")]
    Engine { index: usize, source: EngineError },
}

impl CopError {
    pub fn index(&self) -> usize {
        match self {
            CopError::Engine { index, .. } => *index,
        }
    }

    pub fn engine_error(&self) -> &EngineError {
        match self {
            CopError::Engine { source, .. } => source,
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SeriesOptions<'a> {
    /// Also analyze the final position.
    pub include_terminal: bool,
    pub cache: Option<&'a EvalCache>,
}

/// Evaluates the plain and pass-injected query of one position and forms its
/// cost of passing. `compute_series` produces the same numbers in bulk.
pub fn position_cost<T: Scalar>(
    engine: &dyn Engine,
    query: &Query,
    cache: Option<&EvalCache>,
) -> Result<(PositionEval, PositionEval, T), EngineError> {
    let run = |q: &Query| match cache {
        Some(cache) => cache.evaluate(engine, q),
        None => engine.evaluate(q),
    };
    let before = run(query)?;
    let after = run(&query.with_pass())?;
    let cost = cost_of_passing(T::of(before.score_mean), T::of(after.score_mean), query.side_to_move());
    Ok((before, after, cost))
}

/// Computes the cost of passing at positions `0..N` (`0..=N` with
/// `include_terminal`) and the effect of every move whose resulting position
/// was evaluated. Identical queries are sent once; up to the engine's
/// `max_in_flight` queries run concurrently, and the result is ordered by
/// index regardless of completion order.
pub fn compute_series<T: Scalar>(
    record: &GameRecord,
    engine: &dyn Engine,
    visits: u32,
    options: SeriesOptions<'_>,
) -> Result<CopSeries<T>, CopError> {
    let n = record.moves.len();
    let last = if options.include_terminal { n } else { n.saturating_sub(1) };
    let analyzed: Vec<usize> = if n == 0 && !options.include_terminal { Vec::new() } else { (0..=last).collect() };

    // unique queries in index order, each tagged with the first index needing it
    let mut tasks: Vec<(usize, Query)> = Vec::new();
    let mut slot_of: HashMap<CacheKey, usize> = HashMap::new();
    let mut add = |index: usize, query: Query, tasks: &mut Vec<(usize, Query)>| -> usize {
        *slot_of.entry(CacheKey::of(&query)).or_insert_with(|| {
            tasks.push((index, query));
            tasks.len() - 1
        })
    };
    let mut slots = Vec::with_capacity(analyzed.len());
    for &i in &analyzed {
        let query = Query::for_position(record, i, visits);
        let plain = add(i, query.clone(), &mut tasks);
        let passed = add(i, query.with_pass(), &mut tasks);
        slots.push((plain, passed));
    }
    // the position after the last move is only free when that move was a pass
    let final_slot = if n > 0 {
        slot_of.get(&CacheKey::of(&Query::for_position(record, n, visits))).copied()
    } else {
        None
    };

    let results = run_tasks(engine, &tasks, options.cache);
    let mut failure: Option<CopError> = None;
    let mut evals = Vec::with_capacity(results.len());
    for ((index, _), result) in tasks.iter().zip(results) {
        match result {
            Some(Ok(eval)) => evals.push(Some(eval)),
            Some(Err(source)) => {
                if failure.as_ref().is_none_or(|f| *index < f.index()) {
                    failure = Some(CopError::Engine { index: *index, source });
                }
                evals.push(None);
            }
            None => evals.push(None),
        }
    }
    if let Some(failure) = failure {
        return Err(failure);
    }
    let eval = |slot: usize| evals[slot].expect("all tasks ran");

    let points = analyzed
        .iter()
        .zip(&slots)
        .map(|(&i, &(plain, passed))| {
            let before = eval(plain);
            let after = eval(passed);
            let side = record.side_to_move(i);
            let next_slot = if i + 1 < analyzed.len() { Some(slots[i + 1].0) } else if i + 1 == n { final_slot } else { None };
            let move_effect = match (record.moves.get(i), next_slot) {
                (Some(m), Some(next)) => {
                    Some(effect(T::of(before.score_mean), T::of(eval(next).score_mean), m.color))
                }
                _ => None,
            };
            CopPoint {
                index: i,
                side_to_move: side,
                score_mean_before: T::of(before.score_mean),
                score_mean_after_pass: T::of(after.score_mean),
                cost: cost_of_passing(T::of(before.score_mean), T::of(after.score_mean), side),
                win_rate: T::of(before.win_rate),
                effect: move_effect,
                played_pass: record.moves.get(i).is_some_and(|m| m.is_pass()),
            }
        })
        .collect();

    Ok(CopSeries { game: GameInfo::from(record), engine: engine.describe(), visits, points })
}

type TaskResult = Option<Result<PositionEval, EngineError>>;

fn run_tasks(engine: &dyn Engine, tasks: &[(usize, Query)], cache: Option<&EvalCache>) -> Vec<TaskResult> {
    let results: Vec<Mutex<TaskResult>> = tasks.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let workers = engine.max_in_flight().clamp(1, tasks.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if failed.load(Ordering::SeqCst) {
                    return;
                }
                let t = next.fetch_add(1, Ordering::SeqCst);
                let Some((_, query)) = tasks.get(t) else { return };
                let result = match cache {
                    Some(cache) => cache.evaluate(engine, query),
                    None => engine.evaluate(query),
                };
                if result.is_err() {
                    failed.store(true, Ordering::SeqCst);
                }
                *results[t].lock().unwrap_or_else(|p| p.into_inner()) = Some(result);
            });
        }
    });
    results.into_iter().map(|m| m.into_inner().unwrap_or_else(|p| p.into_inner())).collect()
}
