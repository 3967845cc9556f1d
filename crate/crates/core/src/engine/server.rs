//! Serves any [`Engine`] over the line-delimited JSON protocol. This is what
//! `copan mock-engine` runs, and what in-process test engines run on a pipe.

use std::io::{self, BufRead, Write};
use std::sync::mpsc;
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::SeedableRng;

use super::protocol::{Request, Response, RootInfo};
use super::{denormalize_from_black, normalize_win_rate, Engine, EngineError, Perspective, ProtocolErrorKind};

#[derive(Clone, Debug)]
pub struct ServeOptions {
    /// Convention the served scores are reported in.
    pub perspective: Perspective,
    /// Answer requests in shuffled batches of up to this many.
    pub shuffle_window: usize,
    /// How long to wait for a batch to fill before answering it anyway.
    pub batch_wait: Duration,
    /// Pause before each response.
    pub delay: Duration,
    pub seed: u64,
    /// Exit without answering on the first request for this position index
    /// (move count, not counting a trailing pass).
    pub crash_at: Option<usize>,
}

impl Default for ServeOptions {
    fn default() -> Self {
        ServeOptions {
            perspective: Perspective::SideToMove,
            shuffle_window: 1,
            batch_wait: Duration::from_millis(20),
            delay: Duration::ZERO,
            seed: 0,
            crash_at: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ServeOutcome {
    /// Input closed.
    Finished,
    /// Stopped on purpose because of `crash_at`.
    Crashed,
}

enum Action {
    Reply(String),
    Crash,
}

fn handle(line: &str, engine: &dyn Engine, options: &ServeOptions) -> Option<Action> {
    if line.trim().is_empty() {
        return None;
    }
    let request: Request = match serde_json::from_str(line) {
        Ok(r) => r,
        Err(e) => {
            let id = serde_json::from_str::<serde_json::Value>(line)
                .ok()
                .and_then(|v| v.get("id").and_then(|i| i.as_str()).map(str::to_string));
            return Some(Action::Reply(Response::error_line(id.as_deref(), &format!("could not parse query: {e}"))));
        }
    };
    let query = match request.to_query() {
        Ok(q) => q,
        Err(e) => return Some(Action::Reply(Response::error_line(Some(&request.id), &e.to_string()))),
    };
    if let Some(k) = options.crash_at {
        let trailing_pass = query.moves.last().is_some_and(|m| m.is_pass());
        if query.moves.len() - usize::from(trailing_pass) == k {
            return Some(Action::Crash);
        }
    }
    let reply = match engine.evaluate(&query) {
        Ok(eval) => {
            let stm = query.side_to_move();
            let root = RootInfo {
                score_lead: denormalize_from_black(eval.score_mean, options.perspective, stm),
                winrate: normalize_win_rate(eval.win_rate, options.perspective, stm),
                visits: eval.visits_used,
            };
            Response::result_line(&request.id, &root)
        }
        Err(EngineError::ProtocolError { kind: ProtocolErrorKind::MissingFixture, detail }) => {
            Response::error_line(Some(&request.id), &format!("MissingFixture: {detail}"))
        }
        Err(e) => Response::error_line(Some(&request.id), &e.to_string()),
    };
    Some(Action::Reply(reply))
}

/// Answers queries read from `input` until it closes or a crash is
/// triggered. `output` is dropped before returning in either case.
pub fn serve<R, W>(input: R, output: W, engine: &dyn Engine, options: &ServeOptions) -> io::Result<ServeOutcome>
where
    R: BufRead + Send,
    W: Write,
{
    let mut output = output;
    if options.shuffle_window <= 1 {
        for line in input.lines() {
            match handle(&line?, engine, options) {
                None => {}
                Some(Action::Crash) => return Ok(ServeOutcome::Crashed),
                Some(Action::Reply(reply)) => {
                    std::thread::sleep(options.delay);
                    writeln!(output, "{reply}")?;
                    output.flush()?;
                }
            }
        }
        return Ok(ServeOutcome::Finished);
    }

    let mut rng = rand::rngs::StdRng::seed_from_u64(options.seed);
    std::thread::scope(|scope| {
        let (tx, rx) = mpsc::channel::<String>();
        scope.spawn(move || {
            for line in input.lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        loop {
            let Ok(first) = rx.recv() else {
                return Ok(ServeOutcome::Finished);
            };
            let mut batch = vec![first];
            while batch.len() < options.shuffle_window {
                match rx.recv_timeout(options.batch_wait) {
                    Ok(line) => batch.push(line),
                    Err(_) => break,
                }
            }
            batch.shuffle(&mut rng);
            for line in batch {
                match handle(&line, engine, options) {
                    None => {}
                    Some(Action::Crash) => {
                        drop(output);
                        return Ok(ServeOutcome::Crashed);
                    }
                    Some(Action::Reply(reply)) => {
                        std::thread::sleep(options.delay);
                        writeln!(output, "{reply}")?;
                        output.flush()?;
                    }
                }
            }
        }
    })
}
