//! Client for engines speaking the analysis protocol on a pipe.
//!
//! Any number of threads may call [`EngineClient::evaluate`] at once. Writes
//! are serialized under one lock, at most `max_in_flight` queries are
//! outstanding, and a reader thread routes each response to its caller by
//! id. If the engine's output closes, the engine is relaunched once and every
//! unanswered query is written again; a second loss fails all of them with
//! [`EngineError::EngineCrashed`].

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Child, Command, Stdio};
use std::sync::{mpsc, Arc, Condvar, Mutex, MutexGuard, Weak};
use std::thread;

use log::{debug, warn};

use super::protocol::{Request, Response};
use super::server::{serve, ServeOptions};
use super::{normalize_to_black, normalize_win_rate, Engine, EngineConfig, EngineError, PositionEval, Query};
use crate::sgf::Color;

const MAX_RESTARTS: usize = 1;

/// Both ends of a running engine.
pub struct Connection {
    pub writer: Box<dyn Write + Send>,
    pub reader: Box<dyn BufRead + Send>,
    pub child: Option<Child>,
}

/// Starts (and restarts) an engine.
pub trait Launcher: Send + Sync {
    fn launch(&self) -> io::Result<Connection>;
    fn describe(&self) -> String;
}

/// Runs an external executable; stderr goes to a log file or nowhere.
#[derive(Clone, Debug)]
pub struct ProcessLauncher {
    pub command: Vec<String>,
    pub stderr_log: Option<PathBuf>,
}

impl Launcher for ProcessLauncher {
    fn launch(&self) -> io::Result<Connection> {
        let (program, args) = self
            .command
            .split_first()
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "empty engine command"))?;
        let stderr = match &self.stderr_log {
            Some(path) => Stdio::from(File::options().create(true).append(true).open(path)?),
            None => Stdio::null(),
        };
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(stderr)
            .spawn()?;
        let writer = child.stdin.take().expect("piped stdin");
        let reader = child.stdout.take().expect("piped stdout");
        Ok(Connection { writer: Box::new(writer), reader: Box::new(BufReader::new(reader)), child: Some(child) })
    }

    fn describe(&self) -> String {
        self.command.join(" ")
    }
}

/// Serves an in-process engine over OS pipes on a background thread, so the
/// full protocol path can be exercised without a subprocess.
pub struct InProcessLauncher {
    engine: Arc<dyn Engine>,
    options: ServeOptions,
}

impl InProcessLauncher {
    pub fn new(engine: Arc<dyn Engine>, options: ServeOptions) -> Self {
        InProcessLauncher { engine, options }
    }
}

impl Launcher for InProcessLauncher {
    fn launch(&self) -> io::Result<Connection> {
        let (request_rx, request_tx) = io::pipe()?;
        let (response_rx, response_tx) = io::pipe()?;
        let engine = Arc::clone(&self.engine);
        let options = self.options.clone();
        thread::Builder::new().name("in-process-engine".into()).spawn(move || {
            if let Err(e) = serve(BufReader::new(request_rx), response_tx, engine.as_ref(), &options) {
                debug!("in-process engine stopped: {e}");
            }
        })?;
        Ok(Connection { writer: Box::new(request_tx), reader: Box::new(BufReader::new(response_rx)), child: None })
    }

    fn describe(&self) -> String {
        format!("in-process {}", self.engine.describe())
    }
}

type Reply = Result<PositionEval, EngineError>;

struct Pending {
    line: String,
    side_to_move: Color,
    tx: mpsc::Sender<Reply>,
}

struct State {
    generation: u64,
    writer: Option<Box<dyn Write + Send>>,
    child: Option<Child>,
    pending: BTreeMap<u64, Pending>,
    next_id: u64,
    in_flight: usize,
    restarts: usize,
    requests_written: usize,
    dead: Option<String>,
}

struct Inner {
    launcher: Box<dyn Launcher>,
    config: EngineConfig,
    state: Mutex<State>,
    slot_freed: Condvar,
}

pub struct EngineClient {
    inner: Arc<Inner>,
}

impl EngineClient {
    /// Spawns the configured engine command.
    pub fn spawn(config: EngineConfig) -> Result<Self, EngineError> {
        let launcher = ProcessLauncher { command: config.command.clone(), stderr_log: config.stderr_log.clone() };
        Self::with_launcher(Box::new(launcher), config)
    }

    pub fn with_launcher(launcher: Box<dyn Launcher>, config: EngineConfig) -> Result<Self, EngineError> {
        config.validate()?;
        let connection = launcher
            .launch()
            .map_err(|e| EngineError::EngineCrashed(format!("could not start {}: {e}", launcher.describe())))?;
        let inner = Arc::new(Inner {
            launcher,
            config,
            state: Mutex::new(State {
                generation: 0,
                writer: Some(connection.writer),
                child: connection.child,
                pending: BTreeMap::new(),
                next_id: 1,
                in_flight: 0,
                restarts: 0,
                requests_written: 0,
                dead: None,
            }),
            slot_freed: Condvar::new(),
        });
        spawn_reader(&inner, 0, connection.reader);
        Ok(EngineClient { inner })
    }

    /// How many times the engine has been relaunched.
    pub fn restarts(&self) -> usize {
        self.inner.lock().restarts
    }

    /// Request lines written, replays included.
    pub fn requests_written(&self) -> usize {
        self.inner.lock().requests_written
    }

    pub fn config(&self) -> &EngineConfig {
        &self.inner.config
    }
}

struct SlotGuard<'a>(&'a Inner);

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        self.0.lock().in_flight -= 1;
        self.0.slot_freed.notify_one();
    }
}

impl Inner {
    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
    }

    fn submit(&self, query: &Query) -> Reply {
        let (tx, rx) = mpsc::channel();
        let id = {
            let mut state = self.lock();
            while state.in_flight >= self.config.max_in_flight && state.dead.is_none() {
                state = self.slot_freed.wait(state).unwrap_or_else(|p| p.into_inner());
            }
            if let Some(reason) = &state.dead {
                return Err(EngineError::EngineCrashed(reason.clone()));
            }
            state.in_flight += 1;
            let id = state.next_id;
            state.next_id += 1;
            let line = serde_json::to_string(&Request::from_query(id.to_string(), query))
                .map_err(|e| EngineError::malformed(e.to_string()))?;
            write_line(&mut state, &line);
            state.pending.insert(id, Pending { line, side_to_move: query.side_to_move(), tx });
            id
        };
        let _slot = SlotGuard(self);
        match rx.recv_timeout(self.config.timeout) {
            Ok(reply) => reply,
            Err(mpsc::RecvTimeoutError::Timeout) => {
                self.lock().pending.remove(&id);
                Err(EngineError::QueryTimeout(self.config.timeout))
            }
            Err(mpsc::RecvTimeoutError::Disconnected) => {
                Err(EngineError::EngineCrashed("query dropped without an answer".into()))
            }
        }
    }

    fn dispatch(&self, line: &str) {
        let parsed = Response::parse(line);
        let mut state = self.lock();
        match parsed {
            Ok(Response::Ignored) => {}
            Ok(Response::Result { id, root }) => {
                let Some(pending) = id.parse().ok().and_then(|id: u64| state.pending.remove(&id)) else {
                    debug!("dropping response for unknown id {id}");
                    return;
                };
                let perspective = self.config.reporting_perspective;
                let eval = PositionEval {
                    score_mean: normalize_to_black(root.score_lead, perspective, pending.side_to_move),
                    win_rate: normalize_win_rate(root.winrate, perspective, pending.side_to_move).clamp(0.0, 1.0),
                    visits_used: root.visits.max(1),
                    side_to_move: pending.side_to_move,
                };
                let _ = pending.tx.send(Ok(eval));
            }
            Ok(Response::Error { id: Some(id), message }) => {
                if let Some(pending) = id.parse().ok().and_then(|id: u64| state.pending.remove(&id)) {
                    let err = match message.strip_prefix("MissingFixture:") {
                        Some(detail) => EngineError::missing_fixture(detail.trim()),
                        None => EngineError::EngineRejectedQuery(message),
                    };
                    let _ = pending.tx.send(Err(err));
                }
            }
            Ok(Response::Error { id: None, message }) => warn!("engine error without id: {message}"),
            Err(err) => {
                let id = serde_json::from_str::<serde_json::Value>(line)
                    .ok()
                    .and_then(|v| v.get("id").and_then(|i| i.as_str()).and_then(|s| s.parse::<u64>().ok()));
                match id.and_then(|id| state.pending.remove(&id)) {
                    Some(pending) => {
                        let _ = pending.tx.send(Err(err));
                    }
                    None => warn!("unparseable engine output: {err}"),
                }
            }
        }
    }

    /// Output of generation `generation` closed.
    fn on_disconnect(self: &Arc<Self>, generation: u64) {
        let mut state = self.lock();
        if state.generation != generation || state.dead.is_some() {
            return;
        }
        state.writer = None;
        if let Some(mut child) = state.child.take() {
            let _ = child.kill();
            let _ = child.wait();
        }
        let reason = if state.restarts < MAX_RESTARTS {
            state.restarts += 1;
            warn!("engine output closed; restarting ({} pending queries)", state.pending.len());
            match self.launcher.launch() {
                Ok(connection) => {
                    state.generation += 1;
                    state.writer = Some(connection.writer);
                    state.child = connection.child;
                    let lines: Vec<String> = state.pending.values().map(|p| p.line.clone()).collect();
                    for line in &lines {
                        write_line(&mut state, line);
                    }
                    spawn_reader(self, state.generation, connection.reader);
                    return;
                }
                Err(e) => format!("engine exited and could not be restarted: {e}"),
            }
        } else {
            format!("engine exited again after {} restart(s)", state.restarts)
        };
        for (_, pending) in std::mem::take(&mut state.pending) {
            let _ = pending.tx.send(Err(EngineError::EngineCrashed(reason.clone())));
        }
        state.dead = Some(reason);
        self.slot_freed.notify_all();
    }
}

fn write_line(state: &mut State, line: &str) {
    state.requests_written += 1;
    if let Some(writer) = state.writer.as_mut() {
        // a failed write shows up as closed output on the reader side
        if let Err(e) = writeln!(writer, "{line}").and_then(|_| writer.flush()) {
            debug!("engine write failed: {e}");
        }
    }
}

fn spawn_reader(inner: &Arc<Inner>, generation: u64, reader: Box<dyn BufRead + Send>) {
    let weak: Weak<Inner> = Arc::downgrade(inner);
    thread::Builder::new()
        .name(format!("engine-reader-{generation}"))
        .spawn(move || {
            for line in reader.lines() {
                let Ok(line) = line else { break };
                if line.trim().is_empty() {
                    continue;
                }
                match weak.upgrade() {
                    Some(inner) => inner.dispatch(&line),
                    None => return,
                }
            }
            if let Some(inner) = weak.upgrade() {
                inner.on_disconnect(generation);
            }
        })
        .expect("spawn engine reader thread");
}

impl Drop for EngineClient {
    fn drop(&mut self) {
        let mut state = self.inner.lock();
        state.dead = Some("client shut down".into());
        state.writer = None;
        if let Some(mut child) = state.child.take() {
            let _ = child.kill();
            let _ = child.wait();
        }
        for (_, pending) in std::mem::take(&mut state.pending) {
            let _ = pending.tx.send(Err(EngineError::EngineCrashed("client shut down".into())));
        }
    }
}

impl Engine for EngineClient {
    fn evaluate(&self, query: &Query) -> Result<PositionEval, EngineError> {
        self.inner.submit(query)
    }

    fn max_in_flight(&self) -> usize {
        self.inner.config.max_in_flight
    }

    fn describe(&self) -> String {
        self.inner.launcher.describe()
    }
}
