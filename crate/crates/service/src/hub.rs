//! Connection bookkeeping: lobby, sessions and per-connection channels.
//! Transports call [`Hub::connect`], [`Hub::handle`] and
//! [`Hub::disconnect`]; everything a client should see arrives on its
//! receiver.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use mutualfriends_core::scenario::scenario_at;
use mutualfriends_core::{AgentRegistry, AgentSetup, Resources, Scenario, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tokio::sync::mpsc::{unbounded_channel, UnboundedReceiver, UnboundedSender};

use crate::config::ServiceConfig;
use crate::error::{Result, ServiceError};
use crate::live::{Bot, Human, LiveSession, Player, SessionInput};
use crate::lobby::{ConnId, Joined, Lobby, SessionId, Waiter};
use crate::storage::Storage;
use crate::wire::{ClientEvent, ServerEvent};

struct Conn {
    tx: UnboundedSender<ServerEvent>,
    token: Option<String>,
    session: Option<(SessionId, Side)>,
    /// Transcript of the last ended session, for ratings over the socket.
    ended: Option<String>,
}

struct Inner {
    lobby: Lobby,
    rng: ChaCha8Rng,
    conns: HashMap<ConnId, Conn>,
    sessions: HashMap<SessionId, UnboundedSender<SessionInput>>,
    scenarios: HashMap<String, Scenario>,
    next_session: u64,
}

pub struct Hub {
    config: ServiceConfig,
    resources: Arc<Resources>,
    registry: Arc<AgentRegistry>,
    storage: Arc<Storage>,
    inner: Mutex<Inner>,
    next_conn: AtomicU64,
}

/// A connected client: its id and the events addressed to it.
pub struct ClientHandle {
    pub conn: ConnId,
    pub rx: UnboundedReceiver<ServerEvent>,
}

impl Hub {
    /// Session numbering continues after the transcripts already stored,
    /// so ids and scenarios do not repeat across restarts.
    pub fn new(
        config: ServiceConfig,
        resources: Arc<Resources>,
        registry: Arc<AgentRegistry>,
        storage: Arc<Storage>,
    ) -> Result<Arc<Self>> {
        for (name, _) in config.mix.iter().filter(|(n, w)| n != crate::config::HUMAN && *w > 0.0) {
            if !registry.contains(name) {
                return Err(ServiceError::Config(format!("unknown bot type {name:?} in mix")));
            }
        }
        let next_session = storage.index()?.len() as u64;
        Ok(Arc::new(Self {
            inner: Mutex::new(Inner {
                lobby: Lobby::new(&config.mix),
                rng: ChaCha8Rng::seed_from_u64(config.seed),
                conns: HashMap::new(),
                sessions: HashMap::new(),
                scenarios: HashMap::new(),
                next_session,
            }),
            config,
            resources,
            registry,
            storage,
            next_conn: AtomicU64::new(0),
        }))
    }

    pub fn storage(&self) -> &Arc<Storage> {
        &self.storage
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn connect(&self) -> ClientHandle {
        let conn = self.next_conn.fetch_add(1, Ordering::Relaxed);
        let (tx, rx) = unbounded_channel();
        self.lock().conns.insert(
            conn,
            Conn {
                tx,
                token: None,
                session: None,
                ended: None,
            },
        );
        ClientHandle { conn, rx }
    }

    /// (active sessions, queued visitors)
    pub fn counts(&self) -> (usize, usize) {
        let inner = self.lock();
        (inner.sessions.len(), inner.lobby.waiting())
    }

    pub fn scenario(&self, id: &str) -> Option<Scenario> {
        self.lock().scenarios.get(id).cloned()
    }

    /// Sends one event to a connection, e.g. a protocol error.
    pub fn reply(&self, conn: ConnId, event: ServerEvent) {
        if let Some(c) = self.lock().conns.get(&conn) {
            let _ = c.tx.send(event);
        }
    }

    pub fn handle(self: &Arc<Self>, conn: ConnId, event: ClientEvent) {
        let mut inner = self.lock();
        let Some(c) = inner.conns.get(&conn) else {
            return;
        };
        let reply = |inner: &Inner, event: ServerEvent| {
            if let Some(c) = inner.conns.get(&conn) {
                let _ = c.tx.send(event);
            }
        };
        match event {
            ClientEvent::Join { token } => {
                if c.token.is_some() {
                    return reply(&inner, ServerEvent::Error { message: "duplicate join".into() });
                }
                if token.trim().is_empty() {
                    return reply(&inner, ServerEvent::Error { message: "empty token".into() });
                }
                let inner = &mut *inner;
                let joined = inner.lobby.join(conn, &token, &mut inner.rng);
                match joined {
                    Err(e) => reply(inner, ServerEvent::Error { message: e.to_string() }),
                    Ok(joined) => {
                        if let Some(c) = inner.conns.get_mut(&conn) {
                            c.token = Some(token.clone());
                        }
                        self.start(inner, Waiter { conn, token }, joined);
                    }
                }
            }
            ClientEvent::Rate(scores) => match c.ended.clone() {
                None => reply(
                    &inner,
                    ServerEvent::Error {
                        message: "no finished dialogue to rate".into(),
                    },
                ),
                Some(id) => {
                    let event = match self.storage.save_rating(&id, &scores) {
                        Ok(rating_id) => ServerEvent::Rated { rating_id },
                        Err(e) => ServerEvent::Error { message: e.to_string() },
                    };
                    reply(&inner, event);
                }
            },
            other => match c.session.and_then(|(s, side)| inner.sessions.get(&s).map(|tx| (tx, side))) {
                Some((tx, side)) => {
                    let _ = tx.send(SessionInput::Client { side, event: other });
                }
                None => reply(&inner, ServerEvent::Error { message: "not in a session".into() }),
            },
        }
    }

    fn start(self: &Arc<Self>, inner: &mut Inner, joiner: Waiter, joined: Joined) {
        match joined {
            Joined::Queued => {
                if let Some(c) = inner.conns.get(&joiner.conn) {
                    let _ = c.tx.send(ServerEvent::Waiting);
                }
                if let Some(ms) = self.config.human_wait_ms {
                    let hub = Arc::clone(self);
                    let conn = joiner.conn;
                    tokio::spawn(async move {
                        tokio::time::sleep(Duration::from_millis(ms)).await;
                        hub.fallback(conn);
                    });
                }
            }
            Joined::Rejoin { session, side } => {
                let tx = inner.conns.get(&joiner.conn).map(|c| c.tx.clone());
                if let (Some(tx), Some(stx)) = (tx, inner.sessions.get(&session)) {
                    let _ = stx.send(SessionInput::Attach { side, tx });
                    if let Some(c) = inner.conns.get_mut(&joiner.conn) {
                        c.session = Some((session, side));
                    }
                }
            }
            Joined::Human { partner, side } => {
                let mut seats = [None, None];
                seats[side.index()] = Some(joiner);
                seats[side.other().index()] = Some(partner);
                let [a, b] = seats.map(|s| Seat::Human(s.expect("both seats filled")));
                self.spawn_session(inner, [a, b], false);
            }
            Joined::Bot { kind, side } => {
                let mut seats = [Seat::Bot(kind.clone()), Seat::Bot(kind)];
                seats[side.index()] = Seat::Human(joiner);
                let bot_starts = inner.rng.gen_bool(0.5);
                self.spawn_session(inner, seats, bot_starts);
            }
        }
    }

    fn fallback(self: &Arc<Self>, conn: ConnId) {
        let mut inner = self.lock();
        let inner = &mut *inner;
        if let Some((waiter, joined)) = inner.lobby.fallback(conn, &mut inner.rng) {
            self.start(inner, waiter, joined);
        }
    }

    fn spawn_session(self: &Arc<Self>, inner: &mut Inner, seats: [Seat; 2], bot_starts: bool) {
        let n = inner.next_session;
        inner.next_session += 1;
        let scenario = match scenario_at(&self.resources.schema, self.config.scenario_seed, n as usize) {
            Ok(s) => s,
            Err(e) => return self.abort(inner, &seats, &e.to_string()),
        };
        let id = format!("t{n:06}");
        let mut players = Vec::with_capacity(2);
        for (i, seat) in seats.iter().enumerate() {
            let side = if i == 0 { Side::A } else { Side::B };
            players.push(match seat {
                Seat::Human(w) => {
                    inner.lobby.enter_session(&w.token, n, side);
                    let conn = inner.conns.get_mut(&w.conn);
                    let tx = conn.map(|c| {
                        c.session = Some((n, side));
                        c.ended = None;
                        c.tx.clone()
                    });
                    Player::Human(Human { tx })
                }
                Seat::Bot(kind) => {
                    let setup = AgentSetup {
                        resources: Arc::clone(&self.resources),
                        scenario: scenario.clone(),
                        side,
                    };
                    match self.registry.create(kind, &setup) {
                        Ok(agent) => Player::Bot(Bot {
                            agent,
                            rng: ChaCha8Rng::seed_from_u64(inner.rng.gen()),
                        }),
                        Err(e) => {
                            inner.lobby.session_ended(n);
                            return self.abort(inner, &seats, &e.to_string());
                        }
                    }
                }
            });
        }
        let players: [Player; 2] = players.try_into().unwrap_or_else(|_| unreachable!("two seats"));
        // humans whose connection went away before pairing start detached
        let absent: Vec<Side> = [Side::A, Side::B]
            .into_iter()
            .filter(|s| matches!(&players[s.index()], Player::Human(Human { tx: None })))
            .collect();
        let (stx, srx) = unbounded_channel();
        for side in absent {
            let _ = stx.send(SessionInput::Detach { side });
        }
        inner.sessions.insert(n, stx);
        inner.scenarios.insert(scenario.id.clone(), scenario.clone());
        let session = LiveSession {
            id: id.clone(),
            scenario,
            resources: Arc::clone(&self.resources),
            players,
            limits: self.config.limits,
            abandon_ms: self.config.abandon_ms,
            bot_idle_ms: self.config.bot_idle_ms,
            bot_starts,
        };
        let hub = Arc::clone(self);
        tokio::spawn(async move {
            let storage = Arc::clone(&hub.storage);
            let persist_id = id.clone();
            session
                .run(srx, move |transcript| async move {
                    let saved = tokio::task::spawn_blocking(move || storage.save_transcript(&persist_id, &transcript))
                        .await
                        .map_err(|e| e.to_string())
                        .and_then(|r| r.map_err(|e| e.to_string()));
                    if let Err(e) = &saved {
                        eprintln!("could not store transcript: {e}");
                    }
                    hub.session_ended(n, &id);
                    id
                })
                .await;
        });
    }

    fn abort(&self, inner: &mut Inner, seats: &[Seat; 2], message: &str) {
        for seat in seats {
            if let Seat::Human(w) = seat {
                if let Some(c) = inner.conns.get_mut(&w.conn) {
                    c.token = None;
                    let _ = c.tx.send(ServerEvent::Error {
                        message: format!("could not start a session: {message}"),
                    });
                }
            }
        }
    }

    fn session_ended(&self, session: SessionId, transcript_id: &str) {
        let mut inner = self.lock();
        inner.sessions.remove(&session);
        inner.lobby.session_ended(session);
        for c in inner.conns.values_mut() {
            if c.session.is_some_and(|(s, _)| s == session) {
                c.session = None;
                c.token = None;
                c.ended = Some(transcript_id.to_string());
            }
        }
    }

    pub fn disconnect(&self, conn: ConnId) {
        let mut inner = self.lock();
        let Some(c) = inner.conns.remove(&conn) else {
            return;
        };
        inner.lobby.leave_queue(conn);
        if let Some(token) = &c.token {
            inner.lobby.disconnected(token);
        }
        if let Some((s, side)) = c.session {
            if let Some(tx) = inner.sessions.get(&s) {
                let _ = tx.send(SessionInput::Detach { side });
            }
        }
    }
}

enum Seat {
    Human(Waiter),
    Bot(String),
}
