//! Pairing state. All mutation goes through one `Lobby` value, which the
//! hub keeps behind a single lock.

use std::collections::HashMap;

use mutualfriends_core::Side;
use rand::Rng;

use crate::config::HUMAN;

pub type ConnId = u64;
pub type SessionId = u64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Waiter {
    pub conn: ConnId,
    pub token: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Joined {
    Queued,
    /// Paired with a waiting visitor; `side` is the joiner's KB side.
    Human { partner: Waiter, side: Side },
    Bot { kind: String, side: Side },
    /// The token belongs to a running session whose connection dropped.
    Rejoin { session: SessionId, side: Side },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LobbyError {
    #[error("duplicate join for this token")]
    DuplicateJoin,
    #[error("no opponent available")]
    NoOpponent,
}

#[derive(Debug, Clone, Copy)]
struct Membership {
    session: SessionId,
    side: Side,
    connected: bool,
}

/// Waiting queue, token → session membership and the opponent mix.
#[derive(Debug, Clone)]
pub struct Lobby {
    queue: Vec<Waiter>,
    members: HashMap<String, Membership>,
    human_weight: f64,
    bots: Vec<(String, f64)>,
}

impl Lobby {
    pub fn new(mix: &[(String, f64)]) -> Self {
        let human_weight = mix.iter().filter(|(n, _)| n == HUMAN).map(|(_, w)| w).sum();
        let bots = mix
            .iter()
            .filter(|(n, w)| n != HUMAN && *w > 0.0)
            .cloned()
            .collect();
        Self {
            queue: Vec::new(),
            members: HashMap::new(),
            human_weight,
            bots,
        }
    }

    pub fn waiting(&self) -> usize {
        self.queue.len()
    }

    pub fn is_queued(&self, conn: ConnId) -> bool {
        self.queue.iter().any(|w| w.conn == conn)
    }

    fn bot_total(&self) -> f64 {
        self.bots.iter().map(|(_, w)| w).sum()
    }

    fn draw_bot<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<String> {
        let total = self.bot_total();
        if total <= 0.0 {
            return None;
        }
        let mut x = rng.gen_range(0.0..total);
        for (name, w) in &self.bots {
            if x < *w {
                return Some(name.clone());
            }
            x -= w;
        }
        self.bots.last().map(|(n, _)| n.clone())
    }

    /// A waiting visitor is taken whenever humans are allowed; otherwise
    /// the opponent kind is drawn from the mix weights.
    pub fn join<R: Rng + ?Sized>(&mut self, conn: ConnId, token: &str, rng: &mut R) -> Result<Joined, LobbyError> {
        if self.queue.iter().any(|w| w.token == token || w.conn == conn) {
            return Err(LobbyError::DuplicateJoin);
        }
        if let Some(m) = self.members.get_mut(token) {
            if m.connected {
                return Err(LobbyError::DuplicateJoin);
            }
            m.connected = true;
            return Ok(Joined::Rejoin {
                session: m.session,
                side: m.side,
            });
        }
        let side = if rng.gen_bool(0.5) { Side::A } else { Side::B };
        if self.human_weight > 0.0 && !self.queue.is_empty() {
            let k = rng.gen_range(0..self.queue.len());
            let partner = self.queue.swap_remove(k);
            return Ok(Joined::Human { partner, side });
        }
        let total = self.human_weight + self.bot_total();
        if total <= 0.0 {
            return Err(LobbyError::NoOpponent);
        }
        if rng.gen_range(0.0..total) < self.human_weight {
            self.queue.push(Waiter {
                conn,
                token: token.to_string(),
            });
            return Ok(Joined::Queued);
        }
        let kind = self.draw_bot(rng).ok_or(LobbyError::NoOpponent)?;
        Ok(Joined::Bot { kind, side })
    }

    /// Gives a queued visitor a bot opponent, if any bot is in the mix.
    pub fn fallback<R: Rng + ?Sized>(&mut self, conn: ConnId, rng: &mut R) -> Option<(Waiter, Joined)> {
        let k = self.queue.iter().position(|w| w.conn == conn)?;
        let kind = self.draw_bot(rng)?;
        let waiter = self.queue.swap_remove(k);
        let side = if rng.gen_bool(0.5) { Side::A } else { Side::B };
        Some((waiter, Joined::Bot { kind, side }))
    }

    pub fn leave_queue(&mut self, conn: ConnId) -> bool {
        let before = self.queue.len();
        self.queue.retain(|w| w.conn != conn);
        self.queue.len() != before
    }

    pub fn enter_session(&mut self, token: &str, session: SessionId, side: Side) {
        self.members.insert(
            token.to_string(),
            Membership {
                session,
                side,
                connected: true,
            },
        );
    }

    pub fn disconnected(&mut self, token: &str) {
        if let Some(m) = self.members.get_mut(token) {
            m.connected = false;
        }
    }

    pub fn session_ended(&mut self, session: SessionId) {
        self.members.retain(|_, m| m.session != session);
    }

    pub fn in_session(&self, token: &str) -> Option<SessionId> {
        self.members.get(token).map(|m| m.session)
    }
}
