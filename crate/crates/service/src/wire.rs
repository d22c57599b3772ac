//! WireEvent protocol, version 1.
//!
//! Every message is one JSON object per socket frame with `"v": 1` and a
//! `"type"` tag. Client → server: `join`, `utterance`, `typing`, `select`,
//! `rate`. Server → client: `waiting`, `paired`, `utterance_ack`,
//! `select_accepted`, `select_rejected`, `partner_event`, `end`, `rated`,
//! `error`. A client only ever receives its own KB; partner selections
//! arrive without item contents.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub const WIRE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientEvent {
    /// `token` identifies the anonymous visitor across reconnects.
    Join { token: String },
    Utterance { text: String },
    Typing,
    Select { item_index: usize },
    Rate(RatingScores),
}

/// Four 1–5 scores and an optional comment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingScores {
    pub fluency: u8,
    pub correctness: u8,
    pub cooperation: u8,
    pub human_likeness: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
}

impl RatingScores {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("fluency", self.fluency),
            ("correctness", self.correctness),
            ("cooperation", self.cooperation),
            ("human_likeness", self.human_likeness),
        ] {
            if !(1..=5).contains(&v) {
                return Err(format!("{name} must be between 1 and 5, got {v}"));
            }
        }
        Ok(())
    }
}

/// What a client may know about its scenario: attribute columns in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioView {
    pub scenario_id: String,
    pub attributes: Vec<String>,
}

/// Partner activity as shown to a human.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PartnerEvent {
    Utterance { text: String },
    Typing,
    /// The partner selected something; which item is not revealed.
    Select,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerEvent {
    Waiting,
    Paired {
        session_id: String,
        scenario_view: ScenarioView,
        /// Own KB rows, attribute name → value id.
        kb: Vec<BTreeMap<String, String>>,
        /// Milliseconds left until the session times out.
        deadline_ms: u64,
    },
    UtteranceAck { time_ms: u64 },
    SelectAccepted { item_index: usize, time_ms: u64 },
    SelectRejected { retry_after_ms: u64 },
    PartnerEvent { time_ms: u64, event: PartnerEvent },
    End { outcome: String, transcript_id: String },
    Rated { rating_id: String },
    Error { message: String },
}

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    v: u32,
    #[serde(flatten)]
    body: T,
}

pub fn encode(event: &ServerEvent) -> String {
    serde_json::to_string(&Envelope {
        v: WIRE_VERSION,
        body: event,
    })
    .expect("server events serialize")
}

pub fn encode_client(event: &ClientEvent) -> String {
    serde_json::to_string(&Envelope {
        v: WIRE_VERSION,
        body: event,
    })
    .expect("client events serialize")
}

/// Parses a client frame, checking the protocol version.
pub fn decode_client(text: &str) -> Result<ClientEvent, String> {
    let env: Envelope<ClientEvent> = serde_json::from_str(text).map_err(|e| format!("malformed event: {e}"))?;
    if env.v != WIRE_VERSION {
        return Err(format!("unsupported protocol version {}", env.v));
    }
    Ok(env.body)
}

pub fn decode_server(text: &str) -> Result<ServerEvent, String> {
    let env: Envelope<ServerEvent> = serde_json::from_str(text).map_err(|e| format!("malformed event: {e}"))?;
    Ok(env.body)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_shape() {
        let s = encode(&ServerEvent::SelectRejected { retry_after_ms: 6000 });
        assert_eq!(s, r#"{"v":1,"type":"select_rejected","retry_after_ms":6000}"#);
        let c = decode_client(r#"{"v":1,"type":"select","item_index":3}"#).unwrap();
        assert_eq!(c, ClientEvent::Select { item_index: 3 });
        let r = decode_client(
            r#"{"v":1,"type":"rate","fluency":4,"correctness":4,"cooperation":3,"human_likeness":4,"comment":"nice"}"#,
        )
        .unwrap();
        assert!(matches!(r, ClientEvent::Rate(ref s) if s.validate().is_ok()));
        assert!(decode_client(r#"{"v":2,"type":"typing"}"#).is_err());
        assert!(decode_client(r#"{"v":1,"type":"dance"}"#).is_err());
        let back = decode_client(&encode_client(&ClientEvent::Typing)).unwrap();
        assert_eq!(back, ClientEvent::Typing);
    }

    #[test]
    fn rating_range() {
        let mut r = RatingScores {
            fluency: 4,
            correctness: 4,
            cooperation: 3,
            human_likeness: 4,
            comment: None,
        };
        assert!(r.validate().is_ok());
        r.cooperation = 6;
        assert!(r.validate().is_err());
        r.cooperation = 0;
        assert!(r.validate().is_err());
    }
}
