//! Dialogue transcripts and their JSON-lines file format.
//!
//! A transcript file holds one header line followed by one line per event:
//!
//! ```text
//! {"header":{"scenario_id":"s-0","outcome":"success","cause":null,"turns":9,"utterances":8}}
//! {"time_ms":1830,"agent":"A","kind":"typing"}
//! {"time_ms":3412,"agent":"A","kind":"utterance","text":"hi","links":[],"acts":["greeting"]}
//! {"time_ms":9120,"agent":"B","kind":"select","item":3,"values":{"school":"rice-university",...}}
//! ```
//!
//! Event fields:
//! - `time_ms`: milliseconds since the dialogue started, nondecreasing.
//! - `agent`: `"A"` or `"B"`, the KB side of the sender.
//! - `kind`: `"utterance"`, `"select"` or `"typing"`.
//! - `text`: utterance text (utterances only).
//! - `links`: `[{span, entity}]`, entity spans found in the text.
//! - `acts`: speech acts of the utterance.
//! - `item`: index of the selected item in the sender's KB (selects only).
//! - `values`: attribute → entity id of the selected item (selects only).
//!
//! Multiple transcripts may be concatenated in one file; each starts with
//! its header line.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::A => Side::B,
            Side::B => Side::A,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Side::A => 0,
            Side::B => 1,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::A => "A",
            Side::B => "B",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeechAct {
    Inform,
    Ask,
    Answer,
    Greeting,
    Apology,
}

impl SpeechAct {
    pub const ALL: [SpeechAct; 5] = [
        SpeechAct::Inform,
        SpeechAct::Ask,
        SpeechAct::Answer,
        SpeechAct::Greeting,
        SpeechAct::Apology,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SpeechAct::Inform => "inform",
            SpeechAct::Ask => "ask",
            SpeechAct::Answer => "answer",
            SpeechAct::Greeting => "greeting",
            SpeechAct::Apology => "apology",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Utterance,
    Select,
    Typing,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkedSpan {
    pub span: String,
    pub entity: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time_ms: u64,
    pub agent: Side,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item: Option<SelectedItem>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub links: Vec<LinkedSpan>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub acts: Vec<SpeechAct>,
}

/// A selection: the item's index in the sender's KB and its values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectedItem {
    pub index: usize,
    pub values: BTreeMap<String, String>,
}

impl Event {
    pub fn is_utterance(&self) -> bool {
        self.kind == EventKind::Utterance
    }

    pub fn is_select(&self) -> bool {
        self.kind == EventKind::Select
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Failure,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub scenario_id: String,
    pub outcome: Outcome,
    #[serde(default)]
    pub cause: Option<String>,
    /// Number of activation bursts.
    #[serde(default)]
    pub turns: usize,
    #[serde(default)]
    pub utterances: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub scenario_id: String,
    pub events: Vec<Event>,
    pub outcome: Outcome,
    pub cause: Option<String>,
    pub turns: usize,
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    header: Header,
}

impl Transcript {
    pub fn new(scenario_id: impl Into<String>) -> Self {
        Self {
            scenario_id: scenario_id.into(),
            events: Vec::new(),
            outcome: Outcome::Failure,
            cause: None,
            turns: 0,
        }
    }

    pub fn utterances(&self) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(|e| e.is_utterance())
    }

    pub fn selections(&self) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(|e| e.is_select())
    }

    pub fn is_success(&self) -> bool {
        self.outcome == Outcome::Success
    }

    pub fn header(&self) -> Header {
        Header {
            scenario_id: self.scenario_id.clone(),
            outcome: self.outcome,
            cause: self.cause.clone(),
            turns: self.turns,
            utterances: self.utterances().count(),
        }
    }

    pub fn write_jsonl(&self, out: &mut impl Write) -> std::io::Result<()> {
        let header = HeaderLine { header: self.header() };
        serde_json::to_writer(&mut *out, &header)?;
        out.write_all(b"\n")?;
        for e in &self.events {
            serde_json::to_writer(&mut *out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("utf8 json")
    }
}

/// Parses a stream of transcripts (each a header line followed by events).
pub fn parse_transcripts(text: &str) -> Result<Vec<Transcript>> {
    let mut out: Vec<Transcript> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line)?;
        if value.get("header").is_some() {
            let HeaderLine { header } = serde_json::from_value(value)?;
            out.push(Transcript {
                scenario_id: header.scenario_id,
                events: Vec::new(),
                outcome: header.outcome,
                cause: header.cause,
                turns: header.turns,
            });
        } else {
            let event: Event = serde_json::from_value(value)?;
            let Some(t) = out.last_mut() else {
                return Err(Error::Transcript(format!(
                    "line {}: event before any header",
                    lineno + 1
                )));
            };
            t.events.push(event);
        }
    }
    Ok(out)
}

pub fn read_transcripts(path: impl AsRef<Path>) -> Result<Vec<Transcript>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_transcripts(&text)
}

pub fn write_transcripts(path: impl AsRef<Path>, transcripts: &[Transcript]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for t in transcripts {
        t.write_jsonl(&mut buf).map_err(|e| Error::io(path, e))?;
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}
