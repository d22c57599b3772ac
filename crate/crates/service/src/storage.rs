//! On-disk layout under the storage directory:
//!
//! ```text
//! transcripts/{id}.jsonl   one transcript in the session JSONL format
//! index.jsonl              {"id","scenario_id","outcome","file"} per transcript
//! ratings/{id}.json        {"rating_id","transcript_id","fluency",...}
//! ```
//!
//! Records are written to a temporary name and renamed into place, so a
//! crash never leaves a partial record under a final name. The index is
//! appended after the rename; a torn last index line is skipped on read.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use mutualfriends_core::transcript::{parse_transcripts, Outcome, Transcript};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};
use crate::wire::RatingScores;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: String,
    pub scenario_id: String,
    pub outcome: Outcome,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub rating_id: String,
    pub transcript_id: String,
    #[serde(flatten)]
    pub scores: RatingScores,
}

#[derive(Debug)]
pub struct Storage {
    root: PathBuf,
    lock: Mutex<()>,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("record");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    let mut f = File::create(&tmp).map_err(|e| ServiceError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| ServiceError::io(&tmp, e))?;
    f.sync_all().map_err(|e| ServiceError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| ServiceError::io(path, e))
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

impl Storage {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        for sub in ["transcripts", "ratings"] {
            let dir = root.join(sub);
            fs::create_dir_all(&dir).map_err(|e| ServiceError::io(&dir, e))?;
        }
        Ok(Self {
            root,
            lock: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn transcript_path(&self, id: &str) -> PathBuf {
        self.root.join("transcripts").join(format!("{id}.jsonl"))
    }

    pub fn has_transcript(&self, id: &str) -> bool {
        valid_id(id) && self.transcript_path(id).is_file()
    }

    /// Stores one ended dialogue and returns its record id.
    pub fn save_transcript(&self, id: &str, transcript: &Transcript) -> Result<String> {
        if !valid_id(id) {
            return Err(ServiceError::NotFound(format!("bad transcript id {id:?}")));
        }
        let _guard = self.lock.lock().unwrap_or_else(|p| p.into_inner());
        let path = self.transcript_path(id);
        write_atomic(&path, transcript.to_jsonl().as_bytes())?;
        let entry = IndexEntry {
            id: id.to_string(),
            scenario_id: transcript.scenario_id.clone(),
            outcome: transcript.outcome,
            file: format!("transcripts/{id}.jsonl"),
        };
        let index = self.root.join("index.jsonl");
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&index)
            .map_err(|e| ServiceError::io(&index, e))?;
        let mut line = serde_json::to_vec(&entry)?;
        line.push(b'\n');
        f.write_all(&line).map_err(|e| ServiceError::io(&index, e))?;
        f.sync_all().map_err(|e| ServiceError::io(&index, e))?;
        Ok(id.to_string())
    }

    /// Index entries whose transcript file exists.
    pub fn index(&self) -> Result<Vec<IndexEntry>> {
        let path = self.root.join("index.jsonl");
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(ServiceError::io(&path, e)),
        };
        Ok(text
            .lines()
            .filter_map(|l| serde_json::from_str::<IndexEntry>(l).ok())
            .filter(|e| self.root.join(&e.file).is_file())
            .collect())
    }

    pub fn load_transcript(&self, id: &str) -> Result<Transcript> {
        if !self.has_transcript(id) {
            return Err(ServiceError::NotFound(format!("transcript {id}")));
        }
        let path = self.transcript_path(id);
        let text = fs::read_to_string(&path).map_err(|e| ServiceError::io(&path, e))?;
        parse_transcripts(&text)?
            .pop()
            .ok_or_else(|| ServiceError::NotFound(format!("transcript {id} is empty")))
    }

    pub fn load_all(&self) -> Result<Vec<Transcript>> {
        self.index()?.iter().map(|e| self.load_transcript(&e.id)).collect()
    }

    /// Stores a rating for an existing transcript.
    pub fn save_rating(&self, transcript_id: &str, scores: &RatingScores) -> Result<String> {
        scores.validate().map_err(ServiceError::Rating)?;
        if !self.has_transcript(transcript_id) {
            return Err(ServiceError::NotFound(format!("transcript {transcript_id}")));
        }
        let _guard = self.lock.lock().unwrap_or_else(|p| p.into_inner());
        let dir = self.root.join("ratings");
        let mut k = 0;
        let (rating_id, path) = loop {
            let id = format!("{transcript_id}-r{k}");
            let path = dir.join(format!("{id}.json"));
            if !path.exists() {
                break (id, path);
            }
            k += 1;
        };
        let record = RatingRecord {
            rating_id: rating_id.clone(),
            transcript_id: transcript_id.to_string(),
            scores: scores.clone(),
        };
        write_atomic(&path, &serde_json::to_vec(&record)?)?;
        Ok(rating_id)
    }

    pub fn ratings(&self) -> Result<Vec<RatingRecord>> {
        let dir = self.root.join("ratings");
        let mut out = Vec::new();
        for entry in fs::read_dir(&dir).map_err(|e| ServiceError::io(&dir, e))? {
            let path = entry.map_err(|e| ServiceError::io(&dir, e))?.path();
            if path.extension().and_then(|x| x.to_str()) != Some("json") {
                continue;
            }
            let text = fs::read_to_string(&path).map_err(|e| ServiceError::io(&path, e))?;
            out.push(serde_json::from_str(&text)?);
        }
        out.sort_by(|a: &RatingRecord, b| a.rating_id.cmp(&b.rating_id));
        Ok(out)
    }
}
