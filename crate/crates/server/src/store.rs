//! Durable score store and append-only chat log, both JSONL.
//!
//! Every write is flushed and synced before the caller acknowledges it.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use oculobench_core::study::RubricScoreEntry;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
}

fn open_append(path: &Path) -> Result<File, StoreError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|source| StoreError::Io { path: dir.to_path_buf(), source })?;
    }
    OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|source| StoreError::Io { path: path.to_path_buf(), source })
}

fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, StoreError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(source) => return Err(StoreError::Io { path: path.to_path_buf(), source }),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| StoreError::Io { path: path.to_path_buf(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

fn append_line<T: Serialize>(file: &mut File, path: &Path, value: &T) -> Result<(), StoreError> {
    let mut line = serde_json::to_vec(value).expect("store records serialize");
    line.push(b'\n');
    file.write_all(&line)
        .and_then(|_| file.sync_data())
        .map_err(|source| StoreError::Io { path: path.to_path_buf(), source })
}

/// Latest score per (rater, packet). Later lines overwrite earlier ones.
#[derive(Debug)]
pub struct ScoreStore {
    path: PathBuf,
    file: File,
    latest: BTreeMap<(String, String), RubricScoreEntry>,
}

impl ScoreStore {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let path = path.into();
        let mut latest = BTreeMap::new();
        for e in read_lines::<RubricScoreEntry>(&path)? {
            latest.insert((e.rater_id.clone(), e.packet_id.clone()), e);
        }
        let file = open_append(&path)?;
        Ok(ScoreStore { path, file, latest })
    }

    /// Persists `entry`, then makes it current. The timestamp never moves
    /// backwards for a key, so timestamp order and file order agree.
    pub fn submit(&mut self, mut entry: RubricScoreEntry) -> Result<RubricScoreEntry, StoreError> {
        let key = (entry.rater_id.clone(), entry.packet_id.clone());
        if let Some(prev) = self.latest.get(&key) {
            entry.timestamp = entry.timestamp.max(prev.timestamp);
        }
        append_line(&mut self.file, &self.path, &entry)?;
        self.latest.insert(key, entry.clone());
        Ok(entry)
    }

    pub fn get(&self, rater_id: &str, packet_id: &str) -> Option<&RubricScoreEntry> {
        self.latest.get(&(rater_id.to_string(), packet_id.to_string()))
    }

    pub fn entries(&self) -> Vec<RubricScoreEntry> {
        self.latest.values().cloned().collect()
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatRole {
    User,
    Assistant,
}

/// One relayed chat turn. Never carries the model identity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatLogEntry {
    pub rater_id: String,
    pub packet_id: String,
    pub seq: usize,
    pub role: ChatRole,
    pub text: String,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug)]
pub struct ChatLog {
    path: PathBuf,
    file: File,
    threads: BTreeMap<(String, String), Vec<ChatLogEntry>>,
}

impl ChatLog {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let path = path.into();
        let mut threads: BTreeMap<(String, String), Vec<ChatLogEntry>> = BTreeMap::new();
        for e in read_lines::<ChatLogEntry>(&path)? {
            threads.entry((e.rater_id.clone(), e.packet_id.clone())).or_default().push(e);
        }
        let file = open_append(&path)?;
        Ok(ChatLog { path, file, threads })
    }

    pub fn thread(&self, rater_id: &str, packet_id: &str) -> &[ChatLogEntry] {
        self.threads.get(&(rater_id.to_string(), packet_id.to_string())).map_or(&[], Vec::as_slice)
    }

    /// Appends turns in order, numbering them after the existing thread.
    pub fn append(
        &mut self,
        rater_id: &str,
        packet_id: &str,
        turns: &[(ChatRole, String)],
    ) -> Result<Vec<ChatLogEntry>, StoreError> {
        let key = (rater_id.to_string(), packet_id.to_string());
        let start = self.threads.get(&key).map_or(0, Vec::len);
        let now = Utc::now();
        let mut written = Vec::with_capacity(turns.len());
        for (i, (role, text)) in turns.iter().enumerate() {
            let entry = ChatLogEntry {
                rater_id: rater_id.to_string(),
                packet_id: packet_id.to_string(),
                seq: start + i,
                role: *role,
                text: text.clone(),
                timestamp: now,
            };
            append_line(&mut self.file, &self.path, &entry)?;
            written.push(entry);
        }
        self.threads.entry(key).or_default().extend(written.iter().cloned());
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(packet: &str, q1: u8) -> RubricScoreEntry {
        RubricScoreEntry {
            packet_id: packet.into(),
            rater_id: "R1".into(),
            q1,
            q2: 3,
            q3: 3,
            q4: 3,
            timestamp: Utc::now(),
        }
    }

    #[test]
    fn scores_survive_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.jsonl");
        {
            let mut s = ScoreStore::open(&path).unwrap();
            s.submit(entry("p1", 2)).unwrap();
            s.submit(entry("p1", 5)).unwrap();
            s.submit(entry("p2", 1)).unwrap();
        }
        let s = ScoreStore::open(&path).unwrap();
        assert_eq!(s.get("R1", "p1").unwrap().q1, 5);
        assert_eq!(s.entries().len(), 2);
    }

    #[test]
    fn chat_log_replays_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chat.jsonl");
        {
            let mut log = ChatLog::open(&path).unwrap();
            log.append("R1", "p1", &[(ChatRole::User, "hi".into()), (ChatRole::Assistant, "hello".into())]).unwrap();
        }
        let mut log = ChatLog::open(&path).unwrap();
        let more = log.append("R1", "p1", &[(ChatRole::User, "again".into())]).unwrap();
        assert_eq!(more[0].seq, 2);
        let seqs: Vec<usize> = log.thread("R1", "p1").iter().map(|e| e.seq).collect();
        assert_eq!(seqs, vec![0, 1, 2]);
        assert!(log.thread("R2", "p1").is_empty());
    }
}
