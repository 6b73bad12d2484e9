//! Append-only JSONL event log.
//!
//! `ts` is a logical clock: the position of the event in the log. Wall-clock
//! times would make two runs of the same seed differ byte for byte.

use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::model::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Setup,
    GenRequest,
    GenResponse,
    EvalStart,
    EvalDone,
    Commit,
    Prune,
    Restart,
    Finish,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub ts: u64,
    pub run_id: String,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory_id: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_id: Option<NodeId>,
    pub payload: serde_json::Value,
}

/// An event before it is given its position in the log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draft {
    pub kind: EventKind,
    pub trajectory_id: Option<u32>,
    pub node_id: Option<NodeId>,
    pub payload: serde_json::Value,
}

impl Draft {
    pub fn new(kind: EventKind, payload: serde_json::Value) -> Self {
        Self {
            kind,
            trajectory_id: None,
            node_id: None,
            payload,
        }
    }

    pub fn trajectory(mut self, id: u32) -> Self {
        self.trajectory_id = Some(id);
        self
    }

    pub fn node(mut self, id: NodeId) -> Self {
        self.node_id = Some(id);
        self
    }
}

/// In-memory sink that can be inspected after the log is dropped.
#[derive(Debug, Clone, Default)]
pub struct SharedBuffer(pub Arc<Mutex<Vec<u8>>>);

impl SharedBuffer {
    pub fn contents(&self) -> Vec<u8> {
        self.0.lock().unwrap().clone()
    }
}

impl Write for SharedBuffer {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.0.lock().unwrap().extend_from_slice(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

pub struct EventLog {
    sink: Box<dyn Write + Send>,
    next_ts: u64,
    bytes: u64,
}

impl EventLog {
    pub fn new(sink: Box<dyn Write + Send>) -> Self {
        Self {
            sink,
            next_ts: 0,
            bytes: 0,
        }
    }

    /// Creates (or truncates) a log file.
    pub fn create(path: &Path) -> io::Result<Self> {
        Ok(Self::new(Box::new(BufWriter::new(File::create(path)?))))
    }

    /// Reopens a log for appending after a checkpoint. Anything past `bytes`
    /// was written after the checkpoint and is discarded.
    pub fn reopen(path: &Path, bytes: u64, next_ts: u64) -> io::Result<Self> {
        let file = OpenOptions::new().write(true).open(path)?;
        file.set_len(bytes)?;
        let mut file = file;
        io::Seek::seek(&mut file, io::SeekFrom::End(0))?;
        Ok(Self {
            sink: Box::new(BufWriter::new(file)),
            next_ts,
            bytes,
        })
    }

    pub fn in_memory() -> (Self, SharedBuffer) {
        let buf = SharedBuffer::default();
        (Self::new(Box::new(buf.clone())), buf)
    }

    pub fn next_ts(&self) -> u64 {
        self.next_ts
    }

    /// Bytes written so far.
    pub fn position(&self) -> u64 {
        self.bytes
    }

    pub fn emit(&mut self, run_id: &str, draft: Draft) -> io::Result<()> {
        let event = Event {
            ts: self.next_ts,
            run_id: run_id.to_string(),
            kind: draft.kind,
            trajectory_id: draft.trajectory_id,
            node_id: draft.node_id,
            payload: draft.payload,
        };
        let mut line = serde_json::to_vec(&event).map_err(io::Error::other)?;
        line.push(b'\n');
        self.sink.write_all(&line)?;
        self.next_ts += 1;
        self.bytes += line.len() as u64;
        Ok(())
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.sink.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lines_are_numbered_and_parse_back() {
        let (mut log, buf) = EventLog::in_memory();
        log.emit("r", Draft::new(EventKind::Setup, serde_json::json!({"a": 1}))).unwrap();
        log.emit(
            "r",
            Draft::new(EventKind::Commit, serde_json::json!({})).trajectory(2).node(NodeId(7)),
        )
        .unwrap();
        let text = String::from_utf8(buf.contents()).unwrap();
        let events: Vec<Event> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(events[1].ts, 1);
        assert_eq!(events[1].node_id, Some(NodeId(7)));
        assert!(!text.lines().next().unwrap().contains("trajectory_id"));
        assert_eq!(log.position(), text.len() as u64);
    }

    #[test]
    fn reopen_truncates_to_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        let mut log = EventLog::create(&path).unwrap();
        log.emit("r", Draft::new(EventKind::Setup, serde_json::json!({}))).unwrap();
        let (pos, ts) = (log.position(), log.next_ts());
        log.emit("r", Draft::new(EventKind::Finish, serde_json::json!({}))).unwrap();
        log.flush().unwrap();
        drop(log);
        let mut log = EventLog::reopen(&path, pos, ts).unwrap();
        log.emit("r", Draft::new(EventKind::Prune, serde_json::json!({}))).unwrap();
        log.flush().unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.contains("\"prune\""));
        assert!(!text.contains("finish"));
    }
}
