//! Resumable snapshots of a run.
//!
//! A checkpoint holds the committed state, the log position it matches, the
//! blocks that finished but are still waiting for their turn in the log, and
//! the batches that were in flight. In-flight batches keep their prompt and
//! inspirations so a resume re-issues them without selecting again.

use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{NodeId, RunState};
use crate::sandbox::LocalMemory;
use crate::selection::ElitePool;

use super::events::Draft;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("reading checkpoint: {0}")]
    Io(#[from] io::Error),
    #[error("parsing checkpoint: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Position of a block of events in the canonical log order: by depth, a
/// pruning barrier (stage 0) before the steps (stage 1), then trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BlockKey {
    pub depth: u32,
    pub stage: u8,
    pub trajectory: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingBlock {
    pub key: BlockKey,
    pub drafts: Vec<Draft>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InflightBatch {
    pub trajectory: u32,
    pub depth: u32,
    pub inspirations: Vec<NodeId>,
    pub prompt: String,
}

/// Memory and elite pool as they stood after `resolved` commits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub resolved: u32,
    pub memory: LocalMemory,
    pub elite: ElitePool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRuntime {
    /// Batches launched so far; the next launch is at this depth.
    pub launched: u32,
    pub pruned_at: Option<u32>,
    pub snapshots: Vec<Snapshot>,
}

impl TrajectoryRuntime {
    pub fn new() -> Self {
        Self {
            launched: 0,
            pruned_at: None,
            snapshots: vec![Snapshot {
                resolved: 0,
                memory: LocalMemory::default(),
                elite: ElitePool::default(),
            }],
        }
    }
}

impl Default for TrajectoryRuntime {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub state: RunState,
    pub runtime: Vec<TrajectoryRuntime>,
    pub inflight: Vec<InflightBatch>,
    pub pending: Vec<PendingBlock>,
    /// Next block the log is waiting for; `None` once every step is logged.
    pub cursor: Option<BlockKey>,
    pub log_bytes: u64,
    pub next_ts: u64,
    pub consecutive_failures: u32,
    pub commits: u64,
}

/// Writes atomically: a temporary file in the same directory, then a rename.
pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    serde_json::to_writer(&mut tmp, checkpoint).map_err(io::Error::other)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}
