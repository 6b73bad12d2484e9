//! On-disk replay buffer.
//!
//! Layout: `<dir>/runs/<run>.jsonl` holds one [`TrajectoryRecord`] per
//! line, `<dir>/index.json` lists every stored trajectory, and
//! `<dir>/.lock` is held exclusively while merging.

use std::collections::BTreeSet;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrajectoryRecord;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub trajectory_id: String,
    pub task_id: String,
    pub file: String,
    pub iteration: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BufferIndex {
    pub entries: Vec<IndexEntry>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeSummary {
    pub added: u64,
    pub duplicates: u64,
    pub total: u64,
}

fn file_stem(trajectory_id: &str) -> String {
    let run = trajectory_id.rsplit_once('/').map_or(trajectory_id, |(r, _)| r);
    run.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' })
        .collect()
}

fn read_index(dir: &Path) -> io::Result<BufferIndex> {
    match fs::read_to_string(dir.join("index.json")) {
        Ok(text) => serde_json::from_str(&text).map_err(io::Error::other),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(BufferIndex::default()),
        Err(e) => Err(e),
    }
}

/// Adds records not yet in the buffer, tagging them with `iteration`.
/// Records whose trajectory id is already stored are skipped.
pub fn replay_buffer_merge(dir: &Path, records: &[TrajectoryRecord], iteration: u32) -> io::Result<MergeSummary> {
    fs::create_dir_all(dir.join("runs"))?;
    let lock = OpenOptions::new().create(true).truncate(false).write(true).open(dir.join(".lock"))?;
    lock.lock()?;
    let mut index = read_index(dir)?;
    let mut known: BTreeSet<String> = index.entries.iter().map(|e| e.trajectory_id.clone()).collect();
    let mut summary = MergeSummary::default();
    for r in records {
        if !known.insert(r.trajectory_id.clone()) {
            summary.duplicates += 1;
            continue;
        }
        let mut tagged = r.clone();
        tagged.iteration = iteration;
        let file = format!("runs/{}.jsonl", file_stem(&r.trajectory_id));
        let mut f = OpenOptions::new().create(true).append(true).open(dir.join(&file))?;
        let mut line = serde_json::to_vec(&tagged).map_err(io::Error::other)?;
        line.push(b'\n');
        f.write_all(&line)?;
        index.entries.push(IndexEntry {
            trajectory_id: r.trajectory_id.clone(),
            task_id: r.task_id.clone(),
            file,
            iteration,
        });
        summary.added += 1;
    }
    index.entries.sort_by(|a, b| a.trajectory_id.cmp(&b.trajectory_id));
    summary.total = index.entries.len() as u64;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    serde_json::to_writer_pretty(&mut tmp, &index).map_err(io::Error::other)?;
    tmp.write_all(b"\n")?;
    tmp.persist(dir.join("index.json")).map_err(|e| e.error)?;
    lock.unlock()?;
    Ok(summary)
}

/// Every indexed record, ordered by trajectory id. Lines of run files that
/// are not in the index (a merge interrupted before its index write) are
/// ignored.
pub fn load_buffer(dir: &Path) -> io::Result<Vec<TrajectoryRecord>> {
    let index = read_index(dir)?;
    let wanted: BTreeSet<&str> = index.entries.iter().map(|e| e.trajectory_id.as_str()).collect();
    let files: BTreeSet<&str> = index.entries.iter().map(|e| e.file.as_str()).collect();
    let mut out = Vec::new();
    for file in files {
        for line in BufReader::new(File::open(dir.join(file))?).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let r: TrajectoryRecord = serde_json::from_str(&line).map_err(io::Error::other)?;
            if wanted.contains(r.trajectory_id.as_str()) && !out.iter().any(|o: &TrajectoryRecord| o.trajectory_id == r.trajectory_id) {
                out.push(r);
            }
        }
    }
    out.sort_by(|a, b| a.trajectory_id.cmp(&b.trajectory_id));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::export::NodeRecord;
    use crate::model::NodeId;

    fn rec(id: &str) -> TrajectoryRecord {
        let node = NodeRecord {
            step: 1,
            node_id: NodeId(1),
            prompt: Some("p".into()),
            response: Some("r".into()),
            score: 0.5,
        };
        TrajectoryRecord::new("t".into(), id.into(), vec![node], 0)
    }

    #[test]
    fn merge_is_idempotent_and_additive() {
        let dir = tempfile::tempdir().unwrap();
        let a = vec![rec("run-a/0"), rec("run-a/1")];
        let b = vec![rec("run-b/0")];
        assert_eq!(replay_buffer_merge(dir.path(), &a, 1).unwrap().added, 2);
        let s = replay_buffer_merge(dir.path(), &a, 2).unwrap();
        assert_eq!((s.added, s.duplicates, s.total), (0, 2, 2));
        assert_eq!(replay_buffer_merge(dir.path(), &b, 2).unwrap().total, 3);
        let loaded = load_buffer(dir.path()).unwrap();
        assert_eq!(loaded.len(), 3);
        assert_eq!(loaded[0].iteration, 1);
        assert_eq!(loaded[2].iteration, 2);
    }

    #[test]
    fn empty_buffer_loads_empty() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_buffer(dir.path()).unwrap().is_empty());
    }
}
