//! Child processes in their own process group, with a wall-clock limit and
//! an address-space cap, reaped together with every descendant.

use std::collections::BTreeSet;
use std::io::{self, Read};
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::{Mutex, OnceLock};
use std::thread;
use std::time::{Duration, Instant};

/// Bytes kept from each output stream; the rest is drained and dropped.
pub const OUTPUT_CAP: usize = 1 << 20;

#[derive(Debug, Clone)]
pub struct ProcessLimits {
    pub timeout: Duration,
    pub memory_limit_mb: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Exited(i32),
    Signaled(i32),
    TimedOut,
}

#[derive(Debug, Clone)]
pub struct ProcessReport {
    pub exit: ExitKind,
    pub stdout: String,
    pub stderr: String,
    pub wall: Duration,
    /// Process-group id the child ran under (equal to its pid).
    pub process_group: i32,
}

fn registry() -> &'static Mutex<BTreeSet<i32>> {
    static LIVE: OnceLock<Mutex<BTreeSet<i32>>> = OnceLock::new();
    LIVE.get_or_init(|| Mutex::new(BTreeSet::new()))
}

/// Process groups that are currently running.
pub fn live_groups() -> Vec<i32> {
    registry().lock().unwrap().iter().copied().collect()
}

/// SIGKILLs every registered group. Used on shutdown.
pub fn kill_all_groups() {
    for pgid in live_groups() {
        kill_group(pgid);
    }
}

fn kill_group(pgid: i32) {
    // ESRCH just means the group is already gone.
    unsafe {
        libc::kill(-pgid, libc::SIGKILL);
    }
}

/// Pids (excluding zombies) whose process group is `pgid`, read from `/proc`.
pub fn group_members(pgid: i32) -> Vec<i32> {
    let Ok(entries) = std::fs::read_dir("/proc") else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for entry in entries.flatten() {
        let Some(pid) = entry.file_name().to_str().and_then(|s| s.parse::<i32>().ok()) else {
            continue;
        };
        let Ok(stat) = std::fs::read_to_string(format!("/proc/{pid}/stat")) else {
            continue;
        };
        // Fields after the parenthesized command: state ppid pgrp ...
        let Some(rest) = stat.rfind(')').map(|i| &stat[i + 1..]) else {
            continue;
        };
        let fields: Vec<&str> = rest.split_whitespace().collect();
        if fields.len() > 2 && fields[0] != "Z" && fields[2].parse() == Ok(pgid) {
            out.push(pid);
        }
    }
    out
}

fn spawn_reader<R: Read + Send + 'static>(mut src: R) -> thread::JoinHandle<String> {
    thread::spawn(move || {
        let mut kept = Vec::new();
        let mut buf = [0u8; 8192];
        loop {
            match src.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    let room = OUTPUT_CAP.saturating_sub(kept.len());
                    kept.extend_from_slice(&buf[..n.min(room)]);
                }
            }
        }
        String::from_utf8_lossy(&kept).into_owned()
    })
}

/// Runs `argv` in `cwd` with exactly the environment `env`.
///
/// The child becomes the leader of a new process group. On timeout the
/// whole group is killed; after a normal exit the group is killed as well,
/// so background grandchildren never outlive the call.
pub fn run_isolated(
    argv: &[String],
    cwd: &Path,
    env: &[(String, String)],
    limits: &ProcessLimits,
) -> io::Result<ProcessReport> {
    let (program, args) = argv
        .split_first()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "empty command"))?;
    let mut cmd = Command::new(program);
    cmd.args(args)
        .current_dir(cwd)
        .env_clear()
        .envs(env.iter().map(|(k, v)| (k, v)))
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0);
    if let Some(mb) = limits.memory_limit_mb {
        let bytes = mb.saturating_mul(1024 * 1024) as libc::rlim_t;
        // SAFETY: setrlimit is async-signal-safe and touches no parent state.
        unsafe {
            cmd.pre_exec(move || {
                let lim = libc::rlimit {
                    rlim_cur: bytes,
                    rlim_max: bytes,
                };
                if libc::setrlimit(libc::RLIMIT_AS, &lim) != 0 {
                    return Err(io::Error::last_os_error());
                }
                Ok(())
            });
        }
    }

    let start = Instant::now();
    let mut child = cmd.spawn()?;
    let pgid = child.id() as i32;
    registry().lock().unwrap().insert(pgid);

    let out = spawn_reader(child.stdout.take().expect("piped stdout"));
    let err = spawn_reader(child.stderr.take().expect("piped stderr"));

    let deadline = start + limits.timeout;
    let mut poll = Duration::from_millis(1);
    let waited = loop {
        match child.try_wait() {
            Ok(Some(status)) => break Ok(Some(status)),
            Ok(None) => {}
            Err(e) => break Err(e),
        }
        let now = Instant::now();
        if now >= deadline {
            kill_group(pgid);
            break child.wait().map(|_| None);
        }
        thread::sleep(poll.min(deadline - now));
        poll = (poll * 2).min(Duration::from_millis(20));
    };
    // Descendants that detached into the background still share the group.
    kill_group(pgid);
    registry().lock().unwrap().remove(&pgid);
    let status = waited?;
    let wall = start.elapsed();

    let stdout = out.join().unwrap_or_default();
    let stderr = err.join().unwrap_or_default();

    let exit = match status {
        None => ExitKind::TimedOut,
        Some(s) => match s.code() {
            Some(code) => ExitKind::Exited(code),
            None => ExitKind::Signaled(s.signal().unwrap_or(0)),
        },
    };

    Ok(ProcessReport {
        exit,
        stdout,
        stderr,
        wall,
        process_group: pgid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sh(script: &str, timeout_ms: u64) -> ProcessReport {
        let dir = tempfile::tempdir().unwrap();
        let argv = vec!["/bin/sh".to_string(), "-c".to_string(), script.to_string()];
        let env = vec![("PATH".to_string(), "/usr/bin:/bin".to_string())];
        let limits = ProcessLimits {
            timeout: Duration::from_millis(timeout_ms),
            memory_limit_mb: None,
        };
        run_isolated(&argv, dir.path(), &env, &limits).unwrap()
    }

    #[test]
    fn captures_output_and_exit_code() {
        let r = sh("echo hello; echo oops >&2; exit 3", 5000);
        assert_eq!(r.exit, ExitKind::Exited(3));
        assert_eq!(r.stdout.trim(), "hello");
        assert_eq!(r.stderr.trim(), "oops");
    }

    #[test]
    fn timeout_kills_the_group() {
        let r = sh("sleep 30 & sleep 30", 200);
        assert_eq!(r.exit, ExitKind::TimedOut);
        assert!(r.wall < Duration::from_secs(5));
        assert!(group_members(r.process_group).is_empty());
    }

    #[test]
    fn environment_is_scrubbed() {
        std::env::set_var("EVALSCALE_SANDBOX_LEAK_PROBE", "1");
        let r = sh("env", 5000);
        assert!(!r.stdout.contains("EVALSCALE_SANDBOX_LEAK_PROBE"));
        assert!(r.stdout.contains("PATH="));
    }
}
