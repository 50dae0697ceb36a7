//! Adapter for an out-of-process face detector.
//!
//! The adapter writes one absolute image path per line to the detector's
//! stdin and expects exactly one landmark-record line per path on stdout,
//! in order, with `image_id` equal to the path. The detector must exit 0
//! once stdin is closed.
//!
//! A detector that takes longer than the per-image timeout gets a faceless
//! record tagged `timeout`; if its answer for that image arrives late it is
//! discarded.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::landmarks::{parse_landmark_record, LandmarkRecord};

pub const TIMEOUT_TAG: &str = "timeout";

#[derive(Debug, Clone)]
pub struct ExternalDetector {
    pub program: String,
    pub args: Vec<String>,
    pub timeout: Duration,
}

impl ExternalDetector {
    pub fn new(program: impl Into<String>, args: Vec<String>, timeout: Duration) -> Self {
        Self {
            program: program.into(),
            args,
            timeout,
        }
    }

    /// Splits a command line on whitespace; the first word is the program.
    pub fn from_command_line(command: &str, timeout: Duration) -> Result<Self> {
        let mut words = command.split_whitespace().map(str::to_string);
        let program = words
            .next()
            .ok_or_else(|| Error::invalid("empty detector command"))?;
        Ok(Self::new(program, words.collect(), timeout))
    }

    pub fn run(&self, image_paths: &[PathBuf]) -> Result<Vec<LandmarkRecord>> {
        let wire_paths = image_paths
            .iter()
            .map(|p| wire_path(p))
            .collect::<Result<Vec<_>>>()?;

        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Subprocess(format!("cannot spawn {}: {e}", self.program)))?;

        let stdout = child.stdout.take().expect("stdout was piped");
        let (tx, rx) = mpsc::channel();
        let reader = thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });

        let stdin = child.stdin.take().expect("stdin was piped");
        let mut session = Session {
            rx,
            stdin: Some(stdin),
            stale: HashSet::new(),
            line_no: 0,
        };
        let outcome = session.exchange(&wire_paths, self.timeout);
        let outcome = outcome.and_then(|records| {
            session.stdin = None;
            // Each outstanding late answer gets one more timeout to arrive.
            let grace = self.timeout * (session.stale.len() as u32 + 1);
            match session.drain(grace) {
                Ok(()) => {
                    wait_for_exit(&mut child, self.timeout)?;
                }
                // A detector stuck on a timed-out image is abandoned; its
                // images are already recorded as faceless.
                Err(e @ Error::Subprocess(_)) if !session.stale.is_empty() => {
                    tracing::warn!(error = %e, "abandoning detector stuck on timed-out images");
                    let _ = child.kill();
                    let _ = child.wait();
                }
                Err(e) => return Err(e),
            }
            Ok(records)
        });
        drop(session);
        match outcome {
            Ok(records) => {
                // Stdout reached EOF unless the detector was abandoned, and
                // then grandchildren may still hold the pipe; don't wait.
                if reader.is_finished() {
                    let _ = reader.join();
                }
                Ok(records)
            }
            Err(e) => {
                let _ = child.kill();
                let _ = child.wait();
                Err(e)
            }
        }
    }
}

fn wire_path(path: &Path) -> Result<String> {
    let abs = std::path::absolute(path).map_err(|e| Error::io_at(path, e))?;
    let s = abs
        .to_str()
        .ok_or_else(|| Error::invalid(format!("non-UTF-8 image path {}", abs.display())))?;
    if s.contains('\n') || s.contains('\r') {
        return Err(Error::invalid(format!("image path contains a line break: {s:?}")));
    }
    Ok(s.to_string())
}

struct Session {
    rx: Receiver<std::io::Result<String>>,
    stdin: Option<ChildStdin>,
    /// Paths whose answers timed out; late answers for them are dropped.
    stale: HashSet<String>,
    line_no: usize,
}

enum Reply {
    Record(LandmarkRecord),
    TimedOut,
}

impl Session {
    fn exchange(&mut self, paths: &[String], timeout: Duration) -> Result<Vec<LandmarkRecord>> {
        let mut records = Vec::with_capacity(paths.len());
        for path in paths {
            let stdin = self.stdin.as_mut().expect("stdin open during exchange");
            writeln!(stdin, "{path}")
                .and_then(|()| stdin.flush())
                .map_err(|e| Error::Subprocess(format!("detector stopped reading input: {e}")))?;
            match self.await_reply(path, timeout)? {
                Reply::Record(r) => records.push(r),
                Reply::TimedOut => {
                    tracing::warn!(path = %path, timeout = ?timeout, "detector timed out, recording zero faces");
                    self.stale.insert(path.clone());
                    let (w, h) = super::probe_dimensions(path.as_ref()).unwrap_or((1, 1));
                    records.push(LandmarkRecord::failed(path.as_str(), w, h, TIMEOUT_TAG));
                }
            }
        }
        Ok(records)
    }

    fn await_reply(&mut self, path: &str, timeout: Duration) -> Result<Reply> {
        let deadline = Instant::now() + timeout;
        loop {
            let remaining = deadline.saturating_duration_since(Instant::now());
            match self.rx.recv_timeout(remaining) {
                Ok(line) => {
                    let record = self.parse(line)?;
                    if record.image_id == path {
                        return Ok(Reply::Record(record));
                    }
                    if !self.stale.remove(&record.image_id) {
                        return Err(Error::Protocol(format!(
                            "stdout line {}: expected a record for {path}, got {}",
                            self.line_no, record.image_id
                        )));
                    }
                }
                Err(RecvTimeoutError::Timeout) => return Ok(Reply::TimedOut),
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(Error::Subprocess(format!(
                        "detector closed its output before answering {path}"
                    )))
                }
            }
        }
    }

    fn parse(&mut self, line: std::io::Result<String>) -> Result<LandmarkRecord> {
        self.line_no += 1;
        let line = line.map_err(|e| Error::io("reading detector output", e))?;
        parse_landmark_record(&line, self.line_no).map_err(|e| {
            Error::Protocol(format!(
                "stdout line {} is not a landmark record ({e}): {}",
                self.line_no,
                truncate(&line, 200)
            ))
        })
    }

    /// After stdin closes, only late answers for timed-out images may remain.
    fn drain(&mut self, timeout: Duration) -> Result<()> {
        let deadline = Instant::now() + timeout;
        loop {
            let remaining = deadline.saturating_duration_since(Instant::now());
            match self.rx.recv_timeout(remaining) {
                Ok(line) => {
                    let record = self.parse(line)?;
                    if !self.stale.remove(&record.image_id) {
                        return Err(Error::Protocol(format!(
                            "stdout line {}: unexpected extra record for {}",
                            self.line_no, record.image_id
                        )));
                    }
                }
                Err(RecvTimeoutError::Disconnected) => return Ok(()),
                Err(RecvTimeoutError::Timeout) => {
                    return Err(Error::Subprocess(
                        "detector did not close its output after input ended".into(),
                    ))
                }
            }
        }
    }
}

fn wait_for_exit(child: &mut Child, timeout: Duration) -> Result<()> {
    let deadline = Instant::now() + timeout;
    loop {
        match child.try_wait() {
            Ok(Some(status)) if status.success() => return Ok(()),
            Ok(Some(status)) => {
                return Err(Error::Subprocess(format!("detector exited with {status}")))
            }
            Ok(None) if Instant::now() >= deadline => {
                return Err(Error::Subprocess("detector did not exit after input ended".into()))
            }
            Ok(None) => thread::sleep(Duration::from_millis(5)),
            Err(e) => return Err(Error::io("waiting for detector", e)),
        }
    }
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}
