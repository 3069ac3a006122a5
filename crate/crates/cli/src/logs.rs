//! Metric and decision logs: JSON Lines with a metadata header object.
//!
//! The first line of each log is `{"log":"<kind>","version":1,
//! "run":"<16 hex digits>","session":<n>}`; every following line is one
//! sample or decision serialized with its stable field names. Like the CSV
//! artifacts, logs re-serialize byte for byte, which is what makes
//! "identical seeds produce identical logs" checkable at the file level.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nestsim_core::{DecisionRecord, MetricSample};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::trace::FileMeta;

pub const METRICS_LOG_KIND: &str = "nestsim-metrics";
pub const DECISIONS_LOG_KIND: &str = "nestsim-decisions";

#[derive(Debug, thiserror::Error)]
pub enum LogFormatError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: missing header line")]
    MissingHeader { path: String },
    #[error("{path}: header identifies log kind {got:?}, expected {expected:?}")]
    WrongKind {
        path: String,
        expected: &'static str,
        got: String,
    },
    #[error("{path} line {line}: {source}")]
    BadRecord {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: run id {got:?} is not 16 hex digits")]
    BadRunId { path: String, got: String },
}

#[derive(Serialize, Deserialize)]
struct LogHeader {
    log: String,
    version: u32,
    run: String,
    session: u32,
}

fn io_err(path: &Path, source: std::io::Error) -> LogFormatError {
    LogFormatError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn encode_line<T: Serialize>(path: &Path, value: &T) -> Result<String, LogFormatError> {
    serde_json::to_string(value).map_err(|e| LogFormatError::BadRecord {
        path: path.display().to_string(),
        line: 0,
        source: e,
    })
}

fn write_log<T: Serialize>(
    path: &Path,
    kind: &'static str,
    meta: FileMeta,
    records: &[T],
) -> Result<(), LogFormatError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = BufWriter::new(file);
    let header = LogHeader {
        log: kind.to_string(),
        version: 1,
        run: format!("{:016x}", meta.run_id),
        session: meta.session,
    };
    let mut line = encode_line(path, &header)?;
    line.push('\n');
    out.write_all(line.as_bytes()).map_err(|e| io_err(path, e))?;
    for r in records {
        let mut line = encode_line(path, r)?;
        line.push('\n');
        out.write_all(line.as_bytes()).map_err(|e| io_err(path, e))?;
    }
    out.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

fn read_log<T: DeserializeOwned>(
    path: &Path,
    kind: &'static str,
) -> Result<(FileMeta, Vec<T>), LogFormatError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();

    let (_, header_line) = lines
        .next()
        .ok_or_else(|| LogFormatError::MissingHeader {
            path: path.display().to_string(),
        })?;
    let header_line = header_line.map_err(|e| io_err(path, e))?;
    let header: LogHeader =
        serde_json::from_str(&header_line).map_err(|e| LogFormatError::BadRecord {
            path: path.display().to_string(),
            line: 1,
            source: e,
        })?;
    if header.log != kind {
        return Err(LogFormatError::WrongKind {
            path: path.display().to_string(),
            expected: kind,
            got: header.log,
        });
    }
    let run_id = (header.run.len() == 16)
        .then(|| u64::from_str_radix(&header.run, 16).ok())
        .flatten()
        .ok_or_else(|| LogFormatError::BadRunId {
            path: path.display().to_string(),
            got: header.run.clone(),
        })?;
    let meta = FileMeta {
        run_id,
        session: header.session,
    };

    let mut records = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.is_empty() {
            continue;
        }
        let record: T =
            serde_json::from_str(&line).map_err(|e| LogFormatError::BadRecord {
                path: path.display().to_string(),
                line: i + 1,
                source: e,
            })?;
        records.push(record);
    }
    Ok((meta, records))
}

pub fn write_metrics(
    path: &Path,
    meta: FileMeta,
    samples: &[MetricSample],
) -> Result<(), LogFormatError> {
    write_log(path, METRICS_LOG_KIND, meta, samples)
}

pub fn read_metrics(path: &Path) -> Result<(FileMeta, Vec<MetricSample>), LogFormatError> {
    read_log(path, METRICS_LOG_KIND)
}

pub fn write_decisions(
    path: &Path,
    meta: FileMeta,
    decisions: &[DecisionRecord],
) -> Result<(), LogFormatError> {
    write_log(path, DECISIONS_LOG_KIND, meta, decisions)
}

pub fn read_decisions(path: &Path) -> Result<(FileMeta, Vec<DecisionRecord>), LogFormatError> {
    read_log(path, DECISIONS_LOG_KIND)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nestsim_core::{Branch, ClientTime, MetricName, ServerTime};

    #[test]
    fn metric_logs_round_trip_and_keep_stable_names() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics_s0.jsonl");
        let meta = FileMeta {
            run_id: 0x0123_4567_89ab_cdef,
            session: 0,
        };
        let samples = vec![MetricSample {
            name: MetricName::VfRttS,
            frame_index: 2,
            value: 0.0126,
            emitted_client_time: ClientTime::from_nanos(22_222_222),
        }];
        write_metrics(&path, meta, &samples).unwrap();

        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"vf_rtt_s\""), "{text}");
        assert!(text.starts_with(
            "{\"log\":\"nestsim-metrics\",\"version\":1,\"run\":\"0123456789abcdef\",\"session\":0}\n"
        ));

        let (m, s) = read_metrics(&path).unwrap();
        assert_eq!(m, meta);
        assert_eq!(s, samples);
    }

    #[test]
    fn decision_logs_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("decisions_s0.jsonl");
        let meta = FileMeta { run_id: 1, session: 2 };
        let decisions = vec![DecisionRecord {
            k: 1,
            time: ServerTime::from_nanos(1_000_000_000),
            nfr: Some(0.999),
            vf_rtt_s: Some(0.002),
            capacity_bps: None,
            branch: Branch::Up,
            inputs_missing: false,
            bitrate_bps: 60e6,
        }];
        write_decisions(&path, meta, &decisions).unwrap();
        let (m, d) = read_decisions(&path).unwrap();
        assert_eq!(m, meta);
        assert_eq!(d, decisions);
    }

    #[test]
    fn reading_the_wrong_log_kind_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.jsonl");
        write_metrics(&path, FileMeta { run_id: 1, session: 0 }, &[]).unwrap();
        let err = read_decisions(&path).unwrap_err();
        assert!(matches!(err, LogFormatError::WrongKind { .. }), "{err}");
    }
}
