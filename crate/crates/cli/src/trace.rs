//! Packet-trace and feedback-sidecar files: versioned CSV with a leading
//! metadata line.
//!
//! Every artifact of one run carries the same run identifier, so mixed-up
//! files from different runs are detected instead of silently compared. The
//! first line of each file is `#<format> v1 run=<16 hex digits>
//! session=<n>`; the second line is the CSV column header; every following
//! line is one record. Timestamps are integer nanoseconds and empty fields
//! mean "not applicable" (a dropped packet has no arrival, a delivered one
//! has no drop reason). Reading a file and writing it back reproduces it
//! byte for byte.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nestsim_core::{DropReason, PacketEventRow, StatsFeedback};

/// Identity stamped into every artifact of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FileMeta {
    pub run_id: u64,
    pub session: u32,
}

/// Errors shared by all versioned file readers.
#[derive(Debug, thiserror::Error)]
pub enum FileFormatError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: first line {got:?} is not a `#{expected} v1 run=.. session=..` metadata line")]
    BadMeta {
        path: String,
        expected: &'static str,
        got: String,
    },
    #[error("{path}: column header {got:?} does not match the {expected:?} format")]
    BadHeader {
        path: String,
        expected: &'static str,
        got: String,
    },
    #[error("{path} record {record}: field `{field}`: {msg}")]
    BadField {
        path: String,
        record: usize,
        field: &'static str,
        msg: String,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

const TRACE_TAG: &str = "nestsim-trace";
const FEEDBACK_TAG: &str = "nestsim-feedback";
const FRAMES_TAG: &str = "nestsim-frames";

const TRACE_COLUMNS: [&str; 9] = [
    "seq",
    "frame_index",
    "index_in_frame",
    "n_packets_in_frame",
    "total_bits",
    "departure_server_time_ns",
    "arrival_client_time_ns",
    "drop_reason",
    "duplicate_flag",
];

const FEEDBACK_COLUMNS: [&str; 4] = [
    "frame_index",
    "sent_client_time_ns",
    "arrival_server_time_ns",
    "size_bits",
];

const FRAME_COLUMNS: [&str; 7] = [
    "frame_index",
    "departure_server_time_ns",
    "target_bitrate_bps",
    "payload_bits",
    "n_packets",
    "status",
    "completion_client_time_ns",
];

/// One packet event as stored in a trace file. Mirrors the simulator's
/// packet rows with plain integers so readers need nothing but this crate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TraceRow {
    pub seq: u64,
    pub frame_index: u64,
    pub index_in_frame: u32,
    pub n_packets_in_frame: u32,
    pub total_bits: u64,
    pub departure_server_time_ns: i64,
    /// Empty in the file when the packet was dropped or still in flight.
    pub arrival_client_time_ns: Option<i64>,
    /// `random` or `overflow`; empty when delivered or in flight.
    pub drop_reason: Option<DropKind>,
    pub duplicate_flag: bool,
}

/// Why a trace row never arrived.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DropKind {
    Random,
    Overflow,
}

impl DropKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DropKind::Random => "random",
            DropKind::Overflow => "overflow",
        }
    }
}

impl TraceRow {
    /// The exported form of one simulator packet row.
    pub fn from_packet_row(row: &PacketEventRow) -> TraceRow {
        TraceRow {
            seq: row.seq,
            frame_index: row.frame_index,
            index_in_frame: row.index_in_frame,
            n_packets_in_frame: row.n_packets_in_frame,
            total_bits: row.total_bits,
            departure_server_time_ns: row.departure.as_nanos(),
            arrival_client_time_ns: row.arrival.map(|a| a.as_nanos()),
            drop_reason: row.drop_reason.map(|r| match r {
                DropReason::Random => DropKind::Random,
                DropReason::Overflow => DropKind::Overflow,
            }),
            duplicate_flag: row.duplicate,
        }
    }
}

/// One feedback-packet event: the receiver reported frame `frame_index`
/// complete at `sent_client_time_ns` and the report reached the sender at
/// `arrival_server_time_ns`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FeedbackRow {
    pub frame_index: u64,
    pub sent_client_time_ns: i64,
    pub arrival_server_time_ns: i64,
    pub size_bits: u64,
}

impl FeedbackRow {
    pub fn from_stats(fb: &StatsFeedback) -> FeedbackRow {
        FeedbackRow {
            frame_index: fb.frame_index,
            sent_client_time_ns: fb.sent_client_time.as_nanos(),
            arrival_server_time_ns: fb.arrival_server_time.as_nanos(),
            size_bits: fb.size_bits,
        }
    }
}

/// Sender-side record of one generated frame and its final receiver status.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameRow {
    pub frame_index: u64,
    pub departure_server_time_ns: i64,
    pub target_bitrate_bps: f64,
    pub payload_bits: u64,
    pub n_packets: u32,
    /// `complete`, `abandoned`, `in_progress`, or empty when the receiver
    /// never saw a packet of this frame.
    pub status: Option<FrameState>,
    pub completion_client_time_ns: Option<i64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrameState {
    InProgress,
    Complete,
    Abandoned,
}

impl FrameState {
    pub fn as_str(self) -> &'static str {
        match self {
            FrameState::InProgress => "in_progress",
            FrameState::Complete => "complete",
            FrameState::Abandoned => "abandoned",
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> FileFormatError {
    FileFormatError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path, source: csv::Error) -> FileFormatError {
    FileFormatError::Csv {
        path: path.display().to_string(),
        source,
    }
}

fn meta_line(tag: &str, meta: FileMeta) -> String {
    format!("#{tag} v1 run={:016x} session={}\n", meta.run_id, meta.session)
}

fn parse_meta(path: &Path, tag: &'static str, line: &str) -> Result<FileMeta, FileFormatError> {
    let bad = || FileFormatError::BadMeta {
        path: path.display().to_string(),
        expected: tag,
        got: line.trim_end().to_string(),
    };
    let mut parts = line.trim_end().split(' ');
    let head = parts.next().ok_or_else(bad)?;
    if head != format!("#{tag}") {
        return Err(bad());
    }
    if parts.next() != Some("v1") {
        return Err(bad());
    }
    let run = parts
        .next()
        .and_then(|p| p.strip_prefix("run="))
        .and_then(|h| u64::from_str_radix(h, 16).ok())
        .ok_or_else(bad)?;
    let session = parts
        .next()
        .and_then(|p| p.strip_prefix("session="))
        .and_then(|s| s.parse::<u32>().ok())
        .ok_or_else(bad)?;
    if parts.next().is_some() {
        return Err(bad());
    }
    Ok(FileMeta {
        run_id: run,
        session,
    })
}

/// Opens a versioned CSV file: parses the metadata line, checks the column
/// header, and returns the meta together with a reader positioned at the
/// first record.
fn open_versioned(
    path: &Path,
    tag: &'static str,
    columns: &[&str],
) -> Result<(FileMeta, csv::Reader<BufReader<File>>), FileFormatError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut reader = BufReader::new(file);
    let mut first = String::new();
    reader
        .read_line(&mut first)
        .map_err(|e| io_err(path, e))?;
    let meta = parse_meta(path, tag, &first)?;
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = csv_reader.headers().map_err(|e| csv_err(path, e))?;
    if headers.iter().ne(columns.iter().copied()) {
        return Err(FileFormatError::BadHeader {
            path: path.display().to_string(),
            expected: tag,
            got: headers.iter().collect::<Vec<_>>().join(","),
        });
    }
    Ok((meta, csv_reader))
}

fn start_versioned(
    path: &Path,
    tag: &str,
    meta: FileMeta,
    columns: &[&str],
) -> Result<csv::Writer<File>, FileFormatError> {
    let mut file = File::create(path).map_err(|e| io_err(path, e))?;
    file.write_all(meta_line(tag, meta).as_bytes())
        .map_err(|e| io_err(path, e))?;
    let mut writer = csv::Writer::from_writer(file);
    writer.write_record(columns).map_err(|e| csv_err(path, e))?;
    Ok(writer)
}

fn parse_field<T: std::str::FromStr>(
    path: &Path,
    record: usize,
    field: &'static str,
    raw: &str,
) -> Result<T, FileFormatError>
where
    T::Err: std::fmt::Display,
{
    raw.parse::<T>().map_err(|e| FileFormatError::BadField {
        path: path.display().to_string(),
        record,
        field,
        msg: format!("{e} (got {raw:?})"),
    })
}

fn opt_string(v: Option<i64>) -> String {
    v.map(|n| n.to_string()).unwrap_or_default()
}

/// Writes a packet trace in the exported row form.
pub fn write_trace_rows(
    path: &Path,
    meta: FileMeta,
    rows: &[TraceRow],
) -> Result<(), FileFormatError> {
    let mut w = start_versioned(path, TRACE_TAG, meta, &TRACE_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.seq.to_string(),
            r.frame_index.to_string(),
            r.index_in_frame.to_string(),
            r.n_packets_in_frame.to_string(),
            r.total_bits.to_string(),
            r.departure_server_time_ns.to_string(),
            opt_string(r.arrival_client_time_ns),
            r.drop_reason.map(|d| d.as_str()).unwrap_or("").to_string(),
            if r.duplicate_flag { "1" } else { "0" }.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

/// Exports the simulator's packet rows of one session.
pub fn write_trace(
    path: &Path,
    meta: FileMeta,
    rows: &[PacketEventRow],
) -> Result<(), FileFormatError> {
    let exported: Vec<TraceRow> = rows.iter().map(TraceRow::from_packet_row).collect();
    write_trace_rows(path, meta, &exported)
}

pub fn read_trace(path: &Path) -> Result<(FileMeta, Vec<TraceRow>), FileFormatError> {
    let (meta, mut reader) = open_versioned(path, TRACE_TAG, &TRACE_COLUMNS)?;
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let get = |idx: usize| record.get(idx).unwrap_or("");
        let arrival = match get(6) {
            "" => None,
            raw => Some(parse_field::<i64>(path, i, "arrival_client_time_ns", raw)?),
        };
        let drop_reason = match get(7) {
            "" => None,
            "random" => Some(DropKind::Random),
            "overflow" => Some(DropKind::Overflow),
            other => {
                return Err(FileFormatError::BadField {
                    path: path.display().to_string(),
                    record: i,
                    field: "drop_reason",
                    msg: format!("expected empty, `random` or `overflow`, got {other:?}"),
                })
            }
        };
        let duplicate_flag = match get(8) {
            "0" => false,
            "1" => true,
            other => {
                return Err(FileFormatError::BadField {
                    path: path.display().to_string(),
                    record: i,
                    field: "duplicate_flag",
                    msg: format!("expected 0 or 1, got {other:?}"),
                })
            }
        };
        rows.push(TraceRow {
            seq: parse_field(path, i, "seq", get(0))?,
            frame_index: parse_field(path, i, "frame_index", get(1))?,
            index_in_frame: parse_field(path, i, "index_in_frame", get(2))?,
            n_packets_in_frame: parse_field(path, i, "n_packets_in_frame", get(3))?,
            total_bits: parse_field(path, i, "total_bits", get(4))?,
            departure_server_time_ns: parse_field(path, i, "departure_server_time_ns", get(5))?,
            arrival_client_time_ns: arrival,
            drop_reason,
            duplicate_flag,
        });
    }
    Ok((meta, rows))
}

pub fn write_feedback_rows(
    path: &Path,
    meta: FileMeta,
    rows: &[FeedbackRow],
) -> Result<(), FileFormatError> {
    let mut w = start_versioned(path, FEEDBACK_TAG, meta, &FEEDBACK_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.frame_index.to_string(),
            r.sent_client_time_ns.to_string(),
            r.arrival_server_time_ns.to_string(),
            r.size_bits.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

/// Exports the feedback packets the sender processed, in arrival order.
pub fn write_feedback(
    path: &Path,
    meta: FileMeta,
    feedback: &[StatsFeedback],
) -> Result<(), FileFormatError> {
    let rows: Vec<FeedbackRow> = feedback.iter().map(FeedbackRow::from_stats).collect();
    write_feedback_rows(path, meta, &rows)
}

pub fn read_feedback(path: &Path) -> Result<(FileMeta, Vec<FeedbackRow>), FileFormatError> {
    let (meta, mut reader) = open_versioned(path, FEEDBACK_TAG, &FEEDBACK_COLUMNS)?;
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let get = |idx: usize| record.get(idx).unwrap_or("");
        rows.push(FeedbackRow {
            frame_index: parse_field(path, i, "frame_index", get(0))?,
            sent_client_time_ns: parse_field(path, i, "sent_client_time_ns", get(1))?,
            arrival_server_time_ns: parse_field(path, i, "arrival_server_time_ns", get(2))?,
            size_bits: parse_field(path, i, "size_bits", get(3))?,
        });
    }
    Ok((meta, rows))
}

pub fn write_frame_rows(
    path: &Path,
    meta: FileMeta,
    rows: &[FrameRow],
) -> Result<(), FileFormatError> {
    let mut w = start_versioned(path, FRAMES_TAG, meta, &FRAME_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.frame_index.to_string(),
            r.departure_server_time_ns.to_string(),
            r.target_bitrate_bps.to_string(),
            r.payload_bits.to_string(),
            r.n_packets.to_string(),
            r.status.map(|s| s.as_str()).unwrap_or("").to_string(),
            opt_string(r.completion_client_time_ns),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

pub fn read_frames(path: &Path) -> Result<(FileMeta, Vec<FrameRow>), FileFormatError> {
    let (meta, mut reader) = open_versioned(path, FRAMES_TAG, &FRAME_COLUMNS)?;
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let get = |idx: usize| record.get(idx).unwrap_or("");
        let status = match get(5) {
            "" => None,
            "in_progress" => Some(FrameState::InProgress),
            "complete" => Some(FrameState::Complete),
            "abandoned" => Some(FrameState::Abandoned),
            other => {
                return Err(FileFormatError::BadField {
                    path: path.display().to_string(),
                    record: i,
                    field: "status",
                    msg: format!(
                        "expected empty, `in_progress`, `complete` or `abandoned`, got {other:?}"
                    ),
                })
            }
        };
        let completion = match get(6) {
            "" => None,
            raw => Some(parse_field::<i64>(path, i, "completion_client_time_ns", raw)?),
        };
        rows.push(FrameRow {
            frame_index: parse_field(path, i, "frame_index", get(0))?,
            departure_server_time_ns: parse_field(path, i, "departure_server_time_ns", get(1))?,
            target_bitrate_bps: parse_field(path, i, "target_bitrate_bps", get(2))?,
            payload_bits: parse_field(path, i, "payload_bits", get(3))?,
            n_packets: parse_field(path, i, "n_packets", get(4))?,
            status,
            completion_client_time_ns: completion,
        });
    }
    Ok((meta, rows))
}
