//! Packet, trace and dataset types, packet-log I/O and traffic cleaning.
//!
//! Packet lengths are transport payload sizes in bytes. Zero-length packets
//! (pure ACKs) carry no app data and are dropped while reading a log, so every
//! [`PacketRecord`] in memory has `length > 0`.

use std::collections::{BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Error, Result, AMBIGUOUS_LABEL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    /// Device to network.
    #[serde(rename = "out")]
    Outgoing,
    /// Network to device.
    #[serde(rename = "in")]
    Incoming,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PacketRecord {
    /// Seconds since trace start.
    pub timestamp: f64,
    pub src_addr: String,
    pub dst_addr: String,
    pub src_port: u16,
    pub dst_port: u16,
    /// Payload bytes, always positive.
    pub length: u32,
    pub direction: Direction,
    pub is_tcp: bool,
    pub is_retransmission: bool,
    pub flags: BTreeSet<String>,
}

impl PacketRecord {
    /// The far side of the exchange: destination for outgoing packets,
    /// source for incoming ones.
    pub fn remote_endpoint(&self) -> (&str, u16) {
        match self.direction {
            Direction::Outgoing => (&self.dst_addr, self.dst_port),
            Direction::Incoming => (&self.src_addr, self.src_port),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTrace {
    pub app_label: String,
    pub trace_id: String,
    /// Sorted by timestamp.
    pub packets: Vec<PacketRecord>,
}

impl LabeledTrace {
    pub fn new(
        app_label: impl Into<String>,
        trace_id: impl Into<String>,
        mut packets: Vec<PacketRecord>,
    ) -> Self {
        // Stable, so equal timestamps keep their input order.
        packets.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
        LabeledTrace {
            app_label: app_label.into(),
            trace_id: trace_id.into(),
            packets,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceFormat {
    JsonLines,
    Csv,
}

impl TraceFormat {
    /// `.csv` files are CSV, everything else is JSON Lines.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => TraceFormat::Csv,
            _ => TraceFormat::JsonLines,
        }
    }
}

/// First line of every packet log.
#[derive(Debug, Serialize, Deserialize)]
struct TraceHeader {
    app: Option<String>,
    trace_id: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct WireRecord {
    ts: f64,
    src: String,
    dst: String,
    sport: u16,
    dport: u16,
    len: u32,
    dir: Direction,
    tcp: bool,
    retx: bool,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    flags: String,
}

impl WireRecord {
    fn from_packet(p: &PacketRecord) -> Self {
        WireRecord {
            ts: p.timestamp,
            src: p.src_addr.clone(),
            dst: p.dst_addr.clone(),
            sport: p.src_port,
            dport: p.dst_port,
            len: p.length,
            dir: p.direction,
            tcp: p.is_tcp,
            retx: p.is_retransmission,
            flags: p.flags.iter().cloned().collect::<Vec<_>>().join("|"),
        }
    }

    /// `None` for zero-payload packets, which are excluded at ingestion.
    fn into_packet(self) -> std::result::Result<Option<PacketRecord>, String> {
        if !self.ts.is_finite() {
            return Err(format!("non-finite timestamp {}", self.ts));
        }
        if self.len == 0 {
            return Ok(None);
        }
        let flags = self
            .flags
            .split('|')
            .map(str::trim)
            .filter(|f| !f.is_empty())
            .map(str::to_owned)
            .collect();
        Ok(Some(PacketRecord {
            timestamp: self.ts,
            src_addr: self.src,
            dst_addr: self.dst,
            src_port: self.sport,
            dst_port: self.dport,
            length: self.len,
            direction: self.dir,
            is_tcp: self.tcp,
            is_retransmission: self.retx,
            flags,
        }))
    }
}

/// Rejects the reserved relabel target as a real app label.
pub fn check_app_label(label: &str, context: &str) -> Result<()> {
    if label == AMBIGUOUS_LABEL {
        return Err(Error::ReservedLabel {
            label: label.to_owned(),
            context: context.to_owned(),
        });
    }
    Ok(())
}

fn parse_header(path: &Path, line: usize, text: &str) -> Result<(String, String)> {
    let header: TraceHeader = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.to_owned(),
        line,
        message: format!("bad trace header: {e}"),
    })?;
    let app = match header.app {
        Some(app) if !app.is_empty() => app,
        _ => {
            return Err(Error::Schema {
                path: path.to_owned(),
                message: "trace header has no app label".into(),
            })
        }
    };
    check_app_label(&app, &path.display().to_string())?;
    let trace_id = header.trace_id.unwrap_or_else(|| {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    Ok((app, trace_id))
}

pub fn parse_packet_log(path: &Path, format: TraceFormat) -> Result<LabeledTrace> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_packet_log(BufReader::new(file), format, path)
}

/// Reads a packet log from any reader. `origin` is only used in error messages.
pub fn read_packet_log<R: BufRead>(
    reader: R,
    format: TraceFormat,
    origin: &Path,
) -> Result<LabeledTrace> {
    match format {
        TraceFormat::JsonLines => read_jsonl(reader, origin),
        TraceFormat::Csv => read_csv(reader, origin),
    }
}

fn read_jsonl<R: BufRead>(reader: R, path: &Path) -> Result<LabeledTrace> {
    let mut header = None;
    let mut packets = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        if header.is_none() {
            header = Some(parse_header(path, lineno, &line)?);
            continue;
        }
        let record: WireRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: lineno,
            message: e.to_string(),
        })?;
        let packet = record.into_packet().map_err(|message| Error::Parse {
            path: path.to_owned(),
            line: lineno,
            message,
        })?;
        packets.extend(packet);
    }
    let (app, trace_id) = header.ok_or_else(|| Error::Schema {
        path: path.to_owned(),
        message: "missing trace header line".into(),
    })?;
    Ok(LabeledTrace::new(app, trace_id, packets))
}

/// CSV logs carry the JSON trace header as a `#` comment on line 1, followed
/// by the column header row.
fn read_csv<R: BufRead>(mut reader: R, path: &Path) -> Result<LabeledTrace> {
    let mut first = String::new();
    reader
        .read_line(&mut first)
        .map_err(|e| Error::io(path, e))?;
    let header_json = first
        .trim()
        .strip_prefix('#')
        .ok_or_else(|| Error::Schema {
            path: path.to_owned(),
            message: "CSV log must start with a `# {\"app\": ..}` header comment".into(),
        })?;
    let (app, trace_id) = parse_header(path, 1, header_json.trim())?;

    let mut rest = String::new();
    reader
        .read_to_string(&mut rest)
        .map_err(|e| Error::io(path, e))?;
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(rest.as_bytes());
    let mut packets = Vec::new();
    for result in csv.deserialize::<WireRecord>() {
        // csv positions are relative to `rest`, which starts at file line 2.
        let record = result.map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: e.position().map(|p| p.line() as usize + 1).unwrap_or(0),
            message: e.to_string(),
        })?;
        let packet = record.into_packet().map_err(|message| Error::Parse {
            path: path.to_owned(),
            line: 0,
            message,
        })?;
        packets.extend(packet);
    }
    Ok(LabeledTrace::new(app, trace_id, packets))
}

pub fn write_packet_log<W: Write>(
    trace: &LabeledTrace,
    format: TraceFormat,
    mut out: W,
) -> Result<()> {
    let header = serde_json::to_string(&TraceHeader {
        app: Some(trace.app_label.clone()),
        trace_id: Some(trace.trace_id.clone()),
    })?;
    let io_err = |e| Error::io("<packet log>", e);
    match format {
        TraceFormat::JsonLines => {
            writeln!(out, "{header}").map_err(io_err)?;
            for p in &trace.packets {
                serde_json::to_writer(&mut out, &WireRecord::from_packet(p))?;
                writeln!(out).map_err(io_err)?;
            }
        }
        TraceFormat::Csv => {
            writeln!(out, "# {header}").map_err(io_err)?;
            let mut csv = csv::Writer::from_writer(&mut out);
            // Explicit header so the optional flags column is always present.
            csv.write_record([
                "ts", "src", "dst", "sport", "dport", "len", "dir", "tcp", "retx", "flags",
            ])?;
            for p in &trace.packets {
                let r = WireRecord::from_packet(p);
                let dir = match r.dir {
                    Direction::Outgoing => "out",
                    Direction::Incoming => "in",
                };
                csv.write_record([
                    r.ts.to_string(),
                    r.src,
                    r.dst,
                    r.sport.to_string(),
                    r.dport.to_string(),
                    r.len.to_string(),
                    dir.to_owned(),
                    r.tcp.to_string(),
                    r.retx.to_string(),
                    r.flags,
                ])?;
            }
            csv.flush().map_err(io_err)?;
        }
    }
    Ok(())
}

/// Keeps only error-free TCP: drops non-TCP packets and retransmissions.
pub fn filter_clean_tcp(mut trace: LabeledTrace) -> LabeledTrace {
    trace.packets.retain(|p| p.is_tcp && !p.is_retransmission);
    trace
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub device: String,
    pub os_version: String,
    pub app_versions_tag: String,
    pub collection_time_tag: String,
    /// Relative paths are resolved against the manifest's directory.
    pub traces: Vec<PathBuf>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: DatasetManifest =
            serde_json::from_str(&text).map_err(|e| Error::Schema {
                path: path.to_owned(),
                message: e.to_string(),
            })?;
        manifest.base_dir = path.parent().map(Path::to_owned).unwrap_or_default();
        for trace in manifest.trace_paths() {
            if !trace.is_file() {
                return Err(Error::Dataset {
                    manifest: manifest.name.clone(),
                    message: format!("trace file {} does not exist", trace.display()),
                });
            }
        }
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn trace_paths(&self) -> Vec<PathBuf> {
        self.traces
            .iter()
            .map(|t| {
                if t.is_absolute() {
                    t.clone()
                } else {
                    self.base_dir.join(t)
                }
            })
            .collect()
    }
}

/// Dataset names must be unique among the manifests used together.
pub fn check_unique_names(manifests: &[&DatasetManifest]) -> Result<()> {
    let mut seen = HashSet::new();
    for m in manifests {
        if !seen.insert(m.name.as_str()) {
            return Err(Error::Dataset {
                manifest: m.name.clone(),
                message: "dataset name is used by more than one manifest".into(),
            });
        }
    }
    Ok(())
}
