//! Line-delimited dataset manifests.
//!
//! One record per line, tab-separated:
//!
//! ```text
//! <flow id> <TAB> <label> <TAB> <source> [<TAB> <flow key> [<TAB> <origin>]]
//! ```
//!
//! `source` is either `b64:<data>`, an inline tensor (one byte of packet
//! count followed by the filled 200-byte rows), or `pcap:<file>#<start>-<end>`,
//! the packets with indices in `[start, end)` of that capture that share the
//! key of packet `start`. Relative capture paths resolve against the
//! manifest's directory. Blank lines and lines starting with `#` are skipped.

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;

use crate::error::{Error, Result};

use super::flow::FlowKey;
use super::pcap::PcapFile;
use super::tensor::{tensorize, FlowTensor, MaskPolicy};
use super::{FlowSource, LabeledFlow};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ManifestSource {
    Inline(FlowTensor),
    Pcap { file: PathBuf, start: usize, end: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRecord {
    pub id: String,
    pub label: String,
    pub source: ManifestSource,
    pub key: Option<FlowKey>,
    pub origin: Option<FlowSource>,
}

impl ManifestRecord {
    pub fn inline(flow: &LabeledFlow) -> Self {
        ManifestRecord {
            id: flow.id.clone(),
            label: flow.label.clone(),
            source: ManifestSource::Inline(flow.tensor.clone()),
            key: Some(flow.key),
            origin: Some(flow.source),
        }
    }

    fn to_line(&self) -> String {
        let source = match &self.source {
            ManifestSource::Inline(t) => format!("b64:{}", encode_tensor(t)),
            ManifestSource::Pcap { file, start, end } => format!("pcap:{}#{start}-{end}", file.display()),
        };
        let mut line = format!("{}\t{}\t{}", self.id, self.label, source);
        if let Some(k) = self.key {
            line.push('\t');
            line.push_str(&k.to_string());
            if let Some(o) = self.origin {
                line.push_str(match o {
                    FlowSource::Pcap => "\tpcap",
                    FlowSource::Synthetic => "\tsynthetic",
                });
            }
        }
        line
    }
}

pub fn encode_tensor(t: &FlowTensor) -> String {
    let mut buf = Vec::with_capacity(1 + t.filled_rows().len());
    buf.push(t.packet_count() as u8);
    buf.extend_from_slice(t.filled_rows());
    B64.encode(buf)
}

pub fn decode_tensor(s: &str) -> Result<FlowTensor> {
    let buf = B64.decode(s).map_err(|e| Error::Invalid(format!("bad base64 tensor: {e}")))?;
    let (&count, rows) = buf.split_first().ok_or_else(|| Error::Invalid("empty tensor payload".into()))?;
    FlowTensor::from_rows(rows, count as usize)
}

fn parse_line(line: &str, location: &str) -> Result<ManifestRecord> {
    let bad = |reason: String| Error::Malformed {
        location: location.to_string(),
        reason,
    };
    let fields: Vec<&str> = line.split('\t').collect();
    if !(3..=5).contains(&fields.len()) {
        return Err(bad(format!("expected 3 to 5 tab-separated fields, found {}", fields.len())));
    }
    if fields[0].is_empty() || fields[1].is_empty() {
        return Err(bad("empty flow id or label".into()));
    }
    let source = if let Some(data) = fields[2].strip_prefix("b64:") {
        ManifestSource::Inline(decode_tensor(data).map_err(|e| bad(e.to_string()))?)
    } else if let Some(rest) = fields[2].strip_prefix("pcap:") {
        let (file, range) = rest.rsplit_once('#').ok_or_else(|| bad("pcap source lacks `#start-end`".into()))?;
        let (start, end) = range.split_once('-').ok_or_else(|| bad("bad packet range".into()))?;
        let start: usize = start.parse().map_err(|_| bad("bad range start".into()))?;
        let end: usize = end.parse().map_err(|_| bad("bad range end".into()))?;
        if end <= start {
            return Err(bad("empty packet range".into()));
        }
        ManifestSource::Pcap {
            file: PathBuf::from(file),
            start,
            end,
        }
    } else {
        return Err(bad(format!("unknown source `{}`", fields[2])));
    };
    let key = fields.get(3).map(|k| k.parse::<FlowKey>()).transpose().map_err(|e| bad(e.to_string()))?;
    let origin = match fields.get(4) {
        None => None,
        Some(&"pcap") => Some(FlowSource::Pcap),
        Some(&"synthetic") => Some(FlowSource::Synthetic),
        Some(o) => return Err(bad(format!("unknown origin `{o}`"))),
    };
    Ok(ManifestRecord {
        id: fields[0].to_string(),
        label: fields[1].to_string(),
        source,
        key,
        origin,
    })
}

pub fn read_records(path: &Path) -> Result<Vec<ManifestRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim_end_matches('\r');
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        records.push(parse_line(trimmed, &format!("{}:{}", path.display(), lineno + 1))?);
    }
    Ok(records)
}

pub fn write_records(path: &Path, records: &[ManifestRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        writeln!(w, "{}", r.to_line()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes flows as inline-tensor records.
pub fn write_manifest(path: &Path, flows: &[LabeledFlow]) -> Result<()> {
    let records: Vec<ManifestRecord> = flows.iter().map(ManifestRecord::inline).collect();
    write_records(path, &records)
}

/// Loads a manifest, resolving capture references. When `pool` is given,
/// every label must belong to it.
pub fn load_manifest(path: &Path, pool: Option<&[String]>) -> Result<Vec<LabeledFlow>> {
    let records = read_records(path)?;
    if let Some(pool) = pool {
        let offenders: BTreeSet<&str> = records
            .iter()
            .filter(|r| !pool.contains(&r.label))
            .map(|r| r.label.as_str())
            .collect();
        if !offenders.is_empty() {
            return Err(Error::UnknownLabels(offenders.into_iter().map(String::from).collect()));
        }
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let mut captures: HashMap<PathBuf, PcapFile> = HashMap::new();
    records
        .into_iter()
        .map(|r| {
            let (tensor, key, default_origin) = match &r.source {
                ManifestSource::Inline(t) => (t.clone(), r.key.unwrap_or_else(FlowKey::unspecified), FlowSource::Synthetic),
                ManifestSource::Pcap { file, start, end } => {
                    let full = if file.is_absolute() { file.clone() } else { base.join(file) };
                    if !captures.contains_key(&full) {
                        if !full.exists() {
                            return Err(Error::NotFound(format!("capture file {}", full.display())));
                        }
                        captures.insert(full.clone(), PcapFile::open(&full)?);
                    }
                    let cap = &captures[&full];
                    let (tensor, key) = flow_from_capture(cap, *start, *end).map_err(|e| Error::Malformed {
                        location: format!("{} record `{}`", path.display(), r.id),
                        reason: e.to_string(),
                    })?;
                    (tensor, r.key.unwrap_or(key), FlowSource::Pcap)
                }
            };
            Ok(LabeledFlow {
                id: r.id,
                key,
                tensor,
                label: r.label,
                source: r.origin.unwrap_or(default_origin),
            })
        })
        .collect()
}

fn flow_from_capture(cap: &PcapFile, start: usize, end: usize) -> Result<(FlowTensor, FlowKey)> {
    let mut records = cap.records().skip(start).take(end - start);
    let first = records
        .next()
        .ok_or_else(|| Error::Invalid(format!("packet {start} beyond end of capture")))??;
    let mut packets = vec![first.data];
    for rec in records.flatten() {
        if rec.key == first.key {
            packets.push(rec.data);
        }
    }
    Ok((tensorize(&packets, MaskPolicy::Headers(cap.link))?, first.key))
}
