//! Packet captures and synthetic traffic to labeled fixed-shape flow tensors.

mod flow;
mod manifest;
pub mod pcap;
pub mod synthetic;
mod tensor;

pub use flow::{reassemble_flows, FlowKey, PacketRecord, ReassembledFlow, Reassembler, ReassemblyStats};
pub use manifest::{
    decode_tensor, encode_tensor, load_manifest, read_records, write_manifest, write_records, ManifestRecord, ManifestSource,
};
pub use pcap::LinkType;
pub use synthetic::{generate_synthetic, SyntheticProfile};
pub use tensor::{tensorize, FlowTensor, MaskPolicy, PACKETS_PER_FLOW, PACKET_BYTES};

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Default idle gap after which an open flow is emitted.
pub const DEFAULT_IDLE_TIMEOUT_SECS: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowSource {
    Pcap,
    Synthetic,
}

/// A flow tensor with its identity and class label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledFlow {
    pub id: String,
    pub key: FlowKey,
    pub tensor: FlowTensor,
    pub label: String,
    pub source: FlowSource,
}

/// Reassembles and tensorizes every flow of a capture file under one label.
/// Flow ids are `<file stem>-<n>` in emission order.
pub fn flows_from_capture(path: &std::path::Path, label: &str, idle_timeout: f64) -> Result<(Vec<LabeledFlow>, ReassemblyStats)> {
    let cap = pcap::PcapFile::open(path)?;
    if let Some(reason) = &cap.truncated {
        tracing::warn!(file = %path.display(), %reason, "capture truncated");
    }
    let (flows, stats) = reassemble_flows(cap.records(), idle_timeout);
    let stem = path.file_stem().map_or("flow".into(), |s| s.to_string_lossy().into_owned());
    let out = flows
        .into_iter()
        .enumerate()
        .map(|(i, f)| {
            Ok(LabeledFlow {
                id: format!("{stem}-{i}"),
                key: f.key,
                tensor: tensorize(&f.packets, MaskPolicy::headers(cap.link))?,
                label: label.to_string(),
                source: FlowSource::Pcap,
            })
        })
        .collect::<Result<_>>()?;
    Ok((out, stats))
}
