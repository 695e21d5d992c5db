//! Deterministic synthetic traffic classes.
//!
//! Every packet is a raw IPv4 frame. Payload bytes start from a background
//! template shared by all classes; each class overlays its motif bytes at
//! fixed payload offsets, then every payload byte is replaced by a uniform
//! random byte with probability `noise_rate`. Packet count and payload
//! length are drawn uniformly from their inclusive ranges, so a profile with
//! `noise_rate = 0` and degenerate ranges produces identical flows.
//!
//! Profile files are TOML with one `[[profile]]` table per class:
//!
//! ```toml
//! [[profile]]
//! class_name = "PortScan"
//! packets = [4, 12]         # packets per flow, inclusive
//! payload_len = [40, 120]   # payload bytes per packet, inclusive
//! noise_rate = 0.2
//! protocol = 6              # optional, default 6 (TCP); 17 for UDP
//! server_port = 80          # optional, default 80
//! client_port = 49152       # optional
//! reply_ratio = 0.5         # optional, share of server-to-client packets, evenly spaced
//! mean_gap_secs = 0.05      # optional, mean inter-packet gap
//! motif = [{ offset = 3, value = 0x41 }, { offset = 9, value = 0x7f }]
//! ```

use std::collections::HashSet;
use std::net::{IpAddr, Ipv4Addr};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::flow::FlowKey;
use super::pcap::PcapPacket;
use super::tensor::{tensorize, MaskPolicy, PACKETS_PER_FLOW};
use super::{FlowSource, LabeledFlow};

const BACKGROUND_SEED: u64 = 0xB4C6_F00D;
const IPV4_HEADER: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotifByte {
    pub offset: usize,
    pub value: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticProfile {
    pub class_name: String,
    pub packets: [usize; 2],
    pub payload_len: [usize; 2],
    pub motif: Vec<MotifByte>,
    pub noise_rate: f64,
    #[serde(default = "default_protocol")]
    pub protocol: u8,
    #[serde(default = "default_server_port")]
    pub server_port: u16,
    #[serde(default = "default_client_port")]
    pub client_port: u16,
    #[serde(default = "default_reply_ratio")]
    pub reply_ratio: f64,
    #[serde(default = "default_gap")]
    pub mean_gap_secs: f64,
}

fn default_protocol() -> u8 {
    6
}
fn default_server_port() -> u16 {
    80
}
fn default_client_port() -> u16 {
    49152
}
fn default_reply_ratio() -> f64 {
    0.5
}
fn default_gap() -> f64 {
    0.05
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileFile {
    profile: Vec<SyntheticProfile>,
}

impl SyntheticProfile {
    pub fn new(class_name: &str, motif: &[(usize, u8)], noise_rate: f64) -> Self {
        SyntheticProfile {
            class_name: class_name.to_string(),
            packets: [4, 12],
            payload_len: [40, 120],
            motif: motif.iter().map(|&(offset, value)| MotifByte { offset, value }).collect(),
            noise_rate,
            protocol: default_protocol(),
            server_port: default_server_port(),
            client_port: default_client_port(),
            reply_ratio: default_reply_ratio(),
            mean_gap_secs: default_gap(),
        }
    }

    pub fn load_file(path: &Path) -> Result<Vec<SyntheticProfile>> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ProfileFile = toml::from_str(&text).map_err(|e| Error::Malformed {
            location: path.display().to_string(),
            reason: e.to_string(),
        })?;
        validate(&file.profile)?;
        Ok(file.profile)
    }

    fn header_len(&self) -> usize {
        IPV4_HEADER + if self.protocol == 17 { 8 } else { 20 }
    }

    /// Six attack-like classes plus a benign class used by the desk-scale
    /// evaluation. `Web-BruteForce` and `Web-XSS` share most of their motif.
    pub fn desk_pool() -> Vec<SyntheticProfile> {
        type Class<'a> = (&'a str, u16, [usize; 2], [usize; 2], &'a [(usize, u8)]);
        let classes: [Class; 7] = [
            ("DoS-Hulk", 80, [8, 12], [90, 120], &[(2, 0x47), (7, 0xE1), (13, 0x2A), (21, 0x90), (30, 0x11), (38, 0xC3)]),
            ("PortScan", 80, [2, 4], [0, 8], &[(1, 0x9B), (3, 0x05), (4, 0xF0), (6, 0x66)]),
            ("SSH-Patator", 22, [10, 16], [40, 64], &[(1, 0x53), (6, 0x53), (12, 0x48), (19, 0xA7), (27, 0x7E), (33, 0x01)]),
            ("FTP-Patator", 21, [6, 10], [20, 36], &[(3, 0x55), (8, 0xBE), (15, 0x19), (22, 0xEE), (28, 0x84), (34, 0x5D)]),
            ("Web-BruteForce", 80, [4, 8], [60, 90], &[(0, 0x50), (5, 0x4F), (11, 0xB9), (18, 0x2F), (26, 0xFA), (34, 0x0C)]),
            ("Web-XSS", 80, [4, 8], [70, 100], &[(0, 0x50), (5, 0x4F), (11, 0xB9), (18, 0x2F), (25, 0x3E), (37, 0xAB)]),
            ("BENIGN", 443, [5, 14], [30, 140], &[(10, 0x16), (14, 0x03), (20, 0x01), (24, 0xD7)]),
        ];
        classes
            .iter()
            .map(|(name, port, packets, len, motif)| {
                let mut p = SyntheticProfile::new(name, motif, 0.1);
                p.server_port = *port;
                p.packets = *packets;
                p.payload_len = *len;
                p
            })
            .collect()
    }
}

fn validate(profiles: &[SyntheticProfile]) -> Result<()> {
    if profiles.is_empty() {
        return Err(Error::Invalid("no synthetic profiles".into()));
    }
    let mut names = HashSet::new();
    let mut motifs: Vec<(&str, Vec<MotifByte>)> = Vec::new();
    for p in profiles {
        if !names.insert(p.class_name.as_str()) {
            return Err(Error::DuplicateClass(p.class_name.clone()));
        }
        let bad = |what: &str| Error::Invalid(format!("profile `{}`: {what}", p.class_name));
        if !(0.0..=1.0).contains(&p.noise_rate) {
            return Err(bad("noise_rate must be in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&p.reply_ratio) {
            return Err(bad("reply_ratio must be in [0, 1]"));
        }
        if p.packets[0] == 0 || p.packets[0] > p.packets[1] || p.packets[1] > PACKETS_PER_FLOW {
            return Err(bad("packets must satisfy 1 <= min <= max <= 100"));
        }
        if p.payload_len[0] > p.payload_len[1] {
            return Err(bad("payload_len min exceeds max"));
        }
        if p.protocol != 6 && p.protocol != 17 {
            return Err(bad("protocol must be 6 or 17"));
        }
        let mut m = p.motif.clone();
        m.sort_by_key(|b| (b.offset, b.value));
        if let Some((other, _)) = motifs.iter().find(|(_, o)| *o == m) {
            return Err(bad(&format!("motif identical to profile `{other}`")));
        }
        motifs.push((&p.class_name, m));
    }
    Ok(())
}

/// Shared payload background, identical for every class.
fn background() -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(BACKGROUND_SEED);
    (0..super::PACKET_BYTES).map(|_| rng.random_range(0x20..0x7f)).collect()
}

/// A generated flow before tensorization.
#[derive(Debug, Clone)]
pub struct SyntheticFlow {
    pub id: String,
    pub label: String,
    pub key: FlowKey,
    pub packets: Vec<PcapPacket>,
}

fn ipv4_checksum(header: &[u8]) -> u16 {
    let mut sum: u32 = header
        .chunks(2)
        .map(|c| u16::from_be_bytes([c[0], *c.get(1).unwrap_or(&0)]) as u32)
        .sum();
    while sum > 0xffff {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    !(sum as u16)
}

fn build_packet(p: &SyntheticProfile, src: (Ipv4Addr, u16), dst: (Ipv4Addr, u16), payload: &[u8]) -> Vec<u8> {
    let l4_len = p.header_len() - IPV4_HEADER;
    let total = p.header_len() + payload.len();
    let mut pkt = Vec::with_capacity(total);
    pkt.extend_from_slice(&[0x45, 0]);
    pkt.extend_from_slice(&(total as u16).to_be_bytes());
    pkt.extend_from_slice(&[0, 0, 0x40, 0, 64, p.protocol, 0, 0]);
    pkt.extend_from_slice(&src.0.octets());
    pkt.extend_from_slice(&dst.0.octets());
    let ck = ipv4_checksum(&pkt);
    pkt[10..12].copy_from_slice(&ck.to_be_bytes());
    pkt.extend_from_slice(&src.1.to_be_bytes());
    pkt.extend_from_slice(&dst.1.to_be_bytes());
    if l4_len == 8 {
        pkt.extend_from_slice(&((8 + payload.len()) as u16).to_be_bytes());
        pkt.extend_from_slice(&[0, 0]);
    } else {
        pkt.extend_from_slice(&[0; 8]);
        pkt.extend_from_slice(&[0x50, 0x18, 0xff, 0xff, 0, 0, 0, 0]);
    }
    pkt.extend_from_slice(payload);
    pkt
}

/// Generates raw packets for `n_per_class` flows of every profile.
pub fn generate_packets(profiles: &[SyntheticProfile], n_per_class: usize, seed: u64) -> Result<Vec<SyntheticFlow>> {
    validate(profiles)?;
    if n_per_class == 0 {
        return Err(Error::Invalid("n_per_class must be at least 1".into()));
    }
    let bg = background();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(profiles.len() * n_per_class);
    let mut clock = 0.0f64;
    for (ci, p) in profiles.iter().enumerate() {
        for i in 0..n_per_class {
            let client = Ipv4Addr::new(10, ci as u8, rng.random(), rng.random::<u8>().max(1));
            let server = Ipv4Addr::new(172, 16, ci as u8, rng.random::<u8>().max(1));
            let n_packets = rng.random_range(p.packets[0]..=p.packets[1]);
            let mut packets = Vec::with_capacity(n_packets);
            for j in 0..n_packets {
                let len = rng.random_range(p.payload_len[0]..=p.payload_len[1]);
                let mut payload: Vec<u8> = (0..len).map(|j| bg[j % bg.len()]).collect();
                for m in &p.motif {
                    if let Some(b) = payload.get_mut(m.offset) {
                        *b = m.value;
                    }
                }
                if p.noise_rate > 0.0 {
                    for b in payload.iter_mut() {
                        if rng.random_bool(p.noise_rate) {
                            *b = rng.random();
                        }
                    }
                }
                // Replies are spread evenly through the flow.
                let reply = ((j + 1) as f64 * p.reply_ratio).floor() > (j as f64 * p.reply_ratio).floor();
                let (src, dst) = if reply {
                    ((server, p.server_port), (client, p.client_port))
                } else {
                    ((client, p.client_port), (server, p.server_port))
                };
                let gap: f64 = rng.random::<f64>() * 2.0 * p.mean_gap_secs;
                clock += gap;
                packets.push(PcapPacket {
                    timestamp: clock,
                    data: build_packet(p, src, dst, &payload),
                });
            }
            // Separate consecutive flows well beyond the idle timeout.
            clock += 120.0;
            out.push(SyntheticFlow {
                id: format!("{}-s{seed}-{i}", p.class_name),
                label: p.class_name.clone(),
                key: FlowKey::new(
                    IpAddr::V4(client),
                    p.client_port,
                    IpAddr::V4(server),
                    p.server_port,
                    p.protocol,
                ),
                packets,
            });
        }
    }
    Ok(out)
}

/// Deterministic labeled flows, tensorized with the default header mask.
pub fn generate_synthetic(profiles: &[SyntheticProfile], n_per_class: usize, seed: u64) -> Result<Vec<LabeledFlow>> {
    generate_packets(profiles, n_per_class, seed)?
        .into_iter()
        .map(|f| {
            let data: Vec<&[u8]> = f.packets.iter().map(|p| p.data.as_slice()).collect();
            Ok(LabeledFlow {
                id: f.id,
                key: f.key,
                tensor: tensorize(&data, MaskPolicy::default())?,
                label: f.label,
                source: FlowSource::Synthetic,
            })
        })
        .collect()
}
