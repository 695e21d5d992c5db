//! Minimal libpcap file reader/writer and IP header parsing.

use std::io::{Read, Write};
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::flow::{FlowKey, PacketRecord};

const MAGIC_MICROS: u32 = 0xa1b2_c3d4;
const MAGIC_NANOS: u32 = 0xa1b2_3c4d;
const FILE_HEADER_LEN: usize = 24;
const RECORD_HEADER_LEN: usize = 16;
const MAX_RECORD_LEN: usize = 256 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkType {
    Ethernet,
    /// Raw IPv4/IPv6 with no link header.
    Raw,
}

impl LinkType {
    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            1 => Some(LinkType::Ethernet),
            101 | 228 | 229 => Some(LinkType::Raw),
            _ => None,
        }
    }

    pub fn code(self) -> u32 {
        match self {
            LinkType::Ethernet => 1,
            LinkType::Raw => 101,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct HeaderLayout {
    pub ip_offset: usize,
    pub ipv6: bool,
    pub protocol: u8,
    pub l4_offset: Option<usize>,
}

pub(crate) fn header_layout(data: &[u8], link: LinkType) -> Option<HeaderLayout> {
    let mut ip = 0;
    if link == LinkType::Ethernet {
        let mut ethertype_at = 12;
        loop {
            let et = u16::from_be_bytes([*data.get(ethertype_at)?, *data.get(ethertype_at + 1)?]);
            match et {
                0x8100 | 0x88a8 => ethertype_at += 4,
                0x0800 | 0x86dd => {
                    ip = ethertype_at + 2;
                    break;
                }
                _ => return None,
            }
        }
    }
    let version = data.get(ip)? >> 4;
    match version {
        4 => {
            let ihl = (data[ip] & 0x0f) as usize * 4;
            if ihl < 20 || data.len() < ip + 20 {
                return None;
            }
            let l4 = ip + ihl;
            Some(HeaderLayout {
                ip_offset: ip,
                ipv6: false,
                protocol: data[ip + 9],
                l4_offset: (data.len() > l4).then_some(l4),
            })
        }
        6 => {
            if data.len() < ip + 40 {
                return None;
            }
            let l4 = ip + 40;
            Some(HeaderLayout {
                ip_offset: ip,
                ipv6: true,
                protocol: data[ip + 6],
                l4_offset: (data.len() > l4).then_some(l4),
            })
        }
        _ => None,
    }
}

/// Extracts the canonical flow key of a captured frame.
pub fn parse_key(data: &[u8], link: LinkType) -> Result<FlowKey> {
    let malformed = |reason: &str| Error::Malformed {
        location: "packet".into(),
        reason: reason.into(),
    };
    let layout = header_layout(data, link).ok_or_else(|| malformed("no IPv4/IPv6 header"))?;
    let ip = layout.ip_offset;
    let (src, dst) = if layout.ipv6 {
        let s: [u8; 16] = data[ip + 8..ip + 24].try_into().expect("length checked");
        let d: [u8; 16] = data[ip + 24..ip + 40].try_into().expect("length checked");
        (IpAddr::V6(Ipv6Addr::from(s)), IpAddr::V6(Ipv6Addr::from(d)))
    } else {
        let s: [u8; 4] = data[ip + 12..ip + 16].try_into().expect("length checked");
        let d: [u8; 4] = data[ip + 16..ip + 20].try_into().expect("length checked");
        (IpAddr::V4(Ipv4Addr::from(s)), IpAddr::V4(Ipv4Addr::from(d)))
    };
    let (sp, dp) = match (layout.protocol, layout.l4_offset) {
        (6 | 17 | 132, Some(l4)) => {
            if data.len() < l4 + 4 {
                return Err(malformed("truncated transport header"));
            }
            (
                u16::from_be_bytes([data[l4], data[l4 + 1]]),
                u16::from_be_bytes([data[l4 + 2], data[l4 + 3]]),
            )
        }
        (6 | 17 | 132, None) => return Err(malformed("missing transport header")),
        _ => (0, 0),
    };
    Ok(FlowKey::new(src, sp, dst, dp, layout.protocol))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcapPacket {
    pub timestamp: f64,
    pub data: Vec<u8>,
}

/// Reads a whole libpcap file (either byte order, micro- or nanosecond
/// timestamps).
pub struct PcapFile {
    pub link: LinkType,
    /// Parsed records; an unreadable record ends the list and is reported in
    /// `truncated`.
    pub packets: Vec<PcapPacket>,
    pub truncated: Option<String>,
}

impl PcapFile {
    pub fn open(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|e| Error::io(path, e))?;
        Self::parse(&buf).map_err(|e| match e {
            Error::Malformed { reason, .. } => Error::Malformed {
                location: path.display().to_string(),
                reason,
            },
            other => other,
        })
    }

    pub fn parse(buf: &[u8]) -> Result<Self> {
        let malformed = |reason: String| Error::Malformed {
            location: "pcap".into(),
            reason,
        };
        if buf.len() < FILE_HEADER_LEN {
            return Err(malformed("file shorter than pcap header".into()));
        }
        let raw_magic = u32::from_le_bytes(buf[0..4].try_into().expect("4 bytes"));
        let (swapped, nanos) = match raw_magic {
            MAGIC_MICROS => (false, false),
            MAGIC_NANOS => (false, true),
            m if m.swap_bytes() == MAGIC_MICROS => (true, false),
            m if m.swap_bytes() == MAGIC_NANOS => (true, true),
            m => return Err(malformed(format!("bad magic {m:#010x}"))),
        };
        let u32_at = |off: usize| {
            let v = u32::from_le_bytes(buf[off..off + 4].try_into().expect("4 bytes"));
            if swapped { v.swap_bytes() } else { v }
        };
        let link_code = u32_at(20);
        let link = LinkType::from_code(link_code)
            .ok_or_else(|| malformed(format!("unsupported link type {link_code}")))?;

        let mut packets = Vec::new();
        let mut truncated = None;
        let mut off = FILE_HEADER_LEN;
        while off < buf.len() {
            if buf.len() - off < RECORD_HEADER_LEN {
                truncated = Some(format!("truncated record header at byte {off}"));
                break;
            }
            let secs = u32_at(off) as f64;
            let frac = u32_at(off + 4) as f64;
            let incl = u32_at(off + 8) as usize;
            if incl > MAX_RECORD_LEN || buf.len() - off - RECORD_HEADER_LEN < incl {
                truncated = Some(format!("bad record length {incl} at byte {off}"));
                break;
            }
            let start = off + RECORD_HEADER_LEN;
            packets.push(PcapPacket {
                timestamp: secs + frac / if nanos { 1e9 } else { 1e6 },
                data: buf[start..start + incl].to_vec(),
            });
            off = start + incl;
        }
        Ok(PcapFile {
            link,
            packets,
            truncated,
        })
    }

    /// Packet records with parsed keys; frames without a usable IP header
    /// appear as errors so reassembly can count and skip them.
    pub fn records(&self) -> impl Iterator<Item = Result<PacketRecord>> + '_ {
        self.packets.iter().enumerate().map(move |(index, p)| {
            let key = parse_key(&p.data, self.link).map_err(|e| match e {
                Error::Malformed { reason, .. } => Error::Malformed {
                    location: format!("packet {index}"),
                    reason,
                },
                other => other,
            })?;
            Ok(PacketRecord {
                index,
                timestamp: p.timestamp,
                key,
                data: p.data.clone(),
            })
        })
    }
}

/// Writes a little-endian microsecond libpcap file.
pub fn write_pcap(path: &Path, link: LinkType, packets: &[PcapPacket]) -> Result<()> {
    let mut out = Vec::with_capacity(FILE_HEADER_LEN + packets.iter().map(|p| p.data.len() + 16).sum::<usize>());
    out.extend_from_slice(&MAGIC_MICROS.to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&4u16.to_le_bytes());
    out.extend_from_slice(&0i32.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&65535u32.to_le_bytes());
    out.extend_from_slice(&link.code().to_le_bytes());
    for p in packets {
        let secs = p.timestamp.floor();
        let micros = ((p.timestamp - secs) * 1e6).round().min(999_999.0);
        out.extend_from_slice(&(secs as u32).to_le_bytes());
        out.extend_from_slice(&(micros as u32).to_le_bytes());
        out.extend_from_slice(&(p.data.len() as u32).to_le_bytes());
        out.extend_from_slice(&(p.data.len() as u32).to_le_bytes());
        out.extend_from_slice(&p.data);
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|e| Error::io(path, e))
}
