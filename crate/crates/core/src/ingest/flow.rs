use std::collections::HashMap;
use std::fmt;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::str::FromStr;

use crate::error::{Error, Result};

use super::{DEFAULT_IDLE_TIMEOUT_SECS, PACKETS_PER_FLOW};

/// Canonical bidirectional 5-tuple. The (address, port) pair that sorts
/// first is always stored as the source, so both directions of a
/// conversation map to the same key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FlowKey {
    pub src_addr: IpAddr,
    pub dst_addr: IpAddr,
    pub src_port: u16,
    pub dst_port: u16,
    pub protocol: u8,
}

impl FlowKey {
    pub fn new(a: IpAddr, a_port: u16, b: IpAddr, b_port: u16, protocol: u8) -> Self {
        let (src, dst) = if (a, a_port) <= (b, b_port) {
            ((a, a_port), (b, b_port))
        } else {
            ((b, b_port), (a, a_port))
        };
        FlowKey {
            src_addr: src.0,
            src_port: src.1,
            dst_addr: dst.0,
            dst_port: dst.1,
            protocol,
        }
    }

    /// Placeholder key for flows whose addressing is unknown.
    pub fn unspecified() -> Self {
        let zero = IpAddr::V4(Ipv4Addr::UNSPECIFIED);
        FlowKey::new(zero, 0, zero, 0, 0)
    }
}

impl fmt::Display for FlowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{}",
            self.protocol,
            SocketAddr::new(self.src_addr, self.src_port),
            SocketAddr::new(self.dst_addr, self.dst_port)
        )
    }
}

impl FromStr for FlowKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |reason: &str| Error::Malformed {
            location: format!("flow key `{s}`"),
            reason: reason.to_string(),
        };
        let mut parts = s.split(',');
        let (Some(proto), Some(a), Some(b), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(bad("expected `proto,src,dst`"));
        };
        let protocol = proto.parse::<u8>().map_err(|_| bad("bad protocol"))?;
        let a = a.parse::<SocketAddr>().map_err(|_| bad("bad source address"))?;
        let b = b.parse::<SocketAddr>().map_err(|_| bad("bad destination address"))?;
        Ok(FlowKey::new(a.ip(), a.port(), b.ip(), b.port(), protocol))
    }
}

/// One captured packet. `data` is the captured bytes from the start of the
/// frame; `index` is the packet's position in its capture.
#[derive(Debug, Clone, PartialEq)]
pub struct PacketRecord {
    pub index: usize,
    pub timestamp: f64,
    pub key: FlowKey,
    pub data: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReassembledFlow {
    pub key: FlowKey,
    pub first_timestamp_micros: i64,
    pub packet_indices: Vec<usize>,
    pub packets: Vec<Vec<u8>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReassemblyStats {
    pub packets: usize,
    pub malformed: usize,
    pub flows: usize,
}

struct OpenFlow {
    seq: u64,
    last_seen: f64,
    flow: ReassembledFlow,
}

/// Groups packets into flows by canonical key. A flow is emitted once it
/// holds `max_packets` packets or when a later packet arrives more than
/// `idle_timeout` seconds after the flow's last packet.
pub struct Reassembler {
    idle_timeout: f64,
    max_packets: usize,
    open: HashMap<FlowKey, OpenFlow>,
    next_seq: u64,
    stats: ReassemblyStats,
}

impl Default for Reassembler {
    fn default() -> Self {
        Self::new(DEFAULT_IDLE_TIMEOUT_SECS)
    }
}

impl Reassembler {
    pub fn new(idle_timeout: f64) -> Self {
        Reassembler {
            idle_timeout,
            max_packets: PACKETS_PER_FLOW,
            open: HashMap::new(),
            next_seq: 0,
            stats: ReassemblyStats::default(),
        }
    }

    pub fn stats(&self) -> ReassemblyStats {
        self.stats
    }

    /// Feeds one stream item. Malformed items are counted and skipped.
    pub fn push(&mut self, item: Result<PacketRecord>) -> Vec<ReassembledFlow> {
        let record = match item {
            Ok(r) => r,
            Err(e) => {
                tracing::debug!("skipping malformed packet: {e}");
                self.stats.malformed += 1;
                return Vec::new();
            }
        };
        self.stats.packets += 1;
        let mut emitted = self.expire(record.timestamp);

        let seq = &mut self.next_seq;
        let open = self.open.entry(record.key).or_insert_with(|| {
            *seq += 1;
            OpenFlow {
                seq: *seq,
                last_seen: record.timestamp,
                flow: ReassembledFlow {
                    key: record.key,
                    first_timestamp_micros: (record.timestamp * 1e6).round() as i64,
                    packet_indices: Vec::new(),
                    packets: Vec::new(),
                },
            }
        });
        open.last_seen = record.timestamp;
        open.flow.packet_indices.push(record.index);
        open.flow.packets.push(record.data);
        if open.flow.packets.len() >= self.max_packets {
            let full = self.open.remove(&record.key).expect("flow just inserted");
            emitted.push(full.flow);
        }
        self.stats.flows += emitted.len();
        emitted
    }

    fn expire(&mut self, now: f64) -> Vec<ReassembledFlow> {
        let mut stale: Vec<(u64, FlowKey)> = self
            .open
            .iter()
            .filter(|(_, f)| now - f.last_seen > self.idle_timeout)
            .map(|(k, f)| (f.seq, *k))
            .collect();
        stale.sort_unstable();
        stale
            .into_iter()
            .filter_map(|(_, k)| self.open.remove(&k).map(|f| f.flow))
            .collect()
    }

    /// Emits every still-open flow in order of first appearance.
    pub fn finish(mut self) -> (Vec<ReassembledFlow>, ReassemblyStats) {
        let mut rest: Vec<OpenFlow> = self.open.drain().map(|(_, f)| f).collect();
        rest.sort_unstable_by_key(|f| f.seq);
        self.stats.flows += rest.len();
        (rest.into_iter().map(|f| f.flow).collect(), self.stats)
    }
}

/// Reassembles a whole packet stream.
pub fn reassemble_flows<I>(stream: I, idle_timeout: f64) -> (Vec<ReassembledFlow>, ReassemblyStats)
where
    I: IntoIterator<Item = Result<PacketRecord>>,
{
    let mut r = Reassembler::new(idle_timeout);
    let mut flows = Vec::new();
    for item in stream {
        flows.extend(r.push(item));
    }
    let (rest, stats) = r.finish();
    flows.extend(rest);
    (flows, stats)
}
