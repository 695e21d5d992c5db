use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::pcap::{header_layout, LinkType};

pub const PACKETS_PER_FLOW: usize = 100;
pub const PACKET_BYTES: usize = 200;

/// A flow as a 100 x 200 matrix of captured bytes scaled to [0, 1].
///
/// The raw bytes are stored; `value(r, c)` is `byte / 255`. Rows at or past
/// `packet_count` are all zero.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct FlowTensor {
    bytes: Box<[u8]>,
    packet_count: usize,
}

impl std::fmt::Debug for FlowTensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FlowTensor")
            .field("packet_count", &self.packet_count)
            .field("nonzero", &self.bytes.iter().filter(|b| **b != 0).count())
            .finish()
    }
}

impl FlowTensor {
    pub const ROWS: usize = PACKETS_PER_FLOW;
    pub const COLS: usize = PACKET_BYTES;

    pub fn zeros() -> Self {
        FlowTensor {
            bytes: vec![0u8; Self::ROWS * Self::COLS].into_boxed_slice(),
            packet_count: 0,
        }
    }

    /// Builds from the first `packet_count` rows of raw bytes.
    pub fn from_rows(rows: &[u8], packet_count: usize) -> Result<Self> {
        if packet_count > Self::ROWS || rows.len() != packet_count * Self::COLS {
            return Err(Error::Shape {
                expected: format!("{packet_count} rows of {} bytes (max {} rows)", Self::COLS, Self::ROWS),
                actual: format!("{} bytes", rows.len()),
            });
        }
        let mut t = Self::zeros();
        t.bytes[..rows.len()].copy_from_slice(rows);
        t.packet_count = packet_count;
        Ok(t)
    }

    pub fn packet_count(&self) -> usize {
        self.packet_count
    }

    pub fn raw(&self) -> &[u8] {
        &self.bytes
    }

    /// Raw bytes of the filled rows only.
    pub fn filled_rows(&self) -> &[u8] {
        &self.bytes[..self.packet_count * Self::COLS]
    }

    pub fn row(&self, r: usize) -> &[u8] {
        &self.bytes[r * Self::COLS..(r + 1) * Self::COLS]
    }

    pub fn value(&self, r: usize, c: usize) -> f32 {
        self.bytes[r * Self::COLS + c] as f32 / 255.0
    }

    /// Row-major normalized matrix of all 20000 entries.
    pub fn to_matrix(&self) -> Vec<f32> {
        self.bytes.iter().map(|&b| b as f32 / 255.0).collect()
    }
}

/// Which header bytes are zeroed before normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskPolicy {
    /// Keep every captured byte.
    Off,
    /// Zero IP addresses and IP/TCP/UDP checksums, locating headers from the
    /// given link type.
    Headers(LinkType),
}

impl Default for MaskPolicy {
    fn default() -> Self {
        MaskPolicy::Headers(LinkType::Raw)
    }
}

impl MaskPolicy {
    pub fn headers(link: LinkType) -> Self {
        MaskPolicy::Headers(link)
    }

    fn link(self) -> Option<LinkType> {
        match self {
            MaskPolicy::Off => None,
            MaskPolicy::Headers(l) => Some(l),
        }
    }

    /// Byte ranges to zero in `packet`. Packets whose headers cannot be
    /// parsed are left untouched.
    pub fn masked_ranges(self, packet: &[u8]) -> Vec<std::ops::Range<usize>> {
        let Some(link) = self.link() else {
            return Vec::new();
        };
        let Some(layout) = header_layout(packet, link) else {
            return Vec::new();
        };
        let ip = layout.ip_offset;
        let mut ranges = Vec::with_capacity(4);
        if layout.ipv6 {
            ranges.push(ip + 8..ip + 40);
        } else {
            ranges.push(ip + 10..ip + 12);
            ranges.push(ip + 12..ip + 20);
        }
        if let Some(l4) = layout.l4_offset {
            match layout.protocol {
                6 => ranges.push(l4 + 16..l4 + 18),
                17 => ranges.push(l4 + 6..l4 + 8),
                _ => {}
            }
        }
        ranges
    }
}

/// Fixed-shape tensorization: packet `i` fills row `i`, truncated or
/// zero-padded to 200 bytes, with masked positions zeroed. Packets beyond
/// the 100th are ignored.
pub fn tensorize<P: AsRef<[u8]>>(packets: &[P], mask: MaskPolicy) -> Result<FlowTensor> {
    if packets.is_empty() {
        return Err(Error::EmptyFlow);
    }
    let mut t = FlowTensor::zeros();
    let n = packets.len().min(FlowTensor::ROWS);
    for (r, p) in packets.iter().take(n).enumerate() {
        let p = p.as_ref();
        let len = p.len().min(FlowTensor::COLS);
        let row = &mut t.bytes[r * FlowTensor::COLS..(r + 1) * FlowTensor::COLS];
        row[..len].copy_from_slice(&p[..len]);
        for range in mask.masked_ranges(p) {
            let lo = range.start.min(len);
            let hi = range.end.min(len);
            row[lo..hi].fill(0);
        }
    }
    t.packet_count = n;
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_full_packet_of_ff() {
        let t = tensorize(&[vec![0xFFu8; 200]], MaskPolicy::Off).unwrap();
        assert!((0..200).all(|c| t.value(0, c) == 1.0));
        assert!((1..100).all(|r| (0..200).all(|c| t.value(r, c) == 0.0)));
        assert_eq!(t.packet_count(), 1);
    }

    #[test]
    fn long_packet_is_truncated() {
        let p: Vec<u8> = (0..300).map(|i| (i % 256) as u8).collect();
        let t = tensorize(&[p.clone()], MaskPolicy::Off).unwrap();
        assert_eq!(t.row(0), &p[..200]);
    }

    #[test]
    fn hundred_one_byte_packets() {
        let packets = vec![vec![0x80u8]; 100];
        let t = tensorize(&packets, MaskPolicy::Off).unwrap();
        for r in 0..100 {
            assert_eq!(t.value(r, 0), 128.0 / 255.0);
            assert!((1..200).all(|c| t.value(r, c) == 0.0));
        }
    }

    #[test]
    fn empty_flow_is_an_error() {
        let none: [Vec<u8>; 0] = [];
        assert!(matches!(tensorize(&none, MaskPolicy::Off), Err(Error::EmptyFlow)));
    }

    #[test]
    fn ipv4_addresses_and_checksums_are_masked() {
        let mut p = vec![0xAAu8; 60];
        p[0] = 0x45; // IPv4, IHL 5
        p[9] = 6; // TCP
        let t = tensorize(&[p], MaskPolicy::Headers(LinkType::Raw)).unwrap();
        let row = t.row(0);
        assert_eq!(&row[10..20], &[0u8; 10]);
        assert_eq!(&row[36..38], &[0u8; 2]);
        assert_eq!(row[9], 6);
        assert_eq!(row[20], 0xAA);
        assert_eq!(row[38], 0xAA);
    }

    proptest! {
        #[test]
        fn shape_and_padding_invariants(lens in proptest::collection::vec(0usize..400, 1..130), fill in 1u8..=255) {
            let packets: Vec<Vec<u8>> = lens.iter().map(|&l| vec![fill; l]).collect();
            let t = tensorize(&packets, MaskPolicy::Off).unwrap();
            prop_assert_eq!(t.raw().len(), 20_000);
            prop_assert_eq!(t.packet_count(), packets.len().min(100));
            for r in 0..100 {
                let expected = lens.get(r).map_or(0, |&l| l.min(200));
                let nonzero = t.row(r).iter().filter(|b| **b != 0).count();
                prop_assert_eq!(nonzero, expected);
            }
            prop_assert!(t.to_matrix().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
