//! Sampled DNS-over-UDP trace records: parsing, sanitization and AS
//! annotation.
//!
//! A trace is a JSON-lines stream, one observed packet per line. Only header
//! fields are carried; truncation of the original capture is recorded in
//! [`TraceMeta`] and never needed for parsing.

use std::io::{BufRead, Write};
use std::net::IpAddr;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dnsname;
use crate::error::{Error, Result};
use crate::prefix::PrefixTable;

pub const DNS_PORT: u16 = 53;
pub const UDP_HEADER_LEN: u32 = 8;
pub const SECONDS_PER_DAY: f64 = 86_400.0;
pub const QTYPE_A: u32 = 1;
pub const QTYPE_NS: u32 = 2;
pub const QTYPE_AAAA: u32 = 28;
pub const QTYPE_ANY: u32 = 255;

/// UTC day index (days since the Unix epoch) of a timestamp.
pub fn day_of(ts: f64) -> i64 {
    (ts / SECONDS_PER_DAY).floor() as i64
}

/// One sampled, truncated DNS packet observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketRecord {
    pub ts: f64,
    pub src_ip: IpAddr,
    pub dst_ip: IpAddr,
    pub src_port: u16,
    pub dst_port: u16,
    pub ip_ttl: u8,
    pub ip_id: u16,
    /// UDP header plus payload.
    pub udp_len: u32,
    #[serde(rename = "qr", serialize_with = "ser_qr", deserialize_with = "de_qr")]
    pub is_response: bool,
    pub dns_id: u16,
    #[serde(deserialize_with = "de_qname")]
    pub qname: String,
    /// Held wider than the 16-bit wire field so that out-of-range values
    /// survive parsing and are rejected by [`sanitize`].
    pub qtype: u32,
    pub rcode: u8,
    pub ancount: u16,
    pub nscount: u16,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub src_as: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dst_as: Option<u32>,
}

fn ser_qr<S: Serializer>(v: &bool, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_u8(u8::from(*v))
}

fn de_qr<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<bool, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Qr {
        Bool(bool),
        Int(u8),
    }
    match Qr::deserialize(d)? {
        Qr::Bool(b) => Ok(b),
        Qr::Int(0) => Ok(false),
        Qr::Int(1) => Ok(true),
        Qr::Int(n) => Err(serde::de::Error::custom(format!("qr must be 0 or 1, got {n}"))),
    }
}

fn de_qname<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<String, D::Error> {
    let raw = String::deserialize(d)?;
    Ok(dnsname::normalize(&raw))
}

impl PacketRecord {
    /// DNS payload length derived from the UDP length field.
    pub fn dns_payload_len(&self) -> u32 {
        self.udp_len.saturating_sub(UDP_HEADER_LEN)
    }

    /// The query originator: source of requests, destination of responses.
    pub fn client_ip(&self) -> IpAddr {
        if self.is_response {
            self.dst_ip
        } else {
            self.src_ip
        }
    }

    /// The DNS server side of the exchange (the amplifier for attack traffic).
    pub fn server_ip(&self) -> IpAddr {
        if self.is_response {
            self.src_ip
        } else {
            self.dst_ip
        }
    }

    pub fn client_as(&self) -> Option<u32> {
        if self.is_response {
            self.dst_as
        } else {
            self.src_as
        }
    }

    pub fn day(&self) -> i64 {
        day_of(self.ts)
    }
}

/// Trace-level metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub sampling_denominator: u32,
    pub truncation_bytes: u32,
    pub time_range: Option<(f64, f64)>,
}

impl Default for TraceMeta {
    fn default() -> Self {
        TraceMeta {
            sampling_denominator: 16_000,
            truncation_bytes: 128,
            time_range: None,
        }
    }
}

impl TraceMeta {
    pub fn with_sampling(sampling_denominator: u32) -> Self {
        TraceMeta {
            sampling_denominator,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sampling_denominator < 1 {
            return Err(Error::config("sampling_denominator must be >= 1"));
        }
        if let Some((start, end)) = self.time_range {
            if start > end {
                return Err(Error::config(format!("time range start {start} after end {end}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParsedTrace {
    pub records: Vec<PacketRecord>,
    /// Lines that could not be decoded into a record.
    pub skipped: usize,
}

/// Parses a JSON-lines trace. Undecodable lines are counted and skipped;
/// blank lines are ignored.
pub fn parse_trace<R: BufRead>(input: R, meta: &TraceMeta) -> Result<ParsedTrace> {
    meta.validate()?;
    let lines = input.lines().collect::<std::io::Result<Vec<String>>>()?;
    let decoded: Vec<Option<PacketRecord>> = lines
        .par_iter()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str::<PacketRecord>(l).ok())
        .collect();
    let skipped = decoded.iter().filter(|r| r.is_none()).count();
    Ok(ParsedTrace {
        records: decoded.into_iter().flatten().collect(),
        skipped,
    })
}

pub fn to_json_line(record: &PacketRecord) -> String {
    serde_json::to_string(record).expect("packet records always serialize")
}

/// Writes records as JSON lines in canonical field order.
pub fn write_trace<W: Write>(mut out: W, records: &[PacketRecord]) -> Result<()> {
    for r in records {
        writeln!(out, "{}", to_json_line(r))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub struct Sanitized {
    pub kept: Vec<PacketRecord>,
    pub dropped_packets: usize,
    /// Sum of `udp_len` over dropped packets.
    pub dropped_bytes: u64,
}

fn valid_ip_pair(a: &IpAddr, b: &IpAddr) -> bool {
    let ok = |ip: &IpAddr| match ip {
        IpAddr::V4(v4) => !v4.is_unspecified() && !v4.is_broadcast() && !v4.is_multicast(),
        IpAddr::V6(v6) => !v6.is_unspecified() && !v6.is_multicast(),
    };
    a.is_ipv4() == b.is_ipv4() && ok(a) && ok(b)
}

/// Whether a record passes every well-formedness check.
pub fn is_well_formed(r: &PacketRecord) -> bool {
    r.ts.is_finite()
        && r.ts >= 0.0
        && valid_ip_pair(&r.src_ip, &r.dst_ip)
        && (UDP_HEADER_LEN..=65_535).contains(&r.udp_len)
        // 0 and 65535 are reserved type codes
        && (1..=65_534).contains(&r.qtype)
        && r.rcode <= 15
        && dnsname::is_valid(&r.qname)
        && ((r.src_port == DNS_PORT) != (r.dst_port == DNS_PORT))
}

/// Drops malformed records, preserving the order of the rest.
pub fn sanitize(records: Vec<PacketRecord>) -> Sanitized {
    let mut out = Sanitized::default();
    for r in records {
        if is_well_formed(&r) {
            out.kept.push(r);
        } else {
            out.dropped_packets += 1;
            out.dropped_bytes += r.udp_len as u64;
        }
    }
    out
}

/// Fills `src_as`/`dst_as` by longest-prefix match. Unmapped addresses keep
/// whatever value they had.
pub fn annotate(records: &mut [PacketRecord], table: &PrefixTable) {
    records.par_iter_mut().for_each(|r| {
        if let Some(asn) = table.lookup(&r.src_ip) {
            r.src_as = Some(asn);
        }
        if let Some(asn) = table.lookup(&r.dst_ip) {
            r.dst_as = Some(asn);
        }
    });
}

/// Sorts by timestamp; equal timestamps keep input order.
pub fn sort_by_time(records: &mut [PacketRecord]) {
    records.sort_by(|a, b| a.ts.total_cmp(&b.ts));
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    const LINE: &str = r#"{"ts":1600000000.5,"src_ip":"192.0.2.1","dst_ip":"198.51.100.7","src_port":53,"dst_port":3333,"ip_ttl":250,"ip_id":17,"udp_len":4104,"qr":1,"dns_id":4242,"qname":"Example.GOV","qtype":255,"rcode":0,"ancount":12,"nscount":0}"#;

    #[test]
    fn parses_payload_length_and_normalizes_name() {
        let t = parse_trace(LINE.as_bytes(), &TraceMeta::default()).unwrap();
        assert_eq!(t.skipped, 0);
        let r = &t.records[0];
        assert_eq!(r.dns_payload_len(), 4096);
        assert_eq!(r.qname, "example.gov.");
        assert!(r.is_response);
        assert_eq!(r.client_ip().to_string(), "198.51.100.7");
    }

    #[test]
    fn empty_input() {
        let t = parse_trace("".as_bytes(), &TraceMeta::default()).unwrap();
        assert!(t.records.is_empty());
        assert_eq!(t.skipped, 0);
    }

    #[test]
    fn malformed_lines_are_counted() {
        let input = format!("{LINE}\nnot json\n{{\"ts\":1}}\n\n{}\n", LINE.replace("3333", "70000"));
        let t = parse_trace(input.as_bytes(), &TraceMeta::default()).unwrap();
        assert_eq!(t.records.len(), 1);
        assert_eq!(t.skipped, 3);
    }

    #[test]
    fn bad_meta_is_config_error() {
        let err = parse_trace("".as_bytes(), &TraceMeta::with_sampling(0)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn sanitize_drops_malformed() {
        let good = request(1.0, "10.0.0.1", "10.0.0.2", "a.example.", QTYPE_A);
        let mut bad_type = good.clone();
        bad_type.qtype = 70_000;
        let mut bad_label = good.clone();
        bad_label.qname = format!("{}.example.", "x".repeat(64));
        let mut bad_len = good.clone();
        bad_len.udp_len = 7;
        let mut both_53 = good.clone();
        both_53.src_port = 53;
        let mut mixed_family = good.clone();
        mixed_family.dst_ip = "2001:db8::1".parse().unwrap();

        let mut records = vec![good.clone(); 7];
        records.insert(2, bad_type);
        records.insert(5, bad_label);
        records.push(bad_len);
        let s = sanitize(records.clone());
        assert_eq!(s.kept.len(), 7);
        assert_eq!(s.dropped_packets, 3);
        assert_eq!(s.dropped_bytes, 40 + 40 + 7);

        let s = sanitize(vec![both_53, mixed_family, good]);
        assert_eq!(s.kept.len(), 1);
    }

    #[test]
    fn sanitize_is_idempotent() {
        let mut r = request(1.0, "10.0.0.1", "10.0.0.2", "a.example.", QTYPE_A);
        let records: Vec<_> = (0..20)
            .map(|i| {
                r.qtype = if i % 3 == 0 { 0 } else { QTYPE_A };
                r.clone()
            })
            .collect();
        let once = sanitize(records);
        let twice = sanitize(once.kept.clone());
        assert_eq!(twice.dropped_packets, 0);
        assert_eq!(twice.kept, once.kept);
    }

    #[test]
    fn annotate_sets_as_and_direction() {
        let table = PrefixTable::from_entries([("10.0.0.0/8", 1), ("10.1.0.0/16", 2)]).unwrap();
        let mut recs = vec![
            request(1.0, "10.1.2.3", "192.0.2.1", "a.", QTYPE_A),
            response(1.1, "10.1.2.3", "192.0.2.1", "a.", QTYPE_A, 100),
        ];
        annotate(&mut recs, &table);
        assert_eq!(recs[0].src_as, Some(2));
        assert_eq!(recs[0].dst_as, None);
        assert_eq!(recs[0].client_ip(), recs[0].src_ip);
        assert_eq!(recs[1].client_ip(), recs[1].dst_ip);
        assert_eq!(recs[1].client_as(), Some(2));
        assert_eq!(recs[1].server_ip().to_string(), "192.0.2.1");
    }

    #[test]
    fn day_boundaries() {
        assert_eq!(day_of(86_399.9), 0);
        assert_eq!(day_of(86_400.0), 1);
    }
}
