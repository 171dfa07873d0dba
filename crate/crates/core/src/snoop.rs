//! Offline classification of recorded probe responses: resolver versus
//! forwarder from the address echo, and cache hit versus miss from answer
//! TTLs.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Read};
use std::net::IpAddr;

use serde::{Deserialize, Serialize};

use crate::dnsname;
use crate::error::{Error, Result};

pub const RCODE_NOERROR: u8 = 0;
pub const RCODE_REFUSED: u8 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerTtl {
    pub rr_type: u16,
    pub ttl: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeResponse {
    pub target_ip: IpAddr,
    pub responder_ip: IpAddr,
    #[serde(default)]
    pub echoed_a_record: Option<IpAddr>,
    #[serde(deserialize_with = "de_qname")]
    pub qname: String,
    #[serde(default)]
    pub answer_ttls: Vec<AnswerTtl>,
    pub rcode: u8,
    #[serde(default)]
    pub default_ttl_hint: Option<u32>,
}

fn de_qname<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<String, D::Error> {
    Ok(dnsname::normalize(&String::deserialize(d)?))
}

pub fn read_responses<R: BufRead>(input: R) -> Result<Vec<ProbeResponse>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::input(format!("responses line {}: {e}", i + 1)))?,
        );
    }
    Ok(out)
}

/// Reads `qname,ttl`.
pub fn read_ttl_table<R: Read>(reader: R) -> Result<BTreeMap<String, u32>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = BTreeMap::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let ttl = row
            .get(1)
            .unwrap_or_default()
            .parse()
            .map_err(|_| Error::config(format!("ttl table row {}: bad ttl", i + 2)))?;
        out.insert(dnsname::normalize(row.get(0).unwrap_or_default()), ttl);
    }
    Ok(out)
}

fn default_ttl(r: &ProbeResponse, table: &BTreeMap<String, u32>) -> Option<u32> {
    table.get(&r.qname).copied().or(r.default_ttl_hint)
}

fn is_bogon(ip: &IpAddr) -> bool {
    match ip {
        IpAddr::V4(v) => {
            v.is_unspecified()
                || v.is_loopback()
                || v.is_private()
                || v.is_link_local()
                || v.is_multicast()
                || v.is_broadcast()
        }
        IpAddr::V6(v) => v.is_unspecified() || v.is_loopback() || v.is_multicast(),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SanitizeReport {
    pub kept: Vec<ProbeResponse>,
    pub dropped_rcode: usize,
    pub dropped_echo: usize,
    pub dropped_ttl: usize,
    pub dropped_duplicate: usize,
}

/// Drops error rcodes, echoes that cannot be a resolver address, TTLs above
/// the authoritative default and repeated responses from one responder
/// (the first is kept). With `resolvers` given, an echo must be the
/// responder itself or one of those addresses.
pub fn sanitize_probe_responses(
    responses: &[ProbeResponse],
    default_ttls: &BTreeMap<String, u32>,
    resolvers: Option<&BTreeSet<IpAddr>>,
) -> SanitizeReport {
    let mut rep = SanitizeReport::default();
    let mut seen = BTreeSet::new();
    for r in responses {
        if r.rcode != RCODE_NOERROR {
            rep.dropped_rcode += 1;
            continue;
        }
        if let Some(echo) = r.echoed_a_record {
            let plausible = !is_bogon(&echo)
                && resolvers.is_none_or(|set| echo == r.responder_ip || set.contains(&echo));
            if !plausible {
                rep.dropped_echo += 1;
                continue;
            }
        }
        if let Some(d) = default_ttl(r, default_ttls) {
            if r.answer_ttls.iter().any(|a| a.ttl > d) {
                rep.dropped_ttl += 1;
                continue;
            }
        }
        if !seen.insert(r.responder_ip) {
            rep.dropped_duplicate += 1;
            continue;
        }
        rep.kept.push(r.clone());
    }
    rep
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponderKind {
    Resolver,
    Forwarder,
    Unclassified,
}

pub fn classify_responder(r: &ProbeResponse) -> ResponderKind {
    match r.echoed_a_record {
        None => ResponderKind::Unclassified,
        Some(echo) if echo == r.responder_ip => ResponderKind::Resolver,
        Some(_) => ResponderKind::Forwarder,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheState {
    Hit,
    Miss,
    Unknown,
}

/// Hit when every answer TTL is below the default, miss when all equal it.
pub fn classify_cache_state(r: &ProbeResponse, default_ttls: &BTreeMap<String, u32>) -> CacheState {
    let Some(d) = default_ttl(r, default_ttls) else {
        return CacheState::Unknown;
    };
    if r.answer_ttls.is_empty() {
        CacheState::Unknown
    } else if r.answer_ttls.iter().all(|a| a.ttl < d) {
        CacheState::Hit
    } else if r.answer_ttls.iter().all(|a| a.ttl == d) {
        CacheState::Miss
    } else {
        CacheState::Unknown
    }
}

/// Miss when all answers carry the default TTL, hit otherwise.
pub fn classify_cache_two_way(r: &ProbeResponse, default_ttls: &BTreeMap<String, u32>) -> CacheState {
    match default_ttl(r, default_ttls) {
        Some(d) if !r.answer_ttls.is_empty() => {
            if r.answer_ttls.iter().all(|a| a.ttl == d) {
                CacheState::Miss
            } else {
                CacheState::Hit
            }
        }
        _ => CacheState::Unknown,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassifiedResponse {
    pub responder_ip: IpAddr,
    pub target_ip: IpAddr,
    pub qname: String,
    pub kind: ResponderKind,
    pub cache: CacheState,
    pub cache_two_way: CacheState,
}

pub fn classify_all(kept: &[ProbeResponse], default_ttls: &BTreeMap<String, u32>) -> Vec<ClassifiedResponse> {
    kept.iter()
        .map(|r| ClassifiedResponse {
            responder_ip: r.responder_ip,
            target_ip: r.target_ip,
            qname: r.qname.clone(),
            kind: classify_responder(r),
            cache: classify_cache_state(r, default_ttls),
            cache_two_way: classify_cache_two_way(r, default_ttls),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnoopSummary {
    pub responses: usize,
    pub kinds: BTreeMap<ResponderKind, usize>,
    pub cache: BTreeMap<CacheState, usize>,
    /// Share of hits among classified responses for names that should never
    /// be cached; `None` when no such response was classified.
    pub anchor_error_rate: Option<f64>,
}

pub fn summarize(rows: &[ClassifiedResponse], anchors: &BTreeSet<String>) -> SnoopSummary {
    let mut kinds = BTreeMap::new();
    let mut cache = BTreeMap::new();
    let (mut anchor_hits, mut anchor_total) = (0usize, 0usize);
    for r in rows {
        *kinds.entry(r.kind).or_insert(0) += 1;
        *cache.entry(r.cache).or_insert(0) += 1;
        if anchors.contains(&r.qname) && r.cache != CacheState::Unknown {
            anchor_total += 1;
            anchor_hits += (r.cache == CacheState::Hit) as usize;
        }
    }
    SnoopSummary {
        responses: rows.len(),
        kinds,
        cache,
        anchor_error_rate: (anchor_total > 0).then(|| anchor_hits as f64 / anchor_total as f64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resp(responder: &str, echo: Option<&str>, ttls: &[u32]) -> ProbeResponse {
        ProbeResponse {
            target_ip: responder.parse().unwrap(),
            responder_ip: responder.parse().unwrap(),
            echoed_a_record: echo.map(|e| e.parse().unwrap()),
            qname: "probe.example.".into(),
            answer_ttls: ttls.iter().map(|t| AnswerTtl { rr_type: 1, ttl: *t }).collect(),
            rcode: 0,
            default_ttl_hint: None,
        }
    }

    fn table() -> BTreeMap<String, u32> {
        read_ttl_table("qname,ttl\nprobe.example,3600\n".as_bytes()).unwrap()
    }

    #[test]
    fn responder_kind() {
        assert_eq!(classify_responder(&resp("1.2.3.4", Some("1.2.3.4"), &[])), ResponderKind::Resolver);
        assert_eq!(classify_responder(&resp("1.2.3.4", Some("5.6.7.8"), &[])), ResponderKind::Forwarder);
        assert_eq!(classify_responder(&resp("1.2.3.4", None, &[])), ResponderKind::Unclassified);
    }

    #[test]
    fn cache_state() {
        let t = table();
        assert_eq!(classify_cache_state(&resp("1.2.3.4", None, &[1200]), &t), CacheState::Hit);
        assert_eq!(classify_cache_state(&resp("1.2.3.4", None, &[3600, 3600]), &t), CacheState::Miss);
        let mixed = resp("1.2.3.4", None, &[3600, 10]);
        assert_eq!(classify_cache_state(&mixed, &t), CacheState::Unknown);
        assert_eq!(classify_cache_two_way(&mixed, &t), CacheState::Hit);
        assert_eq!(classify_cache_state(&mixed, &BTreeMap::new()), CacheState::Unknown);
    }

    #[test]
    fn sanitize() {
        let t = table();
        let mut refused = resp("1.2.3.4", Some("1.2.3.4"), &[3600]);
        refused.rcode = RCODE_REFUSED;
        let rs = vec![
            refused,
            resp("1.2.3.5", Some("1.2.3.5"), &[3600]),
            resp("1.2.3.5", Some("1.2.3.5"), &[100]),
            resp("1.2.3.6", Some("1.2.3.6"), &[7200]),
            resp("1.2.3.7", Some("10.0.0.1"), &[3600]),
            resp("1.2.3.8", Some("9.9.9.9"), &[3600]),
        ];
        let r = sanitize_probe_responses(&rs, &t, None);
        assert_eq!(r.kept.len(), 2);
        assert_eq!((r.dropped_rcode, r.dropped_duplicate, r.dropped_ttl, r.dropped_echo), (1, 1, 1, 1));
        let known = BTreeSet::from(["8.8.8.8".parse().unwrap()]);
        let r = sanitize_probe_responses(&rs, &t, Some(&known));
        assert_eq!(r.kept.len(), 1);
    }

    #[test]
    fn anchor_error_rate() {
        let t = table();
        let rows = classify_all(&[resp("1.1.1.1", None, &[3600]), resp("1.1.1.2", None, &[5])], &t);
        let s = summarize(&rows, &BTreeSet::from(["probe.example.".to_string()]));
        assert_eq!(s.anchor_error_rate, Some(0.5));
        assert_eq!(s.cache[&CacheState::Miss], 1);
    }
}
