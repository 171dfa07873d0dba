//! Attack detection over (client, day) aggregates.
//!
//! A client is considered a victim on a given UTC day when its DNS traffic
//! that day reaches a minimum number of sampled packets and the share of
//! packets for misused names reaches the share threshold.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::net::IpAddr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prefix;
use crate::selectors::MisusedNameList;
use crate::stats;
use crate::trace::{PacketRecord, TraceMeta};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub share_threshold: f64,
    pub min_sampled_packets: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            share_threshold: 0.90,
            min_sampled_packets: 10,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.share_threshold > 0.0 && self.share_threshold <= 1.0) {
            return Err(Error::config(format!(
                "share_threshold must be in (0, 1], got {}",
                self.share_threshold
            )));
        }
        if self.min_sampled_packets < 1 {
            return Err(Error::config("min_sampled_packets must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientDayStats {
    pub client_ip: IpAddr,
    pub day: i64,
    pub total_pkts: u64,
    pub misused_pkts: u64,
    /// Misused packets other than root-name packets.
    pub misused_non_root_pkts: u64,
    pub share: f64,
    /// Bounds of the misused-name packets.
    pub first_ts: f64,
    pub last_ts: f64,
}

#[derive(Default, Clone, Copy)]
struct Acc {
    total: u64,
    misused: u64,
    non_root: u64,
    first: f64,
    last: f64,
}

impl Acc {
    fn merge(mut self, o: Acc) -> Acc {
        if o.misused > 0 {
            if self.misused == 0 {
                self.first = o.first;
                self.last = o.last;
            } else {
                self.first = self.first.min(o.first);
                self.last = self.last.max(o.last);
            }
        }
        self.total += o.total;
        self.misused += o.misused;
        self.non_root += o.non_root;
        self
    }
}

/// Per (client, UTC day) packet totals, for pairs with at least one packet
/// for a misused name. Sorted by (day, client).
pub fn aggregate_client_days(records: &[PacketRecord], names: &MisusedNameList) -> Vec<ClientDayStats> {
    let map = records
        .par_iter()
        .fold(HashMap::<(i64, IpAddr), Acc>::new, |mut m, r| {
            let misused = names.contains(&r.qname);
            let a = Acc {
                total: 1,
                misused: misused as u64,
                non_root: (misused && r.qname != ".") as u64,
                first: r.ts,
                last: r.ts,
            };
            let e = m.entry((r.day(), r.client_ip())).or_default();
            *e = e.merge(a);
            m
        })
        .reduce(HashMap::new, |mut a, b| {
            for (k, v) in b {
                let e = a.entry(k).or_default();
                *e = e.merge(v);
            }
            a
        });
    let mut out: Vec<ClientDayStats> = map
        .into_iter()
        .filter(|(_, a)| a.misused > 0)
        .map(|((day, client_ip), a)| ClientDayStats {
            client_ip,
            day,
            total_pkts: a.total,
            misused_pkts: a.misused,
            misused_non_root_pkts: a.non_root,
            share: a.misused as f64 / a.total as f64,
            first_ts: a.first,
            last_ts: a.last,
        })
        .collect();
    out.sort_by_key(|a| (a.day, a.client_ip));
    out
}

/// Header fields of one pre-reflection (request) packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestHeader {
    pub ip_id: u16,
    pub src_port: u16,
    pub dns_id: u16,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackEvent {
    pub victim_ip: IpAddr,
    pub day: i64,
    /// All sampled DNS packets of the victim that day.
    pub packet_count: u64,
    /// Sampled packets for misused names.
    pub misused_count: u64,
    pub est_original_packets: u64,
    pub est_misused_originals: u64,
    pub share: f64,
    /// Share with root-name packets left out of the numerator.
    pub share_excl_root: f64,
    pub first_ts: f64,
    pub last_ts: f64,
    pub duration_s: f64,
    pub qname_counts: BTreeMap<String, u64>,
    pub request_count: u64,
    pub response_count: u64,
    pub amplifier_set: BTreeSet<IpAddr>,
    /// DNS IDs of the misused-name packets in time order.
    pub dns_ids: Vec<u16>,
    /// Request packets in time order.
    pub request_headers: Vec<RequestHeader>,
    pub ip_ttl_counts: BTreeMap<u8, u64>,
    pub nscount_counts: BTreeMap<u16, u64>,
    pub ingress_as_counts: BTreeMap<u32, u64>,
    pub victim_as: Option<u32>,
    pub intensity_decile: Option<u8>,
}

impl AttackEvent {
    /// Plurality misused name; ties go to the lexicographically smallest.
    pub fn dominant_qname(&self) -> Option<&str> {
        self.qname_counts
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
            .map(|(q, _)| q.as_str())
    }

    /// Largest share of packets coming from a single ingress AS.
    pub fn ingress_concentration(&self) -> Option<f64> {
        let total: u64 = self.ingress_as_counts.values().sum();
        let max = self.ingress_as_counts.values().max()?;
        Some(*max as f64 / total as f64)
    }
}

fn packet_order(a: &PacketRecord, b: &PacketRecord) -> std::cmp::Ordering {
    a.ts.total_cmp(&b.ts)
        .then(a.is_response.cmp(&b.is_response))
        .then(a.dns_id.cmp(&b.dns_id))
        .then(a.server_ip().cmp(&b.server_ip()))
        .then(a.ip_id.cmp(&b.ip_id))
        .then(a.src_port.cmp(&b.src_port))
}

/// Emits one event per client-day whose totals pass both thresholds.
/// Event fields are populated from that client-day's misused-name packets.
pub fn detect_attacks(
    stats: &[ClientDayStats],
    records: &[PacketRecord],
    names: &MisusedNameList,
    cfg: &DetectorConfig,
    meta: &TraceMeta,
) -> Result<Vec<AttackEvent>> {
    cfg.validate()?;
    meta.validate()?;
    let qualifying: BTreeMap<(i64, IpAddr), &ClientDayStats> = stats
        .iter()
        .filter(|s| s.total_pkts >= cfg.min_sampled_packets && s.share >= cfg.share_threshold)
        .map(|s| ((s.day, s.client_ip), s))
        .collect();
    if qualifying.is_empty() {
        return Ok(Vec::new());
    }

    let mut packets: HashMap<(i64, IpAddr), Vec<&PacketRecord>> = HashMap::new();
    for r in records {
        if !names.contains(&r.qname) {
            continue;
        }
        let key = (r.day(), r.client_ip());
        if qualifying.contains_key(&key) {
            packets.entry(key).or_default().push(r);
        }
    }

    let denom = meta.sampling_denominator as u64;
    let events = qualifying
        .into_iter()
        .map(|(key, s)| {
            let mut pkts = packets.remove(&key).unwrap_or_default();
            pkts.sort_by(|a, b| packet_order(a, b));
            let mut ev = AttackEvent {
                victim_ip: s.client_ip,
                day: s.day,
                packet_count: s.total_pkts,
                misused_count: s.misused_pkts,
                est_original_packets: s.total_pkts * denom,
                est_misused_originals: s.misused_pkts * denom,
                share: s.share,
                share_excl_root: s.misused_non_root_pkts as f64 / s.total_pkts as f64,
                first_ts: s.first_ts,
                last_ts: s.last_ts,
                duration_s: s.last_ts - s.first_ts,
                qname_counts: BTreeMap::new(),
                request_count: 0,
                response_count: 0,
                amplifier_set: BTreeSet::new(),
                dns_ids: Vec::with_capacity(pkts.len()),
                request_headers: Vec::new(),
                ip_ttl_counts: BTreeMap::new(),
                nscount_counts: BTreeMap::new(),
                ingress_as_counts: BTreeMap::new(),
                victim_as: None,
                intensity_decile: None,
            };
            for p in pkts {
                *ev.qname_counts.entry(p.qname.clone()).or_default() += 1;
                ev.amplifier_set.insert(p.server_ip());
                ev.dns_ids.push(p.dns_id);
                *ev.nscount_counts.entry(p.nscount).or_default() += 1;
                if ev.victim_as.is_none() {
                    ev.victim_as = p.client_as();
                }
                if p.is_response {
                    ev.response_count += 1;
                } else {
                    ev.request_count += 1;
                    ev.request_headers.push(RequestHeader {
                        ip_id: p.ip_id,
                        src_port: p.src_port,
                        dns_id: p.dns_id,
                    });
                    *ev.ip_ttl_counts.entry(p.ip_ttl).or_default() += 1;
                    if let Some(asn) = p.src_as {
                        *ev.ingress_as_counts.entry(asn).or_default() += 1;
                    }
                }
            }
            ev
        })
        .collect();
    Ok(events)
}

/// Sets `intensity_decile` from the rank of `packet_count` among `events`.
pub fn intensity_deciles(events: &mut [AttackEvent]) {
    let counts: Vec<u64> = events.iter().map(|e| e.packet_count).collect();
    for (e, d) in events.iter_mut().zip(stats::decile_scores(&counts)) {
        e.intensity_decile = Some(d);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DailyVictims {
    pub day: i64,
    pub events: usize,
    pub victims: usize,
    /// IPv4 /24 (IPv6 /48) prefixes.
    pub prefixes_24: usize,
    /// IPv4 /16 (IPv6 /32) prefixes.
    pub prefixes_16: usize,
    /// IPv4 /8 (IPv6 /16) prefixes.
    pub prefixes_8: usize,
    pub ases: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VictimSummary {
    pub daily: Vec<DailyVictims>,
    pub total: DailyVictims,
    /// (percentile, duration in seconds)
    pub duration_percentiles: Vec<(u8, f64)>,
}

fn prefix_len(ip: &IpAddr, v4: u8) -> u8 {
    if ip.is_ipv4() {
        v4
    } else {
        match v4 {
            24 => 48,
            16 => 32,
            _ => 16,
        }
    }
}

fn count_victims(day: i64, events: &[&AttackEvent]) -> DailyVictims {
    let victims: BTreeSet<IpAddr> = events.iter().map(|e| e.victim_ip).collect();
    let pfx = |len: u8| {
        victims
            .iter()
            .map(|ip| prefix::truncate(ip, prefix_len(ip, len)))
            .collect::<BTreeSet<_>>()
            .len()
    };
    DailyVictims {
        day,
        events: events.len(),
        victims: victims.len(),
        prefixes_24: pfx(24),
        prefixes_16: pfx(16),
        prefixes_8: pfx(8),
        ases: events
            .iter()
            .filter_map(|e| e.victim_as)
            .collect::<BTreeSet<_>>()
            .len(),
    }
}

pub fn victim_summary(events: &[AttackEvent]) -> VictimSummary {
    let mut by_day: BTreeMap<i64, Vec<&AttackEvent>> = BTreeMap::new();
    for e in events {
        by_day.entry(e.day).or_default().push(e);
    }
    let all: Vec<&AttackEvent> = events.iter().collect();
    let durations: Vec<f64> = events.iter().map(|e| e.duration_s).collect();
    VictimSummary {
        daily: by_day.iter().map(|(d, evs)| count_victims(*d, evs)).collect(),
        total: count_victims(-1, &all),
        duration_percentiles: [25u8, 50, 75, 90, 99]
            .into_iter()
            .filter_map(|p| stats::percentile(&durations, p as f64).map(|v| (p, v)))
            .collect(),
    }
}

/// Share of client-days with at least `p` sampled packets, p = 1..=max_p.
pub fn visibility_curve(stats: &[ClientDayStats], max_p: u64) -> Vec<(u64, f64)> {
    let n = stats.len().max(1) as f64;
    (1..=max_p)
        .map(|p| (p, stats.iter().filter(|s| s.total_pkts >= p).count() as f64 / n))
        .collect()
}
