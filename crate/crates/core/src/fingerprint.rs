//! Attack-entity fingerprinting from application-layer structure.
//!
//! Three signals are available: the cardinality of header fields over the
//! pre-reflection packets of an event, the parity pattern of DNS transaction
//! IDs, and the day-by-day sequence of the dominant misused name.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::detect::AttackEvent;
use crate::dnsname;
use crate::error::{Error, Result};

pub const DEFAULT_MIN_SEGMENT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeaderField {
    IpId,
    SrcPort,
    DnsId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardinalityProfile {
    pub field: HeaderField,
    pub packet_count: usize,
    pub unique_count: usize,
    pub ratio: f64,
    /// At least one order of magnitude fewer distinct values than packets.
    pub low_entropy: bool,
}

/// Distinct-value count of `field` over the event's request packets.
pub fn field_cardinality_profile(event: &AttackEvent, field: HeaderField) -> Result<CardinalityProfile> {
    if event.request_headers.is_empty() {
        return Err(Error::input("no pre-reflection packets"));
    }
    let values: BTreeSet<u16> = event
        .request_headers
        .iter()
        .map(|h| match field {
            HeaderField::IpId => h.ip_id,
            HeaderField::SrcPort => h.src_port,
            HeaderField::DnsId => h.dns_id,
        })
        .collect();
    let packet_count = event.request_headers.len();
    let unique_count = values.len();
    Ok(CardinalityProfile {
        field,
        packet_count,
        unique_count,
        ratio: unique_count as f64 / packet_count as f64,
        low_entropy: unique_count * 10 <= packet_count,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdClass {
    PureOdd,
    PureEven,
    Phased,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DnsIdPattern {
    pub class: IdClass,
    /// Index of the first ID of the second phase.
    pub change_point: Option<usize>,
    pub n: usize,
}

/// Classifies a time-ordered ID sequence by parity: all odd, all even, two
/// pure phases of at least `min_segment` IDs each, or mixed.
pub fn classify_ids(ids: &[u16], min_segment: usize) -> Result<DnsIdPattern> {
    if ids.len() < 2 {
        return Err(Error::input(format!("need at least 2 DNS IDs, got {}", ids.len())));
    }
    let n = ids.len();
    let changes: Vec<usize> = (1..n).filter(|&i| ids[i] % 2 != ids[i - 1] % 2).collect();
    let (class, change_point) = match changes.as_slice() {
        [] if ids[0] % 2 == 1 => (IdClass::PureOdd, None),
        [] => (IdClass::PureEven, None),
        [cp] if *cp >= min_segment && n - cp >= min_segment => (IdClass::Phased, Some(*cp)),
        _ => (IdClass::Mixed, None),
    };
    Ok(DnsIdPattern { class, change_point, n })
}

pub fn classify_dnsid_pattern(event: &AttackEvent, min_segment: usize) -> Result<DnsIdPattern> {
    classify_ids(&event.dns_ids, min_segment)
}

/// Requirement on the ID pattern of an attributed event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdRequirement {
    /// Either pure class.
    Pure,
    PureOdd,
    PureEven,
    Phased,
    Mixed,
}

impl IdRequirement {
    pub fn admits(self, class: IdClass) -> bool {
        match self {
            IdRequirement::Pure => matches!(class, IdClass::PureOdd | IdClass::PureEven),
            IdRequirement::PureOdd => class == IdClass::PureOdd,
            IdRequirement::PureEven => class == IdClass::PureEven,
            IdRequirement::Phased => class == IdClass::Phased,
            IdRequirement::Mixed => class == IdClass::Mixed,
        }
    }
}

/// Fingerprint file: `{"name_suffixes": [...], "id_patterns": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityFingerprint {
    pub name_suffixes: Vec<String>,
    pub id_patterns: Vec<IdRequirement>,
}

impl EntityFingerprint {
    pub fn validate(&self) -> Result<()> {
        if self.name_suffixes.iter().all(|s| s.trim().is_empty()) {
            return Err(Error::config("fingerprint needs at least one name suffix"));
        }
        if self.id_patterns.is_empty() {
            return Err(Error::config("fingerprint needs at least one id pattern"));
        }
        Ok(())
    }

    pub fn matches_name(&self, qname: &str) -> bool {
        self.name_suffixes.iter().any(|s| {
            let s = dnsname::normalize(s.trim_start_matches('.'));
            qname == s || qname.ends_with(&format!(".{s}"))
        })
    }

    pub fn admits(&self, class: IdClass) -> bool {
        self.id_patterns.iter().any(|p| p.admits(class))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub event_index: usize,
    pub victim_ip: std::net::IpAddr,
    pub day: i64,
    pub dominant_qname: Option<String>,
    pub pattern: Option<DnsIdPattern>,
    pub attributed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttributionReport {
    pub rows: Vec<Attribution>,
    pub attributed: usize,
    pub share: f64,
}

/// Attributes an event when its dominant name matches the fingerprint and
/// its ID pattern class is admitted. Events too short to classify are never
/// attributed.
pub fn attribute_entity(events: &[AttackEvent], fp: &EntityFingerprint, min_segment: usize) -> AttributionReport {
    let rows: Vec<Attribution> = events
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let dominant = e.dominant_qname().map(str::to_string);
            let pattern = classify_dnsid_pattern(e, min_segment).ok();
            let attributed = dominant.as_deref().is_some_and(|q| fp.matches_name(q))
                && pattern.is_some_and(|p| fp.admits(p.class));
            Attribution {
                event_index: i,
                victim_ip: e.victim_ip,
                day: e.day,
                dominant_qname: dominant,
                pattern,
                attributed,
            }
        })
        .collect();
    let attributed = rows.iter().filter(|r| r.attributed).count();
    AttributionReport {
        share: if rows.is_empty() { 0.0 } else { attributed as f64 / rows.len() as f64 },
        rows,
        attributed,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NameSpan {
    pub qname: String,
    pub first_day: i64,
    pub last_day: i64,
    pub events: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Transition {
    pub day: i64,
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Overlap {
    pub a: String,
    pub b: String,
    pub first_day: i64,
    pub last_day: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NameTimeline {
    pub spans: Vec<NameSpan>,
    /// Days of the daily dominant name.
    pub daily_dominant: Vec<(i64, String)>,
    pub transitions: Vec<Transition>,
    pub overlaps: Vec<Overlap>,
    /// Every transition moves to a lexicographically larger name.
    pub lexicographic: bool,
    /// Daily majority parity, +1 even / -1 odd / 0 undecided, from the first
    /// to the last event day.
    pub daily_parity: Vec<(i64, i8)>,
    /// Number of days after which the daily parity flips.
    pub parity_alternation_days: Option<usize>,
}

/// Builds the dominant-name timeline over `events`, considering only names in
/// `names` (all names when empty).
pub fn build_name_timeline(events: &[AttackEvent], names: &BTreeSet<String>) -> NameTimeline {
    let mut spans: BTreeMap<String, NameSpan> = BTreeMap::new();
    let mut per_day: BTreeMap<i64, BTreeMap<String, usize>> = BTreeMap::new();
    let mut parity: BTreeMap<i64, (u64, u64)> = BTreeMap::new();

    for e in events {
        let dom = e
            .qname_counts
            .iter()
            .filter(|(q, _)| names.is_empty() || names.contains(*q))
            .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
            .map(|(q, _)| q.clone());
        let Some(dom) = dom else { continue };
        let span = spans.entry(dom.clone()).or_insert(NameSpan {
            qname: dom.clone(),
            first_day: e.day,
            last_day: e.day,
            events: 0,
        });
        span.first_day = span.first_day.min(e.day);
        span.last_day = span.last_day.max(e.day);
        span.events += 1;
        *per_day.entry(e.day).or_default().entry(dom).or_default() += 1;
        let p = parity.entry(e.day).or_default();
        for id in &e.dns_ids {
            if id % 2 == 0 {
                p.0 += 1;
            } else {
                p.1 += 1;
            }
        }
    }

    let daily_dominant: Vec<(i64, String)> = per_day
        .iter()
        .map(|(d, counts)| {
            let best = counts
                .iter()
                .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
                .map(|(q, _)| q.clone())
                .expect("day entries are non-empty");
            (*d, best)
        })
        .collect();
    let transitions: Vec<Transition> = daily_dominant
        .windows(2)
        .filter(|w| w[0].1 != w[1].1)
        .map(|w| Transition {
            day: w[1].0,
            from: w[0].1.clone(),
            to: w[1].1.clone(),
        })
        .collect();
    let lexicographic = transitions.iter().all(|t| t.from < t.to);

    let span_list: Vec<NameSpan> = spans.into_values().collect();
    let mut overlaps = Vec::new();
    for (i, a) in span_list.iter().enumerate() {
        for b in &span_list[i + 1..] {
            let first = a.first_day.max(b.first_day);
            let last = a.last_day.min(b.last_day);
            if first <= last {
                overlaps.push(Overlap {
                    a: a.qname.clone(),
                    b: b.qname.clone(),
                    first_day: first,
                    last_day: last,
                });
            }
        }
    }

    let daily_parity: Vec<(i64, i8)> = match (parity.keys().next(), parity.keys().next_back()) {
        (Some(&lo), Some(&hi)) => (lo..=hi)
            .map(|d| {
                let (even, odd) = parity.get(&d).copied().unwrap_or_default();
                (d, (even > odd) as i8 - (odd > even) as i8)
            })
            .collect(),
        _ => Vec::new(),
    };
    let seq: Vec<i8> = daily_parity.iter().map(|p| p.1).collect();

    NameTimeline {
        spans: span_list,
        daily_dominant,
        transitions,
        overlaps,
        lexicographic,
        daily_parity,
        parity_alternation_days: alternation_period(&seq),
    }
}

/// Lag of the strongest anti-correlation of a ±1 sequence (undecided days are
/// 0), i.e. the shift that maps odd-majority days onto even-majority days.
/// `None` unless the trough is below -0.5.
pub fn alternation_period(seq: &[i8]) -> Option<usize> {
    let n = seq.len();
    let mut best: Option<(usize, f64)> = None;
    for lag in 1..=n / 2 {
        let mut sum = 0.0;
        let mut pairs = 0usize;
        for t in 0..n - lag {
            if seq[t] != 0 && seq[t + lag] != 0 {
                sum += (seq[t] * seq[t + lag]) as f64;
                pairs += 1;
            }
        }
        if pairs == 0 {
            continue;
        }
        let r = sum / pairs as f64;
        if best.is_none_or(|(_, b)| r < b) {
            best = Some((lag, r));
        }
    }
    best.filter(|(_, r)| *r < -0.5).map(|(lag, _)| lag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::RequestHeader;
    use proptest::prelude::*;

    pub(crate) fn event(day: i64, qname: &str, ids: &[u16]) -> AttackEvent {
        AttackEvent {
            victim_ip: "10.0.0.1".parse().unwrap(),
            day,
            packet_count: ids.len() as u64,
            misused_count: ids.len() as u64,
            est_original_packets: 0,
            est_misused_originals: 0,
            share: 1.0,
            share_excl_root: 1.0,
            first_ts: 0.0,
            last_ts: 0.0,
            duration_s: 0.0,
            qname_counts: BTreeMap::from([(qname.to_string(), ids.len().max(1) as u64)]),
            request_count: ids.len() as u64,
            response_count: 0,
            amplifier_set: BTreeSet::new(),
            dns_ids: ids.to_vec(),
            request_headers: ids
                .iter()
                .enumerate()
                .map(|(i, id)| RequestHeader {
                    ip_id: i as u16,
                    src_port: 1024 + i as u16,
                    dns_id: *id,
                })
                .collect(),
            ip_ttl_counts: BTreeMap::new(),
            nscount_counts: BTreeMap::new(),
            ingress_as_counts: BTreeMap::new(),
            victim_as: None,
            intensity_decile: None,
        }
    }

    #[test]
    fn cardinality() {
        let ids: Vec<u16> = (0..100).map(|i| (i % 4) * 2).collect();
        let ev = event(0, "a.gov.", &ids);
        let ipid = field_cardinality_profile(&ev, HeaderField::IpId).unwrap();
        assert_eq!((ipid.ratio, ipid.low_entropy), (1.0, false));
        let dns = field_cardinality_profile(&ev, HeaderField::DnsId).unwrap();
        assert_eq!(dns.unique_count, 4);
        assert_eq!(dns.ratio, 0.04);
        assert!(dns.low_entropy);

        let mut empty = ev.clone();
        empty.request_headers.clear();
        let err = field_cardinality_profile(&empty, HeaderField::DnsId).unwrap_err();
        assert!(err.to_string().contains("no pre-reflection packets"));
    }

    #[test]
    fn parity_classes() {
        assert_eq!(classify_ids(&[2, 4, 6, 8], 3).unwrap().class, IdClass::PureEven);
        assert_eq!(classify_ids(&[1, 3, 9], 3).unwrap().class, IdClass::PureOdd);
        let p = classify_ids(&[1, 3, 5, 7, 9, 2, 4, 6, 8, 10], 3).unwrap();
        assert_eq!((p.class, p.change_point), (IdClass::Phased, Some(5)));
        // second phase too short
        assert_eq!(classify_ids(&[1, 3, 5, 7, 2, 4], 3).unwrap().class, IdClass::Mixed);
        assert_eq!(classify_ids(&[1, 2, 3, 4], 1).unwrap().class, IdClass::Mixed);
        assert!(classify_ids(&[1], 3).is_err());
    }

    #[test]
    fn attribution() {
        let fp = EntityFingerprint {
            name_suffixes: vec![".gov.".into()],
            id_patterns: vec![IdRequirement::Pure, IdRequirement::Phased],
        };
        let events = vec![
            event(0, "a.gov.", &[1, 3, 5, 7]),
            event(0, "a.gov.", &[1, 2, 3, 4]),
            event(0, "a.com.", &[2, 4]),
            event(0, "gov.", &[2, 4]),
        ];
        let r = attribute_entity(&events, &fp, 3);
        let flags: Vec<bool> = r.rows.iter().map(|a| a.attributed).collect();
        assert_eq!(flags, vec![true, false, false, true]);
        assert_eq!(r.share, 0.5);
        assert!(EntityFingerprint { name_suffixes: vec![], id_patterns: vec![IdRequirement::Pure] }
            .validate()
            .is_err());
    }

    #[test]
    fn fingerprint_file_format() {
        let fp: EntityFingerprint =
            serde_json::from_str(r#"{"name_suffixes":[".gov."],"id_patterns":["pure","phased"]}"#).unwrap();
        assert_eq!(fp.id_patterns, vec![IdRequirement::Pure, IdRequirement::Phased]);
    }

    #[test]
    fn timeline_transition() {
        let mut evs: Vec<AttackEvent> = (1..=5).map(|d| event(d, "a.gov.", &[2, 4])).collect();
        evs.extend((6..=9).map(|d| event(d, "b.gov.", &[2, 4])));
        let tl = build_name_timeline(&evs, &BTreeSet::new());
        assert_eq!(tl.transitions.len(), 1);
        assert_eq!(tl.transitions[0].day, 6);
        assert!(tl.lexicographic);
        assert!(tl.overlaps.is_empty());

        let mut rev = evs.clone();
        rev.reverse();
        assert_eq!(build_name_timeline(&rev, &BTreeSet::new()), tl);
        assert!(build_name_timeline(&[], &BTreeSet::new()).spans.is_empty());
    }

    #[test]
    fn concurrent_names_overlap() {
        let mut evs: Vec<AttackEvent> = (0..14).map(|d| event(d, "a.gov.", &[2])).collect();
        evs.extend((7..21).map(|d| event(d, "b.gov.", &[2])));
        let tl = build_name_timeline(&evs, &BTreeSet::new());
        assert_eq!(tl.overlaps.len(), 1);
        assert_eq!((tl.overlaps[0].first_day, tl.overlaps[0].last_day), (7, 13));
    }

    #[test]
    fn alternation() {
        let two_day: Vec<i8> = (0..20).map(|d| if (d / 2) % 2 == 0 { 1 } else { -1 }).collect();
        assert_eq!(alternation_period(&two_day), Some(2));
        let daily: Vec<i8> = (0..20).map(|d| if d % 2 == 0 { 1 } else { -1 }).collect();
        assert_eq!(alternation_period(&daily), Some(1));
        assert_eq!(alternation_period(&[1; 10]), None);
    }

    proptest! {
        #[test]
        fn parity_relabeling_swaps_pure_classes(ids in proptest::collection::vec(any::<u16>(), 2..40)) {
            let flipped: Vec<u16> = ids.iter().map(|i| i ^ 1).collect();
            let a = classify_ids(&ids, 3).unwrap();
            let b = classify_ids(&flipped, 3).unwrap();
            let swapped = match a.class {
                IdClass::PureOdd => IdClass::PureEven,
                IdClass::PureEven => IdClass::PureOdd,
                c => c,
            };
            prop_assert_eq!(b.class, swapped);
            prop_assert_eq!(b.change_point, a.change_point);
        }

        #[test]
        fn adding_same_parity_ids_keeps_class(
            first in proptest::collection::vec(any::<u16>(), 3..10),
            second in proptest::collection::vec(any::<u16>(), 3..10),
            extra in proptest::collection::vec(any::<u16>(), 0..10),
        ) {
            let a: Vec<u16> = first.iter().map(|i| i | 1).collect();
            let b: Vec<u16> = second.iter().map(|i| i & !1).collect();
            let base: Vec<u16> = a.iter().chain(&b).copied().collect();
            let grown: Vec<u16> = base.iter().copied().chain(extra.iter().map(|i| i & !1)).collect();
            prop_assert_eq!(classify_ids(&base, 3).unwrap().class, IdClass::Phased);
            prop_assert_eq!(classify_ids(&grown, 3).unwrap().class, IdClass::Phased);
        }
    }
}
