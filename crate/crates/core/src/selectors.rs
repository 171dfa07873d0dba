//! Misused-name selection.
//!
//! Three independent selectors rank query names: by maximum response size,
//! by `ANY` query volume, and by traffic towards victims known from honeypot
//! data. The list size at which the three rankings agree best (mean pairwise
//! Jaccard index of their top-k sets) fixes the per-selector size `k_star`;
//! the final list is the union of the three top-`k_star` sets.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::net::IpAddr;

use serde::{Deserialize, Serialize};

use crate::dnsname;
use crate::error::{Error, Result};
use crate::honeypot::HoneypotEvent;
use crate::trace::{PacketRecord, QTYPE_A, QTYPE_AAAA, QTYPE_ANY};

pub const DEFAULT_K_MAX: usize = 64;
pub const DEFAULT_SLACK_SECONDS: f64 = 300.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectorId {
    MaxSize,
    AnyVolume,
    GroundTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorRanking {
    pub selector: SelectorId,
    /// Names with scores, highest score first, ties in lexicographic order.
    pub ranked: Vec<(String, u64)>,
}

impl SelectorRanking {
    fn from_scores(selector: SelectorId, scores: HashMap<&str, u64>, k: usize) -> Self {
        let mut ranked: Vec<(String, u64)> = scores
            .into_iter()
            .map(|(n, s)| (n.to_string(), s))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(k);
        SelectorRanking { selector, ranked }
    }

    pub fn is_empty(&self) -> bool {
        self.ranked.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.ranked.iter().map(|(n, _)| n.as_str())
    }

    /// The first `k` names (fewer when the ranking is exhausted).
    pub fn top(&self, k: usize) -> BTreeSet<&str> {
        self.names().take(k).collect()
    }
}

/// Ranks names by the largest DNS payload seen in a response.
pub fn selector_max_size(records: &[PacketRecord], k: usize) -> SelectorRanking {
    let mut scores: HashMap<&str, u64> = HashMap::new();
    for r in records.iter().filter(|r| r.is_response) {
        let e = scores.entry(r.qname.as_str()).or_default();
        *e = (*e).max(r.dns_payload_len() as u64);
    }
    SelectorRanking::from_scores(SelectorId::MaxSize, scores, k)
}

/// Ranks names by the number of packets with qtype `ANY`.
pub fn selector_any_volume(records: &[PacketRecord], k: usize) -> SelectorRanking {
    let mut scores: HashMap<&str, u64> = HashMap::new();
    for r in records.iter().filter(|r| r.qtype == QTYPE_ANY) {
        *scores.entry(r.qname.as_str()).or_default() += 1;
    }
    SelectorRanking::from_scores(SelectorId::AnyVolume, scores, k)
}

/// Per name, the fraction of its `A`/`AAAA`/`ANY` packets that are `ANY`.
pub fn any_share(records: &[PacketRecord]) -> BTreeMap<String, f64> {
    let mut counts: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    for r in records {
        if matches!(r.qtype, QTYPE_A | QTYPE_AAAA | QTYPE_ANY) {
            let e = counts.entry(r.qname.as_str()).or_default();
            e.1 += 1;
            if r.qtype == QTYPE_ANY {
                e.0 += 1;
            }
        }
    }
    counts
        .into_iter()
        .map(|(n, (any, all))| (n.to_string(), any as f64 / all as f64))
        .collect()
}

#[derive(Debug, Clone)]
pub struct GroundTruthSelection {
    pub ranking: SelectorRanking,
    /// Trace records matched to a honeypot-observed victim window.
    pub corpus: Vec<PacketRecord>,
}

/// Ranks names by packet count over traffic whose client is a honeypot
/// victim inside its attack window widened by `slack_seconds`.
pub fn selector_ground_truth(
    records: &[PacketRecord],
    honeypot_events: &[HoneypotEvent],
    k: usize,
    slack_seconds: f64,
) -> GroundTruthSelection {
    let mut windows: HashMap<IpAddr, Vec<(f64, f64)>> = HashMap::new();
    for ev in honeypot_events {
        windows
            .entry(ev.victim_ip)
            .or_default()
            .push((ev.start - slack_seconds, ev.end + slack_seconds));
    }
    let corpus: Vec<PacketRecord> = records
        .iter()
        .filter(|r| {
            windows
                .get(&r.client_ip())
                .is_some_and(|ws| ws.iter().any(|(s, e)| r.ts >= *s && r.ts <= *e))
        })
        .cloned()
        .collect();
    let mut scores: HashMap<&str, u64> = HashMap::new();
    for r in &corpus {
        *scores.entry(r.qname.as_str()).or_default() += 1;
    }
    let ranking = SelectorRanking::from_scores(SelectorId::GroundTruth, scores, k);
    GroundTruthSelection { ranking, corpus }
}

/// `|a ∩ b| / |a ∪ b|`, with two empty sets defined as identical.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct MisusedNameList {
    pub k_star: usize,
    /// Each name with the selectors whose top-`k_star` set contains it.
    pub names: BTreeMap<String, BTreeSet<SelectorId>>,
    /// Mean pairwise Jaccard index for k = 1..=k_max (index k-1).
    pub consensus: Vec<f64>,
    /// Selectors that produced no names and were left out of the consensus.
    pub missing_selectors: Vec<SelectorId>,
}

impl MisusedNameList {
    /// A list with fixed names and no selector provenance beyond `selector`.
    pub fn from_names<I, S>(names: I, selector: SelectorId) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let names: BTreeMap<_, _> = names
            .into_iter()
            .map(|n| (dnsname::normalize(n.as_ref()), BTreeSet::from([selector])))
            .collect();
        MisusedNameList {
            k_star: names.len(),
            names,
            consensus: Vec::new(),
            missing_selectors: Vec::new(),
        }
    }

    pub fn contains(&self, qname: &str) -> bool {
        self.names.contains_key(qname)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.names.keys().map(String::as_str)
    }

    pub fn to_json(&self) -> String {
        let file = NameListFile {
            k_star: self.k_star,
            names: self
                .names
                .iter()
                .map(|(q, s)| NameEntry {
                    qname: q.clone(),
                    selectors: s.iter().copied().collect(),
                })
                .collect(),
            consensus: self.consensus.clone(),
            missing_selectors: self.missing_selectors.clone(),
        };
        serde_json::to_string_pretty(&file).expect("name list serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: NameListFile = serde_json::from_str(s)?;
        let mut names = BTreeMap::new();
        for e in file.names {
            if e.selectors.is_empty() {
                return Err(Error::input(format!("name {} has no selector provenance", e.qname)));
            }
            names.insert(dnsname::normalize(&e.qname), e.selectors.into_iter().collect());
        }
        Ok(MisusedNameList {
            k_star: file.k_star,
            names,
            consensus: file.consensus,
            missing_selectors: file.missing_selectors,
        })
    }

    /// One name per line.
    pub fn to_plain(&self) -> String {
        self.iter().map(|n| format!("{n}\n")).collect()
    }
}

#[derive(Serialize, Deserialize)]
struct NameListFile {
    k_star: usize,
    names: Vec<NameEntry>,
    #[serde(default)]
    consensus: Vec<f64>,
    #[serde(default)]
    missing_selectors: Vec<SelectorId>,
}

#[derive(Serialize, Deserialize)]
struct NameEntry {
    qname: String,
    selectors: Vec<SelectorId>,
}

/// Picks `k_star` = argmax over k of the mean pairwise Jaccard index of the
/// selectors' top-k sets (smallest k on ties) and merges the top-`k_star`
/// sets. Empty rankings are excluded and reported in `missing_selectors`.
pub fn consensus_merge(
    r1: &SelectorRanking,
    r2: &SelectorRanking,
    r3: &SelectorRanking,
    k_max: usize,
) -> MisusedNameList {
    let all = [r1, r2, r3];
    let present: Vec<&SelectorRanking> = all.iter().copied().filter(|r| !r.is_empty()).collect();
    let missing_selectors = all
        .iter()
        .filter(|r| r.is_empty())
        .map(|r| r.selector)
        .collect();

    let mut consensus = Vec::with_capacity(k_max);
    let mut k_star = 0;
    if present.len() >= 2 {
        let mut best = f64::NEG_INFINITY;
        for k in 1..=k_max {
            let tops: Vec<BTreeSet<&str>> = present.iter().map(|r| r.top(k)).collect();
            let mut sum = 0.0;
            let mut pairs = 0;
            for i in 0..tops.len() {
                for j in i + 1..tops.len() {
                    sum += jaccard(&tops[i], &tops[j]);
                    pairs += 1;
                }
            }
            let m = sum / pairs as f64;
            consensus.push(m);
            if m > best {
                best = m;
                k_star = k;
            }
        }
    } else if let Some(only) = present.first() {
        k_star = only.ranked.len().min(k_max);
    }

    let mut names: BTreeMap<String, BTreeSet<SelectorId>> = BTreeMap::new();
    for r in &present {
        for n in r.names().take(k_star) {
            names.entry(n.to_string()).or_default().insert(r.selector);
        }
    }
    MisusedNameList {
        k_star,
        names,
        consensus,
        missing_selectors,
    }
}

/// One row of the per-TLD breakdown of misused names.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TldRow {
    pub tld: String,
    pub names: usize,
    /// Share of all misused-name packets, in percent.
    pub packet_pct: f64,
    pub attacks: usize,
    pub max_size: Option<u32>,
}

/// Per-TLD counts of misused names, their traffic share, the number of
/// attacks using them and the maximum observed response payload.
pub fn tld_report(
    names: &MisusedNameList,
    records: &[PacketRecord],
    attack_qnames: &[BTreeSet<String>],
) -> Vec<TldRow> {
    let mut rows: BTreeMap<String, TldRow> = BTreeMap::new();
    for n in names.iter() {
        let tld = dnsname::tld(n);
        rows.entry(tld.clone())
            .or_insert_with(|| TldRow {
                tld,
                names: 0,
                packet_pct: 0.0,
                attacks: 0,
                max_size: None,
            })
            .names += 1;
    }
    let mut packets: BTreeMap<String, u64> = BTreeMap::new();
    let mut total = 0u64;
    for r in records.iter().filter(|r| names.contains(&r.qname)) {
        let tld = dnsname::tld(&r.qname);
        *packets.entry(tld.clone()).or_default() += 1;
        total += 1;
        if r.is_response {
            let row = rows.get_mut(&tld).expect("tld of listed name");
            row.max_size = row.max_size.max(Some(r.dns_payload_len()));
        }
    }
    for (tld, n) in packets {
        rows.get_mut(&tld).expect("tld of listed name").packet_pct = 100.0 * n as f64 / total as f64;
    }
    for qnames in attack_qnames {
        let tlds: BTreeSet<String> = qnames
            .iter()
            .filter(|q| names.contains(q))
            .map(|q| dnsname::tld(q))
            .collect();
        for t in tlds {
            if let Some(row) = rows.get_mut(&t) {
                row.attacks += 1;
            }
        }
    }
    rows.into_values().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::fixtures::{request, response};
    use proptest::prelude::*;

    fn ranking(selector: SelectorId, names: &[&str]) -> SelectorRanking {
        let n = names.len() as u64;
        SelectorRanking {
            selector,
            ranked: names
                .iter()
                .enumerate()
                .map(|(i, s)| (s.to_string(), n - i as u64))
                .collect(),
        }
    }

    #[test]
    fn max_size_ranks_by_largest_response() {
        let recs = vec![
            response(1.0, "10.0.0.1", "192.0.2.1", "a.", QTYPE_ANY, 10_270),
            response(2.0, "10.0.0.1", "192.0.2.1", "b.", QTYPE_ANY, 8_069),
            response(3.0, "10.0.0.1", "192.0.2.1", "c.", QTYPE_ANY, 512),
            request(4.0, "10.0.0.1", "192.0.2.1", "c.", QTYPE_ANY),
        ];
        let r = selector_max_size(&recs, 2);
        assert_eq!(r.ranked, vec![("a.".into(), 10_270), ("b.".into(), 8_069)]);
    }

    #[test]
    fn ties_are_lexicographic() {
        let recs = vec![
            response(1.0, "10.0.0.1", "192.0.2.1", "zz.", QTYPE_ANY, 500),
            response(2.0, "10.0.0.1", "192.0.2.1", "aa.", QTYPE_ANY, 500),
        ];
        let names: Vec<_> = selector_max_size(&recs, 5).names().map(String::from).collect();
        assert_eq!(names, vec!["aa.", "zz."]);
    }

    #[test]
    fn no_responses_gives_empty_ranking() {
        let recs = vec![request(1.0, "10.0.0.1", "192.0.2.1", "a.", QTYPE_ANY)];
        assert!(selector_max_size(&recs, 3).is_empty());
    }

    #[test]
    fn any_volume_and_share() {
        let mut recs = Vec::new();
        for i in 0..100 {
            recs.push(request(i as f64, "10.0.0.1", "192.0.2.1", "x.", QTYPE_ANY));
        }
        for i in 0..50 {
            recs.push(request(i as f64, "10.0.0.1", "192.0.2.1", "y.", QTYPE_ANY));
        }
        let r = selector_any_volume(&recs, 1);
        assert_eq!(r.ranked, vec![("x.".into(), 100)]);

        let mut root = vec![request(0.0, "10.0.0.1", "192.0.2.1", ".", QTYPE_ANY); 97];
        root.extend(vec![request(0.0, "10.0.0.1", "192.0.2.1", ".", QTYPE_A); 3]);
        root.push(request(0.0, "10.0.0.1", "192.0.2.1", ".", 2));
        assert!((any_share(&root)["."] - 0.97).abs() < 1e-12);

        let none = vec![request(0.0, "10.0.0.1", "192.0.2.1", "a.", QTYPE_A)];
        assert!(selector_any_volume(&none, 3).is_empty());
    }

    fn hp_event(victim: &str, start: f64, end: f64) -> HoneypotEvent {
        HoneypotEvent {
            victim_ip: victim.parse().unwrap(),
            start,
            end,
            request_count: 5,
            sensor_ids: BTreeSet::from([1]),
        }
    }

    #[test]
    fn ground_truth_selector_restricts_to_victim_windows() {
        let mut recs = Vec::new();
        for i in 0..5 {
            recs.push(request(1000.0 + i as f64, "10.9.9.9", "192.0.2.1", "x.", QTYPE_ANY));
        }
        recs.push(response(1001.0, "10.9.9.9", "192.0.2.1", "y.", QTYPE_ANY, 3000));
        // outside the widened window
        recs.push(request(5000.0, "10.9.9.9", "192.0.2.1", "z.", QTYPE_ANY));
        // other client
        recs.push(request(1000.0, "10.0.0.1", "192.0.2.1", "w.", QTYPE_ANY));
        let gt = selector_ground_truth(&recs, &[hp_event("10.9.9.9", 1100.0, 1200.0)], 1, 300.0);
        assert_eq!(gt.ranking.ranked, vec![("x.".into(), 5)]);
        assert_eq!(gt.corpus.len(), 6);

        assert!(selector_ground_truth(&recs, &[], 3, 300.0).ranking.is_empty());
        let none = selector_ground_truth(&recs, &[hp_event("10.9.9.9", 9e6, 9e6 + 10.0)], 3, 300.0);
        assert!(none.ranking.is_empty());
    }

    #[test]
    fn jaccard_basics() {
        let a: BTreeSet<_> = ["a", "b", "c"].into();
        let b: BTreeSet<_> = ["b", "c", "d"].into();
        let c: BTreeSet<_> = ["x"].into();
        assert_eq!(jaccard(&a, &b), 0.5);
        assert_eq!(jaccard(&a, &a), 1.0);
        assert_eq!(jaccard(&a, &c), 0.0);
        assert_eq!(jaccard::<&str>(&BTreeSet::new(), &BTreeSet::new()), 1.0);
    }

    #[test]
    fn identical_rankings_pick_smallest_k() {
        let names = ["a.", "b.", "c.", "d."];
        let r1 = ranking(SelectorId::MaxSize, &names);
        let r2 = ranking(SelectorId::AnyVolume, &names);
        let r3 = ranking(SelectorId::GroundTruth, &names);
        let m = consensus_merge(&r1, &r2, &r3, 10);
        assert_eq!(m.k_star, 1);
        assert!(m.consensus.iter().all(|&j| j == 1.0));
        assert_eq!(m.names.len(), 1);
        assert_eq!(m.names["a."].len(), 3);
    }

    #[test]
    fn third_selector_disjoint() {
        let r1 = ranking(SelectorId::MaxSize, &["a.", "b.", "c."]);
        let r2 = ranking(SelectorId::AnyVolume, &["a.", "b.", "c."]);
        let r3 = ranking(SelectorId::GroundTruth, &["x.", "y.", "z."]);
        let m = consensus_merge(&r1, &r2, &r3, 3);
        assert_eq!(m.k_star, 1);
        assert_eq!(m.names.len(), 2 * m.k_star);
        assert_eq!(
            m.names["a."],
            BTreeSet::from([SelectorId::MaxSize, SelectorId::AnyVolume])
        );
        assert_eq!(m.names["x."], BTreeSet::from([SelectorId::GroundTruth]));
    }

    #[test]
    fn empty_ranking_is_flagged() {
        let r1 = ranking(SelectorId::MaxSize, &["a.", "b."]);
        let r2 = ranking(SelectorId::AnyVolume, &["b.", "a."]);
        let r3 = ranking(SelectorId::GroundTruth, &[]);
        let m = consensus_merge(&r1, &r2, &r3, 5);
        assert_eq!(m.missing_selectors, vec![SelectorId::GroundTruth]);
        assert_eq!(m.k_star, 2);
        assert_eq!(m.len(), 2);
    }

    #[test]
    fn name_list_file_roundtrip() {
        let r1 = ranking(SelectorId::MaxSize, &["a.", "b."]);
        let r2 = ranking(SelectorId::AnyVolume, &["b.", "c."]);
        let r3 = ranking(SelectorId::GroundTruth, &["a.", "c."]);
        let m = consensus_merge(&r1, &r2, &r3, 2);
        let back = MisusedNameList::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        assert_eq!(m.to_plain().lines().count(), m.len());
    }

    #[test]
    fn tld_breakdown() {
        let names = MisusedNameList::from_names(["a.gov.", "b.gov.", "."], SelectorId::MaxSize);
        let recs = vec![
            response(1.0, "10.0.0.1", "192.0.2.1", "a.gov.", QTYPE_ANY, 8069),
            request(1.0, "10.0.0.1", "192.0.2.1", "a.gov.", QTYPE_ANY),
            request(1.0, "10.0.0.1", "192.0.2.1", ".", QTYPE_ANY),
            request(1.0, "10.0.0.1", "192.0.2.1", "benign.com.", QTYPE_A),
        ];
        let attacks = vec![BTreeSet::from(["a.gov.".to_string(), "b.gov.".to_string()])];
        let rows = tld_report(&names, &recs, &attacks);
        assert_eq!(rows.len(), 2);
        let gov = rows.iter().find(|r| r.tld == "gov.").unwrap();
        assert_eq!(gov.names, 2);
        assert_eq!(gov.attacks, 1);
        assert_eq!(gov.max_size, Some(8069));
        assert!((gov.packet_pct - 200.0 / 3.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn jaccard_distance_is_a_metric(
            a in proptest::collection::btree_set(0u8..20, 0..12),
            b in proptest::collection::btree_set(0u8..20, 0..12),
            c in proptest::collection::btree_set(0u8..20, 0..12),
        ) {
            prop_assert_eq!(jaccard(&a, &b), jaccard(&b, &a));
            prop_assert_eq!(jaccard(&a, &a), 1.0);
            let d = |x: &BTreeSet<u8>, y: &BTreeSet<u8>| 1.0 - jaccard(x, y);
            prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12);
        }

        #[test]
        fn union_contains_each_top_k_star(
            seeds in proptest::collection::vec(proptest::collection::vec(0u8..30, 1..25), 3),
        ) {
            let mk = |sel, v: &Vec<u8>| {
                let mut seen = BTreeSet::new();
                let names: Vec<String> = v.iter().filter(|x| seen.insert(**x)).map(|x| format!("n{x}.")).collect();
                let refs: Vec<&str> = names.iter().map(String::as_str).collect();
                ranking(sel, &refs)
            };
            let r1 = mk(SelectorId::MaxSize, &seeds[0]);
            let r2 = mk(SelectorId::AnyVolume, &seeds[1]);
            let r3 = mk(SelectorId::GroundTruth, &seeds[2]);
            let m = consensus_merge(&r1, &r2, &r3, 16);
            for r in [&r1, &r2, &r3] {
                for n in r.top(m.k_star) {
                    prop_assert!(m.names[n].contains(&r.selector));
                }
            }
            prop_assert!(m.len() >= m.k_star);
        }
    }
}
