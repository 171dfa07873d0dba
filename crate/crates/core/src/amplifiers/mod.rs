//! Amplifier sets of attacks: similarity clustering, stable sets, churn,
//! recency against external scan history and role classification.

mod dbscan;

pub use dbscan::{dbscan, ClusterResult, DistanceMatrix};

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::net::IpAddr;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::detect::AttackEvent;
use crate::error::{Error, Result};
use crate::selectors::jaccard;

pub const DEFAULT_EPS: f64 = 0.6;
pub const DEFAULT_MIN_PTS: usize = 5;
pub const DEFAULT_MIN_ATTACKS: usize = 5;
pub const DEFAULT_MIN_AMPS: usize = 5;

pub type AmplifierSet = BTreeSet<IpAddr>;

/// Per event, the servers that answered the victim or were sent requests
/// spoofed with its address.
pub fn amplifier_sets(events: &[AttackEvent]) -> Vec<AmplifierSet> {
    events.iter().map(|e| e.amplifier_set.clone()).collect()
}

pub fn jaccard_distance(a: &AmplifierSet, b: &AmplifierSet) -> f64 {
    1.0 - jaccard(a, b)
}

pub fn jaccard_distance_matrix(sets: &[AmplifierSet]) -> DistanceMatrix {
    DistanceMatrix::from_fn(sets.len(), |i, j| jaccard_distance(&sets[i], &sets[j]))
}

/// CSV export of the matrix, one row per event, for external plotting.
pub fn write_matrix_csv<W: Write>(mut out: W, m: &DistanceMatrix) -> Result<()> {
    for i in 0..m.len() {
        let row: Vec<String> = m.row(i).iter().map(|d| format!("{d:.6}")).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn dbscan_cluster(matrix: &DistanceMatrix, eps: f64, min_pts: usize) -> Result<ClusterResult> {
    dbscan(matrix, eps, min_pts)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StableSet {
    pub cluster: usize,
    /// Member event indices in time order.
    pub members: Vec<usize>,
    /// Amplifiers shared by every member.
    pub core: AmplifierSet,
    pub first_day: i64,
    pub last_day: i64,
    /// Days covered, inclusive.
    pub span_days: i64,
    /// Jaccard distance between consecutive members.
    pub drift: Vec<f64>,
    pub is_static: bool,
}

/// Clusters with at least `min_attacks` members, each abusing at least
/// `min_amps` amplifiers.
pub fn stable_sets(
    events: &[AttackEvent],
    clusters: &ClusterResult,
    sets: &[AmplifierSet],
    min_attacks: usize,
    min_amps: usize,
) -> Vec<StableSet> {
    let mut out = Vec::new();
    for c in 0..clusters.n_clusters {
        let mut members = clusters.members(c);
        if members.len() < min_attacks || members.iter().any(|&i| sets[i].len() < min_amps) {
            continue;
        }
        members.sort_by(|&a, &b| {
            events[a]
                .first_ts
                .total_cmp(&events[b].first_ts)
                .then(a.cmp(&b))
        });
        let mut core = sets[members[0]].clone();
        for &m in &members[1..] {
            core = core.intersection(&sets[m]).copied().collect();
        }
        let drift: Vec<f64> = members
            .windows(2)
            .map(|w| jaccard_distance(&sets[w[0]], &sets[w[1]]))
            .collect();
        let first_day = members.iter().map(|&m| events[m].day).min().unwrap_or_default();
        let last_day = members.iter().map(|&m| events[m].day).max().unwrap_or_default();
        out.push(StableSet {
            cluster: c,
            is_static: drift.iter().all(|d| *d == 0.0),
            members,
            core,
            first_day,
            last_day,
            span_days: last_day - first_day + 1,
            drift,
        });
    }
    out
}

/// Union of the amplifier sets of all events per day.
pub fn daily_amplifier_sets(events: &[AttackEvent]) -> BTreeMap<i64, AmplifierSet> {
    let mut out: BTreeMap<i64, AmplifierSet> = BTreeMap::new();
    for e in events {
        out.entry(e.day).or_default().extend(e.amplifier_set.iter().copied());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChurnReport {
    /// |D_i ∩ D_{i+1}| / |D_i| for consecutive entries.
    pub overlaps: Vec<f64>,
    pub mean_overlap: f64,
    /// |D_first ∩ D_last| / |D_first|.
    pub first_last: f64,
}

/// Forward retention of amplifiers between consecutive days. Empty days are
/// skipped.
pub fn churn_metrics(daily_sets: &[AmplifierSet]) -> Result<ChurnReport> {
    let days: Vec<&AmplifierSet> = daily_sets.iter().filter(|d| !d.is_empty()).collect();
    if days.len() < 2 {
        return Err(Error::input("churn needs at least 2 non-empty days"));
    }
    let retained = |a: &AmplifierSet, b: &AmplifierSet| a.intersection(b).count() as f64 / a.len() as f64;
    let overlaps: Vec<f64> = days.windows(2).map(|w| retained(w[0], w[1])).collect();
    Ok(ChurnReport {
        mean_overlap: overlaps.iter().sum::<f64>() / overlaps.len() as f64,
        first_last: retained(days[0], days[days.len() - 1]),
        overlaps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DailyAmplifierChange {
    pub day: i64,
    pub new: usize,
    pub known: usize,
}

/// Per day, amplifiers abused for the first time versus ones already abused
/// on an earlier day.
pub fn new_vs_known(events: &[AttackEvent]) -> Vec<DailyAmplifierChange> {
    let mut seen = AmplifierSet::new();
    daily_amplifier_sets(events)
        .into_iter()
        .map(|(day, set)| {
            let known = set.iter().filter(|a| seen.contains(a)).count();
            let new = set.len() - known;
            seen.extend(set);
            DailyAmplifierChange { day, new, known }
        })
        .collect()
}

pub fn epoch_day_to_date(day: i64) -> NaiveDate {
    let epoch = NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid epoch");
    if day >= 0 {
        epoch.checked_add_days(Days::new(day as u64))
    } else {
        epoch.checked_sub_days(Days::new(day.unsigned_abs()))
    }
    .expect("day within chrono range")
}

pub fn date_to_epoch_day(date: NaiveDate) -> i64 {
    let epoch = NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid epoch");
    (date - epoch).num_days()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeenRow {
    pub ip: IpAddr,
    pub first_seen: NaiveDate,
    pub last_seen: NaiveDate,
}

/// Reads `ip,first_seen,last_seen` with ISO dates.
pub fn read_seen_table<R: Read>(reader: R) -> Result<BTreeMap<IpAddr, SeenRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = BTreeMap::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let field = |k: usize| row.get(k).unwrap_or_default();
        let ip: IpAddr = field(0)
            .parse()
            .map_err(|_| Error::config(format!("seen table row {line}: bad ip {:?}", field(0))))?;
        let date = |k: usize| {
            NaiveDate::parse_from_str(field(k), "%Y-%m-%d")
                .map_err(|_| Error::config(format!("seen table row {line}: bad date {:?}", field(k))))
        };
        let (first_seen, last_seen) = (date(1)?, date(2)?);
        if first_seen > last_seen {
            return Err(Error::config(format!("seen table row {line}: first_seen after last_seen")));
        }
        out.insert(ip, SeenRow { ip, first_seen, last_seen });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recency {
    KnownBeforeAbuse,
    PreDiscovery,
    Unseen,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecencyReport {
    pub per_amplifier: BTreeMap<IpAddr, Recency>,
    /// Amplifiers present in the table, as a fraction of all.
    pub coverage: f64,
    pub pre_discovery: usize,
}

/// First day each amplifier was abused.
pub fn first_abuse_days(events: &[AttackEvent]) -> BTreeMap<IpAddr, i64> {
    let mut out: BTreeMap<IpAddr, i64> = BTreeMap::new();
    for e in events {
        for a in &e.amplifier_set {
            let d = out.entry(*a).or_insert(e.day);
            *d = (*d).min(e.day);
        }
    }
    out
}

/// Compares first abuse with the first scan sighting of each amplifier.
pub fn recency_join(first_abuse: &BTreeMap<IpAddr, i64>, seen: &BTreeMap<IpAddr, SeenRow>) -> RecencyReport {
    let per_amplifier: BTreeMap<IpAddr, Recency> = first_abuse
        .iter()
        .map(|(ip, day)| {
            let r = match seen.get(ip) {
                None => Recency::Unseen,
                Some(row) if epoch_day_to_date(*day) < row.first_seen => Recency::PreDiscovery,
                Some(_) => Recency::KnownBeforeAbuse,
            };
            (*ip, r)
        })
        .collect();
    let covered = per_amplifier.values().filter(|r| **r != Recency::Unseen).count();
    RecencyReport {
        coverage: if per_amplifier.is_empty() {
            0.0
        } else {
            covered as f64 / per_amplifier.len() as f64
        },
        pre_discovery: per_amplifier.values().filter(|r| **r == Recency::PreDiscovery).count(),
        per_amplifier,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Authoritative,
    ResolverOrForwarder,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AmplifierInfo {
    pub ip: IpAddr,
    pub role: Role,
    pub first_seen: Option<NaiveDate>,
    pub last_seen: Option<NaiveDate>,
    pub attack_count: usize,
}

/// Reads `ip,ns_name`.
pub fn read_ns_table<R: Read>(reader: R) -> Result<BTreeMap<IpAddr, String>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = BTreeMap::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let raw = row.get(0).unwrap_or_default();
        let ip: IpAddr = raw
            .parse()
            .map_err(|_| Error::config(format!("ns table row {}: bad ip {raw:?}", i + 2)))?;
        out.insert(ip, crate::dnsname::normalize(row.get(1).unwrap_or_default()));
    }
    Ok(out)
}

/// Number of attacks each amplifier took part in.
pub fn attacks_per_amplifier(events: &[AttackEvent]) -> BTreeMap<IpAddr, usize> {
    let mut out = BTreeMap::new();
    for e in events {
        for a in &e.amplifier_set {
            *out.entry(*a).or_insert(0) += 1;
        }
    }
    out
}

/// Authoritative when listed as a nameserver address, otherwise a resolver
/// or forwarder; with no nameserver table nothing can be told apart.
pub fn classify_amplifier_role(
    attack_counts: &BTreeMap<IpAddr, usize>,
    ns_table: &BTreeMap<IpAddr, String>,
    seen: &BTreeMap<IpAddr, SeenRow>,
) -> Vec<AmplifierInfo> {
    attack_counts
        .iter()
        .map(|(ip, count)| AmplifierInfo {
            ip: *ip,
            role: if ns_table.is_empty() {
                Role::Unknown
            } else if ns_table.contains_key(ip) {
                Role::Authoritative
            } else {
                Role::ResolverOrForwarder
            },
            first_seen: seen.get(ip).map(|r| r.first_seen),
            last_seen: seen.get(ip).map(|r| r.last_seen),
            attack_count: *count,
        })
        .collect()
}

/// Role counts of the amplifiers used for each dominant name.
pub fn roles_by_qname(
    events: &[AttackEvent],
    infos: &[AmplifierInfo],
) -> BTreeMap<String, BTreeMap<Role, usize>> {
    let roles: BTreeMap<IpAddr, Role> = infos.iter().map(|i| (i.ip, i.role)).collect();
    let mut per_name: BTreeMap<String, AmplifierSet> = BTreeMap::new();
    for e in events {
        if let Some(q) = e.dominant_qname() {
            per_name.entry(q.to_string()).or_default().extend(e.amplifier_set.iter().copied());
        }
    }
    per_name
        .into_iter()
        .map(|(q, amps)| {
            let mut counts = BTreeMap::new();
            for a in amps {
                *counts.entry(roles.get(&a).copied().unwrap_or(Role::Unknown)).or_insert(0) += 1;
            }
            (q, counts)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(ips: &[u8]) -> AmplifierSet {
        ips.iter().map(|i| IpAddr::from([192, 0, 2, *i])).collect()
    }

    #[test]
    fn distances() {
        let a = set(&[1, 2, 3]);
        let m = jaccard_distance_matrix(&[a.clone(), a.clone(), set(&[2, 3, 4]), set(&[9])]);
        assert_eq!(m.get(0, 1), 0.0);
        assert_eq!(m.get(0, 2), 0.5);
        assert_eq!(m.get(0, 3), 1.0);
        let mut buf = Vec::new();
        write_matrix_csv(&mut buf, &m).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 4);
    }

    #[test]
    fn churn() {
        let a = set(&[1, 2, 3, 4]);
        assert_eq!(churn_metrics(&[a.clone(), a.clone()]).unwrap().mean_overlap, 1.0);
        let r = churn_metrics(&[a.clone(), set(&[5, 6])]).unwrap();
        assert_eq!((r.mean_overlap, r.first_last), (0.0, 0.0));
        let r = churn_metrics(&[a.clone(), set(&[1, 2, 9]), set(&[1, 7])]).unwrap();
        assert_eq!(r.overlaps, vec![0.5, 1.0 / 3.0]);
        assert_eq!(r.first_last, 0.25);
        assert!(churn_metrics(&[a]).is_err());
    }

    #[test]
    fn recency() {
        let ip = |s: &str| s.parse::<IpAddr>().unwrap();
        let d = |s: &str| NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap();
        let abuse = BTreeMap::from([
            (ip("192.0.2.1"), date_to_epoch_day(d("2020-01-10"))),
            (ip("192.0.2.2"), date_to_epoch_day(d("2020-01-10"))),
            (ip("192.0.2.3"), date_to_epoch_day(d("2020-01-10"))),
        ]);
        let table = read_seen_table(
            "ip,first_seen,last_seen\n192.0.2.1,2020-01-20,2020-03-01\n192.0.2.2,2019-05-01,2020-02-01\n".as_bytes(),
        )
        .unwrap();
        let r = recency_join(&abuse, &table);
        assert_eq!(r.per_amplifier[&ip("192.0.2.1")], Recency::PreDiscovery);
        assert_eq!(r.per_amplifier[&ip("192.0.2.2")], Recency::KnownBeforeAbuse);
        assert_eq!(r.per_amplifier[&ip("192.0.2.3")], Recency::Unseen);
        assert!((r.coverage - 2.0 / 3.0).abs() < 1e-12);

        let err = read_seen_table("ip,first_seen,last_seen\n192.0.2.1,2020-13-01,2020-03-01\n".as_bytes());
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn roles() {
        let ip = |s: &str| s.parse::<IpAddr>().unwrap();
        let counts = BTreeMap::from([(ip("192.0.2.1"), 3), (ip("192.0.2.2"), 1)]);
        let ns = read_ns_table("ip,ns_name\n192.0.2.1,ns1.example.gov\n".as_bytes()).unwrap();
        let infos = classify_amplifier_role(&counts, &ns, &BTreeMap::new());
        assert_eq!(infos[0].role, Role::Authoritative);
        assert_eq!(infos[1].role, Role::ResolverOrForwarder);
        let infos = classify_amplifier_role(&counts, &BTreeMap::new(), &BTreeMap::new());
        assert!(infos.iter().all(|i| i.role == Role::Unknown));
    }

    #[test]
    fn epoch_days() {
        let d = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        assert_eq!(date_to_epoch_day(d), 18_262);
        assert_eq!(epoch_day_to_date(18_262), d);
    }

    proptest! {
        #[test]
        fn matrix_is_a_metric(raw in proptest::collection::vec(proptest::collection::btree_set(0u8..16, 0..8), 1..10)) {
            let sets: Vec<AmplifierSet> = raw.iter().map(|s| s.iter().map(|i| IpAddr::from([10, 0, 0, *i])).collect()).collect();
            let m = jaccard_distance_matrix(&sets);
            let n = m.len();
            for i in 0..n {
                prop_assert_eq!(m.get(i, i), 0.0);
                for j in 0..n {
                    prop_assert_eq!(m.get(i, j), m.get(j, i));
                    prop_assert!((0.0..=1.0).contains(&m.get(i, j)));
                    for k in 0..n {
                        prop_assert!(m.get(i, k) <= m.get(i, j) + m.get(j, k) + 1e-12);
                    }
                }
            }
        }

        #[test]
        fn churn_overlaps_are_ratios(raw in proptest::collection::vec(proptest::collection::btree_set(0u8..30, 1..10), 2..8)) {
            let sets: Vec<AmplifierSet> = raw.iter().map(|s| s.iter().map(|i| IpAddr::from([10, 0, 0, *i])).collect()).collect();
            let r = churn_metrics(&sets).unwrap();
            prop_assert!(r.overlaps.iter().all(|o| (0.0..=1.0).contains(o)));
            prop_assert!((0.0..=1.0).contains(&r.first_last));
        }
    }
}
