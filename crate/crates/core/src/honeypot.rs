//! Honeypot request logs: attack inference, IXP↔honeypot overlap, paired
//! intensity comparison and sensor convergence.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};
use std::net::IpAddr;

use serde::{Deserialize, Serialize};

use crate::detect::AttackEvent;
use crate::error::Result;
use crate::stats;

pub const DEFAULT_MIN_REQUESTS: usize = 5;
pub const DEFAULT_MAX_GAP_S: f64 = 900.0;
pub const DEFAULT_MATCH_SLACK_S: f64 = 300.0;

/// One request recorded by a sensor; the source address is the spoofed victim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoneypotRequest {
    pub ts: f64,
    pub sensor_id: u32,
    pub victim_ip: IpAddr,
    pub qname: String,
    pub qtype: u32,
}

pub fn read_log<R: Read>(reader: R) -> Result<Vec<HoneypotRequest>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let mut req: HoneypotRequest = row?;
        req.qname = crate::dnsname::normalize(&req.qname);
        out.push(req);
    }
    Ok(out)
}

pub fn write_log<W: Write>(writer: W, log: &[HoneypotRequest]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in log {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoneypotEvent {
    pub victim_ip: IpAddr,
    pub start: f64,
    pub end: f64,
    pub request_count: usize,
    pub sensor_ids: BTreeSet<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InferenceConfig {
    pub min_requests: usize,
    pub max_gap_s: f64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            min_requests: DEFAULT_MIN_REQUESTS,
            max_gap_s: DEFAULT_MAX_GAP_S,
        }
    }
}

impl InferenceConfig {
    /// Stricter thresholds used by other honeypot platforms.
    pub fn amppot() -> Self {
        InferenceConfig {
            min_requests: 100,
            max_gap_s: 3600.0,
        }
    }
}

/// Segments each (sensor, victim) request stream at gaps longer than
/// `max_gap_s`, keeps segments with at least `min_requests` requests, then
/// merges overlapping segments of the same victim across sensors.
pub fn infer_honeypot_attacks(log: &[HoneypotRequest], cfg: InferenceConfig) -> Vec<HoneypotEvent> {
    let mut streams: BTreeMap<(u32, IpAddr), Vec<f64>> = BTreeMap::new();
    for r in log {
        streams.entry((r.sensor_id, r.victim_ip)).or_default().push(r.ts);
    }

    let mut segments: BTreeMap<IpAddr, Vec<HoneypotEvent>> = BTreeMap::new();
    for ((sensor, victim), mut ts) in streams {
        ts.sort_by(f64::total_cmp);
        let mut flush = |seg: &[f64]| {
            if seg.len() >= cfg.min_requests {
                segments.entry(victim).or_default().push(HoneypotEvent {
                    victim_ip: victim,
                    start: seg[0],
                    end: seg[seg.len() - 1],
                    request_count: seg.len(),
                    sensor_ids: BTreeSet::from([sensor]),
                });
            }
        };
        let mut begin = 0;
        for i in 1..ts.len() {
            if ts[i] - ts[i - 1] > cfg.max_gap_s {
                flush(&ts[begin..i]);
                begin = i;
            }
        }
        if !ts.is_empty() {
            flush(&ts[begin..]);
        }
    }

    let mut events = Vec::new();
    for (_, mut segs) in segments {
        segs.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.end.total_cmp(&b.end)));
        let mut iter = segs.into_iter();
        let mut cur = iter.next().expect("victims only present with segments");
        for s in iter {
            if s.start <= cur.end {
                cur.end = cur.end.max(s.end);
                cur.request_count += s.request_count;
                cur.sensor_ids.extend(s.sensor_ids);
            } else {
                events.push(std::mem::replace(&mut cur, s));
            }
        }
        events.push(cur);
    }
    events.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.victim_ip.cmp(&b.victim_ip)));
    events
}

/// Victim address and time window of an event from either vantage point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventWindow {
    pub victim: IpAddr,
    pub start: f64,
    pub end: f64,
}

impl From<&AttackEvent> for EventWindow {
    fn from(e: &AttackEvent) -> Self {
        EventWindow {
            victim: e.victim_ip,
            start: e.first_ts,
            end: e.last_ts,
        }
    }
}

impl From<&HoneypotEvent> for EventWindow {
    fn from(e: &HoneypotEvent) -> Self {
        EventWindow {
            victim: e.victim_ip,
            start: e.start,
            end: e.end,
        }
    }
}

fn windows_meet(a: &EventWindow, b: &EventWindow, slack: f64) -> bool {
    a.victim == b.victim && a.start.max(b.start) <= a.end.min(b.end) + slack
}

/// Maximum one-to-one matching of same-victim windows that intersect when
/// allowed a gap of up to `slack` seconds. Left windows are visited by
/// earliest start and try partners by earliest start; augmenting paths make
/// the result maximum. Returns (left index, right index) pairs sorted by left.
pub fn match_windows(left: &[EventWindow], right: &[EventWindow], slack: f64) -> Vec<(usize, usize)> {
    let by_start = |ws: &[EventWindow]| {
        let mut idx: Vec<usize> = (0..ws.len()).collect();
        idx.sort_by(|&a, &b| ws[a].start.total_cmp(&ws[b].start).then(a.cmp(&b)));
        idx
    };
    let mut right_by_victim: HashMap<IpAddr, Vec<usize>> = HashMap::new();
    for j in by_start(right) {
        right_by_victim.entry(right[j].victim).or_default().push(j);
    }
    let adjacency: Vec<Vec<usize>> = left
        .iter()
        .map(|a| {
            right_by_victim
                .get(&a.victim)
                .map(|cands| {
                    cands
                        .iter()
                        .copied()
                        .filter(|&j| windows_meet(a, &right[j], slack))
                        .collect()
                })
                .unwrap_or_default()
        })
        .collect();

    fn augment(
        i: usize,
        adjacency: &[Vec<usize>],
        seen: &mut [bool],
        owner: &mut [Option<usize>],
    ) -> bool {
        for &j in &adjacency[i] {
            if seen[j] {
                continue;
            }
            seen[j] = true;
            if owner[j].is_none_or(|other| augment(other, adjacency, seen, owner)) {
                owner[j] = Some(i);
                return true;
            }
        }
        false
    }

    let mut owner: Vec<Option<usize>> = vec![None; right.len()];
    for i in by_start(left) {
        if adjacency[i].is_empty() {
            continue;
        }
        let mut seen = vec![false; right.len()];
        augment(i, &adjacency, &mut seen, &mut owner);
    }
    let mut pairs: Vec<(usize, usize)> = owner
        .iter()
        .enumerate()
        .filter_map(|(j, o)| o.map(|i| (i, j)))
        .collect();
    pairs.sort();
    pairs
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapReport {
    /// (IXP event index, honeypot event index)
    pub mutual: Vec<(usize, usize)>,
    pub ixp_only: Vec<usize>,
    pub hp_only: Vec<usize>,
    /// Mutual events as a fraction of IXP events.
    pub ixp_fraction: f64,
    /// Mutual events as a fraction of honeypot events.
    pub hp_fraction: f64,
}

pub fn overlap(ixp_events: &[AttackEvent], hp_events: &[HoneypotEvent], slack_s: f64) -> OverlapReport {
    let left: Vec<EventWindow> = ixp_events.iter().map(EventWindow::from).collect();
    let right: Vec<EventWindow> = hp_events.iter().map(EventWindow::from).collect();
    let mutual = match_windows(&left, &right, slack_s);
    let matched_l: BTreeSet<usize> = mutual.iter().map(|p| p.0).collect();
    let matched_r: BTreeSet<usize> = mutual.iter().map(|p| p.1).collect();
    let frac = |n: usize| {
        if n == 0 {
            0.0
        } else {
            mutual.len() as f64 / n as f64
        }
    };
    OverlapReport {
        ixp_only: (0..left.len()).filter(|i| !matched_l.contains(i)).collect(),
        hp_only: (0..right.len()).filter(|j| !matched_r.contains(j)).collect(),
        ixp_fraction: frac(left.len()),
        hp_fraction: frac(right.len()),
        mutual,
    }
}

/// Decile scores of honeypot events by request count.
pub fn honeypot_deciles(events: &[HoneypotEvent]) -> Vec<u8> {
    let counts: Vec<u64> = events.iter().map(|e| e.request_count as u64).collect();
    stats::decile_scores(&counts)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntensityComparison {
    /// (IXP decile, honeypot decile) per mutual pair.
    pub pairs: Vec<(u8, u8)>,
    /// Counts per decile 1..=10 (index 0 is decile 1).
    pub ixp_histogram: [usize; 10],
    pub hp_histogram: [usize; 10],
    pub ixp_mean: Option<f64>,
    pub hp_mean: Option<f64>,
}

/// Paired decile distributions over mutual events. IXP deciles are taken
/// from `intensity_decile`; honeypot deciles are computed over all
/// honeypot events.
pub fn intensity_comparison(
    report: &OverlapReport,
    ixp_events: &[AttackEvent],
    hp_events: &[HoneypotEvent],
) -> IntensityComparison {
    let hp_dec = honeypot_deciles(hp_events);
    let pairs: Vec<(u8, u8)> = report
        .mutual
        .iter()
        .map(|&(i, j)| (ixp_events[i].intensity_decile.unwrap_or(0), hp_dec[j]))
        .collect();
    compare_deciles(&pairs)
}

pub fn compare_deciles(pairs: &[(u8, u8)]) -> IntensityComparison {
    let mut ixp_histogram = [0; 10];
    let mut hp_histogram = [0; 10];
    for &(a, b) in pairs {
        if (1..=10).contains(&a) {
            ixp_histogram[a as usize - 1] += 1;
        }
        if (1..=10).contains(&b) {
            hp_histogram[b as usize - 1] += 1;
        }
    }
    IntensityComparison {
        pairs: pairs.to_vec(),
        ixp_histogram,
        hp_histogram,
        ixp_mean: stats::mean(pairs.iter().map(|p| p.0 as f64)),
        hp_mean: stats::mean(pairs.iter().map(|p| p.1 as f64)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergencePoint {
    pub sensors: usize,
    pub added_sensor: u32,
    pub visible_fraction: f64,
}

/// Fraction of distinct victims seen as sensors are added in order of
/// descending victim coverage (ties by sensor id).
pub fn convergence_curve(hp_events: &[HoneypotEvent]) -> Vec<ConvergencePoint> {
    let mut per_sensor: BTreeMap<u32, BTreeSet<IpAddr>> = BTreeMap::new();
    let mut all = BTreeSet::new();
    for e in hp_events {
        all.insert(e.victim_ip);
        for s in &e.sensor_ids {
            per_sensor.entry(*s).or_default().insert(e.victim_ip);
        }
    }
    let mut order: Vec<(u32, BTreeSet<IpAddr>)> = per_sensor.into_iter().collect();
    order.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(&b.0)));
    let mut seen = BTreeSet::new();
    order
        .into_iter()
        .enumerate()
        .map(|(i, (sensor, victims))| {
            seen.extend(victims);
            ConvergencePoint {
                sensors: i + 1,
                added_sensor: sensor,
                visible_fraction: seen.len() as f64 / all.len() as f64,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn req(ts: f64, sensor: u32, victim: &str) -> HoneypotRequest {
        HoneypotRequest {
            ts,
            sensor_id: sensor,
            victim_ip: victim.parse().unwrap(),
            qname: "x.gov.".into(),
            qtype: 255,
        }
    }

    fn times(sensor: u32, victim: &str, ts: &[f64]) -> Vec<HoneypotRequest> {
        ts.iter().map(|t| req(*t, sensor, victim)).collect()
    }

    #[test]
    fn five_requests_make_an_event() {
        let log = times(1, "10.0.0.1", &[0.0, 100.0, 200.0, 300.0, 400.0]);
        let ev = infer_honeypot_attacks(&log, InferenceConfig::default());
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].request_count, 5);
        assert_eq!((ev[0].start, ev[0].end), (0.0, 400.0));
    }

    #[test]
    fn four_requests_do_not() {
        let log = times(1, "10.0.0.1", &[0.0, 100.0, 200.0, 300.0]);
        assert!(infer_honeypot_attacks(&log, InferenceConfig::default()).is_empty());
    }

    #[test]
    fn long_gap_splits() {
        let log = times(1, "10.0.0.1", &[0.0, 10.0, 20.0, 921.0, 930.0, 940.0, 950.0]);
        assert!(infer_honeypot_attacks(&log, InferenceConfig::default()).is_empty());
        // exactly 900 s is not a split
        let log = times(1, "10.0.0.1", &[0.0, 10.0, 20.0, 920.0, 930.0]);
        assert_eq!(infer_honeypot_attacks(&log, InferenceConfig::default()).len(), 1);
    }

    #[test]
    fn sensors_merge_per_victim() {
        let mut log = times(1, "10.0.0.1", &[0.0, 10.0, 20.0, 30.0, 40.0]);
        log.extend(times(2, "10.0.0.1", &[35.0, 45.0, 55.0, 65.0, 75.0]));
        log.extend(times(3, "10.0.0.1", &[5000.0, 5010.0, 5020.0, 5030.0, 5040.0]));
        let ev = infer_honeypot_attacks(&log, InferenceConfig::default());
        assert_eq!(ev.len(), 2);
        assert_eq!(ev[0].sensor_ids, BTreeSet::from([1, 2]));
        assert_eq!(ev[0].request_count, 10);
        assert_eq!(ev[0].end, 75.0);
        assert_eq!(ev[1].sensor_ids, BTreeSet::from([3]));
    }

    #[test]
    fn amppot_preset_is_stricter() {
        let log = times(1, "10.0.0.1", &[0.0, 10.0, 20.0, 30.0, 40.0]);
        assert!(infer_honeypot_attacks(&log, InferenceConfig::amppot()).is_empty());
    }

    #[test]
    fn log_csv_roundtrip() {
        let log = times(4, "10.0.0.9", &[1.5, 2.25]);
        let mut buf = Vec::new();
        write_log(&mut buf, &log).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("ts,sensor_id,victim_ip,qname,qtype\n"));
        assert_eq!(read_log(buf.as_slice()).unwrap(), log);
    }

    fn w(victim: &str, start: f64, end: f64) -> EventWindow {
        EventWindow {
            victim: victim.parse().unwrap(),
            start,
            end,
        }
    }

    #[test]
    fn window_matching() {
        let a = [w("10.0.0.1", 0.0, 100.0), w("10.0.0.2", 0.0, 100.0)];
        let b = [w("10.0.0.1", 50.0, 60.0), w("10.0.0.3", 0.0, 100.0)];
        assert_eq!(match_windows(&a, &b, 0.0), vec![(0, 0)]);
        // 200 s gap bridged only with slack
        let c = [w("10.0.0.1", 300.0, 400.0)];
        assert!(match_windows(&a, &c, 0.0).is_empty());
        assert_eq!(match_windows(&a, &c, 300.0), vec![(0, 0)]);
    }

    #[test]
    fn augmenting_beats_plain_greedy() {
        // Plain earliest-start greedy pairs the long window with the early
        // short one and strands the second.
        let a = [w("10.0.0.1", 0.0, 100.0), w("10.0.0.1", 0.0, 1.0)];
        let b = [w("10.0.0.1", 0.0, 1.0), w("10.0.0.1", 50.0, 60.0)];
        assert_eq!(match_windows(&a, &b, 0.0).len(), 2);
    }

    #[test]
    fn convergence() {
        let ev = |v: &str, sensors: &[u32]| HoneypotEvent {
            victim_ip: v.parse().unwrap(),
            start: 0.0,
            end: 1.0,
            request_count: 5,
            sensor_ids: sensors.iter().copied().collect(),
        };
        let one = convergence_curve(&[ev("10.0.0.1", &[1]), ev("10.0.0.2", &[1])]);
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].visible_fraction, 1.0);

        let halves = convergence_curve(&[ev("10.0.0.1", &[1]), ev("10.0.0.2", &[2])]);
        let fr: Vec<f64> = halves.iter().map(|p| p.visible_fraction).collect();
        assert_eq!(fr, vec![0.5, 1.0]);
    }

    #[test]
    fn intensity_point_masses_and_symmetry() {
        let c = compare_deciles(&[(6, 8)]);
        assert_eq!(c.ixp_histogram[5], 1);
        assert_eq!(c.hp_histogram[7], 1);
        assert_eq!((c.ixp_mean, c.hp_mean), (Some(6.0), Some(8.0)));
        let c = compare_deciles(&[(3, 3), (7, 7)]);
        assert_eq!(c.ixp_mean, c.hp_mean);
        assert_eq!(compare_deciles(&[]).ixp_mean, None);
    }

    /// Exhaustive maximum matching for small instances.
    fn brute_max_matching(a: &[EventWindow], b: &[EventWindow], slack: f64) -> usize {
        fn go(i: usize, a: &[EventWindow], b: &[EventWindow], used: &mut Vec<bool>, slack: f64) -> usize {
            if i == a.len() {
                return 0;
            }
            let mut best = go(i + 1, a, b, used, slack);
            for j in 0..b.len() {
                if !used[j] && windows_meet(&a[i], &b[j], slack) {
                    used[j] = true;
                    best = best.max(1 + go(i + 1, a, b, used, slack));
                    used[j] = false;
                }
            }
            best
        }
        go(0, a, b, &mut vec![false; b.len()], slack)
    }

    fn arb_windows() -> impl Strategy<Value = Vec<EventWindow>> {
        proptest::collection::vec((0u8..2, 0u32..50, 0u32..30), 0..6).prop_map(|v| {
            v.into_iter()
                .map(|(victim, s, d)| w(&format!("10.0.0.{victim}"), s as f64, (s + d) as f64))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn matching_is_maximum_and_symmetric(a in arb_windows(), b in arb_windows(), slack in 0u32..10) {
            let slack = slack as f64;
            let ab = match_windows(&a, &b, slack);
            let ba = match_windows(&b, &a, slack);
            prop_assert_eq!(ab.len(), ba.len());
            prop_assert_eq!(ab.len(), brute_max_matching(&a, &b, slack));
            let lefts: BTreeSet<_> = ab.iter().map(|p| p.0).collect();
            let rights: BTreeSet<_> = ab.iter().map(|p| p.1).collect();
            prop_assert_eq!(lefts.len(), ab.len());
            prop_assert_eq!(rights.len(), ab.len());
        }

        #[test]
        fn inference_ignores_stream_interleaving(
            gaps in proptest::collection::vec(1u32..1200, 1..30),
            seed in any::<u64>(),
        ) {
            let mut log = Vec::new();
            let mut t = 0.0;
            for (i, g) in gaps.iter().enumerate() {
                t += *g as f64;
                log.push(req(t, (i % 3) as u32, if i % 2 == 0 { "10.0.0.1" } else { "10.0.0.2" }));
            }
            let base = infer_honeypot_attacks(&log, InferenceConfig::default());
            // deterministic shuffle
            let mut shuffled = log.clone();
            let n = shuffled.len();
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                shuffled.swap(i, (s >> 33) as usize % (i + 1));
            }
            prop_assert_eq!(infer_honeypot_attacks(&shuffled, InferenceConfig::default()), base);
        }

        #[test]
        fn convergence_is_monotone_and_complete(
            raw in proptest::collection::vec((0u8..20, proptest::collection::btree_set(0u32..8, 1..4)), 1..30)
        ) {
            let events: Vec<HoneypotEvent> = raw.into_iter().map(|(v, s)| HoneypotEvent {
                victim_ip: format!("10.1.0.{v}").parse().unwrap(),
                start: 0.0, end: 1.0, request_count: 5, sensor_ids: s,
            }).collect();
            let curve = convergence_curve(&events);
            prop_assert!(curve.windows(2).all(|p| p[0].visible_fraction <= p[1].visible_fraction));
            prop_assert_eq!(curve.last().unwrap().visible_fraction, 1.0);
        }
    }
}
