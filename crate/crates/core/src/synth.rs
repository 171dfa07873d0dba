//! Deterministic scenario generator: background DNS traffic, planted
//! reflection attacks with amplifier churn, honeypot request logs and
//! packet sampling.
//!
//! Every stream (one background client, one attack instance, one scanner)
//! draws from its own ChaCha generator seeded from the scenario seed and the
//! stream index, so streams can be produced in parallel and the merged
//! output depends on the seed alone.
//!
//! When `sampling_denominator` is above 1 the generator emits only the
//! packets a 1:N sampler would keep: the kept count of each stream is drawn
//! from the binomial distribution and the kept packets are placed uniformly
//! in the stream window, which is the same distribution as thinning the full
//! stream packet by packet.

use std::collections::{BTreeMap, BTreeSet};
use std::net::{IpAddr, Ipv4Addr};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, LogNormal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dnsname;
use crate::error::{Error, Result};
use crate::honeypot::HoneypotRequest;
use crate::snoop::{AnswerTtl, ProbeResponse, RCODE_REFUSED};
use crate::trace::{self, PacketRecord, DNS_PORT, SECONDS_PER_DAY, UDP_HEADER_LEN};

const STREAM_BACKGROUND: u64 = 1;
const STREAM_ATTACK: u64 = 2;
const STREAM_HONEYPOT_ONLY: u64 = 3;
const STREAM_SCANNER: u64 = 4;
const STREAM_POOLS: u64 = 5;
const STREAM_SAMPLING: u64 = 6;

/// 2020-01-01.
pub const DEFAULT_START_DAY: i64 = 18_262;

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

pub fn stream_seed(seed: u64, kind: u64, index: u64) -> u64 {
    seed ^ splitmix(splitmix(kind) ^ index)
}

fn rng_for(seed: u64, kind: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(seed, kind, index))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DnsIdMode {
    Random,
    PureParity,
    Phased,
    #[serde(rename = "alternating_48h")]
    Alternating48h,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackgroundConfig {
    pub clients: u32,
    pub resolvers: u32,
    /// Median queries per client per day before sampling; per-client rates
    /// are log-normal around it.
    pub queries_per_day: f64,
    pub rate_sigma: f64,
    pub names: Vec<String>,
}

impl Default for BackgroundConfig {
    fn default() -> Self {
        BackgroundConfig {
            clients: 100,
            resolvers: 10,
            queries_per_day: 80_000.0,
            rate_sigma: 0.8,
            names: [
                "www.example.com.",
                "mail.example.net.",
                "cdn.example.org.",
                "api.example.com.",
                "static.example.net.",
                "news.example.org.",
                "shop.example.com.",
                "img.example.net.",
            ]
            .map(String::from)
            .to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub name: String,
    pub size: u32,
    /// Overrides the scenario-wide daily retention.
    #[serde(default)]
    pub retention: Option<f64>,
}

fn default_qtype() -> u32 {
    trace::QTYPE_ANY
}
fn default_one() -> u32 {
    1
}
fn default_response_ratio() -> f64 {
    0.8
}
fn default_response_size() -> u32 {
    3_500
}
fn default_honeypot_rate() -> f64 {
    0.05
}
fn default_request_ttl() -> u8 {
    52
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub victim_ip: IpAddr,
    pub qname: String,
    #[serde(default = "default_qtype")]
    pub qtype: u32,
    /// Packets per second at the vantage point before sampling.
    pub qps: f64,
    /// Seconds from the scenario start.
    pub start: f64,
    pub duration: f64,
    /// The attack recurs at the same time on this many consecutive days.
    #[serde(default = "default_one")]
    pub repeat_days: u32,
    /// Size of the private amplifier pool; ignored when `pool` names a
    /// shared one.
    #[serde(default)]
    pub amplifier_pool_size: u32,
    pub amplifiers_per_attack: u32,
    #[serde(default)]
    pub pool: Option<String>,
    pub dns_id_mode: DnsIdMode,
    #[serde(default)]
    pub honeypot_visible: bool,
    /// Requests per second per sensor.
    #[serde(default = "default_honeypot_rate")]
    pub honeypot_rate: f64,
    #[serde(default)]
    pub entity: Option<String>,
    /// Fraction of attack packets that are reflected responses; the rest
    /// are spoofed requests.
    #[serde(default = "default_response_ratio")]
    pub response_ratio: f64,
    #[serde(default = "default_response_size")]
    pub response_size: u32,
    #[serde(default = "default_request_ttl")]
    pub request_ttl: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HoneypotOnlyConfig {
    pub count: u32,
    pub qnames: Vec<String>,
    pub min_duration: f64,
    pub max_duration: f64,
    pub rate: f64,
}

impl Default for HoneypotOnlyConfig {
    fn default() -> Self {
        HoneypotOnlyConfig {
            count: 0,
            qnames: vec!["example.gov.".into()],
            min_duration: 1_800.0,
            max_duration: 7_200.0,
            rate: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub start_day: i64,
    pub duration_days: u32,
    pub sampling_denominator: u32,
    pub background: BackgroundConfig,
    pub attacks: Vec<AttackSpec>,
    pub pools: Vec<PoolSpec>,
    pub churn_retention: f64,
    pub sensor_count: u32,
    /// Sensors that observe every honeypot-visible attack.
    pub core_sensors: u32,
    /// Chance that each remaining sensor observes a visible attack.
    pub other_sensor_prob: f64,
    pub honeypot_only: HoneypotOnlyConfig,
    pub scanners: u32,
    pub scanner_queries_per_day: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 1,
            start_day: DEFAULT_START_DAY,
            duration_days: 1,
            sampling_denominator: 16_000,
            background: BackgroundConfig::default(),
            attacks: Vec::new(),
            pools: Vec::new(),
            churn_retention: 1.0,
            sensor_count: 8,
            core_sensors: 2,
            other_sensor_prob: 0.3,
            honeypot_only: HoneypotOnlyConfig::default(),
            scanners: 0,
            scanner_queries_per_day: 50_000.0,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::config(format!("scenario config: {e}")))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::config(format!("scenario config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::config(m));
        if self.duration_days < 1 {
            return err("duration_days must be >= 1".into());
        }
        if self.sampling_denominator < 1 {
            return err("sampling_denominator must be >= 1".into());
        }
        if !(self.churn_retention > 0.0 && self.churn_retention <= 1.0) {
            return err(format!("churn_retention must be in (0, 1], got {}", self.churn_retention));
        }
        if self.core_sensors > self.sensor_count {
            return err("core_sensors exceeds sensor_count".into());
        }
        if !(0.0..=1.0).contains(&self.other_sensor_prob) {
            return err("other_sensor_prob must be in [0, 1]".into());
        }
        let bg = &self.background;
        if bg.clients > 0 {
            if bg.resolvers == 0 || bg.names.is_empty() {
                return err("background traffic needs resolvers and names".into());
            }
            if !(bg.queries_per_day > 0.0) || !(bg.rate_sigma >= 0.0) {
                return err("background rates must be > 0".into());
            }
            if let Some(n) = bg.names.iter().find(|n| !dnsname::is_valid(&dnsname::normalize(n))) {
                return err(format!("invalid background name {n:?}"));
            }
        }
        let mut pool_names = BTreeSet::new();
        for p in &self.pools {
            if p.size == 0 || !pool_names.insert(p.name.as_str()) {
                return err(format!("pool {:?} is empty or duplicated", p.name));
            }
            if let Some(r) = p.retention {
                if !(r > 0.0 && r <= 1.0) {
                    return err(format!("pool {:?}: retention must be in (0, 1]", p.name));
                }
            }
        }
        let window = self.duration_days as f64 * SECONDS_PER_DAY;
        let visible = self.attacks.iter().any(|a| a.honeypot_visible) || self.honeypot_only.count > 0;
        if visible && self.sensor_count == 0 {
            return err("honeypot-visible attacks need sensor_count >= 1".into());
        }
        for (i, a) in self.attacks.iter().enumerate() {
            let ctx = |m: &str| Error::config(format!("attack {i}: {m}"));
            if !(a.qps > 0.0) || !(a.duration > 0.0) || !(a.start >= 0.0) {
                return Err(ctx("qps and duration must be > 0, start >= 0"));
            }
            if a.repeat_days < 1 {
                return Err(ctx("repeat_days must be >= 1"));
            }
            if a.start + a.duration + (a.repeat_days - 1) as f64 * SECONDS_PER_DAY > window {
                return Err(ctx("does not fit the scenario window"));
            }
            if !dnsname::is_valid(&dnsname::normalize(&a.qname)) {
                return Err(ctx("invalid qname"));
            }
            let pool = match &a.pool {
                Some(p) => match self.pools.iter().find(|s| &s.name == p) {
                    Some(s) => s.size,
                    None => return Err(ctx("unknown pool")),
                },
                None => a.amplifier_pool_size,
            };
            if a.amplifiers_per_attack < 1 || a.amplifiers_per_attack > pool {
                return Err(ctx("amplifiers_per_attack must be in 1..=pool size"));
            }
            if !(0.0..=1.0).contains(&a.response_ratio) {
                return Err(ctx("response_ratio must be in [0, 1]"));
            }
            if a.response_size as u64 + UDP_HEADER_LEN as u64 > 65_535 {
                return Err(ctx("response_size too large"));
            }
            if a.honeypot_visible && !(a.honeypot_rate > 0.0) {
                return Err(ctx("honeypot_rate must be > 0"));
            }
        }
        let h = &self.honeypot_only;
        if h.count > 0
            && (h.qnames.is_empty()
                || !(h.rate > 0.0)
                || !(h.min_duration > 0.0 && h.min_duration <= h.max_duration)
                || h.max_duration > SECONDS_PER_DAY)
        {
            return err("honeypot_only needs names, rate > 0 and 0 < min_duration <= max_duration <= 1 day".into());
        }
        if self.scanners > 0 && !(self.scanner_queries_per_day > 0.0) {
            return err("scanner_queries_per_day must be > 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedAttack {
    pub id: usize,
    /// Index into `ScenarioConfig::attacks`.
    pub spec: usize,
    pub victim_ip: IpAddr,
    pub qname: String,
    pub day: i64,
    pub start_ts: f64,
    pub end_ts: f64,
    pub original_packets: u64,
    pub sampled_packets: u64,
    pub sampled_requests: u64,
    pub amplifiers: BTreeSet<IpAddr>,
    pub dns_id_mode: DnsIdMode,
    pub entity: Option<String>,
    pub honeypot_visible: bool,
    pub honeypot_requests: u64,
    pub sensors: BTreeSet<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedHoneypotAttack {
    pub victim_ip: IpAddr,
    pub start: f64,
    pub end: f64,
    pub requests: u64,
    pub sensors: BTreeSet<u32>,
    /// The planted IXP attack behind it, if any.
    pub attack: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub sampling_denominator: u32,
    pub attacks: Vec<PlantedAttack>,
    /// Pool members per pool and epoch day.
    pub daily_pool_sets: BTreeMap<String, BTreeMap<i64, BTreeSet<IpAddr>>>,
    pub honeypot_attacks: Vec<PlantedHoneypotAttack>,
    pub background_packets: u64,
    pub scanner_packets: u64,
}

impl GroundTruth {
    /// Distinct planted qnames.
    pub fn attack_qnames(&self) -> BTreeSet<String> {
        self.attacks.iter().map(|a| a.qname.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub trace: Vec<PacketRecord>,
    /// Planted attack id per trace record.
    pub labels: Vec<Option<usize>>,
    pub honeypot_log: Vec<HoneypotRequest>,
    pub truth: GroundTruth,
}

/// Sequential allocator of public IPv4 addresses within one /8 range block.
struct Allocator {
    next: u32,
}

impl Allocator {
    fn new(first_octet: u8) -> Self {
        Allocator {
            next: u32::from(first_octet) << 24,
        }
    }

    fn take(&mut self) -> IpAddr {
        loop {
            self.next += 1;
            let last = self.next & 0xff;
            if last != 0 && last != 255 {
                return IpAddr::V4(Ipv4Addr::from(self.next));
            }
        }
    }
}

fn indexed_v4(first_octet: u8, i: u32) -> IpAddr {
    let host = (i % 250 + 1) | ((i / 250) << 8);
    IpAddr::V4(Ipv4Addr::from((u32::from(first_octet) << 24) | host))
}

fn micros(ts: f64) -> f64 {
    (ts * 1e6).round() / 1e6
}

/// Kept count of `n` packets under 1:`denom` sampling.
fn thin(n: u64, denom: u32, rng: &mut ChaCha8Rng) -> u64 {
    if denom == 1 || n == 0 {
        n
    } else {
        Binomial::new(n, 1.0 / denom as f64).expect("valid binomial").sample(rng)
    }
}

fn poisson(lambda: f64, rng: &mut ChaCha8Rng) -> u64 {
    if lambda <= 0.0 {
        0
    } else {
        Poisson::new(lambda).expect("valid poisson").sample(rng) as u64
    }
}

fn sorted_uniform(n: u64, start: f64, len: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut ts: Vec<f64> = (0..n).map(|_| micros(start + rng.random::<f64>() * len)).collect();
    ts.sort_by(f64::total_cmp);
    ts
}

/// ANY query with an EDNS OPT record.
fn request_udp_len(qname: &str) -> u32 {
    UDP_HEADER_LEN + 12 + dnsname::wire_length(qname) as u32 + 4 + 11
}

fn parity_id(rng: &mut ChaCha8Rng, parity: u16) -> u16 {
    (rng.random::<u16>() & !1) | parity
}

struct Instance {
    id: usize,
    spec: usize,
    day_index: u32,
    start_ts: f64,
    amplifiers: Vec<IpAddr>,
}

type Tagged = (PacketRecord, Option<usize>);

fn attack_stream(cfg: &ScenarioConfig, inst: &Instance, rng: &mut ChaCha8Rng) -> (Vec<Tagged>, u64, u64) {
    let a = &cfg.attacks[inst.spec];
    let qname = dnsname::normalize(&a.qname);
    let original = (a.qps * a.duration).round() as u64;
    let kept = thin(original, cfg.sampling_denominator, rng);
    let times = sorted_uniform(kept, inst.start_ts, a.duration, rng);
    let parity: u16 = rng.random_range(0..2);
    let midpoint = inst.start_ts + a.duration / 2.0;
    let mut out = Vec::with_capacity(times.len());
    let mut requests = 0;
    for ts in times {
        let dns_id = match a.dns_id_mode {
            DnsIdMode::Random => rng.random(),
            DnsIdMode::PureParity => parity_id(rng, parity),
            DnsIdMode::Phased => parity_id(rng, if ts < midpoint { parity } else { 1 - parity }),
            DnsIdMode::Alternating48h => {
                let p = (ts / (2.0 * SECONDS_PER_DAY)).floor() as i64;
                parity_id(rng, p.rem_euclid(2) as u16)
            }
        };
        let amp = inst.amplifiers[rng.random_range(0..inst.amplifiers.len())];
        let port: u16 = rng.random_range(1024..=65535);
        let is_response = rng.random_bool(a.response_ratio);
        let rec = if is_response {
            let jitter = rng.random_range(0..=a.response_size / 20);
            let size = a.response_size - a.response_size / 40 + jitter;
            PacketRecord {
                ts,
                src_ip: amp,
                dst_ip: a.victim_ip,
                src_port: DNS_PORT,
                dst_port: port,
                ip_ttl: rng.random_range(40..=64),
                ip_id: rng.random(),
                udp_len: UDP_HEADER_LEN + size,
                is_response: true,
                dns_id,
                qname: qname.clone(),
                qtype: a.qtype,
                rcode: 0,
                ancount: (size / 120).max(1).min(u16::MAX as u32) as u16,
                nscount: 0,
                src_as: None,
                dst_as: None,
            }
        } else {
            requests += 1;
            PacketRecord {
                ts,
                src_ip: a.victim_ip,
                dst_ip: amp,
                src_port: port,
                dst_port: DNS_PORT,
                ip_ttl: a.request_ttl,
                ip_id: rng.random(),
                udp_len: request_udp_len(&qname),
                is_response: false,
                dns_id,
                qname: qname.clone(),
                qtype: a.qtype,
                rcode: 0,
                ancount: 0,
                nscount: 0,
                src_as: None,
                dst_as: None,
            }
        };
        out.push((rec, Some(inst.id)));
    }
    (out, original, requests)
}

fn background_stream(cfg: &ScenarioConfig, client: u32, rng: &mut ChaCha8Rng) -> Vec<Tagged> {
    let bg = &cfg.background;
    let names: Vec<String> = bg.names.iter().map(|n| dnsname::normalize(n)).collect();
    let weights: Vec<f64> = (0..names.len()).map(|r| 1.0 / (r + 1) as f64).collect();
    let total_w: f64 = weights.iter().sum();
    let rate = LogNormal::new(bg.queries_per_day.ln(), bg.rate_sigma)
        .expect("valid lognormal")
        .sample(rng);
    let ip = indexed_v4(40, client);
    let resolver = indexed_v4(30, client % bg.resolvers);
    let mut out = Vec::new();
    for d in 0..cfg.duration_days {
        let day_start = (cfg.start_day + d as i64) as f64 * SECONDS_PER_DAY;
        // each query is a request and a response, sampled separately
        let n = poisson(2.0 * rate / cfg.sampling_denominator as f64, rng);
        for ts in sorted_uniform(n, day_start, SECONDS_PER_DAY, rng) {
            let mut pick = rng.random::<f64>() * total_w;
            let mut k = 0;
            while k + 1 < names.len() && pick >= weights[k] {
                pick -= weights[k];
                k += 1;
            }
            let qtype = match rng.random_range(0..10) {
                0..=6 => trace::QTYPE_A,
                7..=8 => trace::QTYPE_AAAA,
                _ => 15,
            };
            let is_response = rng.random_bool(0.5);
            let port = rng.random_range(1024..=65535);
            let payload = 12 + dnsname::wire_length(&names[k]) as u32 + 4;
            out.push((
                PacketRecord {
                    ts,
                    src_ip: if is_response { resolver } else { ip },
                    dst_ip: if is_response { ip } else { resolver },
                    src_port: if is_response { DNS_PORT } else { port },
                    dst_port: if is_response { port } else { DNS_PORT },
                    ip_ttl: if is_response { 58 } else { 63 },
                    ip_id: rng.random(),
                    udp_len: UDP_HEADER_LEN + payload + if is_response { rng.random_range(16..120) } else { 0 },
                    is_response,
                    dns_id: rng.random(),
                    qname: names[k].clone(),
                    qtype,
                    rcode: 0,
                    ancount: is_response as u16,
                    nscount: 0,
                    src_as: None,
                    dst_as: None,
                },
                None,
            ));
        }
    }
    out
}

fn scanner_stream(cfg: &ScenarioConfig, scanner: u32, qnames: &[String], rng: &mut ChaCha8Rng) -> Vec<Tagged> {
    let ip = indexed_v4(90, scanner);
    let mut out = Vec::new();
    for d in 0..cfg.duration_days {
        let day_start = (cfg.start_day + d as i64) as f64 * SECONDS_PER_DAY;
        let n = poisson(cfg.scanner_queries_per_day / cfg.sampling_denominator as f64, rng);
        for ts in sorted_uniform(n, day_start, SECONDS_PER_DAY, rng) {
            let qname = qnames[rng.random_range(0..qnames.len())].clone();
            out.push((
                PacketRecord {
                    ts,
                    src_ip: ip,
                    dst_ip: IpAddr::V4(Ipv4Addr::from(rng.random_range(0x4600_0001u32..0x46ff_fffe))),
                    src_port: rng.random_range(1024..=65535),
                    dst_port: DNS_PORT,
                    ip_ttl: 60,
                    ip_id: 54321,
                    udp_len: request_udp_len(&qname),
                    is_response: false,
                    dns_id: rng.random(),
                    qname,
                    qtype: trace::QTYPE_ANY,
                    rcode: 0,
                    ancount: 0,
                    nscount: 0,
                    src_as: None,
                    dst_as: None,
                },
                None,
            ));
        }
    }
    out
}

fn pick_sensors(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> BTreeSet<u32> {
    let mut s: BTreeSet<u32> = (0..cfg.core_sensors).collect();
    for id in cfg.core_sensors..cfg.sensor_count {
        if rng.random_bool(cfg.other_sensor_prob) {
            s.insert(id);
        }
    }
    if s.is_empty() {
        s.insert(rng.random_range(0..cfg.sensor_count));
    }
    s
}

fn honeypot_requests(
    victim: IpAddr,
    qname: &str,
    qtype: u32,
    start: f64,
    duration: f64,
    rate: f64,
    sensors: &BTreeSet<u32>,
    rng: &mut ChaCha8Rng,
) -> Vec<HoneypotRequest> {
    let mut out = Vec::new();
    for &sensor in sensors {
        let n = poisson(rate * duration, rng);
        for ts in sorted_uniform(n, start, duration, rng) {
            out.push(HoneypotRequest {
                ts,
                sensor_id: sensor,
                victim_ip: victim,
                qname: qname.to_string(),
                qtype,
            });
        }
    }
    out
}

/// Pool membership per relative day.
fn evolve_pools(cfg: &ScenarioConfig) -> BTreeMap<String, Vec<Vec<IpAddr>>> {
    let mut alloc = Allocator::new(60);
    let mut specs: Vec<(String, u32, f64)> = cfg
        .pools
        .iter()
        .map(|p| (p.name.clone(), p.size, p.retention.unwrap_or(cfg.churn_retention)))
        .collect();
    for (i, a) in cfg.attacks.iter().enumerate() {
        if a.pool.is_none() {
            specs.push((private_pool(i), a.amplifier_pool_size, cfg.churn_retention));
        }
    }
    let mut out = BTreeMap::new();
    for (k, (name, size, retention)) in specs.into_iter().enumerate() {
        let mut rng = rng_for(cfg.seed, STREAM_POOLS, k as u64);
        let mut cur: Vec<IpAddr> = (0..size).map(|_| alloc.take()).collect();
        let mut days = vec![cur.clone()];
        for _ in 1..cfg.duration_days {
            for slot in cur.iter_mut() {
                if !rng.random_bool(retention) {
                    *slot = alloc.take();
                }
            }
            days.push(cur.clone());
        }
        out.insert(name, days);
    }
    out
}

fn private_pool(spec: usize) -> String {
    format!("attack-{spec}")
}

fn packet_key(a: &Tagged, b: &Tagged) -> std::cmp::Ordering {
    let (x, y) = (&a.0, &b.0);
    x.ts.total_cmp(&y.ts)
        .then(x.src_ip.cmp(&y.src_ip))
        .then(x.dst_ip.cmp(&y.dst_ip))
        .then(x.src_port.cmp(&y.src_port))
        .then(x.dst_port.cmp(&y.dst_port))
        .then(x.dns_id.cmp(&y.dns_id))
        .then(x.ip_id.cmp(&y.ip_id))
        .then(x.udp_len.cmp(&y.udp_len))
        .then(a.1.cmp(&b.1))
}

pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<Scenario> {
    cfg.validate()?;
    let pools = evolve_pools(cfg);

    let mut instances = Vec::new();
    for (i, a) in cfg.attacks.iter().enumerate() {
        let pool_name = a.pool.clone().unwrap_or_else(|| private_pool(i));
        for r in 0..a.repeat_days {
            let id = instances.len();
            let offset = a.start + r as f64 * SECONDS_PER_DAY;
            let day_index = (offset / SECONDS_PER_DAY).floor() as u32;
            let members = &pools[&pool_name][day_index as usize];
            let mut rng = rng_for(cfg.seed, STREAM_ATTACK, (id as u64) << 1 | 1);
            let amplifiers = index::sample(&mut rng, members.len(), a.amplifiers_per_attack as usize)
                .into_iter()
                .map(|k| members[k])
                .collect();
            instances.push(Instance {
                id,
                spec: i,
                day_index,
                start_ts: micros(cfg.start_day as f64 * SECONDS_PER_DAY + offset),
                amplifiers,
            });
        }
    }

    let attack_parts: Vec<(Vec<Tagged>, u64, u64, Vec<HoneypotRequest>, BTreeSet<u32>)> = instances
        .par_iter()
        .map(|inst| {
            let mut rng = rng_for(cfg.seed, STREAM_ATTACK, (inst.id as u64) << 1);
            let (pkts, original, requests) = attack_stream(cfg, inst, &mut rng);
            let a = &cfg.attacks[inst.spec];
            let (hp, sensors) = if a.honeypot_visible {
                let sensors = pick_sensors(cfg, &mut rng);
                let q = dnsname::normalize(&a.qname);
                let hp = honeypot_requests(a.victim_ip, &q, a.qtype, inst.start_ts, a.duration, a.honeypot_rate, &sensors, &mut rng);
                (hp, sensors)
            } else {
                (Vec::new(), BTreeSet::new())
            };
            (pkts, original, requests, hp, sensors)
        })
        .collect();

    let background: Vec<Vec<Tagged>> = (0..cfg.background.clients)
        .into_par_iter()
        .map(|c| background_stream(cfg, c, &mut rng_for(cfg.seed, STREAM_BACKGROUND, c as u64)))
        .collect();

    let scan_names: Vec<String> = {
        let set: BTreeSet<String> = cfg.attacks.iter().map(|a| dnsname::normalize(&a.qname)).collect();
        if set.is_empty() {
            vec![".".to_string()]
        } else {
            set.into_iter().collect()
        }
    };
    let scanners: Vec<Vec<Tagged>> = (0..cfg.scanners)
        .into_par_iter()
        .map(|s| scanner_stream(cfg, s, &scan_names, &mut rng_for(cfg.seed, STREAM_SCANNER, s as u64)))
        .collect();

    let hp_only: Vec<(PlantedHoneypotAttack, Vec<HoneypotRequest>)> = {
        let h = &cfg.honeypot_only;
        let mut victims = Allocator::new(150);
        (0..h.count)
            .map(|k| {
                let victim = victims.take();
                let mut rng = rng_for(cfg.seed, STREAM_HONEYPOT_ONLY, k as u64);
                let duration = rng.random_range(h.min_duration..=h.max_duration);
                let day = rng.random_range(0..cfg.duration_days);
                let start = micros(
                    (cfg.start_day + day as i64) as f64 * SECONDS_PER_DAY
                        + rng.random::<f64>() * (SECONDS_PER_DAY - duration),
                );
                let qname = dnsname::normalize(&h.qnames[rng.random_range(0..h.qnames.len())]);
                let sensors = pick_sensors(cfg, &mut rng);
                let reqs = honeypot_requests(victim, &qname, trace::QTYPE_ANY, start, duration, h.rate, &sensors, &mut rng);
                let planted = PlantedHoneypotAttack {
                    victim_ip: victim,
                    start,
                    end: start + duration,
                    requests: reqs.len() as u64,
                    sensors,
                    attack: None,
                };
                (planted, reqs)
            })
            .collect()
    };

    let mut truth = GroundTruth {
        sampling_denominator: cfg.sampling_denominator,
        attacks: Vec::with_capacity(instances.len()),
        daily_pool_sets: pools
            .iter()
            .map(|(name, days)| {
                let per_day = days
                    .iter()
                    .enumerate()
                    .map(|(d, m)| (cfg.start_day + d as i64, m.iter().copied().collect()))
                    .collect();
                (name.clone(), per_day)
            })
            .collect(),
        honeypot_attacks: Vec::new(),
        background_packets: background.iter().map(|b| b.len() as u64).sum(),
        scanner_packets: scanners.iter().map(|s| s.len() as u64).sum(),
    };

    let mut tagged: Vec<Tagged> = Vec::new();
    let mut log: Vec<HoneypotRequest> = Vec::new();
    for (inst, (pkts, original, requests, hp, sensors)) in instances.iter().zip(attack_parts) {
        let a = &cfg.attacks[inst.spec];
        if a.honeypot_visible {
            truth.honeypot_attacks.push(PlantedHoneypotAttack {
                victim_ip: a.victim_ip,
                start: inst.start_ts,
                end: inst.start_ts + a.duration,
                requests: hp.len() as u64,
                sensors: sensors.clone(),
                attack: Some(inst.id),
            });
        }
        truth.attacks.push(PlantedAttack {
            id: inst.id,
            spec: inst.spec,
            victim_ip: a.victim_ip,
            qname: dnsname::normalize(&a.qname),
            day: cfg.start_day + inst.day_index as i64,
            start_ts: inst.start_ts,
            end_ts: inst.start_ts + a.duration,
            original_packets: original,
            sampled_packets: pkts.len() as u64,
            sampled_requests: requests,
            amplifiers: inst.amplifiers.iter().copied().collect(),
            dns_id_mode: a.dns_id_mode,
            entity: a.entity.clone(),
            honeypot_visible: a.honeypot_visible,
            honeypot_requests: hp.len() as u64,
            sensors,
        });
        tagged.extend(pkts);
        log.extend(hp);
    }
    for (planted, reqs) in hp_only {
        truth.honeypot_attacks.push(planted);
        log.extend(reqs);
    }
    tagged.extend(background.into_iter().flatten());
    tagged.extend(scanners.into_iter().flatten());
    tagged.par_sort_by(packet_key);
    log.sort_by(|a, b| {
        a.ts.total_cmp(&b.ts)
            .then(a.sensor_id.cmp(&b.sensor_id))
            .then(a.victim_ip.cmp(&b.victim_ip))
    });

    let (trace, labels) = tagged.into_iter().unzip();
    Ok(Scenario {
        trace,
        labels,
        honeypot_log: log,
        truth,
    })
}

/// Indices kept when each of `n` packets is sampled with probability
/// 1/`denominator`.
pub fn sample_indices(n: usize, denominator: u32, seed: u64) -> Vec<usize> {
    if denominator <= 1 {
        return (0..n).collect();
    }
    let mut rng = rng_for(seed, STREAM_SAMPLING, 0);
    (0..n).filter(|_| rng.random_ratio(1, denominator)).collect()
}

pub fn apply_sampling(trace: &[PacketRecord], denominator: u32, seed: u64) -> Vec<PacketRecord> {
    sample_indices(trace.len(), denominator, seed)
        .into_iter()
        .map(|i| trace[i].clone())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    pub seed: u64,
    pub resolvers: u32,
    pub forwarders: u32,
    /// Freshly registered names nobody else has asked for.
    pub anchor_names: Vec<String>,
    pub popular_names: Vec<String>,
    pub default_ttl: u32,
    /// Chance a popular name is already cached.
    pub hit_probability: f64,
    /// Chance an anchor answer still arrives with a reduced TTL.
    pub anchor_error_rate: f64,
    pub refused: u32,
    pub manipulators: u32,
    pub duplicates: u32,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            seed: 1,
            resolvers: 600,
            forwarders: 400,
            anchor_names: vec!["anchor-1.probe.example.".into(), "anchor-2.probe.example.".into()],
            popular_names: vec!["www.example.com.".into(), "cdn.example.org.".into()],
            default_ttl: 3_600,
            hit_probability: 0.6,
            anchor_error_rate: 0.02,
            refused: 50,
            manipulators: 20,
            duplicates: 30,
        }
    }
}

/// Recorded probe responses and the default-TTL table of the probed names.
pub fn generate_probe_responses(cfg: &ProbeConfig) -> Result<(Vec<ProbeResponse>, BTreeMap<String, u32>)> {
    if cfg.anchor_names.is_empty() && cfg.popular_names.is_empty() {
        return Err(Error::config("probe scenario needs at least one name"));
    }
    if cfg.default_ttl < 2 {
        return Err(Error::config("default_ttl must be >= 2"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let names: Vec<(String, bool)> = cfg
        .anchor_names
        .iter()
        .map(|n| (dnsname::normalize(n), true))
        .chain(cfg.popular_names.iter().map(|n| (dnsname::normalize(n), false)))
        .collect();
    let table = names.iter().map(|(n, _)| (n.clone(), cfg.default_ttl)).collect();
    let upstreams: Vec<IpAddr> = (0..8).map(|i| indexed_v4(80, i)).collect();
    let mut out = Vec::new();
    let total = cfg.resolvers + cfg.forwarders;
    for i in 0..total {
        let responder = indexed_v4(20, i);
        let echo = if i < cfg.resolvers {
            responder
        } else {
            upstreams[rng.random_range(0..upstreams.len())]
        };
        let (qname, anchor) = names[i as usize % names.len()].clone();
        let cached = if anchor {
            rng.random_bool(cfg.anchor_error_rate)
        } else {
            rng.random_bool(cfg.hit_probability)
        };
        let ttl = if cached { rng.random_range(1..cfg.default_ttl) } else { cfg.default_ttl };
        out.push(ProbeResponse {
            target_ip: responder,
            responder_ip: responder,
            echoed_a_record: Some(echo),
            qname,
            answer_ttls: vec![AnswerTtl { rr_type: 1, ttl }],
            rcode: 0,
            default_ttl_hint: None,
        });
    }
    for k in 0..cfg.duplicates.min(total) {
        let mut dup = out[k as usize].clone();
        dup.answer_ttls[0].ttl = rng.random_range(1..cfg.default_ttl);
        out.push(dup);
    }
    for k in 0..cfg.refused {
        let ip = indexed_v4(21, k);
        out.push(ProbeResponse {
            target_ip: ip,
            responder_ip: ip,
            echoed_a_record: None,
            qname: names[0].0.clone(),
            answer_ttls: Vec::new(),
            rcode: RCODE_REFUSED,
            default_ttl_hint: None,
        });
    }
    for k in 0..cfg.manipulators {
        let ip = indexed_v4(22, k);
        let bogus_ttl = k % 2 == 0;
        out.push(ProbeResponse {
            target_ip: ip,
            responder_ip: ip,
            echoed_a_record: Some(if bogus_ttl { ip } else { IpAddr::V4(Ipv4Addr::new(10, 0, 0, 1)) }),
            qname: names[0].0.clone(),
            answer_ttls: vec![AnswerTtl {
                rr_type: 1,
                ttl: if bogus_ttl { cfg.default_ttl * 24 } else { cfg.default_ttl },
            }],
            rcode: 0,
            default_ttl_hint: None,
        });
    }
    Ok((out, table))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ScenarioConfig {
        ScenarioConfig {
            seed: 9,
            duration_days: 2,
            background: BackgroundConfig {
                clients: 20,
                ..Default::default()
            },
            attacks: vec![AttackSpec {
                victim_ip: "203.0.113.5".parse().unwrap(),
                qname: "big.example.gov".into(),
                qtype: trace::QTYPE_ANY,
                qps: 100.0,
                start: 3_600.0,
                duration: 3_600.0,
                repeat_days: 2,
                amplifier_pool_size: 50,
                amplifiers_per_attack: 10,
                pool: None,
                dns_id_mode: DnsIdMode::PureParity,
                honeypot_visible: true,
                honeypot_rate: 0.05,
                entity: Some("gov".into()),
                response_ratio: 0.8,
                response_size: 3_500,
                request_ttl: 52,
            }],
            ..Default::default()
        }
    }

    #[test]
    fn deterministic() {
        let a = generate_scenario(&small()).unwrap();
        let b = generate_scenario(&small()).unwrap();
        assert_eq!(a, b);
        let mut other = small();
        other.seed = 10;
        assert_ne!(generate_scenario(&other).unwrap().trace, a.trace);
    }

    #[test]
    fn pure_parity_and_recount() {
        let s = generate_scenario(&small()).unwrap();
        assert_eq!(s.truth.attacks.len(), 2);
        for a in &s.truth.attacks {
            let pkts: Vec<&PacketRecord> = s
                .trace
                .iter()
                .zip(&s.labels)
                .filter(|(_, l)| **l == Some(a.id))
                .map(|(r, _)| r)
                .collect();
            assert_eq!(pkts.len() as u64, a.sampled_packets);
            assert_eq!(pkts.iter().filter(|r| !r.is_response).count() as u64, a.sampled_requests);
            let parity = pkts[0].dns_id % 2;
            assert!(pkts.iter().all(|r| r.dns_id % 2 == parity));
            assert!(pkts.iter().all(|r| r.day() == a.day && a.amplifiers.contains(&r.server_ip())));
            assert_eq!(a.original_packets, 360_000);
        }
        assert!(s.trace.windows(2).all(|w| w[0].ts <= w[1].ts));
        assert!(s.honeypot_log.iter().all(|r| r.qname == "big.example.gov."));
    }

    #[test]
    fn invalid_configs() {
        let mut c = small();
        c.attacks[0].amplifiers_per_attack = 51;
        assert!(matches!(generate_scenario(&c), Err(Error::Config(_))));
        let mut c = small();
        c.attacks[0].repeat_days = 3;
        assert!(generate_scenario(&c).is_err());
        let mut c = small();
        c.churn_retention = 0.0;
        assert!(generate_scenario(&c).is_err());
        let mut c = small();
        c.attacks[0].pool = Some("missing".into());
        assert!(generate_scenario(&c).is_err());
    }

    #[test]
    fn churn_retention_one_keeps_pool() {
        let mut c = small();
        c.duration_days = 5;
        let s = generate_scenario(&c).unwrap();
        let days = &s.truth.daily_pool_sets["attack-0"];
        assert_eq!(days.len(), 5);
        assert!(days.values().all(|d| d == days.values().next().unwrap()));
    }

    #[test]
    fn sampling() {
        let s = generate_scenario(&ScenarioConfig {
            sampling_denominator: 1,
            background: BackgroundConfig {
                clients: 2,
                queries_per_day: 500.0,
                ..Default::default()
            },
            ..Default::default()
        })
        .unwrap();
        assert_eq!(apply_sampling(&s.trace, 1, 5), s.trace);
        assert_eq!(sample_indices(1000, 10, 3), sample_indices(1000, 10, 3));
        let kept = sample_indices(160_000, 16_000, 11).len() as f64;
        assert!((kept - 10.0).abs() <= 3.0 * (10.0f64 * (1.0 - 1.0 / 16_000.0)).sqrt());
    }

    #[test]
    fn config_round_trip() {
        let c = small();
        let t = toml::to_string(&c).unwrap();
        assert_eq!(ScenarioConfig::from_toml(&t).unwrap(), c);
        let minimal = ScenarioConfig::from_toml("seed = 3\nduration_days = 4\n").unwrap();
        assert_eq!(minimal.sampling_denominator, 16_000);
    }

    #[test]
    fn probes() {
        let (r, table) = generate_probe_responses(&ProbeConfig::default()).unwrap();
        assert_eq!(table.len(), 4);
        assert_eq!(r.len(), 600 + 400 + 30 + 50 + 20);
        assert_eq!(generate_probe_responses(&ProbeConfig::default()).unwrap().0, r);
    }
}
