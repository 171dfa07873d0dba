use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::IpAddr;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::config::{pick, require, PipelineConfig};
use super::{Command, Common, Failure};
use crate::amplifiers::{self, Recency};
use crate::detect::{self, AttackEvent, DetectorConfig};
use crate::error::Error;
use crate::estimate;
use crate::fingerprint::{self, CardinalityProfile, DnsIdPattern, EntityFingerprint, HeaderField};
use crate::honeypot::{self, InferenceConfig};
use crate::prefix::PrefixTable;
use crate::selectors::{self, MisusedNameList, SelectorId, SelectorRanking};
use crate::snoop;
use crate::synth::{self, ProbeConfig, ScenarioConfig};
use crate::trace::{self, PacketRecord, TraceMeta};
use crate::{dnsname, Result};

type Outcome = std::result::Result<(), Failure>;

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = create(path)?;
    for it in items {
        serde_json::to_writer(&mut w, it)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::input(format!("{} line {}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

fn read_trace(path: &Path, meta: &TraceMeta) -> Result<Vec<PacketRecord>> {
    Ok(trace::parse_trace(open(path)?, meta)?.records)
}

fn setup(common: &Common) -> Result<(PipelineConfig, PathBuf)> {
    let cfg = PipelineConfig::load(common.config.as_deref())?;
    let out = common.out.clone().or(cfg.out.clone()).unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", out.display()))))?;
    Ok((cfg, out))
}

pub(crate) fn dispatch(cmd: Command) -> Outcome {
    match cmd {
        Command::Ingest { common, trace, prefix_table, sampling, truncation } => {
            ingest(&common, trace, prefix_table, sampling, truncation)
        }
        Command::SelectNames { common, trace, k_max, honeypot, slack } => {
            select_names(&common, trace, k_max, honeypot, slack)
        }
        Command::Detect { common, trace, names, share_threshold, min_packets, sampling } => {
            detect(&common, trace, names, share_threshold, min_packets, sampling)
        }
        Command::Fingerprint { common, attacks, fingerprint_spec, min_segment } => {
            fingerprint(&common, attacks, fingerprint_spec, min_segment)
        }
        Command::Cluster { common, attacks, eps, min_pts, min_attacks, min_amps, seen_table, ns_table } => {
            cluster(&common, attacks, eps, min_pts, min_attacks, min_amps, seen_table, ns_table)
        }
        Command::Estimate { common, records, reference_names, min_step, min_days, edns } => {
            estimate(&common, records, reference_names, min_step, min_days, edns)
        }
        Command::Snoop { common, responses, ttl_table, resolvers, anchors } => {
            snoop(&common, responses, ttl_table, resolvers, anchors)
        }
        Command::Synth { config, seed, probe_config, out } => synth(&config, seed, probe_config, out),
        Command::Compare { common, attacks, honeypot, min_requests, max_gap, slack } => {
            compare(&common, attacks, honeypot, min_requests, max_gap, slack)
        }
        Command::Report { common, dir } => report(&common, dir),
    }
}

#[derive(Serialize)]
struct IngestSummary {
    records: usize,
    skipped_lines: usize,
    dropped_packets: usize,
    dropped_bytes: u64,
    annotated: bool,
    time_range: Option<(f64, f64)>,
}

fn ingest(
    common: &Common,
    trace_path: Option<PathBuf>,
    prefix_table: Option<PathBuf>,
    sampling: Option<u32>,
    truncation: Option<u32>,
) -> Outcome {
    let (cfg, out) = setup(common)?;
    let trace_path = require(trace_path, cfg.trace.clone(), "trace")?;
    let meta = TraceMeta {
        sampling_denominator: pick(sampling, cfg.sampling, 16_000),
        truncation_bytes: pick(truncation, cfg.truncation, 128),
        time_range: None,
    };
    let parsed = trace::parse_trace(open(&trace_path)?, &meta)?;
    let clean = trace::sanitize(parsed.records);
    let mut records = clean.kept;
    let table = prefix_table.or(cfg.prefix_table);
    if let Some(p) = &table {
        trace::annotate(&mut records, &PrefixTable::from_csv(open(p)?)?);
    }
    trace::sort_by_time(&mut records);
    let mut w = create(&out.join("trace.jsonl"))?;
    trace::write_trace(&mut w, &records)?;
    w.flush()?;
    let summary = IngestSummary {
        records: records.len(),
        skipped_lines: parsed.skipped,
        dropped_packets: clean.dropped_packets,
        dropped_bytes: clean.dropped_bytes,
        annotated: table.is_some(),
        time_range: records.first().zip(records.last()).map(|(a, b)| (a.ts, b.ts)),
    };
    write_json(&out.join("ingest.json"), &summary)?;
    println!(
        "ingested {} records ({} undecodable lines, {} malformed packets dropped)",
        summary.records, summary.skipped_lines, summary.dropped_packets
    );
    Ok(())
}

#[derive(Serialize)]
struct RankingRow<'a> {
    selector: SelectorId,
    rank: usize,
    qname: &'a str,
    score: u64,
}

fn select_names(
    common: &Common,
    trace_path: Option<PathBuf>,
    k_max: Option<usize>,
    honeypot: Option<PathBuf>,
    slack: Option<f64>,
) -> Outcome {
    let (cfg, out) = setup(common)?;
    let trace_path = require(trace_path, cfg.trace.clone(), "trace")?;
    let k_max = pick(k_max, cfg.k_max, selectors::DEFAULT_K_MAX);
    if k_max < 1 {
        return Err(Failure::Usage("--k-max must be >= 1".into()));
    }
    let slack = pick(slack, cfg.slack, selectors::DEFAULT_SLACK_SECONDS);
    let records = read_trace(&trace_path, &TraceMeta::default())?;
    let r1 = selectors::selector_max_size(&records, k_max);
    let r2 = selectors::selector_any_volume(&records, k_max);
    let r3 = match honeypot.or(cfg.honeypot.clone()) {
        Some(p) => {
            let log = honeypot::read_log(open(&p)?)?;
            let events = honeypot::infer_honeypot_attacks(&log, inference(&cfg, None, None));
            selectors::selector_ground_truth(&records, &events, k_max, slack).ranking
        }
        None => SelectorRanking {
            selector: SelectorId::GroundTruth,
            ranked: Vec::new(),
        },
    };
    let names = selectors::consensus_merge(&r1, &r2, &r3, k_max);
    fs::write(out.join("misused_names.json"), names.to_json())?;
    fs::write(out.join("misused_names.txt"), names.to_plain())?;
    let rows: Vec<RankingRow> = [&r1, &r2, &r3]
        .iter()
        .flat_map(|r| {
            r.ranked.iter().enumerate().map(|(i, (q, s))| RankingRow {
                selector: r.selector,
                rank: i + 1,
                qname: q,
                score: *s,
            })
        })
        .collect();
    write_csv(&out.join("rankings.csv"), &rows)?;
    println!("k* = {}, {} misused names", names.k_star, names.len());
    if !names.missing_selectors.is_empty() {
        println!("selectors without candidates: {:?}", names.missing_selectors);
    }
    Ok(())
}

fn inference(cfg: &PipelineConfig, min_requests: Option<usize>, max_gap: Option<f64>) -> InferenceConfig {
    InferenceConfig {
        min_requests: pick(min_requests, cfg.min_requests, honeypot::DEFAULT_MIN_REQUESTS),
        max_gap_s: pick(max_gap, cfg.max_gap, honeypot::DEFAULT_MAX_GAP_S),
    }
}

#[derive(Serialize)]
struct DurationRow {
    percentile: u8,
    seconds: f64,
}

fn detect(
    common: &Common,
    trace_path: Option<PathBuf>,
    names_path: Option<PathBuf>,
    share_threshold: Option<f64>,
    min_packets: Option<u64>,
    sampling: Option<u32>,
) -> Outcome {
    let (cfg, out) = setup(common)?;
    let trace_path = require(trace_path, cfg.trace.clone(), "trace")?;
    let names_path = require(names_path, cfg.names.clone(), "names")?;
    let meta = TraceMeta::with_sampling(pick(sampling, cfg.sampling, 16_000));
    let dcfg = DetectorConfig {
        share_threshold: pick(share_threshold, cfg.share_threshold, 0.9),
        min_sampled_packets: pick(min_packets, cfg.min_packets, 10),
    };
    dcfg.validate()?;
    let records = read_trace(&trace_path, &meta)?;
    let names = MisusedNameList::from_json(&read_text(&names_path)?)?;
    let stats = detect::aggregate_client_days(&records, &names);
    let mut events = detect::detect_attacks(&stats, &records, &names, &dcfg, &meta)?;
    detect::intensity_deciles(&mut events);
    write_jsonl(&out.join("attacks.jsonl"), &events)?;
    write_csv(&out.join("client_days.csv"), &stats)?;
    let summary = detect::victim_summary(&events);
    let mut daily = summary.daily.clone();
    daily.push(summary.total.clone());
    write_csv(&out.join("victim_summary.csv"), &daily)?;
    let durations: Vec<DurationRow> = summary
        .duration_percentiles
        .iter()
        .map(|&(percentile, seconds)| DurationRow { percentile, seconds })
        .collect();
    write_csv(&out.join("durations.csv"), &durations)?;
    let attack_qnames: Vec<BTreeSet<String>> =
        events.iter().map(|e| e.qname_counts.keys().cloned().collect()).collect();
    write_csv(&out.join("tld_report.csv"), &selectors::tld_report(&names, &records, &attack_qnames))?;
    println!(
        "{} attack events, {} victims, {} client-days with misused traffic",
        events.len(),
        summary.total.victims,
        stats.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct PatternRow {
    event_index: usize,
    victim_ip: IpAddr,
    day: i64,
    dominant_qname: Option<String>,
    pattern: Option<DnsIdPattern>,
    cardinality: Vec<CardinalityProfile>,
    ingress_concentration: Option<f64>,
    ttl_values: usize,
}

fn fingerprint(
    common: &Common,
    attacks: Option<PathBuf>,
    spec: Option<PathBuf>,
    min_segment: Option<usize>,
) -> Outcome {
    let (cfg, out) = setup(common)?;
    let attacks = require(attacks, cfg.attacks.clone(), "attacks")?;
    let min_segment = pick(min_segment, cfg.min_segment, fingerprint::DEFAULT_MIN_SEGMENT);
    let events: Vec<AttackEvent> = read_jsonl(&attacks)?;
    let rows: Vec<PatternRow> = events
        .iter()
        .enumerate()
        .map(|(i, e)| PatternRow {
            event_index: i,
            victim_ip: e.victim_ip,
            day: e.day,
            dominant_qname: e.dominant_qname().map(str::to_string),
            pattern: fingerprint::classify_dnsid_pattern(e, min_segment).ok(),
            cardinality: [HeaderField::IpId, HeaderField::SrcPort, HeaderField::DnsId]
                .into_iter()
                .filter_map(|f| fingerprint::field_cardinality_profile(e, f).ok())
                .collect(),
            ingress_concentration: e.ingress_concentration(),
            ttl_values: e.ip_ttl_counts.len(),
        })
        .collect();
    write_jsonl(&out.join("patterns.jsonl"), &rows)?;
    let timeline = fingerprint::build_name_timeline(&events, &BTreeSet::new());
    write_json(&out.join("timeline.json"), &timeline)?;
    println!(
        "{} events, {} name transitions, parity period {:?}",
        events.len(),
        timeline.transitions.len(),
        timeline.parity_alternation_days
    );
    if let Some(p) = spec.or(cfg.fingerprint_spec) {
        let fp: EntityFingerprint = serde_json::from_str(&read_text(&p)?)
            .map_err(|e| Error::config(format!("{}: {e}", p.display())))?;
        fp.validate()?;
        let report = fingerprint::attribute_entity(&events, &fp, min_segment);
        write_jsonl(&out.join("attribution.jsonl"), &report.rows)?;
        println!("attributed {} of {} events ({:.1}%)", report.attributed, events.len(), 100.0 * report.share);
    }
    Ok(())
}

#[derive(Serialize)]
struct ClusterRow {
    event_index: usize,
    victim_ip: IpAddr,
    day: i64,
    cluster: Option<usize>,
}

#[derive(Serialize)]
struct ChurnOut {
    days: Vec<i64>,
    overlaps: Vec<f64>,
    mean_overlap: f64,
    first_last: f64,
}

#[derive(Serialize)]
struct RecencyRow {
    ip: IpAddr,
    first_abuse: chrono::NaiveDate,
    status: Recency,
}

#[derive(Serialize)]
struct DistributionRow {
    kind: &'static str,
    value: usize,
    count: usize,
}

#[derive(Serialize)]
struct RoleRow<'a> {
    qname: &'a str,
    role: amplifiers::Role,
    amplifiers: usize,
}

fn histogram(values: impl Iterator<Item = usize>, kind: &'static str) -> Vec<DistributionRow> {
    let mut h: BTreeMap<usize, usize> = BTreeMap::new();
    for v in values {
        *h.entry(v).or_insert(0) += 1;
    }
    h.into_iter().map(|(value, count)| DistributionRow { kind, value, count }).collect()
}

#[allow(clippy::too_many_arguments)]
fn cluster(
    common: &Common,
    attacks: Option<PathBuf>,
    eps: Option<f64>,
    min_pts: Option<usize>,
    min_attacks: Option<usize>,
    min_amps: Option<usize>,
    seen_table: Option<PathBuf>,
    ns_table: Option<PathBuf>,
) -> Outcome {
    let (cfg, out) = setup(common)?;
    let attacks = require(attacks, cfg.attacks.clone(), "attacks")?;
    let eps = pick(eps, cfg.eps, amplifiers::DEFAULT_EPS);
    let min_pts = pick(min_pts, cfg.min_pts, amplifiers::DEFAULT_MIN_PTS);
    let seen = match seen_table.or(cfg.seen_table.clone()) {
        Some(p) => Some(amplifiers::read_seen_table(open(&p)?)?),
        None => None,
    };
    let ns = match ns_table.or(cfg.ns_table.clone()) {
        Some(p) => amplifiers::read_ns_table(open(&p)?)?,
        None => BTreeMap::new(),
    };
    let events: Vec<AttackEvent> = read_jsonl(&attacks)?;
    let sets = amplifiers::amplifier_sets(&events);
    let matrix = amplifiers::jaccard_distance_matrix(&sets);
    let clusters = amplifiers::dbscan_cluster(&matrix, eps, min_pts)?;
    let rows: Vec<ClusterRow> = events
        .iter()
        .zip(&clusters.labels)
        .enumerate()
        .map(|(i, (e, l))| ClusterRow {
            event_index: i,
            victim_ip: e.victim_ip,
            day: e.day,
            cluster: *l,
        })
        .collect();
    write_csv(&out.join("clusters.csv"), &rows)?;
    amplifiers::write_matrix_csv(create(&out.join("distance_matrix.csv"))?, &matrix)?;
    let stable = amplifiers::stable_sets(
        &events,
        &clusters,
        &sets,
        pick(min_attacks, cfg.min_attacks, amplifiers::DEFAULT_MIN_ATTACKS),
        pick(min_amps, cfg.min_amps, amplifiers::DEFAULT_MIN_AMPS),
    );
    write_jsonl(&out.join("stable_sets.jsonl"), &stable)?;

    let daily = amplifiers::daily_amplifier_sets(&events);
    let nonempty: Vec<(i64, &amplifiers::AmplifierSet)> =
        daily.iter().filter(|(_, s)| !s.is_empty()).map(|(d, s)| (*d, s)).collect();
    if nonempty.len() >= 2 {
        let day_sets: Vec<amplifiers::AmplifierSet> = nonempty.iter().map(|(_, s)| (*s).clone()).collect();
        let c = amplifiers::churn_metrics(&day_sets)?;
        write_json(
            &out.join("churn.json"),
            &ChurnOut {
                days: nonempty.iter().map(|(d, _)| *d).collect(),
                overlaps: c.overlaps,
                mean_overlap: c.mean_overlap,
                first_last: c.first_last,
            },
        )?;
        println!("mean day-over-day amplifier retention {:.3}", c.mean_overlap);
    }
    write_csv(&out.join("new_vs_known.csv"), &amplifiers::new_vs_known(&events))?;

    let counts = amplifiers::attacks_per_amplifier(&events);
    let empty = BTreeMap::new();
    let infos = amplifiers::classify_amplifier_role(&counts, &ns, seen.as_ref().unwrap_or(&empty));
    write_csv(&out.join("amplifiers.csv"), &infos)?;
    let mut dist = histogram(counts.values().copied(), "attacks_per_amplifier");
    dist.extend(histogram(sets.iter().map(|s| s.len()), "amplifiers_per_attack"));
    write_csv(&out.join("distributions.csv"), &dist)?;
    let roles = amplifiers::roles_by_qname(&events, &infos);
    let role_rows: Vec<RoleRow> = roles
        .iter()
        .flat_map(|(q, m)| m.iter().map(move |(role, n)| RoleRow { qname: q, role: *role, amplifiers: *n }))
        .collect();
    write_csv(&out.join("roles_by_qname.csv"), &role_rows)?;
    if let Some(seen) = &seen {
        let first = amplifiers::first_abuse_days(&events);
        let rec = amplifiers::recency_join(&first, seen);
        let rows: Vec<RecencyRow> = rec
            .per_amplifier
            .iter()
            .map(|(ip, status)| RecencyRow {
                ip: *ip,
                first_abuse: amplifiers::epoch_day_to_date(first[ip]),
                status: *status,
            })
            .collect();
        write_csv(&out.join("recency.csv"), &rows)?;
        println!(
            "scan coverage {:.1}%, {} amplifiers abused before discovery",
            100.0 * rec.coverage,
            rec.pre_discovery
        );
    }
    println!(
        "{} events, {} clusters, {:.1}% noise, {} stable sets",
        events.len(),
        clusters.n_clusters,
        100.0 * clusters.noise_fraction(),
        stable.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct PlateauRow<'a> {
    owner: &'a str,
    start: chrono::NaiveDate,
    end: chrono::NaiveDate,
    days: usize,
    height: u64,
}

fn reference_list(arg: &str) -> Result<Vec<String>> {
    let path = Path::new(arg);
    let raw = if path.is_file() {
        read_text(path)?.lines().map(str::to_string).collect::<Vec<_>>()
    } else {
        arg.split(',').map(str::to_string).collect()
    };
    Ok(raw
        .iter()
        .map(|s| s.trim())
        .filter(|s| !s.is_empty() && !s.starts_with('#'))
        .map(dnsname::normalize)
        .collect())
}

fn estimate(
    common: &Common,
    records: Option<PathBuf>,
    reference_names: Option<String>,
    min_step: Option<u64>,
    min_days: Option<usize>,
    edns: bool,
) -> Outcome {
    let (cfg, out) = setup(common)?;
    let records = require(records, cfg.records.clone(), "records")?;
    let min_step = pick(min_step, cfg.min_step, estimate::DEFAULT_MIN_STEP);
    let min_days = pick(min_days, cfg.min_days, estimate::DEFAULT_MIN_DAYS);
    let edns = edns || cfg.edns.unwrap_or(false);
    let sets = estimate::read_record_sets(open(&records)?)?;
    let estimates = estimate::estimate_all(&sets)?;
    estimate::write_estimates_csv(create(&out.join("estimates.csv"))?, &estimates)?;
    if let Some(arg) = reference_names.or(cfg.reference_names.clone()) {
        let refs = reference_list(&arg)?;
        let report = estimate::rank_amplification(&estimates, &refs, edns)?;
        write_csv(&out.join("ranking.csv"), &report.rows)?;
        println!(
            "{} names above the reference maximum of {} bytes",
            report.above_reference, report.reference_max
        );
    }
    let mut plateaus = Vec::new();
    let series = estimate::daily_series(&estimates);
    for (owner, points) in &series {
        if points.len() < min_days {
            continue;
        }
        let sizes: Vec<u64> = points.iter().map(|p| p.1).collect();
        for p in estimate::detect_rollover_plateaus(&sizes, min_days, min_step)? {
            plateaus.push(PlateauRow {
                owner,
                start: points[p.start].0,
                end: points[p.end].0,
                days: p.days,
                height: p.height,
            });
        }
    }
    write_jsonl(&out.join("plateaus.jsonl"), &plateaus)?;
    println!(
        "{} estimates, {} exceed 4096 bytes, {} plateaus",
        estimates.len(),
        estimates.iter().filter(|e| e.exceeds_edns).count(),
        plateaus.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct SnoopOut {
    summary: snoop::SnoopSummary,
    dropped_rcode: usize,
    dropped_echo: usize,
    dropped_ttl: usize,
    dropped_duplicate: usize,
}

fn snoop(
    common: &Common,
    responses: Option<PathBuf>,
    ttl_table: Option<PathBuf>,
    resolvers: Option<PathBuf>,
    anchors: Vec<String>,
) -> Outcome {
    let (cfg, out) = setup(common)?;
    let responses = require(responses, cfg.responses.clone(), "responses")?;
    let table = match ttl_table.or(cfg.ttl_table.clone()) {
        Some(p) => snoop::read_ttl_table(open(&p)?)?,
        None => BTreeMap::new(),
    };
    let known: Option<BTreeSet<IpAddr>> = match resolvers {
        Some(p) => Some(
            read_text(&p)?
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(|l| l.parse().map_err(|_| Error::config(format!("bad resolver address {l:?}"))))
                .collect::<Result<_>>()?,
        ),
        None => None,
    };
    let all = snoop::read_responses(open(&responses)?)?;
    let rep = snoop::sanitize_probe_responses(&all, &table, known.as_ref());
    let rows = snoop::classify_all(&rep.kept, &table);
    write_csv(&out.join("classified.csv"), &rows)?;
    let anchors: BTreeSet<String> = anchors.iter().map(|a| dnsname::normalize(a.trim())).collect();
    let summary = snoop::summarize(&rows, &anchors);
    println!(
        "{} of {} responses kept; kinds {:?}; anchor error rate {:?}",
        rep.kept.len(),
        all.len(),
        summary.kinds,
        summary.anchor_error_rate
    );
    write_json(
        &out.join("snoop_summary.json"),
        &SnoopOut {
            summary,
            dropped_rcode: rep.dropped_rcode,
            dropped_echo: rep.dropped_echo,
            dropped_ttl: rep.dropped_ttl,
            dropped_duplicate: rep.dropped_duplicate,
        },
    )?;
    Ok(())
}

fn synth(config: &Path, seed: Option<u64>, probe_config: Option<PathBuf>, out: Option<PathBuf>) -> Outcome {
    let out = out.unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out)?;
    let text = read_text(config)?;
    let mut cfg = if config.extension().is_some_and(|e| e == "json") {
        ScenarioConfig::from_json(&text)?
    } else {
        ScenarioConfig::from_toml(&text)?
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let scenario = synth::generate_scenario(&cfg)?;
    let mut w = create(&out.join("trace.jsonl"))?;
    trace::write_trace(&mut w, &scenario.trace)?;
    w.flush()?;
    honeypot::write_log(create(&out.join("honeypot.csv"))?, &scenario.honeypot_log)?;
    write_json(&out.join("truth.json"), &scenario.truth)?;
    println!(
        "{} trace records, {} planted attacks, {} honeypot requests",
        scenario.trace.len(),
        scenario.truth.attacks.len(),
        scenario.honeypot_log.len()
    );
    if let Some(p) = probe_config {
        let pc: ProbeConfig = toml::from_str(&read_text(&p)?)
            .map_err(|e| Error::config(format!("{}: {e}", p.display())))?;
        let (responses, table) = synth::generate_probe_responses(&pc)?;
        write_jsonl(&out.join("responses.jsonl"), &responses)?;
        let rows: Vec<(String, u32)> = table.into_iter().collect();
        let mut w = csv::Writer::from_writer(create(&out.join("ttl_table.csv"))?);
        w.write_record(["qname", "ttl"])?;
        for (q, t) in rows {
            w.write_record([q, t.to_string()])?;
        }
        w.flush()?;
        println!("{} probe responses", responses.len());
    }
    Ok(())
}

fn compare(
    common: &Common,
    attacks: Option<PathBuf>,
    honeypot_log: Option<PathBuf>,
    min_requests: Option<usize>,
    max_gap: Option<f64>,
    slack: Option<f64>,
) -> Outcome {
    let (cfg, out) = setup(common)?;
    let attacks = require(attacks, cfg.attacks.clone(), "attacks")?;
    let log_path = require(honeypot_log, cfg.honeypot.clone(), "honeypot")?;
    let slack = pick(slack, cfg.slack, honeypot::DEFAULT_MATCH_SLACK_S);
    let inf = inference(&cfg, min_requests, max_gap);
    if inf.min_requests < 1 || !(inf.max_gap_s >= 0.0) || !(slack >= 0.0) {
        return Err(Failure::Usage("thresholds must be non-negative and --min-requests >= 1".into()));
    }
    let events: Vec<AttackEvent> = read_jsonl(&attacks)?;
    let log = honeypot::read_log(open(&log_path)?)?;
    let hp = honeypot::infer_honeypot_attacks(&log, inf);
    write_jsonl(&out.join("honeypot_events.jsonl"), &hp)?;
    let rep = honeypot::overlap(&events, &hp, slack);
    write_json(&out.join("overlap.json"), &rep)?;
    let ic = honeypot::intensity_comparison(&rep, &events, &hp);
    write_json(&out.join("intensity.json"), &ic)?;
    write_csv(&out.join("convergence.csv"), &honeypot::convergence_curve(&hp))?;
    println!(
        "{} IXP events, {} honeypot events, {} mutual ({:.1}% / {:.1}%)",
        events.len(),
        hp.len(),
        rep.mutual.len(),
        100.0 * rep.ixp_fraction,
        100.0 * rep.hp_fraction
    );
    Ok(())
}

fn report(common: &Common, dir: Option<PathBuf>) -> Outcome {
    let (_cfg, out) = setup(common)?;
    let dir = dir.unwrap_or_else(|| out.clone());
    let mut report = serde_json::Map::new();
    let attacks = dir.join("attacks.jsonl");
    if attacks.is_file() {
        let events: Vec<AttackEvent> = read_jsonl(&attacks)?;
        let summary = detect::victim_summary(&events);
        let mut names: BTreeMap<String, usize> = BTreeMap::new();
        for e in &events {
            if let Some(q) = e.dominant_qname() {
                *names.entry(q.to_string()).or_insert(0) += 1;
            }
        }
        let mut top: Vec<(String, usize)> = names.into_iter().collect();
        top.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        top.truncate(10);
        println!("attacks: {} events on {} victims over {} days", events.len(), summary.total.victims, summary.daily.len());
        for (q, n) in &top {
            println!("  {n:>6}  {q}");
        }
        report.insert("attacks".into(), serde_json::to_value(&summary)?);
        report.insert("top_qnames".into(), serde_json::to_value(&top)?);
    }
    for (file, key) in [
        ("overlap.json", "overlap"),
        ("intensity.json", "intensity"),
        ("churn.json", "churn"),
        ("timeline.json", "timeline"),
        ("snoop_summary.json", "snoop"),
        ("ingest.json", "ingest"),
    ] {
        let p = dir.join(file);
        if p.is_file() {
            let v: serde_json::Value = serde_json::from_str(&read_text(&p)?)?;
            report.insert(key.into(), v);
            println!("{key}: {}", p.display());
        }
    }
    let attribution = dir.join("attribution.jsonl");
    if attribution.is_file() {
        let rows: Vec<serde_json::Value> = read_jsonl(&attribution)?;
        let n = rows.iter().filter(|r| r["attributed"] == serde_json::Value::Bool(true)).count();
        println!("attribution: {n} of {} events", rows.len());
        report.insert("attributed".into(), serde_json::json!({"events": rows.len(), "attributed": n}));
    }
    if report.is_empty() {
        return Err(Error::input(format!("no artifacts found in {}", dir.display())).into());
    }
    write_json(&out.join("report.json"), &report)?;
    Ok(())
}
