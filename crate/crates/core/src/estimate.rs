//! ANY-response size estimation from resource-record datasets, ranking of
//! amplification potential and detection of key-rollover size plateaus.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dnsname;
use crate::error::{Error, Result};

pub const DNS_HEADER_LEN: u64 = 12;
/// QTYPE and QCLASS.
pub const QUESTION_FIXED_LEN: u64 = 4;
/// TYPE, CLASS, TTL and RDLENGTH.
pub const RR_FIXED_LEN: u64 = 10;
/// An OPT record with the root owner and no options.
pub const EDNS_OPT_LEN: u64 = 11;
pub const EDNS_MAX_PAYLOAD: u64 = 4096;
pub const DEFAULT_MIN_DAYS: usize = 7;
pub const DEFAULT_MIN_STEP: u64 = 256;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceRecord {
    #[serde(rename = "type")]
    pub rr_type: u16,
    pub ttl: u32,
    pub rdata_len: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordSet {
    pub date: NaiveDate,
    #[serde(deserialize_with = "de_owner")]
    pub owner: String,
    pub records: Vec<ResourceRecord>,
}

fn de_owner<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<String, D::Error> {
    Ok(dnsname::normalize(&String::deserialize(d)?))
}

pub fn read_record_sets<R: BufRead>(input: R) -> Result<Vec<RecordSet>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::input(format!("records line {}: {e}", i + 1)))?,
        );
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeEstimate {
    pub owner: String,
    pub date: NaiveDate,
    pub est_bytes: u64,
    pub exceeds_edns: bool,
}

/// Header, question and every record with an uncompressed owner name.
pub fn estimate_any_response_size(rs: &RecordSet) -> Result<SizeEstimate> {
    if !dnsname::is_valid(&rs.owner) {
        return Err(Error::input(format!("invalid owner name {:?}", rs.owner)));
    }
    let wl = dnsname::wire_length(&rs.owner) as u64;
    let records: u64 = rs
        .records
        .iter()
        .map(|r| wl + RR_FIXED_LEN + r.rdata_len as u64)
        .sum();
    let est_bytes = DNS_HEADER_LEN + wl + QUESTION_FIXED_LEN + records;
    Ok(SizeEstimate {
        owner: rs.owner.clone(),
        date: rs.date,
        est_bytes,
        exceeds_edns: est_bytes > EDNS_MAX_PAYLOAD,
    })
}

pub fn estimate_all(sets: &[RecordSet]) -> Result<Vec<SizeEstimate>> {
    sets.par_iter().map(estimate_any_response_size).collect()
}

pub fn write_estimates_csv<W: Write>(out: W, estimates: &[SizeEstimate]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for e in estimates {
        w.serialize(e)?;
    }
    w.flush()?;
    Ok(())
}

/// Size of an ANY query for `owner`.
pub fn request_size(owner: &str, edns_opt: bool) -> u64 {
    DNS_HEADER_LEN
        + dnsname::wire_length(owner) as u64
        + QUESTION_FIXED_LEN
        + if edns_opt { EDNS_OPT_LEN } else { 0 }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankRow {
    pub owner: String,
    pub est_bytes: u64,
    /// Fraction of names with an estimate at most this one.
    pub cdf: f64,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankReport {
    pub rows: Vec<RankRow>,
    pub reference_max: u64,
    /// Names strictly above the largest reference name.
    pub above_reference: usize,
}

/// Each owner is represented by its largest estimate over all dates.
pub fn rank_amplification(
    estimates: &[SizeEstimate],
    reference_names: &[String],
    edns_opt: bool,
) -> Result<RankReport> {
    if reference_names.is_empty() {
        return Err(Error::input("reference name list is empty"));
    }
    let mut best: BTreeMap<&str, u64> = BTreeMap::new();
    for e in estimates {
        let v = best.entry(e.owner.as_str()).or_insert(0);
        *v = (*v).max(e.est_bytes);
    }
    let mut reference_max = 0;
    for name in reference_names {
        let name = dnsname::normalize(name);
        let v = best
            .get(name.as_str())
            .ok_or_else(|| Error::input(format!("reference name {name} has no estimate")))?;
        reference_max = reference_max.max(*v);
    }
    let mut ranked: Vec<(&str, u64)> = best.into_iter().collect();
    ranked.sort_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(b.0)));
    let n = ranked.len();
    let mut rows = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && ranked[j].1 == ranked[i].1 {
            j += 1;
        }
        for &(owner, est) in &ranked[i..j] {
            rows.push(RankRow {
                owner: owner.to_string(),
                est_bytes: est,
                cdf: j as f64 / n as f64,
                factor: est as f64 / request_size(owner, edns_opt) as f64,
            });
        }
        i = j;
    }
    Ok(RankReport {
        above_reference: rows.iter().filter(|r| r.est_bytes > reference_max).count(),
        rows,
        reference_max,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Plateau {
    /// Index of the first raised point.
    pub start: usize,
    /// Index of the last raised point.
    pub end: usize,
    pub days: usize,
    /// Step from the preceding point to the plateau level.
    pub height: u64,
}

/// Finds intervals that step up by at least `min_step`, stay within
/// `min_step / 4` of the first raised value and then step down by at least
/// `min_step`. `series` holds one size per consecutive day.
pub fn detect_rollover_plateaus(series: &[u64], min_days: usize, min_step: u64) -> Result<Vec<Plateau>> {
    if series.len() < min_days.max(2) {
        return Err(Error::input(format!(
            "series has {} points, need at least {}",
            series.len(),
            min_days.max(2)
        )));
    }
    let within = |v: u64, level: u64| 4 * v.abs_diff(level) <= min_step;
    let mut out = Vec::new();
    let mut i = 1;
    while i < series.len() {
        let (prev, level) = (series[i - 1], series[i]);
        if level < prev + min_step {
            i += 1;
            continue;
        }
        let mut j = i + 1;
        while j < series.len() && within(series[j], level) {
            j += 1;
        }
        if j < series.len() && series[j] + min_step <= series[j - 1] {
            out.push(Plateau {
                start: i,
                end: j - 1,
                days: j - i,
                height: level - prev,
            });
            i = j;
        } else {
            i += 1;
        }
    }
    Ok(out)
}

/// Daily series per owner, in date order, for plateau scans.
pub fn daily_series(estimates: &[SizeEstimate]) -> BTreeMap<String, Vec<(NaiveDate, u64)>> {
    let mut out: BTreeMap<String, BTreeMap<NaiveDate, u64>> = BTreeMap::new();
    for e in estimates {
        let v = out.entry(e.owner.clone()).or_default().entry(e.date).or_insert(0);
        *v = (*v).max(e.est_bytes);
    }
    out.into_iter().map(|(k, v)| (k, v.into_iter().collect())).collect()
}
