//! Longest-prefix-match table mapping IP prefixes to origin AS numbers.

use std::collections::HashMap;
use std::fmt;
use std::io::Read;
use std::net::IpAddr;
use std::str::FromStr;

use crate::error::{Error, Result};

/// An IPv4 or IPv6 network in CIDR notation with no host bits set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cidr {
    addr: IpAddr,
    len: u8,
}

impl Cidr {
    pub fn new(addr: IpAddr, len: u8) -> Result<Self> {
        let max = max_len(&addr);
        if len > max {
            return Err(Error::config(format!("prefix length {len} exceeds {max}")));
        }
        if mask_bits(to_bits(&addr), len, max) != to_bits(&addr) {
            return Err(Error::config(format!("{addr}/{len} has host bits set")));
        }
        Ok(Cidr { addr, len })
    }

    pub fn addr(&self) -> IpAddr {
        self.addr
    }

    pub fn len(&self) -> u8 {
        self.len
    }

    pub fn contains(&self, ip: &IpAddr) -> bool {
        if self.addr.is_ipv4() != ip.is_ipv4() {
            return false;
        }
        let max = max_len(ip);
        mask_bits(to_bits(ip), self.len, max) == to_bits(&self.addr)
    }
}

impl fmt::Display for Cidr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.addr, self.len)
    }
}

impl FromStr for Cidr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (addr, len) = s
            .trim()
            .split_once('/')
            .ok_or_else(|| Error::config(format!("missing '/' in prefix {s:?}")))?;
        let addr: IpAddr = addr
            .parse()
            .map_err(|_| Error::config(format!("bad address in prefix {s:?}")))?;
        let len: u8 = len
            .parse()
            .map_err(|_| Error::config(format!("bad length in prefix {s:?}")))?;
        Cidr::new(addr, len)
    }
}

fn max_len(ip: &IpAddr) -> u8 {
    if ip.is_ipv4() {
        32
    } else {
        128
    }
}

fn to_bits(ip: &IpAddr) -> u128 {
    match ip {
        IpAddr::V4(v4) => u32::from(*v4) as u128,
        IpAddr::V6(v6) => u128::from(*v6),
    }
}

fn mask_bits(bits: u128, len: u8, max: u8) -> u128 {
    if len == 0 {
        return 0;
    }
    let keep = u128::MAX << (128 - len as u32);
    let shifted = keep >> (128 - max as u32);
    bits & shifted
}

/// Masks `ip` down to a `len`-bit prefix, clamped to the family width.
pub fn truncate(ip: &IpAddr, len: u8) -> Cidr {
    let max = max_len(ip);
    let len = len.min(max);
    let bits = mask_bits(to_bits(ip), len, max);
    let addr = match ip {
        IpAddr::V4(_) => IpAddr::V4((bits as u32).into()),
        IpAddr::V6(_) => IpAddr::V6(bits.into()),
    };
    Cidr { addr, len }
}

/// Prefix→ASN table. One hash map per (family, prefix length); lookups probe
/// lengths from most to least specific.
#[derive(Debug, Clone, Default)]
pub struct PrefixTable {
    v4: Vec<(u8, HashMap<u128, u32>)>,
    v6: Vec<(u8, HashMap<u128, u32>)>,
    len: usize,
}

impl PrefixTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, cidr: Cidr, asn: u32) {
        let buckets = if cidr.addr.is_ipv4() {
            &mut self.v4
        } else {
            &mut self.v6
        };
        let pos = match buckets.binary_search_by(|(l, _)| cidr.len.cmp(l)) {
            Ok(p) => p,
            Err(p) => {
                buckets.insert(p, (cidr.len, HashMap::new()));
                p
            }
        };
        if buckets[pos].1.insert(to_bits(&cidr.addr), asn).is_none() {
            self.len += 1;
        }
    }

    pub fn from_entries<'a, I>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, u32)>,
    {
        let mut table = PrefixTable::new();
        for (row, (prefix, asn)) in entries.into_iter().enumerate() {
            let cidr = prefix
                .parse::<Cidr>()
                .map_err(|e| Error::config(format!("prefix table row {}: {e}", row + 1)))?;
            table.insert(cidr, asn);
        }
        Ok(table)
    }

    /// Reads the `prefix,asn` CSV format. A header row is expected.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut table = PrefixTable::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            let line = i + 2;
            let prefix = row.get(0).unwrap_or_default();
            let asn = row.get(1).unwrap_or_default();
            let cidr = prefix
                .parse::<Cidr>()
                .map_err(|e| Error::config(format!("prefix table row {line} ({prefix:?}): {e}")))?;
            let asn = asn
                .trim_start_matches("AS")
                .parse::<u32>()
                .map_err(|_| Error::config(format!("prefix table row {line}: bad asn {asn:?}")))?;
            table.insert(cidr, asn);
        }
        Ok(table)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn lookup(&self, ip: &IpAddr) -> Option<u32> {
        let (buckets, max) = if ip.is_ipv4() {
            (&self.v4, 32)
        } else {
            (&self.v6, 128)
        };
        let bits = to_bits(ip);
        buckets
            .iter()
            .find_map(|(len, map)| map.get(&mask_bits(bits, *len, max)).copied())
    }
}
