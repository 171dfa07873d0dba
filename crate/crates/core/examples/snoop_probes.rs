//! Sanitizes and classifies recorded cache-probe responses.

use std::collections::BTreeSet;

use ampscope::snoop;
use ampscope::synth::{self, ProbeConfig};

fn main() -> ampscope::Result<()> {
    let cfg = ProbeConfig::default();
    let (responses, ttls) = synth::generate_probe_responses(&cfg)?;
    let rep = snoop::sanitize_probe_responses(&responses, &ttls, None);
    println!(
        "{} kept; dropped rcode {}, echo {}, ttl {}, duplicate {}",
        rep.kept.len(),
        rep.dropped_rcode,
        rep.dropped_echo,
        rep.dropped_ttl,
        rep.dropped_duplicate
    );
    let rows = snoop::classify_all(&rep.kept, &ttls);
    let anchors: BTreeSet<String> = cfg.anchor_names.iter().cloned().collect();
    let sum = snoop::summarize(&rows, &anchors);
    println!("kinds {:?}", sum.kinds);
    println!("cache {:?}", sum.cache);
    println!("anchor error rate {:?}", sum.anchor_error_rate);
    Ok(())
}
