//! DNS-ID patterns per attack and attribution to one fingerprinted entity.

use std::collections::BTreeSet;

use ampscope::detect::{self, DetectorConfig};
use ampscope::fingerprint::{self, EntityFingerprint, HeaderField};
use ampscope::selectors::{MisusedNameList, SelectorId};
use ampscope::synth::{self, ScenarioConfig};
use ampscope::trace::TraceMeta;

fn main() -> ampscope::Result<()> {
    let cfg = ScenarioConfig::from_toml(include_str!("../fixtures/scenario.toml"))?;
    let s = synth::generate_scenario(&cfg)?;
    let names = MisusedNameList::from_names(s.truth.attack_qnames(), SelectorId::GroundTruth);
    let meta = TraceMeta::with_sampling(s.truth.sampling_denominator);
    let stats = detect::aggregate_client_days(&s.trace, &names);
    let events = detect::detect_attacks(&stats, &s.trace, &names, &DetectorConfig::default(), &meta)?;

    for e in &events {
        let p = fingerprint::classify_dnsid_pattern(e, fingerprint::DEFAULT_MIN_SEGMENT)?;
        let ports = fingerprint::field_cardinality_profile(e, HeaderField::SrcPort)?;
        println!("{:<15} day {}  {:?}  source ports {}/{}", e.victim_ip, e.day, p.class, ports.unique_count, ports.packet_count);
    }

    let fp: EntityFingerprint = serde_json::from_str(include_str!("../fixtures/gov_fingerprint.json"))?;
    let rep = fingerprint::attribute_entity(&events, &fp, fingerprint::DEFAULT_MIN_SEGMENT);
    println!("attributed {} of {} ({:.0}%)", rep.attributed, rep.rows.len(), 100.0 * rep.share);
    let timeline = fingerprint::build_name_timeline(&events, &BTreeSet::new());
    println!("parity alternation period: {:?} days", timeline.parity_alternation_days);
    Ok(())
}
