//! Runs the per-(victim, day) detector and prints the victim summary.

use ampscope::detect::{self, DetectorConfig};
use ampscope::selectors::{MisusedNameList, SelectorId};
use ampscope::synth::{self, ScenarioConfig};
use ampscope::trace::TraceMeta;

fn main() -> ampscope::Result<()> {
    let cfg = ScenarioConfig::from_toml(include_str!("../fixtures/scenario.toml"))?;
    let s = synth::generate_scenario(&cfg)?;
    let names = MisusedNameList::from_names(s.truth.attack_qnames(), SelectorId::GroundTruth);
    let meta = TraceMeta::with_sampling(s.truth.sampling_denominator);
    let stats = detect::aggregate_client_days(&s.trace, &names);
    let mut events = detect::detect_attacks(&stats, &s.trace, &names, &DetectorConfig::default(), &meta)?;
    detect::intensity_deciles(&mut events);
    for e in &events {
        println!(
            "{:<15} day {}  {:>3} pkts  share {:.2}  ~{:>8} originals  decile {}  {}",
            e.victim_ip,
            e.day,
            e.packet_count,
            e.share,
            e.est_misused_originals,
            e.intensity_decile.unwrap_or(0),
            e.dominant_qname().unwrap_or("-")
        );
    }
    let summary = detect::victim_summary(&events);
    println!(
        "{} events, {} victims, {} /24s, durations {:?}",
        summary.total.events, summary.total.victims, summary.total.prefixes_24, summary.duration_percentiles
    );
    Ok(())
}
