//! Generates the fixture scenario and prints what was planted.

use ampscope::synth::{self, ScenarioConfig};

fn main() -> ampscope::Result<()> {
    let cfg = ScenarioConfig::from_toml(include_str!("../fixtures/scenario.toml"))?;
    let s = synth::generate_scenario(&cfg)?;
    println!(
        "{} sampled packets at 1:{}, {} honeypot requests",
        s.trace.len(),
        s.truth.sampling_denominator,
        s.honeypot_log.len()
    );
    for a in &s.truth.attacks {
        println!(
            "attack {:>2}  {:<15} day {}  {:<18} {:>9} originals -> {:>3} sampled  {:?}",
            a.id, a.victim_ip, a.day, a.qname, a.original_packets, a.sampled_packets, a.dns_id_mode
        );
    }
    Ok(())
}
