//! Ranks candidate names with the three selectors and merges them.

use ampscope::honeypot::{self, InferenceConfig};
use ampscope::selectors;
use ampscope::synth::{self, ScenarioConfig};

fn main() -> ampscope::Result<()> {
    let cfg = ScenarioConfig::from_toml(include_str!("../fixtures/scenario.toml"))?;
    let s = synth::generate_scenario(&cfg)?;
    let k_max = 20;
    let hp = honeypot::infer_honeypot_attacks(&s.honeypot_log, InferenceConfig::default());
    let r1 = selectors::selector_max_size(&s.trace, k_max);
    let r2 = selectors::selector_any_volume(&s.trace, k_max);
    let r3 = selectors::selector_ground_truth(&s.trace, &hp, k_max, 300.0).ranking;
    let list = selectors::consensus_merge(&r1, &r2, &r3, k_max);
    println!("k* = {}", list.k_star);
    for (k, j) in list.consensus.iter().enumerate().take(10) {
        println!("  k={:<2} mean Jaccard {j:.3}", k + 1);
    }
    for (name, by) in &list.names {
        println!("{name:<22} {by:?}");
    }
    let truth = s.truth.attack_qnames();
    let hit = truth.iter().filter(|q| list.contains(q)).count();
    println!("{hit} of {} planted names selected", truth.len());
    Ok(())
}
