//! Infers honeypot attacks and matches them against trace detections.

use ampscope::detect::{self, DetectorConfig};
use ampscope::honeypot::{self, InferenceConfig};
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

    let hp = honeypot::infer_honeypot_attacks(&s.honeypot_log, InferenceConfig::default());
    let rep = honeypot::overlap(&events, &hp, honeypot::DEFAULT_MATCH_SLACK_S);
    println!(
        "{} trace events, {} honeypot events, {} mutual ({:.0}% / {:.0}%)",
        events.len(),
        hp.len(),
        rep.mutual.len(),
        100.0 * rep.ixp_fraction,
        100.0 * rep.hp_fraction
    );
    let cmp = honeypot::intensity_comparison(&rep, &events, &hp);
    println!("mean decile trace {:?} vs honeypot {:?}", cmp.ixp_mean, cmp.hp_mean);
    for p in honeypot::convergence_curve(&hp) {
        println!("{:>2} sensors (+{}) see {:.0}% of victims", p.sensors, p.added_sensor, 100.0 * p.visible_fraction);
    }
    Ok(())
}
