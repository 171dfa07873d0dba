//! Groups attacks by amplifier-set similarity and measures pool churn.

use ampscope::amplifiers;
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
    let events = detect::detect_attacks(&stats, &s.trace, &names, &DetectorConfig::default(), &meta)?;

    let sets = amplifiers::amplifier_sets(&events);
    let m = amplifiers::jaccard_distance_matrix(&sets);
    let clusters = amplifiers::dbscan_cluster(&m, 0.6, 2)?;
    println!("{} clusters over {} attacks, labels {:?}", clusters.n_clusters, events.len(), clusters.labels);
    for st in amplifiers::stable_sets(&events, &clusters, &sets, 2, 5) {
        println!(
            "cluster {}: {} attacks over {} days, {} core amplifiers, static {}",
            st.cluster,
            st.members.len(),
            st.span_days,
            st.core.len(),
            st.is_static
        );
    }

    let daily: Vec<_> = amplifiers::daily_amplifier_sets(&events).into_values().collect();
    let churn = amplifiers::churn_metrics(&daily)?;
    println!("mean day-over-day overlap {:.3}", churn.mean_overlap);
    for d in amplifiers::new_vs_known(&events) {
        println!("{}  new {:>3}  known {:>3}", amplifiers::epoch_day_to_date(d.day), d.new, d.known);
    }
    Ok(())
}
