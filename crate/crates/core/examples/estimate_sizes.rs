//! ANY-response size estimates, amplification ranking and plateaus.

use std::io::Cursor;

use ampscope::estimate;

fn main() -> ampscope::Result<()> {
    let sets = estimate::read_record_sets(Cursor::new(include_str!("../fixtures/records.jsonl")))?;
    let est = estimate::estimate_all(&sets)?;
    let rank = estimate::rank_amplification(&est, &["example.gov.".to_string()], false)?;
    println!("reference maximum {} bytes, {} names above it", rank.reference_max, rank.above_reference);
    for r in &rank.rows {
        println!("{:<22} {:>6} bytes  factor {:>6.1}  cdf {:.2}", r.owner, r.est_bytes, r.factor, r.cdf);
    }
    for (owner, series) in estimate::daily_series(&est) {
        let values: Vec<u64> = series.iter().map(|(_, v)| *v).collect();
        for p in estimate::detect_rollover_plateaus(&values, estimate::DEFAULT_MIN_DAYS, estimate::DEFAULT_MIN_STEP)? {
            println!(
                "{owner}: plateau {} .. {} at {} bytes",
                series[p.start].0, series[p.end].0, p.height
            );
        }
    }
    Ok(())
}
