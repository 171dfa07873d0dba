//! Small ranking and summary helpers shared by the report-producing modules.

/// Decile scores (1..=10) for `values`, ranked ascending with tied values
/// sharing their average 1-based rank: `ceil(10 * rank / n)`.
pub fn decile_scores(values: &[u64]) -> Vec<u8> {
    let n = values.len();
    if n == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| values[i]);
    let mut scores = vec![0u8; n];
    let mut start = 0;
    while start < n {
        let mut end = start;
        while end + 1 < n && values[order[end + 1]] == values[order[start]] {
            end += 1;
        }
        // average of ranks start+1 ..= end+1, kept as a fraction over 2
        let rank_x2 = (start + 1 + end + 1) as u64;
        let decile = (10 * rank_x2).div_ceil(2 * n as u64).clamp(1, 10) as u8;
        for &i in &order[start..=end] {
            scores[i] = decile;
        }
        start = end + 1;
    }
    scores
}

/// Nearest-rank percentile of an unsorted sample; `None` when empty.
pub fn percentile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

pub fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distinct_values_cover_all_deciles() {
        let v: Vec<u64> = (1..=10).rev().collect();
        let d = decile_scores(&v);
        assert_eq!(d, vec![10, 9, 8, 7, 6, 5, 4, 3, 2, 1]);
    }

    #[test]
    fn ties_share_average_rank() {
        // N=4, all equal: average rank 2.5, ceil(25/4) = 7
        assert_eq!(decile_scores(&[5, 5, 5, 5]), vec![7; 4]);
        // ranks 1, (2+3)/2, 4 over N=4
        assert_eq!(decile_scores(&[1, 3, 3, 9]), vec![3, 7, 7, 10]);
    }

    #[test]
    fn singleton_and_empty() {
        assert_eq!(decile_scores(&[42]), vec![10]);
        assert!(decile_scores(&[]).is_empty());
    }

    #[test]
    fn percentiles() {
        let v = [10.0, 20.0, 30.0, 40.0];
        assert_eq!(percentile(&v, 50.0), Some(20.0));
        assert_eq!(percentile(&v, 100.0), Some(40.0));
        assert_eq!(percentile(&v, 0.0), Some(10.0));
        assert_eq!(percentile(&[], 50.0), None);
    }
}
