use crate::models::geometry::distance;

/// Sum of distances under the best matching of the smaller set into the
/// larger one; no cardinality penalty and no cutoff. Zero if either set is empty.
pub fn ospa(est: &[[f64; 3]], truth: &[[f64; 3]]) -> f64 {
    let (small, large) = if est.len() <= truth.len() { (est, truth) } else { (truth, est) };
    if small.is_empty() {
        return 0.0;
    }
    let m = large.len();
    assert!(m <= 20, "assignment over {m} points");
    // dp[mask]: best cost of matching the first popcount(mask) small points
    // onto the large points in mask
    let mut dp = vec![f64::INFINITY; 1 << m];
    dp[0] = 0.0;
    let mut best = f64::INFINITY;
    for mask in 0usize..(1 << m) {
        let k = mask.count_ones() as usize;
        if dp[mask].is_infinite() {
            continue;
        }
        if k == small.len() {
            best = best.min(dp[mask]);
            continue;
        }
        for j in 0..m {
            if mask & (1 << j) == 0 {
                let next = mask | (1 << j);
                let c = dp[mask] + distance(&small[k], &large[j]);
                if c < dp[next] {
                    dp[next] = c;
                }
            }
        }
    }
    best
}
