//! Small empirical-distribution helpers.

/// Normalized counts of `values` over `bins` equal-width bins on `[lo, hi)`.
/// Values outside the range are ignored.
pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let mut counts = vec![0.0; bins];
    if bins == 0 || !(hi > lo) {
        return counts;
    }
    let width = (hi - lo) / bins as f64;
    let mut n = 0.0;
    for &v in values {
        if !(lo..hi).contains(&v) {
            continue;
        }
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1.0;
        n += 1.0;
    }
    if n > 0.0 {
        for c in &mut counts {
            *c /= n;
        }
    }
    counts
}

/// Normalized frequencies of category indices in `0..k`.
pub fn frequencies(indices: impl IntoIterator<Item = usize>, k: usize) -> Vec<f64> {
    let mut counts = vec![0.0; k];
    let mut n = 0.0;
    for i in indices {
        if i < k {
            counts[i] += 1.0;
            n += 1.0;
        }
    }
    if n > 0.0 {
        for c in &mut counts {
            *c /= n;
        }
    }
    counts
}

/// Half the L1 distance; missing tail entries count as zero.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    let n = p.len().max(q.len());
    let at = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    0.5 * (0..n).map(|i| (at(p, i) - at(q, i)).abs()).sum::<f64>()
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Median of finite values (the lower middle for even counts is averaged
/// with the upper one).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tv_and_histograms() {
        assert_eq!(total_variation(&[0.5, 0.5], &[1.0]), 0.5);
        assert_eq!(histogram(&[0.0, 0.5, 1.5, 9.0], 0.0, 2.0, 2), vec![2.0 / 3.0, 1.0 / 3.0]);
        assert_eq!(frequencies([0, 0, 1, 7], 2), vec![2.0 / 3.0, 1.0 / 3.0]);
        assert_eq!(median(&[3.0, 1.0, 2.0, 10.0]), Some(2.5));
        assert_eq!(mean(&[]), None);
    }
}
