//! Rank and linear correlation coefficients: Pearson's r, Spearman's rho
//! with average ranks for ties, and Kendall's tau-b with tie corrections
//! in both variables.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CorrelationError {
    #[error("sequences must have equal length, got {x} and {y}")]
    LengthMismatch { x: usize, y: usize },
    #[error("need at least 2 paired observations, got {n}")]
    TooFewObservations { n: usize },
    /// Constant input (or all ties in one variable for tau-b). Reported as
    /// absent by the harness rather than coerced to 0.
    #[error("correlation undefined: {0}")]
    Undefined(&'static str),
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
}

fn validate(x: &[f64], y: &[f64]) -> Result<(), CorrelationError> {
    if x.len() != y.len() {
        return Err(CorrelationError::LengthMismatch {
            x: x.len(),
            y: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(CorrelationError::TooFewObservations { n: x.len() });
    }
    for (index, v) in x.iter().chain(y.iter()).enumerate() {
        if !v.is_finite() {
            return Err(CorrelationError::NonFinite {
                index: index % x.len(),
            });
        }
    }
    Ok(())
}

/// Pearson's r: sum((x-mean_x)(y-mean_y)) / sqrt(sum((x-mean_x)^2) * sum((y-mean_y)^2)).
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64, CorrelationError> {
    validate(x, y)?;
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;

    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        let dx = a - mean_x;
        let dy = b - mean_y;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 {
        return Err(CorrelationError::Undefined("x is constant"));
    }
    if var_y == 0.0 {
        return Err(CorrelationError::Undefined("y is constant"));
    }
    Ok((cov / (var_x * var_y).sqrt()).clamp(-1.0, 1.0))
}

/// Fractional 1-based ranks; tied values receive the mean of the rank
/// positions they occupy.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));

    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Positions i..=j (0-based) share the mean of ranks i+1..=j+1.
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's rho: Pearson's r applied to average-ranked sequences.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64, CorrelationError> {
    validate(x, y)?;
    pearson_r(&average_ranks(x), &average_ranks(y))
}

/// Kendall's tau-b.
///
/// With n0 = n(n-1)/2, n1 = tied pairs in x, n2 = tied pairs in y,
/// C/D the concordant/discordant pair counts:
///
/// ```text
/// tau_b = (C - D) / sqrt((n0 - n1) * (n0 - n2))
/// ```
///
/// Pair counts are exact integers obtained in O(n log n): sort by (x, y),
/// take tie counts from group runs, and count discordant pairs as strict
/// inversions of y under a merge sort. The float expression above is the
/// final step, so the result matches a definitional O(n^2) pair count
/// bit for bit.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<f64, CorrelationError> {
    validate(x, y)?;
    let n = x.len();

    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    fn tie_pairs(run: i64) -> i64 {
        run * (run - 1) / 2
    }

    // Runs of equal x, and of equal (x, y), in x-sorted order.
    let mut n1 = 0i64;
    let mut n_xy = 0i64;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && pairs[j + 1].0 == pairs[i].0 {
            j += 1;
        }
        n1 += tie_pairs((j - i + 1) as i64);
        let mut k = i;
        while k <= j {
            let mut m = k;
            while m + 1 <= j && pairs[m + 1].1 == pairs[k].1 {
                m += 1;
            }
            n_xy += tie_pairs((m - k + 1) as i64);
            k = m + 1;
        }
        i = j + 1;
    }

    // Discordant pairs = strict inversions of y in x-sorted order. Within
    // an x-tie run y is already ascending, so those pairs never count.
    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; n];
    let discordant = count_inversions(&mut ys, &mut buf) as i64;

    // Runs of equal y after the merge sort left ys fully sorted.
    let mut n2 = 0i64;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && ys[j + 1] == ys[i] {
            j += 1;
        }
        n2 += tie_pairs((j - i + 1) as i64);
        i = j + 1;
    }

    let n0 = tie_pairs(n as i64);
    if n0 == n1 {
        return Err(CorrelationError::Undefined("all pairs tied in x"));
    }
    if n0 == n2 {
        return Err(CorrelationError::Undefined("all pairs tied in y"));
    }

    // C + D = n0 - n1 - n2 + n_xy, hence:
    let c_minus_d = n0 - n1 - n2 + n_xy - 2 * discordant;
    let denom = ((n0 - n1) as f64 * (n0 - n2) as f64).sqrt();
    Ok((c_minus_d as f64 / denom).clamp(-1.0, 1.0))
}

/// Merge sort counting strict inversions (a[i] > a[j] for i < j). Equal
/// elements are merged left-first and not counted.
fn count_inversions(a: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = a.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let (left, right) = a.split_at_mut(mid);
    let mut inv = count_inversions(left, &mut buf[..mid]) + count_inversions(right, &mut buf[mid..]);

    let (mut i, mut j, mut k) = (0, 0, 0);
    while i < left.len() && j < right.len() {
        if right[j] < left[i] {
            inv += (left.len() - i) as u64;
            buf[k] = right[j];
            j += 1;
        } else {
            buf[k] = left[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + left.len() - i].copy_from_slice(&left[i..]);
    buf[k + left.len() - i..n].copy_from_slice(&right[j..]);
    a.copy_from_slice(&buf[..n]);
    inv
}
