use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Shuffles `0..n` with `seed` and cuts it into consecutive partitions whose
/// sizes follow `fractions` (largest-remainder rounding, ties to the earlier
/// partition).
pub fn split_dataset(n: usize, fractions: &[f64], seed: u64) -> Result<Vec<Vec<usize>>> {
    let total: f64 = fractions.iter().sum();
    if fractions.is_empty() || fractions.iter().any(|f| !(*f >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::Split(format!(
            "fractions must be non-negative and sum to 1, got {fractions:?}"
        )));
    }
    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|x| libm::floor(*x + 1e-9) as usize).collect();
    let mut rest = n.saturating_sub(sizes.iter().sum());
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (exact[a] - sizes[a] as f64, exact[b] - sizes[b] as f64);
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        sizes[i] += 1;
        rest -= 1;
    }
    if let Some(i) = (0..fractions.len()).find(|&i| fractions[i] > 0.0 && sizes[i] == 0) {
        return Err(Error::Split(format!("partition {i} would be empty with {n} scenarios")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    Rng::derive(seed, "split").shuffle(&mut idx);
    let mut out = Vec::with_capacity(sizes.len());
    let mut at = 0;
    for s in sizes {
        let mut part = idx[at..at + s].to_vec();
        part.sort_unstable();
        out.push(part);
        at += s;
    }
    Ok(out)
}

/// `ceil(fraction * n)`, the number of training scenarios kept by a data
/// fraction sweep.
pub fn fraction_count(n: usize, fraction: f64) -> usize {
    (libm::ceil(fraction * n as f64 - 1e-9).max(0.0) as usize).min(n)
}
