//! Pairwise (cascade) summation. The reduction tree depends only on the
//! number of terms, so results are reproducible bit for bit.

const BLOCK: usize = 32;

pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Pairwise sum of `n` vector-valued terms of length `width`; `term(i, acc)`
/// adds term `i` into `acc`.
pub(crate) fn pairwise_accumulate<F>(n: usize, width: usize, term: &F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]),
{
    let mut out = vec![0.0; width];
    accumulate(0, n, term, &mut out);
    out
}

fn accumulate<F>(lo: usize, hi: usize, term: &F, out: &mut [f64])
where
    F: Fn(usize, &mut [f64]),
{
    if hi - lo <= BLOCK {
        for i in lo..hi {
            term(i, out);
        }
        return;
    }
    let mid = lo + (hi - lo) / 2;
    accumulate(lo, mid, term, out);
    let mut right = vec![0.0; out.len()];
    accumulate(mid, hi, term, &mut right);
    for (o, r) in out.iter_mut().zip(&right) {
        *o += r;
    }
}

/// `log Σ exp(xᵢ)`; `−∞` for an empty or all-`−∞` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if m == f64::INFINITY {
        return f64::INFINITY;
    }
    let shifted: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
    m + pairwise_sum(&shifted).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_beats_naive_on_many_small_terms() {
        let xs = vec![0.1f64; 1_000_000];
        let naive: f64 = xs.iter().sum();
        let pw = pairwise_sum(&xs);
        assert!((pw - 100_000.0).abs() < (naive - 100_000.0).abs());
        assert!((pw - 100_000.0).abs() < 1e-8);
    }

    #[test]
    fn vector_accumulate_matches_scalar() {
        let n = 1000;
        let v = pairwise_accumulate(n, 2, &|i, acc: &mut [f64]| {
            acc[0] += i as f64;
            acc[1] += 1.0;
        });
        assert_eq!(v, vec![(n * (n - 1) / 2) as f64, n as f64]);
    }

    #[test]
    fn lse_handles_extremes() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), f64::NEG_INFINITY);
        let v = log_sum_exp(&[1000.0, 1000.0]);
        assert!((v - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }
}
