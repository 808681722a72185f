//! Bisection for the smallest feasible index among ascending candidates.
//!
//! Candidates are indexed `1..=n`; index `0` is a virtual infeasible end and
//! `n + 1` a virtual feasible end (the empty selection / empty set). Midpoints
//! round up as in `⌈(lo + hi) / 2⌉`. With feasibility monotone in the index
//! the result is exact, and the loop never runs more than
//! [`search_iterations`]`(n)` probes.

use crate::scalar::ceil_log2;

/// Worst-case number of probes for `n` candidates: `⌈log2(n + 1)⌉`.
pub fn search_iterations(n: usize) -> usize {
    ceil_log2(n + 1)
}

/// Returns the smallest probed feasible index (0-based), or `None` when every
/// probe was infeasible. `probe` receives 0-based indices.
pub fn smallest_feasible(n: usize, mut probe: impl FnMut(usize) -> bool) -> Option<usize> {
    let (mut lo, mut hi) = (0usize, n + 1);
    while hi - lo > 1 {
        let mid = lo + (hi - lo + 1) / 2;
        if probe(mid - 1) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (hi <= n).then(|| hi - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_has_no_probes() {
        let mut calls = 0;
        assert_eq!(smallest_feasible(0, |_| {
            calls += 1;
            true
        }), None);
        assert_eq!(calls, 0);
    }

    #[test]
    fn reaches_first_and_last_index() {
        assert_eq!(smallest_feasible(1, |_| true), Some(0));
        assert_eq!(smallest_feasible(1, |_| false), None);
        assert_eq!(smallest_feasible(8, |_| true), Some(0));
        assert_eq!(smallest_feasible(8, |i| i == 7), Some(7));
    }

    proptest! {
        #[test]
        fn matches_linear_scan(n in 0usize..300, cut in 0usize..320) {
            let mut probes = 0;
            let got = smallest_feasible(n, |i| { probes += 1; i >= cut });
            let want = (cut < n).then_some(cut);
            prop_assert_eq!(got, want);
            prop_assert!(probes <= search_iterations(n));
        }
    }
}
