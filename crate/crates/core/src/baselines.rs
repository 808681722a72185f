//! Comparison learners: supervised-only, heuristic pseudo-labeling, and
//! exact-match control. All three bisect over scores with a plain binomial
//! bound on the selected loss count.

use std::borrow::Borrow;

use serde::{Deserialize, Serialize};

use crate::binom::u_binom;
use crate::error::Result;
use crate::records::{ScoreKey, ScoredRecord};
use crate::scalar::Scalar;
use crate::search::{search_iterations, smallest_feasible};
use crate::selector::{CertifiedResult, EvalBudget, Selector, TraceStep};

/// Pseudo-labeling threshold and optional confidence filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PslConfig<T> {
    pub tau_pl: T,
    pub filter: bool,
}

impl<T: Scalar> Default for PslConfig<T> {
    fn default() -> Self {
        Self {
            tau_pl: T::lit(0.9),
            filter: false,
        }
    }
}

/// Bisection with `U = U_Binom(#loss selected, #selected, δ/I)`.
fn binomial_search<T: Scalar>(
    key: ScoreKey,
    mut scored: Vec<(T, bool)>,
    eps: T,
    delta: T,
    branch: String,
) -> CertifiedResult<T> {
    let n = scored.len();
    if n == 0 {
        return CertifiedResult::vacuous(Selector::single(key, T::one()), eps, branch, EvalBudget::Binomial { delta });
    }
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite scores"));
    let iterations = search_iterations(n);
    let per_delta = delta / T::from_count(iterations as u64);
    // loss_suffix[i] = losses among scored[i..]
    let mut loss_suffix = vec![0u64; n + 1];
    for i in (0..n).rev() {
        loss_suffix[i] = loss_suffix[i + 1] + u64::from(scored[i].1);
    }

    let mut trace = Vec::with_capacity(iterations);
    let mut chosen = None;
    smallest_feasible(n, |i| {
        let tau = scored[i].0;
        let first = scored.partition_point(|s| s.0 < tau);
        let selected = (n - first) as u64;
        let bound = u_binom(loss_suffix[first], selected, per_delta);
        let feasible = bound <= eps;
        if feasible {
            chosen = Some(trace.len());
        }
        trace.push(TraceStep {
            thresholds: vec![tau],
            n_labeled: selected as usize,
            n_unlabeled: 0,
            bound,
            feasible,
        });
        feasible
    });
    CertifiedResult::from_trace(
        chosen,
        trace,
        |s| Selector::single(key, s.thresholds[0]),
        eps,
        branch,
        iterations,
        EvalBudget::Binomial { delta: per_delta },
    )
}

/// Supervised learner on labeled data only; loss is `e = 0`.
pub fn sgen_sup<T: Scalar, R: Borrow<ScoredRecord<T>>>(key: ScoreKey, z_e: &[R], eps: T, delta: T) -> Result<CertifiedResult<T>> {
    let scored = z_e
        .iter()
        .map(|r| {
            let r = r.borrow();
            Ok((r.require_score(key)?, !r.require_label()?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(binomial_search(key, scored, eps, delta, format!("sup:{key}")))
}

/// Unlabeled records kept by the optional filter `max(f_e, 1 − f_e) ≥ τ_PL`.
pub fn psl_keeps<T: Scalar>(cfg: &PslConfig<T>, f_e: T) -> bool {
    !cfg.filter || f_e.max(T::one() - f_e) >= cfg.tau_pl
}

/// Heuristic pseudo-label `ẽ = 1(f_e ≥ τ_PL)`.
pub fn psl_label<T: Scalar>(cfg: &PslConfig<T>, f_e: T) -> bool {
    f_e >= cfg.tau_pl
}

/// Merged `(score, ẽ)` set the pseudo-labeling learner searches over.
pub fn psl_merged<T: Scalar, R: Borrow<ScoredRecord<T>>>(
    key: ScoreKey,
    z_e: &[R],
    z_u: &[R],
    cfg: &PslConfig<T>,
) -> Result<Vec<(T, bool)>> {
    let mut out = Vec::with_capacity(z_e.len() + z_u.len());
    for r in z_e {
        let r = r.borrow();
        out.push((r.require_score(key)?, r.require_label()?));
    }
    for r in z_u {
        let r = r.borrow();
        if psl_keeps(cfg, r.f_e) {
            out.push((r.require_score(key)?, psl_label(cfg, r.f_e)));
        }
    }
    Ok(out)
}

/// Heuristic semi-supervised learner. Treats pseudo-labels as truth, so its
/// bound carries no guarantee on the real FDR-E.
pub fn sgen_psl<T: Scalar, R: Borrow<ScoredRecord<T>>>(
    key: ScoreKey,
    z_e: &[R],
    z_u: &[R],
    eps: T,
    delta: T,
    cfg: &PslConfig<T>,
) -> Result<CertifiedResult<T>> {
    let scored = psl_merged(key, z_e, z_u, cfg)?
        .into_iter()
        .map(|(s, e)| (s, !e))
        .collect();
    let name = if cfg.filter { "psl-filter" } else { "psl" };
    Ok(binomial_search(key, scored, eps, delta, format!("{name}:{key}")))
}

/// Exact-match learner over every record; loss is `em = 0`. Controls the
/// exact-match FDR, not FDR-E.
pub fn sgen_em<T: Scalar, R: Borrow<ScoredRecord<T>>>(key: ScoreKey, z_all: &[R], eps: T, delta: T) -> Result<CertifiedResult<T>> {
    let scored = z_all
        .iter()
        .map(|r| {
            let r = r.borrow();
            Ok((r.require_score(key)?, !r.require_em()?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(binomial_search(key, scored, eps, delta, format!("em:{key}")))
}
