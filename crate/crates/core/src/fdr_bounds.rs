//! FDR-E upper bounds that combine labeled and pseudo-labeled examples.
//!
//! For a fixed selection, the false discovery rate splits as
//!
//! ```text
//! P{e=0} = P{v=1}·P{e=0} + P{v=0}·P{e=0}
//!            w_SL    U_SL     w_SSL   U_SSL
//! ```
//!
//! and the unlabeled share is bounded through the entailment-set pseudo-labeler:
//! `P{e=0} = FER − FNER + NER ≤ ε_E − L_Binom(ℓ) + U_Binom(k)`.

use serde::{Deserialize, Serialize};

use crate::binom::{l_binom, u_binom};
use crate::entailment_set::{EntailmentThreshold, LabeledScore, SortedLabeled};
use crate::scalar::{clamp_unit, Scalar};

/// Confidence terms handed to a single FDR-E bound evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct BoundBudget<T> {
    pub delta_s: T,
    pub delta_e: T,
    pub delta_w: T,
    pub q: usize,
}

/// Bound on the unlabeled-share error for one choice of `ε_E`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SslBound<T> {
    pub u_ssl: T,
    pub eps_e_used: T,
    pub tau_e: EntailmentThreshold<T>,
    /// `L_Binom(ℓ; |Z_E|, ·)` on the false non-entailment count.
    pub fner_lower: T,
    /// `U_Binom(k; |Z_U|, ·)` on the non-entailment count.
    pub ner_upper: T,
    pub fner_count: u64,
    pub ner_count: u64,
}

impl<T: Scalar> SslBound<T> {
    fn vacuous() -> Self {
        Self {
            u_ssl: T::one(),
            eps_e_used: T::zero(),
            tau_e: EntailmentThreshold::Empty,
            fner_lower: T::zero(),
            ner_upper: T::one(),
            fner_count: 0,
            ner_count: 0,
        }
    }
}

/// All four factors of the composed bound and the result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ComposedBound<T> {
    pub w_sl: T,
    pub u_sl: T,
    pub w_ssl: T,
    pub u_ssl_opt: T,
    pub u: T,
    pub n_labeled: usize,
    pub n_unlabeled: usize,
    pub ssl: SslBound<T>,
}

#[derive(Debug, Clone)]
struct SortedUnlabeled<T>(Vec<T>);

impl<T: Scalar> SortedUnlabeled<T> {
    fn new(z_u: &[T]) -> Self {
        let mut v = z_u.to_vec();
        v.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
        Self(v)
    }

    /// `#{f_e < τ_E}`, i.e. records the pseudo-labeler marks as not entailed.
    fn not_entailed(&self, th: EntailmentThreshold<T>) -> u64 {
        match th {
            EntailmentThreshold::At(t) => self.0.partition_point(|&s| s < t) as u64,
            EntailmentThreshold::Empty => self.0.len() as u64,
        }
    }
}

fn u_ssl_sorted<T: Scalar>(
    z_e: &SortedLabeled<T>,
    z_u: &SortedUnlabeled<T>,
    delta_s: T,
    eps_e: T,
    delta_e: T,
) -> SslBound<T> {
    let two = T::lit(2.0);
    let tau_e = z_e.learn(eps_e, delta_e / two);
    let fner_count = z_e.false_non_entailed(tau_e);
    let ner_count = z_u.not_entailed(tau_e);
    let fner_lower = l_binom(fner_count, z_e.len() as u64, delta_e / two);
    let ner_upper = u_binom(ner_count, z_u.0.len() as u64, delta_s / two);
    SslBound {
        u_ssl: clamp_unit(eps_e - fner_lower + ner_upper),
        eps_e_used: eps_e,
        tau_e,
        fner_lower,
        ner_upper,
        fner_count,
        ner_count,
    }
}

/// `U_SSL` for a single `ε_E`.
///
/// `τ_E` is learned at `δ_E/2`; the false non-entailment count is lower
/// bounded at `δ_E/2` and the unlabeled non-entailment count upper bounded at
/// `δ_S/2`.
pub fn compute_u_ssl<T: Scalar>(z_e: &[LabeledScore<T>], z_u: &[T], delta_s: T, eps_e: T, delta_e: T) -> SslBound<T> {
    u_ssl_sorted(
        &SortedLabeled::new(z_e),
        &SortedUnlabeled::new(z_u),
        delta_s,
        eps_e,
        delta_e,
    )
}

/// The `ε_E` grid `ε_max·(Q−i+1)/Q`, `i = 1..=Q`, where `ε_max` is the
/// labeled error rate.
pub fn eps_e_grid<T: Scalar>(n_negative: u64, n_labeled: usize, q: usize) -> Vec<T> {
    assert!(q >= 1, "grid needs at least one candidate");
    if n_labeled == 0 {
        return vec![T::zero(); q];
    }
    let eps_max = T::from_count(n_negative) / T::from_count(n_labeled as u64);
    let qt = T::from_count(q as u64);
    (1..=q)
        .map(|i| eps_max * T::from_count((q - i + 1) as u64) / qt)
        .collect()
}

/// Every grid candidate's `U_SSL`, each at budgets `δ_S/Q`, `δ_E/Q`.
pub fn compute_u_ssl_grid<T: Scalar>(
    z_e: &[LabeledScore<T>],
    z_u: &[T],
    delta_s: T,
    q: usize,
    delta_e: T,
) -> Vec<SslBound<T>> {
    let sorted_e = SortedLabeled::new(z_e);
    let sorted_u = SortedUnlabeled::new(z_u);
    grid_sorted(&sorted_e, &sorted_u, delta_s, q, delta_e)
}

fn grid_sorted<T: Scalar>(
    z_e: &SortedLabeled<T>,
    z_u: &SortedUnlabeled<T>,
    delta_s: T,
    q: usize,
    delta_e: T,
) -> Vec<SslBound<T>> {
    let qt = T::from_count(q as u64);
    eps_e_grid::<T>(z_e.n_negative(), z_e.len(), q)
        .into_iter()
        .map(|eps| u_ssl_sorted(z_e, z_u, delta_s / qt, eps, delta_e / qt))
        .collect()
}

/// `U_SSL^OPT`: the smallest grid candidate. Ties go to the later (smaller)
/// `ε_E`. With no labeled data the bound is vacuous.
pub fn compute_u_ssl_opt<T: Scalar>(z_e: &[LabeledScore<T>], z_u: &[T], delta_s: T, q: usize, delta_e: T) -> SslBound<T> {
    opt_sorted(&SortedLabeled::new(z_e), &SortedUnlabeled::new(z_u), delta_s, q, delta_e)
}

fn opt_sorted<T: Scalar>(
    z_e: &SortedLabeled<T>,
    z_u: &SortedUnlabeled<T>,
    delta_s: T,
    q: usize,
    delta_e: T,
) -> SslBound<T> {
    if z_e.len() == 0 {
        return SslBound::vacuous();
    }
    let mut best: Option<SslBound<T>> = None;
    for cand in grid_sorted(z_e, z_u, delta_s, q, delta_e) {
        if best.map_or(true, |b| cand.u_ssl <= b.u_ssl) {
            best = Some(cand);
        }
    }
    best.expect("q >= 1")
}

/// Composed FDR-E bound `w_SL·U_SL + w_SSL·U_SSL^OPT`, clamped to `[0, 1]`.
pub fn fdr_e_bound<T: Scalar>(z_e: &[LabeledScore<T>], z_u: &[T], budget: &BoundBudget<T>) -> ComposedBound<T> {
    let two = T::lit(2.0);
    let n_e = z_e.len() as u64;
    let n_u = z_u.len() as u64;
    let total = n_e + n_u;
    let sorted_e = SortedLabeled::new(z_e);
    let sorted_u = SortedUnlabeled::new(z_u);

    let w_sl = u_binom(n_e, total, budget.delta_w / two);
    let u_sl = u_binom(sorted_e.n_negative(), n_e, budget.delta_s / two);
    let w_ssl = u_binom(n_u, total, budget.delta_w / two);
    let ssl = opt_sorted(&sorted_e, &sorted_u, budget.delta_s / two, budget.q, budget.delta_e / two);
    ComposedBound {
        w_sl,
        u_sl,
        w_ssl,
        u_ssl_opt: ssl.u_ssl,
        u: clamp_unit(w_sl * u_sl + w_ssl * ssl.u_ssl),
        n_labeled: z_e.len(),
        n_unlabeled: z_u.len(),
        ssl,
    }
}
