//! Conformal entailment-set learning: picks the entailment-score threshold
//! `τ_E` whose pseudo-labeler `ê = 1(f_e ≥ τ_E)` has a PAC-controlled false
//! entailment rate `P{e = 0, ê = 1}`.

use serde::{Deserialize, Serialize};

use crate::binom::u_binom;
use crate::scalar::Scalar;
use crate::search::smallest_feasible;

/// An entailment score together with its true label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LabeledScore<T> {
    pub f_e: T,
    pub e: bool,
}

impl<T> LabeledScore<T> {
    pub fn new(f_e: T, e: bool) -> Self {
        Self { f_e, e }
    }
}

/// Learned entailment-set parameter. `Empty` is the `+∞` threshold: nothing is
/// pseudo-entailed, so the false entailment rate is exactly zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", tag = "kind", content = "tau_e", rename_all = "snake_case")]
pub enum EntailmentThreshold<T> {
    At(T),
    Empty,
}

impl<T: Scalar> EntailmentThreshold<T> {
    pub fn is_feasible(&self) -> bool {
        matches!(self, EntailmentThreshold::At(_))
    }

    pub fn tau(&self) -> Option<T> {
        match *self {
            EntailmentThreshold::At(t) => Some(t),
            EntailmentThreshold::Empty => None,
        }
    }

    /// `ê = 1(f_e ≥ τ_E)`; always 0 for the empty set.
    pub fn pseudo_label(&self, f_e: T) -> bool {
        match *self {
            EntailmentThreshold::At(t) => f_e >= t,
            EntailmentThreshold::Empty => false,
        }
    }
}

/// Labeled entailment scores sorted ascending, with prefix counts so that
/// per-threshold counts are `O(log n)`.
#[derive(Debug, Clone)]
pub(crate) struct SortedLabeled<T> {
    scores: Vec<T>,
    /// `neg_prefix[i]` = number of `e = 0` among `scores[..i]`.
    neg_prefix: Vec<u64>,
}

impl<T: Scalar> SortedLabeled<T> {
    pub(crate) fn new(z_e: &[LabeledScore<T>]) -> Self {
        let mut items = z_e.to_vec();
        items.sort_by(|a, b| a.f_e.partial_cmp(&b.f_e).expect("finite scores"));
        let mut neg_prefix = Vec::with_capacity(items.len() + 1);
        neg_prefix.push(0);
        let mut neg = 0;
        for it in &items {
            neg += u64::from(!it.e);
            neg_prefix.push(neg);
        }
        Self {
            scores: items.into_iter().map(|it| it.f_e).collect(),
            neg_prefix,
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.scores.len()
    }

    pub(crate) fn n_negative(&self) -> u64 {
        *self.neg_prefix.last().unwrap_or(&0)
    }

    /// Number of records with `f_e < tau`.
    fn below(&self, tau: T) -> usize {
        self.scores.partition_point(|&s| s < tau)
    }

    /// `#{e = 0 ∧ f_e ≥ tau}`.
    pub(crate) fn false_entailed(&self, tau: T) -> u64 {
        self.n_negative() - self.neg_prefix[self.below(tau)]
    }

    /// `#{e = 1 ∧ f_e < tau}`; every positive for the empty set.
    pub(crate) fn false_non_entailed(&self, th: EntailmentThreshold<T>) -> u64 {
        let below = match th {
            EntailmentThreshold::At(t) => self.below(t),
            EntailmentThreshold::Empty => self.len(),
        };
        below as u64 - self.neg_prefix[below]
    }

    pub(crate) fn learn(&self, eps_e: T, delta_e: T) -> EntailmentThreshold<T> {
        let n = self.len() as u64;
        let found = smallest_feasible(self.len(), |i| {
            let k = self.false_entailed(self.scores[i]);
            u_binom(k, n, delta_e) <= eps_e
        });
        match found {
            Some(i) => EntailmentThreshold::At(self.scores[i]),
            None => EntailmentThreshold::Empty,
        }
    }
}

/// Smallest observed `f_e` threshold whose false-entailment count passes
/// `U_Binom(k, |Z_E|, δ_E) ≤ ε_E`.
///
/// The count `k` is non-increasing in the threshold, so bisection over the
/// sorted scores finds the smallest feasible one exactly. An empty `z_e`, or a
/// target no candidate can meet, yields [`EntailmentThreshold::Empty`].
pub fn learn_entailment_set<T: Scalar>(z_e: &[LabeledScore<T>], eps_e: T, delta_e: T) -> EntailmentThreshold<T> {
    SortedLabeled::new(z_e).learn(eps_e, delta_e)
}

pub fn pseudo_label<T: Scalar>(param: &EntailmentThreshold<T>, f_e: T) -> bool {
    param.pseudo_label(f_e)
}
