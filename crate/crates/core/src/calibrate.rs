//! Semi-supervised selector learning with a certified FDR-E bound.
//!
//! Each learner bisects over observed scores. At every probed threshold it
//! filters the labeled and unlabeled pools and evaluates the composed bound
//! from [`crate::fdr_bounds::fdr_e_bound`] with the confidence split evenly
//! across all probes the search may make (union bound). A probe is feasible
//! when its bound is at most `ε_S`; feasible probes move the threshold down.
//!
//! Note that the bound need not be monotone in the threshold. The search does
//! not rely on that for validity; the full probe trace is kept in the result.

use std::borrow::Borrow;

use crate::entailment_set::LabeledScore;
use crate::error::{Error, Result};
use crate::fdr_bounds::{fdr_e_bound, BoundBudget};
use crate::records::{RiskBudget, ScoreKey, ScoredRecord};
use crate::scalar::Scalar;
use crate::search::{search_iterations, smallest_feasible};
use crate::selector::{BranchSummary, Bounded, CertifiedResult, EvalBudget, Selector, TraceStep};

#[derive(Debug, Clone, Copy)]
struct Item<T> {
    m1: T,
    m2: Option<T>,
    f_e: T,
}

impl<T: Scalar> Item<T> {
    fn score(&self, key: ScoreKey) -> T {
        match key {
            ScoreKey::FM1 => self.m1,
            ScoreKey::FM2 => self.m2.expect("pool validated score presence"),
        }
    }
}

/// Labeled and unlabeled calibration examples reduced to the fields the
/// learners read.
#[derive(Debug, Clone)]
struct Pool<T> {
    labeled: Vec<(Item<T>, bool)>,
    unlabeled: Vec<Item<T>>,
}

impl<T: Scalar> Pool<T> {
    fn new<R: Borrow<ScoredRecord<T>>>(z_e: &[R], z_u: &[R], keys: &[ScoreKey]) -> Result<Self> {
        let item = |r: &ScoredRecord<T>| -> Result<Item<T>> {
            for &k in keys {
                r.require_score(k)?;
            }
            Ok(Item {
                m1: r.f_m1,
                m2: r.f_m2,
                f_e: r.f_e,
            })
        };
        let labeled = z_e
            .iter()
            .map(|r| {
                let r = r.borrow();
                Ok((item(r)?, r.require_label()?))
            })
            .collect::<Result<Vec<_>>>()?;
        let unlabeled = z_u.iter().map(|r| item(r.borrow())).collect::<Result<Vec<_>>>()?;
        Ok(Self { labeled, unlabeled })
    }

    fn len(&self) -> usize {
        self.labeled.len() + self.unlabeled.len()
    }

    /// Ascending scores of the union.
    fn candidates(&self, key: ScoreKey) -> Vec<T> {
        let mut c: Vec<T> = self
            .labeled
            .iter()
            .map(|(it, _)| it.score(key))
            .chain(self.unlabeled.iter().map(|it| it.score(key)))
            .collect();
        c.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
        c
    }

    fn select(&self, keep: impl Fn(&Item<T>) -> bool) -> (Vec<LabeledScore<T>>, Vec<T>) {
        let z_e = self
            .labeled
            .iter()
            .filter(|(it, _)| keep(it))
            .map(|&(it, e)| LabeledScore::new(it.f_e, e))
            .collect();
        let z_u = self.unlabeled.iter().filter(|it| keep(it)).map(|it| it.f_e).collect();
        (z_e, z_u)
    }

    fn evaluate(&self, thresholds: &[(ScoreKey, T)], budget: &BoundBudget<T>, eps: T) -> TraceStep<T> {
        let (z_e, z_u) = self.select(|it| thresholds.iter().all(|&(k, t)| it.score(k) >= t));
        let bound = fdr_e_bound(&z_e, &z_u, budget);
        TraceStep {
            thresholds: thresholds.iter().map(|&(_, t)| t).collect(),
            n_labeled: z_e.len(),
            n_unlabeled: z_u.len(),
            bound: bound.u,
            feasible: bound.u <= eps,
        }
    }
}

pub(crate) fn branch_name_single(key: ScoreKey) -> String {
    format!("semi-single:{key}")
}

pub(crate) const BRANCH_DOUBLE: &str = "semi-double";

/// Single-threshold learner `ŝ(x) = 1(score ≥ τ_S)`.
///
/// Runs at most `I = ⌈log2(N+1)⌉` probes over the `N` union scores, each with
/// confidence `δ/I`. Returns `Success` at the smallest feasible probed
/// threshold, or `Fail` at the bound-minimizing one with `Û = U_min`.
pub fn sgen_semi_single<T: Scalar, R: Borrow<ScoredRecord<T>>>(
    key: ScoreKey,
    z_e: &[R],
    z_u: &[R],
    budget: &RiskBudget<T>,
) -> Result<CertifiedResult<T>> {
    let pool = Pool::new(z_e, z_u, &[key])?;
    let branch = branch_name_single(key);
    let n = pool.len();
    if n == 0 {
        return Ok(CertifiedResult::vacuous(
            Selector::single(key, T::one()),
            budget.eps_s,
            branch,
            EvalBudget::Composed(budget.per_evaluation(1)),
        ));
    }
    let iterations = search_iterations(n);
    let per_eval = budget.per_evaluation(iterations);
    let cands = pool.candidates(key);

    let mut trace = Vec::with_capacity(iterations);
    let mut chosen = None;
    smallest_feasible(n, |i| {
        let step = pool.evaluate(&[(key, cands[i])], &per_eval, budget.eps_s);
        let feasible = step.feasible;
        if feasible {
            chosen = Some(trace.len());
        }
        trace.push(step);
        feasible
    });
    Ok(CertifiedResult::from_trace(
        chosen,
        trace,
        |s| Selector::single(key, s.thresholds[0]),
        budget.eps_s,
        branch,
        iterations,
        EvalBudget::Composed(per_eval),
    ))
}

/// Double-threshold learner `ŝ(x) = 1(f_m1 ≥ τ_1 ∧ f_m2 ≥ τ_2)`.
///
/// Nested bisection: the outer level over `f_m1`, the inner level over
/// `f_m2`, each with at most `I` probes, so every evaluation gets `δ/I²`. An
/// outer probe is feasible when its inner search found a feasible pair.
pub fn sgen_semi_double<T: Scalar, R: Borrow<ScoredRecord<T>>>(
    z_e: &[R],
    z_u: &[R],
    budget: &RiskBudget<T>,
) -> Result<CertifiedResult<T>> {
    let pool = Pool::new(z_e, z_u, &[ScoreKey::FM1, ScoreKey::FM2])?;
    let branch = BRANCH_DOUBLE.to_string();
    let n = pool.len();
    if n == 0 {
        return Ok(CertifiedResult::vacuous(
            Selector::double(T::one(), T::one()),
            budget.eps_s,
            branch,
            EvalBudget::Composed(budget.per_evaluation(1)),
        ));
    }
    let levels = search_iterations(n);
    let iterations = levels * levels;
    let per_eval = budget.per_evaluation(iterations);
    let outer = pool.candidates(ScoreKey::FM1);
    let inner = pool.candidates(ScoreKey::FM2);

    let mut trace: Vec<TraceStep<T>> = Vec::with_capacity(iterations);
    let mut chosen = None;
    smallest_feasible(n, |i| {
        let tau1 = outer[i];
        let mut inner_hit = None;
        smallest_feasible(n, |j| {
            let step = pool.evaluate(
                &[(ScoreKey::FM1, tau1), (ScoreKey::FM2, inner[j])],
                &per_eval,
                budget.eps_s,
            );
            let feasible = step.feasible;
            if feasible {
                inner_hit = Some(trace.len());
            }
            trace.push(step);
            feasible
        });
        if inner_hit.is_some() {
            chosen = inner_hit;
        }
        inner_hit.is_some()
    });
    Ok(CertifiedResult::from_trace(
        chosen,
        trace,
        |s| Selector::double(s.thresholds[0], s.thresholds[1]),
        budget.eps_s,
        branch,
        iterations,
        EvalBudget::Composed(per_eval),
    ))
}

/// Neuro-selection over `{f_m1 single, f_m2 single, double}`.
///
/// Each branch runs with a third of every confidence term. Among successful
/// branches the one with the largest `Û` is returned; if none succeeded, the
/// one with the smallest `Û`. Ties keep branch order. A branch that cannot
/// run (e.g. `f_m2` absent) counts as a failure and is never preferred over a
/// branch that ran.
pub fn sgen_semi_ms<T: Scalar, R: Borrow<ScoredRecord<T>> + Sync>(
    z_e: &[R],
    z_u: &[R],
    budget: &RiskBudget<T>,
) -> Result<CertifiedResult<T>> {
    let third = budget.split(3);
    let (b1, b2, b3) = std::thread::scope(|s| {
        let h2 = s.spawn(|| sgen_semi_single(ScoreKey::FM2, z_e, z_u, &third));
        let h3 = s.spawn(|| sgen_semi_double(z_e, z_u, &third));
        let b1 = sgen_semi_single(ScoreKey::FM1, z_e, z_u, &third);
        (b1, h2.join().expect("branch thread"), h3.join().expect("branch thread"))
    });
    let names = [
        branch_name_single(ScoreKey::FM1),
        branch_name_single(ScoreKey::FM2),
        BRANCH_DOUBLE.to_string(),
    ];
    let outcomes = [b1, b2, b3];

    let summaries: Vec<BranchSummary<T>> = outcomes
        .iter()
        .zip(&names)
        .map(|(o, name)| match o {
            Ok(r) => r.summary(),
            Err(e) => BranchSummary {
                branch: name.clone(),
                selector: None,
                u_hat: T::one(),
                bounded: Bounded::Fail,
                error: Some(e.to_string()),
            },
        })
        .collect();

    let ran: Vec<&CertifiedResult<T>> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
    let pick = pick_branch(&ran);
    let Some(winner) = pick else {
        let [first, _, _] = outcomes;
        return Err(first.err().unwrap_or_else(|| Error::InvalidRecord("no branch ran".into())));
    };
    let mut result = winner.clone();
    result.diagnostics.branches = summaries;
    Ok(result)
}

fn pick_branch<'a, T: Scalar>(ran: &[&'a CertifiedResult<T>]) -> Option<&'a CertifiedResult<T>> {
    let mut best: Option<&CertifiedResult<T>> = None;
    let successes: Vec<_> = ran.iter().copied().filter(|r| r.is_success()).collect();
    if successes.is_empty() {
        for r in ran {
            if best.map_or(true, |b| r.u_hat < b.u_hat) {
                best = Some(r);
            }
        }
    } else {
        for r in successes {
            if best.map_or(true, |b| r.u_hat > b.u_hat) {
                best = Some(r);
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(i: usize, m1: f64, m2: f64, f_e: f64, e: Option<bool>) -> ScoredRecord<f64> {
        let r = ScoredRecord::new(format!("r{i}"), m1, f_e).with_f_m2(m2);
        match e {
            Some(e) => r.with_label(e),
            None => r,
        }
    }

    /// Deterministic pseudo-random pool where higher scores are more often correct.
    fn pool(n_e: usize, n_u: usize) -> (Vec<ScoredRecord<f64>>, Vec<ScoredRecord<f64>>) {
        let mut state = 0x2545_f491_4f6c_dd1d_u64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let mut make = |i: usize, labeled: bool| {
            let m1 = next();
            let e = next() < m1;
            let f_e = if e { 0.5 + 0.5 * next() } else { 0.6 * next() };
            let m2 = (m1 + 0.2 * (next() - 0.5)).clamp(0.0, 1.0);
            record(i, m1, m2, f_e, labeled.then_some(e))
        };
        let z_e = (0..n_e).map(|i| make(i, true)).collect();
        let z_u = (n_e..n_e + n_u).map(|i| make(i, false)).collect();
        (z_e, z_u)
    }

    fn budget(eps: f64) -> RiskBudget<f64> {
        RiskBudget::from_control(eps, 0.02, 1e-5, 5).unwrap()
    }

    #[test]
    fn eps_one_descends_to_smallest_probe() {
        let (z_e, z_u) = pool(30, 60);
        let r = sgen_semi_single(ScoreKey::FM1, &z_e, &z_u, &budget(1.0)).unwrap();
        assert_eq!(r.bounded, Bounded::Success);
        let min = z_e.iter().chain(&z_u).map(|r| r.f_m1).fold(f64::INFINITY, f64::min);
        assert_eq!(r.selector.threshold(ScoreKey::FM1), Some(min));
        assert!(r.diagnostics.trace.iter().all(|s| s.feasible));
    }

    #[test]
    fn tiny_eps_fails_with_minimum_bound() {
        let (z_e, z_u) = pool(30, 60);
        let r = sgen_semi_single(ScoreKey::FM1, &z_e, &z_u, &budget(1e-9)).unwrap();
        assert_eq!(r.bounded, Bounded::Fail);
        assert!(r.u_hat > 0.0);
        let min = r.diagnostics.trace.iter().map(|s| s.bound).fold(f64::INFINITY, f64::min);
        assert_eq!(r.u_hat, min);
    }

    #[test]
    fn empty_union_is_vacuous_fail() {
        let none: Vec<ScoredRecord<f64>> = vec![];
        let r = sgen_semi_single(ScoreKey::FM1, &none, &none, &budget(0.3)).unwrap();
        assert_eq!((r.bounded, r.u_hat), (Bounded::Fail, 1.0));
        let r = sgen_semi_double(&none, &none, &budget(0.3)).unwrap();
        assert_eq!((r.bounded, r.u_hat), (Bounded::Fail, 1.0));
    }

    #[test]
    fn unlabeled_record_in_z_e_is_rejected() {
        let z_e = vec![record(0, 0.5, 0.5, 0.5, None)];
        let err = sgen_semi_single(ScoreKey::FM1, &z_e, &[], &budget(0.3)).unwrap_err();
        assert!(matches!(err, Error::MissingLabel { .. }));
    }

    #[test]
    fn double_requires_f_m2() {
        let z_e = vec![ScoredRecord::new("a", 0.5, 0.5).with_label(true)];
        let err = sgen_semi_double(&z_e, &[], &budget(0.3)).unwrap_err();
        assert!(matches!(err, Error::MissingScore { key: ScoreKey::FM2, .. }));
    }

    #[test]
    fn double_with_eps_one_reaches_minimal_pair() {
        let (z_e, z_u) = pool(20, 40);
        let r = sgen_semi_double(&z_e, &z_u, &budget(1.0)).unwrap();
        assert_eq!(r.bounded, Bounded::Success);
        let all: Vec<_> = z_e.iter().chain(&z_u).collect();
        let min1 = all.iter().map(|r| r.f_m1).fold(f64::INFINITY, f64::min);
        let min2 = all.iter().map(|r| r.f_m2.unwrap()).fold(f64::INFINITY, f64::min);
        assert_eq!(r.selector.threshold(ScoreKey::FM1), Some(min1));
        assert_eq!(r.selector.threshold(ScoreKey::FM2), Some(min2));
    }

    #[test]
    fn ms_without_f_m2_falls_back_to_f_m1_branch() {
        let (z_e, z_u) = pool(30, 60);
        let strip = |v: Vec<ScoredRecord<f64>>| {
            v.into_iter()
                .map(|mut r| {
                    r.f_m2 = None;
                    r
                })
                .collect::<Vec<_>>()
        };
        let (z_e, z_u) = (strip(z_e), strip(z_u));
        let r = sgen_semi_ms(&z_e, &z_u, &budget(1e-9)).unwrap();
        assert_eq!(r.branch, "semi-single:f_m1");
        assert_eq!(r.diagnostics.branches.len(), 3);
        assert!(r.diagnostics.branches[1].error.is_some());
        assert!(r.diagnostics.branches[2].error.is_some());
    }

    #[test]
    fn ms_picks_largest_success_or_smallest_fail() {
        let mk = |u: f64, ok: bool| CertifiedResult::<f64> {
            selector: Selector::single(ScoreKey::FM1, 0.5),
            u_hat: u,
            bounded: if ok { Bounded::Success } else { Bounded::Fail },
            eps: 0.3,
            branch: format!("{u}"),
            diagnostics: crate::selector::Diagnostics {
                iterations: 1,
                eval_budget: EvalBudget::Binomial { delta: 0.1 },
                trace: vec![],
                branches: vec![],
            },
        };
        let (a, b, c) = (mk(0.5, false), mk(0.4, false), mk(0.6, false));
        assert_eq!(pick_branch(&[&a, &b, &c]).unwrap().u_hat, 0.4);
        let (a, b, c) = (mk(0.2, true), mk(0.4, false), mk(0.25, true));
        assert_eq!(pick_branch(&[&a, &b, &c]).unwrap().u_hat, 0.25);
        let (a, b, c) = (mk(0.9, false), mk(0.1, true), mk(0.05, false));
        assert_eq!(pick_branch(&[&a, &b, &c]).unwrap().u_hat, 0.1);
    }

    #[test]
    fn results_are_deterministic() {
        let (z_e, z_u) = pool(40, 120);
        let a = sgen_semi_ms(&z_e, &z_u, &budget(0.3)).unwrap();
        let b = sgen_semi_ms(&z_e, &z_u, &budget(0.3)).unwrap();
        assert_eq!(a, b);
    }
}
