//! Threshold selectors and the certified result every learner returns.

use std::borrow::Borrow;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fdr_bounds::BoundBudget;
use crate::records::{ScoreKey, ScoredRecord};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Term<T> {
    pub key: ScoreKey,
    pub threshold: T,
}

/// Accepts a record iff every `score ≥ threshold` term holds.
///
/// One or two terms over distinct score keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", try_from = "RawSelector<T>")]
pub struct Selector<T> {
    terms: Vec<Term<T>>,
}

#[derive(Deserialize)]
#[serde(bound = "T: Scalar")]
struct RawSelector<T> {
    terms: Vec<Term<T>>,
}

impl<T: Scalar> TryFrom<RawSelector<T>> for Selector<T> {
    type Error = Error;

    fn try_from(raw: RawSelector<T>) -> Result<Self> {
        Selector::new(raw.terms)
    }
}

impl<T: Scalar> Selector<T> {
    pub fn new(terms: Vec<Term<T>>) -> Result<Self> {
        match terms.as_slice() {
            [] => Err(Error::InvalidSelector("a selector needs at least one term".into())),
            [a, b] if a.key == b.key => Err(Error::InvalidSelector(format!("score key {} used twice", a.key))),
            [_] | [_, _] => {
                if let Some(t) = terms.iter().find(|t| !t.threshold.is_finite()) {
                    return Err(Error::InvalidSelector(format!("non-finite threshold on {}", t.key)));
                }
                Ok(Self { terms })
            }
            _ => Err(Error::InvalidSelector("at most two terms are supported".into())),
        }
    }

    pub fn single(key: ScoreKey, threshold: T) -> Self {
        Self {
            terms: vec![Term { key, threshold }],
        }
    }

    pub fn double(tau_m1: T, tau_m2: T) -> Self {
        Self {
            terms: vec![
                Term {
                    key: ScoreKey::FM1,
                    threshold: tau_m1,
                },
                Term {
                    key: ScoreKey::FM2,
                    threshold: tau_m2,
                },
            ],
        }
    }

    pub fn terms(&self) -> &[Term<T>] {
        &self.terms
    }

    pub fn threshold(&self, key: ScoreKey) -> Option<T> {
        self.terms.iter().find(|t| t.key == key).map(|t| t.threshold)
    }

    /// Fails fast when the record lacks a referenced score.
    pub fn accepts(&self, r: &ScoredRecord<T>) -> Result<bool> {
        let mut ok = true;
        for t in &self.terms {
            ok &= r.require_score(t.key)? >= t.threshold;
        }
        Ok(ok)
    }

    /// The records this selector accepts, in order.
    pub fn filter<'a, R: Borrow<ScoredRecord<T>>>(&self, records: &'a [R]) -> Result<Vec<&'a ScoredRecord<T>>> {
        let mut out = Vec::new();
        for r in records {
            let r = r.borrow();
            if self.accepts(r)? {
                out.push(r);
            }
        }
        Ok(out)
    }
}

impl<T: Scalar> fmt::Display for Selector<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(" ∧ ")?;
            }
            write!(f, "{} ≥ {}", t.key, t.threshold)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bounded {
    Success,
    Fail,
}

/// Confidence handed to each bound evaluation during a search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", tag = "kind", rename_all = "snake_case")]
pub enum EvalBudget<T> {
    /// Composed FDR-E bound (semi-supervised learners).
    Composed(BoundBudget<T>),
    /// A single binomial upper bound (supervised and baseline learners).
    Binomial { delta: T },
}

/// One visited candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TraceStep<T> {
    pub thresholds: Vec<T>,
    pub n_labeled: usize,
    pub n_unlabeled: usize,
    pub bound: T,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct BranchSummary<T> {
    pub branch: String,
    pub selector: Option<Selector<T>>,
    pub u_hat: T,
    pub bounded: Bounded,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Diagnostics<T> {
    /// Union bound count the confidence was divided by.
    pub iterations: usize,
    pub eval_budget: EvalBudget<T>,
    pub trace: Vec<TraceStep<T>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub branches: Vec<BranchSummary<T>>,
}

/// Learned selector with its certified FDR bound `Û`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CertifiedResult<T> {
    pub selector: Selector<T>,
    pub u_hat: T,
    pub bounded: Bounded,
    /// Risk target the run was asked for.
    pub eps: T,
    /// Which learner (and score set) produced the selector.
    pub branch: String,
    pub diagnostics: Diagnostics<T>,
}

impl<T: Scalar> CertifiedResult<T> {
    pub fn is_success(&self) -> bool {
        self.bounded == Bounded::Success
    }

    pub fn summary(&self) -> BranchSummary<T> {
        BranchSummary {
            branch: self.branch.clone(),
            selector: Some(self.selector.clone()),
            u_hat: self.u_hat,
            bounded: self.bounded,
            error: None,
        }
    }

    /// Builds the result from a finished search trace: the chosen step if the
    /// search found a feasible candidate, else the last minimum-bound step.
    pub(crate) fn from_trace(
        chosen: Option<usize>,
        trace: Vec<TraceStep<T>>,
        selector_at: impl Fn(&TraceStep<T>) -> Selector<T>,
        eps: T,
        branch: String,
        iterations: usize,
        eval_budget: EvalBudget<T>,
    ) -> Self {
        let (idx, bounded) = match chosen {
            Some(i) => (i, Bounded::Success),
            None => {
                let mut best = 0;
                for (i, s) in trace.iter().enumerate() {
                    if s.bound <= trace[best].bound {
                        best = i;
                    }
                }
                (best, Bounded::Fail)
            }
        };
        let step = &trace[idx];
        Self {
            selector: selector_at(step),
            u_hat: step.bound,
            bounded,
            eps,
            branch,
            diagnostics: Diagnostics {
                iterations,
                eval_budget,
                trace,
                branches: Vec::new(),
            },
        }
    }

    /// `Fail` with the vacuous bound 1 (no data to search over).
    pub(crate) fn vacuous(selector: Selector<T>, eps: T, branch: String, eval_budget: EvalBudget<T>) -> Self {
        Self {
            selector,
            u_hat: T::one(),
            bounded: Bounded::Fail,
            eps,
            branch,
            diagnostics: Diagnostics {
                iterations: 0,
                eval_budget,
                trace: Vec::new(),
                branches: Vec::new(),
            },
        }
    }
}
