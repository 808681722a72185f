//! Uniform entry point over every learner.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{sgen_em, sgen_psl, sgen_sup, PslConfig};
use crate::calibrate::{sgen_semi_double, sgen_semi_ms, sgen_semi_single};
use crate::error::Result;
use crate::records::{Dataset, RiskBudget, ScoreKey};
use crate::scalar::Scalar;
use crate::selector::CertifiedResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodKind {
    SemiMs,
    SemiSingle,
    SemiDouble,
    Sup,
    Psl,
    Em,
}

impl MethodKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MethodKind::SemiMs => "semi-ms",
            MethodKind::SemiSingle => "semi-single",
            MethodKind::SemiDouble => "semi-double",
            MethodKind::Sup => "sup",
            MethodKind::Psl => "psl",
            MethodKind::Em => "em",
        }
    }

    pub fn needs_f_m2(self) -> bool {
        matches!(self, MethodKind::SemiMs | MethodKind::SemiDouble)
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "semi-ms" => MethodKind::SemiMs,
            "semi-single" => MethodKind::SemiSingle,
            "semi-double" => MethodKind::SemiDouble,
            "sup" => MethodKind::Sup,
            "psl" => MethodKind::Psl,
            "em" => MethodKind::Em,
            other => return Err(format!("unknown method `{other}`")),
        })
    }
}

/// A learner plus the options it needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Method<T> {
    pub kind: MethodKind,
    /// Score for single-threshold learners; ignored by `semi-ms` / `semi-double`.
    pub score_key: ScoreKey,
    pub psl: PslConfig<T>,
}

impl<T: Scalar> Method<T> {
    pub fn new(kind: MethodKind) -> Self {
        Self {
            kind,
            score_key: ScoreKey::FM1,
            psl: PslConfig::default(),
        }
    }

    pub fn with_key(mut self, key: ScoreKey) -> Self {
        self.score_key = key;
        self
    }
}

/// User-level control parameters `(ε, δ)` plus the ledger knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Control<T> {
    pub eps: T,
    pub delta: T,
    pub delta_w: T,
    pub q: usize,
}

impl<T: Scalar> Control<T> {
    pub fn new(eps: T, delta: T) -> Self {
        Self {
            eps,
            delta,
            delta_w: T::lit(1e-5),
            q: 5,
        }
    }

    pub fn risk_budget(&self) -> Result<RiskBudget<T>> {
        RiskBudget::from_control(self.eps, self.delta, self.delta_w, self.q)
    }
}

/// Runs `method` on a dataset's labeled/unlabeled partition.
pub fn calibrate<T: Scalar>(method: &Method<T>, ds: &Dataset<T>, control: &Control<T>) -> Result<CertifiedResult<T>> {
    let (z_e, z_u) = ds.partition();
    match method.kind {
        MethodKind::SemiMs => sgen_semi_ms(&z_e, &z_u, &control.risk_budget()?),
        MethodKind::SemiSingle => sgen_semi_single(method.score_key, &z_e, &z_u, &control.risk_budget()?),
        MethodKind::SemiDouble => sgen_semi_double(&z_e, &z_u, &control.risk_budget()?),
        MethodKind::Sup => sgen_sup(method.score_key, &z_e, control.eps, control.delta),
        MethodKind::Psl => sgen_psl(method.score_key, &z_e, &z_u, control.eps, control.delta, &method.psl),
        MethodKind::Em => {
            let all: Vec<_> = ds.records.iter().collect();
            sgen_em(method.score_key, &all, control.eps, control.delta)
        }
    }
}
