//! Threshold learners that certify a PAC upper bound on the false discovery
//! rate of generated answers, measured by textual entailment (FDR-E).
//!
//! The numeric core is generic over [`Scalar`] (`f64` or `f32`). The
//! simulator works in `f64`.

pub mod baselines;
pub mod binom;
pub mod calibrate;
pub mod entailment_set;
pub mod error;
pub mod evaluate;
pub mod fdr_bounds;
pub mod method;
pub mod records;
pub mod scalar;
pub mod search;
pub mod selector;
pub mod simulator;

pub use binom::{l_binom, u_binom};
pub use entailment_set::{learn_entailment_set, pseudo_label, EntailmentThreshold, LabeledScore};
pub use error::{Error, Result};
pub use evaluate::{apply_selector, evaluate, repeated_splits, Decision, EvalReport, SplitProtocol};
pub use fdr_bounds::{compute_u_ssl, compute_u_ssl_opt, fdr_e_bound, BoundBudget, ComposedBound, SslBound};
pub use method::{calibrate, Control, Method, MethodKind};
pub use records::{Dataset, RiskBudget, SchemaMode, ScoreKey, ScoredRecord};
pub use scalar::Scalar;
pub use selector::{Bounded, CertifiedResult, Selector, Term};

pub type Dataset64 = Dataset<f64>;
pub type Record64 = ScoredRecord<f64>;
pub type Selector64 = Selector<f64>;
pub type RiskBudget64 = RiskBudget<f64>;
pub type Control64 = Control<f64>;
pub type CertifiedResult64 = CertifiedResult<f64>;

pub type Dataset32 = Dataset<f32>;
pub type Record32 = ScoredRecord<f32>;
pub type Selector32 = Selector<f32>;
pub type RiskBudget32 = RiskBudget<f32>;
pub type Control32 = Control<f32>;
pub type CertifiedResult32 = CertifiedResult<f32>;
