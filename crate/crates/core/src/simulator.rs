//! Synthetic worlds with known population risks, and Monte-Carlo audits of
//! the learners' guarantees against them.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta as BetaSampler, Binomial, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, Continuous, ContinuousCDF, Normal};

use crate::binom::{l_binom, u_binom};
use crate::entailment_set::{learn_entailment_set, EntailmentThreshold, LabeledScore};
use crate::error::{Error, Result};
use crate::fdr_bounds::compute_u_ssl;
use crate::method::{calibrate, Control, Method, MethodKind};
use crate::records::{Dataset, ScoreKey, ScoredRecord};
use crate::selector::Selector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScoreLaw {
    Uniform,
    Beta { a: f64, b: f64 },
}

/// `π(s) = P(e = 1 | f_m1 = s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CalibrationCurve {
    Identity,
    Logistic { slope: f64, offset: f64 },
    Constant { p: f64 },
}

impl CalibrationCurve {
    pub fn prob(&self, s: f64) -> f64 {
        match *self {
            CalibrationCurve::Identity => s,
            CalibrationCurve::Logistic { slope, offset } => 1.0 / (1.0 + (-(slope * (s - offset))).exp()),
            CalibrationCurve::Constant { p } => p,
        }
    }
}

/// Class-conditional beta laws of the entailment score `f_e`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntailScoreLaw {
    pub a1: f64,
    pub b1: f64,
    pub a0: f64,
    pub b0: f64,
}

impl Default for EntailScoreLaw {
    fn default() -> Self {
        Self {
            a1: 4.0,
            b1: 1.5,
            a0: 1.5,
            b0: 4.0,
        }
    }
}

/// `f_m2 = clamp(π(f_m1) + σ·Z, 0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelfConsistencyLaw {
    pub noise_sd: f64,
}

/// `P(em = 1 | e)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmLaw {
    pub given_entailed: f64,
    pub given_not_entailed: f64,
}

impl Default for EmLaw {
    fn default() -> Self {
        Self {
            given_entailed: 0.6,
            given_not_entailed: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub score_law: ScoreLaw,
    pub calibration: CalibrationCurve,
    #[serde(default)]
    pub entail_score: EntailScoreLaw,
    #[serde(default)]
    pub f_m2: Option<SelfConsistencyLaw>,
    pub p_v: f64,
    #[serde(default)]
    pub em: EmLaw,
    #[serde(default)]
    pub seed: u64,
}

impl WorldSpec {
    /// Uniform scores with `P(e = 1 | s) = s`.
    pub fn identity() -> Self {
        Self {
            score_law: ScoreLaw::Uniform,
            calibration: CalibrationCurve::Identity,
            entail_score: EntailScoreLaw::default(),
            f_m2: Some(SelfConsistencyLaw { noise_sd: 0.1 }),
            p_v: 0.2,
            em: EmLaw::default(),
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidWorld(m));
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::InvalidWorld(format!("{name} must lie in [0, 1], got {p}")))
            }
        };
        let shape = |name: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidWorld(format!("{name} must be positive, got {x}")))
            }
        };
        prob("p_v", self.p_v)?;
        prob("em.given_entailed", self.em.given_entailed)?;
        prob("em.given_not_entailed", self.em.given_not_entailed)?;
        let es = &self.entail_score;
        shape("a1", es.a1)?;
        shape("b1", es.b1)?;
        shape("a0", es.a0)?;
        shape("b0", es.b0)?;
        if let ScoreLaw::Beta { a, b } = self.score_law {
            shape("score_law.a", a)?;
            shape("score_law.b", b)?;
        }
        match self.calibration {
            CalibrationCurve::Identity if self.score_law != ScoreLaw::Uniform => {
                return bad("the identity curve requires uniform scores".into())
            }
            CalibrationCurve::Logistic { slope, offset } if !(slope.is_finite() && offset.is_finite()) => {
                return bad("logistic parameters must be finite".into())
            }
            CalibrationCurve::Constant { p } => prob("calibration.p", p)?,
            _ => {}
        }
        if let Some(m2) = self.f_m2 {
            shape("f_m2.noise_sd", m2.noise_sd)?;
        }
        Ok(())
    }

    fn draw_record(&self, rng: &mut ChaCha8Rng, id: String, visible: Option<bool>) -> ScoredRecord<f64> {
        let s = match self.score_law {
            ScoreLaw::Uniform => rng.gen::<f64>(),
            ScoreLaw::Beta { a, b } => BetaSampler::new(a, b).expect("validated").sample(rng),
        };
        let p = self.calibration.prob(s);
        let e = rng.gen_bool(p);
        let es = &self.entail_score;
        let (a, b) = if e { (es.a1, es.b1) } else { (es.a0, es.b0) };
        let f_e: f64 = BetaSampler::new(a, b).expect("validated").sample(rng);
        let mut r = ScoredRecord::new(id, s, f_e).with_label(e);
        if let Some(m2) = self.f_m2 {
            let z: f64 = StandardNormal.sample(rng);
            r = r.with_f_m2((p + m2.noise_sd * z).clamp(0.0, 1.0));
        }
        let em_p = if e { self.em.given_entailed } else { self.em.given_not_entailed };
        r = r.with_em(rng.gen_bool(em_p));
        r.v = visible.unwrap_or_else(|| rng.gen_bool(self.p_v));
        r
    }
}

/// `n` i.i.d. records. Hidden records (`v = 0`) keep their true label for
/// audits; calibration code only ever reads visible labels.
pub fn sample_dataset(w: &WorldSpec, n: usize) -> Result<Dataset<f64>> {
    w.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(w.seed);
    let records = (0..n).map(|i| w.draw_record(&mut rng, format!("sim-{i}"), None)).collect();
    Ok(Dataset {
        records,
        provenance: format!("simulated world, seed {}", w.seed),
    })
}

/// Exactly `n_e` visible then `n_u` hidden records.
pub fn sample_split(w: &WorldSpec, n_e: usize, n_u: usize, rng: &mut ChaCha8Rng) -> Dataset<f64> {
    let mut records = Vec::with_capacity(n_e + n_u);
    for i in 0..n_e + n_u {
        records.push(w.draw_record(rng, format!("sim-{i}"), Some(i < n_e)));
    }
    Dataset {
        records,
        provenance: format!("simulated split, seed {}", w.seed),
    }
}

const GL_POINTS: usize = 10;
const GL_PANELS: usize = 200;

/// Gauss–Legendre nodes and weights on [-1, 1] by Newton iteration.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

/// Population quantities of a world, by composite Gauss–Legendre quadrature
/// over the `f_m1` axis.
#[derive(Debug, Clone)]
pub struct TrueRisk {
    world: WorldSpec,
    nodes: Vec<(f64, f64)>,
    score_density: Option<Beta>,
    entailed: Beta,
    not_entailed: Beta,
}

/// `P(sel)`, `P(e = 0, sel)` and `P(em = 0, sel)`.
#[derive(Debug, Clone, Copy)]
struct Masses {
    selected: f64,
    not_entailed: f64,
    not_em: f64,
}

impl TrueRisk {
    pub fn new(w: &WorldSpec) -> Result<Self> {
        w.validate()?;
        let beta = |a, b| Beta::new(a, b).map_err(|e| Error::InvalidWorld(e.to_string()));
        let es = &w.entail_score;
        Ok(Self {
            world: *w,
            nodes: gauss_legendre(GL_POINTS),
            score_density: match w.score_law {
                ScoreLaw::Uniform => None,
                ScoreLaw::Beta { a, b } => Some(beta(a, b)?),
            },
            entailed: beta(es.a1, es.b1)?,
            not_entailed: beta(es.a0, es.b0)?,
        })
    }

    pub fn world(&self) -> &WorldSpec {
        &self.world
    }

    fn density(&self, s: f64) -> f64 {
        self.score_density.as_ref().map_or(1.0, |d| d.pdf(s))
    }

    /// `P(f_m2 ≥ τ | f_m1 = s)`.
    fn m2_pass(&self, tau: f64, p: f64) -> Result<f64> {
        let law = self
            .world
            .f_m2
            .ok_or_else(|| Error::InvalidSelector("the world has no f_m2 score".into()))?;
        Ok(if tau <= 0.0 {
            1.0
        } else if tau > 1.0 {
            0.0
        } else {
            let normal = Normal::new(p, law.noise_sd).expect("validated");
            normal.sf(tau)
        })
    }

    fn masses(&self, sel: &Selector<f64>) -> Result<Masses> {
        let lo = sel.threshold(ScoreKey::FM1).unwrap_or(0.0).clamp(0.0, 1.0);
        let tau2 = sel.threshold(ScoreKey::FM2);
        let mut m = Masses {
            selected: 0.0,
            not_entailed: 0.0,
            not_em: 0.0,
        };
        if sel.threshold(ScoreKey::FM1).is_some_and(|t| t > 1.0) {
            return Ok(m);
        }
        let em = self.world.em;
        let width = (1.0 - lo) / GL_PANELS as f64;
        for panel in 0..GL_PANELS {
            let mid = lo + (panel as f64 + 0.5) * width;
            for &(x, wt) in &self.nodes {
                let s = mid + 0.5 * width * x;
                let p = self.world.calibration.prob(s);
                let mut h = self.density(s) * wt * 0.5 * width;
                if let Some(t) = tau2 {
                    h *= self.m2_pass(t, p)?;
                }
                m.selected += h;
                m.not_entailed += h * (1.0 - p);
                m.not_em += h * (p * (1.0 - em.given_entailed) + (1.0 - p) * (1.0 - em.given_not_entailed));
            }
        }
        Ok(m)
    }

    fn conditional(&self, sel: &Selector<f64>, part: impl Fn(&Masses) -> f64) -> Result<f64> {
        let m = self.masses(sel)?;
        if m.selected <= 1e-300 {
            return Err(Error::UndefinedRisk(format!("`{sel}` selects a zero-probability region")));
        }
        Ok((part(&m) / m.selected).clamp(0.0, 1.0))
    }

    pub fn p_selected(&self, sel: &Selector<f64>) -> Result<f64> {
        Ok(self.masses(sel)?.selected)
    }

    /// `P(e = 0 | selected)`.
    pub fn fdr_e_at(&self, sel: &Selector<f64>) -> Result<f64> {
        self.conditional(sel, |m| m.not_entailed)
    }

    /// `P(em = 0 | selected)`.
    pub fn fdr_em_at(&self, sel: &Selector<f64>) -> Result<f64> {
        self.conditional(sel, |m| m.not_em)
    }

    /// `P(e = 0, f_e ≥ τ_E | selected)`.
    pub fn fer_at(&self, tau_e: &EntailmentThreshold<f64>, sel: &Selector<f64>) -> Result<f64> {
        let p0 = self.fdr_e_at(sel)?;
        Ok(match tau_e.tau() {
            None => 0.0,
            Some(t) => p0 * self.not_entailed.sf(t.clamp(0.0, 1.0)),
        })
    }

    /// `P(e = 1, f_e < τ_E | selected)`.
    pub fn fner_at(&self, tau_e: &EntailmentThreshold<f64>, sel: &Selector<f64>) -> Result<f64> {
        let p1 = 1.0 - self.fdr_e_at(sel)?;
        Ok(match tau_e.tau() {
            None => p1,
            Some(t) => p1 * self.entailed.cdf(t.clamp(0.0, 1.0)),
        })
    }

    /// `P(f_e < τ_E | selected)`.
    pub fn ner_at(&self, tau_e: &EntailmentThreshold<f64>, sel: &Selector<f64>) -> Result<f64> {
        let p0 = self.fdr_e_at(sel)?;
        Ok(match tau_e.tau() {
            None => 1.0,
            Some(t) => {
                let t = t.clamp(0.0, 1.0);
                ((1.0 - p0) * self.entailed.cdf(t) + p0 * self.not_entailed.cdf(t)).clamp(0.0, 1.0)
            }
        })
    }
}

/// A selector that accepts every record.
pub fn select_all() -> Selector<f64> {
    Selector::single(ScoreKey::FM1, 0.0)
}

pub fn true_fdr_e(w: &WorldSpec, sel: &Selector<f64>) -> Result<f64> {
    TrueRisk::new(w)?.fdr_e_at(sel)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlugIn {
    pub estimate: f64,
    pub std_error: f64,
    pub n_selected: usize,
}

/// Monte-Carlo FDR-E from `n` fresh records, using their shadow labels.
pub fn plug_in_fdr_e(w: &WorldSpec, sel: &Selector<f64>, n: usize) -> Result<PlugIn> {
    let ds = sample_dataset(w, n)?;
    let mut n_sel = 0usize;
    let mut n_bad = 0usize;
    for r in &ds.records {
        if sel.accepts(r)? {
            n_sel += 1;
            n_bad += usize::from(r.e == Some(false));
        }
    }
    if n_sel == 0 {
        return Err(Error::UndefinedRisk(format!("`{sel}` selected none of {n} samples")));
    }
    let p = n_bad as f64 / n_sel as f64;
    Ok(PlugIn {
        estimate: p,
        std_error: (p * (1.0 - p) / n_sel as f64).sqrt(),
        n_selected: n_sel,
    })
}

/// True FDR-E of single `f_m1` thresholds on a perfectly calibrated world.
/// Errors if the world is not calibrated or the curve ever increases.
pub fn calibrated_fdr_curve(w: &WorldSpec, taus: &[f64]) -> Result<Vec<(f64, f64)>> {
    if w.calibration != CalibrationCurve::Identity {
        return Err(Error::HypothesisUnmet(
            "monotonicity in the threshold needs a perfectly calibrated score".into(),
        ));
    }
    let risk = TrueRisk::new(w)?;
    let mut sorted = taus.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite threshold"));
    let curve = sorted
        .iter()
        .map(|&t| Ok((t, risk.fdr_e_at(&Selector::single(ScoreKey::FM1, t))?)))
        .collect::<Result<Vec<_>>>()?;
    if let Some(w) = curve.windows(2).find(|w| w[1].1 > w[0].1 + 1e-12) {
        return Err(Error::HypothesisUnmet(format!(
            "FDR-E increased from {} at τ={} to {} at τ={}",
            w[0].1, w[0].0, w[1].1, w[1].0
        )));
    }
    Ok(curve)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Claim {
    Fer,
    USsl,
    Theorem1,
    Theorem2,
}

impl fmt::Display for Claim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Claim::Fer => "fer",
            Claim::USsl => "u_ssl",
            Claim::Theorem1 => "theorem1",
            Claim::Theorem2 => "theorem2",
        })
    }
}

impl FromStr for Claim {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "fer" => Claim::Fer,
            "u_ssl" => Claim::USsl,
            "theorem1" => Claim::Theorem1,
            "theorem2" => Claim::Theorem2,
            other => return Err(format!("unknown claim `{other}`")),
        })
    }
}

/// Sizes and budgets for an audit.
///
/// `eps` is `ε_E` for the `fer` and `u_ssl` claims and `ε_S` for `theorem1`.
/// `delta` is the total confidence budget the claim is checked against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    pub n_e: usize,
    pub n_u: usize,
    pub eps: f64,
    pub delta: f64,
    pub delta_w: f64,
    pub q: usize,
    /// Learner for `theorem1`; defaults to `semi-ms` when the world has
    /// `f_m2` and `semi-single` otherwise.
    pub method: Option<MethodKind>,
    /// Success probability for `theorem2`.
    pub theta: f64,
}

impl AuditConfig {
    pub fn new(n_e: usize, n_u: usize) -> Self {
        Self {
            n_e,
            n_u,
            eps: 0.25,
            delta: 0.02,
            delta_w: 1e-5,
            q: 5,
            method: None,
            theta: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub bound: f64,
    pub true_risk: f64,
}

impl TrialOutcome {
    pub fn violated(&self) -> bool {
        self.true_risk > self.bound
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub claim: String,
    pub trials: usize,
    pub violations: usize,
    pub frequency: f64,
    /// Two-sided 95% Clopper–Pearson interval for the violation rate.
    pub ci_low: f64,
    pub ci_high: f64,
    pub pass: bool,
    pub delta: f64,
    /// `δ + 3·sqrt(δ(1 − δ)/trials)`.
    pub threshold: f64,
    pub mean_bound: f64,
    pub mean_true_risk: f64,
}

/// Runs `trial` on independent streams and compares violations to `δ` plus
/// three-sigma slack.
pub fn audit<F>(label: impl Into<String>, seed: u64, trials: usize, delta: f64, trial: F) -> Result<AuditReport>
where
    F: Fn(&mut ChaCha8Rng) -> Result<TrialOutcome> + Sync,
{
    let trials = trials.max(1);
    let outcomes = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64 + 1);
            trial(&mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(report(label.into(), &outcomes, delta))
}

pub fn report(claim: String, outcomes: &[TrialOutcome], delta: f64) -> AuditReport {
    let trials = outcomes.len();
    let violations = outcomes.iter().filter(|o| o.violated()).count();
    let nf = trials as f64;
    let frequency = violations as f64 / nf;
    let threshold = delta + 3.0 * (delta * (1.0 - delta) / nf).sqrt();
    AuditReport {
        claim,
        trials,
        violations,
        frequency,
        ci_low: l_binom(violations as u64, trials as u64, 0.025),
        ci_high: u_binom(violations as u64, trials as u64, 0.025),
        pass: frequency <= threshold,
        delta,
        threshold,
        mean_bound: outcomes.iter().map(|o| o.bound).sum::<f64>() / nf,
        mean_true_risk: outcomes.iter().map(|o| o.true_risk).sum::<f64>() / nf,
    }
}

fn labeled_scores(ds: &Dataset<f64>) -> Result<(Vec<LabeledScore<f64>>, Vec<f64>)> {
    let (z_e, z_u) = ds.partition();
    let labeled = z_e
        .iter()
        .map(|r| Ok(LabeledScore::new(r.f_e, r.require_label()?)))
        .collect::<Result<Vec<_>>>()?;
    Ok((labeled, z_u.iter().map(|r| r.f_e).collect()))
}

/// True FDR-E of a learned selector; a selector that can never fire carries
/// no risk.
pub fn selector_risk(risk: &TrueRisk, sel: &Selector<f64>) -> Result<f64> {
    match risk.fdr_e_at(sel) {
        Err(Error::UndefinedRisk(_)) => Ok(0.0),
        other => other,
    }
}

pub fn mc_verify(claim: Claim, w: &WorldSpec, trials: usize, cfg: &AuditConfig) -> Result<AuditReport> {
    let risk = TrueRisk::new(w)?;
    let all = select_all();
    let label = claim.to_string();
    match claim {
        Claim::Fer => audit(label, w.seed, trials, cfg.delta, |rng| {
            let ds = sample_split(w, cfg.n_e, 0, rng);
            let (z_e, _) = labeled_scores(&ds)?;
            let tau = learn_entailment_set(&z_e, cfg.eps, cfg.delta);
            Ok(TrialOutcome {
                bound: cfg.eps,
                true_risk: risk.fer_at(&tau, &all)?,
            })
        }),
        Claim::USsl => audit(label, w.seed, trials, cfg.delta, |rng| {
            let ds = sample_split(w, cfg.n_e, cfg.n_u, rng);
            let (z_e, z_u) = labeled_scores(&ds)?;
            let b = compute_u_ssl(&z_e, &z_u, cfg.delta / 2.0, cfg.eps, cfg.delta / 2.0);
            Ok(TrialOutcome {
                bound: b.u_ssl,
                true_risk: risk.fdr_e_at(&all)?,
            })
        }),
        Claim::Theorem1 => {
            let kind = cfg.method.unwrap_or(if w.f_m2.is_some() {
                MethodKind::SemiMs
            } else {
                MethodKind::SemiSingle
            });
            let method = Method::new(kind);
            let control = Control {
                eps: cfg.eps,
                delta: cfg.delta,
                delta_w: cfg.delta_w,
                q: cfg.q,
            };
            audit(format!("{label}:{kind}"), w.seed, trials, cfg.delta, |rng| {
                let ds = sample_split(w, cfg.n_e, cfg.n_u, rng);
                let res = calibrate(&method, &ds, &control)?;
                Ok(TrialOutcome {
                    bound: res.u_hat,
                    true_risk: selector_risk(&risk, &res.selector)?,
                })
            })
        }
        Claim::Theorem2 => {
            if !(0.0..=1.0).contains(&cfg.theta) {
                return Err(Error::InvalidWorld(format!("theta must lie in [0, 1], got {}", cfg.theta)));
            }
            audit(label, w.seed, trials, cfg.delta, |rng| {
                let n = cfg.n_e as u64;
                let k = Binomial::new(n, cfg.theta).expect("valid theta").sample(rng);
                Ok(TrialOutcome {
                    bound: u_binom(k, n, cfg.delta),
                    true_risk: cfg.theta,
                })
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let nodes = gauss_legendre(GL_POINTS);
        let sum_w: f64 = nodes.iter().map(|n| n.1).sum();
        assert!((sum_w - 2.0).abs() < 1e-14);
        let x18: f64 = nodes.iter().map(|&(x, w)| w * x.powi(18)).sum();
        assert!((x18 - 2.0 / 19.0).abs() < 1e-14);
    }

    #[test]
    fn identity_world_closed_form() {
        let risk = TrueRisk::new(&WorldSpec::identity()).unwrap();
        for &t in &[0.0, 0.25, 0.5, 0.9, 0.999] {
            let got = risk.fdr_e_at(&Selector::single(ScoreKey::FM1, t)).unwrap();
            assert!((got - (1.0 - t) / 2.0).abs() < 1e-12, "τ={t}: {got}");
        }
    }

    #[test]
    fn constant_curve_is_independent_of_selection() {
        let w = WorldSpec {
            calibration: CalibrationCurve::Constant { p: 0.7 },
            score_law: ScoreLaw::Beta { a: 2.0, b: 3.0 },
            ..WorldSpec::identity()
        };
        let risk = TrueRisk::new(&w).unwrap();
        for sel in [Selector::single(ScoreKey::FM1, 0.4), Selector::double(0.2, 0.5)] {
            assert!((risk.fdr_e_at(&sel).unwrap() - 0.3).abs() < 1e-9);
        }
    }

    #[test]
    fn impossible_selection_is_undefined() {
        let risk = TrueRisk::new(&WorldSpec::identity()).unwrap();
        let err = risk.fdr_e_at(&Selector::single(ScoreKey::FM1, 1.5)).unwrap_err();
        assert!(matches!(err, Error::UndefinedRisk(_)));
    }

    #[test]
    fn world_validation() {
        let bad = WorldSpec {
            score_law: ScoreLaw::Beta { a: 2.0, b: 2.0 },
            ..WorldSpec::identity()
        };
        assert!(bad.validate().is_err());
        let bad = WorldSpec {
            p_v: 1.2,
            ..WorldSpec::identity()
        };
        assert!(matches!(sample_dataset(&bad, 3), Err(Error::InvalidWorld(_))));
    }

    #[test]
    fn world_round_trips_through_json() {
        let w = WorldSpec {
            calibration: CalibrationCurve::Logistic { slope: 6.0, offset: 0.5 },
            score_law: ScoreLaw::Beta { a: 2.0, b: 2.0 },
            ..WorldSpec::identity()
        };
        let json = serde_json::to_string(&w).unwrap();
        assert_eq!(serde_json::from_str::<WorldSpec>(&json).unwrap(), w);
    }

    #[test]
    fn sampling_edge_cases() {
        assert!(sample_dataset(&WorldSpec::identity(), 0).unwrap().is_empty());
        let hidden = WorldSpec {
            p_v: 0.0,
            ..WorldSpec::identity()
        };
        let ds = sample_dataset(&hidden, 200).unwrap();
        assert_eq!(ds.n_labeled(), 0);
        assert!(ds.records.iter().all(|r| r.e.is_some() && r.label().is_none()));
    }

    #[test]
    fn calibrated_curve_refuses_uncalibrated_world() {
        let w = WorldSpec {
            calibration: CalibrationCurve::Constant { p: 0.5 },
            ..WorldSpec::identity()
        };
        assert!(matches!(calibrated_fdr_curve(&w, &[0.1]), Err(Error::HypothesisUnmet(_))));
    }

    #[test]
    fn fer_and_ner_limits() {
        let risk = TrueRisk::new(&WorldSpec::identity()).unwrap();
        let all = select_all();
        assert_eq!(risk.fer_at(&EntailmentThreshold::Empty, &all).unwrap(), 0.0);
        assert_eq!(risk.ner_at(&EntailmentThreshold::Empty, &all).unwrap(), 1.0);
        assert!((risk.fer_at(&EntailmentThreshold::At(0.0), &all).unwrap() - 0.5).abs() < 1e-12);
        assert!(risk.ner_at(&EntailmentThreshold::At(0.0), &all).unwrap().abs() < 1e-12);
    }

    #[test]
    fn audit_report_slack() {
        let outs = vec![TrialOutcome { bound: 0.1, true_risk: 0.0 }; 100];
        let r = report("x".into(), &outs, 0.05);
        assert_eq!(r.violations, 0);
        assert!(r.pass);
        assert_eq!(r.ci_low, 0.0);
        assert!((r.threshold - (0.05 + 3.0 * (0.05 * 0.95 / 100.0_f64).sqrt())).abs() < 1e-15);
    }
}
