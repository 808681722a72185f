#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sgen_core::binom::u_binom;
use sgen_core::fdr_bounds::BoundBudget;
use sgen_core::selector::EvalBudget;
use sgen_core::{fdr_e_bound, CertifiedResult, EntailmentThreshold, LabeledScore, ScoreKey, ScoredRecord};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Smallest observed `f_e` whose false-entailment count passes the bound,
/// found by trying every value.
pub fn exhaustive_es(z: &[LabeledScore<f64>], eps: f64, delta: f64) -> EntailmentThreshold<f64> {
    let mut taus: Vec<f64> = z.iter().map(|s| s.f_e).collect();
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    for t in taus {
        let k = z.iter().filter(|s| !s.e && s.f_e >= t).count() as u64;
        if u_binom(k, z.len() as u64, delta) <= eps {
            return EntailmentThreshold::At(t);
        }
    }
    EntailmentThreshold::Empty
}

/// `⌈log2(n + 1)⌉` by counting halvings.
pub fn probe_count(n: usize) -> usize {
    let mut k = 0;
    while (1usize << k) < n + 1 {
        k += 1;
    }
    k
}

/// Bound of a learner's candidate, recomputed from scratch.
pub type BoundAt<'a> = Box<dyn Fn(f64) -> f64 + 'a>;

pub fn sup_bound<'a>(key: ScoreKey, z: &'a [ScoredRecord<f64>], delta: f64) -> BoundAt<'a> {
    Box::new(move |tau| {
        let sel: Vec<_> = z.iter().filter(|r| r.score(key).unwrap() >= tau).collect();
        let losses = sel.iter().filter(|r| r.label() == Some(false)).count();
        u_binom(losses as u64, sel.len() as u64, delta)
    })
}

pub fn semi_bound<'a>(
    key: ScoreKey,
    z_e: &'a [ScoredRecord<f64>],
    z_u: &'a [ScoredRecord<f64>],
    budget: BoundBudget<f64>,
) -> BoundAt<'a> {
    Box::new(move |tau| {
        let e: Vec<_> = z_e
            .iter()
            .filter(|r| r.score(key).unwrap() >= tau)
            .map(|r| LabeledScore::new(r.f_e, r.label().unwrap()))
            .collect();
        let u: Vec<_> = z_u.iter().filter(|r| r.score(key).unwrap() >= tau).map(|r| r.f_e).collect();
        fdr_e_bound(&e, &u, &budget).u
    })
}

pub fn eval_delta(res: &CertifiedResult<f64>) -> f64 {
    match res.diagnostics.eval_budget {
        EvalBudget::Binomial { delta } => delta,
        EvalBudget::Composed(_) => panic!("expected a binomial budget"),
    }
}

pub fn eval_budget(res: &CertifiedResult<f64>) -> BoundBudget<f64> {
    match res.diagnostics.eval_budget {
        EvalBudget::Composed(b) => b,
        EvalBudget::Binomial { .. } => panic!("expected a composed budget"),
    }
}

pub enum Oracle {
    /// Feasibility along the sorted candidates is not of the form `0…01…1`.
    NotMonotone,
    Success { tau: f64, bound: f64 },
    AllInfeasible,
}

pub fn exhaustive_search(cands: &[f64], bound: &BoundAt<'_>, eps: f64) -> Oracle {
    let mut cands = cands.to_vec();
    cands.dedup();
    let feas: Vec<bool> = cands.iter().map(|&t| bound(t) <= eps).collect();
    let first = feas.iter().position(|&f| f);
    match first {
        None => Oracle::AllInfeasible,
        Some(i) if feas[i..].iter().all(|&f| f) => Oracle::Success {
            tau: cands[i],
            bound: bound(cands[i]),
        },
        Some(_) => Oracle::NotMonotone,
    }
}

/// Labeled and unlabeled records where higher `f_m1` is more often correct.
pub fn random_pool(rng: &mut ChaCha8Rng, n_e: usize, n_u: usize) -> (Vec<ScoredRecord<f64>>, Vec<ScoredRecord<f64>>) {
    let mut make = |i: usize, labeled: bool| {
        let m1: f64 = (rng.gen::<f64>() * 100.0).round() / 100.0;
        let e = rng.gen::<f64>() < m1.powf(0.5);
        let f_e = if e { rng.gen_range(0.3..1.0) } else { rng.gen_range(0.0..0.7) };
        let m2 = (m1 + rng.gen_range(-0.2..0.2)).clamp(0.0, 1.0);
        let mut r = ScoredRecord::new(format!("r{i}"), m1, f_e).with_f_m2(m2).with_label(e);
        r.v = labeled;
        r
    };
    let z_e = (0..n_e).map(|i| make(i, true)).collect();
    let z_u = (n_e..n_e + n_u).map(|i| make(i, false)).collect();
    (z_e, z_u)
}

pub fn sorted_scores(key: ScoreKey, sets: &[&[ScoredRecord<f64>]]) -> Vec<f64> {
    let mut c: Vec<f64> = sets.iter().flat_map(|s| s.iter().map(|r| r.score(key).unwrap())).collect();
    c.sort_by(f64::total_cmp);
    c
}

/// Few tied score levels with error rates falling by level, so the top
/// group is large and feasibility typically switches once in the interior.
pub fn coarse_pool(rng: &mut ChaCha8Rng, n_e: usize, n_u: usize) -> (Vec<ScoredRecord<f64>>, Vec<ScoredRecord<f64>>) {
    const LOSS: [f64; 5] = [0.8, 0.5, 0.25, 0.08, 0.0];
    let mut make = |i: usize, labeled: bool| {
        let level = rng.gen_range(0..LOSS.len());
        let e = !rng.gen_bool(LOSS[level]);
        let f_e = if e { rng.gen_range(0.6..1.0) } else { rng.gen_range(0.0..0.4) };
        let m1 = level as f64 / 4.0;
        let mut r = ScoredRecord::new(format!("c{i}"), m1, f_e).with_f_m2(m1).with_label(e).with_em(e && rng.gen_bool(0.9));
        r.v = labeled;
        r
    };
    let z_e = (0..n_e).map(|i| make(i, true)).collect();
    let z_u = (n_e..n_e + n_u).map(|i| make(i, false)).collect();
    (z_e, z_u)
}
