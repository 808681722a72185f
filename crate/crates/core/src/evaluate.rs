//! Test-time metrics and repeated calibration/test split studies.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::method::{calibrate, Control, Method};
use crate::records::{Dataset, ScoredRecord};
use crate::scalar::Scalar;
use crate::selector::{Bounded, Selector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Accept,
    Idk,
}

pub fn apply_selector<T: Scalar>(sel: &Selector<T>, r: &ScoredRecord<T>) -> Result<Decision> {
    Ok(if sel.accepts(r)? { Decision::Accept } else { Decision::Idk })
}

/// Empirical FDR-E and selection efficiency on labeled test data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EvalReport<T> {
    pub n_test: usize,
    pub n_selected: usize,
    pub n_false_selected: usize,
    /// `None` when nothing was selected; never reported as 0.
    pub fdr_e: Option<T>,
    pub efficiency: T,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selector: Option<Selector<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_hat: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounded: Option<Bounded>,
}

pub fn evaluate<T: Scalar>(sel: &Selector<T>, test: &Dataset<T>) -> Result<EvalReport<T>> {
    let mut n_selected = 0;
    let mut n_false = 0;
    for r in &test.records {
        let e = r.require_label()?;
        if sel.accepts(r)? {
            n_selected += 1;
            n_false += usize::from(!e);
        }
    }
    let n_test = test.len();
    let ratio = |a: usize, b: usize| T::from_count(a as u64) / T::from_count(b as u64);
    Ok(EvalReport {
        n_test,
        n_selected,
        n_false_selected: n_false,
        fdr_e: (n_selected > 0).then(|| ratio(n_false, n_selected)),
        efficiency: if n_test == 0 { T::zero() } else { ratio(n_selected, n_test) },
        method: None,
        selector: Some(sel.clone()),
        u_hat: None,
        bounded: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitProtocol {
    pub n_splits: usize,
    /// Share of the labeled records used for calibration; the rest is test data.
    pub cal_fraction: f64,
    /// Share of the calibration labels kept visible.
    pub labeled_fraction: f64,
}

impl Default for SplitProtocol {
    fn default() -> Self {
        Self {
            n_splits: 100,
            cal_fraction: 0.5,
            labeled_fraction: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SplitReport<T> {
    pub split: usize,
    pub report: EvalReport<T>,
}

/// Whisker statistics at the `δ` and `1 − δ` quantiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Whiskers {
    pub low: f64,
    pub median: f64,
    pub high: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub n_splits: usize,
    pub quantile: f64,
    pub fdr_e: Option<Whiskers>,
    pub efficiency: Option<Whiskers>,
    pub n_undefined_fdr_e: usize,
    pub n_success: usize,
    /// Splits whose empirical test FDR-E exceeds the target.
    pub n_above_eps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SplitStudy<T> {
    pub protocol: SplitProtocol,
    pub seed: u64,
    pub reports: Vec<SplitReport<T>>,
    pub summary: SplitSummary,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn whiskers(mut xs: Vec<f64>, p: f64) -> Option<Whiskers> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite metric"));
    Some(Whiskers {
        low: quantile(&xs, p),
        median: quantile(&xs, 0.5),
        high: quantile(&xs, 1.0 - p),
        mean: xs.iter().sum::<f64>() / xs.len() as f64,
    })
}

/// One calibration/test split: labeled records are shuffled and cut, every
/// unlabeled record joins the calibration side.
pub fn split_once<T: Scalar>(ds: &Dataset<T>, protocol: &SplitProtocol, seed: u64, split: usize) -> (Dataset<T>, Dataset<T>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(split as u64);
    let mut labeled: Vec<usize> = (0..ds.len()).filter(|&i| ds.records[i].label().is_some()).collect();
    labeled.shuffle(&mut rng);
    let cut = (protocol.cal_fraction * labeled.len() as f64).floor() as usize;
    let mut cal_idx: Vec<usize> = labeled[..cut].to_vec();
    cal_idx.extend((0..ds.len()).filter(|&i| ds.records[i].label().is_none()));
    cal_idx.sort_unstable();
    let mut test_idx = labeled[cut..].to_vec();
    test_idx.sort_unstable();
    let pick = |idx: &[usize], tag: &str| Dataset {
        records: idx.iter().map(|&i| ds.records[i].clone()).collect(),
        provenance: format!("{} [{tag} split {split}]", ds.provenance),
    };
    let cal = pick(&cal_idx, "cal").split_labeled_fraction(protocol.labeled_fraction, seed ^ (split as u64).rotate_left(32));
    (cal, pick(&test_idx, "test"))
}

/// Calibrates and evaluates on `n_splits` independent random splits.
pub fn repeated_splits<T: Scalar>(
    ds: &Dataset<T>,
    method: &Method<T>,
    control: &Control<T>,
    protocol: &SplitProtocol,
    seed: u64,
) -> Result<SplitStudy<T>> {
    let reports = (0..protocol.n_splits.max(1))
        .into_par_iter()
        .map(|split| {
            let (cal, test) = split_once(ds, protocol, seed, split);
            let result = calibrate(method, &cal, control)?;
            let mut report = evaluate(&result.selector, &test)?;
            report.method = Some(result.branch.clone());
            report.u_hat = Some(result.u_hat);
            report.bounded = Some(result.bounded);
            Ok(SplitReport { split, report })
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&reports, control.eps.as_f64(), control.delta.as_f64());
    Ok(SplitStudy {
        protocol: *protocol,
        seed,
        reports,
        summary,
    })
}

pub fn summarize<T: Scalar>(reports: &[SplitReport<T>], eps: f64, quantile: f64) -> SplitSummary {
    let fdr: Vec<f64> = reports.iter().filter_map(|r| r.report.fdr_e.map(Scalar::as_f64)).collect();
    let eff: Vec<f64> = reports.iter().map(|r| r.report.efficiency.as_f64()).collect();
    SplitSummary {
        n_splits: reports.len(),
        quantile,
        n_undefined_fdr_e: reports.len() - fdr.len(),
        n_above_eps: fdr.iter().filter(|&&f| f > eps).count(),
        n_success: reports
            .iter()
            .filter(|r| r.report.bounded == Some(Bounded::Success))
            .count(),
        fdr_e: whiskers(fdr, quantile),
        efficiency: whiskers(eff, quantile),
    }
}

/// `split,method,fdr_e,efficiency`; an undefined FDR-E is an empty cell.
pub fn write_splits_csv<T: Scalar>(reports: &[SplitReport<T>], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "split,method,fdr_e,efficiency")?;
    for r in reports {
        let fdr = r.report.fdr_e.map(|f| f.to_string()).unwrap_or_default();
        let method = r.report.method.as_deref().unwrap_or("");
        writeln!(out, "{},{},{},{}", r.split, method, fdr, r.report.efficiency)?;
    }
    Ok(())
}
