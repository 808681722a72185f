//! Scored calibration/test examples, the dataset container, and JSONL I/O.
//!
//! One JSON object per line:
//!
//! ```text
//! {"id":"a","f_m1":0.9,"f_m2":0.7,"f_e":0.8,"e":1,"em":0,"v":1}
//! ```
//!
//! `f_m2`, `e` and `em` are optional. Binary fields are written as `0`/`1`.
//! Unknown fields are carried through untouched.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::fdr_bounds::BoundBudget;
use crate::scalar::Scalar;

/// Which selection score a threshold applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScoreKey {
    /// Sequence likelihood of the generated answer.
    #[serde(rename = "f_m1")]
    FM1,
    /// Self-consistency score.
    #[serde(rename = "f_m2")]
    FM2,
}

impl ScoreKey {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreKey::FM1 => "f_m1",
            ScoreKey::FM2 => "f_m2",
        }
    }
}

impl fmt::Display for ScoreKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScoreKey {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "f_m1" | "m1" => Ok(ScoreKey::FM1),
            "f_m2" | "m2" => Ok(ScoreKey::FM2),
            other => Err(format!("unknown score key `{other}` (expected f_m1 or f_m2)")),
        }
    }
}

/// One question/answer example with its model scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ScoredRecord<T> {
    pub id: String,
    pub f_m1: T,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_m2: Option<T>,
    pub f_e: T,
    /// Entailment label. Only meaningful when `v` is set; a hidden label may
    /// still be carried (e.g. by the simulator) but calibration never reads it.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "bit_opt")]
    pub e: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "bit_opt")]
    pub em: Option<bool>,
    #[serde(with = "bit")]
    pub v: bool,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl<T: Scalar> ScoredRecord<T> {
    pub fn new(id: impl Into<String>, f_m1: T, f_e: T) -> Self {
        Self {
            id: id.into(),
            f_m1,
            f_m2: None,
            f_e,
            e: None,
            em: None,
            v: false,
            extra: Map::new(),
        }
    }

    pub fn with_label(mut self, e: bool) -> Self {
        self.e = Some(e);
        self.v = true;
        self
    }

    pub fn with_f_m2(mut self, f_m2: T) -> Self {
        self.f_m2 = Some(f_m2);
        self
    }

    pub fn with_em(mut self, em: bool) -> Self {
        self.em = Some(em);
        self
    }

    pub fn score(&self, key: ScoreKey) -> Option<T> {
        match key {
            ScoreKey::FM1 => Some(self.f_m1),
            ScoreKey::FM2 => self.f_m2,
        }
    }

    pub fn require_score(&self, key: ScoreKey) -> Result<T> {
        self.score(key).ok_or_else(|| Error::MissingScore {
            id: self.id.clone(),
            key,
        })
    }

    /// The visible entailment label, if any.
    pub fn label(&self) -> Option<bool> {
        if self.v {
            self.e
        } else {
            None
        }
    }

    pub fn require_label(&self) -> Result<bool> {
        self.label().ok_or_else(|| Error::MissingLabel {
            id: self.id.clone(),
        })
    }

    pub fn require_em(&self) -> Result<bool> {
        self.em.ok_or_else(|| Error::MissingExactMatch {
            id: self.id.clone(),
        })
    }

    /// Checks the per-record invariants.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let unit = |name: &str, x: T| {
            if x.is_finite() && x >= T::zero() && x <= T::one() {
                Ok(())
            } else {
                Err(format!("{name} out of range"))
            }
        };
        unit("f_m1", self.f_m1)?;
        if let Some(m2) = self.f_m2 {
            unit("f_m2", m2)?;
        }
        unit("f_e", self.f_e)?;
        if self.v && self.e.is_none() {
            return Err("v=1 but e is missing".to_string());
        }
        Ok(())
    }
}

/// How strictly [`Dataset::load_jsonl`] treats labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemaMode {
    /// Labeled and unlabeled records may be mixed.
    Calibration,
    /// Every record must carry a visible label.
    Test,
}

/// An ordered, validated collection of records.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub records: Vec<ScoredRecord<T>>,
    pub provenance: String,
}

impl<T: Scalar> Dataset<T> {
    /// Validates every record and id uniqueness.
    pub fn new(records: Vec<ScoredRecord<T>>, provenance: impl Into<String>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            r.validate()
                .map_err(|message| Error::Validation { line: i + 1, message })?;
            if !seen.insert(r.id.as_str()) {
                return Err(Error::Validation {
                    line: i + 1,
                    message: format!("duplicate id `{}`", r.id),
                });
            }
        }
        Ok(Self {
            records,
            provenance: provenance.into(),
        })
    }

    pub fn empty() -> Self {
        Self {
            records: Vec::new(),
            provenance: String::new(),
        }
    }

    pub fn load_jsonl(path: impl AsRef<Path>, mode: SchemaMode) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path)?;
        Self::from_reader(file, mode, path.display().to_string())
    }

    /// Parses JSONL; blank lines are skipped but still counted for line numbers.
    pub fn from_reader(reader: impl Read, mode: SchemaMode, provenance: impl Into<String>) -> Result<Self> {
        let mut records = Vec::new();
        let mut seen = HashSet::new();
        for (idx, line) in BufReader::new(reader).lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let r: ScoredRecord<T> =
                serde_json::from_str(&line).map_err(|source| Error::Parse { line: line_no, source })?;
            r.validate()
                .map_err(|message| Error::Validation { line: line_no, message })?;
            if mode == SchemaMode::Test && r.label().is_none() {
                return Err(Error::Validation {
                    line: line_no,
                    message: "test records must be labeled (v=1 with e)".to_string(),
                });
            }
            if !seen.insert(r.id.clone()) {
                return Err(Error::Validation {
                    line: line_no,
                    message: format!("duplicate id `{}`", r.id),
                });
            }
            records.push(r);
        }
        Ok(Self {
            records,
            provenance: provenance.into(),
        })
    }

    pub fn write_jsonl(&self, writer: impl Write) -> Result<()> {
        let mut w = BufWriter::new(writer);
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `(Z_E, Z_U)`: visible-label records and the rest, in dataset order.
    pub fn partition(&self) -> (Vec<&ScoredRecord<T>>, Vec<&ScoredRecord<T>>) {
        self.records.iter().partition(|r| r.v)
    }

    pub fn n_labeled(&self) -> usize {
        self.records.iter().filter(|r| r.v).count()
    }

    /// Hides the label of a random `1 - fraction` share of the labeled records.
    ///
    /// Exactly `⌊fraction·|Z_E|⌋` records stay labeled. Demoted records keep
    /// their `e` value, which is ignored while `v = 0`.
    pub fn split_labeled_fraction(&self, fraction: f64, seed: u64) -> Self {
        assert!((0.0..=1.0).contains(&fraction), "fraction must lie in [0, 1]");
        let mut labeled: Vec<usize> = (0..self.records.len()).filter(|&i| self.records[i].v).collect();
        let keep = (fraction * labeled.len() as f64).floor() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        labeled.shuffle(&mut rng);
        let mut out = self.clone();
        for &i in &labeled[keep..] {
            out.records[i].v = false;
        }
        out
    }

    /// Marks every record that carries an `e` value as labeled.
    pub fn reveal_all(&self) -> Self {
        let mut out = self.clone();
        for r in &mut out.records {
            if r.e.is_some() {
                r.v = true;
            }
        }
        out
    }
}

/// Risk target and confidence ledger for the semi-supervised learners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RiskBudget<T> {
    pub eps_s: T,
    pub delta_s: T,
    pub delta_e: T,
    pub delta_w: T,
    pub q: usize,
}

impl<T: Scalar> RiskBudget<T> {
    pub fn new(eps_s: T, delta_s: T, delta_e: T, delta_w: T, q: usize) -> Result<Self> {
        let open = |x: T| x > T::zero() && x < T::one();
        if !(eps_s > T::zero() && eps_s <= T::one()) {
            return Err(Error::InvalidBudget(format!("eps_s = {eps_s} must lie in (0, 1]")));
        }
        for (name, d) in [("delta_s", delta_s), ("delta_e", delta_e), ("delta_w", delta_w)] {
            if !open(d) {
                return Err(Error::InvalidBudget(format!("{name} = {d} must lie in (0, 1)")));
            }
        }
        if delta_s + delta_e + delta_w >= T::one() {
            return Err(Error::InvalidBudget("delta_s + delta_e + delta_w must be < 1".into()));
        }
        if q == 0 {
            return Err(Error::InvalidBudget("q must be at least 1".into()));
        }
        Ok(Self {
            eps_s,
            delta_s,
            delta_e,
            delta_w,
            q,
        })
    }

    /// Maps user-level `(eps, delta)` onto the ledger:
    /// `eps_s = eps`, `delta_s = delta_e = (delta - delta_w) / 2`.
    pub fn from_control(eps: T, delta: T, delta_w: T, q: usize) -> Result<Self> {
        if !(delta > delta_w) {
            return Err(Error::InvalidBudget(format!("delta = {delta} must exceed delta_w = {delta_w}")));
        }
        let half = (delta - delta_w) / T::lit(2.0);
        Self::new(eps, half, half, delta_w, q)
    }

    pub fn total_delta(&self) -> T {
        self.delta_s + self.delta_e + self.delta_w
    }

    /// Each confidence term divided by `divisor`.
    pub fn per_evaluation(&self, divisor: usize) -> BoundBudget<T> {
        let d = T::from_count(divisor.max(1) as u64);
        BoundBudget {
            delta_s: self.delta_s / d,
            delta_e: self.delta_e / d,
            delta_w: self.delta_w / d,
            q: self.q,
        }
    }

    /// The same budget with every confidence term divided by `parts`.
    pub fn split(&self, parts: usize) -> Self {
        let d = T::from_count(parts.max(1) as u64);
        Self {
            eps_s: self.eps_s,
            delta_s: self.delta_s / d,
            delta_e: self.delta_e / d,
            delta_w: self.delta_w / d,
            q: self.q,
        }
    }
}

mod bit {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*b))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match Flag::deserialize(d)? {
            Flag::Int(0) => Ok(false),
            Flag::Int(1) => Ok(true),
            Flag::Int(other) => Err(de::Error::custom(format!("binary field must be 0 or 1, got {other}"))),
            Flag::Bool(b) => Ok(b),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Flag {
        Int(i64),
        Bool(bool),
    }
}

mod bit_opt {
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &Option<bool>, s: S) -> Result<S::Ok, S::Error> {
        match b {
            Some(b) => super::bit::serialize(b, s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<bool>, D::Error> {
        super::bit::deserialize(d).map(Some)
    }
}
