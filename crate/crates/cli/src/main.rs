mod artifact;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use artifact::{digest, write_atomic, write_json, Manifest};
use sgen_core::baselines::PslConfig;
use sgen_core::evaluate::write_splits_csv;
use sgen_core::simulator::{mc_verify, sample_dataset, AuditConfig, Claim, WorldSpec};
use sgen_core::{
    apply_selector, calibrate, evaluate, repeated_splits, CertifiedResult64, Control64, Dataset64, Method, MethodKind,
    SchemaMode, ScoreKey, Selector64, SplitProtocol,
};

const EXIT_INTERNAL: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_BOUND_FAIL: u8 = 3;
const EXIT_AUDIT_FAIL: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "sgen", version, about = "Certified abstention thresholds for generated answers")]
struct Cli {
    /// Directory for artifacts and manifests.
    #[arg(long, global = true, env = "SGEN_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Learn a selector with a certified FDR-E bound.
    Calibrate(CalibrateArgs),
    /// Accept or abstain on each record.
    Apply(ApplyArgs),
    /// Measure FDR-E and efficiency of a selector on labeled test data.
    Evaluate(EvaluateArgs),
    /// Draw a synthetic dataset.
    Simulate(SimulateArgs),
    /// Monte-Carlo audit of a guarantee on a synthetic world.
    VerifyPac(VerifyArgs),
    /// Repeated calibration/test splits with per-split metrics.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
struct ControlArgs {
    #[arg(long, default_value = "semi-ms")]
    method: MethodKind,
    /// Score for single-threshold methods.
    #[arg(long, default_value = "f_m1")]
    score_key: ScoreKey,
    #[arg(long, default_value_t = 0.25)]
    eps: f64,
    #[arg(long, default_value_t = 0.02)]
    delta: f64,
    #[arg(long, default_value_t = 5)]
    q: usize,
    #[arg(long, default_value_t = 1e-5)]
    delta_w: f64,
    /// Pseudo-label threshold for `psl`.
    #[arg(long, default_value_t = 0.9)]
    tau_pl: f64,
    /// Drop unconfident unlabeled records before pseudo-labeling (`psl`).
    #[arg(long)]
    psl_filter: bool,
}

impl ControlArgs {
    fn method(&self) -> Method<f64> {
        Method {
            kind: self.method,
            score_key: self.score_key,
            psl: PslConfig {
                tau_pl: self.tau_pl,
                filter: self.psl_filter,
            },
        }
    }

    fn control(&self) -> Control64 {
        Control64 {
            eps: self.eps,
            delta: self.delta,
            delta_w: self.delta_w,
            q: self.q,
        }
    }

    /// Fails fast when the data lack a score the method needs.
    fn check_scores(&self, ds: &Dataset64) -> Result<()> {
        let mut keys = vec![self.score_key];
        if self.method.needs_f_m2() {
            keys.push(ScoreKey::FM2);
        }
        for r in &ds.records {
            for &k in &keys {
                r.require_score(k)
                    .with_context(|| format!("method {} needs {k} on every record", self.method))?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Args, Serialize)]
struct CalibrateArgs {
    /// Calibration JSONL.
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    control: ControlArgs,
    /// Keep only this share of the visible labels.
    #[arg(long, default_value_t = 1.0)]
    labeled_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "result.json")]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct ApplyArgs {
    /// A calibration result or a bare selector.
    #[arg(long)]
    selector: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "decisions.jsonl")]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct EvaluateArgs {
    #[arg(long)]
    selector: PathBuf,
    /// Labeled test JSONL.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "eval.json")]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct SimulateArgs {
    /// World description JSON; the identity-calibrated world if omitted.
    #[arg(long)]
    world: Option<PathBuf>,
    #[arg(long)]
    n: usize,
    /// Overrides the world's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the world's share of visible labels.
    #[arg(long)]
    p_v: Option<f64>,
    #[arg(long, default_value = "data.jsonl")]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct VerifyArgs {
    #[arg(long)]
    claim: Claim,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long)]
    world: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    n_e: usize,
    #[arg(long, default_value_t = 2000)]
    n_u: usize,
    #[arg(long, default_value_t = 0.25)]
    eps: f64,
    #[arg(long, default_value_t = 0.02)]
    delta: f64,
    #[arg(long, default_value_t = 1e-5)]
    delta_w: f64,
    #[arg(long, default_value_t = 5)]
    q: usize,
    /// Learner for `theorem1`.
    #[arg(long)]
    method: Option<MethodKind>,
    /// Success probability for `theorem2`.
    #[arg(long, default_value_t = 0.3)]
    theta: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "audit.json")]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct ReportArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    control: ControlArgs,
    #[arg(long, default_value_t = 100)]
    splits: usize,
    #[arg(long, default_value_t = 0.5)]
    cal_fraction: f64,
    #[arg(long, default_value_t = 1.0)]
    labeled_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "splits.json")]
    out: PathBuf,
    #[arg(long, default_value = "splits.csv")]
    csv: PathBuf,
}

struct Run<'a> {
    out_dir: &'a Path,
    command: &'static str,
}

impl Run<'_> {
    fn path(&self, p: &Path) -> PathBuf {
        self.out_dir.join(p)
    }

    fn manifest<C: Serialize>(
        &self,
        config: &C,
        seed: Option<u64>,
        resolved: Option<serde_json::Value>,
        inputs: &[&Path],
        outputs: Vec<PathBuf>,
    ) -> Result<()> {
        let m = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            argv: std::env::args().collect(),
            seed,
            config,
            resolved,
            inputs: inputs.iter().map(|p| digest(p)).collect::<Result<_>>()?,
            outputs,
        };
        write_json(&self.path(Path::new(&format!("manifest-{}.json", self.command))), &m)
    }
}

fn load(path: &Path, mode: SchemaMode) -> Result<Dataset64> {
    Dataset64::load_jsonl(path, mode).with_context(|| format!("loading {}", path.display()))
}

/// The error chain, minus causes already quoted by the message above them.
fn render(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for c in err.chain() {
        let msg = c.to_string();
        if !out.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

fn load_world(path: Option<&Path>, seed: Option<u64>) -> Result<WorldSpec> {
    let mut w = match path {
        Some(p) => serde_json::from_slice(&fs::read(p).with_context(|| format!("reading {}", p.display()))?)
            .with_context(|| format!("parsing world {}", p.display()))
            .map_err(Invalid)?,
        None => WorldSpec::identity(),
    };
    if let Some(s) = seed {
        w.seed = s;
    }
    w.validate()?;
    Ok(w)
}

/// Accepts either a calibration result or a bare selector.
fn load_selector(path: &Path) -> Result<Selector64> {
    let text = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_slice(&text).map_err(|e| Invalid(e.into()))?;
    let sel = match value.get("selector") {
        Some(s) => serde_json::from_value(s.clone()),
        None => serde_json::from_value(value),
    };
    sel.with_context(|| format!("no valid selector in {}", path.display())).map_err(|e| Invalid(e).into())
}

/// Marks an error as caused by bad input rather than a bug.
#[derive(Debug)]
struct Invalid(anyhow::Error);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for Invalid {}

enum Outcome {
    Done,
    BoundFail,
    AuditFail,
}

fn run_calibrate(run: &Run, a: &CalibrateArgs) -> Result<Outcome> {
    if !(0.0..=1.0).contains(&a.labeled_fraction) {
        bail!(Invalid(anyhow::anyhow!("labeled fraction must lie in [0, 1]")));
    }
    let ds = load(&a.data, SchemaMode::Calibration)?.split_labeled_fraction(a.labeled_fraction, a.seed);
    a.control.check_scores(&ds)?;
    let control = a.control.control();
    let budget = match a.control.method {
        MethodKind::SemiMs | MethodKind::SemiSingle | MethodKind::SemiDouble => {
            Some(serde_json::to_value(control.risk_budget()?)?)
        }
        _ => None,
    };
    let result = calibrate(&a.control.method(), &ds, &control)?;
    let out = run.path(&a.out);
    write_json(&out, &result)?;
    let resolved = serde_json::json!({ "budget": budget, "n_labeled": ds.n_labeled(), "n_records": ds.len() });
    run.manifest(a, Some(a.seed), Some(resolved), &[&a.data], vec![out])?;
    eprintln!(
        "{}: {} with Û = {} ({})",
        result.branch,
        result.selector,
        result.u_hat,
        if result.is_success() { "success" } else { "fail" }
    );
    Ok(if result.is_success() { Outcome::Done } else { Outcome::BoundFail })
}

fn run_apply(run: &Run, a: &ApplyArgs) -> Result<Outcome> {
    let sel = load_selector(&a.selector)?;
    let ds = load(&a.data, SchemaMode::Calibration)?;
    let mut lines = String::new();
    for r in &ds.records {
        let d = apply_selector(&sel, r)?;
        lines.push_str(&serde_json::to_string(&serde_json::json!({ "id": r.id, "decision": d }))?);
        lines.push('\n');
    }
    let out = run.path(&a.out);
    write_atomic(&out, lines.as_bytes())?;
    run.manifest(a, None, None, &[&a.selector, &a.data], vec![out])?;
    Ok(Outcome::Done)
}

fn run_evaluate(run: &Run, a: &EvaluateArgs) -> Result<Outcome> {
    let text = fs::read(&a.selector).with_context(|| format!("reading {}", a.selector.display()))?;
    let sel = load_selector(&a.selector)?;
    let ds = load(&a.data, SchemaMode::Test)?;
    let mut report = evaluate(&sel, &ds)?;
    if let Ok(res) = serde_json::from_slice::<CertifiedResult64>(&text) {
        report.method = Some(res.branch);
        report.u_hat = Some(res.u_hat);
        report.bounded = Some(res.bounded);
    }
    let out = run.path(&a.out);
    write_json(&out, &report)?;
    run.manifest(a, None, None, &[&a.selector, &a.data], vec![out])?;
    Ok(Outcome::Done)
}

fn run_simulate(run: &Run, a: &SimulateArgs) -> Result<Outcome> {
    let mut w = load_world(a.world.as_deref(), a.seed)?;
    if let Some(p) = a.p_v {
        w.p_v = p;
        w.validate()?;
    }
    let ds = sample_dataset(&w, a.n)?;
    let out = run.path(&a.out);
    write_atomic(&out, ds.to_jsonl_string().as_bytes())?;
    let inputs: Vec<&Path> = a.world.iter().map(|p| p.as_path()).collect();
    run.manifest(a, Some(w.seed), Some(serde_json::to_value(w)?), &inputs, vec![out])?;
    Ok(Outcome::Done)
}

fn run_verify(run: &Run, a: &VerifyArgs) -> Result<Outcome> {
    if a.trials == 0 {
        bail!(Invalid(anyhow::anyhow!("trials must be at least 1")));
    }
    let w = load_world(a.world.as_deref(), a.seed)?;
    let cfg = AuditConfig {
        n_e: a.n_e,
        n_u: a.n_u,
        eps: a.eps,
        delta: a.delta,
        delta_w: a.delta_w,
        q: a.q,
        method: a.method,
        theta: a.theta,
    };
    let rep = mc_verify(a.claim, &w, a.trials, &cfg)?;
    let out = run.path(&a.out);
    write_json(&out, &rep)?;
    let inputs: Vec<&Path> = a.world.iter().map(|p| p.as_path()).collect();
    run.manifest(a, Some(w.seed), Some(serde_json::to_value(w)?), &inputs, vec![out])?;
    eprintln!(
        "{}: {}/{} violations, limit {:.4}: {}",
        rep.claim,
        rep.violations,
        rep.trials,
        rep.threshold,
        if rep.pass { "pass" } else { "FAIL" }
    );
    Ok(if rep.pass { Outcome::Done } else { Outcome::AuditFail })
}

fn run_report(run: &Run, a: &ReportArgs) -> Result<Outcome> {
    for (name, f) in [("cal fraction", a.cal_fraction), ("labeled fraction", a.labeled_fraction)] {
        if !(0.0..=1.0).contains(&f) {
            bail!(Invalid(anyhow::anyhow!("{name} must lie in [0, 1]")));
        }
    }
    if a.splits == 0 {
        bail!(Invalid(anyhow::anyhow!("splits must be at least 1")));
    }
    let ds = load(&a.data, SchemaMode::Calibration)?;
    a.control.check_scores(&ds)?;
    let protocol = SplitProtocol {
        n_splits: a.splits,
        cal_fraction: a.cal_fraction,
        labeled_fraction: a.labeled_fraction,
    };
    let study = repeated_splits(&ds, &a.control.method(), &a.control.control(), &protocol, a.seed)?;
    let (out, csv) = (run.path(&a.out), run.path(&a.csv));
    write_json(&out, &study)?;
    let mut buf = Vec::new();
    write_splits_csv(&study.reports, &mut buf)?;
    write_atomic(&csv, &buf)?;
    run.manifest(a, Some(a.seed), None, &[&a.data], vec![out, csv])?;
    Ok(Outcome::Done)
}

fn is_invalid(err: &anyhow::Error) -> bool {
    use sgen_core::Error as E;
    err.chain().any(|c| {
        if c.is::<Invalid>() {
            return true;
        }
        if let Some(io) = c.downcast_ref::<std::io::Error>() {
            return io.kind() == std::io::ErrorKind::NotFound;
        }
        matches!(
            c.downcast_ref::<E>(),
            Some(
                E::Parse { .. }
                    | E::Validation { .. }
                    | E::InvalidRecord(_)
                    | E::MissingScore { .. }
                    | E::MissingLabel { .. }
                    | E::MissingExactMatch { .. }
                    | E::InvalidSelector(_)
                    | E::InvalidBudget(_)
                    | E::InvalidWorld(_)
                    | E::UndefinedRisk(_)
                    | E::HypothesisUnmet(_)
            )
        ) || matches!(c.downcast_ref::<E>(), Some(E::Io(io)) if io.kind() == std::io::ErrorKind::NotFound)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let dir = cli.out_dir.as_path();
    let result = match &cli.command {
        Command::Calibrate(a) => run_calibrate(&Run { out_dir: dir, command: "calibrate" }, a),
        Command::Apply(a) => run_apply(&Run { out_dir: dir, command: "apply" }, a),
        Command::Evaluate(a) => run_evaluate(&Run { out_dir: dir, command: "evaluate" }, a),
        Command::Simulate(a) => run_simulate(&Run { out_dir: dir, command: "simulate" }, a),
        Command::VerifyPac(a) => run_verify(&Run { out_dir: dir, command: "verify-pac" }, a),
        Command::Report(a) => run_report(&Run { out_dir: dir, command: "report" }, a),
    };
    match result {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::BoundFail) => ExitCode::from(EXIT_BOUND_FAIL),
        Ok(Outcome::AuditFail) => ExitCode::from(EXIT_AUDIT_FAIL),
        Err(e) => {
            eprintln!("error: {}", render(&e));
            ExitCode::from(if is_invalid(&e) { EXIT_INVALID } else { EXIT_INTERNAL })
        }
    }
}
